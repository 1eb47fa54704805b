use std::collections::HashMap;

use super::Interaction;
use crate::error::{Error, Result};

/// Largest subset in which every user and every item has at least `k`
/// interactions, found by pruning to a fixpoint. Input order is preserved.
pub fn k_core_filter(interactions: Vec<Interaction>, k: usize) -> Result<Vec<Interaction>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let keep = k_core_mask(
        interactions.iter().map(|i| (i.user_id.as_str(), i.item_id.as_str())),
        k,
    );
    let kept: Vec<Interaction> = interactions
        .into_iter()
        .zip(keep)
        .filter_map(|(i, k)| k.then_some(i))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset(format!("no interactions survive {k}-core filtering")));
    }
    Ok(kept)
}

/// Membership mask of the k-core over `(user, item)` edges.
pub fn k_core_mask<'a>(edges: impl Iterator<Item = (&'a str, &'a str)>, k: usize) -> Vec<bool> {
    let mut users: HashMap<&str, usize> = HashMap::new();
    let mut items: HashMap<&str, usize> = HashMap::new();
    let pairs: Vec<(usize, usize)> = edges
        .map(|(u, i)| {
            let nu = users.len();
            let ni = items.len();
            (*users.entry(u).or_insert(nu), *items.entry(i).or_insert(ni))
        })
        .collect();
    let mut udeg = vec![0usize; users.len()];
    let mut ideg = vec![0usize; items.len()];
    for &(u, i) in &pairs {
        udeg[u] += 1;
        ideg[i] += 1;
    }
    let mut alive = vec![true; pairs.len()];
    loop {
        let mut changed = false;
        for (e, &(u, i)) in pairs.iter().enumerate() {
            if alive[e] && (udeg[u] < k || ideg[i] < k) {
                alive[e] = false;
                udeg[u] -= 1;
                ideg[i] -= 1;
                changed = true;
            }
        }
        if !changed {
            return alive;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(u: &str, i: &str) -> Interaction {
        Interaction {
            user_id: u.into(),
            item_id: i.into(),
            rating: 3.0,
            review: vec![],
            raw_text: String::new(),
            timestamp: None,
        }
    }

    /// Exhaustive oracle: the largest subset whose degrees are all >= k.
    /// The k-core is unique (union of valid subsets is valid), so the
    /// largest valid subset is it.
    fn brute_force(edges: &[(&str, &str)], k: usize) -> Vec<bool> {
        let n = edges.len();
        let mut best: u32 = 0;
        for mask in 0u32..(1 << n) {
            let mut ud: HashMap<&str, usize> = HashMap::new();
            let mut id: HashMap<&str, usize> = HashMap::new();
            for (e, (u, i)) in edges.iter().enumerate() {
                if mask >> e & 1 == 1 {
                    *ud.entry(u).or_default() += 1;
                    *id.entry(i).or_default() += 1;
                }
            }
            if ud.values().chain(id.values()).all(|&d| d >= k) && mask.count_ones() > best.count_ones() {
                best = mask;
            }
        }
        (0..n).map(|e| best >> e & 1 == 1).collect()
    }

    #[test]
    fn matches_exhaustive_oracle() {
        let edges = [
            ("u1", "i1"),
            ("u1", "i2"),
            ("u2", "i1"),
            ("u2", "i2"),
            ("u3", "i2"),
            ("u3", "i3"),
            ("u4", "i3"),
            ("u1", "i3"),
        ];
        for k in 1..=3 {
            let got = k_core_mask(edges.iter().copied(), k);
            assert_eq!(got, brute_force(&edges, k), "k={k}");
        }
        // Only u4 has a single edge; removing it leaves i3 with degree 2.
        assert_eq!(
            k_core_mask(edges.iter().copied(), 2),
            vec![true, true, true, true, true, true, false, true]
        );
        // At k = 3 the cascade empties everything.
        assert!(k_core_mask(edges.iter().copied(), 3).iter().all(|&b| !b));
    }

    #[test]
    fn idempotent_and_degrees_hold() {
        let mut data = Vec::new();
        for u in 0..6 {
            for i in 0..6 {
                if (u + i) % 3 != 0 || u == 0 {
                    data.push(edge(&format!("u{u}"), &format!("i{i}")));
                }
            }
        }
        data.push(edge("lonely", "i0"));
        let once = k_core_filter(data, 3).unwrap();
        let twice = k_core_filter(once.clone(), 3).unwrap();
        assert_eq!(once, twice);
        let mut ud: HashMap<&str, usize> = HashMap::new();
        let mut id: HashMap<&str, usize> = HashMap::new();
        for x in &once {
            *ud.entry(&x.user_id).or_default() += 1;
            *id.entry(&x.item_id).or_default() += 1;
        }
        assert!(ud.values().chain(id.values()).all(|&d| d >= 3));
        assert!(!ud.contains_key("lonely"));
    }

    #[test]
    fn empty_core_is_an_error() {
        let data = vec![edge("u", "a"), edge("u", "b")];
        assert!(matches!(k_core_filter(data, 5), Err(Error::EmptyDataset(_))));
    }
}
