use cfsd::autodiff::{grad_check, Graph, ParamSet, Tensor, Var};
use cfsd::scalar::stable_sigmoid;
use cfsd::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn naive_conv(x: &[f64], len: usize, d_in: usize, k: &[f64], w: usize, d_out: usize, b: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for t in 0..=(len - w) {
        for o in 0..d_out {
            let mut s = b[o];
            for j in 0..w {
                for c in 0..d_in {
                    s += x[(t + j) * d_in + c] * k[(j * d_in + c) * d_out + o];
                }
            }
            out.push(s);
        }
    }
    out
}

fn naive_pool(x: &[f64], len: usize, d: usize, win: usize, stride: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + win <= len {
        for c in 0..d {
            let mut m = f64::NEG_INFINITY;
            for r in start..start + win {
                m = m.max(x[r * d + c]);
            }
            out.push(m);
        }
        start += stride;
    }
    out
}

#[test]
fn sigmoid_values_and_symmetry() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::vector(vec![0.0, 3.0, -3.0, 800.0, -800.0]));
    let y = g.sigmoid(x);
    let v = g.value(y).data().to_vec();
    assert_eq!(v[0], 0.5);
    assert!((v[1] + v[2] - 1.0).abs() < 1e-15);
    assert!(v.iter().all(|s| s.is_finite()));
    assert!(v[3] <= 1.0 && v[4] >= 0.0);
    for x in [-20.0, -1.0, 0.3, 7.5, 20.0] {
        let s = stable_sigmoid(x);
        assert!(s > 0.0 && s < 1.0);
    }
}

#[test]
fn sigmoid_gradient_matches_finite_difference() {
    let x0 = 0.7;
    let mut g = Graph::<f64>::new();
    let p = Tensor::scalar(x0);
    let x = g.leaf(&p);
    let y = g.sigmoid(x);
    let grads = g.backward(y);
    let analytic = grads.get(x).unwrap().item();
    let h = 1e-6;
    let numeric = (stable_sigmoid(x0 + h) - stable_sigmoid(x0 - h)) / (2.0 * h);
    assert!((analytic - numeric).abs() / analytic.abs() < 1e-8);
}

#[test]
fn conv1d_shapes_and_zero_input() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(&[5, 3]));
    let k = g.constant(Tensor::full(&[5, 3, 2], 0.4));
    let b = g.constant(Tensor::zeros(&[2]));
    let y = g.conv1d(x, k, b).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 2]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));

    let short = g.constant(Tensor::zeros(&[4, 3]));
    assert!(matches!(g.conv1d(short, k, b), Err(Error::InvalidShape(_))));
    let wrong = g.constant(Tensor::zeros(&[6, 2]));
    assert!(matches!(g.conv1d(wrong, k, b), Err(Error::InvalidShape(_))));
}

#[test]
fn conv1d_window_dot_products() {
    let xs = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let ks = vec![0.5, -1.0, 2.0, 0.0, 1.5];
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::matrix(6, 1, xs.clone()).unwrap());
    let k = g.constant(Tensor::new(vec![5, 1, 1], ks.clone()).unwrap());
    let b = g.constant(Tensor::vector(vec![0.25]));
    let y = g.conv1d(x, k, b).unwrap();
    let expected = naive_conv(&xs, 6, 1, &ks, 5, 1, &[0.25]);
    // 0.5 - 2 + 6 + 0 + 7.5 + 0.25 and 1 - 3 + 8 + 0 + 9 + 0.25
    assert_eq!(expected, vec![12.25, 15.25]);
    assert_eq!(g.value(y).data(), expected.as_slice());
}

#[test]
fn conv1d_matches_loop_oracle_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let w = rng.random_range(1..6);
        let len = w + rng.random_range(0..8);
        let d_in = rng.random_range(1..5);
        let d_out = rng.random_range(1..5);
        let x = rand_tensor(&mut rng, &[len, d_in]);
        let k = rand_tensor(&mut rng, &[w, d_in, d_out]);
        let b = rand_tensor(&mut rng, &[d_out]);
        let expected = naive_conv(x.data(), len, d_in, k.data(), w, d_out, b.data());
        let mut g = Graph::new();
        let (xv, kv, bv) = (g.constant(x), g.constant(k), g.constant(b));
        let y = g.conv1d(xv, kv, bv).unwrap();
        for (a, e) in g.value(y).data().iter().zip(&expected) {
            assert!((a - e).abs() <= 1e-12);
        }
    }
}

#[test]
fn maxpool_basic_and_tie_rule() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::matrix(3, 1, vec![1.0, 3.0, 2.0]).unwrap());
    let y = g.maxpool1d(x, 3, 3).unwrap();
    assert_eq!(g.value(y).data(), &[3.0]);

    let p = Tensor::matrix(3, 1, vec![2.0, 2.0, 2.0]).unwrap();
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&p);
    let y = g.maxpool1d(x, 3, 3).unwrap();
    let s = g.sum(y);
    let grads = g.backward(s);
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 0.0, 0.0]);

    let short = g.constant(Tensor::zeros(&[2, 1]));
    assert!(matches!(g.maxpool1d(short, 3, 3), Err(Error::InvalidShape(_))));
}

#[test]
fn maxpool_matches_loop_oracle_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let (len, d) = if case == 0 { (10, 4) } else { (rng.random_range(1..15), rng.random_range(1..5)) };
        let win = rng.random_range(1..=len.min(4));
        let stride = rng.random_range(1..4);
        let x = rand_tensor(&mut rng, &[len, d]);
        let expected = naive_pool(x.data(), len, d, win, stride);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = g.maxpool1d(xv, win, stride).unwrap();
        assert_eq!(g.value(y).shape(), &[(len - win) / stride + 1, d]);
        assert_eq!(g.value(y).data(), expected.as_slice());
    }
}

#[test]
fn softmax_basics() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
    let y = g.softmax(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, 0.5]);

    let v = vec![0.3, -1.2, 2.5, 0.0];
    let a = g.constant(Tensor::vector(v.clone()));
    let b = g.constant(Tensor::vector(v.iter().map(|x| x + 17.0).collect()));
    let sa = g.softmax(a).unwrap();
    let sb = g.softmax(b).unwrap();
    for (p, q) in g.value(sa).data().iter().zip(g.value(sb).data()) {
        assert!((p - q).abs() < 1e-15);
    }
}

#[test]
fn softmax_gradient_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = ParamSet::new();
    params.insert("v", rand_tensor(&mut rng, &[5]));
    params.insert("c", rand_tensor(&mut rng, &[5]));
    let report = grad_check(&params, 1e-5, |g, p| {
        let s = g.softmax(p[0])?;
        let m = g.mul(s, p[1])?;
        Ok(g.sum(m))
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn grad_check_is_exact_for_linear_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut params = ParamSet::new();
    params.insert("w", rand_tensor(&mut rng, &[3, 2]));
    params.insert("b", rand_tensor(&mut rng, &[2]));
    let x = rand_tensor(&mut rng, &[4, 3]);
    // Central differences are exact on affine maps for any h; a wider step
    // keeps cancellation error well under the bound.
    let report = grad_check(&params, 1e-2, |g, p| {
        let xv = g.constant(x.clone());
        let y = g.linear(xv, p[0], p[1])?;
        Ok(g.sum(y))
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-10, "{report:?}");
}

#[test]
fn grad_check_flags_a_corrupted_rule() {
    let mut params = ParamSet::new();
    params.insert("x", Tensor::vector(vec![0.4, -0.9, 1.3]));
    // d/dx x^3 is 3x^2; claim 2x^2 instead.
    let report = grad_check(&params, 1e-5, |g, p| {
        let y = g.map(p[0], |v| v * v * v, |v| 2.0 * v * v);
        Ok(g.sum(y))
    })
    .unwrap();
    assert!(report.max_rel_error > 1e-2, "{report:?}");
}

#[test]
fn grad_check_reports_non_finite_values() {
    let mut params = ParamSet::new();
    params.insert("x", Tensor::vector(vec![1.0]));
    let err = grad_check(&params, 1e-5, |g, p| {
        let y = g.map(p[0], |v| v / 0.0, |_| 0.0);
        Ok(g.sum(y))
    });
    assert!(matches!(err, Err(Error::NumericFailure(_))));
}

/// Every differentiable op, chained into one scalar, checked at h = 1e-5.
#[test]
fn every_op_passes_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut params = ParamSet::new();
    params.insert("emb", rand_tensor(&mut rng, &[6, 3]));
    params.insert("kernel", rand_tensor(&mut rng, &[2, 3, 4]));
    params.insert("kbias", rand_tensor(&mut rng, &[4]));
    params.insert("w", rand_tensor(&mut rng, &[4, 2]));
    params.insert("b", rand_tensor(&mut rng, &[2]));
    params.insert("att", rand_tensor(&mut rng, &[2, 1]));
    params.insert("att_b", rand_tensor(&mut rng, &[1]));
    params.insert("other", rand_tensor(&mut rng, &[2]));
    let doc = [1usize, 4, 2, 2, 5, 0, 3];
    let f = |g: &mut Graph<'_, f64>, p: &[Var]| {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(99);
        let e = g.gather(p[0], &doc)?;
        let c = g.conv1d(e, p[1], p[2])?;
        let c = g.relu(c);
        let c = g.dropout(c, 0.3, &mut drop_rng)?;
        let m = g.maxpool1d(c, 2, 2)?;
        let h = g.linear(m, p[3], p[4])?;
        let a = g.linear(h, p[5], p[6])?;
        let a = g.reshape(a, vec![3])?;
        let w = g.softmax(a)?;
        let z = g.weighted_sum(w, h)?;
        let q = g.mul(z, p[7])?;
        let s = g.sigmoid(q);
        let r = g.stack_rows(&[z, s, z])?;
        let r = g.scale(r, 0.7);
        let r2 = g.square(r);
        let t = g.sub(r2, r)?;
        let t = g.add(t, r)?;
        let t = g.map(t, |v| v.sin(), |v| v.cos());
        Ok(g.sum(t))
    };
    let report = grad_check(&params, 1e-5, f).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    assert_eq!(report.checked, params.num_values());
}

#[test]
fn dropout_masks_and_rescales() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::full(&[1000], 1.0));
    let y = g.dropout(x, 0.5, &mut rng).unwrap();
    let vals = g.value(y).data();
    assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
    let kept = vals.iter().filter(|&&v| v == 2.0).count();
    assert!((400..600).contains(&kept));
    let same = g.dropout(x, 0.0, &mut rng).unwrap();
    assert_eq!(same, x);
    assert!(g.dropout(x, 1.0, &mut rng).is_err());
}

#[test]
fn graph_evaluation_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = rand_tensor(&mut rng, &[8, 4]);
        let k = rand_tensor(&mut rng, &[5, 4, 3]);
        let b = rand_tensor(&mut rng, &[3]);
        let mut g = Graph::new();
        let (x, kv, bv) = (g.constant(t), g.constant(k), g.constant(b));
        let y = g.conv1d(x, kv, bv).unwrap();
        let s = g.sum(y);
        g.value(s).item().to_bits()
    };
    assert_eq!(run(), run());
}

#[test]
fn gather_rejects_bad_rows() {
    let mut g = Graph::<f64>::new();
    let t = g.constant(Tensor::zeros(&[3, 2]));
    assert!(matches!(g.gather(t, &[3]), Err(Error::InvalidIndex(_))));
}

proptest! {
    #[test]
    fn softmax_sums_to_one(v in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::vector(v));
        let y = g.softmax(x).unwrap();
        let total: f64 = g.value(y).data().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(g.value(y).data().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn sigmoid_is_in_open_unit_interval(x in -30.0f64..30.0) {
        let s = stable_sigmoid(x);
        prop_assert!(s > 0.0 && s < 1.0);
        prop_assert!((s + stable_sigmoid(-x) - 1.0).abs() < 1e-15);
    }
}
