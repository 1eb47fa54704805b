use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::{tokenize, Interaction};
use crate::error::{Error, Result};

/// Parsed records plus the number of lines that were rejected.
#[derive(Clone, Debug, Default)]
pub struct ParseOutcome {
    pub interactions: Vec<Interaction>,
    pub skipped: usize,
}

/// Source-specific JSON field names.
struct Fields {
    user: &'static str,
    item: &'static str,
    rating: &'static str,
    text: &'static str,
}

const AMAZON: Fields = Fields {
    user: "reviewerID",
    item: "asin",
    rating: "overall",
    text: "reviewText",
};

const YELP: Fields = Fields {
    user: "user_id",
    item: "business_id",
    rating: "stars",
    text: "text",
};

/// Amazon review JSON-lines (`reviewerID`, `asin`, `overall`, `reviewText`,
/// optional `unixReviewTime`).
pub fn parse_amazon_jsonl(path: &Path) -> Result<ParseOutcome> {
    parse_jsonl(path, &AMAZON, |obj| obj.get("unixReviewTime").and_then(Value::as_i64))
}

/// Yelp review JSON-lines (`user_id`, `business_id`, `stars`, `text`,
/// optional `date` as `YYYY-MM-DD[ HH:MM:SS]`).
pub fn parse_yelp_reviews(path: &Path) -> Result<ParseOutcome> {
    parse_jsonl(path, &YELP, |obj| obj.get("date").and_then(Value::as_str).and_then(yelp_date))
}

fn parse_jsonl(path: &Path, fields: &Fields, timestamp: impl Fn(&Value) -> Option<i64>) -> Result<ParseOutcome> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = ParseOutcome::default();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, fields, &timestamp) {
            Some(i) => out.interactions.push(i),
            None => out.skipped += 1,
        }
    }
    if out.skipped > 0 {
        log::warn!("{}: skipped {} malformed or incomplete lines", path.display(), out.skipped);
    }
    if out.interactions.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no valid review lines", path.display())));
    }
    Ok(out)
}

fn parse_line(line: &str, fields: &Fields, timestamp: &impl Fn(&Value) -> Option<i64>) -> Option<Interaction> {
    let obj: Value = serde_json::from_str(line).ok()?;
    let user = id_field(&obj, fields.user)?;
    let item = id_field(&obj, fields.item)?;
    let rating = obj.get(fields.rating)?.as_f64()?;
    let text = obj.get(fields.text)?.as_str()?;
    if !(1.0..=5.0).contains(&rating) || user.is_empty() || item.is_empty() {
        return None;
    }
    Some(Interaction {
        user_id: user,
        item_id: item,
        rating,
        review: tokenize(text),
        raw_text: text.to_string(),
        timestamp: timestamp(&obj),
    })
}

fn id_field(obj: &Value, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Days-from-civil conversion; avoids a calendar dependency for one field.
fn yelp_date(s: &str) -> Option<i64> {
    let mut parts = s.split([' ', 'T']);
    let date = parts.next()?;
    let mut ymd = date.split('-').map(|p| p.parse::<i64>().ok());
    let (y, m, d) = (ymd.next()??, ymd.next()??, ymd.next()??);
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return None;
    }
    let secs = match parts.next() {
        Some(t) => {
            let mut hms = t.split(':').map(|p| p.parse::<i64>().ok());
            let h = hms.next().flatten().unwrap_or(0);
            let mi = hms.next().flatten().unwrap_or(0);
            let se = hms.next().flatten().unwrap_or(0);
            h * 3600 + mi * 60 + se
        }
        None => 0,
    };
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * 146097 + doe - 719468;
    Some(days * 86400 + secs)
}
