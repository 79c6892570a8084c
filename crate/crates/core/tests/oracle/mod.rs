//! Reference implementations used as test oracles. Nothing here calls into
//! the library's own date, matching or scoring code.

#![allow(dead_code)]

use std::collections::BTreeMap;

// ---- calendar arithmetic on plain integers ----

pub type Ymd = (i64, u32, u32);

/// Days since 1970-01-01 in the proleptic Gregorian calendar.
pub fn days_from_civil((y, m, d): Ymd) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

pub fn civil_from_days(z: i64) -> Ymd {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

pub fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

pub fn days_in_month(y: i64, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => panic!("month {m}"),
    }
}

pub fn add_days(date: Ymd, n: i64) -> Ymd {
    civil_from_days(days_from_civil(date) + n)
}

/// Calendar month shift with end-of-month clamping.
pub fn add_months((y, m, d): Ymd, n: i64) -> Ymd {
    let idx = y * 12 + (m as i64 - 1) + n;
    let (ny, nm) = (idx.div_euclid(12), (idx.rem_euclid(12) + 1) as u32);
    (ny, nm, d.min(days_in_month(ny, nm)))
}

/// ISO weekday, Monday = 1.
pub fn weekday(date: Ymd) -> i64 {
    (days_from_civil(date) + 3).rem_euclid(7) + 1
}

fn weeks_in_year(y: i64) -> i64 {
    let p = |y: i64| (y + y.div_euclid(4) - y.div_euclid(100) + y.div_euclid(400)).rem_euclid(7);
    if p(y) == 4 || p(y - 1) == 3 {
        53
    } else {
        52
    }
}

pub fn iso_week(date: Ymd) -> (i64, i64) {
    let (y, _, _) = date;
    let ordinal = days_from_civil(date) - days_from_civil((y, 1, 1)) + 1;
    let w = (ordinal - weekday(date) + 10) / 7;
    if w < 1 {
        (y - 1, weeks_in_year(y - 1))
    } else if w > weeks_in_year(y) {
        (y + 1, 1)
    } else {
        (y, w)
    }
}

pub fn fmt_day((y, m, d): Ymd) -> String {
    format!("{y:04}-{m:02}-{d:02}")
}

pub fn fmt_week(date: Ymd) -> String {
    let (y, w) = iso_week(date);
    format!("{y:04}-w{w:02}")
}

pub fn fmt_month((y, m, _): Ymd) -> String {
    format!("{y:04}-{m:02}")
}

// ---- scoring ----

pub type Row = (String, String, String);

pub fn canon(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn distinct(rows: &[Row]) -> Vec<Row> {
    let mut out: Vec<Row> = Vec::new();
    for r in rows {
        let r = (canon(&r.0), r.1.clone(), canon(&r.2));
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// Matches between two row lists by exhaustive pairwise comparison.
pub fn count_matches(pred: &[Row], gold: &[Row]) -> (usize, usize, usize) {
    let p = distinct(pred);
    let g = distinct(gold);
    let tp = p.iter().filter(|x| g.iter().any(|y| y == *x)).count();
    (tp, p.len(), g.len())
}

pub fn prf(tp: usize, np: usize, ng: usize) -> (f64, f64, f64) {
    let p = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
    let r = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

/// Micro P/R/F over notes.
pub fn micro(
    pred: &BTreeMap<String, Vec<Row>>,
    gold: &BTreeMap<String, Vec<Row>>,
) -> (f64, f64, f64) {
    let mut keys: Vec<&String> = pred.keys().chain(gold.keys()).collect();
    keys.sort();
    keys.dedup();
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for k in keys {
        let empty = Vec::new();
        let (a, b, c) = count_matches(pred.get(k).unwrap_or(&empty), gold.get(k).unwrap_or(&empty));
        tp += a;
        np += b;
        ng += c;
    }
    prf(tp, np, ng)
}

/// (type A, type B, per patient) over `universe`.
pub fn timeline_scores(
    pred: &BTreeMap<String, Vec<Row>>,
    gold: &BTreeMap<String, Vec<Row>>,
    universe: &[String],
) -> (f64, f64, BTreeMap<String, f64>) {
    let empty = Vec::new();
    let mut per = BTreeMap::new();
    let mut b = Vec::new();
    for u in universe {
        let p = pred.get(u).unwrap_or(&empty);
        let g = gold.get(u).unwrap_or(&empty);
        let (tp, np, ng) = count_matches(p, g);
        let f = if np == 0 && ng == 0 {
            1.0
        } else {
            prf(tp, np, ng).2
        };
        if ng > 0 {
            b.push(f);
        }
        per.insert(u.clone(), f);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let a: Vec<f64> = per.values().copied().collect();
    (mean(&a), mean(&b), per)
}

// ---- preference pairs ----

/// Recall of a candidate given its known rows; `None` rows means the text
/// does not parse.
pub fn recall(candidate: Option<&[Row]>, gold: &[Row]) -> f64 {
    match candidate {
        None => 0.0,
        Some(rows) => {
            let (tp, _, ng) = count_matches(rows, gold);
            if ng == 0 {
                0.0
            } else {
                tp as f64 / ng as f64
            }
        }
    }
}

/// Pair selection by enumerating every (chosen, rejected) index pair and
/// keeping the lexicographically best under: chosen recall high, chosen
/// index low, rejected is the lowest-index minimum unless that collides
/// textually with chosen, in which case the lowest-index differing text.
pub fn select(texts: &[String], recalls: &[f64]) -> Option<(usize, usize)> {
    let n = texts.len();
    let mut best: Option<(usize, usize)> = None;
    for i in 0..n {
        if (0..n).any(|k| recalls[k] > recalls[i] || (recalls[k] == recalls[i] && k < i)) {
            continue;
        }
        let argmin = (0..n)
            .find(|&k| (0..n).all(|m| recalls[m] >= recalls[k]))
            .expect("non-empty");
        for j in 0..n {
            let ok = if texts[argmin] != texts[i] {
                j == argmin
            } else {
                texts[j] != texts[i] && (0..j).all(|m| texts[m] == texts[i])
            };
            if ok && best.is_none() {
                best = Some((i, j));
            }
        }
    }
    best
}
