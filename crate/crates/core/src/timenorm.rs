//! Rule-based normalization of time expressions to ISO day, week, month or
//! year values, anchored on a note's document time.
//!
//! Two behaviors are kept for compatibility with timelines produced by the
//! reference grammar and can be switched off with
//! [`NormalizeOptions::strict_iso_fixups`]:
//!
//! * `last week` resolves to a single day (anchor minus seven days) while
//!   `next week` resolves to an ISO week;
//! * a month and day without a year (`January 9`) resolves into the year
//!   before the anchor's year.

use std::fmt;
use std::sync::OnceLock;

use chrono::{Datelike, Duration, Months, NaiveDate, Weekday};
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Week,
    Month,
    Year,
}

/// An ISO-formatted time value: `YYYY-MM-DD`, `YYYY-wWW`, `YYYY-MM` or `YYYY`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NormalizedTime {
    granularity: Granularity,
    value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0:?} is not a valid ISO day, week, month or year value")]
pub struct InvalidTimeValue(pub String);

impl NormalizedTime {
    pub fn day(date: NaiveDate) -> Self {
        Self {
            granularity: Granularity::Day,
            value: date.format("%Y-%m-%d").to_string(),
        }
    }

    pub fn week_of(date: NaiveDate) -> Self {
        let (year, week) = iso_week_of(date);
        Self {
            granularity: Granularity::Week,
            value: format!("{year:04}-w{week:02}"),
        }
    }

    pub fn month(year: i32, month: u32) -> Self {
        Self {
            granularity: Granularity::Month,
            value: format!("{year:04}-{month:02}"),
        }
    }

    pub fn year(year: i32) -> Self {
        Self {
            granularity: Granularity::Year,
            value: format!("{year:04}"),
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    /// Reads a value back, inferring its granularity from the format.
    pub fn parse(value: &str) -> Result<Self, InvalidTimeValue> {
        let err = || InvalidTimeValue(value.to_string());
        let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        let b = value.as_bytes();
        match b.len() {
            4 if digits(value) => Ok(Self::year(value.parse().map_err(|_| err())?)),
            7 if b[4] == b'-' && digits(&value[..4]) && digits(&value[5..]) => {
                let month: u32 = value[5..].parse().map_err(|_| err())?;
                if !(1..=12).contains(&month) {
                    return Err(err());
                }
                Ok(Self::month(value[..4].parse().map_err(|_| err())?, month))
            }
            8 if &value[4..6] == "-w" && digits(&value[..4]) && digits(&value[6..]) => {
                let year: i32 = value[..4].parse().map_err(|_| err())?;
                let week: u32 = value[6..].parse().map_err(|_| err())?;
                let date = NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).ok_or_else(err)?;
                Ok(Self::week_of(date))
            }
            10 => {
                let date = NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|_| err())?;
                let out = Self::day(date);
                if out.value == value {
                    Ok(out)
                } else {
                    Err(err())
                }
            }
            _ => Err(err()),
        }
    }
}

impl fmt::Display for NormalizedTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

/// Document time used to resolve relative expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anchor(pub NaiveDate);

impl From<NaiveDate> for Anchor {
    fn from(d: NaiveDate) -> Self {
        Anchor(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnnormalizableReason {
    UnknownShape,
    MissingAnchor,
    InvalidDate,
}

impl UnnormalizableReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnnormalizableReason::UnknownShape => "unknown-shape",
            UnnormalizableReason::MissingAnchor => "missing-anchor",
            UnnormalizableReason::InvalidDate => "invalid-date",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot normalize {expr:?}: {}", reason.as_str())]
pub struct Unnormalizable {
    pub expr: String,
    pub reason: UnnormalizableReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Resolve `last week` to a week and bare month-day expressions to their
    /// most recent occurrence not after the anchor.
    pub strict_iso_fixups: bool,
}

/// ISO-8601 week-numbering year and week of `date`.
pub fn iso_week_of(date: NaiveDate) -> (i32, u32) {
    let w = date.iso_week();
    (w.year(), w.week())
}

const MONTHS: &str = r"(january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|nov|dec)";

struct Patterns {
    slash: Regex,
    dash: Regex,
    month_day_year: Regex,
    month_day: Regex,
    month_year: Regex,
    year: Regex,
    ago: Regex,
    relative: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static pattern");
        Patterns {
            slash: re(r"^(\d{1,2})/(\d{1,2})/(\d{4}|\d{2})$"),
            dash: re(r"^(\d{1,2})-(\d{1,2})-(\d{4}|\d{2})$"),
            month_day_year: re(&format!(
                r"^{MONTHS}\.? (\d{{1,2}})(?:st|nd|rd|th)?,? (\d{{4}})$"
            )),
            month_day: re(&format!(r"^{MONTHS}\.? (\d{{1,2}})(?:st|nd|rd|th)?$")),
            month_year: re(&format!(r"^{MONTHS}\.?,? (\d{{4}})$")),
            year: re(r"^(\d{4})$"),
            ago: re(
                r"^(\d+|a|an|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve) (day|week|month|year)s? ago$",
            ),
            relative: re(r"^(last|next|this) (week|month|year)$"),
        }
    })
}

fn month_number(name: &str) -> u32 {
    match &name[..3] {
        "jan" => 1,
        "feb" => 2,
        "mar" => 3,
        "apr" => 4,
        "may" => 5,
        "jun" => 6,
        "jul" => 7,
        "aug" => 8,
        "sep" => 9,
        "oct" => 10,
        "nov" => 11,
        "dec" => 12,
        _ => unreachable!("month alternation only admits month names"),
    }
}

fn count_word(word: &str) -> Option<u32> {
    Some(match word {
        "a" | "an" | "one" => 1,
        "two" => 2,
        "three" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        "ten" => 10,
        "eleven" => 11,
        "twelve" => 12,
        digits => digits.parse().ok()?,
    })
}

/// Two-digit years up to 29 are read as 20YY, the rest as 19YY.
pub fn expand_two_digit_year(yy: i32) -> i32 {
    if yy <= 29 {
        2000 + yy
    } else {
        1900 + yy
    }
}

fn clean(expr: &str) -> String {
    expr.trim_matches(|c: char| !c.is_alphanumeric())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Normalizes one time expression. Relative shapes need an anchor.
pub fn normalize(
    expr: &str,
    anchor: Option<Anchor>,
    options: NormalizeOptions,
) -> Result<NormalizedTime, Unnormalizable> {
    let fail = |reason| Unnormalizable {
        expr: expr.to_string(),
        reason,
    };
    let text = clean(expr);
    let p = patterns();
    let need_anchor = || {
        anchor
            .map(|a| a.0)
            .ok_or(fail(UnnormalizableReason::MissingAnchor))
    };
    let date = |y: i32, m: u32, d: u32| {
        NaiveDate::from_ymd_opt(y, m, d).ok_or(fail(UnnormalizableReason::InvalidDate))
    };
    let num = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| fail(UnnormalizableReason::InvalidDate))
    };

    if let Some(c) = p.slash.captures(&text).or_else(|| p.dash.captures(&text)) {
        let year = &c[3];
        let year = if year.len() == 2 {
            expand_two_digit_year(year.parse().expect("two digits"))
        } else {
            year.parse().expect("four digits")
        };
        return date(year, num(&c[1])?, num(&c[2])?).map(NormalizedTime::day);
    }
    if let Some(c) = p.month_day_year.captures(&text) {
        let year = c[3].parse().expect("four digits");
        return date(year, month_number(&c[1]), num(&c[2])?).map(NormalizedTime::day);
    }
    if let Some(c) = p.month_day.captures(&text) {
        let anchor = need_anchor()?;
        let (month, day) = (month_number(&c[1]), num(&c[2])?);
        // Validate against a leap year so that Feb 29 is accepted here.
        date(2000, month, day)?;
        return resolve_month_day(anchor, month, day, options)
            .map(NormalizedTime::day)
            .ok_or(fail(UnnormalizableReason::InvalidDate));
    }
    if let Some(c) = p.month_year.captures(&text) {
        return Ok(NormalizedTime::month(
            c[2].parse().expect("four digits"),
            month_number(&c[1]),
        ));
    }
    if let Some(c) = p.year.captures(&text) {
        let year: i32 = c[1].parse().expect("four digits");
        if !(1900..=2100).contains(&year) {
            return Err(fail(UnnormalizableReason::InvalidDate));
        }
        return Ok(NormalizedTime::year(year));
    }
    match text.as_str() {
        "today" => return Ok(NormalizedTime::day(need_anchor()?)),
        "yesterday" => return Ok(NormalizedTime::day(need_anchor()? - Duration::days(1))),
        "tomorrow" => return Ok(NormalizedTime::day(need_anchor()? + Duration::days(1))),
        _ => {}
    }
    if let Some(c) = p.ago.captures(&text) {
        let anchor = need_anchor()?;
        let n = count_word(&c[1]).ok_or(fail(UnnormalizableReason::InvalidDate))?;
        return shift_back(anchor, n, &c[2])
            .map(NormalizedTime::day)
            .ok_or(fail(UnnormalizableReason::InvalidDate));
    }
    if let Some(c) = p.relative.captures(&text) {
        let anchor = need_anchor()?;
        return Ok(relative(anchor, &c[1], &c[2], options));
    }
    Err(fail(UnnormalizableReason::UnknownShape))
}

fn shift_back(anchor: NaiveDate, n: u32, unit: &str) -> Option<NaiveDate> {
    match unit {
        "day" => anchor.checked_sub_signed(Duration::days(i64::from(n))),
        "week" => anchor.checked_sub_signed(Duration::weeks(i64::from(n))),
        "month" => anchor.checked_sub_months(Months::new(n)),
        "year" => anchor.checked_sub_months(Months::new(n.checked_mul(12)?)),
        _ => None,
    }
}

fn resolve_month_day(
    anchor: NaiveDate,
    month: u32,
    day: u32,
    options: NormalizeOptions,
) -> Option<NaiveDate> {
    // Feb 29 may need to walk back several years to find a leap year.
    let latest_year = if options.strict_iso_fixups {
        anchor.year()
    } else {
        anchor.year() - 1
    };
    (0..8)
        .map(|back| latest_year - back)
        .filter_map(|y| NaiveDate::from_ymd_opt(y, month, day))
        .find(|d| *d <= anchor)
}

fn relative(
    anchor: NaiveDate,
    which: &str,
    unit: &str,
    options: NormalizeOptions,
) -> NormalizedTime {
    let shift_months = |n: i32| {
        if n >= 0 {
            anchor + Months::new(n as u32)
        } else {
            anchor - Months::new(n.unsigned_abs())
        }
    };
    match (which, unit) {
        ("last", "week") if !options.strict_iso_fixups => {
            NormalizedTime::day(anchor - Duration::days(7))
        }
        ("last", "week") => NormalizedTime::week_of(anchor - Duration::days(7)),
        ("next", "week") => NormalizedTime::week_of(anchor + Duration::days(7)),
        ("this", "week") => NormalizedTime::week_of(anchor),
        (_, "month") => {
            let d = match which {
                "last" => shift_months(-1),
                "next" => shift_months(1),
                _ => anchor,
            };
            NormalizedTime::month(d.year(), d.month())
        }
        (_, "year") => NormalizedTime::year(match which {
            "last" => anchor.year() - 1,
            "next" => anchor.year() + 1,
            _ => anchor.year(),
        }),
        _ => unreachable!("relative pattern admits only week, month or year"),
    }
}
