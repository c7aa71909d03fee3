//! Date helpers shared across modules.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime};

/// Half of the calendar year a shoulder season is searched in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Season {
    /// January through June.
    Spring,
    /// July through December.
    Fall,
}

impl Season {
    pub const ALL: [Season; 2] = [Season::Spring, Season::Fall];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Fall => "fall",
        }
    }

    /// First and last day of this half of `year`.
    pub fn bounds(self, year: i32) -> (NaiveDate, NaiveDate) {
        match self {
            Season::Spring => (ymd(year, 1, 1), ymd(year, 6, 30)),
            Season::Fall => (ymd(year, 7, 1), ymd(year, 12, 31)),
        }
    }

    pub fn contains(self, date: NaiveDate) -> bool {
        match self {
            Season::Spring => date.month() <= 6,
            Season::Fall => date.month() >= 7,
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spring" => Ok(Season::Spring),
            "fall" => Ok(Season::Fall),
            other => Err(format!("unknown season `{other}`")),
        }
    }
}

/// Panics on an invalid date; only for literal constants.
pub fn ymd(year: i32, month: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, month, day).expect("valid calendar date")
}

pub fn day_of_year(date: NaiveDate) -> u32 {
    date.ordinal()
}

pub fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    let first = ymd(year, month, 1);
    let next = if month == 12 {
        ymd(year + 1, 1, 1)
    } else {
        ymd(year, month + 1, 1)
    };
    (next - first).num_days() as u32
}

/// Accepts `YYYY-MM-DDTHH:MM:SS`, `YYYY-MM-DD HH:MM:SS` and the same without
/// seconds.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leap_years() {
        assert_eq!(days_in_year(2020), 366);
        assert_eq!(days_in_year(2021), 365);
        assert_eq!(days_in_year(1900), 365);
        assert_eq!(days_in_month(2024, 2), 29);
        assert_eq!(days_in_month(2023, 12), 31);
    }

    #[test]
    fn timestamp_formats() {
        let a = parse_timestamp("2022-01-01T00:15:00").unwrap();
        let b = parse_timestamp("2022-01-01 00:15").unwrap();
        assert_eq!(a, b);
        assert!(parse_timestamp("2022-13-01T00:00:00").is_none());
    }

    #[test]
    fn halves() {
        assert!(Season::Spring.contains(ymd(2020, 6, 30)));
        assert!(Season::Fall.contains(ymd(2020, 7, 1)));
        assert_eq!(Season::Fall.bounds(2021).1, ymd(2021, 12, 31));
    }
}
