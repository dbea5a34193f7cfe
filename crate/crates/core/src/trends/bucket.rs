use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Week,
    Month,
    Year,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Week => "week",
            Granularity::Month => "month",
            Granularity::Year => "year",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown granularity {0:?} (expected week, month or year)")]
pub struct UnknownGranularity(pub String);

impl FromStr for Granularity {
    type Err = UnknownGranularity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "week" | "weekly" => Ok(Granularity::Week),
            "month" | "monthly" => Ok(Granularity::Month),
            "year" | "yearly" => Ok(Granularity::Year),
            _ => Err(UnknownGranularity(s.to_string())),
        }
    }
}

/// A time bucket.
///
/// Keys are `2019-W40` (ISO week), `2019-10` or `2019`. A week that
/// straddles a month boundary is split into one bucket per calendar month,
/// told apart by `segment` (the `YYYY-MM` month); this keeps weekly series
/// exactly re-aggregable into monthly ones. Buckets order by start date.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeBucket {
    pub start: NaiveDate,
    pub granularity: Granularity,
    pub key: String,
    pub segment: Option<String>,
}

fn month_key(date: NaiveDate) -> String {
    format!("{:04}-{:02}", date.year(), date.month())
}

fn first_of_month(date: NaiveDate) -> NaiveDate {
    date.with_day(1).expect("day 1 exists")
}

impl TimeBucket {
    pub fn of(date: NaiveDate, granularity: Granularity) -> TimeBucket {
        match granularity {
            Granularity::Year => TimeBucket {
                start: NaiveDate::from_ymd_opt(date.year(), 1, 1).expect("jan 1 exists"),
                granularity,
                key: format!("{:04}", date.year()),
                segment: None,
            },
            Granularity::Month => TimeBucket {
                start: first_of_month(date),
                granularity,
                key: month_key(date),
                segment: None,
            },
            Granularity::Week => {
                let iso = date.iso_week();
                let monday = date - Duration::days(date.weekday().num_days_from_monday() as i64);
                TimeBucket {
                    start: monday.max(first_of_month(date)),
                    granularity,
                    key: format!("{:04}-W{:02}", iso.year(), iso.week()),
                    segment: Some(month_key(date)),
                }
            }
        }
    }

    /// The month this bucket falls in, for week and month buckets.
    pub fn month(&self) -> Option<String> {
        match self.granularity {
            Granularity::Week => self.segment.clone(),
            Granularity::Month => Some(self.key.clone()),
            Granularity::Year => None,
        }
    }

    /// Every bucket touching `from..=to`, in order.
    pub fn range(from: NaiveDate, to: NaiveDate, granularity: Granularity) -> Vec<TimeBucket> {
        let mut out: Vec<TimeBucket> = Vec::new();
        let mut day = from;
        while day <= to {
            let b = TimeBucket::of(day, granularity);
            if out.last() != Some(&b) {
                out.push(b);
            }
            day = match day.succ_opt() {
                Some(d) => d,
                None => break,
            };
        }
        out
    }

    /// Key with the month segment appended for week buckets.
    pub fn label(&self) -> String {
        match &self.segment {
            Some(s) => format!("{}/{}", self.key, s),
            None => self.key.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn keys() {
        assert_eq!(TimeBucket::of(d(2019, 10, 3), Granularity::Month).key, "2019-10");
        assert_eq!(TimeBucket::of(d(2019, 10, 3), Granularity::Year).key, "2019");
        let w = TimeBucket::of(d(2019, 10, 3), Granularity::Week);
        assert_eq!(w.key, "2019-W40");
        assert_eq!(w.segment.as_deref(), Some("2019-10"));
        // ISO year differs from calendar year around new year.
        assert_eq!(TimeBucket::of(d(2020, 12, 31), Granularity::Week).key, "2020-W53");
        assert_eq!(TimeBucket::of(d(2021, 1, 1), Granularity::Week).key, "2020-W53");
    }

    #[test]
    fn straddling_week_splits_by_month() {
        let sep = TimeBucket::of(d(2019, 9, 30), Granularity::Week);
        let oct = TimeBucket::of(d(2019, 10, 1), Granularity::Week);
        assert_eq!(sep.key, oct.key);
        assert_ne!(sep, oct);
        assert!(sep < oct);
        assert_eq!(oct.start, d(2019, 10, 1));
    }

    #[test]
    fn range_is_gapless() {
        let months = TimeBucket::range(d(2019, 8, 15), d(2020, 1, 2), Granularity::Month);
        let keys: Vec<&str> = months.iter().map(|b| b.key.as_str()).collect();
        assert_eq!(keys, vec!["2019-08", "2019-09", "2019-10", "2019-11", "2019-12", "2020-01"]);
        let weeks = TimeBucket::range(d(2019, 9, 23), d(2019, 10, 13), Granularity::Week);
        let labels: Vec<String> = weeks.iter().map(TimeBucket::label).collect();
        assert_eq!(labels, vec!["2019-W39/2019-09", "2019-W40/2019-09", "2019-W40/2019-10", "2019-W41/2019-10"]);
    }

    #[test]
    fn parses_granularity() {
        assert_eq!("Weekly".parse::<Granularity>().unwrap(), Granularity::Week);
        assert!("daily".parse::<Granularity>().is_err());
    }
}
