//! Simulated calendar. Day granularity for moments, one-second ticks for
//! individual events so every event gets a strictly later timestamp.

use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// UTC instant, rendered as ISO-8601 (`2020-09-01T00:00:03Z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_unix(seconds: i64) -> Self {
        Timestamp(seconds)
    }

    pub fn unix(self) -> i64 {
        self.0
    }

    pub fn plus_seconds(self, seconds: i64) -> Self {
        Timestamp(self.0 + seconds)
    }

    pub fn plus_days(self, days: i64) -> Self {
        self.plus_seconds(days * SECONDS_PER_DAY)
    }

    pub fn to_iso(self) -> String {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
            .unwrap_or_else(|| format!("@{}", self.0))
    }

    pub fn parse_iso(text: &str) -> Result<Self, String> {
        DateTime::parse_from_rfc3339(text)
            .map(|t| Timestamp(t.timestamp()))
            .map_err(|e| format!("invalid timestamp `{text}`: {e}"))
    }

    /// Calendar date part, `YYYY-MM-DD`.
    pub fn date(self) -> String {
        self.to_iso()[..10].to_string()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_iso())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Timestamp::parse_iso(&text).map_err(serde::de::Error::custom)
    }
}

/// Monotone simulated clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimClock {
    epoch: Timestamp,
    now: Timestamp,
}

impl SimClock {
    pub fn starting(epoch: Timestamp) -> Self {
        SimClock { epoch, now: epoch }
    }

    /// Clock starting at midnight UTC on `date` (`YYYY-MM-DD`).
    pub fn starting_on(date: &str) -> Result<Self, String> {
        let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|e| format!("invalid date `{date}`: {e}"))?;
        let secs = d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp();
        Ok(Self::starting(Timestamp(secs)))
    }

    pub fn epoch(&self) -> Timestamp {
        self.epoch
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Whole days elapsed since the epoch.
    pub fn day(&self) -> i64 {
        (self.now.0 - self.epoch.0).div_euclid(SECONDS_PER_DAY)
    }

    /// Advances one second and returns the new instant.
    pub fn tick(&mut self) -> Timestamp {
        self.now = self.now.plus_seconds(1);
        self.now
    }

    /// Jumps forward to the start of `day`; never moves backwards.
    pub fn advance_to_day(&mut self, day: i64) {
        let target = self.epoch.plus_days(day);
        if target > self.now {
            self.now = target;
        }
    }

    pub fn advance_days(&mut self, days: i64) {
        self.now = self.now.plus_days(days);
    }
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock::starting_on("2020-09-01").expect("valid default epoch")
    }
}
