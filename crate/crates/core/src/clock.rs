//! Logical clock and commit stamps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Timestamp, TsFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitStamp {
    pub time: Timestamp,
    pub seq: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogicalClock {
    now: Timestamp,
    /// Every commit so far, in sequence order. Entry `i` has seq `i + 1`.
    commits: Vec<CommitStamp>,
}

impl Default for LogicalClock {
    fn default() -> Self {
        LogicalClock::new(Timestamp::new(0, TsFormat::ClockMinute))
    }
}

impl LogicalClock {
    pub fn new(now: Timestamp) -> Self {
        LogicalClock { now, commits: Vec::new() }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Sequence number of the latest commit (0 before the first one).
    pub fn seq(&self) -> u64 {
        self.commits.len() as u64
    }

    pub fn latest(&self) -> CommitStamp {
        self.commits
            .last()
            .copied()
            .unwrap_or(CommitStamp { time: self.now, seq: 0 })
    }

    pub fn advance(&mut self, to: Timestamp) -> Result<()> {
        if to < self.now {
            return Err(Error::ClockRegression { now: self.now.to_string(), to: to.to_string() });
        }
        self.now = to;
        Ok(())
    }

    /// Issues the next commit stamp at the current time.
    pub fn commit(&mut self) -> CommitStamp {
        let stamp = CommitStamp { time: self.now, seq: self.seq() + 1 };
        self.commits.push(stamp);
        stamp
    }

    pub fn stamp(&self, seq: u64) -> Option<CommitStamp> {
        if seq == 0 {
            return None;
        }
        self.commits.get(seq as usize - 1).copied()
    }

    /// Time of the given commit, or the clock origin for seq 0.
    pub fn time_of(&self, seq: u64) -> Option<Timestamp> {
        self.stamp(seq).map(|s| s.time)
    }

    /// The last commit issued at or before `t` (0 if none).
    pub fn resolve(&self, t: Timestamp) -> u64 {
        self.commits.partition_point(|c| c.time <= t) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::parse_clock_label;

    fn t(s: &str) -> Timestamp {
        parse_clock_label(s, None).unwrap()
    }

    #[test]
    fn monotone_advance() {
        let mut c = LogicalClock::new(t("12:00"));
        c.advance(t("12:01")).unwrap();
        assert_eq!(c.now(), t("12:01"));
        c.advance(t("12:01")).unwrap();
        assert!(matches!(c.advance(t("11:59")), Err(Error::ClockRegression { .. })));
    }

    #[test]
    fn commits_are_sequenced_and_resolvable() {
        let mut c = LogicalClock::new(t("12:00"));
        assert_eq!(c.commit().seq, 1);
        c.advance(t("12:02")).unwrap();
        let s = c.commit();
        assert_eq!((s.seq, s.time), (2, t("12:02")));
        assert_eq!(c.resolve(t("11:00")), 0);
        assert_eq!(c.resolve(t("12:00")), 1);
        assert_eq!(c.resolve(t("12:01")), 1);
        assert_eq!(c.resolve(t("12:05")), 2);
    }
}
