//! Detection records: ordered counts at the right and left detectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Detector side. `Right` sees the transmitted (photon-carrying) mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "R")]
    Right,
    #[serde(rename = "L")]
    Left,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Right => "R",
            Side::Left => "L",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Side::Right => Side::Left,
            Side::Left => Side::Right,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub time: f64,
    pub side: Side,
}

/// Counts at strictly increasing times in `(0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    events: Vec<Detection>,
    horizon: f64,
}

impl DetectionRecord {
    pub fn new(events: Vec<Detection>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidRecord(format!("horizon must be finite and non-negative, got {horizon}")));
        }
        let mut last = 0.0;
        for (k, e) in events.iter().enumerate() {
            if !(e.time > last) {
                return Err(Error::InvalidRecord(format!(
                    "event {k} at t = {} does not follow t = {last}",
                    e.time
                )));
            }
            last = e.time;
        }
        if last > horizon {
            return Err(Error::InvalidRecord(format!("last event at t = {last} lies beyond the horizon {horizon}")));
        }
        Ok(Self { events, horizon })
    }

    /// No counts up to `horizon`.
    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    /// Builds a record from `(time, side)` pairs.
    pub fn from_pairs(pairs: &[(f64, Side)], horizon: f64) -> Result<Self> {
        Self::new(pairs.iter().map(|&(time, side)| Detection { time, side }).collect(), horizon)
    }

    pub fn events(&self) -> &[Detection] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The same times with every side exchanged.
    pub fn mirrored(&self) -> Self {
        Self {
            events: self
                .events
                .iter()
                .map(|e| Detection {
                    time: e.time,
                    side: e.side.flipped(),
                })
                .collect(),
            horizon: self.horizon,
        }
    }

    /// Side pattern of a record with at most two counts.
    pub fn pattern(&self) -> Option<EventPattern> {
        let sides: Vec<Side> = self.events.iter().map(|e| e.side).collect();
        EventPattern::from_sides(&sides)
    }
}

/// Count patterns with at most two events. Two-count labels name the
/// later count first: `LR` is a right count followed by a left count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventPattern {
    None,
    R,
    L,
    RR,
    LR,
    RL,
    LL,
}

impl EventPattern {
    pub const ALL: [EventPattern; 7] = [
        EventPattern::None,
        EventPattern::R,
        EventPattern::L,
        EventPattern::RR,
        EventPattern::LR,
        EventPattern::RL,
        EventPattern::LL,
    ];

    /// Sides in time order (earliest first).
    pub fn sides(self) -> &'static [Side] {
        use Side::*;
        match self {
            EventPattern::None => &[],
            EventPattern::R => &[Right],
            EventPattern::L => &[Left],
            EventPattern::RR => &[Right, Right],
            EventPattern::LR => &[Right, Left],
            EventPattern::RL => &[Left, Right],
            EventPattern::LL => &[Left, Left],
        }
    }

    pub fn from_sides(sides: &[Side]) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.sides() == sides)
    }

    pub fn count(self) -> usize {
        self.sides().len()
    }

    pub fn label(self) -> &'static str {
        match self {
            EventPattern::None => "none",
            EventPattern::R => "R",
            EventPattern::L => "L",
            EventPattern::RR => "RR",
            EventPattern::LR => "LR",
            EventPattern::RL => "RL",
            EventPattern::LL => "LL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label().eq_ignore_ascii_case(s))
    }

    /// Numbers of right and left counts.
    pub fn counts(self) -> (usize, usize) {
        let r = self.sides().iter().filter(|&&s| s == Side::Right).count();
        (r, self.count() - r)
    }

    pub fn mirrored(self) -> Self {
        let sides: Vec<Side> = self.sides().iter().map(|s| s.flipped()).collect();
        Self::from_sides(&sides).expect("mirror of a pattern is a pattern")
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}
