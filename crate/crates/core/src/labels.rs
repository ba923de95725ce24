//! Powerset encoding between outcome sets and the 8-way classification target.
//!
//! Bit assignment: ER attendance = 1, hospitalisation = 2, death = 4. Class 0
//! is the no-event class. The integer class is the `label` field of every
//! JSONL record and the class index of every metrics report, so this
//! assignment is frozen.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 8;

const ER_BIT: u8 = 1;
const HOSP_BIT: u8 = 2;
const DEATH_BIT: u8 = 4;

/// The three regulatory outcomes of a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeSet {
    pub er: bool,
    pub hospitalised: bool,
    pub died: bool,
}

impl OutcomeSet {
    pub const NONE: OutcomeSet = OutcomeSet {
        er: false,
        hospitalised: false,
        died: false,
    };

    pub fn new(er: bool, hospitalised: bool, died: bool) -> Self {
        OutcomeSet { er, hospitalised, died }
    }

    pub fn contains(&self, event: EventKind) -> bool {
        match event {
            EventKind::Er => self.er,
            EventKind::Hosp => self.hospitalised,
            EventKind::Death => self.died,
        }
    }

    /// All 2^3 outcome sets, in class order.
    pub fn all() -> impl Iterator<Item = OutcomeSet> {
        ClassId::all().map(decode_class)
    }
}

/// A single outcome, used for per-event evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    Er,
    Hosp,
    Death,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::Er, EventKind::Hosp, EventKind::Death];

    fn bit(self) -> u8 {
        match self {
            EventKind::Er => ER_BIT,
            EventKind::Hosp => HOSP_BIT,
            EventKind::Death => DEATH_BIT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Er => "ER attendance",
            EventKind::Hosp => "Hospitalisation",
            EventKind::Death => "Mortality",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::Er => "ER",
            EventKind::Hosp => "HOSP",
            EventKind::Death => "DEATH",
        };
        f.write_str(s)
    }
}

/// Powerset class of an [`OutcomeSet`], always in `0..=7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "u8")]
pub struct ClassId(u8);

impl ClassId {
    pub const NO_EVENT: ClassId = ClassId(0);

    pub fn new(value: u8) -> Result<Self> {
        if (value as usize) < NUM_CLASSES {
            Ok(ClassId(value))
        } else {
            Err(Error::InvalidClass(value as i64))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..NUM_CLASSES as u8).map(ClassId)
    }

    pub fn has_event(self, event: EventKind) -> bool {
        self.0 & event.bit() != 0
    }

    pub fn event_count(self) -> u32 {
        self.0.count_ones()
    }

    /// Human-readable name in the style of a class-wise metrics table.
    pub fn name(self) -> String {
        let names: Vec<&str> = EventKind::ALL
            .iter()
            .filter(|e| self.has_event(**e))
            .map(|e| e.name())
            .collect();
        if names.is_empty() {
            "No event".to_string()
        } else {
            names.join(" + ")
        }
    }
}

impl TryFrom<i64> for ClassId {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        if (0..NUM_CLASSES as i64).contains(&value) {
            Ok(ClassId(value as u8))
        } else {
            Err(Error::InvalidClass(value))
        }
    }
}

impl From<ClassId> for u8 {
    fn from(c: ClassId) -> u8 {
        c.0
    }
}

impl<'de> Deserialize<'de> for ClassId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        ClassId::try_from(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn encode_class(o: OutcomeSet) -> ClassId {
    let mut v = 0;
    if o.er {
        v |= ER_BIT;
    }
    if o.hospitalised {
        v |= HOSP_BIT;
    }
    if o.died {
        v |= DEATH_BIT;
    }
    ClassId(v)
}

pub fn decode_class(c: ClassId) -> OutcomeSet {
    OutcomeSet {
        er: c.0 & ER_BIT != 0,
        hospitalised: c.0 & HOSP_BIT != 0,
        died: c.0 & DEATH_BIT != 0,
    }
}

pub fn events_of(c: ClassId) -> BTreeSet<EventKind> {
    EventKind::ALL.into_iter().filter(|e| c.has_event(*e)).collect()
}

impl From<OutcomeSet> for ClassId {
    fn from(o: OutcomeSet) -> Self {
        encode_class(o)
    }
}

impl From<ClassId> for OutcomeSet {
    fn from(c: ClassId) -> Self {
        decode_class(c)
    }
}
