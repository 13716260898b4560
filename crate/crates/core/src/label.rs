use serde::{Deserialize, Serialize};
use std::fmt;

/// Anomaly class shared by every labeling tier.
///
/// The discriminants are the on-disk byte values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Label {
    Normal = 0,
    Maneuver = 1,
    Decay = 2,
    Breakup = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Normal, Label::Maneuver, Label::Decay, Label::Breakup];

    pub fn as_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Label> {
        Label::ALL.get(b as usize).copied()
    }

    pub fn is_anomalous(self) -> bool {
        self != Label::Normal
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::Normal => "normal",
            Label::Maneuver => "maneuver",
            Label::Decay => "decay",
            Label::Breakup => "breakup",
        };
        f.write_str(s)
    }
}
