//! Anatomical location sets used when assembling full reports from
//! per-location AGRG generations. Order follows the reference listing and is
//! the order descriptions are concatenated in.

use serde::{Deserialize, Serialize};

pub const AGRG9: [&str; 9] = [
    "abdomen",
    "cardiac silhouette",
    "left costophrenic angle",
    "right costophrenic angle",
    "left lung",
    "right lung",
    "mediastinum",
    "spine",
    "trachea",
];

/// Locations added on top of [`AGRG9`] to form the 29-location set.
pub const AGRG29_EXTRA: [&str; 20] = [
    "aortic arch",
    "carina",
    "cavoatrial junction",
    "svc",
    "upper mediastinum",
    "left apical zone",
    "right apical zone",
    "left mid lung zone",
    "right mid lung zone",
    "left lower lung zone",
    "right lower lung zone",
    "left upper lung zone",
    "right upper lung zone",
    "left hilar structures",
    "right hilar structures",
    "left clavicle",
    "right clavicle",
    "left hemidiaphragm",
    "right hemidiaphragm",
    "right atrium",
];

/// Text-only locations added on top of the 29-location set.
pub const AGRG38_EXTRA: [&str; 9] = [
    "left arm",
    "right arm",
    "left breast",
    "right breast",
    "left chest wall",
    "right chest wall",
    "left shoulder",
    "right shoulder",
    "neck",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocationSetName {
    #[serde(rename = "AGRG9")]
    Agrg9,
    #[serde(rename = "AGRG29")]
    Agrg29,
    #[serde(rename = "AGRG38")]
    Agrg38,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationSet {
    pub name: LocationSetName,
    pub locations: Vec<&'static str>,
}

impl LocationSet {
    pub fn new(name: LocationSetName) -> Self {
        let mut locations: Vec<&'static str> = AGRG9.to_vec();
        if matches!(name, LocationSetName::Agrg29 | LocationSetName::Agrg38) {
            locations.extend_from_slice(&AGRG29_EXTRA);
        }
        if name == LocationSetName::Agrg38 {
            locations.extend_from_slice(&AGRG38_EXTRA);
        }
        LocationSet { name, locations }
    }

    pub fn contains(&self, location: &str) -> bool {
        self.locations.iter().any(|l| l.eq_ignore_ascii_case(location))
    }

    /// Position of `location` in the set, for ordering generations.
    pub fn position(&self, location: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.eq_ignore_ascii_case(location))
    }
}
