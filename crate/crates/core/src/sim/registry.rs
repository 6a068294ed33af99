//! Slot registry: the pose estimate recorded when each slot was planted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::perception::SlotPoseEstimate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub estimate: SlotPoseEstimate,
    /// Transplant trial that planted the slot, `None` for panel setup.
    pub planted_by: Option<usize>,
    pub occupied: bool,
    #[serde(default)]
    pub harvested_by: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotRegistry {
    pub entries: BTreeMap<String, RegistryEntry>,
}

impl SlotRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_transplant(&mut self, slot: &str, estimate: SlotPoseEstimate, trial: Option<usize>) {
        self.entries.insert(
            slot.to_string(),
            RegistryEntry {
                estimate,
                planted_by: trial,
                occupied: true,
                harvested_by: None,
            },
        );
    }

    /// Estimate to reuse for harvesting `slot`.
    pub fn lookup(&self, slot: &str) -> Result<&RegistryEntry, SimError> {
        match self.entries.get(slot) {
            Some(e) if e.occupied => Ok(e),
            _ => Err(SimError::SlotNotOccupied(slot.to_string())),
        }
    }

    pub fn mark_harvested(&mut self, slot: &str, trial: usize) -> Result<(), SimError> {
        match self.entries.get_mut(slot) {
            Some(e) if e.occupied => {
                e.occupied = false;
                e.harvested_by = Some(trial);
                Ok(())
            }
            _ => Err(SimError::SlotNotOccupied(slot.to_string())),
        }
    }

    pub fn is_occupied(&self, slot: &str) -> bool {
        self.entries.get(slot).is_some_and(|e| e.occupied)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        serde_json::from_str(s).map_err(|e| SimError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::screw::Pose;

    fn estimate(x: f64) -> SlotPoseEstimate {
        SlotPoseEstimate {
            pose: Pose::from_translation(x, 0.1, 0.2),
            extents: [0.04, 0.04, 0.001],
            point_count: 3000,
            residual: 1e-4,
            degenerate: false,
        }
    }

    #[test]
    fn lookup_returns_the_recorded_estimate() {
        let mut r = SlotRegistry::new();
        r.record_transplant("A1", estimate(0.5), Some(3));
        assert_eq!(r.lookup("A1").unwrap().estimate, estimate(0.5));
        assert!(matches!(r.lookup("A2"), Err(SimError::SlotNotOccupied(_))));
        r.mark_harvested("A1", 0).unwrap();
        assert!(!r.is_occupied("A1"));
        assert!(r.lookup("A1").is_err());
        assert!(r.mark_harvested("A1", 1).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut r = SlotRegistry::new();
        r.record_transplant("B2", estimate(0.123456789012345), None);
        r.record_transplant("C4", estimate(1.0 / 3.0), Some(7));
        assert_eq!(SlotRegistry::from_json(&r.to_json()).unwrap(), r);
    }
}
