//! Programming disturbances from the V/3 biasing scheme, stored as raw
//! sub-databases keyed by `n_d`, the number of devices programmed after the
//! disturbed one.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disturbances larger than this usually come from an HRS or LRS failure.
pub const MAX_DISTURBANCE: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BiasDisturbanceDb {
    entries: BTreeMap<u32, Vec<f64>>,
}

impl BiasDisturbanceDb {
    pub fn from_entries(entries: BTreeMap<u32, Vec<f64>>) -> Result<Self> {
        let db = Self { entries };
        db.validate()?;
        Ok(db)
    }

    pub fn entries(&self) -> &BTreeMap<u32, Vec<f64>> {
        &self.entries
    }

    pub fn get(&self, n_d: u32) -> Option<&[f64]> {
        self.entries.get(&n_d).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidModel("bias_db has no sub-databases".into()));
        }
        for (n_d, list) in &self.entries {
            if list.is_empty() {
                return Err(Error::InvalidModel(format!("bias_db[{n_d}] is empty")));
            }
            if let Some(v) = list.iter().find(|v| !(v.is_finite() && v.abs() <= MAX_DISTURBANCE)) {
                return Err(Error::InvalidModel(format!("bias_db[{n_d}] holds {v} µS, outside ±{MAX_DISTURBANCE} µS")));
            }
        }
        Ok(())
    }

    /// Populated key closest to `n_d`; ties go to the smaller key.
    pub fn nearest_key(&self, n_d: u32) -> u32 {
        let below = self.entries.range(..=n_d).next_back().map(|(k, _)| *k);
        let above = self.entries.range(n_d..).next().map(|(k, _)| *k);
        match (below, above) {
            (Some(b), Some(a)) => {
                if n_d - b <= a - n_d {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("validated database is non-empty"),
        }
    }
}

/// Groups `(n_d, Δg)` records, dropping those beyond ±60 µS.
pub fn build_bias_db(records: &[(u32, f64)]) -> Result<BiasDisturbanceDb> {
    let mut entries: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &(n_d, dg) in records {
        if dg.is_finite() && dg.abs() <= MAX_DISTURBANCE {
            entries.entry(n_d).or_default().push(dg);
        }
    }
    if entries.is_empty() {
        return Err(Error::InsufficientData { needed: 1, given: 0 });
    }
    BiasDisturbanceDb::from_entries(entries)
}

/// Draws one disturbance for a device with `n_d` successors.
///
/// The last-programmed device (`n_d == 0`) is never disturbed. Missing keys
/// fall back to [`BiasDisturbanceDb::nearest_key`].
pub fn sample_bias<R: Rng + ?Sized>(db: &BiasDisturbanceDb, n_d: u32, rng: &mut R) -> f64 {
    if n_d == 0 {
        return 0.0;
    }
    let list = match db.get(n_d) {
        Some(list) => list,
        None => db.get(db.nearest_key(n_d)).expect("nearest key is populated"),
    };
    list[rng.random_range(0..list.len())]
}
