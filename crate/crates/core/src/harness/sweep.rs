use serde::{Deserialize, Serialize};

use super::corpus::QuerySets;
use super::HarnessError;
use crate::hashing::{PerceptualHash, HASH_BITS};
use crate::prefix::PrefixScheme;
use crate::registry::{EntryMetadata, Registry, RegistryConfig};

/// Thresholds swept by default.
pub const DEFAULT_TAUS: [u32; 5] = [2, 6, 10, 15, 20];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schemes: Vec<PrefixScheme>,
    pub tolerances: Vec<u32>,
    pub taus: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schemes: PrefixScheme::ALL.to_vec(),
            tolerances: vec![2, 4],
            taus: DEFAULT_TAUS.to_vec(),
        }
    }
}

/// Confusion counts for one (scheme, tolerance, tau) cell.
///
/// Originals and edited variants are the positive class; negatives the
/// negative class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scheme: PrefixScheme,
    pub flip_tolerance: u32,
    pub tau: u32,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    pub recall: f64,
    /// `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    pub fpr: f64,
}

impl SweepResult {
    fn from_counts(
        scheme: PrefixScheme,
        flip_tolerance: u32,
        tau: u32,
        [tp, fn_, fp, tn]: [usize; 4],
    ) -> Self {
        let ratio = |a: usize, b: usize| a as f64 / b as f64;
        Self {
            scheme,
            flip_tolerance,
            tau,
            tp,
            fn_,
            fp,
            tn,
            recall: ratio(tp, tp + fn_),
            precision: (tp + fp > 0).then(|| ratio(tp, tp + fp)),
            fpr: ratio(fp, fp + tn),
        }
    }
}

/// Populate a registry with `originals` only.
pub fn registry_of(
    originals: &[PerceptualHash],
    config: RegistryConfig,
) -> Result<Registry, HarnessError> {
    let mut reg = Registry::new(config)?;
    let created = chrono::DateTime::from_timestamp(1_700_000_000, 0).expect("valid epoch");
    for h in originals {
        reg.register(*h, EntryMetadata::new("harness").at(created))?;
    }
    Ok(reg)
}

/// One sweep cell per (scheme, tolerance, tau), in that nesting order.
///
/// Each query is verified once per (scheme, tolerance) with `tau = 64`, and
/// the resulting `d_min` is thresholded for every tau; this is the same
/// decision `verify` makes for each tau individually.
pub fn run_sweep(sets: &QuerySets, cfg: &SweepConfig) -> Result<Vec<SweepResult>, HarnessError> {
    if sets.originals.is_empty() {
        return Err(HarnessError::Config("no registered originals".into()));
    }
    if sets.originals.len() + sets.edited.len() == 0 || sets.negatives.is_empty() {
        return Err(HarnessError::Config("empty query set".into()));
    }
    if cfg.schemes.is_empty() || cfg.tolerances.is_empty() || cfg.taus.is_empty() {
        return Err(HarnessError::Config("empty sweep grid".into()));
    }
    if let Some(tau) = cfg.taus.iter().find(|&&t| t > HASH_BITS) {
        return Err(HarnessError::Config(format!("tau {tau} outside [0, 64]")));
    }

    let mut out = Vec::new();
    for &scheme in &cfg.schemes {
        for &tol in &cfg.tolerances {
            let reg = registry_of(&sets.originals, RegistryConfig::new(scheme, tol, 0)?)?;
            let d_min = |q: &PerceptualHash| -> Result<Option<u32>, HarnessError> {
                Ok(reg.verify_with(*q, tol, HASH_BITS)?.min_distance)
            };
            let pos: Vec<Option<u32>> = sets
                .originals
                .iter()
                .chain(&sets.edited)
                .map(d_min)
                .collect::<Result<_, _>>()?;
            let neg: Vec<Option<u32>> = sets.negatives.iter().map(d_min).collect::<Result<_, _>>()?;
            for &tau in &cfg.taus {
                let hit = |d: &&Option<u32>| d.is_some_and(|d| d <= tau);
                let tp = pos.iter().filter(hit).count();
                let fp = neg.iter().filter(hit).count();
                out.push(SweepResult::from_counts(
                    scheme,
                    tol,
                    tau,
                    [tp, pos.len() - tp, fp, neg.len() - fp],
                ));
            }
        }
    }
    Ok(out)
}
