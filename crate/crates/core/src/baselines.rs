//! Comparator recovery policies sharing the protocol's action surface:
//! exhaustive azimuth scanning, scan-plus-offline-model (count-only
//! stand-in), and handover re-acquisition modeled as sweep latency plus
//! attach overhead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::{Beam, BeamId, Codebook};
use crate::blockage::BlockageEvent;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("invalid access model: {0}")]
    InvalidAccessModel(String),
}

/// Broadcast-sweep acquisition parameters of the serving network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessModel {
    pub n_sweep_beams: u32,
    pub sweep_period_ms: u64,
    /// Random access plus control exchange after the sweep.
    pub attach_overhead_ms: u64,
}

pub const DEFAULT_SWEEP_BEAMS: u32 = 64;
pub const DEFAULT_SWEEP_PERIOD_MS: u64 = 20;
pub const DEFAULT_ATTACH_OVERHEAD_MS: u64 = 500;

impl AccessModel {
    pub fn new(
        n_sweep_beams: u32,
        sweep_period_ms: u64,
        attach_overhead_ms: u64,
    ) -> Result<Self, BaselineError> {
        if n_sweep_beams == 0 || sweep_period_ms == 0 || attach_overhead_ms == 0 {
            return Err(BaselineError::InvalidAccessModel(
                "all access-model fields must be positive".into(),
            ));
        }
        Ok(AccessModel {
            n_sweep_beams,
            sweep_period_ms,
            attach_overhead_ms,
        })
    }

    pub fn reference() -> Self {
        AccessModel {
            n_sweep_beams: DEFAULT_SWEEP_BEAMS,
            sweep_period_ms: DEFAULT_SWEEP_PERIOD_MS,
            attach_overhead_ms: DEFAULT_ATTACH_OVERHEAD_MS,
        }
    }
}

/// Worst-case time for a mobile to even discover one sweep beam:
/// every beam position times the sweep period.
pub fn worst_case_discovery_latency_ms(model: &AccessModel) -> u64 {
    model.n_sweep_beams as u64 * model.sweep_period_ms
}

/// Outage a handover-style recovery incurs for one blockage event:
/// detection, then a full discovery sweep, then attach. Independent of when
/// the blockage actually ends.
pub fn handover_outage_ms(
    model: &AccessModel,
    blockage: &BlockageEvent,
    detection_ms: u64,
) -> u64 {
    let detect = (blockage.duration_ms as u64).min(detection_ms);
    detect + worst_case_discovery_latency_ms(model) + model.attach_overhead_ms
}

/// Measure every beam in the codebook once; return the strongest beam and
/// the measurement count (always the codebook size). Ties break to the
/// lowest beam index.
pub fn exhaustive_scan(
    cb: &Codebook,
    mut measure: impl FnMut(BeamId, &Beam) -> f64,
) -> (BeamId, usize) {
    let mut best: Option<(BeamId, f64)> = None;
    let mut count = 0;
    for (id, beam) in cb.beams() {
        let rss = measure(id, beam);
        count += 1;
        best = match best {
            Some((_, b)) if b >= rss => best,
            _ => Some((id, rss)),
        };
    }
    (best.expect("non-empty codebook").0, count)
}

/// Recovery policy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Pre-discovered ground-reflection beam (the protocol under study).
    GroundReflection,
    /// Exhaustive azimuth-sector scan at each blockage.
    ExhaustiveScan,
    /// One azimuth scan up front, then an offline model picks the beam.
    ScanPlusModel,
    /// Re-acquisition on a neighboring station.
    Handover,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::GroundReflection,
        Policy::ExhaustiveScan,
        Policy::ScanPlusModel,
        Policy::Handover,
    ];
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Policy::GroundReflection => "gr",
            Policy::ExhaustiveScan => "exhaustive",
            Policy::ScanPlusModel => "scan-model",
            Policy::Handover => "handover",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gr" => Ok(Policy::GroundReflection),
            "exhaustive" => Ok(Policy::ExhaustiveScan),
            "scan-model" => Ok(Policy::ScanPlusModel),
            "handover" => Ok(Policy::Handover),
            other => Err(format!(
                "unknown policy '{other}' (expected gr|exhaustive|scan-model|handover)"
            )),
        }
    }
}

/// One comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: Policy,
    /// Measurements one discovery episode costs under this policy.
    pub measurements_used: u32,
    pub outage_ms: u64,
    /// Mean level the recovery beam held during blockage, dBm.
    pub recovered_rss_dbm: f64,
    pub n_blockage_events: u32,
    pub n_events_survived: u32,
    pub note: Option<String>,
}
