//! Pedestrian blockage events on the simulation timeline: Poisson
//! arrivals, uniform durations, blockers placed where they cut the direct
//! ray. Generation is seed-deterministic; event lists are immutable
//! afterward and can be exported as text for replay.

use rand::Rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{blocker_reach, Blocker, SiteGeometry, DEFAULT_BLOCKER_HEIGHT_M};

#[derive(Debug, Error, PartialEq)]
pub enum BlockageError {
    #[error("invalid blockage parameters: {0}")]
    InvalidParameters(String),
    #[error("event trace parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub const DEFAULT_RATE_PER_S: f64 = 0.2;
pub const DEFAULT_DURATION_RANGE_MS: (f64, f64) = (100.0, 300.0);

/// One pedestrian crossing: a static blocker present for a bounded interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageEvent {
    pub start_ms: f64,
    pub duration_ms: f64,
    pub blocker: Blocker,
}

impl BlockageEvent {
    pub fn end_ms(&self) -> f64 {
        self.start_ms + self.duration_ms
    }

    pub fn active_at(&self, t_ms: f64) -> bool {
        self.start_ms <= t_ms && t_ms < self.end_ms()
    }
}

/// Draw events over `[0, horizon_ms)`: Poisson arrivals at `rate_per_s`,
/// durations uniform in `duration_range_ms`, blocker stations uniform in
/// `(0, reach]` so every event cuts the direct ray.
pub fn generate_events(
    horizon_ms: f64,
    rate_per_s: f64,
    duration_range_ms: (f64, f64),
    geom: &SiteGeometry,
    rng: &mut impl Rng,
) -> Result<Vec<BlockageEvent>, BlockageError> {
    if rate_per_s < 0.0 {
        return Err(BlockageError::InvalidParameters(format!(
            "rate must be non-negative, got {rate_per_s}"
        )));
    }
    let (lo, hi) = duration_range_ms;
    if !(0.0 < lo && lo <= hi && hi <= horizon_ms) {
        return Err(BlockageError::InvalidParameters(format!(
            "duration range ({lo}, {hi}) must lie within (0, horizon {horizon_ms}]"
        )));
    }
    let mut events = Vec::new();
    if rate_per_s == 0.0 {
        return Ok(events);
    }
    let reach = blocker_reach(geom, DEFAULT_BLOCKER_HEIGHT_M);
    let mut t_ms = 0.0;
    loop {
        // Exponential inter-arrival gap.
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        t_ms += -u.ln() / rate_per_s * 1000.0;
        if t_ms >= horizon_ms {
            return Ok(events);
        }
        let duration_ms = lo + (hi - lo) * rng.random::<f64>();
        // (0, reach]: flip the half-open unit draw so zero is excluded.
        let distance = (1.0 - rng.random::<f64>()) * reach;
        events.push(BlockageEvent {
            start_ms: t_ms,
            duration_ms,
            blocker: Blocker::standard(distance),
        });
    }
}

/// Blockers of every event covering instant `t_ms`.
pub fn active_blockers(events: &[BlockageEvent], t_ms: f64) -> Vec<Blocker> {
    events
        .iter()
        .filter(|e| e.active_at(t_ms))
        .map(|e| e.blocker)
        .collect()
}

/// Serialize events as one comma-separated line each:
/// `start_ms,duration_ms,height_m,distance_from_rx_m,azimuth_offset_m,width_m`.
pub fn export_events(events: &[BlockageEvent]) -> String {
    let mut out = String::from(
        "start_ms,duration_ms,height_m,distance_from_rx_m,azimuth_offset_m,width_m\n",
    );
    for e in events {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            e.start_ms,
            e.duration_ms,
            e.blocker.height_m,
            e.blocker.distance_from_rx_m,
            e.blocker.azimuth_offset_m,
            e.blocker.width_m
        ));
    }
    out
}

/// Parse a trace produced by [`export_events`].
pub fn import_events(text: &str) -> Result<Vec<BlockageEvent>, BlockageError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| BlockageError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        if fields.len() != 6 {
            return Err(BlockageError::Parse {
                line: i + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        events.push(BlockageEvent {
            start_ms: fields[0],
            duration_ms: fields[1],
            blocker: Blocker {
                height_m: fields[2],
                distance_from_rx_m: fields[3],
                azimuth_offset_m: fields[4],
                width_m: fields[5],
            },
        });
    }
    Ok(events)
}
