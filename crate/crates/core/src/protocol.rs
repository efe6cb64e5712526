//! The blockage-recovery state machine. Five modes: initial access (IA),
//! normal operation (N.Op), beam adaptation (BA), ground-reflection
//! discovery (GRD), and reflected-beam operation (RBO).
//!
//! `step` is a pure transition function: no clocks, no hidden state. Time
//! only enters through `Timer` events, so any trace replays exactly. The
//! discovery episode spends exactly three probes: downward elevation
//! neighbor, upward neighbor, confirmation on the winner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::{BeamId, Codebook};
use crate::channel::LinkSample;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("protocol corruption: unknown beam {0} in event")]
    UnknownBeam(BeamId),
}

/// Default margin above the noise floor below which the link counts as
/// blocked.
pub const DEFAULT_DETECTION_MARGIN_DB: f64 = 3.0;
/// Default hysteresis for declaring the direct path usable again.
pub const DEFAULT_REENTRY_HYSTERESIS_DB: f64 = 3.0;
/// How long to serve on the reflected beam before probing the direct path.
pub const DEFAULT_RBO_PERIOD_MS: u64 = 100;

/// Elevation search window for discovery: transmitter tilt plus half the
/// transmit elevation beamwidth.
pub fn grd_window_deg(tx_tilt_deg: f64, tx_el_beamwidth_deg: f64) -> f64 {
    tx_tilt_deg + tx_el_beamwidth_deg / 2.0
}

/// True when the latest sample sits at or below `noise_floor + margin`.
pub fn detect_blockage(recent: &[LinkSample], noise_floor_dbm: f64, margin_db: f64) -> bool {
    match recent.last() {
        Some(sample) => sample.rss_dbm <= noise_floor_dbm + margin_db,
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    InitialAccess,
    Normal,
    BeamAdapt,
    GrDiscovery,
    ReflectedOp,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::InitialAccess,
        Mode::Normal,
        Mode::BeamAdapt,
        Mode::GrDiscovery,
        Mode::ReflectedOp,
    ];
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::InitialAccess => "IA",
            Mode::Normal => "NOp",
            Mode::BeamAdapt => "BA",
            Mode::GrDiscovery => "GRD",
            Mode::ReflectedOp => "RBO",
        };
        write!(f, "{s}")
    }
}

/// Input to one transition.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolEvent {
    RssSample(LinkSample),
    BlockageDetected,
    Timer { elapsed_ms: u64 },
    AlignmentNeeded,
    LosRestored,
}

impl std::fmt::Display for ProtocolEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProtocolEvent::RssSample(s) => write!(f, "rss({:.2})", s.rss_dbm),
            ProtocolEvent::BlockageDetected => write!(f, "blockage_detected"),
            ProtocolEvent::Timer { elapsed_ms } => write!(f, "timer({elapsed_ms})"),
            ProtocolEvent::AlignmentNeeded => write!(f, "alignment_needed"),
            ProtocolEvent::LosRestored => write!(f, "los_restored"),
        }
    }
}

/// Radio command emitted by a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    SwitchRxBeam(BeamId),
    ProbeBeam(BeamId),
    ProbeLoS,
    StoreGrBeam(BeamId),
    RequestInitialAccess,
    Hold,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::SwitchRxBeam(b) => write!(f, "switch_rx({b})"),
            Action::ProbeBeam(b) => write!(f, "probe({b})"),
            Action::ProbeLoS => write!(f, "probe_los"),
            Action::StoreGrBeam(b) => write!(f, "store_gr({b})"),
            Action::RequestInitialAccess => write!(f, "request_initial_access"),
            Action::Hold => write!(f, "hold"),
        }
    }
}

/// Thresholds and timing the machine runs with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub noise_floor_dbm: f64,
    pub detection_margin_db: f64,
    pub reentry_hysteresis_db: f64,
    pub rbo_period_ms: u64,
    /// Elevation window for discovery, from [`grd_window_deg`].
    pub grd_window_deg: f64,
}

impl ProtocolConfig {
    pub fn new(noise_floor_dbm: f64, tx_tilt_deg: f64, tx_el_beamwidth_deg: f64) -> Self {
        ProtocolConfig {
            noise_floor_dbm,
            detection_margin_db: DEFAULT_DETECTION_MARGIN_DB,
            reentry_hysteresis_db: DEFAULT_REENTRY_HYSTERESIS_DB,
            rbo_period_ms: DEFAULT_RBO_PERIOD_MS,
            grd_window_deg: grd_window_deg(tx_tilt_deg, tx_el_beamwidth_deg),
        }
    }

    /// Link level below which a sample means the serving path is blocked.
    pub fn blockage_threshold_dbm(&self) -> f64 {
        self.noise_floor_dbm + self.detection_margin_db
    }
}

/// What the machine expects the next measurement to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    None,
    /// Probing discovery candidate `idx`.
    GrdProbe { idx: usize },
    /// Confirming the discovery winner.
    GrdConfirm { winner: BeamId },
    /// Waiting for the direct-path probe result while on the reflected beam.
    LosProbe,
    /// Probing azimuth neighbor `idx` during beam adaptation.
    BaProbe { idx: usize },
}

/// Full machine state. Serving beams name the direct-path pair; the
/// reflected beam, once discovered, is kept alongside and the radio is
/// steered between them by `SwitchRxBeam` commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolState {
    pub mode: Mode,
    pub serving_tx_beam: BeamId,
    pub serving_rx_beam: BeamId,
    pub gr_beam: Option<BeamId>,
    /// Confirmed strength on the reflected beam, dBm.
    pub gr_rss_dbm: Option<f64>,
    /// Probe results of the discovery episode in flight (at most 3).
    pub grd_progress: Vec<(BeamId, f64)>,
    /// Time left on the reflected beam before the next direct-path probe.
    pub rbo_timer_ms: u64,
    los_peak_dbm: f64,
    grd_refresh_due: bool,
    pending: Pending,
    grd_candidates: Vec<BeamId>,
    ba_candidates: Vec<BeamId>,
    ba_results: Vec<(BeamId, f64)>,
    last_serving_rss_dbm: f64,
}

impl ProtocolState {
    /// Fresh machine in initial access with the serving pair chosen by the
    /// attach procedure.
    pub fn new(serving_tx_beam: BeamId, serving_rx_beam: BeamId) -> Self {
        ProtocolState {
            mode: Mode::InitialAccess,
            serving_tx_beam,
            serving_rx_beam,
            gr_beam: None,
            gr_rss_dbm: None,
            grd_progress: Vec::new(),
            rbo_timer_ms: 0,
            los_peak_dbm: f64::NEG_INFINITY,
            grd_refresh_due: false,
            pending: Pending::None,
            grd_candidates: Vec::new(),
            ba_candidates: Vec::new(),
            ba_results: Vec::new(),
            last_serving_rss_dbm: f64::NEG_INFINITY,
        }
    }

    /// Direct-path level at which the machine leaves the reflected beam:
    /// within one hysteresis of the best level seen, and never below the
    /// blockage threshold plus hysteresis.
    pub fn reentry_threshold_dbm(&self, cfg: &ProtocolConfig) -> f64 {
        let guard = cfg.blockage_threshold_dbm() + cfg.reentry_hysteresis_db;
        (self.los_peak_dbm - cfg.reentry_hysteresis_db).max(guard)
    }

    /// The machine's self-checks, asserted by tests after every transition.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.mode == Mode::ReflectedOp && self.gr_beam.is_none() {
            return Err("reflected operation without a stored reflected beam".into());
        }
        if !self.grd_progress.is_empty() && self.mode != Mode::GrDiscovery {
            return Err(format!(
                "discovery progress outside discovery mode ({})",
                self.mode
            ));
        }
        if self.grd_progress.len() > 3 {
            return Err("more than three discovery measurements".into());
        }
        Ok(())
    }
}

/// First downward then first upward elevation neighbor of the serving
/// beam within the window.
fn discovery_candidates(cb: &Codebook, serving: BeamId, window_deg: f64) -> Vec<BeamId> {
    let Some(anchor) = cb.get(serving) else {
        return Vec::new();
    };
    let neighbors = cb.elevation_neighbors(serving, window_deg);
    let down = neighbors
        .iter()
        .find(|id| cb.get(**id).is_some_and(|b| b.elevation_deg < anchor.elevation_deg));
    let up = neighbors
        .iter()
        .find(|id| cb.get(**id).is_some_and(|b| b.elevation_deg > anchor.elevation_deg));
    down.into_iter().chain(up).copied().collect()
}

/// Nearest azimuth neighbors (left, then right) on the serving elevation row.
fn azimuth_neighbors(cb: &Codebook, serving: BeamId) -> Vec<BeamId> {
    let Some(anchor) = cb.get(serving) else {
        return Vec::new();
    };
    let mut left: Option<(f64, BeamId)> = None;
    let mut right: Option<(f64, BeamId)> = None;
    for (id, b) in cb.beams() {
        if b.elevation_deg != anchor.elevation_deg || id == serving {
            continue;
        }
        let delta = b.azimuth_deg - anchor.azimuth_deg;
        if delta < 0.0 && left.is_none_or(|(d, _)| -delta < d) {
            left = Some((-delta, id));
        }
        if delta > 0.0 && right.is_none_or(|(d, _)| delta < d) {
            right = Some((delta, id));
        }
    }
    left.into_iter()
        .chain(right)
        .map(|(_, id)| id)
        .collect()
}

/// Apply one event. Total over every (mode, event-kind) pair; pairs with
/// nothing to do return the state unchanged with a single `Hold`.
pub fn step(
    state: &ProtocolState,
    event: &ProtocolEvent,
    cb: &Codebook,
    cfg: &ProtocolConfig,
) -> Result<(ProtocolState, Vec<Action>), ProtocolError> {
    let mut next = state.clone();

    if let ProtocolEvent::RssSample(sample) = event {
        if !cb.contains(sample.rx_beam) {
            return Err(ProtocolError::UnknownBeam(sample.rx_beam));
        }
    }

    let actions = match (state.mode, event) {
        // -------------------------------------------------- initial access
        (Mode::InitialAccess, ProtocolEvent::RssSample(s)) => {
            // Attach complete: the sweep already picked the serving pair.
            next.mode = Mode::Normal;
            next.grd_refresh_due = true;
            next.last_serving_rss_dbm = s.rss_dbm;
            if s.rss_dbm > cfg.blockage_threshold_dbm() {
                next.los_peak_dbm = s.rss_dbm;
            }
            vec![Action::Hold]
        }
        (Mode::InitialAccess, _) => vec![Action::Hold],

        // ------------------------------------------------ normal operation
        (Mode::Normal, ProtocolEvent::RssSample(s)) => {
            next.last_serving_rss_dbm = s.rss_dbm;
            if s.rss_dbm > cfg.blockage_threshold_dbm() {
                next.los_peak_dbm = next.los_peak_dbm.max(s.rss_dbm);
            }
            if next.grd_refresh_due && s.rss_dbm > cfg.blockage_threshold_dbm() {
                let candidates =
                    discovery_candidates(cb, next.serving_rx_beam, cfg.grd_window_deg);
                if candidates.is_empty() {
                    // No elevation diversity: discovery impossible.
                    next.grd_refresh_due = false;
                    vec![Action::Hold]
                } else {
                    next.mode = Mode::GrDiscovery;
                    next.grd_candidates = candidates;
                    next.grd_progress.clear();
                    next.pending = Pending::GrdProbe { idx: 0 };
                    vec![Action::ProbeBeam(next.grd_candidates[0])]
                }
            } else {
                vec![Action::Hold]
            }
        }
        (Mode::Normal, ProtocolEvent::BlockageDetected) => blockage_reaction(&mut next, cfg),
        (Mode::Normal, ProtocolEvent::AlignmentNeeded) => {
            let candidates = azimuth_neighbors(cb, next.serving_rx_beam);
            if candidates.is_empty() {
                vec![Action::Hold]
            } else {
                next.mode = Mode::BeamAdapt;
                next.ba_candidates = candidates;
                next.ba_results.clear();
                next.pending = Pending::BaProbe { idx: 0 };
                vec![Action::ProbeBeam(next.ba_candidates[0])]
            }
        }
        (Mode::Normal, _) => vec![Action::Hold],

        // ----------------------------------------------- discovery episode
        (Mode::GrDiscovery, ProtocolEvent::RssSample(s)) => match next.pending {
            Pending::GrdProbe { idx } => match next.grd_candidates.get(idx).copied() {
                None => {
                    next.pending = Pending::None;
                    vec![Action::Hold]
                }
                Some(probed) => {
                    next.grd_progress.push((probed, s.rss_dbm));
                    if idx + 1 < next.grd_candidates.len() {
                        next.pending = Pending::GrdProbe { idx: idx + 1 };
                        vec![Action::ProbeBeam(next.grd_candidates[idx + 1])]
                    } else {
                        // Winner: highest probe; ties go to the earlier
                        // probe, i.e. the downward neighbor.
                        let winner = next
                            .grd_progress
                            .iter()
                            .fold(None::<(BeamId, f64)>, |best, &(id, rss)| match best {
                                Some((_, b)) if b >= rss => best,
                                _ => Some((id, rss)),
                            })
                            .map(|(id, _)| id)
                            .expect("at least one probe recorded");
                        next.pending = Pending::GrdConfirm { winner };
                        vec![Action::ProbeBeam(winner)]
                    }
                }
            },
            Pending::GrdConfirm { winner } => {
                next.mode = Mode::Normal;
                next.pending = Pending::None;
                next.grd_refresh_due = false;
                next.grd_progress.clear();
                next.grd_candidates.clear();
                if s.rss_dbm > cfg.blockage_threshold_dbm() {
                    next.gr_beam = Some(winner);
                    next.gr_rss_dbm = Some(s.rss_dbm);
                    vec![Action::StoreGrBeam(winner)]
                } else {
                    // Nothing arrived on the winner; leave the stored beam
                    // as it was.
                    vec![Action::Hold]
                }
            }
            _ => vec![Action::Hold],
        },
        (Mode::GrDiscovery, ProtocolEvent::BlockageDetected) => {
            next.grd_progress.clear();
            next.grd_candidates.clear();
            next.pending = Pending::None;
            blockage_reaction(&mut next, cfg)
        }
        (Mode::GrDiscovery, _) => vec![Action::Hold],

        // ------------------------------------------------- beam adaptation
        (Mode::BeamAdapt, ProtocolEvent::RssSample(s)) => match next.pending {
            Pending::BaProbe { idx } => {
                if let Some(&probed) = next.ba_candidates.get(idx) {
                    next.ba_results.push((probed, s.rss_dbm));
                }
                if idx + 1 < next.ba_candidates.len() {
                    next.pending = Pending::BaProbe { idx: idx + 1 };
                    vec![Action::ProbeBeam(next.ba_candidates[idx + 1])]
                } else {
                    let mut best = (next.serving_rx_beam, next.last_serving_rss_dbm);
                    for &(id, rss) in &next.ba_results {
                        if rss > best.1 {
                            best = (id, rss);
                        }
                    }
                    next.mode = Mode::Normal;
                    next.pending = Pending::None;
                    next.ba_candidates.clear();
                    next.ba_results.clear();
                    // A refreshed serving beam needs a refreshed reflected
                    // neighbor.
                    next.grd_refresh_due = true;
                    if best.0 != next.serving_rx_beam {
                        next.serving_rx_beam = best.0;
                        next.los_peak_dbm = best.1;
                        // The stored reflection points at the old azimuth;
                        // it is useless until the refresh re-finds it.
                        next.gr_beam = None;
                        next.gr_rss_dbm = None;
                        vec![Action::SwitchRxBeam(best.0)]
                    } else {
                        vec![Action::Hold]
                    }
                }
            }
            _ => vec![Action::Hold],
        },
        (Mode::BeamAdapt, ProtocolEvent::BlockageDetected) => {
            next.ba_candidates.clear();
            next.ba_results.clear();
            next.pending = Pending::None;
            blockage_reaction(&mut next, cfg)
        }
        (Mode::BeamAdapt, _) => vec![Action::Hold],

        // -------------------------------------------- reflected operation
        (Mode::ReflectedOp, ProtocolEvent::RssSample(s)) => match next.pending {
            Pending::LosProbe => {
                next.pending = Pending::None;
                if s.rss_dbm >= next.reentry_threshold_dbm(cfg) {
                    next.mode = Mode::Normal;
                    next.rbo_timer_ms = 0;
                    vec![Action::SwitchRxBeam(next.serving_rx_beam)]
                } else {
                    // Still obstructed: keep serving on the reflection.
                    next.rbo_timer_ms = cfg.rbo_period_ms;
                    vec![Action::Hold]
                }
            }
            _ => {
                // Serving sample on the reflected beam.
                next.last_serving_rss_dbm = s.rss_dbm;
                vec![Action::Hold]
            }
        },
        (Mode::ReflectedOp, ProtocolEvent::Timer { elapsed_ms }) => {
            next.rbo_timer_ms = next.rbo_timer_ms.saturating_sub(*elapsed_ms);
            if next.rbo_timer_ms == 0 {
                next.rbo_timer_ms = cfg.rbo_period_ms;
                next.pending = Pending::LosProbe;
                vec![Action::ProbeLoS]
            } else {
                vec![Action::Hold]
            }
        }
        (Mode::ReflectedOp, ProtocolEvent::LosRestored) => {
            next.mode = Mode::Normal;
            next.pending = Pending::None;
            next.rbo_timer_ms = 0;
            vec![Action::SwitchRxBeam(next.serving_rx_beam)]
        }
        (Mode::ReflectedOp, _) => vec![Action::Hold],
    };

    Ok((next, actions))
}

/// Shared reaction to a detected blockage: drop to the stored reflected
/// beam, or fall back to re-acquisition when none exists.
fn blockage_reaction(next: &mut ProtocolState, cfg: &ProtocolConfig) -> Vec<Action> {
    match next.gr_beam {
        Some(gr) => {
            next.mode = Mode::ReflectedOp;
            next.rbo_timer_ms = cfg.rbo_period_ms;
            next.pending = Pending::None;
            vec![Action::SwitchRxBeam(gr)]
        }
        None => {
            next.mode = Mode::InitialAccess;
            next.pending = Pending::None;
            vec![Action::RequestInitialAccess]
        }
    }
}
