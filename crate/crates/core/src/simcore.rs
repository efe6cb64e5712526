//! Deterministic tick-driven simulation binding geometry, channel,
//! blockage, and a recovery policy. One measurement opportunity per tick;
//! outage accrues per tick from the *post-action* serving configuration,
//! so probing slots do not interrupt service but an unrecovered link does.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::{Beam, BeamId, Codebook};
use crate::baselines::{
    handover_outage_ms, AccessModel, Policy, PolicyReport,
};
use crate::blockage::{active_blockers, generate_events, BlockageError, BlockageEvent};
use crate::channel::{
    measure, rss_dbm, CalibrationReport, LinkBudget, LinkSample, SurfaceKind, SurfaceProfile,
};
use crate::geometry::{ground_reflection_path, los_path, Blocker, PathKind, RayPath, SiteGeometry};
use crate::protocol::{
    detect_blockage, grd_window_deg, step, Action, Mode, ProtocolConfig, ProtocolEvent,
    ProtocolState,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("calibration missing: {0}; run `groundwave calibrate` first")]
    CalibrationMissing(String),
    #[error("codebook mismatch: {0}")]
    CodebookMismatch(String),
    #[error(transparent)]
    Blockage(#[from] BlockageError),
}

pub const DEFAULT_PROBE_INTERVAL_MS: u64 = 10;
pub const DEFAULT_HORIZON_MS: u64 = 60_000;

/// Everything one run needs, aggregated into a single reproducible unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geom: SiteGeometry,
    pub surface: SurfaceProfile,
    pub budget: LinkBudget,
    pub tx_codebook: Codebook,
    pub rx_codebook: Codebook,
    pub blockage_rate_per_s: f64,
    pub blockage_duration_range_ms: (f64, f64),
    pub policy: Policy,
    pub horizon_ms: u64,
    pub probe_interval_ms: u64,
    pub noise_sigma_db: f64,
    pub seed: u64,
    pub access: AccessModel,
    pub protocol: ProtocolConfig,
}

impl Scenario {
    /// Reference deployment: 2.5 m / 1 m masts 6 m apart, transmitter
    /// tilted 20 degrees, 25-beam 120-degree fans (three receive elevation
    /// rows), calibrated against the bundled measurement targets.
    pub fn reference(
        report: &CalibrationReport,
        surface_kind: SurfaceKind,
        policy: Policy,
        seed: u64,
    ) -> Result<Scenario, SimError> {
        let tilt_deg = 20.0;
        let geom = SiteGeometry::new(2.5, 1.0, 6.0, tilt_deg)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let tx_codebook =
            crate::antenna::build_codebook(25, 120.0, 18.0, &[-tilt_deg], 60.0, 17.0)
                .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let rx_codebook =
            crate::antenna::build_codebook(25, 120.0, 18.0, &[-30.0, 0.0, 30.0], 60.0, 17.0)
                .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let surface = report.surface_profile(surface_kind).ok_or_else(|| {
            SimError::CalibrationMissing(format!("no reflection loss for {surface_kind}"))
        })?;
        let budget = LinkBudget {
            system_loss_db: report.system_loss_db,
            ..LinkBudget::reference_uncalibrated()
        };
        Ok(Scenario {
            geom,
            surface,
            budget,
            tx_codebook,
            rx_codebook,
            blockage_rate_per_s: crate::blockage::DEFAULT_RATE_PER_S,
            blockage_duration_range_ms: crate::blockage::DEFAULT_DURATION_RANGE_MS,
            policy,
            horizon_ms: DEFAULT_HORIZON_MS,
            probe_interval_ms: DEFAULT_PROBE_INTERVAL_MS,
            noise_sigma_db: crate::channel::DEFAULT_NOISE_SIGMA_DB,
            seed,
            access: AccessModel::reference(),
            protocol: ProtocolConfig::new(
                crate::channel::DEFAULT_NOISE_FLOOR_DBM,
                tilt_deg,
                60.0,
            ),
        })
    }

    /// Re-aim the deployment at a different downward tilt: geometry,
    /// transmit fan, and discovery window move together.
    pub fn with_tilt(&self, tilt_deg: f64) -> Result<Scenario, SimError> {
        let geom = SiteGeometry::new(
            self.geom.tx_height_m(),
            self.geom.rx_height_m(),
            self.geom.separation_m(),
            tilt_deg,
        )
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let template = self
            .tx_codebook
            .beams()
            .next()
            .map(|(_, b)| *b)
            .ok_or_else(|| SimError::CodebookMismatch("empty transmit codebook".into()))?;
        let (start, end) = self.tx_codebook.sector_deg();
        let tx_codebook = crate::antenna::build_codebook(
            self.tx_codebook.n_az(),
            end - start,
            template.az_beamwidth_deg,
            &[-tilt_deg],
            template.el_beamwidth_deg,
            template.peak_gain_db,
        )
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let mut protocol = self.protocol;
        protocol.grd_window_deg = grd_window_deg(tilt_deg, template.el_beamwidth_deg);
        Ok(Scenario {
            geom,
            tx_codebook,
            protocol,
            ..self.clone()
        })
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.probe_interval_ms == 0 {
            return Err(SimError::InvalidScenario("probe interval must be positive".into()));
        }
        if self.horizon_ms < self.probe_interval_ms {
            return Err(SimError::InvalidScenario(format!(
                "horizon {} ms shorter than probe interval {} ms",
                self.horizon_ms, self.probe_interval_ms
            )));
        }
        if self.tx_codebook.is_empty() || self.rx_codebook.is_empty() {
            return Err(SimError::CodebookMismatch("empty codebook".into()));
        }
        if !self.budget.system_loss_db.is_finite() {
            return Err(SimError::CalibrationMissing("system loss not set".into()));
        }
        if !self.surface.reflection_loss_db.is_finite() || self.surface.reflection_loss_db < 0.0 {
            return Err(SimError::CalibrationMissing(format!(
                "reflection loss not set for {}",
                self.surface.kind
            )));
        }
        Ok(())
    }
}

/// One trace row: the tick's measured level and the mode in force after
/// the tick's transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time_ms: u64,
    pub rss_dbm: f64,
    pub mode: Mode,
}

/// One recorded state transition, for conformance diffing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub time_ms: u64,
    pub mode_before: Mode,
    pub event: String,
    pub mode_after: Mode,
    pub actions: String,
}

/// Everything a run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub policy: Policy,
    pub seed: u64,
    pub horizon_ms: u64,
    pub n_blockage_events: u32,
    /// Events the link rode out without ever dropping below the blockage
    /// threshold (post-action serving level, every observed tick).
    pub n_events_survived: u32,
    pub total_outage_ms: u64,
    pub measurements_total: u64,
    pub discovery_measurements_per_episode: u32,
    /// None when no tick fell inside a blockage interval.
    pub mean_rss_during_blockage_dbm: Option<f64>,
    /// Service-restoration delay per triggering event (events that began
    /// while the link was already down inherit the ongoing recovery and are
    /// not re-counted).
    pub recovery_latency_ms: Vec<u64>,
    /// Delay from the end of each blocked interval back to normal
    /// operation (reflected-beam policy only).
    pub reentry_latency_ms: Vec<u64>,
    pub rss_trace: Vec<TracePoint>,
    pub transitions: Vec<TransitionRecord>,
    /// Set when the policy could not arm itself (e.g. no elevation
    /// diversity for discovery).
    pub note: Option<String>,
}

// ---------------------------------------------------------------------------
// Radio: the measurement front-end shared by all policies
// ---------------------------------------------------------------------------

struct Radio<'a> {
    scenario: &'a Scenario,
    los: RayPath,
    gr: RayPath,
    rng: ChaCha8Rng,
    measurements: u64,
}

impl<'a> Radio<'a> {
    fn new(scenario: &'a Scenario, noise_seed: u64) -> Radio<'a> {
        Radio {
            scenario,
            los: los_path(&scenario.geom),
            gr: ground_reflection_path(&scenario.geom),
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
            measurements: 0,
        }
    }

    fn path(&self, kind: PathKind) -> &RayPath {
        match kind {
            PathKind::LineOfSight => &self.los,
            PathKind::GroundReflection => &self.gr,
        }
    }

    fn tx_beam(&self, id: BeamId) -> &Beam {
        self.scenario.tx_codebook.get(id).expect("tx beam exists")
    }

    fn rx_beam(&self, id: BeamId) -> &Beam {
        self.scenario.rx_codebook.get(id).expect("rx beam exists")
    }

    /// Noiseless per-path level for the given pair.
    fn clean_rss(&self, tx: BeamId, rx: BeamId, kind: PathKind, blockers: &[Blocker]) -> f64 {
        rss_dbm(
            &self.scenario.budget,
            &self.scenario.geom,
            &self.scenario.surface,
            self.tx_beam(tx),
            self.rx_beam(rx),
            self.path(kind),
            blockers,
        )
    }

    /// Noiseless best-path level: whichever of the two rays the beam pair
    /// hears louder.
    fn clean_best_rss(&self, tx: BeamId, rx: BeamId, blockers: &[Blocker]) -> f64 {
        self.clean_rss(tx, rx, PathKind::LineOfSight, blockers)
            .max(self.clean_rss(tx, rx, PathKind::GroundReflection, blockers))
    }

    /// One noisy per-path measurement opportunity.
    fn measure_path(
        &mut self,
        tx: BeamId,
        rx: BeamId,
        kind: PathKind,
        blockers: &[Blocker],
        t: u64,
    ) -> LinkSample {
        self.measurements += 1;
        let tx_beam = *self.scenario.tx_codebook.get(tx).expect("tx beam exists");
        let rx_beam = *self.scenario.rx_codebook.get(rx).expect("rx beam exists");
        let path = *self.path(kind);
        measure(
            &self.scenario.budget,
            &self.scenario.geom,
            &self.scenario.surface,
            (tx, &tx_beam),
            (rx, &rx_beam),
            &path,
            blockers,
            self.scenario.noise_sigma_db,
            &mut self.rng,
            t,
        )
    }

    /// One noisy best-path measurement opportunity (scanners do not know
    /// which ray a beam will catch).
    fn measure_best(&mut self, tx: BeamId, rx: BeamId, blockers: &[Blocker], t: u64) -> LinkSample {
        self.measurements += 1;
        let clean = self.clean_best_rss(tx, rx, blockers);
        let noisy = if self.scenario.noise_sigma_db > 0.0 {
            clean + self.scenario.noise_sigma_db * crate::channel::standard_gaussian(&mut self.rng)
        } else {
            clean
        };
        let blocked_los = {
            let los = self.los;
            blockers
                .iter()
                .any(|b| crate::geometry::is_blocked(&self.scenario.geom, &los, b))
        };
        LinkSample {
            time_ms: t,
            tx_beam: tx,
            rx_beam: rx,
            rss_dbm: noisy.max(self.scenario.budget.noise_floor_dbm),
            blocked_los,
        }
    }
}

/// What a tick leaves in force: the noiseless level of the configuration
/// actually serving traffic (floor while re-acquiring), the mode, and the
/// level the tick's measurement returned.
#[derive(Debug, Clone, Copy)]
struct TickOutcome {
    serving_clean_dbm: f64,
    mode: Mode,
    trace_rss_dbm: f64,
}

trait PolicyDriver {
    fn tick(&mut self, t: u64, radio: &mut Radio<'_>, blockers: &[Blocker]) -> TickOutcome;
    fn discovery_per_episode(&self) -> u32;
    fn take_transitions(&mut self) -> Vec<TransitionRecord>;
    fn note(&self) -> Option<String> {
        None
    }
}

// ---------------------------------------------------------------------------
// Reflected-beam policy: drives the protocol state machine
// ---------------------------------------------------------------------------

struct GrDriver {
    state: ProtocolState,
    cfg: ProtocolConfig,
    probe_queue: VecDeque<(BeamId, PathKind)>,
    reacquire_until: Option<u64>,
    transitions: Vec<TransitionRecord>,
    grd_probes_current: u32,
    grd_probes_per_episode: Vec<u32>,
    discovery_impossible: bool,
    serving_tx: BeamId,
    serving_rx_initial: BeamId,
}

impl GrDriver {
    fn new(scenario: &Scenario, serving_tx: BeamId, serving_rx: BeamId) -> GrDriver {
        GrDriver {
            state: ProtocolState::new(serving_tx, serving_rx),
            cfg: scenario.protocol,
            probe_queue: VecDeque::new(),
            reacquire_until: None,
            transitions: Vec::new(),
            grd_probes_current: 0,
            grd_probes_per_episode: Vec::new(),
            discovery_impossible: scenario
                .rx_codebook
                .elevation_neighbors(serving_rx, scenario.protocol.grd_window_deg)
                .is_empty(),
            serving_tx,
            serving_rx_initial: serving_rx,
        }
    }

    fn feed(&mut self, event: ProtocolEvent, cb: &Codebook, t: u64, access: &AccessModel) {
        let before = self.state.mode;
        let (next, actions) = step(&self.state, &event, cb, &self.cfg)
            .expect("simulation feeds only codebook beams");
        let after = next.mode;
        self.transitions.push(TransitionRecord {
            time_ms: t,
            mode_before: before,
            event: event.to_string(),
            mode_after: after,
            actions: actions
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        });
        for action in &actions {
            match action {
                Action::ProbeBeam(b) => {
                    let path = if after == Mode::GrDiscovery {
                        PathKind::GroundReflection
                    } else {
                        PathKind::LineOfSight
                    };
                    self.probe_queue.push_back((*b, path));
                    if after == Mode::GrDiscovery || before == Mode::GrDiscovery {
                        self.grd_probes_current += 1;
                    }
                }
                Action::ProbeLoS => {
                    self.probe_queue
                        .push_back((next.serving_rx_beam, PathKind::LineOfSight));
                }
                Action::StoreGrBeam(_) => {
                    self.grd_probes_per_episode.push(self.grd_probes_current);
                    self.grd_probes_current = 0;
                }
                Action::RequestInitialAccess => {
                    self.reacquire_until = Some(
                        t + crate::baselines::worst_case_discovery_latency_ms(access)
                            + access.attach_overhead_ms,
                    );
                }
                Action::SwitchRxBeam(_) | Action::Hold => {}
            }
        }
        // An aborted discovery episode also closes its probe count.
        if before == Mode::GrDiscovery && after != Mode::GrDiscovery && self.grd_probes_current > 0
        {
            self.grd_probes_per_episode.push(self.grd_probes_current);
            self.grd_probes_current = 0;
        }
        self.state = next;
    }
}

impl PolicyDriver for GrDriver {
    fn tick(&mut self, t: u64, radio: &mut Radio<'_>, blockers: &[Blocker]) -> TickOutcome {
        let scenario = radio.scenario;
        let floor = scenario.budget.noise_floor_dbm;

        if let Some(until) = self.reacquire_until {
            if t < until {
                return TickOutcome {
                    serving_clean_dbm: floor,
                    mode: Mode::InitialAccess,
                    trace_rss_dbm: floor,
                };
            }
            // Re-attached as a new user: fresh machine, stored beam lost.
            self.reacquire_until = None;
            self.state = ProtocolState::new(self.serving_tx, self.serving_rx_initial);
            self.probe_queue.clear();
            radio.measurements += scenario.access.n_sweep_beams as u64;
        }

        let task = self.probe_queue.pop_front();
        let (rx, path, is_serving_sample) = match task {
            Some((beam, path)) => (beam, path, false),
            None => match self.state.mode {
                Mode::ReflectedOp => (
                    self.state.gr_beam.expect("reflected mode keeps a beam"),
                    PathKind::GroundReflection,
                    true,
                ),
                _ => (self.state.serving_rx_beam, PathKind::LineOfSight, true),
            },
        };
        let sample = radio.measure_path(self.serving_tx, rx, path, blockers, t);
        let rss = sample.rss_dbm;

        self.feed(
            ProtocolEvent::RssSample(sample),
            &scenario.rx_codebook,
            t,
            &scenario.access,
        );
        if is_serving_sample
            && self.state.mode == Mode::Normal
            && detect_blockage(&[sample], floor, self.cfg.detection_margin_db)
        {
            self.feed(
                ProtocolEvent::BlockageDetected,
                &scenario.rx_codebook,
                t,
                &scenario.access,
            );
        }
        if self.state.mode == Mode::ReflectedOp {
            self.feed(
                ProtocolEvent::Timer {
                    elapsed_ms: scenario.probe_interval_ms,
                },
                &scenario.rx_codebook,
                t,
                &scenario.access,
            );
        }

        let serving_clean_dbm = if self.reacquire_until.is_some() {
            floor
        } else {
            match self.state.mode {
                Mode::ReflectedOp => self
                    .state
                    .gr_beam
                    .map(|gr| {
                        radio.clean_rss(self.serving_tx, gr, PathKind::GroundReflection, blockers)
                    })
                    .unwrap_or(floor),
                _ => radio.clean_rss(
                    self.serving_tx,
                    self.state.serving_rx_beam,
                    PathKind::LineOfSight,
                    blockers,
                ),
            }
        };
        TickOutcome {
            serving_clean_dbm,
            mode: self.state.mode,
            trace_rss_dbm: rss,
        }
    }

    fn discovery_per_episode(&self) -> u32 {
        self.grd_probes_per_episode.iter().copied().max().unwrap_or(0)
    }

    fn take_transitions(&mut self) -> Vec<TransitionRecord> {
        std::mem::take(&mut self.transitions)
    }

    fn note(&self) -> Option<String> {
        if self.discovery_impossible {
            Some("GRD impossible: no elevation diversity".into())
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Scanning baselines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScanPhase {
    Serving,
    Scanning { idx: usize },
    Recovered { beam: BeamId, path: PathKind, timer_ms: u64, probing: bool },
}

/// Exhaustive azimuth-sector scan at every blockage (on-line search), or,
/// with `scan_up_front`, one scan at attach whose result an offline model
/// replays instantly (count-only stand-in for model-based prediction).
struct ScanDriver {
    phase: ScanPhase,
    serving_tx: BeamId,
    serving_rx: BeamId,
    row_ids: Vec<BeamId>,
    best: Option<(BeamId, f64)>,
    los_peak_dbm: f64,
    scan_up_front: bool,
    model_beam: Option<BeamId>,
}

impl ScanDriver {
    fn new(
        scenario: &Scenario,
        serving_tx: BeamId,
        serving_rx: BeamId,
        scan_up_front: bool,
    ) -> ScanDriver {
        let serving_row = scenario
            .rx_codebook
            .get(serving_rx)
            .expect("serving beam exists")
            .elevation_deg;
        ScanDriver {
            phase: ScanPhase::Serving,
            serving_tx,
            serving_rx,
            row_ids: scenario.rx_codebook.row_beam_ids(serving_row),
            best: None,
            los_peak_dbm: f64::NEG_INFINITY,
            scan_up_front,
            model_beam: None,
        }
    }

    fn reentry_threshold(&self, scenario: &Scenario) -> f64 {
        let cfg = &scenario.protocol;
        let guard = cfg.blockage_threshold_dbm() + cfg.reentry_hysteresis_db;
        (self.los_peak_dbm - cfg.reentry_hysteresis_db).max(guard)
    }
}

impl ScanDriver {
    /// Lock the receiver onto whichever ray the chosen beam hears louder.
    fn lock_path(&self, radio: &Radio<'_>, beam: BeamId, blockers: &[Blocker]) -> PathKind {
        let los = radio.clean_rss(self.serving_tx, beam, PathKind::LineOfSight, blockers);
        let gr = radio.clean_rss(self.serving_tx, beam, PathKind::GroundReflection, blockers);
        if gr > los {
            PathKind::GroundReflection
        } else {
            PathKind::LineOfSight
        }
    }
}

impl PolicyDriver for ScanDriver {
    fn tick(&mut self, t: u64, radio: &mut Radio<'_>, blockers: &[Blocker]) -> TickOutcome {
        let scenario = radio.scenario;
        let threshold = scenario.protocol.blockage_threshold_dbm();

        if t == 0 && self.scan_up_front {
            // The one-time scan the offline model is built from: the
            // reflected component each row beam would hold.
            let mut best: Option<(BeamId, f64)> = None;
            for &id in &self.row_ids {
                radio.measurements += 1;
                let rss =
                    radio.clean_rss(self.serving_tx, id, PathKind::GroundReflection, &[]);
                best = match best {
                    Some((_, b)) if b >= rss => best,
                    _ => Some((id, rss)),
                };
            }
            self.model_beam = best.map(|(id, _)| id);
        }

        let dt = scenario.probe_interval_ms;
        let trace_rss;
        match self.phase {
            ScanPhase::Serving => {
                let sample = radio.measure_path(
                    self.serving_tx,
                    self.serving_rx,
                    PathKind::LineOfSight,
                    blockers,
                    t,
                );
                trace_rss = sample.rss_dbm;
                if sample.rss_dbm > threshold {
                    self.los_peak_dbm = self.los_peak_dbm.max(sample.rss_dbm);
                } else if self.scan_up_front {
                    // The model already knows the backup beam.
                    if let Some(beam) = self.model_beam {
                        self.phase = ScanPhase::Recovered {
                            beam,
                            path: self.lock_path(radio, beam, blockers),
                            timer_ms: scenario.protocol.rbo_period_ms,
                            probing: false,
                        };
                    }
                } else {
                    self.best = None;
                    self.phase = ScanPhase::Scanning { idx: 0 };
                }
            }
            ScanPhase::Scanning { idx } => {
                let id = self.row_ids[idx];
                let sample = radio.measure_best(self.serving_tx, id, blockers, t);
                trace_rss = sample.rss_dbm;
                self.best = match self.best {
                    Some((_, b)) if b >= sample.rss_dbm => self.best,
                    _ => Some((id, sample.rss_dbm)),
                };
                if idx + 1 < self.row_ids.len() {
                    self.phase = ScanPhase::Scanning { idx: idx + 1 };
                } else {
                    let (beam, _) = self.best.expect("scan measured at least one beam");
                    self.phase = ScanPhase::Recovered {
                        beam,
                        path: self.lock_path(radio, beam, blockers),
                        timer_ms: scenario.protocol.rbo_period_ms,
                        probing: false,
                    };
                }
            }
            ScanPhase::Recovered { beam, path, timer_ms, probing } => {
                if probing {
                    let sample = radio.measure_path(
                        self.serving_tx,
                        self.serving_rx,
                        PathKind::LineOfSight,
                        blockers,
                        t,
                    );
                    trace_rss = sample.rss_dbm;
                    if sample.rss_dbm >= self.reentry_threshold(scenario) {
                        self.phase = ScanPhase::Serving;
                    } else {
                        self.phase = ScanPhase::Recovered {
                            beam,
                            path,
                            timer_ms: scenario.protocol.rbo_period_ms,
                            probing: false,
                        };
                    }
                } else {
                    let sample = radio.measure_path(self.serving_tx, beam, path, blockers, t);
                    trace_rss = sample.rss_dbm;
                    let left = timer_ms.saturating_sub(dt);
                    self.phase = ScanPhase::Recovered {
                        beam,
                        path,
                        timer_ms: if left == 0 {
                            scenario.protocol.rbo_period_ms
                        } else {
                            left
                        },
                        probing: left == 0,
                    };
                }
            }
        }

        let serving_clean_dbm = match self.phase {
            ScanPhase::Recovered { beam, path, .. } => {
                radio.clean_rss(self.serving_tx, beam, path, blockers)
            }
            _ => radio.clean_rss(
                self.serving_tx,
                self.serving_rx,
                PathKind::LineOfSight,
                blockers,
            ),
        };
        TickOutcome {
            serving_clean_dbm,
            mode: match self.phase {
                ScanPhase::Serving => Mode::Normal,
                ScanPhase::Scanning { .. } => Mode::BeamAdapt,
                ScanPhase::Recovered { .. } => Mode::ReflectedOp,
            },
            trace_rss_dbm: trace_rss,
        }
    }

    fn discovery_per_episode(&self) -> u32 {
        self.row_ids.len() as u32
    }

    fn take_transitions(&mut self) -> Vec<TransitionRecord> {
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// Handover baseline
// ---------------------------------------------------------------------------

struct HandoverDriver {
    serving_tx: BeamId,
    serving_rx: BeamId,
    dead_until: Option<u64>,
    n_sweep_beams: u32,
}

impl PolicyDriver for HandoverDriver {
    fn tick(&mut self, t: u64, radio: &mut Radio<'_>, blockers: &[Blocker]) -> TickOutcome {
        let scenario = radio.scenario;
        let floor = scenario.budget.noise_floor_dbm;

        if let Some(until) = self.dead_until {
            if t < until {
                return TickOutcome {
                    serving_clean_dbm: floor,
                    mode: Mode::InitialAccess,
                    trace_rss_dbm: floor,
                };
            }
            self.dead_until = None;
        }

        let sample =
            radio.measure_path(self.serving_tx, self.serving_rx, PathKind::LineOfSight, blockers, t);
        if sample.rss_dbm <= scenario.protocol.blockage_threshold_dbm() {
            // Lost: full re-acquisition sweep plus attach, regardless of
            // when the blocker walks on.
            radio.measurements += scenario.access.n_sweep_beams as u64;
            self.dead_until = Some(
                t + crate::baselines::worst_case_discovery_latency_ms(&scenario.access)
                    + scenario.access.attach_overhead_ms,
            );
            return TickOutcome {
                serving_clean_dbm: floor,
                mode: Mode::InitialAccess,
                trace_rss_dbm: sample.rss_dbm,
            };
        }
        TickOutcome {
            serving_clean_dbm: radio.clean_rss(
                self.serving_tx,
                self.serving_rx,
                PathKind::LineOfSight,
                blockers,
            ),
            mode: Mode::Normal,
            trace_rss_dbm: sample.rss_dbm,
        }
    }

    fn discovery_per_episode(&self) -> u32 {
        self.n_sweep_beams
    }

    fn take_transitions(&mut self) -> Vec<TransitionRecord> {
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// The run loop
// ---------------------------------------------------------------------------

/// Attach: the strongest direct-path beam pair, ties to the lowest indices.
fn attach_beams(scenario: &Scenario) -> (BeamId, BeamId) {
    let los = los_path(&scenario.geom);
    let mut best: Option<(f64, BeamId, BeamId)> = None;
    for (tx_id, tx_beam) in scenario.tx_codebook.beams() {
        for (rx_id, rx_beam) in scenario.rx_codebook.beams() {
            let rss = rss_dbm(
                &scenario.budget,
                &scenario.geom,
                &scenario.surface,
                tx_beam,
                rx_beam,
                &los,
                &[],
            );
            if best.is_none_or(|(b, _, _)| rss > b) {
                best = Some((rss, tx_id, rx_id));
            }
        }
    }
    let (_, tx, rx) = best.expect("non-empty codebooks");
    (tx, rx)
}

fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run a scenario, generating its blockage trace from the scenario seed.
pub fn run(scenario: &Scenario) -> Result<RunMetrics, SimError> {
    scenario.validate()?;
    let mut event_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let events = generate_events(
        scenario.horizon_ms as f64,
        scenario.blockage_rate_per_s,
        scenario.blockage_duration_range_ms,
        &scenario.geom,
        &mut event_rng,
    )?;
    run_with_events(scenario, &events)
}

/// Run a scenario against a fixed (replayed) blockage trace.
pub fn run_with_events(
    scenario: &Scenario,
    events: &[BlockageEvent],
) -> Result<RunMetrics, SimError> {
    scenario.validate()?;
    let (serving_tx, serving_rx) = attach_beams(scenario);

    let mut driver: Box<dyn PolicyDriver> = match scenario.policy {
        Policy::GroundReflection => Box::new(GrDriver::new(scenario, serving_tx, serving_rx)),
        Policy::ExhaustiveScan => {
            Box::new(ScanDriver::new(scenario, serving_tx, serving_rx, false))
        }
        Policy::ScanPlusModel => Box::new(ScanDriver::new(scenario, serving_tx, serving_rx, true)),
        Policy::Handover => Box::new(HandoverDriver {
            serving_tx,
            serving_rx,
            dead_until: None,
            n_sweep_beams: scenario.access.n_sweep_beams,
        }),
    };

    let mut radio = Radio::new(scenario, derive_seed(scenario.seed, 1));
    let threshold = scenario.protocol.blockage_threshold_dbm();
    let dt = scenario.probe_interval_ms;

    let mut event_failed = vec![false; events.len()];
    let mut total_outage_ms = 0u64;
    let mut blockage_rss_sum = 0.0f64;
    let mut blockage_ticks = 0u64;
    let mut trace = Vec::with_capacity((scenario.horizon_ms / dt) as usize);

    // Recovery bookkeeping: events that began while the link was still up
    // get a restoration latency; the rest ride an ongoing recovery.
    let mut link_ok_prev = true;
    let mut pending_recovery: Vec<(usize, u64)> = Vec::new(); // (event idx, start tick)
    let mut recovery_latency_ms: Vec<u64> = Vec::new();
    let mut started = vec![false; events.len()];

    // Re-entry bookkeeping over merged blocked intervals.
    let mut blocked_prev = false;
    let mut reentry_wait_from: Option<u64> = None;
    let mut reentry_latency_ms: Vec<u64> = Vec::new();

    let mut t = 0u64;
    while t < scenario.horizon_ms {
        let blockers = active_blockers(events, t as f64);
        let outcome = driver.tick(t, &mut radio, &blockers);

        let serving_clean = outcome.serving_clean_dbm;
        let link_ok = serving_clean >= threshold;

        if !link_ok {
            total_outage_ms += dt;
        }

        let any_active = !blockers.is_empty();
        if any_active {
            blockage_rss_sum += serving_clean;
            blockage_ticks += 1;
            for (idx, e) in events.iter().enumerate() {
                if e.active_at(t as f64) && !link_ok {
                    event_failed[idx] = true;
                }
            }
        }

        // New events that started since the previous tick.
        for (idx, e) in events.iter().enumerate() {
            if !started[idx] && e.start_ms <= t as f64 {
                started[idx] = true;
                if link_ok_prev {
                    pending_recovery.push((idx, t));
                }
            }
        }
        if link_ok {
            for (_, start_tick) in pending_recovery.drain(..) {
                recovery_latency_ms.push(t - start_tick);
            }
        }

        // Merged blocked intervals for re-entry latency.
        if blocked_prev && !any_active && reentry_wait_from.is_none() {
            reentry_wait_from = Some(t);
        }
        if let Some(from) = reentry_wait_from {
            if outcome.mode == Mode::Normal {
                reentry_latency_ms.push(t - from);
                reentry_wait_from = None;
            }
        }
        blocked_prev = any_active;

        trace.push(TracePoint {
            time_ms: t,
            rss_dbm: outcome.trace_rss_dbm,
            mode: outcome.mode,
        });

        link_ok_prev = link_ok;
        t += dt;
    }

    let n_events = events.len() as u32;
    let metrics = RunMetrics {
        policy: scenario.policy,
        seed: scenario.seed,
        horizon_ms: scenario.horizon_ms,
        n_blockage_events: n_events,
        n_events_survived: event_failed.iter().filter(|f| !**f).count() as u32,
        total_outage_ms,
        measurements_total: radio.measurements,
        discovery_measurements_per_episode: driver.discovery_per_episode(),
        mean_rss_during_blockage_dbm: if blockage_ticks > 0 {
            Some(blockage_rss_sum / blockage_ticks as f64)
        } else {
            None
        },
        recovery_latency_ms,
        reentry_latency_ms,
        rss_trace: trace,
        transitions: driver.take_transitions(),
        note: driver.note(),
    };
    debug_assert!(metrics.n_events_survived <= metrics.n_blockage_events);
    debug_assert!(metrics.total_outage_ms <= metrics.horizon_ms);
    Ok(metrics)
}

/// Parameter grid for [`sweep`]; empty axes keep the base value.
#[derive(Debug, Clone, Default)]
pub struct SweepGrid {
    pub tilts_deg: Vec<f64>,
    pub policies: Vec<Policy>,
    /// Number of seed replicas per point; 0 or 1 keeps the base seed only.
    pub n_seed_replicas: usize,
}

/// Cartesian runs over the grid. Replica 0 keeps the base seed, later
/// replicas derive theirs from (base seed, replica index), so a grid of
/// size one reproduces `run(base)` exactly and results do not depend on
/// execution order.
pub fn sweep(base: &Scenario, grid: &SweepGrid) -> Result<Vec<(Scenario, RunMetrics)>, SimError> {
    let tilts = if grid.tilts_deg.is_empty() {
        vec![base.geom.tx_tilt_deg()]
    } else {
        grid.tilts_deg.clone()
    };
    let policies = if grid.policies.is_empty() {
        vec![base.policy]
    } else {
        grid.policies.clone()
    };
    let replicas = grid.n_seed_replicas.max(1);

    let mut results = Vec::new();
    for &tilt in &tilts {
        for &policy in &policies {
            for replica in 0..replicas {
                let mut scenario = base.with_tilt(tilt)?;
                scenario.policy = policy;
                scenario.seed = if replica == 0 {
                    base.seed
                } else {
                    derive_seed(base.seed, replica as u64)
                };
                let metrics = run(&scenario)?;
                results.push((scenario, metrics));
            }
        }
    }
    Ok(results)
}

/// Run every policy against the identical blockage trace (same seed) and
/// report one comparison row each.
pub fn compare(base: &Scenario) -> Result<Vec<PolicyReport>, SimError> {
    base.validate()?;
    let mut event_rng = ChaCha8Rng::seed_from_u64(base.seed);
    let events = generate_events(
        base.horizon_ms as f64,
        base.blockage_rate_per_s,
        base.blockage_duration_range_ms,
        &base.geom,
        &mut event_rng,
    )?;

    let mut reports = Vec::new();
    for policy in Policy::ALL {
        let mut scenario = base.clone();
        scenario.policy = policy;
        let metrics = run_with_events(&scenario, &events)?;
        reports.push(PolicyReport {
            policy,
            measurements_used: metrics.discovery_measurements_per_episode,
            outage_ms: metrics.total_outage_ms,
            recovered_rss_dbm: metrics
                .mean_rss_during_blockage_dbm
                .unwrap_or(scenario.budget.noise_floor_dbm),
            n_blockage_events: metrics.n_blockage_events,
            n_events_survived: metrics.n_events_survived,
            note: metrics.note,
        });
    }
    Ok(reports)
}

/// Expected outage of one handover recovery on this scenario, for
/// comparison against simulated totals.
pub fn handover_outage_bound_ms(scenario: &Scenario, event: &BlockageEvent) -> u64 {
    handover_outage_ms(&scenario.access, event, scenario.probe_interval_ms)
}
