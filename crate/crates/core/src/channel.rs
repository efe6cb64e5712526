//! Link-budget engine: free-space loss at the carrier, beam gains toward
//! each path's departure/arrival directions, a calibrated scalar system
//! loss, and a per-surface specular reflection loss.
//!
//! Azimuth convention: the receiver sits at azimuth 0 from the transmitter
//! and vice versa, so beam gains are evaluated at azimuth 0 and the path's
//! elevation.

use rand::Rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::{Beam, BeamId};
use crate::geometry::{is_blocked, los_path, Blocker, PathKind, RayPath, SiteGeometry};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("non-positive input: {0}")]
    NonPositiveInput(String),
    #[error("calibration targets incomplete: {0}")]
    MissingTargets(String),
    #[error(
        "calibration residual gate exceeded: worst row off by {worst_db:.2} dB (gate {gate_db} dB)"
    )]
    ResidualGate { worst_db: f64, gate_db: f64 },
}

/// Ground surface under the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceKind {
    IndoorConcreteTile,
    OutdoorConcrete,
    OutdoorGravel,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 3] = [
        SurfaceKind::IndoorConcreteTile,
        SurfaceKind::OutdoorConcrete,
        SurfaceKind::OutdoorGravel,
    ];

    pub fn is_outdoor(&self) -> bool {
        matches!(self, SurfaceKind::OutdoorConcrete | SurfaceKind::OutdoorGravel)
    }
}

impl std::fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SurfaceKind::IndoorConcreteTile => "indoor-concrete-tile",
            SurfaceKind::OutdoorConcrete => "outdoor-concrete",
            SurfaceKind::OutdoorGravel => "outdoor-gravel",
        };
        write!(f, "{s}")
    }
}

/// A surface with its calibrated effective specular loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceProfile {
    pub kind: SurfaceKind,
    pub reflection_loss_db: f64,
}

/// Radio constants of the deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    /// Calibrated implementation loss absorbing everything not itemized
    /// (waveform, cabling, conversion).
    pub system_loss_db: f64,
    pub noise_floor_dbm: f64,
    pub carrier_ghz: f64,
}

pub const DEFAULT_TX_POWER_DBM: f64 = 20.0;
pub const DEFAULT_NOISE_FLOOR_DBM: f64 = -78.0;
pub const DEFAULT_CARRIER_GHZ: f64 = 60.0;
pub const DEFAULT_NOISE_SIGMA_DB: f64 = 0.5;
/// Synthetic non-line-of-sight penalty relative to the direct path.
pub const NLOS_PENALTY_DB: f64 = 10.0;
/// Worst acceptable |residual| of the calibration fit.
pub const RESIDUAL_GATE_DB: f64 = 3.0;

impl LinkBudget {
    /// Reference deployment radio constants. The system loss starts as
    /// NaN so nothing downstream can consume the budget before
    /// calibration fills it in; [`calibrate`] never reads it.
    pub fn reference_uncalibrated() -> Self {
        LinkBudget {
            tx_power_dbm: DEFAULT_TX_POWER_DBM,
            system_loss_db: f64::NAN,
            noise_floor_dbm: DEFAULT_NOISE_FLOOR_DBM,
            carrier_ghz: DEFAULT_CARRIER_GHZ,
        }
    }
}

/// One timestamped signal-strength measurement on a beam pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub time_ms: u64,
    pub tx_beam: BeamId,
    pub rx_beam: BeamId,
    pub rss_dbm: f64,
    pub blocked_los: bool,
}

/// Free-space path loss in dB:
/// `20 log10(d) + 20 log10(f) + 20 log10(4 pi / c)`.
pub fn fspl_db(distance_m: f64, frequency_ghz: f64) -> Result<f64, ChannelError> {
    if distance_m <= 0.0 {
        return Err(ChannelError::NonPositiveInput(format!(
            "distance {distance_m} m"
        )));
    }
    if frequency_ghz <= 0.0 {
        return Err(ChannelError::NonPositiveInput(format!(
            "frequency {frequency_ghz} GHz"
        )));
    }
    const C_M_PER_S: f64 = 299_792_458.0;
    Ok(20.0 * distance_m.log10()
        + 20.0 * (frequency_ghz * 1e9).log10()
        + 20.0 * (4.0 * std::f64::consts::PI / C_M_PER_S).log10())
}

/// Deterministic received signal strength for one path, dBm. A blocker on
/// the path takes the report to the noise floor (total absorption); the
/// result is floored at the noise floor either way.
pub fn rss_dbm(
    budget: &LinkBudget,
    geom: &SiteGeometry,
    surface: &SurfaceProfile,
    tx_beam: &Beam,
    rx_beam: &Beam,
    path: &RayPath,
    blockers: &[Blocker],
) -> f64 {
    if blockers.iter().any(|b| is_blocked(geom, path, b)) {
        return budget.noise_floor_dbm;
    }
    let spread = fspl_db(path.length_m, budget.carrier_ghz).expect("valid path length");
    let reflection = match path.kind {
        PathKind::GroundReflection => surface.reflection_loss_db,
        PathKind::LineOfSight => 0.0,
    };
    let rss = budget.tx_power_dbm
        + tx_beam.gain_db(0.0, path.departure_elevation_deg)
        + rx_beam.gain_db(0.0, path.arrival_elevation_deg)
        - spread
        - budget.system_loss_db
        - reflection;
    rss.max(budget.noise_floor_dbm)
}

/// One noisy measurement: [`rss_dbm`] plus Gaussian measurement noise,
/// floored at the noise floor. Deterministic under a fixed rng.
#[allow(clippy::too_many_arguments)]
pub fn measure(
    budget: &LinkBudget,
    geom: &SiteGeometry,
    surface: &SurfaceProfile,
    tx: (BeamId, &Beam),
    rx: (BeamId, &Beam),
    path: &RayPath,
    blockers: &[Blocker],
    noise_sigma_db: f64,
    rng: &mut impl Rng,
    time_ms: u64,
) -> LinkSample {
    let clean = rss_dbm(budget, geom, surface, tx.1, rx.1, path, blockers);
    let noisy = if noise_sigma_db > 0.0 {
        clean + noise_sigma_db * standard_gaussian(rng)
    } else {
        clean
    };
    let los = los_path(geom);
    LinkSample {
        time_ms,
        tx_beam: tx.0,
        rx_beam: rx.0,
        rss_dbm: noisy.max(budget.noise_floor_dbm),
        blocked_los: blockers.iter().any(|b| is_blocked(geom, &los, b)),
    }
}

/// Box-Muller standard normal draw; consumes two uniforms.
pub fn standard_gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// One measured ground-reflection anchor row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrTargetRow {
    pub surface: SurfaceKind,
    pub tilt_deg: f64,
    pub rss_gr_dbm: f64,
    /// Blocker station during the measurement, m from the receiver.
    pub blocker_distance_m: f64,
}

/// Measured anchors the model is fit against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Unblocked boresight-aligned direct-path strength, dBm.
    pub rss_los_dbm: f64,
    pub gr_rows: Vec<GrTargetRow>,
}

impl CalibrationTargets {
    /// Bundled measurement campaign: the direct-path anchor plus six
    /// ground-reflection rows per surface (tilts 0/10/20 degrees, blocker at
    /// 2 m and 3 m).
    pub fn reference() -> Self {
        use SurfaceKind::*;
        let rows = [
            (IndoorConcreteTile, 0.0, -65.7, 2.0),
            (IndoorConcreteTile, 0.0, -66.0, 3.0),
            (IndoorConcreteTile, 10.0, -64.5, 2.0),
            (IndoorConcreteTile, 10.0, -64.45, 3.0),
            (IndoorConcreteTile, 20.0, -64.4, 2.0),
            (IndoorConcreteTile, 20.0, -64.3, 3.0),
            (OutdoorConcrete, 0.0, -66.0, 2.0),
            (OutdoorConcrete, 0.0, -66.0, 3.0),
            (OutdoorConcrete, 10.0, -64.7, 2.0),
            (OutdoorConcrete, 10.0, -64.5, 3.0),
            (OutdoorConcrete, 20.0, -64.1, 2.0),
            (OutdoorConcrete, 20.0, -64.0, 3.0),
            (OutdoorGravel, 0.0, -66.1, 2.0),
            (OutdoorGravel, 0.0, -65.9, 3.0),
            (OutdoorGravel, 10.0, -64.8, 2.0),
            (OutdoorGravel, 10.0, -64.4, 3.0),
            (OutdoorGravel, 20.0, -64.4, 2.0),
            (OutdoorGravel, 20.0, -64.3, 3.0),
        ];
        CalibrationTargets {
            rss_los_dbm: -60.0,
            gr_rows: rows
                .iter()
                .map(|&(surface, tilt_deg, rss_gr_dbm, blocker_distance_m)| GrTargetRow {
                    surface,
                    tilt_deg,
                    rss_gr_dbm,
                    blocker_distance_m,
                })
                .collect(),
        }
    }
}

/// Fit residual for one target row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowResidual {
    pub surface: SurfaceKind,
    pub tilt_deg: f64,
    pub target_dbm: f64,
    pub predicted_dbm: f64,
    pub residual_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFit {
    pub kind: SurfaceKind,
    pub reflection_loss_db: f64,
}

/// Outcome of the calibration solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub system_loss_db: f64,
    pub surfaces: Vec<SurfaceFit>,
    pub rows: Vec<RowResidual>,
}

impl CalibrationReport {
    pub fn reflection_loss_db(&self, kind: SurfaceKind) -> Option<f64> {
        self.surfaces
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| s.reflection_loss_db)
    }

    pub fn max_abs_residual_db(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.residual_db.abs())
            .fold(0.0, f64::max)
    }

    pub fn surface_profile(&self, kind: SurfaceKind) -> Option<SurfaceProfile> {
        self.reflection_loss_db(kind).map(|reflection_loss_db| SurfaceProfile {
            kind,
            reflection_loss_db,
        })
    }
}

/// Ideal boresight-aligned direct-path prediction (both beams steered
/// exactly at the path), dBm.
pub fn predicted_los_rss(budget: &LinkBudget, geom: &SiteGeometry, pattern: &Beam) -> f64 {
    let los = los_path(geom);
    budget.tx_power_dbm + 2.0 * pattern.peak_gain_db
        - fspl_db(los.length_m, budget.carrier_ghz).expect("valid path")
        - budget.system_loss_db
}

/// Ground-reflection prediction with the transmit fan tilted down by
/// `tilt_deg` and the receive beam steered exactly at the arrival, dBm.
/// `reflection_loss_db` is applied on top.
pub fn predicted_gr_rss(
    budget: &LinkBudget,
    geom: &SiteGeometry,
    pattern: &Beam,
    tilt_deg: f64,
    reflection_loss_db: f64,
) -> f64 {
    let gr = crate::geometry::ground_reflection_path(geom);
    let tx_beam = Beam {
        azimuth_deg: 0.0,
        elevation_deg: -tilt_deg,
        ..*pattern
    };
    budget.tx_power_dbm
        + tx_beam.gain_db(0.0, gr.departure_elevation_deg)
        + pattern.peak_gain_db
        - fspl_db(gr.length_m, budget.carrier_ghz).expect("valid path")
        - budget.system_loss_db
        - reflection_loss_db
}

/// Strength of a synthetic environment-scatter path, pinned
/// [`NLOS_PENALTY_DB`] under the unblocked direct path.
pub fn synthetic_nlos_rss(budget: &LinkBudget, geom: &SiteGeometry, pattern: &Beam) -> f64 {
    predicted_los_rss(budget, geom, pattern) - NLOS_PENALTY_DB
}

/// Solve the two-stage fit: the system loss makes the direct-path
/// prediction match its anchor exactly, then one reflection loss per
/// surface minimizes the mean absolute error over that surface's rows
/// (among the minimizers, the one that also minimizes the worst residual).
/// Fails if any row's |residual| exceeds [`RESIDUAL_GATE_DB`].
pub fn calibrate(
    budget: &LinkBudget,
    geom: &SiteGeometry,
    pattern: &Beam,
    targets: &CalibrationTargets,
) -> Result<CalibrationReport, ChannelError> {
    if targets.gr_rows.is_empty() {
        return Err(ChannelError::MissingTargets(
            "need at least one ground-reflection row".into(),
        ));
    }

    let los = los_path(geom);
    let system_loss_db = budget.tx_power_dbm + 2.0 * pattern.peak_gain_db
        - fspl_db(los.length_m, budget.carrier_ghz)?
        - targets.rss_los_dbm;
    let solved = LinkBudget {
        system_loss_db,
        ..*budget
    };

    let mut surfaces = Vec::new();
    let mut rows = Vec::new();
    for kind in SurfaceKind::ALL {
        let surface_rows: Vec<&GrTargetRow> = targets
            .gr_rows
            .iter()
            .filter(|r| r.surface == kind)
            .collect();
        if surface_rows.is_empty() {
            continue;
        }
        // Residual of each row at zero reflection loss; the optimal loss is
        // an L1 location estimate over these.
        let mut base: Vec<f64> = surface_rows
            .iter()
            .map(|r| predicted_gr_rss(&solved, geom, pattern, r.tilt_deg, 0.0) - r.rss_gr_dbm)
            .collect();
        let reflection_loss_db = l1_fit(&mut base).max(0.0);
        surfaces.push(SurfaceFit {
            kind,
            reflection_loss_db,
        });
        for r in surface_rows {
            let predicted =
                predicted_gr_rss(&solved, geom, pattern, r.tilt_deg, reflection_loss_db);
            rows.push(RowResidual {
                surface: kind,
                tilt_deg: r.tilt_deg,
                target_dbm: r.rss_gr_dbm,
                predicted_dbm: predicted,
                residual_db: predicted - r.rss_gr_dbm,
            });
        }
    }

    let report = CalibrationReport {
        system_loss_db,
        surfaces,
        rows,
    };
    let worst = report.max_abs_residual_db();
    if worst > RESIDUAL_GATE_DB {
        return Err(ChannelError::ResidualGate {
            worst_db: worst,
            gate_db: RESIDUAL_GATE_DB,
        });
    }
    Ok(report)
}

/// Minimize mean |x - v| over v: any point of the median interval works;
/// within it, take the point closest to the midrange so the worst residual
/// is also as small as possible. Sorts its input.
fn l1_fit(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let (lo, hi) = if n % 2 == 1 {
        (values[n / 2], values[n / 2])
    } else {
        (values[n / 2 - 1], values[n / 2])
    };
    let midrange = (values[0] + values[n - 1]) / 2.0;
    midrange.clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antenna::build_codebook;
    use crate::geometry::ground_reflection_path;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_geom() -> SiteGeometry {
        SiteGeometry::new(2.5, 1.0, 6.0, 0.0).unwrap()
    }

    fn pattern() -> Beam {
        Beam {
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            az_beamwidth_deg: 18.0,
            el_beamwidth_deg: 60.0,
            peak_gain_db: 17.0,
        }
    }

    /// Independent hand computation of the free-space constant:
    /// FSPL(d, f) = 20 log10(d) + 20 log10(f_Hz) - 147.552 dB.
    fn fspl_oracle(distance_m: f64, frequency_ghz: f64) -> f64 {
        20.0 * distance_m.log10() + 20.0 * (frequency_ghz * 1e9).log10() - 147.55221677811664
    }

    #[test]
    fn fspl_reference_distances() {
        let los = fspl_db(6.1847, 60.0).unwrap();
        assert!((los - 83.84).abs() < 5e-3, "los fspl = {los}");
        assert!((los - fspl_oracle(6.1847, 60.0)).abs() < 1e-9);

        let gr = fspl_db(6.9462, 60.0).unwrap();
        assert!((gr - 84.85).abs() < 5e-3, "gr fspl = {gr}");
        assert!((gr - fspl_oracle(6.9462, 60.0)).abs() < 1e-9);
    }

    #[test]
    fn fspl_inverse_square() {
        let near = fspl_db(3.0, 60.0).unwrap();
        let far = fspl_db(6.0, 60.0).unwrap();
        assert!((far - near - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn fspl_rejects_non_positive() {
        assert!(fspl_db(0.0, 60.0).is_err());
        assert!(fspl_db(-1.0, 60.0).is_err());
        assert!(fspl_db(6.0, 0.0).is_err());
    }

    #[test]
    fn calibrated_los_hits_anchor() {
        let geom = reference_geom();
        let targets = CalibrationTargets::reference();
        let report = calibrate(&LinkBudget::reference_uncalibrated(), &geom, &pattern(), &targets)
            .unwrap();
        let budget = LinkBudget {
            system_loss_db: report.system_loss_db,
            ..LinkBudget::reference_uncalibrated()
        };
        let los = predicted_los_rss(&budget, &geom, &pattern());
        assert!((los - (-60.0)).abs() < 1e-9, "los = {los}");
        // About 30 dB of unmodeled loss is expected for this deployment.
        assert!((report.system_loss_db - 30.162).abs() < 1e-2);
    }

    #[test]
    fn calibration_matches_grid_search_oracle() {
        // Independent oracle: scan reflection loss in 0.1 mdB steps,
        // keep the MAE minimizers, then the max-residual minimizer.
        let geom = reference_geom();
        let targets = CalibrationTargets::reference();
        let budget = LinkBudget::reference_uncalibrated();
        let report = calibrate(&budget, &geom, &pattern(), &targets).unwrap();
        let solved = LinkBudget {
            system_loss_db: report.system_loss_db,
            ..budget
        };
        for kind in SurfaceKind::ALL {
            let rows: Vec<&GrTargetRow> = targets
                .gr_rows
                .iter()
                .filter(|r| r.surface == kind)
                .collect();
            let mut best = (f64::INFINITY, f64::INFINITY, 0.0);
            for step in 0..=100_000 {
                let loss = step as f64 * 1e-4;
                let residuals: Vec<f64> = rows
                    .iter()
                    .map(|r| {
                        predicted_gr_rss(&solved, &geom, &pattern(), r.tilt_deg, loss)
                            - r.rss_gr_dbm
                    })
                    .collect();
                let mae: f64 =
                    residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len() as f64;
                let worst = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
                if mae < best.0 - 1e-12 || (mae < best.0 + 1e-12 && worst < best.1) {
                    best = (mae, worst, loss);
                }
            }
            let got = report.reflection_loss_db(kind).unwrap();
            assert!(
                (got - best.2).abs() < 2e-4,
                "{kind}: solve {got} vs grid {}",
                best.2
            );
        }
    }

    #[test]
    fn calibration_reproduces_every_row_within_1db() {
        let report = calibrate(
            &LinkBudget::reference_uncalibrated(),
            &reference_geom(),
            &pattern(),
            &CalibrationTargets::reference(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 18);
        for row in &report.rows {
            assert!(
                row.residual_db.abs() <= 1.0,
                "{} tilt {}: residual {:.3}",
                row.surface,
                row.tilt_deg,
                row.residual_db
            );
        }
    }

    #[test]
    fn calibration_deterministic() {
        let a = calibrate(
            &LinkBudget::reference_uncalibrated(),
            &reference_geom(),
            &pattern(),
            &CalibrationTargets::reference(),
        )
        .unwrap();
        let b = calibrate(
            &LinkBudget::reference_uncalibrated(),
            &reference_geom(),
            &pattern(),
            &CalibrationTargets::reference(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lossless_mirror_fits_zero_reflection_loss() {
        // A single target matching the model exactly with an aligned
        // transmit beam: reflection loss comes out identically zero.
        let geom = reference_geom();
        let budget = LinkBudget::reference_uncalibrated();
        let gr = ground_reflection_path(&geom);
        let aligned_tilt = -gr.departure_elevation_deg;
        let extra_path =
            fspl_db(gr.length_m, budget.carrier_ghz).unwrap() - fspl_db(
                los_path(&geom).length_m,
                budget.carrier_ghz,
            )
            .unwrap();
        let targets = CalibrationTargets {
            rss_los_dbm: -60.0,
            gr_rows: vec![GrTargetRow {
                surface: SurfaceKind::OutdoorConcrete,
                tilt_deg: aligned_tilt,
                rss_gr_dbm: -60.0 - extra_path,
                blocker_distance_m: 2.0,
            }],
        };
        let report = calibrate(&budget, &geom, &pattern(), &targets).unwrap();
        let loss = report
            .reflection_loss_db(SurfaceKind::OutdoorConcrete)
            .unwrap();
        assert!(loss.abs() < 1e-9, "loss = {loss}");
    }

    #[test]
    fn contradictory_targets_fail_gate() {
        let mut targets = CalibrationTargets::reference();
        targets.gr_rows.push(GrTargetRow {
            surface: SurfaceKind::OutdoorConcrete,
            tilt_deg: 20.0,
            rss_gr_dbm: -54.0,
            blocker_distance_m: 2.0,
        });
        targets.gr_rows.push(GrTargetRow {
            surface: SurfaceKind::OutdoorConcrete,
            tilt_deg: 20.0,
            rss_gr_dbm: -74.0,
            blocker_distance_m: 3.0,
        });
        let err = calibrate(
            &LinkBudget::reference_uncalibrated(),
            &reference_geom(),
            &pattern(),
            &targets,
        )
        .unwrap_err();
        assert!(matches!(err, ChannelError::ResidualGate { .. }));
    }

    #[test]
    fn empty_targets_rejected() {
        let targets = CalibrationTargets {
            rss_los_dbm: -60.0,
            gr_rows: vec![],
        };
        assert!(calibrate(
            &LinkBudget::reference_uncalibrated(),
            &reference_geom(),
            &pattern(),
            &targets
        )
        .is_err());
    }

    fn calibrated_setup() -> (SiteGeometry, LinkBudget, CalibrationReport) {
        let geom = reference_geom();
        let report = calibrate(
            &LinkBudget::reference_uncalibrated(),
            &geom,
            &pattern(),
            &CalibrationTargets::reference(),
        )
        .unwrap();
        let budget = LinkBudget {
            system_loss_db: report.system_loss_db,
            ..LinkBudget::reference_uncalibrated()
        };
        (geom, budget, report)
    }

    #[test]
    fn blocked_los_reports_floor_exactly() {
        let (geom, budget, report) = calibrated_setup();
        let surface = report.surface_profile(SurfaceKind::OutdoorConcrete).unwrap();
        let los = los_path(&geom);
        let blocker = Blocker::standard(2.0);
        let cb = build_codebook(25, 120.0, 18.0, &[-30.0, 0.0, 30.0], 60.0, 17.0).unwrap();
        for (_, rx) in cb.beams() {
            let rss = rss_dbm(&budget, &geom, &surface, &pattern(), rx, &los, &[blocker]);
            assert_eq!(rss, budget.noise_floor_dbm);
        }
    }

    #[test]
    fn gr_row_example_concrete_20deg() {
        let (geom, budget, report) = calibrated_setup();
        let loss = report
            .reflection_loss_db(SurfaceKind::OutdoorConcrete)
            .unwrap();
        let rss = predicted_gr_rss(&budget, &geom, &pattern(), 20.0, loss);
        assert!((rss - (-64.1)).abs() <= 1.0, "rss = {rss}");
    }

    #[test]
    fn aligned_gr_is_los_minus_spread_and_reflection() {
        let (geom, budget, report) = calibrated_setup();
        let loss = report
            .reflection_loss_db(SurfaceKind::OutdoorConcrete)
            .unwrap();
        let gr = ground_reflection_path(&geom);
        let aligned_tilt = -gr.departure_elevation_deg;
        let extra_path = fspl_db(gr.length_m, budget.carrier_ghz).unwrap()
            - fspl_db(los_path(&geom).length_m, budget.carrier_ghz).unwrap();
        let gr_rss = predicted_gr_rss(&budget, &geom, &pattern(), aligned_tilt, loss);
        let los_rss = predicted_los_rss(&budget, &geom, &pattern());
        assert!((gr_rss - (los_rss - extra_path - loss)).abs() < 1e-9);
    }

    #[test]
    fn ordering_against_synthetic_nlos() {
        let (geom, budget, report) = calibrated_setup();
        let nlos = synthetic_nlos_rss(&budget, &geom, &pattern());
        assert!((nlos - (-70.0)).abs() < 1e-9);
        for kind in [SurfaceKind::OutdoorConcrete, SurfaceKind::OutdoorGravel] {
            let loss = report.reflection_loss_db(kind).unwrap();
            let gr = predicted_gr_rss(&budget, &geom, &pattern(), 20.0, loss);
            assert!(gr - nlos >= 6.0, "{kind}: gr {gr} vs nlos {nlos}");
        }
    }

    #[test]
    fn measure_zero_sigma_equals_rss() {
        let (geom, budget, report) = calibrated_setup();
        let surface = report.surface_profile(SurfaceKind::OutdoorConcrete).unwrap();
        let gr = ground_reflection_path(&geom);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sample = measure(
            &budget,
            &geom,
            &surface,
            (BeamId(0), &pattern()),
            (BeamId(1), &pattern()),
            &gr,
            &[],
            0.0,
            &mut rng,
            42,
        );
        let clean = rss_dbm(&budget, &geom, &surface, &pattern(), &pattern(), &gr, &[]);
        assert_eq!(sample.rss_dbm, clean);
        assert_eq!(sample.time_ms, 42);
        assert!(!sample.blocked_los);
    }

    #[test]
    fn measure_reproducible_under_seed() {
        let (geom, budget, report) = calibrated_setup();
        let surface = report.surface_profile(SurfaceKind::OutdoorGravel).unwrap();
        let los = los_path(&geom);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32)
                .map(|t| {
                    measure(
                        &budget,
                        &geom,
                        &surface,
                        (BeamId(0), &pattern()),
                        (BeamId(1), &pattern()),
                        &los,
                        &[],
                        0.5,
                        &mut rng,
                        t,
                    )
                    .rss_dbm
                })
                .collect::<Vec<f64>>()
        };
        assert_eq!(run(99), run(99));
        assert_ne!(run(99), run(100));
    }

    #[test]
    fn measure_noise_mean_converges() {
        let (geom, budget, report) = calibrated_setup();
        let surface = report.surface_profile(SurfaceKind::OutdoorConcrete).unwrap();
        let los = los_path(&geom);
        let clean = rss_dbm(&budget, &geom, &surface, &pattern(), &pattern(), &los, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|t| {
                measure(
                    &budget,
                    &geom,
                    &surface,
                    (BeamId(0), &pattern()),
                    (BeamId(1), &pattern()),
                    &los,
                    &[],
                    0.5,
                    &mut rng,
                    t,
                )
                .rss_dbm
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - clean).abs() < 0.05, "mean {mean} vs clean {clean}");
    }

    #[test]
    fn rss_monotone_in_losses_and_width() {
        let (geom, budget, report) = calibrated_setup();
        let mut surface = report.surface_profile(SurfaceKind::OutdoorConcrete).unwrap();
        let gr = ground_reflection_path(&geom);
        let base = rss_dbm(&budget, &geom, &surface, &pattern(), &pattern(), &gr, &[]);
        surface.reflection_loss_db += 2.0;
        let more_reflection = rss_dbm(&budget, &geom, &surface, &pattern(), &pattern(), &gr, &[]);
        assert!(more_reflection < base);

        let lossier = LinkBudget {
            system_loss_db: budget.system_loss_db + 2.0,
            ..budget
        };
        assert!(rss_dbm(&lossier, &geom, &surface, &pattern(), &pattern(), &gr, &[]) < more_reflection);

        // Widening a just-missing blocker eventually blocks the path.
        let los = los_path(&geom);
        let mut blocker = Blocker::standard(2.0);
        blocker.azimuth_offset_m = 0.3;
        let narrow = rss_dbm(&budget, &geom, &surface, &pattern(), &pattern(), &los, &[blocker]);
        blocker.width_m = 0.7;
        let wide = rss_dbm(&budget, &geom, &surface, &pattern(), &pattern(), &los, &[blocker]);
        assert!(wide <= narrow);
        assert_eq!(wide, budget.noise_floor_dbm);
    }

    #[test]
    fn table_deficits_span_expected_band() {
        // The measured rows sit 4.0 to 6.1 dB under the direct-path anchor;
        // the calibrated model tracks each within a dB.
        let targets = CalibrationTargets::reference();
        for row in &targets.gr_rows {
            let deficit = -60.0 - row.rss_gr_dbm;
            assert!((3.9..=6.2).contains(&deficit), "deficit {deficit}");
        }
    }
}
