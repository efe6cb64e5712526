//! TOML scenario configuration. Every physical quantity carries its unit
//! in the key name. Unknown keys are rejected; missing keys fall back to
//! the documented reference-deployment defaults, so an empty document is a
//! valid config.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use groundwave::antenna::build_codebook;
use groundwave::baselines::{AccessModel, Policy};
use groundwave::channel::{
    calibrate, CalibrationReport, CalibrationTargets, GrTargetRow, LinkBudget, SurfaceKind,
};
use groundwave::geometry::SiteGeometry;
use groundwave::protocol::{grd_window_deg, ProtocolConfig};
use groundwave::simcore::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub site: SiteSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub antenna: AntennaSection,
    #[serde(default)]
    pub blockage: BlockageSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub access: AccessSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SiteSection {
    pub h_tx_m: Option<f64>,
    pub h_rx_m: Option<f64>,
    pub d_tr_m: Option<f64>,
    pub tilt_deg: Option<f64>,
    pub surface: Option<SurfaceKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub tx_power_dbm: Option<f64>,
    pub noise_floor_dbm: Option<f64>,
    pub carrier_ghz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AntennaSection {
    pub n_az_beams: Option<usize>,
    pub sector_deg: Option<f64>,
    pub az_beamwidth_deg: Option<f64>,
    pub el_beamwidth_deg: Option<f64>,
    pub peak_gain_db: Option<f64>,
    pub rx_el_rows_deg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BlockageSection {
    pub rate_per_s: Option<f64>,
    pub duration_min_ms: Option<f64>,
    pub duration_max_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon_s: Option<f64>,
    pub probe_interval_ms: Option<u64>,
    pub noise_sigma_db: Option<f64>,
    pub seed: Option<u64>,
    pub policy: Option<Policy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub detection_margin_db: Option<f64>,
    pub reentry_hysteresis_db: Option<f64>,
    pub rbo_period_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AccessSection {
    pub n_sweep_beams: Option<u32>,
    pub sweep_period_ms: Option<u64>,
    pub attach_overhead_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub rss_los_dbm: Option<f64>,
    pub gr_targets: Option<Vec<GrTargetEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrTargetEntry {
    pub surface: SurfaceKind,
    pub tilt_deg: f64,
    pub rss_gr_dbm: f64,
    pub d_br_m: f64,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).context("config parse failed")
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Config::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Fill every missing key with the reference-deployment default, so
    /// the resolved document serializes with all keys present.
    pub fn resolved(mut self) -> Config {
        let targets = CalibrationTargets::reference();
        self.site.h_tx_m.get_or_insert(2.5);
        self.site.h_rx_m.get_or_insert(1.0);
        self.site.d_tr_m.get_or_insert(6.0);
        self.site.tilt_deg.get_or_insert(20.0);
        self.site.surface.get_or_insert(SurfaceKind::OutdoorConcrete);
        self.link
            .tx_power_dbm
            .get_or_insert(groundwave::channel::DEFAULT_TX_POWER_DBM);
        self.link
            .noise_floor_dbm
            .get_or_insert(groundwave::channel::DEFAULT_NOISE_FLOOR_DBM);
        self.link
            .carrier_ghz
            .get_or_insert(groundwave::channel::DEFAULT_CARRIER_GHZ);
        self.antenna.n_az_beams.get_or_insert(25);
        self.antenna.sector_deg.get_or_insert(120.0);
        self.antenna.az_beamwidth_deg.get_or_insert(18.0);
        self.antenna.el_beamwidth_deg.get_or_insert(60.0);
        self.antenna.peak_gain_db.get_or_insert(17.0);
        self.antenna
            .rx_el_rows_deg
            .get_or_insert(vec![-30.0, 0.0, 30.0]);
        self.blockage
            .rate_per_s
            .get_or_insert(groundwave::blockage::DEFAULT_RATE_PER_S);
        self.blockage
            .duration_min_ms
            .get_or_insert(groundwave::blockage::DEFAULT_DURATION_RANGE_MS.0);
        self.blockage
            .duration_max_ms
            .get_or_insert(groundwave::blockage::DEFAULT_DURATION_RANGE_MS.1);
        self.sim.horizon_s.get_or_insert(60.0);
        self.sim
            .probe_interval_ms
            .get_or_insert(groundwave::simcore::DEFAULT_PROBE_INTERVAL_MS);
        self.sim
            .noise_sigma_db
            .get_or_insert(groundwave::channel::DEFAULT_NOISE_SIGMA_DB);
        self.sim.seed.get_or_insert(42);
        self.sim.policy.get_or_insert(Policy::GroundReflection);
        self.protocol
            .detection_margin_db
            .get_or_insert(groundwave::protocol::DEFAULT_DETECTION_MARGIN_DB);
        self.protocol
            .reentry_hysteresis_db
            .get_or_insert(groundwave::protocol::DEFAULT_REENTRY_HYSTERESIS_DB);
        self.protocol
            .rbo_period_ms
            .get_or_insert(groundwave::protocol::DEFAULT_RBO_PERIOD_MS);
        self.access
            .n_sweep_beams
            .get_or_insert(groundwave::baselines::DEFAULT_SWEEP_BEAMS);
        self.access
            .sweep_period_ms
            .get_or_insert(groundwave::baselines::DEFAULT_SWEEP_PERIOD_MS);
        self.access
            .attach_overhead_ms
            .get_or_insert(groundwave::baselines::DEFAULT_ATTACH_OVERHEAD_MS);
        self.calibration.rss_los_dbm.get_or_insert(targets.rss_los_dbm);
        self.calibration.gr_targets.get_or_insert_with(|| {
            targets
                .gr_rows
                .iter()
                .map(|r| GrTargetEntry {
                    surface: r.surface,
                    tilt_deg: r.tilt_deg,
                    rss_gr_dbm: r.rss_gr_dbm,
                    d_br_m: r.blocker_distance_m,
                })
                .collect()
        });
        self
    }

    pub fn calibration_targets(&self) -> Result<CalibrationTargets> {
        let rows = self
            .calibration
            .gr_targets
            .as_ref()
            .filter(|rows| !rows.is_empty())
            .ok_or_else(|| {
                anyhow::anyhow!(
                    "no calibration targets in config; add [[calibration.gr_targets]] rows or run `groundwave calibrate` with the bundled defaults"
                )
            })?;
        Ok(CalibrationTargets {
            rss_los_dbm: self.calibration.rss_los_dbm.unwrap_or(-60.0),
            gr_rows: rows
                .iter()
                .map(|r| GrTargetRow {
                    surface: r.surface,
                    tilt_deg: r.tilt_deg,
                    rss_gr_dbm: r.rss_gr_dbm,
                    blocker_distance_m: r.d_br_m,
                })
                .collect(),
        })
    }

    pub fn geometry(&self) -> Result<SiteGeometry> {
        SiteGeometry::new(
            self.site.h_tx_m.unwrap_or(2.5),
            self.site.h_rx_m.unwrap_or(1.0),
            self.site.d_tr_m.unwrap_or(6.0),
            self.site.tilt_deg.unwrap_or(20.0),
        )
        .map_err(|e| anyhow::anyhow!("invalid [site]: {e}"))
    }

    pub fn uncalibrated_budget(&self) -> LinkBudget {
        LinkBudget {
            tx_power_dbm: self.link.tx_power_dbm.unwrap_or(20.0),
            system_loss_db: f64::NAN,
            noise_floor_dbm: self.link.noise_floor_dbm.unwrap_or(-78.0),
            carrier_ghz: self.link.carrier_ghz.unwrap_or(60.0),
        }
    }

    /// The bore-sight beam template the calibration fit uses.
    pub fn beam_template(&self) -> groundwave::antenna::Beam {
        groundwave::antenna::Beam {
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            az_beamwidth_deg: self.antenna.az_beamwidth_deg.unwrap_or(18.0),
            el_beamwidth_deg: self.antenna.el_beamwidth_deg.unwrap_or(60.0),
            peak_gain_db: self.antenna.peak_gain_db.unwrap_or(17.0),
        }
    }

    /// Fit the channel against this config's targets.
    pub fn run_calibration(&self) -> Result<CalibrationReport> {
        let targets = self.calibration_targets()?;
        let geom = self.geometry()?;
        calibrate(
            &self.uncalibrated_budget(),
            &geom,
            &self.beam_template(),
            &targets,
        )
        .map_err(|e| anyhow::anyhow!(e))
    }

    /// Assemble the runnable scenario, calibrating inline from the
    /// config's targets.
    pub fn scenario(&self, report: &CalibrationReport) -> Result<Scenario> {
        let cfg = self.clone().resolved();
        let geom = cfg.geometry()?;
        let tilt = cfg.site.tilt_deg.expect("resolved");
        let n_az = cfg.antenna.n_az_beams.expect("resolved");
        let sector = cfg.antenna.sector_deg.expect("resolved");
        let az_bw = cfg.antenna.az_beamwidth_deg.expect("resolved");
        let el_bw = cfg.antenna.el_beamwidth_deg.expect("resolved");
        let gain = cfg.antenna.peak_gain_db.expect("resolved");
        let rows = cfg.antenna.rx_el_rows_deg.clone().expect("resolved");
        let surface_kind = cfg.site.surface.expect("resolved");

        let tx_codebook = build_codebook(n_az, sector, az_bw, &[-tilt], el_bw, gain)
            .map_err(|e| anyhow::anyhow!("transmit codebook: {e}"))?;
        let rx_codebook = build_codebook(n_az, sector, az_bw, &rows, el_bw, gain)
            .map_err(|e| anyhow::anyhow!("receive codebook: {e}"))?;
        let surface = report
            .surface_profile(surface_kind)
            .ok_or_else(|| anyhow::anyhow!("calibration has no row for surface {surface_kind}"))?;

        let horizon_s = cfg.sim.horizon_s.expect("resolved");
        if horizon_s <= 0.0 {
            bail!("horizon must be positive, got {horizon_s} s");
        }
        let noise_floor = cfg.link.noise_floor_dbm.expect("resolved");
        let mut protocol = ProtocolConfig::new(noise_floor, tilt, el_bw);
        protocol.detection_margin_db = cfg.protocol.detection_margin_db.expect("resolved");
        protocol.reentry_hysteresis_db = cfg.protocol.reentry_hysteresis_db.expect("resolved");
        protocol.rbo_period_ms = cfg.protocol.rbo_period_ms.expect("resolved");
        protocol.grd_window_deg = grd_window_deg(tilt, el_bw);

        Ok(Scenario {
            geom,
            surface,
            budget: LinkBudget {
                tx_power_dbm: cfg.link.tx_power_dbm.expect("resolved"),
                system_loss_db: report.system_loss_db,
                noise_floor_dbm: noise_floor,
                carrier_ghz: cfg.link.carrier_ghz.expect("resolved"),
            },
            tx_codebook,
            rx_codebook,
            blockage_rate_per_s: cfg.blockage.rate_per_s.expect("resolved"),
            blockage_duration_range_ms: (
                cfg.blockage.duration_min_ms.expect("resolved"),
                cfg.blockage.duration_max_ms.expect("resolved"),
            ),
            policy: cfg.sim.policy.expect("resolved"),
            horizon_ms: (horizon_s * 1000.0).round() as u64,
            probe_interval_ms: cfg.sim.probe_interval_ms.expect("resolved"),
            noise_sigma_db: cfg.sim.noise_sigma_db.expect("resolved"),
            seed: cfg.sim.seed.expect("resolved"),
            access: AccessModel::new(
                cfg.access.n_sweep_beams.expect("resolved"),
                cfg.access.sweep_period_ms.expect("resolved"),
                cfg.access.attach_overhead_ms.expect("resolved"),
            )
            .map_err(|e| anyhow::anyhow!(e))?,
            protocol,
        })
    }
}
