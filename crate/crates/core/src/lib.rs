//! # groundwave
//!
//! A 60 GHz link-level simulation library for riding out pedestrian
//! blockage on the ground-reflected path.
//!
//! The crate models an elevated transmitter facing a lower receiver over a
//! flat reflective surface. When a pedestrian cuts the direct ray, a
//! ground-bounced ray — arriving in the same azimuth but from below — can
//! keep the link alive. The modules:
//!
//! - [`geometry`]: ray construction (image-source bounce), blocker reach,
//!   obstruction tests.
//! - [`antenna`]: parametric beams and steerable codebooks.
//! - [`channel`]: link budget, measurement noise, and calibration against
//!   bundled measurement targets.
//! - [`blockage`]: seeded pedestrian-event generation.
//! - [`protocol`]: the recovery state machine that discovers the reflected
//!   beam with three probes and serves on it through blockage.
//! - [`baselines`]: exhaustive-scan, scan-plus-model, and handover
//!   comparators.
//! - [`simcore`]: the deterministic tick loop, parameter sweeps, and
//!   policy comparison.

pub mod antenna;
pub mod baselines;
pub mod blockage;
pub mod channel;
pub mod geometry;
pub mod protocol;
pub mod simcore;

pub use antenna::{build_codebook, Beam, BeamId, Codebook};
pub use baselines::{AccessModel, Policy, PolicyReport};
pub use blockage::{generate_events, BlockageEvent};
pub use channel::{
    calibrate, CalibrationReport, CalibrationTargets, LinkBudget, LinkSample, SurfaceKind,
    SurfaceProfile,
};
pub use geometry::{Blocker, PathKind, RayPath, SiteGeometry};
pub use protocol::{Action, Mode, ProtocolConfig, ProtocolEvent, ProtocolState};
pub use simcore::{compare, run, sweep, RunMetrics, Scenario, SweepGrid};
