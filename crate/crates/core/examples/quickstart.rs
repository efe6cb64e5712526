//! Calibrate the channel, run one blockage scenario per policy, and print
//! the comparison.

use groundwave::antenna::Beam;
use groundwave::channel::{calibrate, CalibrationTargets, LinkBudget, SurfaceKind};
use groundwave::geometry::SiteGeometry;
use groundwave::simcore::{compare, Scenario};
use groundwave::Policy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geom = SiteGeometry::new(2.5, 1.0, 6.0, 20.0)?;
    let pattern = Beam {
        azimuth_deg: 0.0,
        elevation_deg: 0.0,
        az_beamwidth_deg: 18.0,
        el_beamwidth_deg: 60.0,
        peak_gain_db: 17.0,
    };
    let report = calibrate(
        &LinkBudget::reference_uncalibrated(),
        &geom,
        &pattern,
        &CalibrationTargets::reference(),
    )?;
    println!(
        "calibrated: system loss {:.2} dB, concrete reflection loss {:.2} dB",
        report.system_loss_db,
        report
            .reflection_loss_db(SurfaceKind::OutdoorConcrete)
            .unwrap()
    );

    let scenario = Scenario::reference(
        &report,
        SurfaceKind::OutdoorConcrete,
        Policy::GroundReflection,
        42,
    )?;
    for row in compare(&scenario)? {
        println!(
            "{:<12} measurements={:<3} outage={:>6} ms survived={}/{}",
            row.policy.to_string(),
            row.measurements_used,
            row.outage_ms,
            row.n_events_survived,
            row.n_blockage_events
        );
    }
    Ok(())
}
