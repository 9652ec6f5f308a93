//! Run a bundled tracking scenario and write its report and plot data.
//!
//! `cargo run --example track_scenario -- [static|moving|occluded] [OUT_DIR]`

use std::path::PathBuf;

use servokin::harness::{run_tracking, write_outputs, Scenario};

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "moving".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| format!("target/track-{name}")));
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"));
    let scenario = Scenario::from_json(&std::fs::read_to_string(&path).expect("bundled scenario")).expect("valid");

    let report = run_tracking(&scenario).expect("scenario runs");
    let s = &report.summary;
    println!(
        "{}: {} ticks, approach {} ticks, tracking-valid {:.3}",
        report.scenario, report.ticks, report.approach.end_tick, s.tracking_valid_fraction
    );
    if let Some(m) = &report.metrics {
        println!("servo RMSE per axis (mm) {:?}", m.rmse_axes_m.map(|x| (x * 1e6).round() / 1e3));
    }
    for f in write_outputs(&report, &out).expect("writable output directory") {
        println!("wrote {}", f.display());
    }
}
