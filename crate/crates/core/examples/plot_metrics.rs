//! Renders a run's training curves to SVG.
//!
//! Usage: `cargo run --example plot_metrics [run_dir] [out.svg]`

use std::path::PathBuf;

use duelroute::cli::{cmd_plot, read_metrics, PlotArgs};
use duelroute::trainer::METRICS_FILE;

fn main() -> duelroute::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let run = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("duelroute-train-tsp"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| run.join("curves.svg"));
    let metrics = run.join(METRICS_FILE);
    let rows = read_metrics(&metrics)?;
    let switch = rows.iter().find(|r| r.stage == 2).map(|r| r.episode);
    println!("{} episodes, stage 2 from {:?}", rows.len(), switch);
    cmd_plot(&PlotArgs {
        metrics,
        out: out.clone(),
        window: 20,
        stage_switch: None,
    })?;
    println!("wrote {}", out.display());
    Ok(())
}
