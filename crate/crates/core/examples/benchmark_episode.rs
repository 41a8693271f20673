//! Full 20 s learning episode on the benchmark process with default settings.
//! Writes the CSVs and summary to `out/benchmark_episode` (or the first argument).

use std::path::PathBuf;

use mfirl::config::{RunConfig, Strategy};
use mfirl::control_loop::Episode;
use mfirl::io::{build_summary, oracle_check, write_artifacts};

fn main() -> mfirl::error::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("out/benchmark_episode"), PathBuf::from);
    let cfg = RunConfig::default();
    let episode = Episode::new(&cfg)?;
    let model = episode.model().clone();
    let (log, err) = episode.run();
    if let Some(e) = err {
        eprintln!("episode aborted: {e}");
    }
    let summary = build_summary(&model, &log)?;
    let paths = write_artifacts(&dir, &log, &summary)?;

    for s in Strategy::ALL {
        println!(
            "{s:<16} gain {:.5?}  converged at {:?} s",
            log.final_gain(s).as_slice(),
            log.trace(s).converged_at
        );
    }
    println!("max |e_mf| over the last 2 s: {:.4}", summary.max_abs_e_mf_final_2s);
    println!("max |e_ob| over the last 2 s: {:.4}", summary.max_abs_e_ob_final_2s);
    println!("closed loop stable on (A, B): {}", summary.closed_loop_stable);

    let report = oracle_check(&cfg, &model, &log)?;
    println!("oracle gain {:.5?}", report.oracle_gain);
    println!("learned spectral abscissa on (A_hat, B_hat): {:.5}", report.learned_spectral_abscissa);
    println!("relative Bellman residual of the learned kernel: {:.3}", report.learned_relative_residual);
    println!("wrote {}", paths.trajectory.display());
    Ok(())
}
