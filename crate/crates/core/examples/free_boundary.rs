//! Extract the free boundary of a two-phase solve and check the jump condition.

use castflow::analysis::effective_probe;
use castflow::cli_io::config::preset_config;
use castflow::cli_io::run;
use castflow::freeboundary::{extract, graph_deviation, median_abs, stefan_residual};

fn main() -> castflow::Result<()> {
    let cfg = preset_config("two_phase_p3", 65)?;
    let (u, _) = run::solve(&cfg)?;
    let fb = extract(&u, cfg.analysis.options.level);
    let probe = effective_probe(&cfg.params, &cfg.grid, cfg.analysis.options.probe);
    let res = stefan_residual(&u, &fb, &cfg.params, probe);
    println!("{} interface points, graph deviation {:.2e}", fb.points.len(), graph_deviation(&fb));
    println!("median |Stefan residual| {:.3e}", median_abs(&res).unwrap_or(f64::NAN));
    print!("{}", fb.to_csv(&res).lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
