//! Solve the one-phase p = 3 preset and print the interface heights.

use castflow::cli_io::config::preset_config;
use castflow::cli_io::run;
use castflow::freeboundary;

fn main() -> castflow::Result<()> {
    let cfg = preset_config("one_phase_p3", 65)?;
    let (u, report) = run::solve(&cfg)?;
    println!(
        "{} stages, {} Newton steps, residual {:.2e}",
        report.stages.len(),
        report.newton_iterations,
        report.final_residual
    );
    let fb = freeboundary::extract(&u, cfg.analysis.options.level);
    for c in fb.columns.iter().step_by(8) {
        println!("x = {:.3}  h+ = {:.4}", c.x, c.h_plus.unwrap_or(f64::NAN));
    }
    Ok(())
}
