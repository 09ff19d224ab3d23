//! Energy gap between a solution and its p-harmonic replacement on shrinking discs.

use castflow::analysis::probe_points;
use castflow::assembly::Scheme;
use castflow::cli_io::config::preset_config;
use castflow::cli_io::run;
use castflow::freeboundary::extract;
use castflow::solver::p_harmonic_replacement;

fn main() -> castflow::Result<()> {
    let cfg = preset_config("one_phase_p3", 129)?;
    let (u, _) = run::solve(&cfg)?;
    let fb = extract(&u, cfg.analysis.options.level);
    let x0 = probe_points(&fb, &cfg.grid)[1];
    println!("free-boundary point ({:.3}, {:.3})", x0.x, x0.z);
    for k in 0..4 {
        let r = 0.15 / 2f64.powi(k);
        let rep = p_harmonic_replacement(&u, x0, r, &cfg.params, Scheme::default())?;
        let gap = rep.energy_gap(cfg.params.p);
        println!("R = {r:.4}: gap {gap:.3e}, gap / R^2 = {:.3e}, {} Newton steps", gap / (r * r), rep.newton_iterations);
    }
    Ok(())
}
