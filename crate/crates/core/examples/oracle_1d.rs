//! Compare a 2D solve on x-independent data with the exact 1D profile.

use castflow::cli_io::config::parse_config;
use castflow::cli_io::run;
use castflow::solver::solve_1d_oracle;

fn main() -> castflow::Result<()> {
    let mut prev: Option<f64> = None;
    for nz in [33, 65, 129, 257] {
        let cfg = parse_config(&format!("preset = \"oracle_embed\"\n[params]\np = 3\n[grid]\nnx = 5\nnz = {nz}\n"))?;
        let prof = solve_1d_oracle(&cfg.params, cfg.grid.height, nz)?;
        let (u, _) = run::solve(&cfg)?;
        let err = (0..nz).map(|j| (u.at(2, j) - prof.u[j]).abs()).fold(0.0, f64::max);
        let ratio = prev.map_or(String::new(), |p| format!("  ratio {:.2}", p / err));
        println!("nz = {nz:4}  z0 = {:.6}  max error {err:.3e}{ratio}", prof.z0);
        prev = Some(err);
    }
    Ok(())
}
