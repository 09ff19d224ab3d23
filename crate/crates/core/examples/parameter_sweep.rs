//! Sweep the latent heat and p, writing one directory per run and a summary.

use castflow::cli_io::config::parse_config;
use castflow::cli_io::run;

fn main() -> castflow::Result<()> {
    let cfg = parse_config(
        "preset = \"one_phase_p3\"\n[grid]\nnx = 33\nnz = 33\n[sweep]\nell = [0.5, 1.0, 2.0]\np = [2.5, 3.0]\n",
    )?;
    let out = std::env::temp_dir().join("castflow-sweep-example");
    let rows = run::sweep(&cfg, &out, 4)?;
    for row in &rows {
        println!("{} {:<16} {} h+ = {:.4}", row.dir, row.label, row.status, row.interface_height.unwrap_or(f64::NAN));
    }
    println!("summary: {}", out.join("summary.csv").display());
    Ok(())
}
