//! Full diagnostic report (growth, Campanato, Hopf, Caccioppoli) for one preset.

use castflow::cli_io::config::preset_config;
use castflow::cli_io::run;

fn main() -> castflow::Result<()> {
    let cfg = preset_config("one_phase_p4", 129)?;
    let (u, _) = run::solve(&cfg)?;
    let report = run::analyze(&cfg, &u)?;
    print!("{}", run::analysis_summary(&report, cfg.analysis.stefan_threshold));
    Ok(())
}
