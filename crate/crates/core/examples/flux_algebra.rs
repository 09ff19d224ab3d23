//! The p-Laplacian flux: monotonicity gap and the analytic Jacobian.

use castflow::flux::{flux_eps, flux_jacobian, monotonicity_gap, Vec2};

fn main() -> castflow::Result<()> {
    let (xi, eta) = (Vec2::new(1.0, 0.5), Vec2::new(-0.3, 0.2));
    for p in [1.5, 2.0, 3.0, 6.0] {
        let gap = monotonicity_gap(xi, eta, p);
        // coercivity lower bound, valid for p >= 2
        let lower = if p >= 2.0 { format!("{:.4}", (xi - eta).norm().powf(p) * 2f64.powf(2.0 - p)) } else { "-".into() };
        let eps = 0.1;
        let jac = flux_jacobian(xi, p, eps)?;
        let (lo, hi) = jac.eigenvalues();
        let t = 1e-6;
        let fd = (flux_eps(xi + Vec2::E_Z * t, p, eps) - flux_eps(xi - Vec2::E_Z * t, p, eps)) * (0.5 / t);
        println!(
            "p = {p}: gap {gap:.4} (2^(2-p)|xi-eta|^p = {lower}), eigenvalues [{lo:.3}, {hi:.3}], FD mismatch {:.1e}",
            (fd - jac.mul_vec(Vec2::E_Z)).norm()
        );
    }
    Ok(())
}
