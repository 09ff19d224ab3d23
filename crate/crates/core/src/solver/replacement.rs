//! Regularized p-harmonic replacement of a field on a disc.

use crate::assembly::{Assembler, Model, Scheme};
use crate::domain::{Field, Grid, Params};
use crate::error::{Error, Result};
use crate::flux::Vec2;

use super::{NewtonSolver, ResidualScale};

/// The replacement `v` and the restriction of `u` on the sub-grid of cells
/// meeting the disc; sub-grid vertex `(0, 0)` is vertex `origin` of the parent.
#[derive(Debug, Clone)]
pub struct Replacement {
    pub center: Vec2,
    pub radius: f64,
    pub origin: (usize, usize),
    pub u: Field,
    pub v: Field,
    pub newton_iterations: usize,
}

impl Replacement {
    fn local_center(&self) -> Vec2 {
        let g = self.u.grid();
        self.center - Vec2::new(self.origin.0 as f64 * g.hx(), self.origin.1 as f64 * g.hz())
    }

    /// `int_{disc} |grad u - grad v|^p` over cells whose centers lie in the disc.
    pub fn energy_gap(&self, p: f64) -> f64 {
        let g = self.u.grid();
        let c = self.local_center();
        let mut total = 0.0;
        for cj in 0..g.nz - 1 {
            for ci in 0..g.nx - 1 {
                if (g.cell_center(ci, cj) - c).norm() <= self.radius {
                    let d = self.u.cell_gradient(ci, cj) - self.v.cell_gradient(ci, cj);
                    total += d.norm().powf(p);
                }
            }
        }
        total * g.cell_area()
    }

    /// Value of `v` at a parent-grid vertex inside the sub-grid.
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v.at(i - self.origin.0, j - self.origin.1)
    }
}

/// Solves `-div A_eps(grad v) = 0` on the sub-grid of cells meeting the disc
/// `B_radius(center)`, with `v = u` at every vertex outside the disc.
pub fn p_harmonic_replacement(
    u: &Field,
    center: Vec2,
    radius: f64,
    params: &Params,
    scheme: Scheme,
) -> Result<Replacement> {
    let g = u.grid();
    if !(radius > 0.0) || g.distance_to_boundary(center) <= radius {
        return Err(Error::OutsideDomain(format!(
            "disc of radius {radius} at ({}, {}) is not inside the cylinder",
            center.x, center.z
        )));
    }
    if params.eps <= 0.0 && params.p != 2.0 {
        return Err(Error::NonDifferentiable);
    }
    let (hx, hz) = (g.hx(), g.hz());
    let i0 = ((center.x - radius) / hx).floor() as usize;
    let i1 = (((center.x + radius) / hx).ceil() as usize).min(g.nx - 1);
    let j0 = ((center.z - radius) / hz).floor() as usize;
    let j1 = (((center.z + radius) / hz).ceil() as usize).min(g.nz - 1);
    if i1 - i0 < 2 || j1 - j0 < 2 {
        return Err(Error::BallTooSmall(format!("radius {radius} covers fewer than two cells")));
    }
    let sub = Grid::new((i1 - i0) as f64 * hx, (j1 - j0) as f64 * hz, i1 - i0 + 1, j1 - j0 + 1)?;
    let mut vals = Vec::with_capacity(sub.len());
    let mut pinned = Vec::with_capacity(sub.len());
    for j in j0..=j1 {
        for i in i0..=i1 {
            let val = u.at(i, j);
            vals.push(val);
            let inside = (g.position(i, j) - center).norm() < radius;
            pinned.push(if inside { None } else { Some(val) });
        }
    }
    let u_sub = Field::new(sub, vals)?;
    let model = Model::p_laplace(params.p, params.eps, scheme);
    let span = u_sub.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let grad_scale = (span / radius).powf(params.p - 1.0).max(params.eps.powf(params.p - 1.0));
    let scale = ResidualScale { interior: hx * grad_scale.max(1e-300), boundary: span };
    let mut newton = NewtonSolver::new(Assembler::new(sub, pinned)?, scale);
    let stage = newton.solve(u_sub.clone(), &model, 1e-10, 80)?;
    Ok(Replacement {
        center,
        radius,
        origin: (i0, j0),
        u: u_sub,
        v: stage.field,
        newton_iterations: stage.report.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Grid {
        Grid::new(1.0, 1.0, n, n).unwrap()
    }

    fn laplace(p: f64, eps: f64) -> Params {
        Params { p, a: 1.0, ell: 1.0, m_plus: 1.0, m_minus: 0.0, eps, delta: 0.1 }
    }

    #[test]
    fn harmonic_quadratic_is_its_own_replacement() {
        let u = Field::from_fn(unit(33), |x, z| (x - 0.5).powi(2) - (z - 0.5).powi(2));
        let rep = p_harmonic_replacement(&u, Vec2::new(0.5, 0.5), 0.3, &laplace(2.0, 0.0), Scheme::default()).unwrap();
        assert!(rep.newton_iterations <= 1);
        assert!(rep.energy_gap(2.0) < 1e-20, "{}", rep.energy_gap(2.0));
    }

    #[test]
    fn linear_problem_takes_one_newton_step() {
        let u = Field::from_fn(unit(33), |x, z| x * x + z * z);
        let rep = p_harmonic_replacement(&u, Vec2::new(0.5, 0.5), 0.3, &laplace(2.0, 0.0), Scheme::default()).unwrap();
        assert_eq!(rep.newton_iterations, 1);
        assert!(rep.energy_gap(2.0) > 0.0);
    }

    #[test]
    fn replacement_keeps_outside_values_and_lowers_energy() {
        let g = unit(33);
        let u = Field::from_fn(g, |x, z| (3.0 * x).sin() * z + z * z);
        let center = Vec2::new(0.5, 0.45);
        let rep = p_harmonic_replacement(&u, center, 0.25, &laplace(3.0, 1e-3), Scheme::default()).unwrap();
        let sub = *rep.u.grid();
        let energy = |f: &Field| -> f64 {
            let mut e = 0.0;
            for cj in 0..sub.nz - 1 {
                for ci in 0..sub.nx - 1 {
                    e += f.cell_gradient(ci, cj).norm().powi(3);
                }
            }
            e
        };
        assert!(energy(&rep.v) < energy(&rep.u));
        for j in 0..sub.nz {
            for i in 0..sub.nx {
                let (pi, pj) = (i + rep.origin.0, j + rep.origin.1);
                if (g.position(pi, pj) - center).norm() >= 0.25 {
                    assert_eq!(rep.v_at(pi, pj), u.at(pi, pj));
                }
            }
        }
        // discrete maximum principle for the replacement
        let (lo, hi) = rep.u.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(rep.v.values().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn bad_discs_are_rejected() {
        let u = Field::from_fn(unit(33), |x, z| x + z);
        let c = Vec2::new(0.5, 0.5);
        let pr = laplace(3.0, 1e-3);
        assert!(matches!(
            p_harmonic_replacement(&u, Vec2::new(0.1, 0.5), 0.2, &pr, Scheme::default()),
            Err(Error::OutsideDomain(_))
        ));
        assert!(matches!(p_harmonic_replacement(&u, c, 0.0, &pr, Scheme::default()), Err(Error::OutsideDomain(_))));
        assert!(matches!(
            p_harmonic_replacement(&u, c, 0.2, &laplace(3.0, 0.0), Scheme::default()),
            Err(Error::NonDifferentiable)
        ));
    }
}
