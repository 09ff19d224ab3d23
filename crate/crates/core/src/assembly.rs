//! Discrete weak form `sum_cells A_eps(grad u).grad phi - beta_delta(u) d_z phi`
//! on bilinear quadrilaterals, with strongly imposed Dirichlet rows.

use serde::{Deserialize, Serialize};

use crate::domain::{enthalpy, enthalpy_slope, BoundaryData, Field, Grid, Params};
use crate::error::{Error, Result};
use crate::flux::{flux_eps, flux_jacobian, Vec2};
use crate::linalg::CsrMatrix;

/// Treatment of the convection term `d_z beta(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convection {
    /// `beta(u)` at the quadrature points against `d_z phi`.
    Central,
    /// Lumped backward difference `h_x (beta(u_ij) - beta(u_i,j-1))` per vertex row.
    #[default]
    Upwind,
}

/// Quadrature for the cell integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// One point at the cell center.
    #[default]
    CellCenter,
    /// Tensor 2x2 Gauss rule.
    Gauss2,
}

impl Quadrature {
    /// Points in local coordinates with weights summing to one.
    fn points(self) -> &'static [(f64, f64, f64)] {
        const G: f64 = 0.211_324_865_405_187_1; // (1 - 1/sqrt 3) / 2
        const H: f64 = 1.0 - G;
        match self {
            Quadrature::CellCenter => &[(0.5, 0.5, 1.0)],
            Quadrature::Gauss2 => &[(G, G, 0.25), (H, G, 0.25), (G, H, 0.25), (H, H, 0.25)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scheme {
    #[serde(default)]
    pub convection: Convection,
    #[serde(default)]
    pub quadrature: Quadrature,
}

/// Coefficients of the discrete operator. Unlike [`Params`] this allows
/// `a = ell = 0`, which turns the operator into the plain regularized
/// p-Laplacian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub params: Params,
    pub scheme: Scheme,
}

impl Model {
    pub fn new(params: Params, scheme: Scheme) -> Model {
        Model { params, scheme }
    }

    /// Regularized p-Laplacian without convection.
    pub fn p_laplace(p: f64, eps: f64, scheme: Scheme) -> Model {
        let params = Params { p, a: 0.0, ell: 0.0, m_plus: 1.0, m_minus: 0.0, eps, delta: 1.0 };
        Model { params, scheme }
    }

    pub fn is_differentiable(&self) -> bool {
        self.params.eps > 0.0 || self.params.p == 2.0
    }

    fn beta(&self, s: f64) -> f64 {
        enthalpy(s, &self.params)
    }

    fn beta_slope(&self, s: f64) -> f64 {
        enthalpy_slope(s, &self.params)
    }

    /// Chord slope of beta over `[s, s + ds]`, the tangent slope when `ds` is tiny.
    fn beta_chord(&self, s: f64, ds: f64) -> f64 {
        if ds.abs() <= 1e-14 * (1.0 + s.abs()) {
            self.beta_slope(s)
        } else {
            (self.beta(s + ds) - self.beta(s)) / ds
        }
    }
}

/// Residual and Jacobian of the discrete system over all vertices.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub residual: Vec<f64>,
    pub jacobian: CsrMatrix,
    pub dirichlet: Vec<bool>,
}

/// Assembly workspace for one grid and one set of pinned vertices; the
/// sparsity pattern and the cell scatter map are built once.
#[derive(Debug, Clone)]
pub struct Assembler {
    grid: Grid,
    pinned: Vec<Option<f64>>,
    pattern: CsrMatrix,
    /// Value positions of the 4x4 local block of every cell.
    cell_pos: Vec<[usize; 16]>,
    diag_pos: Vec<usize>,
}

impl Assembler {
    /// `pinned[k] = Some(g)` imposes `u_k = g`.
    pub fn new(grid: Grid, pinned: Vec<Option<f64>>) -> Result<Assembler> {
        if pinned.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: pinned.len() });
        }
        let (nx, nz) = (grid.nx, grid.nz);
        let mut rows = vec![Vec::with_capacity(9); grid.len()];
        for j in 0..nz {
            for i in 0..nx {
                let row = &mut rows[grid.index(i, j)];
                for jj in j.saturating_sub(1)..(j + 2).min(nz) {
                    for ii in i.saturating_sub(1)..(i + 2).min(nx) {
                        row.push(grid.index(ii, jj));
                    }
                }
            }
        }
        let pattern = CsrMatrix::from_pattern(&rows);
        let mut cell_pos = Vec::with_capacity((nx - 1) * (nz - 1));
        for cj in 0..nz - 1 {
            for ci in 0..nx - 1 {
                let v = Self::cell_vertices(&grid, ci, cj);
                let mut pos = [0usize; 16];
                for a in 0..4 {
                    for b in 0..4 {
                        pos[4 * a + b] = pattern.position(v[a], v[b]).expect("stencil entry");
                    }
                }
                cell_pos.push(pos);
            }
        }
        let diag_pos = (0..grid.len()).map(|k| pattern.position(k, k).unwrap()).collect();
        Ok(Assembler { grid, pinned, pattern, cell_pos, diag_pos })
    }

    pub fn for_boundary(grid: Grid, bc: &BoundaryData) -> Result<Assembler> {
        Assembler::new(grid, bc.pinned(&grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn pinned(&self) -> &[Option<f64>] {
        &self.pinned
    }

    /// Vertex coordinates, used to order the factorization.
    pub fn coordinates(&self) -> Vec<(usize, usize)> {
        (0..self.grid.nz).flat_map(|j| (0..self.grid.nx).map(move |i| (i, j))).collect()
    }

    /// Zero-valued matrix with the assembly pattern.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    #[inline]
    fn cell_vertices(grid: &Grid, ci: usize, cj: usize) -> [usize; 4] {
        let k = grid.index(ci, cj);
        [k, k + 1, k + grid.nx, k + grid.nx + 1]
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.grid() != &self.grid {
            return Err(Error::DimensionMismatch { expected: self.grid.len(), found: u.grid().len() });
        }
        Ok(())
    }

    /// Residual vector over all vertices.
    pub fn residual(&self, u: &Field, model: &Model) -> Result<Vec<f64>> {
        self.check(u)?;
        Ok(self.assemble_impl(u, model, None, None))
    }

    /// Residual and exact Jacobian.
    pub fn system(&self, u: &Field, model: &Model) -> Result<DiscreteSystem> {
        self.check(u)?;
        if !model.is_differentiable() {
            return Err(Error::NonDifferentiable);
        }
        let mut jac = self.pattern.clone();
        let residual = self.assemble_impl(u, model, Some(&mut jac), None);
        Ok(DiscreteSystem {
            residual,
            jacobian: jac,
            dirichlet: self.pinned.iter().map(Option::is_some).collect(),
        })
    }

    /// Like [`Assembler::system`], but the enthalpy contribution to the
    /// Jacobian uses chord slopes along `dir`, so that the enthalpy part of
    /// `R(u + dir) - R(u)` equals the enthalpy block times `dir` exactly.
    pub fn system_along(&self, u: &Field, model: &Model, dir: &[f64]) -> Result<DiscreteSystem> {
        self.check(u)?;
        if dir.len() != self.grid.len() {
            return Err(Error::DimensionMismatch { expected: self.grid.len(), found: dir.len() });
        }
        if !model.is_differentiable() {
            return Err(Error::NonDifferentiable);
        }
        let mut jac = self.pattern.clone();
        let residual = self.assemble_impl(u, model, Some(&mut jac), Some(dir));
        Ok(DiscreteSystem {
            residual,
            jacobian: jac,
            dirichlet: self.pinned.iter().map(Option::is_some).collect(),
        })
    }

    fn assemble_impl(
        &self,
        u: &Field,
        model: &Model,
        mut jac: Option<&mut CsrMatrix>,
        dir: Option<&[f64]>,
    ) -> Vec<f64> {
        let g = &self.grid;
        let (hx, hz) = (g.hx(), g.hz());
        let area = hx * hz;
        let (p, eps) = (model.params.p, model.params.eps);
        let uv = u.values();
        let mut res = vec![0.0; g.len()];
        let quad = model.scheme.quadrature.points();
        let central = model.scheme.convection == Convection::Central;

        for cj in 0..g.nz - 1 {
            for ci in 0..g.nx - 1 {
                let cell = cj * (g.nx - 1) + ci;
                let v = Self::cell_vertices(g, ci, cj);
                let uc = [uv[v[0]], uv[v[1]], uv[v[2]], uv[v[3]]];
                let dc = dir.map_or([0.0; 4], |d| [d[v[0]], d[v[1]], d[v[2]], d[v[3]]]);
                let mut local_r = [0.0; 4];
                let mut local_j = [0.0; 16];
                for &(s, t, w) in quad {
                    let shape = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
                    let grads = [
                        Vec2::new(-(1.0 - t) / hx, -(1.0 - s) / hz),
                        Vec2::new((1.0 - t) / hx, -s / hz),
                        Vec2::new(-t / hx, (1.0 - s) / hz),
                        Vec2::new(t / hx, s / hz),
                    ];
                    let mut grad = Vec2::ZERO;
                    let mut val = 0.0;
                    for a in 0..4 {
                        grad = grad + grads[a] * uc[a];
                        val += shape[a] * uc[a];
                    }
                    let wq = w * area;
                    let flux = flux_eps(grad, p, eps);
                    let beta = if central { model.beta(val) } else { 0.0 };
                    for a in 0..4 {
                        local_r[a] += wq * (flux.dot(grads[a]) - beta * grads[a].z);
                    }
                    if jac.is_some() {
                        let jm = flux_jacobian(grad, p, eps).expect("differentiability checked");
                        let slope = if central {
                            let dval: f64 = (0..4).map(|a| shape[a] * dc[a]).sum();
                            model.beta_chord(val, dval)
                        } else {
                            0.0
                        };
                        let jg = [
                            jm.mul_vec(grads[0]),
                            jm.mul_vec(grads[1]),
                            jm.mul_vec(grads[2]),
                            jm.mul_vec(grads[3]),
                        ];
                        for a in 0..4 {
                            for b in 0..4 {
                                local_j[4 * a + b] +=
                                    wq * (grads[a].dot(jg[b]) - slope * shape[b] * grads[a].z);
                            }
                        }
                    }
                }
                if !central {
                    // vertical edges (0 -> 2) and (1 -> 3): the top vertex receives the difference
                    for (bot, top) in [(0, 2), (1, 3)] {
                        let half = 0.5 * hx;
                        local_r[top] += half * (model.beta(uc[top]) - model.beta(uc[bot]));
                        if jac.is_some() {
                            local_j[4 * top + top] += half * model.beta_chord(uc[top], dc[top]);
                            local_j[4 * top + bot] -= half * model.beta_chord(uc[bot], dc[bot]);
                        }
                    }
                }
                for a in 0..4 {
                    res[v[a]] += local_r[a];
                }
                if let Some(m) = jac.as_deref_mut() {
                    let vals = m.values_mut();
                    for (k, &pos) in self.cell_pos[cell].iter().enumerate() {
                        vals[pos] += local_j[k];
                    }
                }
            }
        }

        for (k, pin) in self.pinned.iter().enumerate() {
            if let Some(datum) = pin {
                res[k] = uv[k] - datum;
            }
        }
        if let Some(m) = jac {
            let row_ptr_rows: Vec<usize> =
                (0..g.len()).filter(|&k| self.pinned[k].is_some()).collect();
            for k in row_ptr_rows {
                let (cols, _) = m.row(k);
                let positions: Vec<usize> = cols.iter().map(|&c| m.position(k, c).unwrap()).collect();
                let vals = m.values_mut();
                for pos in positions {
                    vals[pos] = 0.0;
                }
                vals[self.diag_pos[k]] = 1.0;
            }
        }
        res
    }

    /// Net vertical flux through the horizontal cut between rows `j` and
    /// `j + 1`, in the form the scheme conserves exactly for x-independent
    /// data: `sum (A_eps(grad u).e_z - beta(u)) h_x`.
    pub fn cut_flux(&self, u: &Field, model: &Model, j: usize) -> f64 {
        let g = &self.grid;
        let (hx, hz) = (g.hx(), g.hz());
        let (p, eps) = (model.params.p, model.params.eps);
        let mut total = 0.0;
        for ci in 0..g.nx - 1 {
            let (u00, u10, u01, u11) = (u.at(ci, j), u.at(ci + 1, j), u.at(ci, j + 1), u.at(ci + 1, j + 1));
            for &(s, t, w) in model.scheme.quadrature.points() {
                let grad = Vec2::new(
                    ((1.0 - t) * (u10 - u00) + t * (u11 - u01)) / hx,
                    ((1.0 - s) * (u01 - u00) + s * (u11 - u10)) / hz,
                );
                let val = (1.0 - t) * ((1.0 - s) * u00 + s * u10) + t * ((1.0 - s) * u01 + s * u11);
                let beta = match model.scheme.convection {
                    Convection::Central => model.beta(val),
                    Convection::Upwind => 0.0,
                };
                total += w * hx * (flux_eps(grad, p, eps).z - beta);
            }
            if model.scheme.convection == Convection::Upwind {
                total -= 0.5 * hx * (model.beta(u00) + model.beta(u10));
            }
        }
        total
    }
}

/// Residual of the casting problem with the default scheme.
pub fn residual(u: &Field, params: &Params, bc: &BoundaryData) -> Result<Vec<f64>> {
    let asm = Assembler::for_boundary(*u.grid(), bc)?;
    asm.residual(u, &Model::new(*params, Scheme::default()))
}

/// Jacobian of [`residual`].
pub fn jacobian(u: &Field, params: &Params, bc: &BoundaryData) -> Result<CsrMatrix> {
    let asm = Assembler::for_boundary(*u.grid(), bc)?;
    Ok(asm.system(u, &Model::new(*params, Scheme::default()))?.jacobian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_monotone_g, RampShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(p: f64) -> Params {
        Params { p, a: 1.0, ell: 1.0, m_plus: 1.0, m_minus: 0.5, eps: 0.1, delta: 0.2 }
    }

    fn schemes() -> Vec<Scheme> {
        let mut out = Vec::new();
        for convection in [Convection::Central, Convection::Upwind] {
            for quadrature in [Quadrature::CellCenter, Quadrature::Gauss2] {
                out.push(Scheme { convection, quadrature });
            }
        }
        out
    }

    #[test]
    fn constant_field_has_zero_residual() {
        let g = Grid::new(1.0, 1.3, 7, 9).unwrap();
        let u = Field::from_fn(g, |_, _| 0.37);
        let asm = Assembler::new(g, vec![None; g.len()]).unwrap();
        for scheme in schemes() {
            for p in [1.5, 2.0, 3.0] {
                let r = asm.residual(&u, &Model::new(params(p), scheme)).unwrap();
                for j in 1..g.nz - 1 {
                    for i in 1..g.nx - 1 {
                        assert!(r[g.index(i, j)].abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn affine_field_is_conserved_without_convection() {
        let g = Grid::new(1.0, 1.0, 8, 6).unwrap();
        let u = Field::from_fn(g, |x, z| 0.3 + 1.7 * x - 0.4 * z);
        let asm = Assembler::new(g, vec![None; g.len()]).unwrap();
        for scheme in schemes() {
            let model = Model::p_laplace(3.0, 0.05, scheme);
            let r = asm.residual(&u, &model).unwrap();
            for j in 1..g.nz - 1 {
                for i in 1..g.nx - 1 {
                    assert!(r[g.index(i, j)].abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn linear_laplacian_stencil() {
        // p = 2 without convection: one-point quadrature couples only diagonal
        // neighbours on square cells (center 2, corners -1/2).
        let g = Grid::new(1.0, 1.0, 5, 5).unwrap();
        let asm = Assembler::new(g, vec![None; g.len()]).unwrap();
        let u = Field::zeros(g);
        let model = Model::p_laplace(2.0, 0.0, Scheme::default());
        let jac = asm.system(&u, &model).unwrap().jacobian;
        let c = g.index(2, 2);
        assert!((jac.get(c, c) - 2.0).abs() < 1e-14);
        assert!((jac.get(c, g.index(3, 3)) + 0.5).abs() < 1e-14);
        assert!(jac.get(c, g.index(3, 2)).abs() < 1e-14);
        let q1 = Model::p_laplace(2.0, 0.0, Scheme { quadrature: Quadrature::Gauss2, ..Scheme::default() });
        let jac = asm.system(&u, &q1).unwrap().jacobian;
        assert!((jac.get(c, c) - 8.0 / 3.0).abs() < 1e-14);
        assert!((jac.get(c, g.index(3, 2)) + 1.0 / 3.0).abs() < 1e-14);
        assert!((jac.get(c, g.index(1, 3)) + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn flux_block_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Grid::new(1.0, 1.0, 6, 7).unwrap();
        let vals = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = Field::new(g, vals).unwrap();
        let asm = Assembler::new(g, vec![None; g.len()]).unwrap();
        let jac = asm.system(&u, &Model::p_laplace(3.0, 0.1, Scheme::default())).unwrap().jacobian;
        let d = jac.to_dense();
        for r in 0..d.len() {
            for c in 0..d.len() {
                assert!((d[r][c] - d[c][r]).abs() < 1e-12 * (1.0 + d[r][c].abs()));
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Grid::new(1.0, 1.0, 7, 8).unwrap();
        let base = Field::from_fn(g, |x, z| z - 0.3 + 0.2 * x);
        let asm = Assembler::new(g, vec![None; g.len()]).unwrap();
        for scheme in schemes() {
            let model = Model::new(Params { p: 3.0, eps: 0.1, delta: 0.5, ..params(3.0) }, scheme);
            let mut u = base.clone();
            for v in u.values_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
            let w: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sys = asm.system(&u, &model).unwrap();
            let jw = sys.jacobian.mul_vec(&w);
            let t = 1e-6;
            let shifted = |sign: f64| {
                let vals = u.values().iter().zip(&w).map(|(a, b)| a + sign * t * b).collect();
                asm.residual(&Field::new(g, vals).unwrap(), &model).unwrap()
            };
            let (rp, rm) = (shifted(1.0), shifted(-1.0));
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * t)).collect();
            let num = fd.iter().zip(&jw).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den = jw.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(num / den < 1e-6, "{scheme:?}: {}", num / den);
        }
    }

    #[test]
    fn dirichlet_rows_are_identity() {
        let p = params(3.0);
        let g = Grid::new(1.0, 1.0, 5, 6).unwrap();
        let bc = make_monotone_g(&p, &g, RampShape::Smoothstep).unwrap();
        let u = Field::from_fn(g, |x, z| x + z);
        let asm = Assembler::for_boundary(g, &bc).unwrap();
        let sys = asm.system(&u, &Model::new(p, Scheme::default())).unwrap();
        let k = g.index(0, 3);
        assert!(sys.dirichlet[k]);
        assert_eq!(sys.residual[k], u.at(0, 3) - bc.left[3]);
        let (cols, vals) = sys.jacobian.row(k);
        for (&c, &v) in cols.iter().zip(vals) {
            assert_eq!(v, if c == k { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn non_differentiable_configuration_is_rejected() {
        let g = Grid::new(1.0, 1.0, 4, 4).unwrap();
        let asm = Assembler::new(g, vec![None; g.len()]).unwrap();
        let model = Model::new(Params { eps: 0.0, ..params(3.0) }, Scheme::default());
        assert!(matches!(asm.system(&Field::zeros(g), &model), Err(Error::NonDifferentiable)));
    }

    #[test]
    fn cut_flux_is_exact_first_integral_of_residual() {
        // for x-independent fields, the interior residual of row j equals the
        // difference of the cut fluxes below and above it
        let g = Grid::new(1.0, 1.0, 5, 12).unwrap();
        let u = Field::from_fn(g, |_, z| (3.0 * z).sin() - 0.2);
        let asm = Assembler::new(g, vec![None; g.len()]).unwrap();
        for scheme in schemes() {
            let model = Model::new(params(2.5), scheme);
            let r = asm.residual(&u, &model).unwrap();
            for j in 1..g.nz - 1 {
                let expected = asm.cut_flux(&u, &model, j - 1) - asm.cut_flux(&u, &model, j);
                let per_column = expected / (g.nx - 1) as f64;
                assert!((r[g.index(2, j)] - per_column).abs() < 1e-12, "{scheme:?} row {j}");
            }
        }
    }
}
