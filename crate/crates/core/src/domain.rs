//! Geometry, parameters, vertex fields and boundary data on the cylinder
//! `(0, W) x (0, L)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::Vec2;

/// Physical and regularization scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    /// Enthalpy slope `a`.
    pub a: f64,
    /// Latent-heat jump `l`.
    pub ell: f64,
    /// Top temperature `m+`.
    pub m_plus: f64,
    /// Bottom magnitude `m-`; the bottom datum is `-m_minus`. Zero means one-phase.
    pub m_minus: f64,
    /// Gradient regularization.
    pub eps: f64,
    /// Width of the enthalpy ramp.
    pub delta: f64,
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs.join("; ")))
        }
    }

    /// Every violated invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let fields = [
            ("p", self.p),
            ("a", self.a),
            ("ell", self.ell),
            ("m_plus", self.m_plus),
            ("m_minus", self.m_minus),
            ("eps", self.eps),
            ("delta", self.delta),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                errs.push(format!("{name} must be finite"));
            }
        }
        if !(self.p > 1.0) {
            errs.push("p must exceed 1".into());
        }
        if !(self.a > 0.0) {
            errs.push("a must be positive".into());
        }
        if !(self.ell > 0.0) {
            errs.push("ell must be positive".into());
        }
        if !(self.m_plus > 0.0) {
            errs.push("m_plus must be positive".into());
        }
        if !(self.m_minus >= 0.0) {
            errs.push("m_minus must be nonnegative".into());
        }
        if !(self.eps >= 0.0) {
            errs.push("eps must be nonnegative".into());
        }
        if !(self.delta > 0.0) {
            errs.push("delta must be positive".into());
        }
        errs
    }

    pub fn is_one_phase(&self) -> bool {
        self.m_minus == 0.0
    }

    pub fn with_regularization(&self, eps: f64, delta: f64) -> Params {
        Params { eps, delta, ..*self }
    }
}

/// Smoothed enthalpy `a s + l clamp(s / delta, 0, 1)`.
pub fn enthalpy(s: f64, params: &Params) -> f64 {
    params.a * s + params.ell * (s / params.delta).clamp(0.0, 1.0)
}

/// Level at which the ramp-regularized one-dimensional profile passes the
/// sharp interface: `delta q^(1/(1-q))` with `q = 1/(p-1)`, tending to
/// `delta / e` at `p = 2`. Exact in the limit `a delta << l`, where the profile
/// inside the ramp solves `(u')^(p-1) = l u / delta`.
pub fn interface_level(p: f64, delta: f64) -> f64 {
    let q = 1.0 / (p - 1.0);
    if (1.0 - q).abs() < 1e-9 {
        delta * (-1.0f64).exp()
    } else {
        delta * (q.ln() / (1.0 - q)).exp()
    }
}

/// Derivative of [`enthalpy`]; the ramp kinks are assigned the outer slope.
pub fn enthalpy_slope(s: f64, params: &Params) -> f64 {
    if s > 0.0 && s < params.delta {
        params.a + params.ell / params.delta
    } else {
        params.a
    }
}

/// Uniform tensor grid with `nx x nz` vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub nz: usize,
}

impl Grid {
    pub fn new(width: f64, height: f64, nx: usize, nz: usize) -> Result<Grid> {
        if !(width > 0.0 && width.is_finite()) || !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "extents must be positive and finite (W = {width}, L = {height})"
            )));
        }
        if nx < 3 || nz < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 vertices per axis (nx = {nx}, nz = {nz})"
            )));
        }
        Ok(Grid { width, height, nx, nz })
    }

    pub fn hx(&self) -> f64 {
        self.width / (self.nx - 1) as f64
    }

    pub fn hz(&self) -> f64 {
        self.height / (self.nz - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.width
        } else {
            i as f64 * self.hx()
        }
    }

    pub fn z(&self, j: usize) -> f64 {
        if j + 1 == self.nz {
            self.height
        } else {
            j as f64 * self.hz()
        }
    }

    pub fn position(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.x(i), self.z(j))
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.nz
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.z >= 0.0 && p.z <= self.height
    }

    /// Distance from `p` to the nearest side of the rectangle (negative outside).
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        p.x.min(self.width - p.x).min(p.z).min(self.height - p.z)
    }

    /// Cell containing `p` (clamped to the rectangle) and the local
    /// coordinates `(s, t) in [0, 1]^2` inside it.
    pub fn locate(&self, p: Vec2) -> (usize, usize, f64, f64) {
        let fx = (p.x / self.hx()).clamp(0.0, (self.nx - 1) as f64);
        let fz = (p.z / self.hz()).clamp(0.0, (self.nz - 1) as f64);
        let ci = (fx.floor() as usize).min(self.nx - 2);
        let cj = (fz.floor() as usize).min(self.nz - 2);
        (ci, cj, fx - ci as f64, fz - cj as f64)
    }

    pub fn cell_center(&self, ci: usize, cj: usize) -> Vec2 {
        Vec2::new((ci as f64 + 0.5) * self.hx(), (cj as f64 + 0.5) * self.hz())
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hz()
    }
}

/// Scalar values at the vertices of a grid, `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("at vertex ({}, {})", k % grid.nx, k / grid.nx)));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Field {
        Field { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.z(j)));
            }
        }
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Gradient of the bilinear interpolant at the center of cell `(ci, cj)`.
    pub fn cell_gradient(&self, ci: usize, cj: usize) -> Vec2 {
        let (u00, u10, u01, u11) = self.corners(ci, cj);
        let g = &self.grid;
        Vec2::new(
            ((u10 + u11) - (u00 + u01)) / (2.0 * g.hx()),
            ((u01 + u11) - (u00 + u10)) / (2.0 * g.hz()),
        )
    }

    /// Average of the four corners of cell `(ci, cj)`.
    pub fn cell_value(&self, ci: usize, cj: usize) -> f64 {
        let (u00, u10, u01, u11) = self.corners(ci, cj);
        0.25 * ((u00 + u10) + (u01 + u11))
    }

    #[inline]
    fn corners(&self, ci: usize, cj: usize) -> (f64, f64, f64, f64) {
        let k = self.grid.index(ci, cj);
        let nx = self.grid.nx;
        (self.values[k], self.values[k + 1], self.values[k + nx], self.values[k + nx + 1])
    }

    /// Bilinear interpolation; points outside are clamped onto the rectangle.
    pub fn sample(&self, p: Vec2) -> f64 {
        let (ci, cj, s, t) = self.grid.locate(p);
        let (u00, u10, u01, u11) = self.corners(ci, cj);
        (1.0 - t) * ((1.0 - s) * u00 + s * u10) + t * ((1.0 - s) * u01 + s * u11)
    }

    /// Gradient of the bilinear interpolant at `p` (one-sided on cell edges).
    pub fn sample_gradient(&self, p: Vec2) -> Vec2 {
        let (ci, cj, s, t) = self.grid.locate(p);
        let (u00, u10, u01, u11) = self.corners(ci, cj);
        let g = &self.grid;
        Vec2::new(
            ((1.0 - t) * (u10 - u00) + t * (u11 - u01)) / g.hx(),
            ((1.0 - s) * (u01 - u00) + s * (u11 - u10)) / g.hz(),
        )
    }
}

/// Monotone C1 ramps on `[0, 1]` with zero slope at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RampShape {
    /// `3t^2 - 2t^3`.
    Smoothstep,
    /// Zero up to `onset`, then a smoothstep rescaled onto `[onset, 1]`.
    PiecewiseCubic { onset: f64 },
}

impl RampShape {
    pub fn eval(&self, t: f64) -> f64 {
        let smooth = |t: f64| {
            let t = t.clamp(0.0, 1.0);
            t * t * (3.0 - 2.0 * t)
        };
        match *self {
            RampShape::Smoothstep => smooth(t),
            RampShape::PiecewiseCubic { onset } => {
                if t <= onset {
                    0.0
                } else {
                    smooth((t - onset) / (1.0 - onset))
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RampShape::Smoothstep => Ok(()),
            RampShape::PiecewiseCubic { onset } if (0.0..1.0).contains(&onset) => Ok(()),
            RampShape::PiecewiseCubic { onset } => Err(Error::InvalidBoundary(format!(
                "ramp onset must lie in [0, 1), got {onset}"
            ))),
        }
    }
}

/// Dirichlet data: lateral datum sampled on both walls plus the top and
/// bottom constants.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    /// `g(0, z_j)`.
    pub left: Vec<f64>,
    /// `g(W, z_j)`.
    pub right: Vec<f64>,
    /// Bottom datum `-m-`.
    pub bottom: f64,
    /// Top datum `m+`.
    pub top: f64,
    /// Whether the lateral data is nondecreasing with flat ends.
    pub monotone: bool,
}

impl BoundaryData {
    /// Validates tabulated wall data against the compatibility conditions and,
    /// when `monotone` is set, the monotonicity hypothesis.
    pub fn tabulated(
        grid: &Grid,
        params: &Params,
        left: Vec<f64>,
        right: Vec<f64>,
        monotone: bool,
    ) -> Result<BoundaryData> {
        params.validate()?;
        for wall in [&left, &right] {
            if wall.len() != grid.nz {
                return Err(Error::DimensionMismatch { expected: grid.nz, found: wall.len() });
            }
        }
        let bc = BoundaryData { left, right, bottom: -params.m_minus, top: params.m_plus, monotone };
        bc.check(grid, params)?;
        Ok(bc)
    }

    fn check(&self, grid: &Grid, params: &Params) -> Result<()> {
        let range = params.m_plus + params.m_minus;
        let tol = 1e-12 * range.max(1.0);
        for (name, wall) in [("left", &self.left), ("right", &self.right)] {
            if wall.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidBoundary(format!("{name} wall has non-finite values")));
            }
            let (first, last) = (wall[0], wall[grid.nz - 1]);
            if (first - self.bottom).abs() > tol || (last - self.top).abs() > tol {
                return Err(Error::InvalidBoundary(format!(
                    "{name} wall is incompatible with the end data: g(0) = {first}, g(L) = {last}, expected {} and {}",
                    self.bottom, self.top
                )));
            }
            if params.is_one_phase() && wall.iter().any(|&v| v < -tol) {
                return Err(Error::InvalidBoundary(format!(
                    "{name} wall must be nonnegative in one-phase mode"
                )));
            }
            if self.monotone {
                if wall.windows(2).any(|w| w[1] < w[0] - tol) {
                    return Err(Error::InvalidBoundary(format!("{name} wall is not nondecreasing")));
                }
                // flat ends: one-sided increments must be second order in hz
                let t = grid.hz() / grid.height;
                let flat = 16.0 * range * t * t + tol;
                let n = grid.nz;
                if wall[1] - wall[0] > flat || wall[n - 1] - wall[n - 2] > flat {
                    return Err(Error::InvalidBoundary(format!(
                        "{name} wall does not have zero slope at the ends"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Constant-in-x data with `profile[j]` at height `z_j` on both walls.
    pub fn from_profile(grid: &Grid, params: &Params, profile: &[f64], monotone: bool) -> Result<BoundaryData> {
        BoundaryData::tabulated(grid, params, profile.to_vec(), profile.to_vec(), monotone)
    }

    /// Dirichlet value at boundary vertex `(i, j)`; `None` in the interior.
    pub fn datum(&self, grid: &Grid, i: usize, j: usize) -> Option<f64> {
        if j == 0 {
            Some(self.bottom)
        } else if j + 1 == grid.nz {
            Some(self.top)
        } else if i == 0 {
            Some(self.left[j])
        } else if i + 1 == grid.nx {
            Some(self.right[j])
        } else {
            None
        }
    }

    /// Per-vertex Dirichlet mask with values.
    pub fn pinned(&self, grid: &Grid) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                out.push(self.datum(grid, i, j));
            }
        }
        out
    }

    /// Every other wall sample, matching a grid with half the vertical resolution.
    pub fn coarsened(&self) -> BoundaryData {
        let thin = |w: &[f64]| w.iter().step_by(2).copied().collect();
        BoundaryData { left: thin(&self.left), right: thin(&self.right), ..self.clone() }
    }

    /// Transfinite (Coons) interpolation of the boundary data into the interior.
    pub fn coons_interpolant(&self, grid: &Grid) -> Field {
        let (nx, nz) = (grid.nx, grid.nz);
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..nz {
            let t = j as f64 / (nz - 1) as f64;
            for i in 0..nx {
                let s = i as f64 / (nx - 1) as f64;
                let v = match self.datum(grid, i, j) {
                    Some(v) => v,
                    None => {
                        let lateral = (1.0 - s) * self.left[j] + s * self.right[j];
                        let vertical = (1.0 - t) * self.bottom + t * self.top;
                        let corners = (1.0 - t) * self.bottom + t * self.top;
                        lateral + vertical - corners
                    }
                };
                values.push(v);
            }
        }
        Field { grid: *grid, values }
    }
}

/// Lateral datum `g(z) = -m- + (m+ + m-) s(z / L)` on both walls.
pub fn make_monotone_g(params: &Params, grid: &Grid, shape: RampShape) -> Result<BoundaryData> {
    params.validate()?;
    shape.validate()?;
    if grid.nz < 3 {
        return Err(Error::InvalidGrid(format!("need nz >= 3, got {}", grid.nz)));
    }
    let range = params.m_plus + params.m_minus;
    let profile: Vec<f64> = (0..grid.nz)
        .map(|j| {
            if j == 0 {
                -params.m_minus
            } else if j + 1 == grid.nz {
                params.m_plus
            } else {
                -params.m_minus + range * shape.eval(grid.z(j) / grid.height)
            }
        })
        .collect();
    BoundaryData::from_profile(grid, params, &profile, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Params {
        Params { p: 3.0, a: 2.0, ell: 1.0, m_plus: 1.0, m_minus: 0.0, eps: 0.01, delta: 0.1 }
    }

    #[test]
    fn enthalpy_examples() {
        let p = params();
        assert_eq!(enthalpy(-1.0, &p), -2.0);
        assert_eq!(enthalpy(1.0, &p), 3.0);
        assert_eq!(enthalpy(0.0, &p), 0.0);
        let flat = Params { a: 0.0, ..p };
        assert!((enthalpy(0.05, &flat) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn enthalpy_lipschitz_and_ramp_comparison() {
        let p = params();
        let lip = p.a + p.ell / p.delta;
        let narrow = p.with_regularization(p.eps, 0.013);
        let mut s = -0.5;
        while s < 0.5 {
            let t = s + 0.0037;
            let q = (enthalpy(t, &p) - enthalpy(s, &p)) / (t - s);
            assert!(q >= 0.0 && q <= lip * (1.0 + 1e-12));
            let diff = (enthalpy(s, &p) - enthalpy(s, &narrow)).abs();
            assert!(diff <= p.ell + 1e-15);
            if s <= 0.0 || s >= p.delta {
                assert!(diff < 1e-15);
            }
            s += 0.0011;
        }
    }

    #[test]
    fn params_validation_collects_messages() {
        let bad = Params { p: 0.5, a: -1.0, ..params() };
        let errs = bad.violations();
        assert!(errs.iter().any(|e| e == "p must exceed 1"));
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn grid_rejects_small_counts() {
        assert!(Grid::new(1.0, 1.0, 2, 5).is_err());
        assert!(Grid::new(1.0, 1.0, 5, 2).is_err());
        assert!(Grid::new(0.0, 1.0, 5, 5).is_err());
        let g = Grid::new(2.0, 1.0, 5, 3).unwrap();
        assert_eq!(g.hx(), 0.5);
        assert_eq!(g.position(4, 2), Vec2::new(2.0, 1.0));
    }

    #[test]
    fn smoothstep_examples() {
        let p = Params { m_minus: 0.0, m_plus: 1.0, ..params() };
        let g = Grid::new(1.0, 1.0, 5, 5).unwrap();
        let bc = make_monotone_g(&p, &g, RampShape::Smoothstep).unwrap();
        assert_eq!(bc.left[0], 0.0);
        assert!((bc.left[2] - 0.5).abs() < 1e-15);
        let two = Params { m_minus: 0.7, ..p };
        let bc = make_monotone_g(&two, &g, RampShape::Smoothstep).unwrap();
        assert_eq!(bc.left[0], -0.7);
        assert_eq!(bc.right[4], 1.0);
    }

    #[test]
    fn forward_difference_vanishes_at_ends() {
        let p = params();
        for n in [9, 33, 129] {
            let g = Grid::new(1.0, 1.0, 3, n).unwrap();
            let bc = make_monotone_g(&p, &g, RampShape::Smoothstep).unwrap();
            let h = g.hz();
            let slope = (bc.left[1] - bc.left[0]) / h;
            assert!(slope.abs() <= 3.0 * h * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tabulated_rejects_incompatible_walls() {
        let p = params();
        let g = Grid::new(1.0, 1.0, 3, 3).unwrap();
        let err = BoundaryData::tabulated(&g, &p, vec![0.1, 0.5, 1.0], vec![0.0, 0.5, 1.0], false);
        assert!(matches!(err, Err(Error::InvalidBoundary(_))));
        let fine = Grid::new(1.0, 1.0, 3, 33).unwrap();
        let linear: Vec<f64> = (0..33).map(|j| j as f64 / 32.0).collect();
        let steep = BoundaryData::tabulated(&fine, &p, linear.clone(), linear, true);
        assert!(steep.is_err());
        assert!(BoundaryData::tabulated(&g, &p, vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0], false).is_ok());
    }

    #[test]
    fn field_interpolation_is_exact_for_bilinear() {
        let g = Grid::new(2.0, 1.0, 5, 7).unwrap();
        let f = |x: f64, z: f64| 1.0 + 2.0 * x - 3.0 * z + 0.5 * x * z;
        let u = Field::from_fn(g, f);
        let p = Vec2::new(0.77, 0.31);
        assert!((u.sample(p) - f(p.x, p.z)).abs() < 1e-13);
        let grad = u.sample_gradient(p);
        assert!((grad.x - (2.0 + 0.5 * p.z)).abs() < 1e-12);
        assert!((grad.z - (-3.0 + 0.5 * p.x)).abs() < 1e-12);
        let c = g.cell_center(1, 2);
        let cg = u.cell_gradient(1, 2);
        assert!((cg.x - (2.0 + 0.5 * c.z)).abs() < 1e-12);
        assert!((u.cell_value(1, 2) - f(c.x, c.z)).abs() < 1e-13);
    }

    #[test]
    fn coons_interpolant_matches_boundary() {
        let p = Params { m_minus: 0.5, ..params() };
        let g = Grid::new(1.0, 1.0, 6, 9).unwrap();
        let bc = make_monotone_g(&p, &g, RampShape::Smoothstep).unwrap();
        let u = bc.coons_interpolant(&g);
        for j in 0..g.nz {
            assert_eq!(u.at(0, j), bc.left[j]);
            assert_eq!(u.at(5, j), bc.right[j]);
            // x-independent walls give x-independent interior
            assert!((u.at(3, j) - bc.left[j]).abs() < 1e-15);
        }
    }

    proptest::proptest! {
        #[test]
        fn enthalpy_is_nondecreasing_with_slope_at_least_a(
            s in -3.0f64..3.0,
            ds in 0.0f64..1.0,
            delta in 1e-3f64..1.0,
        ) {
            let p = Params { delta, ..params() };
            let gain = enthalpy(s + ds, &p) - enthalpy(s, &p);
            proptest::prop_assert!(gain >= p.a * ds - 1e-12);
            proptest::prop_assert!(gain <= (p.a + p.ell / delta) * ds + 1e-12);
        }

        #[test]
        fn interpolation_stays_within_cell_values(x in 0.0f64..1.0, z in 0.0f64..1.0) {
            let u = Field::from_fn(Grid::new(1.0, 1.0, 9, 9).unwrap(), |x, z| (5.0 * x).sin() * (3.0 * z).cos());
            let (lo, hi) = u.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let v = u.sample(Vec2::new(x, z));
            proptest::prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        }
    }
}
