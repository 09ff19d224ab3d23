//! Damped Newton on the discrete system, continuation in `(eps, delta)`,
//! the p-harmonic replacement sub-solve and the one-dimensional oracle.

mod oracle;
mod replacement;

pub use oracle::{one_phase_travel, solve_1d_oracle, OracleKind, Profile1D};
pub use replacement::{p_harmonic_replacement, Replacement};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, Model, Scheme};
use crate::domain::{BoundaryData, Field, Grid, Params};
use crate::error::{Error, Result};
use crate::linalg::{SparseLu, Symbolic};

/// Smallest accepted line-search step before giving up.
pub const MIN_STEP: f64 = 1.0 / (1u32 << 20) as f64;

/// Newton trace of one fixed-`(eps, delta)` solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Vertex counts of the grid the stage ran on.
    pub nx: usize,
    pub nz: usize,
    pub eps: f64,
    pub delta: f64,
    pub iterations: usize,
    /// Scaled max-norm residual before each step and after the last one.
    pub residual_norms: Vec<f64>,
    /// Accepted line-search step per iteration.
    pub damping: Vec<f64>,
    pub converged: bool,
}

impl StageReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// A stage result: the iterate and its trace.
#[derive(Debug, Clone)]
pub struct Stage {
    pub field: Field,
    pub report: StageReport,
}

/// Trace of a whole continuation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    pub tolerance: f64,
    pub final_residual: f64,
    pub newton_iterations: usize,
    /// Excluded from serialized output so written reports are reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveReport {
    fn from_stages(stages: Vec<StageReport>, tolerance: f64, wall_time: Duration) -> SolveReport {
        let final_residual = stages.last().map_or(f64::INFINITY, StageReport::final_residual);
        let newton_iterations = stages.iter().map(|s| s.iterations).sum();
        SolveReport { stages, tolerance, final_residual, newton_iterations, wall_time }
    }
}

/// Residual weights that make the convergence test dimensionless: interior
/// rows are divided by `h_x (ell + a M + (M / L)^(p-1))`, Dirichlet rows by `M`,
/// with `M = m+ + m-`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualScale {
    pub interior: f64,
    pub boundary: f64,
}

impl ResidualScale {
    pub fn for_problem(params: &Params, grid: &Grid) -> ResidualScale {
        let m = params.m_plus + params.m_minus;
        let flux = params.ell + params.a * m + (m / grid.height).powf(params.p - 1.0);
        ResidualScale { interior: grid.hx() * flux, boundary: m }
    }
}

/// Newton driver with a cached factorization ordering.
#[derive(Debug, Clone)]
pub struct NewtonSolver {
    asm: Assembler,
    scale: ResidualScale,
    symbolic: Option<Symbolic>,
}

impl NewtonSolver {
    pub fn new(asm: Assembler, scale: ResidualScale) -> NewtonSolver {
        NewtonSolver { asm, scale, symbolic: None }
    }

    pub fn assembler(&self) -> &Assembler {
        &self.asm
    }

    fn scaled(&self, r: &[f64]) -> (f64, f64) {
        let mut inf = 0.0f64;
        let mut sq = 0.0;
        for (v, pin) in r.iter().zip(self.asm.pinned()) {
            let w = if pin.is_some() { self.scale.boundary } else { self.scale.interior };
            let s = v / w;
            inf = inf.max(s.abs());
            sq += s * s;
        }
        (inf, sq.sqrt())
    }

    fn linear_solve(&mut self, jac: &crate::linalg::CsrMatrix, r: &[f64]) -> Result<Vec<f64>> {
        let sym = match self.symbolic.take() {
            Some(s) => s,
            None => Symbolic::with_coordinates(jac, &self.asm.coordinates()),
        };
        let lu = SparseLu::factor(sym, jac)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = lu.solve_refined(jac, &rhs, 1e-12);
        self.symbolic = Some(lu.into_symbolic());
        Ok(step)
    }

    /// Trial point `u + lambda step` with its residual and scaled norms.
    fn trial(&self, u: &Field, step: &[f64], lambda: f64, model: &Model) -> Result<Option<Trial>> {
        let vals: Vec<f64> = u.values().iter().zip(step).map(|(a, d)| a + lambda * d).collect();
        if !vals.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        let field = Field::new(*u.grid(), vals)?;
        let residual = self.asm.residual(&field, model)?;
        let (inf, two) = self.scaled(&residual);
        Ok(Some(Trial { field, residual, inf, two, lambda }))
    }

    /// Newton with backtracking on the scaled 2-norm until the scaled
    /// max-norm drops to `tol`.
    pub fn solve(&mut self, u0: Field, model: &Model, tol: f64, max_iter: usize) -> Result<Stage> {
        let grid = self.asm.grid();
        let mut report = StageReport {
            nx: grid.nx,
            nz: grid.nz,
            eps: model.params.eps,
            delta: model.params.delta,
            iterations: 0,
            residual_norms: Vec::new(),
            damping: Vec::new(),
            converged: false,
        };
        let mut u = u0;
        let mut r = self.asm.residual(&u, model)?;
        let (mut r_inf, mut r_two) = self.scaled(&r);
        report.residual_norms.push(r_inf);
        let mut best = (r_inf, u.clone());
        loop {
            if r_inf <= tol {
                report.converged = true;
                return Ok(Stage { field: u, report });
            }
            if report.iterations >= max_iter {
                return Err(non_convergence(format!("{max_iter} iterations exhausted"), best, report));
            }
            let sys = self.asm.system(&u, model)?;
            let mut step = self.linear_solve(&sys.jacobian, &r)?;
            let mut candidate = self.trial(&u, &step, 1.0, model)?;
            let sufficient = |t: &Trial| t.two < (1.0 - 1e-4 * t.lambda) * r_two || t.inf <= tol;
            // The enthalpy ramp makes the residual only piecewise smooth. When
            // the tangent step crosses a kink and fails, re-linearize with
            // chord slopes along the current step and keep the best full step.
            let mut rounds = 0;
            while rounds < 8 && !candidate.as_ref().is_some_and(&sufficient) {
                rounds += 1;
                let sys = self.asm.system_along(&u, model, &step)?;
                let next = self.linear_solve(&sys.jacobian, &r)?;
                let size = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let change = next.iter().zip(&step).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if change <= 1e-10 * size {
                    break;
                }
                step = next;
                if let Some(t) = self.trial(&u, &step, 1.0, model)? {
                    if candidate.as_ref().is_none_or(|c| t.two < c.two) {
                        candidate = Some(t);
                    }
                }
            }
            let mut accepted = candidate.filter(|t| sufficient(t));
            if accepted.is_none() {
                let sys = self.asm.system(&u, model)?;
                step = self.linear_solve(&sys.jacobian, &r)?;
                let mut lambda = 1.0;
                while accepted.is_none() {
                    lambda *= 0.5;
                    if lambda < MIN_STEP {
                        break;
                    }
                    accepted = self.trial(&u, &step, lambda, model)?.filter(|t| sufficient(t));
                }
            }
            report.iterations += 1;
            match accepted {
                Some(t) => {
                    u = t.field;
                    r = t.residual;
                    r_inf = t.inf;
                    r_two = t.two;
                    report.damping.push(t.lambda);
                    report.residual_norms.push(r_inf);
                    if r_inf < best.0 {
                        best = (r_inf, u.clone());
                    }
                }
                None => {
                    report.damping.push(0.0);
                    return Err(non_convergence("line search stalled below 2^-20".into(), best, report));
                }
            }
        }
    }
}

struct Trial {
    field: Field,
    residual: Vec<f64>,
    inf: f64,
    two: f64,
    lambda: f64,
}

fn non_convergence(reason: String, best: (f64, Field), report: StageReport) -> Error {
    Error::NonConvergence {
        reason,
        best_residual: best.0,
        best: Box::new(Stage { field: best.1, report }),
    }
}

/// Fixed-`(eps, delta)` solve with the default scheme.
pub fn solve_stage(
    u0: Field,
    params: &Params,
    bc: &BoundaryData,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, SolveReport)> {
    solve_stage_with(u0, params, bc, Scheme::default(), tol, max_iter)
}

pub fn solve_stage_with(
    u0: Field,
    params: &Params,
    bc: &BoundaryData,
    scheme: Scheme,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams("tolerance must be positive".into()));
    }
    let start = Instant::now();
    let grid = *u0.grid();
    let asm = Assembler::for_boundary(grid, bc)?;
    let mut newton = NewtonSolver::new(asm, ResidualScale::for_problem(params, &grid));
    let stage = newton.solve(u0, &Model::new(*params, scheme), tol, max_iter)?;
    Ok((stage.field, SolveReport::from_stages(vec![stage.report], tol, start.elapsed())))
}

/// Geometric continuation `eps_k = max(eps0 rho^k, eps_target)`,
/// `delta_k = max(delta0 rho^k, delta_target)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eps0: f64,
    pub delta0: f64,
    pub rho: f64,
    pub eps_target: f64,
    pub delta_target: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    /// Run the early stages on successively halved grids and interpolate.
    pub nested: bool,
}

impl Schedule {
    /// Defaults: start at `0.1 M / L` and `0.1 m+`, halve, stop at
    /// `eps = 1e-3 M / L` and a ramp four cells wide, `delta = 4 h_z m+ / L`.
    /// At `p = 2` eps is zero throughout.
    /// Narrower ramps sit between vertices, where the discrete interface
    /// position depends on how the ramp aligns with the grid.
    pub fn for_problem(params: &Params, grid: &Grid) -> Schedule {
        let m = params.m_plus + params.m_minus;
        let delta_target = 4.0 * grid.hz() * params.m_plus / grid.height;
        // the flux does not depend on eps at p = 2
        let eps_scale = if params.p == 2.0 { 0.0 } else { m / grid.height };
        Schedule {
            eps0: 0.1 * eps_scale,
            delta0: (0.1 * params.m_plus).max(delta_target),
            rho: 0.5,
            eps_target: 1e-3 * eps_scale,
            delta_target,
            tol: 1e-9,
            max_iter: 60,
            scheme: Scheme::default(),
            nested: true,
        }
    }

    /// A schedule whose only stage is the target.
    pub fn single(eps: f64, delta: f64, tol: f64) -> Schedule {
        Schedule {
            eps0: eps,
            delta0: delta,
            rho: 0.5,
            eps_target: eps,
            delta_target: delta,
            tol,
            max_iter: 60,
            scheme: Scheme::default(),
            nested: false,
        }
    }

    pub fn validate(&self, p: f64) -> Result<()> {
        let errs = self.violations(p);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs.join("; ")))
        }
    }

    /// Every violated invariant, as human-readable messages.
    pub fn violations(&self, p: f64) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.rho > 0.0 && self.rho < 1.0) {
            errs.push("rho must lie in (0, 1)".to_string());
        }
        if !(self.delta_target > 0.0 && self.delta0 >= self.delta_target) {
            errs.push("need delta0 >= delta_target > 0".into());
        }
        let eps_ok = if p == 2.0 {
            self.eps_target >= 0.0 && self.eps0 >= self.eps_target
        } else {
            self.eps_target > 0.0 && self.eps0 >= self.eps_target
        };
        if !eps_ok {
            errs.push("need eps0 >= eps_target > 0 (eps_target may be 0 only for p = 2)".into());
        }
        if !(self.tol > 0.0) {
            errs.push("tol must be positive".into());
        }
        if self.max_iter == 0 {
            errs.push("max_iter must be positive".into());
        }
        errs
    }

    /// The `(eps, delta)` pairs visited, ending at the targets.
    pub fn stages(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let (mut e, mut d) = (self.eps0, self.delta0);
        loop {
            let pair = (e.max(self.eps_target), d.max(self.delta_target));
            out.push(pair);
            if pair == (self.eps_target, self.delta_target) || out.len() > 200 {
                break;
            }
            e *= self.rho;
            d *= self.rho;
        }
        out
    }
}

/// Grids with fewer vertices than this are never coarsened further.
const NESTED_MIN_LEN: usize = 4096;

/// Continuation solve from the transfinite interpolant of the boundary data.
///
/// With `schedule.nested`, grids whose spacings can be doubled first run the
/// continuation on the coarser grid (recursively) with twice the ramp width,
/// and only the stages narrower than that are repeated on the fine grid,
/// starting from the bilinear interpolant of the coarse solution.
pub fn solve_casting(
    params: &Params,
    grid: &Grid,
    bc: &BoundaryData,
    schedule: &Schedule,
) -> Result<(Field, SolveReport)> {
    params.validate()?;
    schedule.validate(params.p)?;
    let start = Instant::now();
    let (u, stages) = nested_solve(params, grid, bc, schedule)?;
    Ok((u, SolveReport::from_stages(stages, schedule.tol, start.elapsed())))
}

fn nested_solve(
    params: &Params,
    grid: &Grid,
    bc: &BoundaryData,
    schedule: &Schedule,
) -> Result<(Field, Vec<StageReport>)> {
    let coarse_delta = (2.0 * schedule.delta_target).min(schedule.delta0);
    let coarsenable = schedule.nested
        && grid.len() >= NESTED_MIN_LEN
        && (grid.nx - 1).is_multiple_of(2)
        && (grid.nz - 1).is_multiple_of(2)
        && coarse_delta > schedule.delta_target;
    if !coarsenable {
        return continuation(bc.coons_interpolant(grid), params, bc, schedule, schedule.stages());
    }
    let coarse = Grid::new(grid.width, grid.height, grid.nx.div_ceil(2), grid.nz.div_ceil(2))?;
    let coarse_schedule = Schedule { delta_target: coarse_delta, ..*schedule };
    let (uc, mut reports) = nested_solve(params, &coarse, &bc.coarsened(), &coarse_schedule)?;
    let mut u0 = Field::from_fn(*grid, |x, z| uc.sample(crate::flux::Vec2::new(x, z)));
    for j in 0..grid.nz {
        for i in 0..grid.nx {
            if let Some(v) = bc.datum(grid, i, j) {
                u0.set(i, j, v);
            }
        }
    }
    let (e_last, d_last) = *coarse_schedule.stages().last().expect("schedules are nonempty");
    let rest: Vec<(f64, f64)> = schedule
        .stages()
        .into_iter()
        .filter(|&(e, d)| e <= e_last && d <= d_last && (e, d) != (e_last, d_last))
        .collect();
    let (u, fine) = continuation(u0, params, bc, schedule, rest)?;
    reports.extend(fine);
    Ok((u, reports))
}

/// Continuation solve from a given initial field on its grid alone.
pub fn solve_casting_from(
    u0: Field,
    params: &Params,
    bc: &BoundaryData,
    schedule: &Schedule,
) -> Result<(Field, SolveReport)> {
    params.validate()?;
    schedule.validate(params.p)?;
    let start = Instant::now();
    let (u, stages) = continuation(u0, params, bc, schedule, schedule.stages())?;
    Ok((u, SolveReport::from_stages(stages, schedule.tol, start.elapsed())))
}

fn continuation(
    u0: Field,
    params: &Params,
    bc: &BoundaryData,
    schedule: &Schedule,
    stages: Vec<(f64, f64)>,
) -> Result<(Field, Vec<StageReport>)> {
    let grid = *u0.grid();
    let asm = Assembler::for_boundary(grid, bc)?;
    let mut newton = NewtonSolver::new(asm, ResidualScale::for_problem(params, &grid));
    let mut u = u0;
    let mut reports = Vec::new();
    for (k, (eps, delta)) in stages.into_iter().enumerate() {
        let model = Model::new(params.with_regularization(eps, delta), schedule.scheme);
        let stage = newton
            .solve(u, &model, schedule.tol, schedule.max_iter)
            .map_err(|e| Error::Stage { stage: k, source: Box::new(e) })?;
        u = stage.field;
        reports.push(stage.report);
    }
    Ok((u, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_monotone_g, RampShape};

    fn params(p: f64) -> Params {
        Params { p, a: 1.0, ell: 1.0, m_plus: 1.0, m_minus: 0.0, eps: 0.0, delta: 1e-3 }
    }

    fn setup(p: f64, n: usize) -> (Params, Grid, BoundaryData, Schedule) {
        let params = params(p);
        let grid = Grid::new(1.0, 1.0, n, n).unwrap();
        let bc = make_monotone_g(&params, &grid, RampShape::PiecewiseCubic { onset: 0.25 }).unwrap();
        let schedule = Schedule::for_problem(&params, &grid);
        (params, grid, bc, schedule)
    }

    #[test]
    fn schedule_halves_down_to_the_targets() {
        let (_, grid, _, s) = setup(3.0, 65);
        let stages = s.stages();
        assert_eq!(stages[0], (s.eps0, s.delta0));
        assert_eq!(*stages.last().unwrap(), (s.eps_target, s.delta_target));
        assert!((s.delta_target - 4.0 * grid.hz()).abs() < 1e-15);
        for w in stages.windows(2) {
            assert!(w[1].0 <= w[0].0 && w[1].1 <= w[0].1);
        }
        let (_, _, _, s2) = setup(2.0, 65);
        assert!(s2.stages().iter().all(|&(e, _)| e == 0.0));
        assert!(s2.validate(2.0).is_ok());
        assert!(s2.validate(3.0).is_err());
    }

    #[test]
    fn schedule_violations_are_all_reported() {
        let mut s = Schedule::single(0.1, 0.1, 1e-9);
        s.rho = 1.5;
        s.delta0 = 0.05;
        s.tol = 0.0;
        s.max_iter = 0;
        assert_eq!(s.violations(3.0).len(), 4);
    }

    #[test]
    fn warm_start_from_the_solution_takes_no_steps() {
        let (params, _, bc, s) = setup(3.0, 33);
        let (u, report) = solve_casting(&params, &Grid::new(1.0, 1.0, 33, 33).unwrap(), &bc, &s).unwrap();
        assert!(report.final_residual <= s.tol);
        let single = Schedule::single(s.eps_target, s.delta_target, s.tol);
        let (v, again) = solve_casting_from(u.clone(), &params, &bc, &single).unwrap();
        assert_eq!(again.newton_iterations, 0);
        assert_eq!(u, v);
    }

    #[test]
    fn nested_and_direct_continuation_agree() {
        let (params, grid, bc, s) = setup(3.0, 65);
        let (nested, a) = solve_casting(&params, &grid, &bc, &s).unwrap();
        let direct_schedule = Schedule { nested: false, ..s };
        let (direct, b) = solve_casting(&params, &grid, &bc, &direct_schedule).unwrap();
        assert!(a.stages.iter().any(|st| st.nx < grid.nx));
        assert!(b.stages.iter().all(|st| st.nx == grid.nx));
        let diff = nested.values().iter().zip(direct.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn exhausted_iterations_report_the_best_iterate() {
        let (params, grid, bc, s) = setup(3.0, 17);
        let err = solve_casting(&params, &grid, &bc, &Schedule { max_iter: 1, ..s }).unwrap_err();
        match err {
            Error::Stage { stage: 0, source } => match *source {
                Error::NonConvergence { best_residual, best, .. } => {
                    assert!(best_residual.is_finite());
                    assert_eq!(best.report.iterations, 1);
                }
                other => panic!("unexpected {other}"),
            },
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn invalid_inputs_are_rejected_before_solving() {
        let (params, grid, bc, s) = setup(3.0, 17);
        assert!(solve_casting(&Params { p: 1.0, ..params }, &grid, &bc, &s).is_err());
        assert!(solve_casting(&params, &grid, &bc, &Schedule { eps_target: 0.0, ..s }).is_err());
        let u0 = bc.coons_interpolant(&grid);
        assert!(solve_stage(u0, &params.with_regularization(0.1, 0.1), &bc, 0.0, 10).is_err());
    }

    #[test]
    fn newton_converges_quadratically_near_the_solution() {
        let (params, grid, bc, s) = setup(3.0, 33);
        let (_, report) = solve_casting(&params, &grid, &bc, &s).unwrap();
        let last = report.stages.iter().max_by_key(|st| st.iterations).unwrap();
        let r = &last.residual_norms;
        assert!(last.converged && r.len() >= 3, "{:?}", report.stages);
        // the last two steps gain far more than a linear rate would
        let (a, b, c) = (r[r.len() - 3], r[r.len() - 2], r[r.len() - 1]);
        assert!(c / b < 0.1 * (b / a).max(1e-3) || c < 1e-12, "{r:?}");
    }
}
