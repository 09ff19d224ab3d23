//! Regularity diagnostics on a computed field: z-monotonicity, growth away
//! from free-boundary points, Campanato decay of the gradient, local
//! p-energy, Hopf barrier comparison and the free-boundary gradient bound.

use serde::{Deserialize, Serialize};

use crate::domain::{Field, Grid, Params};
use crate::error::{Error, Result};
use crate::flux::{barrier_gamma, barrier_value, hopf_lambda, Vec2};
use crate::freeboundary::{self, FreeBoundary, Probe};

/// Version tag written into every report.
pub const REPORT_SCHEMA: &str = "castflow-report v1";

/// Smallest forward difference `(u(x, z + hz) - u(x, z)) / hz`.
pub fn monotonicity_min(u: &Field) -> f64 {
    let g = u.grid();
    let mut min = f64::INFINITY;
    for j in 0..g.nz - 1 {
        for i in 0..g.nx {
            min = min.min((u.at(i, j + 1) - u.at(i, j)) / g.hz());
        }
    }
    min
}

fn vertex_range(lo: f64, hi: f64, h: f64, n: usize) -> std::ops::RangeInclusive<usize> {
    let a = (lo / h).ceil().max(0.0) as usize;
    let b = ((hi / h).floor().max(0.0) as usize).min(n - 1);
    a..=b
}

/// Vertices `(i, j)` within distance `r` of `c`.
fn vertices_in_ball(g: &Grid, c: Vec2, r: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
    let is = vertex_range(c.x - r, c.x + r, g.hx(), g.nx);
    let js = vertex_range(c.z - r, c.z + r, g.hz(), g.nz);
    js.flat_map(move |j| is.clone().map(move |i| (i, j)))
        .filter(move |&(i, j)| (g.position(i, j) - c).norm() <= r)
}

/// Cells whose centers lie within distance `r` of `c`.
fn cells_in_ball(g: &Grid, c: Vec2, r: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
    let lo_i = ((c.x - r) / g.hx() - 0.5).ceil().max(0.0) as usize;
    let hi_i = (((c.x + r) / g.hx() - 0.5).floor().max(0.0) as usize).min(g.nx - 2);
    let lo_j = ((c.z - r) / g.hz() - 0.5).ceil().max(0.0) as usize;
    let hi_j = (((c.z + r) / g.hz() - 0.5).floor().max(0.0) as usize).min(g.nz - 2);
    (lo_j..=hi_j)
        .flat_map(move |cj| (lo_i..=hi_i).map(move |ci| (ci, cj)))
        .filter(move |&(ci, cj)| (g.cell_center(ci, cj) - c).norm() <= r)
}

/// Least-squares fit of `ln y = ln C + alpha ln r`; returns `(alpha, C, rms)`.
fn log_fit(r: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = r.len() as f64;
    let lx: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha = sxy / sxx;
    let b = my - alpha * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - b - alpha * x).powi(2)).sum();
    (alpha, b.exp(), (rss / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallKind {
    /// Balls inside the domain.
    Interior,
    /// Center on the boundary; balls are cut by the domain.
    HalfBall,
}

/// Growth of `u` on dyadic balls around a free-boundary point `X0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub center: Vec2,
    pub kind: BallKind,
    pub radii: Vec<f64>,
    /// `sup_{B_r} u`, floored at 0.
    pub sup_values: Vec<f64>,
    /// Average of `u^+` over the cells of `B_r`.
    pub mean_values: Vec<f64>,
    pub exponent: f64,
    pub constant: f64,
    /// RMS residual of the log-log fit.
    pub fit_residual: f64,
    pub mean_exponent: f64,
    pub mean_constant: f64,
}

/// Fits `sup_{B_r(X0)} u ~ C r^alpha` over radii `r_min 2^k <= r_max`.
/// `r_min` is raised to two cells. Centers closer to the boundary than that
/// use half-balls; otherwise balls must stay inside the domain.
pub fn growth_fit(u: &Field, x0: Vec2, r_min: f64, r_max: f64) -> Result<GrowthFit> {
    let g = u.grid();
    if !g.contains(x0) {
        return Err(Error::OutsideDomain(format!("center ({}, {})", x0.x, x0.z)));
    }
    let h = g.hx().max(g.hz());
    let r_min = r_min.max(2.0 * h);
    let dist = g.distance_to_boundary(x0);
    let kind = if dist < r_min { BallKind::HalfBall } else { BallKind::Interior };
    let limit = match kind {
        BallKind::Interior => r_max.min(dist),
        BallKind::HalfBall => {
            // distance to the sides that do not pass through the center
            let far = [x0.x, g.width - x0.x, x0.z, g.height - x0.z]
                .into_iter()
                .filter(|&d| d >= r_min)
                .fold(f64::INFINITY, f64::min);
            r_max.min(far)
        }
    };
    let mut fit = GrowthFit {
        center: x0,
        kind,
        radii: Vec::new(),
        sup_values: Vec::new(),
        mean_values: Vec::new(),
        exponent: f64::NAN,
        constant: f64::NAN,
        fit_residual: f64::NAN,
        mean_exponent: f64::NAN,
        mean_constant: f64::NAN,
    };
    let mut r = r_min;
    while r <= limit * (1.0 + 1e-12) {
        let sup = vertices_in_ball(g, x0, r).map(|(i, j)| u.at(i, j)).fold(0.0, f64::max);
        let (mut sum, mut count) = (0.0, 0usize);
        for (ci, cj) in cells_in_ball(g, x0, r) {
            sum += u.cell_value(ci, cj).max(0.0);
            count += 1;
        }
        if sup > 0.0 && sum > 0.0 {
            fit.radii.push(r);
            fit.sup_values.push(sup);
            fit.mean_values.push(sum / count as f64);
        }
        r *= 2.0;
    }
    if fit.radii.len() < 3 {
        return Err(Error::TooFewRadii { found: fit.radii.len(), needed: 3 });
    }
    (fit.exponent, fit.constant, fit.fit_residual) = log_fit(&fit.radii, &fit.sup_values);
    (fit.mean_exponent, fit.mean_constant, _) = log_fit(&fit.radii, &fit.mean_values);
    Ok(fit)
}

/// Campanato quantity `phi(r) = sup_{t <= r} ||grad u - (grad u)_{X0,t}||_{L2(B_t)}`
/// sampled at `r = R 2^-k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub center: Vec2,
    /// Decreasing radii `R, R/2, ...`.
    pub radii: Vec<f64>,
    /// L2 oscillation of the gradient on each ball.
    pub oscillation: Vec<f64>,
    pub phi: Vec<f64>,
    /// `phi(r) / r^(N/2)` with `N = 2`.
    pub normalized: Vec<f64>,
    /// Mean of `|grad u - (grad u)_{X0,t}|` on each ball.
    pub mean_oscillation: Vec<f64>,
}

impl DecayProfile {
    /// Largest factor by which a normalized value departs from the coarsest one.
    pub fn spread(&self) -> f64 {
        let first = self.normalized[0];
        self.normalized.iter().map(|&v| (v / first).max(first / v)).fold(1.0, f64::max)
    }
}

pub fn campanato_profile(u: &Field, x0: Vec2, radius: f64, levels: usize) -> Result<DecayProfile> {
    let g = u.grid();
    if levels == 0 || !(radius > 0.0) || g.distance_to_boundary(x0) < radius {
        return Err(Error::OutsideDomain(format!(
            "ball of radius {radius} at ({}, {}) with {levels} levels",
            x0.x, x0.z
        )));
    }
    let deepest = radius / 2f64.powi(levels as i32 - 1);
    if deepest < 1.5 * g.hx().max(g.hz()) {
        return Err(Error::BallTooSmall(format!("deepest radius {deepest} spans fewer than 3 cells")));
    }
    let area = g.cell_area();
    let mut prof = DecayProfile {
        center: x0,
        radii: Vec::new(),
        oscillation: Vec::new(),
        phi: Vec::new(),
        normalized: Vec::new(),
        mean_oscillation: Vec::new(),
    };
    for k in 0..levels {
        let t = radius / 2f64.powi(k as i32);
        let grads: Vec<Vec2> = cells_in_ball(g, x0, t).map(|(ci, cj)| u.cell_gradient(ci, cj)).collect();
        let n = grads.len() as f64;
        let mean = grads.iter().fold(Vec2::ZERO, |s, &v| s + v) * (1.0 / n);
        let sq: f64 = grads.iter().map(|&v| (v - mean).norm_sq()).sum();
        let abs: f64 = grads.iter().map(|&v| (v - mean).norm()).sum();
        prof.radii.push(t);
        prof.oscillation.push((sq * area).sqrt());
        prof.mean_oscillation.push(abs / n);
    }
    // running sup over the smaller radii
    let mut run = 0.0f64;
    let mut phi = vec![0.0; levels];
    for k in (0..levels).rev() {
        run = run.max(prof.oscillation[k]);
        phi[k] = run;
    }
    prof.normalized = phi.iter().zip(&prof.radii).map(|(f, r)| f / r).collect();
    prof.phi = phi;
    Ok(prof)
}

/// `int_{B_{3r/4}} |grad u|^p` over cells whose centers lie in the ball.
pub fn caccioppoli_energy(u: &Field, center: Vec2, r: f64, p: f64) -> Result<f64> {
    let g = u.grid();
    if !(r > 0.0) || g.distance_to_boundary(center) < r {
        return Err(Error::OutsideDomain(format!(
            "ball of radius {r} at ({}, {})",
            center.x, center.z
        )));
    }
    let sum: f64 = cells_in_ball(g, center, 0.75 * r).map(|(ci, cj)| u.cell_gradient(ci, cj).norm().powf(p)).sum();
    Ok(sum * g.cell_area())
}

/// Barrier comparison on one tangent disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfDisc {
    pub touch: Vec2,
    pub center: Vec2,
    pub radius: f64,
    pub gamma: f64,
    /// `min (u - level - b)` over the vertices of the annulus `r/2 <= |X - Y| <= r`.
    pub margin: f64,
    /// `(u(touch - h nu) - level) / h` with `h` the smaller spacing.
    pub derivative: f64,
}

/// Compares `u - level` with the barrier of the disc of radius `r` tangent at
/// `touch` from the side opposite to `normal`. The barrier is the unit-disc
/// barrier `gamma (exp(-lambda s^2) - exp(-lambda))` in the scaled variable
/// `s = |X - Y| / r`, `lambda = 2(N+p-2)/(p-1)`, with `gamma` fixed by the
/// infimum of `u - level` over the half-radius disc. Fails when the disc
/// leaves the domain or contains vertices outside `{u > level}` farther than
/// one cell from its rim.
pub fn hopf_check(u: &Field, level: f64, touch: Vec2, normal: Vec2, r: f64, p: f64) -> Result<HopfDisc> {
    let g = u.grid();
    let center = touch - normal * r;
    if g.distance_to_boundary(center) < r {
        return Err(Error::OutsideDomain("tangent disc leaves the domain".into()));
    }
    let h = g.hx().max(g.hz());
    let mut inf_half = f64::INFINITY;
    for (i, j) in vertices_in_ball(g, center, r - h) {
        let v = u.at(i, j) - level;
        if v <= 0.0 {
            return Err(Error::OutsideDomain("tangent disc crosses the free boundary".into()));
        }
        if (g.position(i, j) - center).norm() <= 0.5 * r {
            inf_half = inf_half.min(v);
        }
    }
    // the vertices alone overestimate the infimum by O(h); add the circle
    inf_half = inf_half.min(u.sample(center + normal * (0.5 * r)) - level);
    let samples = 8 * (2.0 * r / h).ceil().max(8.0) as usize;
    for k in 0..samples {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
        let x = center + Vec2::new(angle.cos(), angle.sin()) * (0.5 * r);
        inf_half = inf_half.min(u.sample(x) - level);
    }
    if !(inf_half > 0.0) {
        return Err(Error::OutsideDomain("half-radius disc touches the free boundary".into()));
    }
    let lambda = hopf_lambda(p, 2);
    let gamma = barrier_gamma(inf_half, 1.0, lambda);
    let barrier = |x: Vec2| barrier_value((x - center) * (1.0 / r), 1.0, gamma, lambda);
    let mut margin = u.sample(touch) - level - barrier(touch);
    for (i, j) in vertices_in_ball(g, center, r) {
        let x = g.position(i, j);
        if (x - center).norm() >= 0.5 * r {
            margin = margin.min(u.at(i, j) - level - barrier(x));
        }
    }
    let step = g.hx().min(g.hz());
    let derivative = (u.sample(touch - normal * step) - level) / step;
    Ok(HopfDisc { touch, center, radius: r, gamma, margin, derivative })
}

/// Result of [`hopf_check`] at one interface point; `disc` is `None` when
/// no admissible tangent disc exists there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfSample {
    pub point: usize,
    pub disc: Option<HopfDisc>,
}

pub fn hopf_margin(u: &Field, params: &Params, fb: &FreeBoundary, r: f64) -> Vec<HopfSample> {
    fb.points
        .iter()
        .enumerate()
        .map(|(k, pt)| HopfSample {
            point: k,
            disc: hopf_check(u, fb.level, pt.position, pt.normal, r, params.p).ok(),
        })
        .collect()
}

/// The Hopf barrier of the disc `B_r(center)` in unit-disc scaling,
/// sampled at the vertices of `grid`.
pub fn barrier_field(grid: Grid, center: Vec2, r: f64, gamma: f64, p: f64) -> Field {
    let lambda = hopf_lambda(p, 2);
    Field::from_fn(grid, |x, z| barrier_value((Vec2::new(x, z) - center) * (1.0 / r), 1.0, gamma, lambda))
}

/// Largest `|grad u|` sampled at the probe distance on the positive side of
/// the interface points whose probe stays inside the domain.
pub fn fb_gradient_bound(u: &Field, fb: &FreeBoundary, probe: Probe) -> Option<f64> {
    let g = u.grid();
    let d = probe.cells * g.hx().min(g.hz());
    fb.points
        .iter()
        .filter(|pt| g.distance_to_boundary(pt.position) >= d)
        .map(|pt| u.sample_gradient(pt.position - pt.normal * d).norm())
        .reduce(f64::max)
}

/// Width along the normal of the liquid-side smoothing layer `0 < u < delta`,
/// across which `|grad u|^(p-1)` climbs to about `ell`. One-sided probes
/// start outside it.
pub fn smoothing_width(params: &Params) -> f64 {
    params.delta / params.ell.powf(1.0 / (params.p - 1.0))
}

/// `probe` cells beyond the smoothing layer, expressed in cells of `grid`.
pub fn effective_probe(params: &Params, grid: &Grid, probe: Probe) -> Probe {
    Probe { cells: probe.cells + smoothing_width(params) / grid.hx().min(grid.hz()) }
}

/// Which points and radii [`analyze`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Level whose boundary `d{u > level}` is the free boundary.
    pub level: f64,
    /// Probe distance in cells beyond [`smoothing_width`].
    pub probe: Probe,
    /// Largest growth-fit radius, as a fraction of `min(W, L)`.
    pub growth_radius: f64,
    /// Coarsest Campanato radius, as a fraction of `min(W, L)`.
    pub campanato_radius: f64,
    pub campanato_levels: usize,
    /// Tangent-disc radius, as a fraction of `min(W, L)`.
    pub hopf_radius: f64,
    /// Radius of the Caccioppoli ball at the domain center, as a fraction of
    /// `min(W, L)`; the half-size ball is measured too.
    pub caccioppoli_radius: f64,
}

impl Default for AnalysisOptions {
    fn default() -> AnalysisOptions {
        AnalysisOptions {
            level: 0.0,
            probe: Probe::default(),
            growth_radius: 0.25,
            campanato_radius: 0.15,
            campanato_levels: 4,
            hopf_radius: 0.1,
            caccioppoli_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StefanSummary {
    pub probe_distance: f64,
    pub checked: usize,
    pub skipped: usize,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfSummary {
    pub radius: f64,
    pub checked: usize,
    pub flagged: usize,
    pub min_margin: Option<f64>,
    pub min_derivative: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliSample {
    pub center: Vec2,
    pub radius: f64,
    pub energy: f64,
}

/// Everything [`analyze`] measures; serialized as the versioned JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub level: f64,
    pub monotonicity_min: f64,
    pub graph_deviation: f64,
    /// `graph_deviation / h_z`.
    pub graph_deviation_cells: f64,
    pub growth: Vec<GrowthFit>,
    pub campanato: Vec<DecayProfile>,
    pub stefan: StefanSummary,
    pub hopf: HopfSummary,
    pub caccioppoli: Vec<CaccioppoliSample>,
    pub fb_gradient_max: Option<f64>,
}

/// Interface points used for point-wise diagnostics: the ones nearest to
/// the quarter, middle and three-quarter columns.
pub fn probe_points(fb: &FreeBoundary, grid: &Grid) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    for frac in [0.25, 0.5, 0.75] {
        let target = frac * grid.width;
        let best = fb
            .points
            .iter()
            .filter(|p| grid.distance_to_boundary(p.position) > 0.0)
            .min_by(|a, b| (a.position.x - target).abs().total_cmp(&(b.position.x - target).abs()));
        if let Some(p) = best {
            if !out.contains(&p.position) {
                out.push(p.position);
            }
        }
    }
    out
}

/// Points where the free boundary meets the lateral walls above the bottom.
pub fn contact_points(fb: &FreeBoundary, grid: &Grid) -> Vec<Vec2> {
    fb.points
        .iter()
        .filter(|p| (p.column == 0 || p.column + 1 == grid.nx) && p.position.z > 0.0 && p.position.z < grid.height)
        .map(|p| p.position)
        .collect()
}

/// Runs every diagnostic on `u`.
pub fn analyze(u: &Field, params: &Params, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let g = *u.grid();
    let scale = g.width.min(g.height);
    let fb = freeboundary::extract(u, opts.level);
    let graph_deviation = freeboundary::graph_deviation(&fb);

    let interior = probe_points(&fb, &g);
    let mut growth = Vec::new();
    for &x0 in interior.iter().chain(&contact_points(&fb, &g)) {
        if let Ok(fit) = growth_fit(u, x0, 0.0, opts.growth_radius * scale) {
            growth.push(fit);
        }
    }
    let campanato = interior
        .iter()
        .filter_map(|&x0| campanato_profile(u, x0, opts.campanato_radius * scale, opts.campanato_levels).ok())
        .collect();
    let center = Vec2::new(0.5 * g.width, 0.5 * g.height);
    let mut caccioppoli = Vec::new();
    for r in [opts.caccioppoli_radius * scale, 0.5 * opts.caccioppoli_radius * scale] {
        if let Ok(energy) = caccioppoli_energy(u, center, r, params.p) {
            caccioppoli.push(CaccioppoliSample { center, radius: r, energy });
        }
    }

    let h = g.hx().min(g.hz());
    let probe = effective_probe(params, &g, opts.probe);
    let stefan = freeboundary::stefan_residual(u, &fb, params, probe);
    let values: Vec<f64> = stefan.iter().filter_map(|s| s.residual.map(f64::abs)).collect();
    let stefan = StefanSummary {
        probe_distance: probe.cells * h,
        checked: values.len(),
        skipped: stefan.len() - values.len(),
        median: freeboundary::median_abs(&stefan),
        max: values.iter().copied().reduce(f64::max),
    };

    let r = opts.hopf_radius * scale;
    let discs: Vec<HopfDisc> = hopf_margin(u, params, &fb, r).into_iter().filter_map(|s| s.disc).collect();
    let hopf = HopfSummary {
        radius: r,
        checked: discs.len(),
        flagged: fb.points.len() - discs.len(),
        min_margin: discs.iter().map(|d| d.margin).reduce(f64::min),
        min_derivative: discs.iter().map(|d| d.derivative).reduce(f64::min),
    };

    Ok(AnalysisReport {
        schema: REPORT_SCHEMA.to_string(),
        level: opts.level,
        monotonicity_min: monotonicity_min(u),
        graph_deviation,
        graph_deviation_cells: graph_deviation / g.hz(),
        growth,
        campanato,
        stefan,
        hopf,
        caccioppoli,
        fb_gradient_max: fb_gradient_bound(u, &fb, probe),
    })
}
