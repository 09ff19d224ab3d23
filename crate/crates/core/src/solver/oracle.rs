//! Exact solutions of the problem reduced to the vertical variable.
//!
//! Integrating `(|u'|^{p-2} u')' = beta(u)'` once gives the first integral
//! `|u'|^{p-2} u' - beta(u) = const`. In one-phase mode `u` vanishes below the
//! interface `z0` and `u' = (a u + l)^{1/(p-1)}` above it, so
//! `z - z0 = T(u) := int_0^u (a w + l)^{-1/(p-1)} dw`. For `p = 2` the
//! two-phase profile is a pair of exponentials glued with a flux jump `l`.

use serde::{Deserialize, Serialize};

use crate::domain::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    OnePhase,
    TwoPhaseLinear,
}

/// Sampled one-dimensional profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    pub kind: OracleKind,
    pub params: Params,
    pub length: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub z0: f64,
    /// `|u'|^{p-2} u'` just below and just above `z0`.
    pub flux_below: f64,
    pub flux_above: f64,
}

impl Profile1D {
    /// Exact profile value at height `z`.
    pub fn value(&self, z: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            OracleKind::OnePhase => {
                if z <= self.z0 {
                    0.0
                } else {
                    invert_travel(p, z - self.z0, p.m_plus)
                }
            }
            OracleKind::TwoPhaseLinear => {
                let e = (p.a * (z - self.z0)).exp_m1();
                if z <= self.z0 {
                    self.flux_below / p.a * e
                } else {
                    self.flux_above / p.a * e
                }
            }
        }
    }

    /// Exact derivative at height `z` (one-sided at `z0`: the upper value).
    pub fn slope(&self, z: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            OracleKind::OnePhase => {
                if z < self.z0 {
                    0.0
                } else {
                    (p.a * self.value(z) + p.ell).powf(1.0 / (p.p - 1.0))
                }
            }
            OracleKind::TwoPhaseLinear => {
                let e = (p.a * (z - self.z0)).exp();
                if z < self.z0 {
                    self.flux_below * e
                } else {
                    self.flux_above * e
                }
            }
        }
    }

    /// Flux jump across the interface, equal to `l`.
    pub fn flux_jump(&self) -> f64 {
        self.flux_above - self.flux_below
    }
}

/// 8-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const PANELS: usize = 32;

/// `T(u) = int_0^u (a w + l)^{-1/(p-1)} dw` by composite Gauss-Legendre quadrature.
pub fn one_phase_travel(params: &Params, u: f64) -> f64 {
    let q = 1.0 / (params.p - 1.0);
    let h = u / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let mid = (k as f64 + 0.5) * h;
        let mut panel = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let s = mid + 0.5 * h * x;
            panel += w * (params.a * s + params.ell).powf(-q);
        }
        total += 0.5 * h * panel;
    }
    total
}

/// Solves `T(u) = d` for `u` in `[0, u_max]` by bisection.
fn invert_travel(params: &Params, d: f64, u_max: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, u_max);
    // T is increasing with slope at least (a u_max + l)^{-1/(p-1)}, so grow
    // the bracket if rounding put the target beyond u_max
    while one_phase_travel(params, hi) < d {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if one_phase_travel(params, mid) < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The exact x-independent profile sampled at `nz` equispaced heights.
pub fn solve_1d_oracle(params: &Params, length: f64, nz: usize) -> Result<Profile1D> {
    params.validate()?;
    if !(length > 0.0) || nz < 2 {
        return Err(Error::InvalidGrid(format!("need L > 0 and nz >= 2 (L = {length}, nz = {nz})")));
    }
    let (kind, z0, flux_below, flux_above) = if params.is_one_phase() {
        let travel = one_phase_travel(params, params.m_plus);
        let z0 = length - travel;
        if z0 <= 0.0 {
            return Err(Error::Infeasible(format!(
                "full liquid: the liquid profile needs height {travel} > L = {length}"
            )));
        }
        (OracleKind::OnePhase, z0, 0.0, params.ell)
    } else if params.p == 2.0 {
        let (a, ell) = (params.a, params.ell);
        let lower = |z0: f64| a * params.m_minus / -(-a * z0).exp_m1();
        let mismatch = |z0: f64| (lower(z0) + ell) * (a * (length - z0)).exp_m1() / a - params.m_plus;
        let (mut lo, mut hi) = (0.0, length);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mismatch(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z0 = 0.5 * (lo + hi);
        let c = lower(z0);
        (OracleKind::TwoPhaseLinear, z0, c, c + ell)
    } else {
        return Err(Error::InvalidParams(
            "the one-dimensional oracle needs m_minus = 0 or p = 2".into(),
        ));
    };
    let mut profile = Profile1D {
        kind,
        params: *params,
        length,
        z: Vec::with_capacity(nz),
        u: Vec::with_capacity(nz),
        z0,
        flux_below,
        flux_above,
    };
    for j in 0..nz {
        let z = if j + 1 == nz { length } else { length * j as f64 / (nz - 1) as f64 };
        let u = if j == 0 {
            -params.m_minus
        } else if j + 1 == nz {
            params.m_plus
        } else {
            profile.value(z)
        };
        profile.z.push(z);
        profile.u.push(u);
    }
    Ok(profile)
}
