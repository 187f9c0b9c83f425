//! European call pricing with the fully implicit finite-difference scheme.
//!
//! The price grid is `S_i = i ΔS`, `i = 0..=m`, with Dirichlet values
//! `V(0, t) = 0` and `V(S_max, t) = S_max − K e^{−r(T−t)}`. Each backward time
//! step solves the tridiagonal system over the `m − 1` interior nodes.

use super::{LinearSystem, Provenance};
use crate::error::{Error, Result};
use crate::fgmres::{fgmres_solve, BlockSizeChooser, SolveTrace, SolverConfig};
use crate::sparse::csr_from_triplets;

#[derive(Debug, Clone, PartialEq)]
pub struct BsParams {
    /// Annualized volatility.
    pub sigma: f64,
    /// Annualized risk-free rate.
    pub r: f64,
    pub strike: f64,
    /// Upper bound of the price domain.
    pub s_max: f64,
    /// Number of price subintervals.
    pub m: usize,
    /// Time to expiry in years.
    pub t_expiry: f64,
    pub n_steps: usize,
}

impl BsParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.strike > 0.0) || !(self.s_max > self.strike) {
            return fail("need s_max > strike > 0");
        }
        if self.m < 3 {
            return fail("need m >= 3 price subintervals");
        }
        if self.n_steps == 0 {
            return fail("need n_steps >= 1");
        }
        if !(self.sigma >= 0.0) || !self.r.is_finite() || !(self.t_expiry > 0.0) {
            return fail("need sigma >= 0, finite r and t_expiry > 0");
        }
        Ok(())
    }

    pub fn ds(&self) -> f64 {
        self.s_max / self.m as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_expiry / self.n_steps as f64
    }

    /// Grid node `S_i = i ΔS`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.ds()
    }

    /// Lower Dirichlet value; a call is worthless at `S = 0`.
    pub fn lower_boundary(&self, _t: f64) -> f64 {
        0.0
    }

    /// Upper Dirichlet value at calendar time `t`.
    pub fn upper_boundary(&self, t: f64) -> f64 {
        self.s_max - self.strike * (-self.r * (self.t_expiry - t)).exp()
    }
}

/// Coefficients of one interior row: `−α V_{i−1} + B V_i − γ V_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsCoefficients {
    pub alpha: f64,
    pub b_diag: f64,
    pub gamma: f64,
}

pub fn bs_coefficients(s_i: f64, p: &BsParams) -> BsCoefficients {
    let (dt, ds) = (p.dt(), p.ds());
    let diffusion = p.sigma * p.sigma * s_i * s_i / (ds * ds);
    let drift = p.r * s_i / ds;
    BsCoefficients {
        alpha: 0.5 * dt * (diffusion - drift),
        gamma: 0.5 * dt * (diffusion + drift),
        b_diag: 1.0 + dt * (diffusion + p.r),
    }
}

/// Call payoff `max(s − k, 0)`.
pub fn payoff(s: f64, k: f64) -> f64 {
    (s - k).max(0.0)
}

/// Payoff at the `m − 1` interior nodes.
pub fn terminal_values(p: &BsParams) -> Vec<f64> {
    (1..p.m).map(|i| payoff(p.node(i), p.strike)).collect()
}

/// System for the unknown level `t_index` (time `t_index · Δt`) given the
/// interior values `v_next` at level `t_index + 1`.
pub fn assemble_bs_system(p: &BsParams, v_next: &[f64], t_index: usize) -> Result<LinearSystem> {
    p.validate()?;
    let interior = p.m - 1;
    if v_next.len() != interior {
        return Err(Error::DimensionMismatch {
            expected: interior,
            actual: v_next.len(),
            context: "interior option values",
        });
    }
    if t_index >= p.n_steps {
        return Err(Error::InvalidParameter(format!(
            "time index {t_index} must be below n_steps = {}",
            p.n_steps
        )));
    }
    let mut triplets = Vec::with_capacity(3 * interior);
    let mut first = None;
    let mut last = None;
    for row in 0..interior {
        let c = bs_coefficients(p.node(row + 1), p);
        if row > 0 {
            triplets.push((row, row - 1, -c.alpha));
        }
        triplets.push((row, row, c.b_diag));
        if row + 1 < interior {
            triplets.push((row, row + 1, -c.gamma));
        }
        if row == 0 {
            first = Some(c);
        }
        if row + 1 == interior {
            last = Some(c);
        }
    }
    let a = csr_from_triplets(&triplets, interior, interior)?;

    let t = t_index as f64 * p.dt();
    let mut b = v_next.to_vec();
    b[0] += first.expect("interior non-empty").alpha * p.lower_boundary(t);
    b[interior - 1] += last.expect("interior non-empty").gamma * p.upper_boundary(t);
    LinearSystem::new(a, b, Provenance::OptionStep)
}

/// Finite-difference prices at `t = 0` together with the concatenated
/// per-step solver trace.
#[derive(Debug, Clone)]
pub struct BsPricing {
    pub params: BsParams,
    /// Interior values `V_1..V_{m−1}` at `t = 0`.
    pub interior: Vec<f64>,
    pub trace: SolveTrace,
}

impl BsPricing {
    /// Full grid `V_0..V_m` at `t = 0`, boundaries included.
    pub fn grid_values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.params.m + 1);
        v.push(0.0);
        v.extend_from_slice(&self.interior);
        v.push(self.params.upper_boundary(0.0));
        v
    }

    /// Linear interpolation between grid nodes.
    pub fn price_at(&self, spot: f64) -> Result<f64> {
        let p = &self.params;
        if !(0.0..=p.s_max).contains(&spot) {
            return Err(Error::InvalidParameter(format!(
                "spot {spot} outside [0, {}]",
                p.s_max
            )));
        }
        let grid = self.grid_values();
        let pos = spot / p.ds();
        let i = (pos.floor() as usize).min(p.m - 1);
        let w = pos - i as f64;
        Ok((1.0 - w) * grid[i] + w * grid[i + 1])
    }
}

/// Marches from the payoff at `T` back to `t = 0`, one FGMRES solve per step.
pub fn bs_backward_solve(
    p: &BsParams,
    config: &SolverConfig,
    chooser: &mut dyn BlockSizeChooser,
) -> Result<BsPricing> {
    p.validate()?;
    let mut v = terminal_values(p);
    let mut trace = SolveTrace {
        records: Vec::new(),
        outcome: crate::fgmres::Outcome::Converged,
    };
    for t_index in (0..p.n_steps).rev() {
        let sys = assemble_bs_system(p, &v, t_index)?;
        let res = fgmres_solve(&sys.a, &sys.b, chooser, config)?;
        trace.extend(&res.trace);
        if !res.trace.converged() {
            return Err(Error::StepNotConverged {
                step: t_index,
                rel_residual: res.trace.final_rel_residual(),
            });
        }
        v = res.x;
    }
    Ok(BsPricing {
        params: p.clone(),
        interior: v,
        trace,
    })
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Closed-form Black–Scholes European call value.
pub fn analytic_bs_call(s: f64, k: f64, t: f64, r: f64, sigma: f64) -> f64 {
    let vol = sigma * t.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * t) / vol;
    let d2 = d1 - vol;
    s * norm_cdf(d1) - k * (-r * t).exp() * norm_cdf(d2)
}
