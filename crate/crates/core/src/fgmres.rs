//! Restarted flexible GMRES with right block-QR preconditioning.
//!
//! Each restart cycle asks a [`BlockSizeChooser`] for the block size, rebuilds
//! the preconditioner only when the size changes, runs up to `restart`
//! Arnoldi steps on the preconditioned vectors `Z`, and forms the update
//! `x += Z y`. The true residual `b - A x` is recomputed at the end of every
//! cycle and is the only quantity used to certify convergence.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::dense::DEFAULT_REG_EPS;
use crate::error::{Error, Result};
use crate::precond::{plan_partition, BlockQrPreconditioner};
use crate::sparse::{dot, norm2, SparseMatrix};

/// Relative threshold on `h[j+1][j]` that signals a happy breakdown.
pub const HAPPY_BREAKDOWN_TOL: f64 = 1e-14;

/// Header of the per-cycle trace CSV.
pub const TRACE_CSV_HEADER: &str = "cycle,block_size,inner_iters,matvecs,rel_residual,elapsed_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    /// Krylov dimension per cycle.
    pub restart: usize,
    pub max_cycles: usize,
    /// Run modified Gram-Schmidt twice per step.
    pub reorthogonalize: bool,
    /// Pivot floor handed to the block QR solves.
    pub reg_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            restart: 20,
            max_cycles: 200,
            reorthogonalize: true,
            reg_eps: DEFAULT_REG_EPS,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.restart == 0 || !(self.reg_eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "solver config needs tol > 0, restart >= 1, reg_eps > 0 (got tol={}, restart={}, reg_eps={})",
                self.tol, self.restart, self.reg_eps
            )));
        }
        Ok(())
    }
}

/// Solver state handed to a [`BlockSizeChooser`] at the start of each cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverObservation {
    /// Relative true residual entering this cycle.
    pub rel_residual: f64,
    /// Relative residual entering the previous cycle, if any.
    pub prev_rel_residual: Option<f64>,
    /// Zero-based index of the cycle about to run.
    pub cycle: usize,
    pub max_cycles: usize,
    /// Block size used in the previous cycle.
    pub block_size: Option<usize>,
    pub n: usize,
    pub restart: usize,
}

/// Number of entries in [`SolverObservation::features`].
pub const OBS_DIM: usize = 6;

impl SolverObservation {
    /// Fixed-length summary used as the policy input:
    ///
    /// 0. `log10(rel_residual)` clamped to `[-16, 2]`
    /// 1. `log10` decrement over the previous cycle (0 on the first), clamped to `[-18, 18]`
    /// 2. `cycle / max_cycles`
    /// 3. `log2(block size) / log2(max_action)` (0 before the first choice)
    /// 4. `log10(n) / 8`
    /// 5. `restart / 64`
    pub fn features(&self, max_action: usize) -> [f64; OBS_DIM] {
        let lr = safe_log10(self.rel_residual).clamp(-16.0, 2.0);
        let dec = match self.prev_rel_residual {
            Some(prev) => (safe_log10(prev).clamp(-16.0, 2.0) - lr).clamp(-18.0, 18.0),
            None => 0.0,
        };
        let progress = if self.max_cycles == 0 {
            0.0
        } else {
            (self.cycle as f64 / self.max_cycles as f64).min(1.0)
        };
        let bs = match (self.block_size, max_action) {
            (Some(k), m) if m > 1 => ((k.max(1) as f64).log2() / (m as f64).log2()).min(1.0),
            _ => 0.0,
        };
        [
            lr,
            dec,
            progress,
            bs,
            (self.n.max(1) as f64).log10() / 8.0,
            self.restart as f64 / 64.0,
        ]
    }
}

fn safe_log10(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v.log10()
    } else if v.is_infinite() {
        f64::MAX.log10()
    } else {
        -300.0
    }
}

/// Picks a block size at the start of each restart cycle.
pub trait BlockSizeChooser {
    fn choose(&mut self, obs: &SolverObservation) -> usize;
}

impl<F: FnMut(&SolverObservation) -> usize> BlockSizeChooser for F {
    fn choose(&mut self, obs: &SolverObservation) -> usize {
        self(obs)
    }
}

/// Fixed block size baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantChooser(pub usize);

impl BlockSizeChooser for ConstantChooser {
    fn choose(&mut self, _obs: &SolverObservation) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxCycles,
    Breakdown,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::MaxCycles => "max_cycles",
            Outcome::Breakdown => "breakdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    /// One-based cycle number.
    pub cycle: usize,
    pub block_size: usize,
    pub inner_iters: usize,
    /// Cumulative matrix-vector products, including the residual check.
    pub matvecs: usize,
    pub rel_residual: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<CycleRecord>,
    pub outcome: Outcome,
}

impl SolveTrace {
    pub fn cycles(&self) -> usize {
        self.records.len()
    }

    pub fn matvecs(&self) -> usize {
        self.records.last().map_or(0, |r| r.matvecs)
    }

    pub fn inner_iters(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }

    pub fn final_rel_residual(&self) -> f64 {
        self.records.last().map_or(1.0, |r| r.rel_residual)
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed_ms)
    }

    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    /// Appends another trace, renumbering cycles and offsetting the
    /// cumulative counters. The outcome becomes the appended one.
    pub fn extend(&mut self, other: &SolveTrace) {
        let base_cycle = self.cycles();
        let base_mv = self.matvecs();
        let base_ms = self.elapsed_ms();
        self.records.extend(other.records.iter().map(|r| CycleRecord {
            cycle: base_cycle + r.cycle,
            matvecs: base_mv + r.matvecs,
            elapsed_ms: base_ms + r.elapsed_ms,
            ..r.clone()
        }));
        self.outcome = other.outcome;
    }

    /// Serializes with [`TRACE_CSV_HEADER`]; floats use shortest round-trip
    /// formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{:e},{}",
                r.cycle, r.block_size, r.inner_iters, r.matvecs, r.rel_residual, r.elapsed_ms
            );
        }
        out
    }

    /// Parses a trace CSV. The outcome is not stored in the file; it is
    /// inferred as converged when the last residual meets `tol`.
    pub fn from_csv(text: &str, tol: f64) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_CSV_HEADER => {}
            _ => {
                return Err(Error::Malformed {
                    path: "<trace>".into(),
                    line: 1,
                    message: format!("expected header `{TRACE_CSV_HEADER}`"),
                })
            }
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Malformed {
                path: "<trace>".into(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, got {}", fields.len())));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(e.to_string()));
            let float = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
            records.push(CycleRecord {
                cycle: int(fields[0])?,
                block_size: int(fields[1])?,
                inner_iters: int(fields[2])?,
                matvecs: int(fields[3])?,
                rel_residual: float(fields[4])?,
                elapsed_ms: float(fields[5])?,
            });
        }
        let outcome = match records.last() {
            Some(r) if r.rel_residual <= tol * (1.0 + 1e-9) => Outcome::Converged,
            _ => Outcome::MaxCycles,
        };
        Ok(Self { records, outcome })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub trace: SolveTrace,
}

/// Result of a single Arnoldi step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Continue,
    /// `h[j+1][j]` vanished: the exact solution lies in the current subspace.
    HappyBreakdown,
    /// `A z_j` or its orthogonalized form was not finite.
    NonFinite,
}

/// Flexible Arnoldi basis for one restart cycle.
///
/// After `k` steps it holds `V` (k+1 orthonormal columns, or k after a happy
/// breakdown), `Z` (k columns), the unrotated Hessenberg `H̄` and its
/// Givens-rotated triangular form with the rotated right-hand side `g`.
#[derive(Debug, Clone)]
pub struct ArnoldiState {
    n: usize,
    v: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    /// Column j of `H̄`, length j + 2.
    h: Vec<Vec<f64>>,
    /// Column j after Givens rotations, length j + 1.
    r: Vec<Vec<f64>>,
    g: Vec<f64>,
    rotations: Vec<(f64, f64)>,
    beta: f64,
    reorthogonalize: bool,
}

impl ArnoldiState {
    /// Starts a cycle from residual `r0` (must be non-zero).
    pub fn new(r0: &[f64], reorthogonalize: bool) -> Self {
        let beta = norm2(r0);
        let v0 = r0.iter().map(|x| x / beta).collect();
        Self {
            n: r0.len(),
            v: vec![v0],
            z: Vec::new(),
            h: Vec::new(),
            r: Vec::new(),
            g: vec![beta],
            rotations: Vec::new(),
            beta,
            reorthogonalize,
        }
    }

    /// Completed steps.
    pub fn steps(&self) -> usize {
        self.z.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn preconditioned(&self) -> &[Vec<f64>] {
        &self.z
    }

    /// Columns of the unrotated Hessenberg matrix `H̄`.
    pub fn hessenberg(&self) -> &[Vec<f64>] {
        &self.h
    }

    pub fn rotations(&self) -> &[(f64, f64)] {
        &self.rotations
    }

    /// Rotated right-hand side `g` (starts as `β e₁`).
    pub fn rotated_rhs(&self) -> &[f64] {
        &self.g
    }

    /// Latest basis vector `v_j`, the one to precondition next.
    pub fn current(&self) -> &[f64] {
        self.v.last().expect("basis never empty")
    }

    /// Step `j = steps()`: `w = A z_j`, orthogonalize against `v_0..v_j` with
    /// modified Gram-Schmidt (twice when enabled), store `h[..][j]` and, unless
    /// a breakdown occurs, append `v_{j+1} = w / h[j+1][j]`.
    pub fn arnoldi_step(&mut self, a: &SparseMatrix, z_j: Vec<f64>) -> StepStatus {
        let j = self.z.len();
        debug_assert_eq!(self.v.len(), j + 1, "basis already terminated");
        let mut w = vec![0.0; self.n];
        a.spmv_into(&z_j, &mut w);
        self.z.push(z_j);
        let w_norm0 = norm2(&w);
        let mut col = vec![0.0; j + 2];
        if !w_norm0.is_finite() {
            self.h.push(col);
            return StepStatus::NonFinite;
        }
        let passes = if self.reorthogonalize { 2 } else { 1 };
        for _ in 0..passes {
            for (i, vi) in self.v.iter().enumerate() {
                let hij = dot(vi, &w);
                col[i] += hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
        }
        let h_next = norm2(&w);
        col[j + 1] = h_next;
        self.h.push(col);
        if !h_next.is_finite() {
            return StepStatus::NonFinite;
        }
        if h_next <= HAPPY_BREAKDOWN_TOL * w_norm0 {
            return StepStatus::HappyBreakdown;
        }
        w.iter_mut().for_each(|x| *x /= h_next);
        self.v.push(w);
        StepStatus::Continue
    }

    /// Applies stored rotations to the newest column, forms the rotation that
    /// annihilates its sub-diagonal entry and updates `g`. Returns `|g[j+1]|`,
    /// the minimal residual norm over the current subspace.
    pub fn ls_update(&mut self) -> f64 {
        let j = self.r.len();
        let mut col = self.h[j].clone();
        for (i, &(c, s)) in self.rotations.iter().enumerate() {
            let (a, b) = (col[i], col[i + 1]);
            col[i] = c * a + s * b;
            col[i + 1] = -s * a + c * b;
        }
        let (a, b) = (col[j], col[j + 1]);
        let rho = a.hypot(b);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, b / rho) };
        col[j] = rho;
        col.truncate(j + 1);
        self.rotations.push((c, s));
        self.r.push(col);
        let gj = self.g[j];
        self.g[j] = c * gj;
        self.g.push(-s * gj);
        self.g[j + 1].abs()
    }

    /// Least-squares coefficients `y` from `R y = g[..k]`.
    pub fn coefficients(&self) -> Vec<f64> {
        let k = self.r.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = self.g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                acc -= self.r[jj][i] * yj;
            }
            let d = self.r[i][i];
            y[i] = if d != 0.0 { acc / d } else { 0.0 };
        }
        y
    }

    /// Flexible update direction `Z y`.
    pub fn update_direction(&self) -> Vec<f64> {
        let y = self.coefficients();
        let mut dx = vec![0.0; self.n];
        for (zj, yj) in self.z.iter().zip(&y) {
            for (d, zk) in dx.iter_mut().zip(zj) {
                *d += yj * zk;
            }
        }
        dx
    }
}

/// What an observer sees at the end of each cycle.
#[derive(Debug)]
pub struct CycleReport<'a> {
    pub record: &'a CycleRecord,
    pub state: &'a ArnoldiState,
    /// Givens residual estimates `|g[j+1]|` after each inner step.
    pub estimates: &'a [f64],
    /// `‖b − A x‖` recomputed after the update.
    pub true_residual: f64,
}

/// Restarted FGMRES with a per-cycle block size choice. `x₀ = 0`.
pub fn fgmres_solve(
    a: &SparseMatrix,
    b: &[f64],
    chooser: &mut dyn BlockSizeChooser,
    config: &SolverConfig,
) -> Result<SolveResult> {
    fgmres_solve_observed(a, b, chooser, config, &mut |_| {})
}

/// [`fgmres_solve`] with a fixed, prebuilt preconditioner.
pub fn fgmres_solve_fixed(
    a: &SparseMatrix,
    b: &[f64],
    precond: &BlockQrPreconditioner,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let mut source = PrecondSource::Fixed(precond);
    run(a, b, &mut source, config, &mut |_| {})
}

/// [`fgmres_solve`] calling `observer` after every cycle.
pub fn fgmres_solve_observed(
    a: &SparseMatrix,
    b: &[f64],
    chooser: &mut dyn BlockSizeChooser,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&CycleReport<'_>),
) -> Result<SolveResult> {
    let mut source = PrecondSource::Adaptive {
        chooser,
        current: None,
    };
    run(a, b, &mut source, config, observer)
}

enum PrecondSource<'c, 'p> {
    Adaptive {
        chooser: &'c mut dyn BlockSizeChooser,
        current: Option<BlockQrPreconditioner>,
    },
    Fixed(&'p BlockQrPreconditioner),
}

impl PrecondSource<'_, '_> {
    fn select(
        &mut self,
        a: &SparseMatrix,
        obs: &SolverObservation,
        reg_eps: f64,
    ) -> Result<&BlockQrPreconditioner> {
        match self {
            PrecondSource::Fixed(p) => Ok(*p),
            PrecondSource::Adaptive { chooser, current } => {
                let n = a.n_rows();
                let k = chooser.choose(obs).clamp(1, n);
                if current.as_ref().map(|p| p.block_size()) != Some(k) {
                    *current = Some(BlockQrPreconditioner::build(
                        a,
                        plan_partition(n, k)?,
                        reg_eps,
                    )?);
                }
                Ok(current.as_ref().expect("just built"))
            }
        }
    }
}

fn run(
    a: &SparseMatrix,
    b: &[f64],
    source: &mut PrecondSource<'_, '_>,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&CycleReport<'_>),
) -> Result<SolveResult> {
    config.validate()?;
    if !a.is_square() {
        return Err(Error::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.len(),
            context: "right-hand side",
        });
    }
    if let PrecondSource::Fixed(p) = source {
        if p.partition().n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: p.partition().n(),
                context: "preconditioner size",
            });
        }
    }
    let b_norm = norm2(b);
    if !b_norm.is_finite() {
        return Err(Error::NonFinite("right-hand side"));
    }
    if b_norm == 0.0 {
        return Err(Error::InvalidParameter("right-hand side must be non-zero".into()));
    }

    let start = Instant::now();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut rel = 1.0;
    let mut prev_rel: Option<f64> = None;
    let mut last_k: Option<usize> = None;
    let mut matvecs = 0usize;
    let mut records = Vec::new();
    let mut estimates = Vec::with_capacity(config.restart);
    let mut z = vec![0.0; n];

    for cycle in 0..config.max_cycles {
        let obs = SolverObservation {
            rel_residual: rel,
            prev_rel_residual: prev_rel,
            cycle,
            max_cycles: config.max_cycles,
            block_size: last_k,
            n,
            restart: config.restart,
        };
        let precond = source.select(a, &obs, config.reg_eps)?;
        let k = precond.block_size();

        let mut state = ArnoldiState::new(&r, config.reorthogonalize);
        estimates.clear();
        let mut status = StepStatus::Continue;
        for _ in 0..config.restart {
            precond.apply_into(state.current(), &mut z);
            status = state.arnoldi_step(a, z.clone());
            matvecs += 1;
            if status == StepStatus::NonFinite {
                break;
            }
            let est = state.ls_update();
            estimates.push(est);
            if status == StepStatus::HappyBreakdown || est <= config.tol * b_norm {
                break;
            }
        }

        let inner_iters = state.steps();
        let mut outcome = None;
        if status == StepStatus::NonFinite {
            outcome = Some(Outcome::Breakdown);
        } else {
            let dx = state.update_direction();
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
            if candidate.iter().all(|v| v.is_finite()) {
                x = candidate;
            } else {
                outcome = Some(Outcome::Breakdown);
            }
        }

        a.spmv_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        matvecs += 1;
        let r_norm = norm2(&r);
        let new_rel = r_norm / b_norm;

        let record = CycleRecord {
            cycle: cycle + 1,
            block_size: k,
            inner_iters,
            matvecs,
            rel_residual: new_rel,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer(&CycleReport {
            record: &record,
            state: &state,
            estimates: &estimates,
            true_residual: r_norm,
        });
        records.push(record);

        if outcome.is_none() {
            if !new_rel.is_finite() {
                outcome = Some(Outcome::Breakdown);
            } else if new_rel <= config.tol {
                outcome = Some(Outcome::Converged);
            } else if status == StepStatus::HappyBreakdown && new_rel >= rel {
                // Subspace exhausted without progress; restarting repeats it.
                outcome = Some(Outcome::Breakdown);
            }
        }
        if let Some(outcome) = outcome {
            return Ok(SolveResult {
                x,
                trace: SolveTrace { records, outcome },
            });
        }
        prev_rel = Some(rel);
        rel = new_rel;
        last_k = Some(k);
    }

    Ok(SolveResult {
        x,
        trace: SolveTrace {
            records,
            outcome: Outcome::MaxCycles,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::csr_from_triplets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_precond(n: usize) -> BlockQrPreconditioner {
        BlockQrPreconditioner::with_block_size(&SparseMatrix::identity(n), 1).unwrap()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let res = fgmres_solve(&a, &b, &mut ConstantChooser(2), &SolverConfig::default()).unwrap();
        assert!(res.trace.converged());
        assert_eq!(res.trace.cycles(), 1);
        assert_eq!(res.trace.records[0].inner_iters, 1);
        for (x, y) in res.x.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_arnoldi_happy_breakdown() {
        let a = SparseMatrix::identity(3);
        let mut st = ArnoldiState::new(&[1.0, 0.0, 0.0], true);
        let status = st.arnoldi_step(&a, vec![1.0, 0.0, 0.0]);
        assert_eq!(status, StepStatus::HappyBreakdown);
        assert_eq!(st.hessenberg()[0], vec![1.0, 0.0]);
        assert!(st.ls_update() <= 1e-12 * st.beta());
    }

    #[test]
    fn two_by_two_exhausts_krylov_space() {
        let a = csr_from_triplets(&[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)], 2, 2)
            .unwrap();
        let p = identity_precond(2);
        let res = fgmres_solve_fixed(&a, &[1.0, 2.0], &p, &SolverConfig::default()).unwrap();
        assert!(res.trace.converged());
        assert!(res.trace.inner_iters() <= 2);
        assert!((res.x[0] - 0.2).abs() < 1e-12);
        assert!((res.x[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn exact_preconditioner_one_iteration() {
        let mut t = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for blk in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let v = rng.random_range(-1.0..1.0) + if i == j { 5.0 } else { 0.0 };
                    t.push((blk * 4 + i, blk * 4 + j, v));
                }
            }
        }
        let a = csr_from_triplets(&t, 16, 16).unwrap();
        let b: Vec<f64> = (0..16).map(|i| i as f64 + 1.0).collect();
        let res = fgmres_solve(&a, &b, &mut ConstantChooser(4), &SolverConfig::default()).unwrap();
        assert!(res.trace.converged());
        assert_eq!(res.trace.inner_iters(), 1);
        assert!(res.trace.matvecs() <= 2);
    }

    #[test]
    fn chooser_is_clamped() {
        let a = SparseMatrix::identity(4);
        let res = fgmres_solve(&a, &[1.0; 4], &mut ConstantChooser(1_000_000), &SolverConfig::default())
            .unwrap();
        assert_eq!(res.trace.records[0].block_size, 4);
        let res = fgmres_solve(&a, &[1.0; 4], &mut ConstantChooser(0), &SolverConfig::default()).unwrap();
        assert_eq!(res.trace.records[0].block_size, 1);
    }

    #[test]
    fn constant_chooser_matches_fixed_preconditioner() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.random::<f64>()));
            for _ in 0..3 {
                t.push((i, rng.random_range(0..n), rng.random_range(-1.0..1.0)));
            }
        }
        let a = csr_from_triplets(&t, n, n).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cfg = SolverConfig { restart: 5, ..Default::default() };
        let adaptive = fgmres_solve(&a, &b, &mut ConstantChooser(6), &cfg).unwrap();
        let p = BlockQrPreconditioner::with_block_size(&a, 6).unwrap();
        let fixed = fgmres_solve_fixed(&a, &b, &p, &cfg).unwrap();
        assert_eq!(adaptive.x, fixed.x);
        assert_eq!(adaptive.trace.cycles(), fixed.trace.cycles());
        for (u, v) in adaptive.trace.records.iter().zip(&fixed.trace.records) {
            assert_eq!(u.rel_residual, v.rel_residual);
            assert_eq!(u.matvecs, v.matvecs);
        }
    }

    #[test]
    fn stalled_solve_hits_cycle_cap() {
        // Cyclic shift: GMRES makes no progress until the subspace spans R^n.
        let n = 12;
        let t: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        let a = csr_from_triplets(&t, n, n).unwrap();
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let cfg = SolverConfig { restart: 3, max_cycles: 7, ..Default::default() };
        let res = fgmres_solve(&a, &b, &mut ConstantChooser(1), &cfg).unwrap();
        assert_eq!(res.trace.outcome, Outcome::MaxCycles);
        assert_eq!(res.trace.cycles(), 7);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = SparseMatrix::identity(3);
        let cfg = SolverConfig::default();
        assert!(fgmres_solve(&a, &[0.0; 3], &mut ConstantChooser(1), &cfg).is_err());
        assert!(fgmres_solve(&a, &[1.0; 2], &mut ConstantChooser(1), &cfg).is_err());
        let bad = SolverConfig { restart: 0, ..Default::default() };
        assert!(fgmres_solve(&a, &[1.0; 3], &mut ConstantChooser(1), &bad).is_err());
    }

    #[test]
    fn singular_preconditioner_stays_finite_or_reports_breakdown() {
        // Zero diagonal everywhere: point blocks are all regularized.
        let a = csr_from_triplets(&[(0, 1, 1.0), (1, 0, 1.0)], 2, 2).unwrap();
        let res = fgmres_solve(&a, &[1.0, 2.0], &mut ConstantChooser(1), &SolverConfig::default())
            .unwrap();
        assert!(res.x.iter().all(|v| v.is_finite()));
        assert!(res.trace.converged());
    }

    #[test]
    fn observation_features_ranges() {
        let obs = SolverObservation {
            rel_residual: 1e-30,
            prev_rel_residual: Some(10.0),
            cycle: 3,
            max_cycles: 10,
            block_size: Some(16),
            n: 1000,
            restart: 20,
        };
        let f = obs.features(64);
        assert_eq!(f[0], -16.0);
        assert_eq!(f[1], 17.0);
        assert!((f[2] - 0.3).abs() < 1e-15);
        assert!((f[3] - 4.0 / 6.0).abs() < 1e-15);
        assert!((f[4] - 3.0 / 8.0).abs() < 1e-15);
        assert!((f[5] - 20.0 / 64.0).abs() < 1e-15);

        let first = SolverObservation { rel_residual: 0.0, prev_rel_residual: None, block_size: None, ..obs };
        let f = first.features(1);
        assert!(f.iter().all(|v| v.is_finite()));
        assert_eq!(f[1], 0.0);
        assert_eq!(f[3], 0.0);
    }

    #[test]
    fn trace_csv_round_trip() {
        let a = SparseMatrix::identity(3);
        let res = fgmres_solve(&a, &[1.0, 2.0, 3.0], &mut ConstantChooser(1), &SolverConfig::default())
            .unwrap();
        let csv = res.trace.to_csv();
        assert!(csv.starts_with(TRACE_CSV_HEADER));
        let back = SolveTrace::from_csv(&csv, 1e-8).unwrap();
        assert_eq!(back, res.trace);
        assert!(SolveTrace::from_csv("nope\n", 1e-8).is_err());
    }
}
