//! Mean-variance portfolio problems and their KKT saddle-point systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{LinearSystem, Provenance};
use crate::error::{Error, Result};
use crate::sparse::{csr_from_triplets, SparseMatrix};

const SYMMETRY_TOL: f64 = 1e-12;

/// `min ½ xᵀΣx` subject to `μᵀx = r_target` and `eᵀx = 1`.
#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    sigma: SparseMatrix,
    mu: Vec<f64>,
    r_target: f64,
}

impl PortfolioProblem {
    /// Builds a problem from a dense covariance given by rows.
    pub fn new(sigma_rows: Vec<Vec<f64>>, mu: Vec<f64>, r_target: f64) -> Result<Self> {
        let n = sigma_rows.len();
        let mut triplets = Vec::with_capacity(n * n);
        for (i, row) in sigma_rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                    context: "covariance row",
                });
            }
            triplets.extend(row.iter().enumerate().map(|(j, &v)| (i, j, v)));
        }
        Self::from_sparse(csr_from_triplets(&triplets, n, n)?, mu, r_target)
    }

    pub fn from_sparse(sigma: SparseMatrix, mu: Vec<f64>, r_target: f64) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::NotSquare {
                n_rows: sigma.n_rows(),
                n_cols: sigma.n_cols(),
            });
        }
        let n = sigma.n_rows();
        if n == 0 {
            return Err(Error::InvalidParameter("portfolio needs at least one asset".into()));
        }
        if mu.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: mu.len(),
                context: "expected returns",
            });
        }
        if !sigma.all_finite() {
            return Err(Error::NonFinite("covariance"));
        }
        if !mu.iter().all(|v| v.is_finite()) || !r_target.is_finite() {
            return Err(Error::NonFinite("expected returns"));
        }
        let scale = sigma.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (i, j, v) in sigma.triplets() {
            let diff = (v - sigma.get(j, i)).abs();
            if diff > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric { row: i, col: j, diff });
            }
        }
        Ok(Self { sigma, mu, r_target })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> &SparseMatrix {
        &self.sigma
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn r_target(&self) -> f64 {
        self.r_target
    }

    /// Replaces the target return, keeping Σ and μ.
    pub fn with_target(mut self, r_target: f64) -> Self {
        self.r_target = r_target;
        self
    }
}

/// Optimal weights and the two Lagrange multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub weights: Vec<f64>,
    /// Multiplier of the full-investment constraint.
    pub lambda1: f64,
    /// Multiplier of the target-return constraint.
    pub lambda2: f64,
}

impl KktSolution {
    /// Splits the stacked unknown of the assembled system. Its last two
    /// entries are `−λ₁` and `−λ₂`, so that stationarity reads
    /// `Σx = λ₁e + λ₂μ`.
    pub fn from_stacked(y: &[f64]) -> Result<Self> {
        if y.len() < 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                actual: y.len(),
                context: "stacked KKT solution",
            });
        }
        let n = y.len() - 2;
        Ok(Self {
            weights: y[..n].to_vec(),
            lambda1: -y[n],
            lambda2: -y[n + 1],
        })
    }

    /// `|eᵀx − 1|`
    pub fn budget_violation(&self) -> f64 {
        (self.weights.iter().sum::<f64>() - 1.0).abs()
    }

    /// `|μᵀx − r_target|`
    pub fn return_violation(&self, p: &PortfolioProblem) -> f64 {
        let ret: f64 = self.weights.iter().zip(&p.mu).map(|(x, m)| x * m).sum();
        (ret - p.r_target).abs()
    }

    /// `‖Σx − λ₁e − λ₂μ‖∞`
    pub fn stationarity(&self, p: &PortfolioProblem) -> f64 {
        let sx = p.sigma.spmv(&self.weights).expect("weights sized to problem");
        sx.iter()
            .zip(&p.mu)
            .map(|(s, m)| (s - self.lambda1 - self.lambda2 * m).abs())
            .fold(0.0, f64::max)
    }
}

/// Assembles `A = [[Σ, e, μ], [eᵀ, 0, 0], [μᵀ, 0, 0]]`, `b = (0, …, 0, 1, r_target)`.
pub fn assemble_kkt(p: &PortfolioProblem) -> Result<LinearSystem> {
    let n = p.n();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(p.sigma.nnz() + 4 * n);
    triplets.extend(p.sigma.triplets());
    for (i, &m) in p.mu.iter().enumerate() {
        triplets.push((i, n, 1.0));
        triplets.push((i, n + 1, m));
        triplets.push((n, i, 1.0));
        triplets.push((n + 1, i, m));
    }
    let a = csr_from_triplets(&triplets, n + 2, n + 2)?;
    let mut b = vec![0.0; n + 2];
    b[n] = 1.0;
    b[n + 1] = p.r_target;
    LinearSystem::new(a, b, Provenance::Portfolio)
}

/// Seeded factor-model covariance `Σ = F Fᵀ + noise · diag(d)`.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub n: usize,
    pub n_factors: usize,
    pub noise: f64,
    /// Idiosyncratic variances are drawn as `d_i = 1 + diag_spread · U[0, 1)`.
    pub diag_spread: f64,
    pub seed: u64,
}

impl FactorModel {
    pub fn new(n: usize, n_factors: usize, noise: f64, seed: u64) -> Self {
        Self {
            n,
            n_factors,
            noise,
            diag_spread: 1.0,
            seed,
        }
    }

    /// Draws the problem. Loadings are standard normal, `μ ~ U[0.01, 0.20]`
    /// and `r_target = mean(μ)`.
    pub fn generate(&self) -> Result<PortfolioProblem> {
        let (n, f) = (self.n, self.n_factors);
        if n == 0 || f > n {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= n and n_factors <= n, got n={n}, n_factors={f}"
            )));
        }
        if !(self.noise > 0.0) || !(self.diag_spread >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise must be positive and diag_spread non-negative, got {} and {}",
                self.noise, self.diag_spread
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let loadings: Vec<f64> = (0..n * f).map(|_| rng.sample(StandardNormal)).collect();
        let diag: Vec<f64> = (0..n)
            .map(|_| 1.0 + self.diag_spread * rng.random::<f64>())
            .collect();
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.20)).collect();

        let mut triplets = Vec::with_capacity(n * n);
        for i in 0..n {
            let fi = &loadings[i * f..(i + 1) * f];
            for j in i..n {
                let fj = &loadings[j * f..(j + 1) * f];
                let mut v: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
                if i == j {
                    v += self.noise * diag[i];
                }
                triplets.push((i, j, v));
                if i != j {
                    triplets.push((j, i, v));
                }
            }
        }
        let sigma = csr_from_triplets(&triplets, n, n)?;
        let r_target = mu.iter().sum::<f64>() / n as f64;
        PortfolioProblem::from_sparse(sigma, mu, r_target)
    }
}

/// [`FactorModel`] with the default idiosyncratic spread.
pub fn generate_covariance(
    n: usize,
    n_factors: usize,
    noise: f64,
    seed: u64,
) -> Result<PortfolioProblem> {
    FactorModel::new(n, n_factors, noise, seed).generate()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    /// Gaussian elimination with partial pivoting; test oracle only.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn single_asset_layout() {
        let p = PortfolioProblem::new(vec![vec![4.0]], vec![0.1], 0.1).unwrap();
        let sys = assemble_kkt(&p).unwrap();
        assert_eq!(
            sys.a.to_dense(),
            vec![vec![4.0, 1.0, 0.1], vec![1.0, 0.0, 0.0], vec![0.1, 0.0, 0.0]]
        );
        assert_eq!(sys.b, vec![0.0, 1.0, 0.1]);
        assert_eq!(sys.provenance, Provenance::Portfolio);
    }

    #[test]
    fn two_asset_solution() {
        let p = PortfolioProblem::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.1, 0.2], 0.15)
            .unwrap();
        let sys = assemble_kkt(&p).unwrap();
        let y = dense_solve(sys.a.to_dense(), sys.b.clone());
        let sol = KktSolution::from_stacked(&y).unwrap();
        for (got, want) in sol.weights.iter().zip([0.5, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((sol.lambda1 - 0.5).abs() < 1e-12);
        assert!(sol.lambda2.abs() < 1e-12);
        assert!(sol.stationarity(&p) < 1e-12);
    }

    #[test]
    fn nonzero_count_and_symmetry() {
        let p = generate_covariance(12, 3, 0.5, 9).unwrap();
        let sys = assemble_kkt(&p).unwrap();
        assert_eq!(sys.a.nnz(), p.sigma().nnz() + 4 * 12);
        for (i, j, v) in sys.a.triplets() {
            assert_eq!(v, sys.a.get(j, i));
        }
    }

    #[test]
    fn pure_noise_is_identity() {
        let mut m = FactorModel::new(5, 0, 1.0, 3);
        m.diag_spread = 0.0;
        let p = m.generate().unwrap();
        assert_eq!(p.sigma(), &SparseMatrix::identity(5));
    }

    #[test]
    fn generator_contract() {
        let a = generate_covariance(30, 4, 0.2, 11).unwrap();
        let b = generate_covariance(30, 4, 0.2, 11).unwrap();
        assert_eq!(a.sigma(), b.sigma());
        assert_eq!(a.mu(), b.mu());
        assert!(a.mu().iter().all(|&m| (0.01..0.20).contains(&m)));
        let mean = a.mu().iter().sum::<f64>() / 30.0;
        assert_eq!(a.r_target(), mean);

        let c = generate_covariance(30, 4, 0.2, 12).unwrap();
        assert_ne!(a.sigma(), c.sigma());

        assert!(generate_covariance(3, 4, 0.1, 0).is_err());
        assert!(generate_covariance(3, 1, 0.0, 0).is_err());
    }

    #[test]
    fn generated_covariance_is_positive_definite() {
        // Cholesky succeeds with every pivot at least noise * min(d) = noise.
        let noise = 0.3;
        let p = generate_covariance(25, 5, noise, 4).unwrap();
        let n = 25;
        let mut l = p.sigma().to_dense();
        for k in 0..n {
            let mut d = l[k][k];
            for j in 0..k {
                d -= l[k][j] * l[k][j];
            }
            assert!(d >= noise * (1.0 - 1e-9), "pivot {k}: {d}");
            let d = d.sqrt();
            l[k][k] = d;
            for i in k + 1..n {
                let mut s = l[i][k];
                for j in 0..k {
                    s -= l[i][j] * l[k][j];
                }
                l[i][k] = s / d;
            }
        }
    }

    #[test]
    fn asymmetric_sigma_rejected() {
        let err = PortfolioProblem::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]], vec![0.1, 0.1], 0.1)
            .unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
    }
}
