//! (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and rank-one plus rank-mu
//! covariance updates, using the standard default learning rates for dimension `n`.
//!
//! `tell` takes objectives to be *maximized*; they are negated internally. Non-finite
//! objectives rank last, and ties keep candidate order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::SearchSpace;
use crate::error::{Error, Result};

/// Smallest admissible covariance eigenvalue.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Upper clip offset used when decoding continuous coordinates.
pub const DECODE_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CmaEsConfig {
    /// Population size; `None` means `4 + floor(3 ln n)`.
    pub population: Option<usize>,
}

impl Default for CmaEsConfig {
    fn default() -> Self {
        Self { population: None }
    }
}

#[derive(Clone, Debug)]
pub struct CmaEs {
    dim: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,

    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: usize,

    basis: DMatrix<f64>,
    scales: DVector<f64>,
}

impl CmaEs {
    pub fn new(mean: Vec<f64>, sigma: f64, config: CmaEsConfig) -> Self {
        let n = mean.len();
        assert!(n > 0, "CMA-ES needs at least one dimension");
        assert!(sigma > 0.0, "initial step size must be positive");
        let nf = n as f64;
        let lambda = config
            .population
            .unwrap_or(4 + (3.0 * nf.ln()).floor() as usize)
            .max(2);
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        Self {
            dim: n,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
        }
    }

    /// Starts at the centre of `[0, K)^L` with `sigma = K / 6`.
    pub fn for_space(space: &SearchSpace, config: CmaEsConfig) -> Self {
        let k = space.n_categories as f64;
        Self::new(vec![k / 2.0; space.n_layers], k / 6.0, config)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn population_size(&self) -> usize {
        self.lambda
    }

    pub fn parents(&self) -> usize {
        self.mu
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Eigenvalues of the covariance as last decomposed (`D^2`).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.scales.iter().map(|d| d * d).collect()
    }

    /// Draws `lambda` candidates `mean + sigma * B * D * z`.
    pub fn ask<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<Vec<f64>> {
        self.decompose();
        (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = &self.basis * z.component_mul(&self.scales);
                (&self.mean + self.sigma * y).iter().copied().collect()
            })
            .collect()
    }

    /// Updates the distribution from a full generation.
    pub fn tell(&mut self, candidates: &[Vec<f64>], objectives: &[f64]) -> Result<()> {
        if candidates.len() != self.lambda || objectives.len() != self.lambda {
            return Err(Error::contract(format!(
                "tell expects {} candidates and objectives, got {} and {}",
                self.lambda,
                candidates.len(),
                objectives.len()
            )));
        }
        if candidates.iter().any(|c| c.len() != self.dim) {
            return Err(Error::contract("candidate dimension mismatch"));
        }
        let n = self.dim as f64;
        // ascending cost = descending objective; non-finite last; stable by index
        let cost = |v: f64| if v.is_finite() { -v } else { f64::INFINITY };
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| cost(objectives[a]).total_cmp(&cost(objectives[b])));

        let old_mean = self.mean.clone();
        let steps: Vec<DVector<f64>> = order[..self.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(self.dim);
        for (w, y) in self.weights.iter().zip(&steps) {
            y_w += *w * y;
        }
        self.mean = &old_mean + self.sigma * &y_w;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_y = &self.basis * (self.basis.transpose() * &y_w).component_div(&self.scales);
        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt() * inv_sqrt_y;

        self.generation += 1;
        let ps_norm = self.p_sigma.norm();
        let denom = (1.0 - (1.0 - self.c_sigma).powi(2 * self.generation as i32)).sqrt();
        let h_sigma = ps_norm / denom / self.chi_n < 1.4 + 2.0 / (n + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };

        self.p_c = (1.0 - self.c_c) * &self.p_c
            + h * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (w, y) in self.weights.iter().zip(&steps) {
            rank_mu += *w * y * y.transpose();
        }
        let delta_h = (1.0 - h) * self.c_c * (2.0 - self.c_c);
        self.cov = (1.0 - self.c_1 - self.c_mu) * &self.cov
            + self.c_1 * (&self.p_c * self.p_c.transpose() + delta_h * &self.cov)
            + self.c_mu * rank_mu;

        self.sigma *= ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            self.sigma = f64::MIN_POSITIVE;
        }
        self.decompose();
        Ok(())
    }

    /// Symmetrizes `C`, refreshes `B` and `D`, and floors eigenvalues at [`EIGEN_FLOOR`].
    fn decompose(&mut self) {
        let mut attempt = 0;
        loop {
            self.cov = (&self.cov + self.cov.transpose()) * 0.5;
            let eig = if self.cov.iter().all(|v| v.is_finite()) {
                self.cov.clone().try_symmetric_eigen(1e-15, 10_000)
            } else {
                None
            };
            match eig {
                Some(eig) if eig.eigenvalues.iter().all(|v| v.is_finite()) => {
                    let clamped = eig.eigenvalues.iter().any(|&v| v < EIGEN_FLOOR);
                    let values = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
                    self.basis = eig.eigenvectors;
                    self.scales = values.map(f64::sqrt);
                    if clamped {
                        self.cov = &self.basis * DMatrix::from_diagonal(&values) * self.basis.transpose();
                        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
                    }
                    return;
                }
                _ if attempt == 0 => {
                    attempt += 1;
                    self.cov = self.cov.map(|v| if v.is_finite() { v } else { 0.0 });
                    for i in 0..self.dim {
                        self.cov[(i, i)] = self.cov[(i, i)].max(EIGEN_FLOOR);
                    }
                }
                _ => {
                    self.cov = DMatrix::identity(self.dim, self.dim);
                    self.basis = DMatrix::identity(self.dim, self.dim);
                    self.scales = DVector::from_element(self.dim, 1.0);
                    return;
                }
            }
        }
    }

    /// Largest `|C_ij - C_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.cov[(i, j)] - self.cov[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Clips each coordinate into `[0, K - 1e-9]` and floors it to a category index.
pub fn decode_continuous(x: &[f64], n_categories: usize) -> Vec<usize> {
    let upper = n_categories as f64 - DECODE_MARGIN;
    x.iter()
        .map(|&v| {
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, upper) };
            (v.floor() as usize).min(n_categories - 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn default_population() {
        assert_eq!(CmaEs::new(vec![0.0; 5], 1.0, CmaEsConfig::default()).population_size(), 8);
        let ten = CmaEs::new(vec![0.0; 10], 1.0, CmaEsConfig::default());
        assert_eq!(ten.population_size(), 10);
        assert_eq!(ten.parents(), 5);
        assert!((ten.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ten.weights().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_continuous(&[0.2, 47.9, 23.5, 1.0, 46.99], 48),
            vec![0, 47, 23, 1, 46]
        );
        assert_eq!(decode_continuous(&[-3.0, 48.0, f64::INFINITY, f64::NAN], 48), vec![0, 47, 47, 0]);
    }

    #[test]
    fn tiny_sigma_collapses_onto_mean() {
        let mut cma = CmaEs::new(vec![1.0, -2.0, 3.0], 1e-12, CmaEsConfig::default());
        for x in cma.ask(&mut rng_from_seed(0)) {
            for (xi, mi) in x.iter().zip(cma.mean.iter()) {
                assert!((xi - mi).abs() <= 1e-9 * 3f64.sqrt());
            }
        }
    }

    #[test]
    fn equal_objectives_move_mean_to_weighted_parents() {
        let mut cma = CmaEs::new(vec![0.0; 4], 1.0, CmaEsConfig::default());
        let cands = cma.ask(&mut rng_from_seed(3));
        let mut expected = vec![0.0; 4];
        for (w, c) in cma.weights().to_vec().iter().zip(&cands) {
            for (e, v) in expected.iter_mut().zip(c) {
                *e += w * v;
            }
        }
        let sigma_before = cma.sigma;
        cma.tell(&cands, &vec![0.5; cands.len()]).unwrap();
        for (m, e) in cma.mean.iter().zip(&expected) {
            assert!((m - e).abs() < 1e-12);
        }
        assert_ne!(cma.sigma, sigma_before);
    }

    #[test]
    fn wrong_batch_size_is_rejected() {
        let mut cma = CmaEs::new(vec![0.0; 4], 1.0, CmaEsConfig::default());
        let cands = cma.ask(&mut rng_from_seed(3));
        assert!(cma.tell(&cands[1..], &vec![0.0; cands.len() - 1]).is_err());
    }
}
