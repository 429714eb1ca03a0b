//! Sampler benchmarks with known optima.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::samplers::{study_run, CmaEs, CmaEsConfig, Evaluation, Method, SearchSpace, StudyOptions, TpeConfig};
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::stats::median;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphereRun {
    pub seed: u64,
    pub best: f64,
    pub evaluations: usize,
    pub reached: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereConfig {
    pub dim: usize,
    pub target: f64,
    pub max_evaluations: usize,
    pub initial_sigma: f64,
    /// Initial mean coordinates are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for SphereConfig {
    fn default() -> Self {
        Self { dim: 10, target: 1e-10, max_evaluations: 5000, initial_sigma: 1.0, init_range: 3.0 }
    }
}

/// Minimizes `sum x_i^2` until the best value reaches `target` or the budget runs out.
pub fn sphere_run(cfg: &SphereConfig, seed: u64) -> Result<SphereRun> {
    let mut rng = rng_from_seed(seed);
    let mean: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-cfg.init_range..cfg.init_range)).collect();
    let mut es = CmaEs::new(mean, cfg.initial_sigma, CmaEsConfig::default());
    let mut best = f64::INFINITY;
    let mut evaluations = 0;
    while evaluations < cfg.max_evaluations && best > cfg.target {
        let candidates = es.ask(&mut rng);
        let values: Vec<f64> = candidates.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
        for &v in &values {
            evaluations += 1;
            best = best.min(v);
            if best <= cfg.target || evaluations >= cfg.max_evaluations {
                break;
            }
        }
        let maximized: Vec<f64> = values.iter().map(|v| -v).collect();
        es.tell(&candidates, &maximized)?;
    }
    Ok(SphereRun { seed, best, evaluations, reached: best <= cfg.target })
}

/// Fraction of positions matching `target`.
pub fn planted_objective(params: &[usize], target: &[usize]) -> f64 {
    let hits = params.iter().zip(target).filter(|(a, b)| a == b).count();
    hits as f64 / target.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantedPair {
    pub seed: u64,
    /// Best match counts.
    pub tpe: usize,
    pub random: usize,
}

/// TPE and random search on the same hidden target and study seed.
pub fn planted_pair(
    n_layers: usize,
    n_categories: usize,
    n_trials: usize,
    tpe: &TpeConfig,
    seed: u64,
) -> Result<PlantedPair> {
    let space = SearchSpace::new(n_layers, n_categories)?;
    let mut trng = rng_from_seed(derive_seed(seed, stream::METHOD, 0));
    let target: Vec<usize> = (0..n_layers).map(|_| trng.random_range(0..n_categories)).collect();
    let best = |method| -> Result<usize> {
        let options = StudyOptions { tpe: tpe.clone(), ..StudyOptions::trials(n_trials) };
        let r = study_run(&space, method, &options, seed, |p, _| {
            Evaluation::ok(planted_objective(p, &target))
        })?;
        Ok((r.best.objective * n_layers as f64).round() as usize)
    };
    Ok(PlantedPair { seed, tpe: best(Method::Tpe)?, random: best(Method::Random)? })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestReport {
    pub sphere: Vec<SphereRun>,
    pub sphere_passed: bool,
    pub planted: Vec<PlantedPair>,
    pub tpe_wins_or_ties: usize,
    pub median_gap: f64,
    pub planted_passed: bool,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.sphere_passed && self.planted_passed
    }
}

/// Sphere: 10 seeds, at least 9 must reach 1e-10 within 5000 evaluations.
pub fn sphere_benchmark(seed: u64) -> Result<(Vec<SphereRun>, bool)> {
    let cfg = SphereConfig::default();
    let runs: Vec<SphereRun> = (0..10)
        .map(|i| sphere_run(&cfg, derive_seed(seed, stream::SAMPLER, i)))
        .collect::<Result<_>>()?;
    let passed = runs.iter().filter(|r| r.reached).count() >= 9;
    Ok((runs, passed))
}

/// Planted: L=5, K=10, 200 trials, 30 paired seeds.
pub fn planted_benchmark(tpe: &TpeConfig, seed: u64) -> Result<Vec<PlantedPair>> {
    (0..30)
        .map(|i| planted_pair(5, 10, 200, tpe, derive_seed(seed, stream::TRIAL, i)))
        .collect()
}

/// Both benchmarks. The planted one passes when TPE matches or beats random on at least 20 of
/// 30 pairs and leads by at least one position in median.
pub fn run_selftest(seed: u64) -> Result<SelftestReport> {
    let (sphere, sphere_passed) = sphere_benchmark(seed)?;
    let planted = planted_benchmark(&TpeConfig::default(), seed)?;
    let tpe_wins_or_ties = planted.iter().filter(|p| p.tpe >= p.random).count();
    let tpe: Vec<f64> = planted.iter().map(|p| p.tpe as f64).collect();
    let random: Vec<f64> = planted.iter().map(|p| p.random as f64).collect();
    let median_gap = median(&tpe)? - median(&random)?;
    Ok(SelftestReport {
        sphere,
        sphere_passed,
        planted,
        tpe_wins_or_ties,
        median_gap,
        planted_passed: tpe_wins_or_ties >= 20 && median_gap >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_converges() {
        let r = sphere_run(&SphereConfig::default(), 1).unwrap();
        assert!(r.reached, "{r:?}");
        assert!(r.evaluations <= 5000);
    }

    #[test]
    fn planted_objective_counts() {
        assert_eq!(planted_objective(&[1, 2, 3, 4, 5], &[1, 0, 3, 0, 5]), 0.6);
    }

    #[test]
    fn planted_pair_is_deterministic() {
        let tpe = TpeConfig::default();
        assert_eq!(planted_pair(5, 10, 60, &tpe, 4).unwrap(), planted_pair(5, 10, 60, &tpe, 4).unwrap());
    }
}
