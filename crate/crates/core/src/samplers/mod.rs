//! Architecture search over the categorical product space `K^L`.
//!
//! Three strategies share one study loop: uniform random sampling, an independent-sampling
//! Tree-structured Parzen Estimator, and a CMA-ES run on a continuous relaxation whose
//! coordinates are floor-decoded into category indices.

pub mod cmaes;
pub mod tpe;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::N_ACTIVATIONS;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, stream};

pub use cmaes::{decode_continuous, CmaEs, CmaEsConfig};
pub use tpe::{TpeConfig, TpeSampler, TpeSmoothing};

/// `n_layers` slots, each one of `n_categories` choices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_layers: usize,
    pub n_categories: usize,
}

impl SearchSpace {
    pub fn new(n_layers: usize, n_categories: usize) -> Result<Self> {
        if n_layers == 0 || n_categories == 0 {
            return Err(Error::contract("search space needs at least one layer and one category"));
        }
        Ok(Self {
            n_layers,
            n_categories,
        })
    }

    /// The activation menu with `n_layers` slots.
    pub fn activations(n_layers: usize) -> Result<Self> {
        Self::new(n_layers, N_ACTIVATIONS)
    }

    /// `K^L`, saturating.
    pub fn size(&self) -> u128 {
        (self.n_categories as u128).saturating_pow(self.n_layers as u32)
    }
}

/// Uniform draw of every slot.
pub fn random_suggest<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Vec<usize> {
    (0..space.n_layers)
        .map(|_| rng.random_range(0..space.n_categories))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    Tpe,
    Cmaes,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Tpe => "tpe",
            Method::Cmaes => "cmaes",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Method::Random),
            "tpe" => Ok(Method::Tpe),
            "cmaes" => Ok(Method::Cmaes),
            other => Err(Error::Config(format!(
                "unknown search method `{other}` (expected random, tpe or cmaes)"
            ))),
        }
    }
}

/// Result of one objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub failed: bool,
}

impl Evaluation {
    pub fn ok(value: f64) -> Self {
        Self {
            value,
            failed: false,
        }
    }

    pub fn failed() -> Self {
        Self {
            value: 0.0,
            failed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub params: Vec<usize>,
    /// Maximized.
    pub objective: f64,
    pub failed: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyOptions {
    pub n_trials: usize,
    /// Stop sampling new trials once this instant has passed.
    pub deadline: Option<Instant>,
    pub tpe: TpeConfig,
}

impl StudyOptions {
    pub fn trials(n_trials: usize) -> Self {
        Self {
            n_trials,
            deadline: None,
            tpe: TpeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

/// Best non-failed trial (highest objective, earliest on ties); the first trial if all failed.
pub fn best_trial(history: &[TrialRecord]) -> Option<&TrialRecord> {
    let mut best: Option<&TrialRecord> = None;
    for t in history.iter().filter(|t| !t.failed) {
        if best.is_none_or(|b| t.objective > b.objective) {
            best = Some(t);
        }
    }
    best.or(history.first())
}

/// Runs `options.n_trials` evaluations of `objective` with the chosen sampler.
///
/// The objective receives the candidate's category indices and a per-trial seed derived from
/// `(seed, trial_id)`. CMA-ES evaluates whole generations and truncates the last one.
pub fn study_run<F>(
    space: &SearchSpace,
    method: Method,
    options: &StudyOptions,
    seed: u64,
    mut objective: F,
) -> Result<StudyResult>
where
    F: FnMut(&[usize], u64) -> Evaluation,
{
    if options.n_trials == 0 {
        return Err(Error::contract("a study needs at least one trial"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::SAMPLER, method as u64));
    let mut history: Vec<TrialRecord> = Vec::with_capacity(options.n_trials);
    let expired = |history: &[TrialRecord]| {
        !history.is_empty() && options.deadline.is_some_and(|d| Instant::now() >= d)
    };
    let mut evaluate = |params: Vec<usize>, history: &mut Vec<TrialRecord>| {
        let trial_id = history.len();
        let trial_seed = derive_seed(seed, stream::TRIAL, trial_id as u64);
        let eval = objective(&params, trial_seed);
        let failed = eval.failed || !eval.value.is_finite();
        history.push(TrialRecord {
            trial_id,
            params,
            objective: if failed { 0.0 } else { eval.value },
            failed,
            seed: trial_seed,
        });
    };

    match method {
        Method::Random => {
            while history.len() < options.n_trials && !expired(&history) {
                let params = random_suggest(space, &mut rng);
                evaluate(params, &mut history);
            }
        }
        Method::Tpe => {
            let mut sampler = TpeSampler::new(*space, options.tpe.clone());
            while history.len() < options.n_trials && !expired(&history) {
                let params = sampler.suggest(&mut rng);
                evaluate(params, &mut history);
                sampler.tell(history.last().expect("just pushed").clone());
            }
        }
        Method::Cmaes => {
            let mut cma = CmaEs::for_space(space, CmaEsConfig::default());
            'generations: while history.len() < options.n_trials {
                let candidates = cma.ask(&mut rng);
                let start = history.len();
                for x in &candidates {
                    if history.len() >= options.n_trials || expired(&history) {
                        break 'generations;
                    }
                    evaluate(decode_continuous(x, space.n_categories), &mut history);
                }
                let objectives: Vec<f64> = history[start..]
                    .iter()
                    .map(|t| if t.failed { f64::NAN } else { t.objective })
                    .collect();
                cma.tell(&candidates, &objectives)?;
            }
        }
    }

    let best = best_trial(&history).expect("at least one trial ran").clone();
    Ok(StudyResult { best, history })
}
