//! Independent-sampling TPE over categorical slots.
//!
//! After `n_startup` successful trials the history is split by objective into a "good" set
//! (the best `min(ceil(gamma * n), max_good)` trials) and a "bad" set. For every slot, two
//! smoothed categorical masses are built:
//!
//! ```text
//! l(c) = (count_good(c) + s) / (n_good + K s)
//! g(c) = (count_bad(c)  + s) / (n_bad  + K s)
//! ```
//!
//! with per-category pseudo-count `s` set by [`TpeSmoothing`]. `n_ei_candidates` categories are
//! drawn from `l`, and the one maximizing `l(c)/g(c)` is kept.

use rand::Rng;

use super::{random_suggest, SearchSpace, TrialRecord};

/// Per-category pseudo-count added to the good/bad counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TpeSmoothing {
    /// `s = w + 1/K`: the mass a uniform prior kernel plus a `w/(n+1)`-smoothed kernel per
    /// observation put on each category (the usual Parzen construction for categoricals).
    #[default]
    Kernel,
    /// `s = w/K`: a single prior of total weight `w` spread uniformly.
    Pseudocount,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TpeConfig {
    pub n_startup: usize,
    pub n_ei_candidates: usize,
    pub gamma: f64,
    pub max_good: usize,
    pub prior_weight: f64,
    pub smoothing: TpeSmoothing,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            n_startup: 10,
            n_ei_candidates: 24,
            gamma: 0.1,
            max_good: 25,
            prior_weight: 1.0,
            smoothing: TpeSmoothing::default(),
        }
    }
}

impl TpeConfig {
    /// Pseudo-count added to every category.
    pub fn pseudocount(&self, n_categories: usize) -> f64 {
        let k = n_categories as f64;
        match self.smoothing {
            TpeSmoothing::Kernel => self.prior_weight + 1.0 / k,
            TpeSmoothing::Pseudocount => self.prior_weight / k,
        }
    }

    /// `min(ceil(gamma * n), max_good)`, at least 1 for `n >= 1`.
    pub fn n_good(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        (((self.gamma * n as f64).ceil() as usize).min(self.max_good)).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct TpeSampler {
    space: SearchSpace,
    config: TpeConfig,
    history: Vec<TrialRecord>,
}

/// Smoothed good/bad masses for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotDensities {
    pub good: Vec<f64>,
    pub bad: Vec<f64>,
}

impl SlotDensities {
    pub fn ratio(&self, c: usize) -> f64 {
        self.good[c] / self.bad[c]
    }
}

impl TpeSampler {
    pub fn new(space: SearchSpace, config: TpeConfig) -> Self {
        Self {
            space,
            config,
            history: Vec::new(),
        }
    }

    pub fn with_history(space: SearchSpace, config: TpeConfig, history: Vec<TrialRecord>) -> Self {
        Self {
            space,
            config,
            history,
        }
    }

    pub fn tell(&mut self, trial: TrialRecord) {
        self.history.push(trial);
    }

    pub fn history(&self) -> &[TrialRecord] {
        &self.history
    }

    /// Non-failed trials split into (good, bad), best first; ties keep trial order.
    pub fn split(&self) -> (Vec<&TrialRecord>, Vec<&TrialRecord>) {
        let mut ok: Vec<&TrialRecord> = self.history.iter().filter(|t| !t.failed).collect();
        ok.sort_by(|a, b| b.objective.total_cmp(&a.objective));
        let n_good = self.config.n_good(ok.len());
        let bad = ok.split_off(n_good);
        (ok, bad)
    }

    fn n_successful(&self) -> usize {
        self.history.iter().filter(|t| !t.failed).count()
    }

    /// Good/bad masses for slot `position`.
    pub fn densities(&self, position: usize) -> SlotDensities {
        let (good, bad) = self.split();
        let k = self.space.n_categories;
        let prior = self.config.pseudocount(k);
        let mass = |set: &[&TrialRecord]| {
            let mut counts = vec![prior; k];
            for t in set {
                counts[t.params[position]] += 1.0;
            }
            let total = set.len() as f64 + prior * k as f64;
            counts.iter_mut().for_each(|c| *c /= total);
            counts
        };
        SlotDensities {
            good: mass(&good),
            bad: mass(&bad),
        }
    }

    /// Exact probability that slot `position` receives each category, once past startup.
    ///
    /// Category `c` wins when no draw lands on a category ranked above it and at least one
    /// lands on `c`, hence `P(c) = (1 - S_before(c))^n - (1 - S_before(c) - l(c))^n` with
    /// `S_before` the `l`-mass ranked strictly above `c` (ratio order, ties toward the lower index).
    pub fn slot_probabilities(&self, position: usize) -> Vec<f64> {
        let d = self.densities(position);
        let k = self.space.n_categories;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| d.ratio(b).total_cmp(&d.ratio(a)).then(a.cmp(&b)));
        let n = self.config.n_ei_candidates as i32;
        let mut probs = vec![0.0; k];
        let mut before = 0.0;
        for c in order {
            let upto = before + d.good[c];
            probs[c] = (1.0 - before).max(0.0).powi(n) - (1.0 - upto).max(0.0).powi(n);
            before = upto;
        }
        probs
    }

    /// Suggests the next candidate.
    pub fn suggest<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        if self.n_successful() < self.config.n_startup {
            return random_suggest(&self.space, rng);
        }
        (0..self.space.n_layers)
            .map(|pos| {
                let d = self.densities(pos);
                let mut best = None::<usize>;
                for _ in 0..self.config.n_ei_candidates {
                    let c = draw_categorical(&d.good, rng);
                    best = match best {
                        None => Some(c),
                        Some(b) => {
                            let (rc, rb) = (d.ratio(c), d.ratio(b));
                            if rc > rb || (rc == rb && c < b) {
                                Some(c)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
                best.expect("at least one candidate")
            })
            .collect()
    }
}

fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn trial(id: usize, params: Vec<usize>, objective: f64, failed: bool) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            params,
            objective,
            failed,
            seed: 0,
        }
    }

    #[test]
    fn n_good_rule() {
        let c = TpeConfig::default();
        assert_eq!(c.n_good(1), 1);
        assert_eq!(c.n_good(10), 1);
        assert_eq!(c.n_good(11), 2);
        assert_eq!(c.n_good(40), 4);
        assert_eq!(c.n_good(1000), 25);
    }

    #[test]
    fn startup_matches_random_stream() {
        let space = SearchSpace::new(5, 48).unwrap();
        let failed: Vec<_> = (0..30).map(|i| trial(i, vec![0; 5], 0.0, true)).collect();
        for history in [Vec::new(), failed] {
            let tpe = TpeSampler::with_history(space, TpeConfig::default(), history);
            let mut a = rng_from_seed(4);
            let mut b = rng_from_seed(4);
            for _ in 0..20 {
                assert_eq!(tpe.suggest(&mut a), random_suggest(&space, &mut b));
            }
        }
    }

    #[test]
    fn planted_category_dominates() {
        let space = SearchSpace::new(5, 48).unwrap();
        let mut history = Vec::new();
        let mut rng = rng_from_seed(1);
        for i in 0..40 {
            let mut params = random_suggest(&space, &mut rng);
            if i % 10 == 0 {
                params[0] = 7;
                history.push(trial(i, params, 1.0, false));
            } else {
                if params[0] == 7 {
                    params[0] = 8;
                }
                history.push(trial(i, params, 0.1, false));
            }
        }
        let tpe = TpeSampler::with_history(space, TpeConfig::default(), history);
        let mut rng = rng_from_seed(2);
        let hits = (0..1000).filter(|_| tpe.suggest(&mut rng)[0] == 7).count();
        assert!(hits > 500, "hits = {hits}");
        let exact = tpe.slot_probabilities(0);
        assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((hits as f64 / 1000.0 - exact[7]).abs() < 0.05, "hits {hits}, exact {}", exact[7]);
    }

    #[test]
    fn smoothing_pseudocounts() {
        let mut c = TpeConfig::default();
        assert!((c.pseudocount(10) - 1.1).abs() < 1e-15);
        c.smoothing = TpeSmoothing::Pseudocount;
        assert!((c.pseudocount(10) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn moving_count_to_good_raises_probability() {
        let space = SearchSpace::new(1, 4).unwrap();
        let objectives = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01, 0.0];
        let build = |promote: bool| {
            let history = objectives
                .iter()
                .enumerate()
                .map(|(i, &o)| {
                    let cat = if i == 11 { 2 } else { i % 2 };
                    let obj = if promote && i == 11 { 1.0 } else { o };
                    trial(i, vec![cat], obj, false)
                })
                .collect();
            TpeSampler::with_history(space, TpeConfig::default(), history)
        };
        let before = build(false).slot_probabilities(0)[2];
        let after = build(true).slot_probabilities(0)[2];
        assert!(after > before, "{before} -> {after}");
    }
}
