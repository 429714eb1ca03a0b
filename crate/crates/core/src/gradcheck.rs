//! Finite-difference verification of every analytic derivative in the crate.
//!
//! Central differences with `h = 1e-5`. A point passes when
//! `|analytic - numeric| <= max(ABS_TOL, REL_TOL * |numeric|)`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::Serialize;

use crate::activation::{ActivationKind, ActivationState, Arity, Mode};
use crate::architecture::Architecture;
use crate::error::Result;
use crate::nn::{cross_entropy_loss, Network};
use crate::seed::{rng_from_seed, SeededRng};
use crate::special::{digamma, erf, erfc, trigamma};

pub const STEP: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const N_POINTS: usize = 100;
/// Dimension of the random vectors used for vectorwise kinds.
pub const VECTOR_DIM: usize = 5;
/// Minimum distance from kinks and open-domain boundaries.
pub const KINK_MARGIN: f64 = 1e-3;

fn tolerance(numeric: f64) -> f64 {
    ABS_TOL.max(REL_TOL * numeric.abs())
}

/// Sampling interval and non-differentiable points of an elementwise kind.
#[derive(Clone, Debug, PartialEq)]
pub struct SafeDomain {
    pub lo: f64,
    pub hi: f64,
    pub kinks: Vec<f64>,
    /// Every integer is a kink (Frac).
    pub integer_kinks: bool,
}

impl SafeDomain {
    fn interval(lo: f64, hi: f64) -> Self {
        Self { lo, hi, kinks: Vec::new(), integer_kinks: false }
    }

    fn with_kinks(mut self, kinks: &[f64]) -> Self {
        self.kinks = kinks.to_vec();
        self
    }

    pub fn admits(&self, x: f64) -> bool {
        x >= self.lo
            && x <= self.hi
            && self.kinks.iter().all(|k| (x - k).abs() >= KINK_MARGIN)
            && (!self.integer_kinks || (x - x.round()).abs() >= KINK_MARGIN)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = rng.random_range(self.lo..=self.hi);
            if self.admits(x) {
                return x;
            }
        }
    }
}

/// Sub-domain on which the finite-difference check of `kind` is meaningful.
///
/// Open domains are shrunk further than the minimum margin where the third derivative blows up
/// (Log near 0, Digamma near its poles, Tan near pi/2), since the central-difference truncation
/// error there exceeds the tolerance regardless of the analytic rule.
pub fn safe_domain(kind: ActivationKind) -> SafeDomain {
    use ActivationKind::*;
    let base = SafeDomain::interval(-3.0, 3.0);
    match kind {
        Relu | LeakyRelu | Prelu | Rrelu | Elu | Celu | Selu | Abs | Angle | Softsign => {
            base.with_kinks(&[0.0])
        }
        Hardshrink => base.with_kinks(&[-crate::activation::HARDSHRINK_LAMBDA, crate::activation::HARDSHRINK_LAMBDA]),
        Softshrink => base.with_kinks(&[-crate::activation::SOFTSHRINK_LAMBDA, crate::activation::SOFTSHRINK_LAMBDA]),
        Hardtanh => base.with_kinks(&[-1.0, 1.0]),
        Relu6 => SafeDomain::interval(-3.0, 8.0).with_kinks(&[0.0, 6.0]),
        Acos | Asin => SafeDomain::interval(-0.99, 0.99),
        Log | Log10 => SafeDomain::interval(0.01, 3.0),
        Digamma => SafeDomain::interval(0.05, 5.0),
        Tan => SafeDomain::interval(-1.4, 1.4),
        Frac => SafeDomain { integer_kinks: true, ..base },
        _ => base,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KindReport {
    pub kind: ActivationKind,
    pub n_points: usize,
    pub max_abs_error: f64,
    /// Largest `error / tolerance`; at most 1 when passed.
    pub worst_ratio: f64,
    pub passed: bool,
    /// Step kinds are checked for exactly-zero analytic gradients instead.
    pub exact_zero: bool,
}

impl KindReport {
    fn from_pairs(kind: ActivationKind, pairs: &[(f64, f64)]) -> Self {
        let mut max_abs_error = 0.0f64;
        let mut worst_ratio = 0.0f64;
        let mut passed = true;
        for &(analytic, numeric) in pairs {
            let err = (analytic - numeric).abs();
            let ratio = err / tolerance(numeric);
            if !(ratio <= 1.0) {
                passed = false;
            }
            max_abs_error = max_abs_error.max(err);
            worst_ratio = if ratio.is_nan() { f64::NAN } else { worst_ratio.max(ratio) };
        }
        Self { kind, n_points: pairs.len(), max_abs_error, worst_ratio, passed, exact_zero: false }
    }
}

fn row(values: Vec<f64>) -> Array2<f64> {
    let n = values.len();
    Array2::from_shape_vec((1, n), values).expect("row vector")
}

/// Elementwise check: one forward pass caches any draws, then each point is perturbed in place.
fn check_elementwise(kind: ActivationKind, rng: &mut SeededRng) -> Result<KindReport> {
    let domain = safe_domain(kind);
    let x = row((0..N_POINTS).map(|_| domain.sample(rng)).collect());
    let mut state = ActivationState::new();
    kind.forward(&mut state, x.view(), Mode::Train, rng);
    let ones = Array2::ones(x.raw_dim());
    let (analytic, _) = kind.backward(&state, x.view(), ones.view())?;
    let plus = kind.forward_frozen(&state, x.mapv(|v| v + STEP).view())?;
    let minus = kind.forward_frozen(&state, x.mapv(|v| v - STEP).view())?;
    let pairs: Vec<(f64, f64)> = analytic
        .iter()
        .zip(plus.iter().zip(minus.iter()))
        .map(|(&a, (&p, &m))| (a, (p - m) / (2.0 * STEP)))
        .collect();
    Ok(KindReport::from_pairs(kind, &pairs))
}

/// `u . f(x)` with draws frozen.
fn projected(kind: ActivationKind, state: &ActivationState, x: ArrayView2<f64>, u: &Array2<f64>) -> Result<f64> {
    Ok((&kind.forward_frozen(state, x)? * u).sum())
}

/// Vectorwise check: vector-Jacobian products against differences of `u . f(x)`.
fn check_vectorwise(kind: ActivationKind, rng: &mut SeededRng) -> Result<KindReport> {
    let mut pairs = Vec::with_capacity(N_POINTS * VECTOR_DIM);
    for _ in 0..N_POINTS {
        let x = row((0..VECTOR_DIM).map(|_| rng.random_range(-3.0..3.0)).collect());
        let u = row((0..VECTOR_DIM).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut state = ActivationState::new();
        kind.forward(&mut state, x.view(), Mode::Train, rng);
        let (analytic, _) = kind.backward(&state, x.view(), u.view())?;
        for j in 0..VECTOR_DIM {
            let mut xp = x.clone();
            xp[(0, j)] += STEP;
            let mut xm = x.clone();
            xm[(0, j)] -= STEP;
            let numeric = (projected(kind, &state, xp.view(), &u)? - projected(kind, &state, xm.view(), &u)?) / (2.0 * STEP);
            pairs.push((analytic[(0, j)], numeric));
        }
    }
    Ok(KindReport::from_pairs(kind, &pairs))
}

/// Step kinds: analytic gradients must be exactly zero, including at integers and half-integers.
fn check_step(kind: ActivationKind, rng: &mut SeededRng) -> Result<KindReport> {
    let mut values: Vec<f64> = (0..N_POINTS - 8).map(|_| rng.random_range(-5.0..5.0)).collect();
    values.extend([-2.0, -1.5, -0.5, 0.0, 0.5, 1.0, 1.5, 2.5]);
    let x = row(values);
    let state = ActivationState::new();
    let ones = Array2::ones(x.raw_dim());
    let (analytic, _) = kind.backward(&state, x.view(), ones.view())?;
    let max = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let passed = analytic.iter().all(|&v| v == 0.0);
    Ok(KindReport {
        kind,
        n_points: x.len(),
        max_abs_error: max,
        worst_ratio: if passed { 0.0 } else { f64::INFINITY },
        passed,
        exact_zero: true,
    })
}

/// Checks one kind with the appropriate rule.
pub fn check_kind(kind: ActivationKind, seed: u64) -> Result<KindReport> {
    let mut rng = rng_from_seed(seed ^ (kind.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    if kind.is_step() {
        check_step(kind, &mut rng)
    } else {
        match kind.arity() {
            Arity::Elementwise => check_elementwise(kind, &mut rng),
            Arity::Vectorwise => check_vectorwise(kind, &mut rng),
        }
    }
}

/// Runs [`check_kind`] over the whole registry.
pub fn check_all_activations(seed: u64) -> Result<Vec<KindReport>> {
    crate::activation::registry().iter().map(|&k| check_kind(k, seed)).collect()
}

/// PReLU slope gradient against a difference in the slope.
pub fn check_prelu_slope(seed: u64) -> Result<KindReport> {
    let mut rng = rng_from_seed(seed);
    let kind = ActivationKind::Prelu;
    let domain = safe_domain(kind);
    let mut pairs = Vec::new();
    for _ in 0..N_POINTS {
        let x = row((0..VECTOR_DIM).map(|_| domain.sample(&mut rng)).collect());
        let u = row((0..VECTOR_DIM).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut state = ActivationState::new();
        state.prelu_slope = rng.random_range(-0.5..0.5);
        let (_, grads) = kind.backward(&state, x.view(), u.view())?;
        let mut plus = state.clone();
        plus.prelu_slope += STEP;
        let mut minus = state.clone();
        minus.prelu_slope -= STEP;
        let numeric = (projected(kind, &plus, x.view(), &u)? - projected(kind, &minus, x.view(), &u)?) / (2.0 * STEP);
        pairs.push((grads[0], numeric));
    }
    Ok(KindReport::from_pairs(kind, &pairs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkReport {
    pub n_parameters: usize,
    /// Fraction of parameters with relative error at most 1e-4.
    pub fraction_within_1e4: f64,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Relative error with a floor on the denominator so that near-zero gradients compare absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Full backpropagation check of the mean cross-entropy on a small network.
///
/// Every loss evaluation reseeds the forward generator, so stochastic layers see identical draws.
pub fn check_network(architecture: &Architecture, seed: u64) -> Result<NetworkReport> {
    let mut rng = rng_from_seed(seed);
    let (d, c, hidden, n) = (4, 3, 6, 7);
    let mut net = Network::new(d, c, architecture.clone(), hidden, &mut rng)?;
    for st in &mut net.states {
        st.prelu_slope = rng.random_range(0.1..0.4);
    }
    let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..n).map(|i| i % c).collect();
    let forward_seed = rng.random::<u64>();
    let loss = |net: &mut Network| -> Result<f64> {
        let (_, out) = net.forward(x.view(), Mode::Train, &mut rng_from_seed(forward_seed))?;
        Ok(cross_entropy_loss(out.view(), &y)?.0)
    };
    let (cache, out) = net.forward(x.view(), Mode::Train, &mut rng_from_seed(forward_seed))?;
    let (_, grad) = cross_entropy_loss(out.view(), &y)?;
    let grads = net.backward(&cache, grad.view())?;
    let analytic: Vec<f64> = grads.slots().into_iter().flatten().copied().collect();

    let sizes = net.parameter_sizes();
    let mut numeric = Vec::with_capacity(analytic.len());
    for (slot, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let orig = net.parameters_mut()[slot][i];
            net.parameters_mut()[slot][i] = orig + STEP;
            let lp = loss(&mut net)?;
            net.parameters_mut()[slot][i] = orig - STEP;
            let lm = loss(&mut net)?;
            net.parameters_mut()[slot][i] = orig;
            numeric.push((lp - lm) / (2.0 * STEP));
        }
    }
    let errors: Vec<f64> = analytic.iter().zip(&numeric).map(|(&a, &b)| relative_error(a, b)).collect();
    let within = errors.iter().filter(|&&e| e <= 1e-4).count();
    let max_relative_error = errors.iter().copied().fold(0.0, f64::max);
    let fraction_within_1e4 = within as f64 / errors.len() as f64;
    Ok(NetworkReport {
        n_parameters: errors.len(),
        fraction_within_1e4,
        max_relative_error,
        passed: fraction_within_1e4 >= 0.95 && max_relative_error <= 1e-3,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpecialReport {
    pub erf_one: f64,
    pub digamma_one: f64,
    /// `max |erf(x) + erfc(x) - 1|` over `|x| <= 3`.
    pub erf_erfc_residual: f64,
    /// `max |erf(-x) + erf(x)|`.
    pub erf_odd_residual: f64,
    /// `max |psi(x+1) - psi(x) - 1/x|` over `x` in `[0.1, 20]`.
    pub digamma_recurrence_residual: f64,
    /// `max |psi'(x) - central difference of psi|` relative.
    pub trigamma_residual: f64,
}

pub fn special_identities() -> SpecialReport {
    let grid = |lo: f64, hi: f64, n: usize| (0..=n).map(move |i| lo + (hi - lo) * i as f64 / n as f64);
    let max_over = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    SpecialReport {
        erf_one: erf(1.0),
        digamma_one: digamma(1.0),
        erf_erfc_residual: max_over(&mut grid(-3.0, 3.0, 6000).map(|x| (erf(x) + erfc(x) - 1.0).abs())),
        erf_odd_residual: max_over(&mut grid(0.0, 6.0, 6000).map(|x| (erf(-x) + erf(x)).abs())),
        digamma_recurrence_residual: max_over(
            &mut grid(0.1, 20.0, 2000).map(|x| (digamma(x + 1.0) - digamma(x) - 1.0 / x).abs()),
        ),
        trigamma_residual: max_over(&mut grid(0.5, 10.0, 200).map(|x| {
            let fd = (digamma(x + STEP) - digamma(x - STEP)) / (2.0 * STEP);
            relative_error(trigamma(x), fd)
        })),
    }
}
