//! The 48-entry activation menu with forward evaluation and exact vector-Jacobian products.
//!
//! Every function works on a batch matrix (one row per sample). Elementwise kinds act on each
//! entry independently; vectorwise kinds (`Softmin`, `Softmax`, `LogSoftmax`, `GumbelSoftmax`)
//! normalize each row.
//!
//! Non-differentiable points follow fixed one-sided conventions: ReLU-like kinks take the left
//! derivative (so `ReLU'(0) = 0`), shrink/clip functions are flat at their thresholds, and the
//! step functions (`Ceil`, `Floor`, `Round`, `Trunc`, `Angle`) have zero gradient everywhere.
//! Domain violations such as `Log(-1)` produce NaN rather than being clamped.

use std::f64::consts::{FRAC_2_SQRT_PI, LN_10, PI};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::special::{erf, erfc, digamma, sample_gumbel, trigamma};

pub const HARDSHRINK_LAMBDA: f64 = 0.5;
pub const SOFTSHRINK_LAMBDA: f64 = 0.5;
pub const LEAKY_RELU_SLOPE: f64 = 0.01;
pub const ELU_ALPHA: f64 = 1.0;
pub const CELU_ALPHA: f64 = 1.0;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const SELU_SCALE: f64 = 1.050_700_987_355_480_5;
pub const SOFTPLUS_THRESHOLD: f64 = 20.0;
pub const RRELU_LOWER: f64 = 1.0 / 8.0;
pub const RRELU_UPPER: f64 = 1.0 / 3.0;
pub const PRELU_INIT: f64 = 0.25;
pub const GUMBEL_TAU: f64 = 1.0;

/// Slope RReLU uses outside training.
pub const RRELU_EVAL_SLOPE: f64 = (RRELU_LOWER + RRELU_UPPER) / 2.0;

macro_rules! activation_kinds {
    ($($variant:ident => $name:literal,)*) => {
        /// One entry of the activation menu.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum ActivationKind {
            $($variant,)*
        }

        /// Registry order; position is the categorical index used by every sampler.
        pub const REGISTRY: [ActivationKind; 48] = [$(ActivationKind::$variant,)*];

        impl ActivationKind {
            /// Canonical, case-sensitive name.
            pub const fn name(self) -> &'static str {
                match self {
                    $(ActivationKind::$variant => $name,)*
                }
            }
        }
    };
}

activation_kinds! {
    Elu => "ELU",
    Hardshrink => "Hardshrink",
    Hardtanh => "Hardtanh",
    LeakyRelu => "LeakyReLU",
    LogSigmoid => "LogSigmoid",
    Prelu => "PReLU",
    Relu => "ReLU",
    Relu6 => "ReLU6",
    Rrelu => "RReLU",
    Selu => "SELU",
    Celu => "CELU",
    Gelu => "GELU",
    Sigmoid => "Sigmoid",
    Softplus => "Softplus",
    Softshrink => "Softshrink",
    Softsign => "Softsign",
    Tanh => "Tanh",
    Tanhshrink => "Tanhshrink",
    Softmin => "Softmin",
    Softmax => "Softmax",
    LogSoftmax => "LogSoftmax",
    Abs => "Abs",
    Acos => "Acos",
    Angle => "Angle",
    Asin => "Asin",
    Atan => "Atan",
    Ceil => "Ceil",
    Cos => "Cos",
    Cosh => "Cosh",
    Digamma => "Digamma",
    Erf => "Erf",
    Erfc => "Erfc",
    Exp => "Exp",
    Floor => "Floor",
    Frac => "Frac",
    GumbelSoftmax => "GumbelSoftmax",
    Log => "Log",
    Log10 => "Log10",
    Neg => "Neg",
    Round => "Round",
    Sin => "Sin",
    Sinh => "Sinh",
    Tan => "Tan",
    Trunc => "Trunc",
    Mish => "Mish",
    GeneralizedSwish => "GeneralizedSwish",
    SigmoidDerivative => "SigmoidDerivative",
    ClogLogM => "CLogLogM",
}

/// Number of activation kinds on the menu.
pub const N_ACTIVATIONS: usize = REGISTRY.len();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arity {
    Elementwise,
    Vectorwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// The full menu in registry order.
pub fn registry() -> &'static [ActivationKind] {
    &REGISTRY
}

/// Parses a canonical activation name (exact, case-sensitive match).
pub fn parse_activation(s: &str) -> Result<ActivationKind> {
    REGISTRY
        .iter()
        .copied()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::UnknownActivation {
            name: s.to_string(),
            valid: REGISTRY.iter().map(|k| k.name()).collect::<Vec<_>>().join(", "),
        })
}

impl ActivationKind {
    /// Registry index in `0..48`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        REGISTRY.get(index).copied()
    }

    pub fn arity(self) -> Arity {
        use ActivationKind::*;
        match self {
            Softmin | Softmax | LogSoftmax | GumbelSoftmax => Arity::Vectorwise,
            _ => Arity::Elementwise,
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, ActivationKind::Rrelu | ActivationKind::GumbelSoftmax)
    }

    pub fn n_trainable_params(self) -> usize {
        usize::from(self == ActivationKind::Prelu)
    }

    /// Piecewise-constant kinds whose gradient is identically zero.
    pub fn is_step(self) -> bool {
        use ActivationKind::*;
        matches!(self, Ceil | Floor | Round | Trunc)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_activation(s)
    }
}

impl Serialize for ActivationKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ActivationKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_activation(&s).map_err(serde::de::Error::custom)
    }
}

/// Per-layer activation state: the PReLU slope and the stochastic draws of the last forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationState {
    pub prelu_slope: f64,
    pub rrelu_slopes: Option<Array2<f64>>,
    pub gumbel_noise: Option<Array2<f64>>,
    pub mode: Mode,
}

impl Default for ActivationState {
    fn default() -> Self {
        Self {
            prelu_slope: PRELU_INIT,
            rrelu_slopes: None,
            gumbel_noise: None,
            mode: Mode::Train,
        }
    }
}

impl ActivationState {
    pub fn new() -> Self {
        Self::default()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > SOFTPLUS_THRESHOLD {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Value of an elementwise kind at `x`; `slope` is the PReLU/RReLU negative slope.
fn scalar_value(kind: ActivationKind, x: f64, slope: f64) -> f64 {
    use ActivationKind::*;
    if x.is_nan() {
        return x;
    }
    match kind {
        Elu => {
            if x > 0.0 {
                x
            } else {
                ELU_ALPHA * x.exp_m1()
            }
        }
        Hardshrink => {
            if x.abs() > HARDSHRINK_LAMBDA {
                x
            } else {
                0.0
            }
        }
        Hardtanh => x.clamp(-1.0, 1.0),
        LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                LEAKY_RELU_SLOPE * x
            }
        }
        LogSigmoid => x.min(0.0) - (-x.abs()).exp().ln_1p(),
        Prelu | Rrelu => {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        }
        Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Relu6 => x.clamp(0.0, 6.0),
        Selu => {
            SELU_SCALE
                * if x > 0.0 {
                    x
                } else {
                    SELU_ALPHA * x.exp_m1()
                }
        }
        Celu => {
            if x > 0.0 {
                x
            } else {
                CELU_ALPHA * (x / CELU_ALPHA).exp_m1()
            }
        }
        Gelu => 0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2)),
        Sigmoid => sigmoid(x),
        Softplus => softplus(x),
        Softshrink => {
            if x > SOFTSHRINK_LAMBDA {
                x - SOFTSHRINK_LAMBDA
            } else if x < -SOFTSHRINK_LAMBDA {
                x + SOFTSHRINK_LAMBDA
            } else {
                0.0
            }
        }
        Softsign => x / (1.0 + x.abs()),
        Tanh => x.tanh(),
        Tanhshrink => x - x.tanh(),
        Abs => x.abs(),
        Acos => x.acos(),
        Angle => {
            if x < 0.0 {
                PI
            } else {
                0.0
            }
        }
        Asin => x.asin(),
        Atan => x.atan(),
        Ceil => x.ceil(),
        Cos => x.cos(),
        Cosh => x.cosh(),
        Digamma => digamma(x),
        Erf => erf(x),
        Erfc => erfc(x),
        Exp => x.exp(),
        Floor => x.floor(),
        Frac => x - x.trunc(),
        Log => x.ln(),
        Log10 => x.log10(),
        Neg => -x,
        Round => x.round_ties_even(),
        Sin => x.sin(),
        Sinh => x.sinh(),
        Tan => x.tan(),
        Trunc => x.trunc(),
        Mish => x * softplus(x).tanh(),
        GeneralizedSwish => x * sigmoid((-x).exp()),
        // e^{-x} sigmoid(x)^2 == sigmoid(x) sigmoid(-x), which stays finite for large |x|
        SigmoidDerivative => sigmoid(x) * sigmoid(-x),
        ClogLogM => 1.0 - 2.0 * (-0.7 * x.exp()).exp(),
        Softmin | Softmax | LogSoftmax | GumbelSoftmax => {
            unreachable!("vectorwise kind {kind} evaluated elementwise")
        }
    }
}

/// Derivative of an elementwise kind at `x`.
fn scalar_derivative(kind: ActivationKind, x: f64, slope: f64) -> f64 {
    use ActivationKind::*;
    if x.is_nan() {
        return x;
    }
    let step = |cond: bool| if cond { 1.0 } else { 0.0 };
    match kind {
        Elu => {
            if x > 0.0 {
                1.0
            } else {
                ELU_ALPHA * x.exp()
            }
        }
        Hardshrink => step(x.abs() > HARDSHRINK_LAMBDA),
        Hardtanh => step(x > -1.0 && x < 1.0),
        LeakyRelu => {
            if x > 0.0 {
                1.0
            } else {
                LEAKY_RELU_SLOPE
            }
        }
        LogSigmoid => sigmoid(-x),
        Prelu | Rrelu => {
            if x > 0.0 {
                1.0
            } else {
                slope
            }
        }
        Relu => step(x > 0.0),
        Relu6 => step(x > 0.0 && x < 6.0),
        Selu => {
            SELU_SCALE
                * if x > 0.0 {
                    1.0
                } else {
                    SELU_ALPHA * x.exp()
                }
        }
        Celu => {
            if x > 0.0 {
                1.0
            } else {
                (x / CELU_ALPHA).exp()
            }
        }
        Gelu => {
            0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2)) + x * normal_pdf(x)
        }
        Sigmoid => {
            let s = sigmoid(x);
            s * (1.0 - s)
        }
        Softplus => {
            if x > SOFTPLUS_THRESHOLD {
                1.0
            } else {
                sigmoid(x)
            }
        }
        Softshrink => step(x.abs() > SOFTSHRINK_LAMBDA),
        Softsign => {
            let d = 1.0 + x.abs();
            1.0 / (d * d)
        }
        Tanh => {
            let t = x.tanh();
            1.0 - t * t
        }
        Tanhshrink => {
            let t = x.tanh();
            t * t
        }
        Abs => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Acos => -1.0 / (1.0 - x * x).sqrt(),
        Asin => 1.0 / (1.0 - x * x).sqrt(),
        Atan => 1.0 / (1.0 + x * x),
        Angle | Ceil | Floor | Round | Trunc => 0.0,
        Cos => -x.sin(),
        Cosh => x.sinh(),
        Digamma => trigamma(x),
        Erf => FRAC_2_SQRT_PI * (-x * x).exp(),
        Erfc => -FRAC_2_SQRT_PI * (-x * x).exp(),
        Exp => x.exp(),
        Frac => 1.0,
        Log => 1.0 / x,
        Log10 => 1.0 / (x * LN_10),
        Neg => -1.0,
        Sin => x.cos(),
        Sinh => x.cosh(),
        Tan => {
            let t = x.tan();
            1.0 + t * t
        }
        Mish => {
            let t = softplus(x).tanh();
            t + x * (1.0 - t * t) * sigmoid(x)
        }
        GeneralizedSwish => {
            let e = (-x).exp();
            let s = sigmoid(e);
            // d/dx sigmoid(e^{-x}) = -e^{-x} sigmoid(e) sigmoid(-e)
            let chain = if e.is_infinite() { 0.0 } else { e * s * sigmoid(-e) };
            s - x * chain
        }
        SigmoidDerivative => {
            let s = sigmoid(x);
            s * sigmoid(-x) * (1.0 - 2.0 * s)
        }
        ClogLogM => 1.4 * (x - 0.7 * x.exp()).exp(),
        Softmin | Softmax | LogSoftmax | GumbelSoftmax => {
            unreachable!("vectorwise kind {kind} differentiated elementwise")
        }
    }
}

fn softmax_row_into(input: impl Iterator<Item = f64> + Clone, out: &mut [f64]) {
    let max = input.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(input) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise softmax of `x` (max-shifted).
pub fn softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (row, mut o) in x.outer_iter().zip(out.outer_iter_mut()) {
        softmax_row_into(row.iter().copied(), o.as_slice_mut().expect("fresh array is contiguous"));
    }
    out
}

fn log_softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// `s * (u - (s . u))` row by row, scaled by `scale`.
fn softmax_vjp(s: &Array2<f64>, upstream: ArrayView2<f64>, scale: f64) -> Array2<f64> {
    let mut grad = Array2::zeros(s.raw_dim());
    for ((srow, urow), mut grow) in s.outer_iter().zip(upstream.outer_iter()).zip(grad.outer_iter_mut()) {
        let dot: f64 = srow.iter().zip(urow.iter()).map(|(a, b)| a * b).sum();
        for ((g, &sv), &uv) in grow.iter_mut().zip(srow.iter()).zip(urow.iter()) {
            *g = scale * sv * (uv - dot);
        }
    }
    grad
}

fn gumbel_logits(x: ArrayView2<f64>, noise: &Array2<f64>) -> Array2<f64> {
    let mut shifted = x.to_owned();
    Zip::from(&mut shifted).and(noise).for_each(|v, &g| *v = (*v + g) / GUMBEL_TAU);
    shifted
}

impl ActivationKind {
    /// Applies the activation to a batch (rows are samples).
    ///
    /// Stochastic kinds draw from `rng` and cache the draws in `state` so that
    /// [`ActivationKind::backward`] can reuse them. RReLU only samples in train mode;
    /// GumbelSoftmax samples in both modes.
    pub fn forward<R: Rng + ?Sized>(
        self,
        state: &mut ActivationState,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Array2<f64> {
        state.mode = mode;
        match self {
            ActivationKind::Rrelu => {
                if mode == Mode::Train {
                    let slopes = Array2::from_shape_simple_fn(x.raw_dim(), || {
                        rng.random_range(RRELU_LOWER..RRELU_UPPER)
                    });
                    state.rrelu_slopes = Some(slopes);
                } else {
                    state.rrelu_slopes = None;
                }
            }
            ActivationKind::GumbelSoftmax => {
                state.gumbel_noise = Some(Array2::from_shape_simple_fn(x.raw_dim(), || sample_gumbel(rng)));
            }
            _ => {}
        }
        self.forward_frozen(state, x)
            .expect("draws were cached for this input shape")
    }

    /// Re-evaluates the activation reusing the draws cached by the last [`forward`](Self::forward)
    /// (no sampling). Fails if a stochastic kind has no matching cache.
    pub fn forward_frozen(self, state: &ActivationState, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        use ActivationKind::*;
        Ok(match self {
            Softmax => softmax_rows(x),
            Softmin => softmax_rows(x.mapv(|v| -v).view()),
            LogSoftmax => log_softmax_rows(x),
            GumbelSoftmax => {
                let noise = cached(&state.gumbel_noise, x, "GumbelSoftmax noise")?;
                softmax_rows(gumbel_logits(x, noise).view())
            }
            Rrelu => match state.mode {
                Mode::Train => {
                    let slopes = cached(&state.rrelu_slopes, x, "RReLU slopes")?;
                    let mut out = x.to_owned();
                    Zip::from(&mut out)
                        .and(slopes)
                        .for_each(|v, &r| *v = scalar_value(Rrelu, *v, r));
                    out
                }
                Mode::Eval => x.mapv(|v| scalar_value(Rrelu, v, RRELU_EVAL_SLOPE)),
            },
            kind => {
                let slope = state.prelu_slope;
                x.mapv(|v| scalar_value(kind, v, slope))
            }
        })
    }

    /// Vector-Jacobian product at `x` against `upstream`.
    ///
    /// Returns the input gradient and the parameter gradient (one entry for PReLU, empty otherwise).
    pub fn backward(
        self,
        state: &ActivationState,
        x: ArrayView2<f64>,
        upstream: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Vec<f64>)> {
        use ActivationKind::*;
        if x.shape() != upstream.shape() {
            return Err(Error::contract(format!(
                "{self}: input shape {:?} does not match upstream shape {:?}",
                x.shape(),
                upstream.shape()
            )));
        }
        let mut params = Vec::new();
        let grad = match self {
            Softmax => softmax_vjp(&softmax_rows(x), upstream, 1.0),
            Softmin => softmax_vjp(&softmax_rows(x.mapv(|v| -v).view()), upstream, -1.0),
            LogSoftmax => {
                let s = softmax_rows(x);
                let mut grad = upstream.to_owned();
                for (mut g, srow) in grad.outer_iter_mut().zip(s.outer_iter()) {
                    let total: f64 = g.sum();
                    Zip::from(&mut g).and(&srow).for_each(|gv, &sv| *gv -= sv * total);
                }
                grad
            }
            GumbelSoftmax => {
                let noise = cached(&state.gumbel_noise, x, "GumbelSoftmax noise")?;
                let s = softmax_rows(gumbel_logits(x, noise).view());
                softmax_vjp(&s, upstream, 1.0 / GUMBEL_TAU)
            }
            Rrelu => {
                let mut grad = upstream.to_owned();
                match state.mode {
                    Mode::Train => {
                        let slopes = cached(&state.rrelu_slopes, x, "RReLU slopes")?;
                        Zip::from(&mut grad)
                            .and(x)
                            .and(slopes)
                            .for_each(|g, &xv, &r| *g *= scalar_derivative(Rrelu, xv, r));
                    }
                    Mode::Eval => Zip::from(&mut grad)
                        .and(x)
                        .for_each(|g, &xv| *g *= scalar_derivative(Rrelu, xv, RRELU_EVAL_SLOPE)),
                }
                grad
            }
            kind => {
                let slope = state.prelu_slope;
                let mut grad = upstream.to_owned();
                Zip::from(&mut grad)
                    .and(x)
                    .for_each(|g, &xv| *g *= scalar_derivative(kind, xv, slope));
                if kind == Prelu {
                    let mut da = 0.0;
                    Zip::from(x).and(upstream).for_each(|&xv, &uv| da += uv * xv.min(0.0));
                    params.push(da);
                }
                grad
            }
        };
        Ok((grad, params))
    }

    /// Single-vector convenience over [`forward`](Self::forward); vectorwise kinds normalize the whole vector.
    pub fn forward_vec<R: Rng + ?Sized>(
        self,
        state: &mut ActivationState,
        x: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.forward(state, view, mode, rng).into_raw_vec_and_offset().0
    }

    /// Single-vector convenience over [`backward`](Self::backward).
    pub fn backward_vec(
        self,
        state: &ActivationState,
        x: &[f64],
        upstream: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let uv = ArrayView2::from_shape((1, upstream.len()), upstream)
            .map_err(|e| Error::contract(e.to_string()))?;
        let (g, p) = self.backward(state, xv, uv)?;
        Ok((g.into_raw_vec_and_offset().0, p))
    }
}

fn cached<'a>(
    slot: &'a Option<Array2<f64>>,
    x: ArrayView2<f64>,
    what: &str,
) -> Result<&'a Array2<f64>> {
    match slot {
        Some(a) if a.shape() == x.shape() => Ok(a),
        Some(a) => Err(Error::contract(format!(
            "cached {what} have shape {:?}, input has {:?}",
            a.shape(),
            x.shape()
        ))),
        None => Err(Error::contract(format!("no cached {what}: run forward first"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn eval(kind: ActivationKind, x: &[f64]) -> Vec<f64> {
        kind.forward_vec(&mut ActivationState::new(), x, Mode::Train, &mut rng())
    }

    #[test]
    fn registry_shape() {
        assert_eq!(registry().len(), 48);
        for (i, k) in registry().iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(parse_activation(k.name()).unwrap(), *k);
        }
        let vectorwise: Vec<_> = registry().iter().filter(|k| k.arity() == Arity::Vectorwise).collect();
        assert_eq!(vectorwise.len(), 4);
        let stochastic: Vec<_> = registry().iter().filter(|k| k.is_stochastic()).copied().collect();
        assert_eq!(stochastic, vec![ActivationKind::Rrelu, ActivationKind::GumbelSoftmax]);
        let trainable: usize = registry().iter().map(|k| k.n_trainable_params()).sum();
        assert_eq!(trainable, 1);
    }

    #[test]
    fn parse_is_case_sensitive() {
        assert_eq!(parse_activation("Tanhshrink").unwrap(), ActivationKind::Tanhshrink);
        assert_eq!(
            parse_activation("GeneralizedSwish").unwrap(),
            ActivationKind::GeneralizedSwish
        );
        let err = parse_activation("relu").unwrap_err().to_string();
        assert!(err.contains("ReLU"), "error should list valid names: {err}");
    }

    #[test]
    fn forward_examples() {
        assert_eq!(eval(ActivationKind::Relu, &[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        let c = eval(ActivationKind::ClogLogM, &[0.0])[0];
        assert!((c - (1.0 - 2.0 * (-0.7f64).exp())).abs() < 1e-15);
        assert!((c - 0.006_829_4).abs() < 1e-7);
        assert_eq!(eval(ActivationKind::Softmax, &[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(eval(ActivationKind::Angle, &[-2.0, 0.0, 3.0]), vec![PI, 0.0, 0.0]);
        assert_eq!(eval(ActivationKind::Round, &[0.5, 1.5, -0.5]), vec![0.0, 2.0, -0.0]);
        assert_eq!(eval(ActivationKind::Frac, &[-1.25, 2.75]), vec![-0.25, 0.75]);
    }

    #[test]
    fn nan_and_domain_violations_propagate() {
        assert!(eval(ActivationKind::Relu, &[f64::NAN])[0].is_nan());
        assert!(eval(ActivationKind::Log, &[-1.0])[0].is_nan());
        assert_eq!(eval(ActivationKind::Log, &[0.0])[0], f64::NEG_INFINITY);
        assert!(eval(ActivationKind::Acos, &[2.0])[0].is_nan());
        assert!(eval(ActivationKind::Digamma, &[-2.0])[0].is_nan());
    }

    #[test]
    fn backward_examples() {
        let st = ActivationState::new();
        let (g, p) = ActivationKind::Relu.backward_vec(&st, &[2.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        assert!(p.is_empty());
        let (g, _) = ActivationKind::Relu.backward_vec(&st, &[0.0], &[1.0]).unwrap();
        assert_eq!(g, vec![0.0]);
        let (g, _) = ActivationKind::Sigmoid.backward_vec(&st, &[0.0], &[1.0]).unwrap();
        assert_eq!(g, vec![0.25]);
        let (g, _) = ActivationKind::Floor.backward_vec(&st, &[1.5], &[1.0]).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn prelu_parameter_gradient() {
        let st = ActivationState::new();
        let (g, p) = ActivationKind::Prelu
            .backward_vec(&st, &[2.0, -1.0, -3.0], &[1.0, 2.0, 0.5])
            .unwrap();
        assert_eq!(g, vec![1.0, 0.5, 0.125]);
        assert_eq!(p, vec![-2.0 - 1.5]);
    }

    #[test]
    fn rrelu_modes() {
        let mut st = ActivationState::new();
        let x = [-1.0, -2.0, 3.0];
        let train = ActivationKind::Rrelu.forward_vec(&mut st, &x, Mode::Train, &mut rng());
        for (o, v) in train.iter().zip(x) {
            if v < 0.0 {
                let slope = o / v;
                assert!((RRELU_LOWER..RRELU_UPPER).contains(&slope));
            } else {
                assert_eq!(*o, v);
            }
        }
        let eval = ActivationKind::Rrelu.forward_vec(&mut st, &x, Mode::Eval, &mut rng());
        assert_eq!(eval, vec![-RRELU_EVAL_SLOPE, -2.0 * RRELU_EVAL_SLOPE, 3.0]);
        assert!(st.rrelu_slopes.is_none());
    }

    #[test]
    fn stochastic_backward_without_forward_is_contract_error() {
        let st = ActivationState::new();
        let err = ActivationKind::GumbelSoftmax
            .backward_vec(&st, &[0.0, 1.0], &[1.0, 0.0])
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert!(ActivationKind::Rrelu.backward_vec(&st, &[-1.0], &[1.0]).is_err());
    }

    #[test]
    fn stochastic_kinds_are_seed_deterministic() {
        for kind in [ActivationKind::Rrelu, ActivationKind::GumbelSoftmax] {
            let x = [-0.3, 0.2, -1.7, 0.9];
            let a = kind.forward_vec(&mut ActivationState::new(), &x, Mode::Train, &mut rng());
            let b = kind.forward_vec(&mut ActivationState::new(), &x, Mode::Train, &mut rng());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn softmax_normalizes_rows() {
        let x = ndarray::array![[1.0, 2.0, 3.0], [-5.0, 0.0, 700.0]];
        let s = softmax_rows(x.view());
        for row in s.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
