//! Dense feed-forward classifier trained full-batch with Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind, ActivationState, Mode};
use crate::architecture::Architecture;
use crate::error::{Error, Result};

/// Width of every hidden layer.
pub const HIDDEN_WIDTH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    /// `fan_out x fan_in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearLayer {
    /// Uniform `(-k, k)` initialization with `k = 1/sqrt(fan_in)` for weights and bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let k = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-k..k));
        let bias = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-k..k));
        Self { weight, bias }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    /// `x W^T + b`
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub layers: Vec<LinearLayer>,
    pub architecture: Architecture,
    pub states: Vec<ActivationState>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

/// Everything backward needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each linear layer.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pub pre_activations: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// PReLU slope gradient per layer (zero for other kinds).
    pub slopes: Vec<f64>,
}

/// Builds a network with the default hidden width.
pub fn init_network<R: Rng + ?Sized>(
    input_dim: usize,
    n_classes: usize,
    architecture: Architecture,
    rng: &mut R,
) -> Result<Network> {
    Network::new(input_dim, n_classes, architecture, HIDDEN_WIDTH, rng)
}

impl Network {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        n_classes: usize,
        architecture: Architecture,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::contract("input dimension must be at least 1"));
        }
        if n_classes < 2 {
            return Err(Error::contract(format!("need at least 2 classes, got {n_classes}")));
        }
        if architecture.is_empty() || hidden_dim == 0 {
            return Err(Error::contract("architecture must have at least one layer"));
        }
        let depth = architecture.len();
        let layers = (0..depth)
            .map(|i| {
                let fan_in = if i == 0 { input_dim } else { hidden_dim };
                let fan_out = if i + 1 == depth { n_classes } else { hidden_dim };
                LinearLayer::init(fan_in, fan_out, rng)
            })
            .collect();
        Ok(Self {
            layers,
            states: vec![ActivationState::new(); depth],
            architecture,
            input_dim,
            hidden_dim,
            n_classes,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `(fan_in, fan_out)` of each layer.
    pub fn fan_profile(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.fan_in(), l.fan_out())).collect()
    }

    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(ForwardCache, Array2<f64>)> {
        if x.ncols() != self.input_dim {
            return Err(Error::contract(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        let depth = self.depth();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(depth),
            pre_activations: Vec::with_capacity(depth),
        };
        let mut current = x.to_owned();
        for ((layer, &kind), state) in self
            .layers
            .iter()
            .zip(self.architecture.iter())
            .zip(self.states.iter_mut())
        {
            let z = layer.apply(current.view());
            let a = kind.forward(state, z.view(), mode, rng);
            cache.inputs.push(current);
            cache.pre_activations.push(z);
            current = a;
        }
        Ok((cache, current))
    }

    /// Eval-mode outputs without retaining a cache.
    pub fn predict<R: Rng + ?Sized>(&mut self, x: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::contract(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        let mut current = x.to_owned();
        for ((layer, &kind), state) in self
            .layers
            .iter()
            .zip(self.architecture.iter())
            .zip(self.states.iter_mut())
        {
            let z = layer.apply(current.view());
            current = kind.forward(state, z.view(), Mode::Eval, rng);
        }
        Ok(current)
    }

    /// Reverse-mode pass from the loss gradient with respect to the outputs.
    pub fn backward(&self, cache: &ForwardCache, grad_outputs: ArrayView2<f64>) -> Result<Gradients> {
        let depth = self.depth();
        if cache.inputs.len() != depth || cache.pre_activations.len() != depth {
            return Err(Error::contract("forward cache does not match network depth"));
        }
        let last = &cache.pre_activations[depth - 1];
        if grad_outputs.shape() != last.shape() {
            return Err(Error::contract(format!(
                "output gradient shape {:?} does not match outputs {:?}",
                grad_outputs.shape(),
                last.shape()
            )));
        }
        let mut weights = vec![Array2::zeros((0, 0)); depth];
        let mut biases = vec![Array1::zeros(0); depth];
        let mut slopes = vec![0.0; depth];
        let mut upstream = grad_outputs.to_owned();
        for i in (0..depth).rev() {
            let kind = self.architecture[i];
            let (delta, params) =
                kind.backward(&self.states[i], cache.pre_activations[i].view(), upstream.view())?;
            if kind == ActivationKind::Prelu {
                slopes[i] = params[0];
            }
            weights[i] = delta.t().dot(&cache.inputs[i]);
            biases[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                upstream = delta.dot(&self.layers[i].weight);
            }
        }
        Ok(Gradients {
            weights,
            biases,
            slopes,
        })
    }

    /// Mutable views of every trainable, in a fixed order: per layer weight, bias, slope.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3 * self.depth());
        for (layer, state) in self.layers.iter_mut().zip(self.states.iter_mut()) {
            out.push(layer.weight.as_slice_mut().expect("weights are contiguous"));
            out.push(layer.bias.as_slice_mut().expect("bias is contiguous"));
            out.push(std::slice::from_mut(&mut state.prelu_slope));
        }
        out
    }

    /// Sizes of the slots returned by [`parameters_mut`](Self::parameters_mut).
    pub fn parameter_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len(), 1])
            .collect()
    }

    pub fn parameters_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.states.iter().all(|s| s.prelu_slope.is_finite())
    }

    pub fn to_dump(&self) -> ModelDump {
        ModelDump {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            n_classes: self.n_classes,
            architecture: self.architecture.clone(),
            layers: self
                .layers
                .iter()
                .zip(&self.states)
                .map(|(l, s)| LayerDump {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                    prelu_slope: s.prelu_slope,
                })
                .collect(),
        }
    }

    pub fn from_dump(dump: &ModelDump) -> Result<Self> {
        if dump.layers.len() != dump.architecture.len() {
            return Err(Error::contract("dump has mismatched layer and architecture lengths"));
        }
        let mut layers = Vec::with_capacity(dump.layers.len());
        let mut states = Vec::with_capacity(dump.layers.len());
        for l in &dump.layers {
            let weight = Array2::from_shape_vec((l.fan_out, l.fan_in), l.weight.clone())
                .map_err(|e| Error::contract(format!("bad weight shape: {e}")))?;
            if l.bias.len() != l.fan_out {
                return Err(Error::contract("bias length differs from fan_out"));
            }
            layers.push(LinearLayer {
                weight,
                bias: Array1::from(l.bias.clone()),
            });
            states.push(ActivationState {
                prelu_slope: l.prelu_slope,
                ..ActivationState::default()
            });
        }
        Ok(Self {
            layers,
            states,
            architecture: dump.architecture.clone(),
            input_dim: dump.input_dim,
            hidden_dim: dump.hidden_dim,
            n_classes: dump.n_classes,
        })
    }
}

/// Serialized trained model. Field order: dims, architecture names, then per layer
/// `fan_in`, `fan_out`, row-major `weight` (`fan_out x fan_in`), `bias`, `prelu_slope`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub architecture: Architecture,
    pub layers: Vec<LayerDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDump {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub prelu_slope: f64,
}

/// Mean cross-entropy treating `outputs` as logits, and its gradient.
///
/// Applied on top of whatever the output activation produced, so a `Softmax` output layer is
/// normalized twice. Argmax predictions are unaffected by the extra softmax.
pub fn cross_entropy_loss(outputs: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let n = outputs.nrows();
    if labels.len() != n {
        return Err(Error::contract(format!(
            "{} labels for {} output rows",
            labels.len(),
            n
        )));
    }
    let n_classes = outputs.ncols();
    let mut grad = Array2::zeros(outputs.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &label) in outputs.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        if label >= n_classes {
            return Err(Error::contract(format!("label {label} out of range 0..{n_classes}")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (gv, &v) in g.iter_mut().zip(row.iter()) {
            *gv = (v - max).exp();
            sum += *gv;
        }
        total += max + sum.ln() - row[label];
        for gv in g.iter_mut() {
            *gv /= sum * n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}

/// Index of the largest entry; ties and NaNs resolve toward the lowest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(outputs: ArrayView2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = outputs
        .outer_iter()
        .zip(labels)
        .filter(|(row, &label)| argmax(row.iter().copied()) == label)
        .count();
    correct as f64 / labels.len() as f64
}

/// Eval-mode accuracy of `net` on `(x, y)`, and whether every output was finite.
pub fn predict_accuracy<R: Rng + ?Sized>(
    net: &mut Network,
    x: ArrayView2<f64>,
    y: &[usize],
    rng: &mut R,
) -> Result<(f64, bool)> {
    let outputs = net.predict(x, rng)?;
    Ok((accuracy(outputs.view(), y), outputs.iter().all(|v| v.is_finite())))
}

/// Adam moment state over a list of parameter slots.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 1e-3;

    pub fn new(slot_sizes: &[usize], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One bias-corrected Adam update of every slot.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "adam expects {} slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((theta, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            if theta.len() != m.len() || g.len() != m.len() {
                return Err(Error::contract("adam slot size mismatch"));
            }
            for i in 0..m.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

impl Gradients {
    /// Slices in the same slot order as [`Network::parameters_mut`].
    pub fn slots(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.weights.len());
        for ((w, b), s) in self.weights.iter().zip(&self.biases).zip(&self.slopes) {
            out.push(w.as_slice().expect("gradient is contiguous"));
            out.push(b.as_slice().expect("gradient is contiguous"));
            out.push(std::slice::from_ref(s));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            patience: 10,
            min_delta: 0.001,
            learning_rate: AdamState::DEFAULT_LR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stops once the epoch-over-epoch improvement stays below `min_delta` for `patience`
/// consecutive epochs. The first observation only sets the baseline.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    previous: Option<f64>,
    stalled: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            previous: None,
            stalled: 0,
        }
    }

    /// Records one epoch's accuracy; returns true when training should stop.
    pub fn observe(&mut self, accuracy: f64) -> bool {
        if let Some(prev) = self.previous {
            if accuracy - prev < self.min_delta {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        }
        self.previous = Some(accuracy);
        self.stalled >= self.patience
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub failed: bool,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }
}

/// Full-batch training. The monitored accuracy is that of each epoch's own (train-mode) forward
/// pass, taken before the parameter update. A non-finite loss or parameter marks the run failed.
pub fn train<R: Rng + ?Sized>(
    net: &mut Network,
    x: ArrayView2<f64>,
    y: &[usize],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainHistory> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::contract(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let mut adam = AdamState::new(&net.parameter_sizes(), config.learning_rate);
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        failed: false,
        stopped_early: false,
    };
    for epoch in 1..=config.max_epochs {
        let (cache, outputs) = net.forward(x, Mode::Train, rng)?;
        let (loss, grad) = cross_entropy_loss(outputs.view(), y)?;
        let acc = accuracy(outputs.view(), y);
        history.epochs.push(EpochStats {
            epoch,
            loss,
            accuracy: acc,
        });
        if !loss.is_finite() {
            history.failed = true;
            return Ok(history);
        }
        let grads = net.backward(&cache, grad.view())?;
        adam.step(&mut net.parameters_mut(), &grads.slots())?;
        if stopper.observe(acc) {
            history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    if !net.parameters_finite() {
        history.failed = true;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn fan_profile_follows_hidden_width() {
        let net = init_network(16, 26, Architecture::standard(5).unwrap(), &mut rng(1)).unwrap();
        assert_eq!(
            net.fan_profile(),
            vec![(16, 64), (64, 64), (64, 64), (64, 64), (64, 26)]
        );
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_network(64, 3, Architecture::standard(5).unwrap(), &mut rng(5)).unwrap();
        let b = init_network(64, 3, Architecture::standard(5).unwrap(), &mut rng(5)).unwrap();
        assert_eq!(a.layers, b.layers);
        let max = a.layers[1].weight.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 0.125);
        assert!(max > 0.12, "uniform law should nearly reach its bound, got {max}");
    }

    #[test]
    fn invalid_dims_rejected() {
        let arch = Architecture::standard(5).unwrap();
        assert!(init_network(0, 3, arch.clone(), &mut rng(0)).is_err());
        assert!(init_network(3, 1, arch, &mut rng(0)).is_err());
    }

    #[test]
    fn identity_layer_forward() {
        let mut net = Network::new(
            2,
            2,
            Architecture::new(vec![ActivationKind::Relu]),
            64,
            &mut rng(0),
        )
        .unwrap();
        net.layers[0].weight = Array2::eye(2);
        net.layers[0].bias.fill(0.0);
        let (_, out) = net.forward(array![[-1.0, 2.0]].view(), Mode::Train, &mut rng(0)).unwrap();
        assert_eq!(out, array![[0.0, 2.0]]);
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, grad) = cross_entropy_loss(array![[0.0, 0.0, 0.0, 0.0]].view(), &[2]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad.sum()).abs() < 1e-15);
        let (loss, _) = cross_entropy_loss(array![[1000.0, 0.0]].view(), &[0]).unwrap();
        assert!(loss.abs() < 1e-12);
        let (_, grad) = cross_entropy_loss(array![[0.0, 0.0], [0.0, 0.0]].view(), &[0, 0]).unwrap();
        assert_eq!(grad, array![[-0.25, 0.25], [-0.25, 0.25]]);
        let (loss, _) = cross_entropy_loss(array![[f64::NAN, 0.0]].view(), &[1]).unwrap();
        assert!(loss.is_nan());
        assert!(cross_entropy_loss(array![[0.0, 0.0]].view(), &[2]).is_err());
    }

    #[test]
    fn adam_closed_forms() {
        let mut adam = AdamState::new(&[1], 1e-3);
        let mut theta = [0.0];
        adam.step(&mut [&mut theta[..]], &[&[1.0][..]]).unwrap();
        assert!((theta[0] + 1e-3).abs() < 1e-10);
        adam.step(&mut [&mut theta[..]], &[&[1.0][..]]).unwrap();
        assert!((theta[0] + 2e-3).abs() < 1e-6);
        assert_eq!(adam.t, 2);

        let mut adam = AdamState::new(&[2], 1e-3);
        let mut theta = [0.5, -0.5];
        adam.step(&mut [&mut theta[..]], &[&[0.0, 0.0][..]]).unwrap();
        assert_eq!(theta, [0.5, -0.5]);
        assert!(adam.second_moments()[0].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn early_stopping_counter() {
        let mut stop = EarlyStopping::new(10, 0.001);
        let mut stopped_at = None;
        for epoch in 1..=300 {
            if stop.observe(0.5) {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(11));

        let mut stop = EarlyStopping::new(2, 0.001);
        assert!(!stop.observe(0.1));
        assert!(!stop.observe(0.1));
        assert!(!stop.observe(0.2));
        assert!(!stop.observe(0.2));
        assert!(stop.observe(0.2));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax([0.5, 0.5]), 0);
        assert_eq!(argmax([f64::NAN, 1.0]), 1);
        assert_eq!(argmax([f64::NAN, f64::NAN]), 0);
        assert_eq!(accuracy(array![[0.5, 0.5]].view(), &[0]), 1.0);
        assert_eq!(accuracy(Array2::<f64>::eye(3).view(), &[0, 1, 2]), 1.0);
    }

    #[test]
    fn dump_round_trip() {
        let net = init_network(3, 2, "PReLU,Tanh".parse().unwrap(), &mut rng(3)).unwrap();
        let dump = net.to_dump();
        let json = serde_json::to_string(&dump).unwrap();
        let back: ModelDump = serde_json::from_str(&json).unwrap();
        let restored = Network::from_dump(&back).unwrap();
        assert_eq!(restored.layers, net.layers);
        assert_eq!(restored.architecture, net.architecture);
    }
}
