//! The recurrent actor-critic network.
//!
//! Image → conv → ReLU → conv → ReLU → flatten → FC(128) → ReLU, then the
//! scene embedding is concatenated to the FC activations and the result
//! feeds an LSTM. From the LSTM hidden state, one softmax head per joint
//! produces a 7-way action distribution and a single linear layer produces
//! the value estimate.

use crate::autodiff::{orthogonal_init, AdError, LstmWeights, Tape, TensorId};
use crate::real::Real;
use crate::rng::fnv1a;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid agent config: {0}")]
    BadConfig(String),
    #[error("image has {got} values, expected {want} ({size}x{size}x3)")]
    ImageShape { got: usize, want: usize, size: usize },
    #[error("scene embedding has length {got}, config expects {want}")]
    KgeLength { got: usize, want: usize },
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// One convolution layer's shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

/// Network shape configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentConfig {
    pub n_joints: usize,
    pub actions_per_joint: usize,
    /// 0 disables the semantic input (the baseline agent).
    pub kge_dim: usize,
    pub image_size: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub fc_width: usize,
    pub lstm_width: usize,
}

impl AgentConfig {
    /// The full-scale architecture: 64x64 input, 3x3 stride-4 and 5x5
    /// stride-2 convolutions, 1152x128 FC, LSTM width 128.
    pub fn production(n_joints: usize, kge_dim: usize) -> Self {
        AgentConfig {
            n_joints,
            actions_per_joint: 7,
            kge_dim,
            image_size: 64,
            conv1: ConvSpec { kernel: 3, stride: 4, channels: 16 },
            conv2: ConvSpec { kernel: 5, stride: 2, channels: 32 },
            fc_width: 128,
            lstm_width: 128,
        }
    }

    /// Down-scaled variant for 32x32 observations; same layer structure.
    pub fn desk(n_joints: usize, kge_dim: usize) -> Self {
        AgentConfig {
            image_size: 32,
            ..Self::production(n_joints, kge_dim)
        }
    }

    fn conv_out(size: usize, spec: &ConvSpec) -> Option<usize> {
        if spec.kernel == 0 || spec.stride == 0 || spec.kernel > size {
            return None;
        }
        Some((size - spec.kernel) / spec.stride + 1)
    }

    /// Spatial side length after conv1.
    pub fn conv1_out(&self) -> usize {
        Self::conv_out(self.image_size, &self.conv1).unwrap_or(0)
    }

    /// Spatial side length after conv2.
    pub fn conv2_out(&self) -> usize {
        Self::conv_out(self.conv1_out(), &self.conv2).unwrap_or(0)
    }

    /// Flattened visual feature length entering the FC layer.
    pub fn flatten_len(&self) -> usize {
        let s = self.conv2_out();
        s * s * self.conv2.channels
    }

    /// Width of the vector entering the LSTM: FC activations plus embedding.
    pub fn lstm_input_width(&self) -> usize {
        self.fc_width + self.kge_dim
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.n_joints == 0 {
            return Err(PolicyError::BadConfig("n_joints must be positive".into()));
        }
        if self.actions_per_joint != 7 {
            return Err(PolicyError::BadConfig(format!(
                "the action set has exactly 7 entries, got {}",
                self.actions_per_joint
            )));
        }
        if self.fc_width == 0 || self.lstm_width == 0 || self.image_size == 0 {
            return Err(PolicyError::BadConfig(
                "fc_width, lstm_width, and image_size must be positive".into(),
            ));
        }
        let s1 = Self::conv_out(self.image_size, &self.conv1).ok_or_else(|| {
            PolicyError::BadConfig(format!(
                "conv1 {}x{} stride {} does not fit a {}px image",
                self.conv1.kernel, self.conv1.kernel, self.conv1.stride, self.image_size
            ))
        })?;
        Self::conv_out(s1, &self.conv2).ok_or_else(|| {
            PolicyError::BadConfig(format!(
                "conv2 {}x{} stride {} does not fit the {}px conv1 output",
                self.conv2.kernel, self.conv2.kernel, self.conv2.stride, s1
            ))
        })?;
        if self.conv1.channels == 0 || self.conv2.channels == 0 {
            return Err(PolicyError::BadConfig("conv channels must be positive".into()));
        }
        Ok(())
    }

    /// Named parameter tensors in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            (
                "conv1.kernel".to_string(),
                vec![self.conv1.kernel, self.conv1.kernel, 3, self.conv1.channels],
            ),
            ("conv1.bias".to_string(), vec![self.conv1.channels]),
            (
                "conv2.kernel".to_string(),
                vec![
                    self.conv2.kernel,
                    self.conv2.kernel,
                    self.conv1.channels,
                    self.conv2.channels,
                ],
            ),
            ("conv2.bias".to_string(), vec![self.conv2.channels]),
            ("fc.weight".to_string(), vec![self.flatten_len(), self.fc_width]),
            ("fc.bias".to_string(), vec![self.fc_width]),
            (
                "lstm.w_x".to_string(),
                vec![self.lstm_input_width(), 4 * self.lstm_width],
            ),
            ("lstm.w_h".to_string(), vec![self.lstm_width, 4 * self.lstm_width]),
            ("lstm.bias".to_string(), vec![4 * self.lstm_width]),
        ];
        for j in 0..self.n_joints {
            out.push((
                format!("actor{j}.weight"),
                vec![self.lstm_width, self.actions_per_joint],
            ));
            out.push((format!("actor{j}.bias"), vec![self.actions_per_joint]));
        }
        out.push(("critic.weight".to_string(), vec![self.lstm_width, 1]));
        out.push(("critic.bias".to_string(), vec![1]));
        out
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

/// All parameters of one network, in layout order.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Real> ParamSet<T> {
    /// Orthogonal draw for every weight matrix (conv kernels viewed as
    /// fan-in x fan-out), zero biases. Each tensor gets its own stream
    /// derived from the seed and the tensor name.
    pub fn orthogonal(config: &AgentConfig, seed: u64) -> Self {
        let entries = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let values = if shape.len() == 1 {
                    vec![T::ZERO; shape[0]]
                } else {
                    let cols = *shape.last().expect("non-scalar shape");
                    let rows = shape.iter().rev().skip(1).product::<usize>();
                    orthogonal_init(rows, cols, 1.0, seed, fnv1a(&name))
                };
                ParamEntry { name, shape, values }
            })
            .collect();
        ParamSet { entries }
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    /// All values concatenated in layout order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.total_len());
        for e in &self.entries {
            out.extend_from_slice(&e.values);
        }
        out
    }

    /// Overwrites every tensor from one concatenated slice.
    pub fn load_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.total_len(), "flat parameter length mismatch");
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.values.len();
            e.values.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// Episode-scoped LSTM memory; zeroed at each episode start.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> RecurrentState<T> {
    pub fn zeros(width: usize) -> Self {
        RecurrentState {
            h: vec![T::ZERO; width],
            c: vec![T::ZERO; width],
        }
    }
}

/// Action distributions and value estimate for one observation.
#[derive(Debug, Clone)]
pub struct PolicyOutput<T> {
    /// One probability vector of length `actions_per_joint` per joint.
    pub action_dists: Vec<Vec<T>>,
    pub value: T,
}

/// Tape handles for one on-tape forward step; used to assemble losses.
#[derive(Debug, Clone)]
pub struct StepNodes {
    pub head_logits: Vec<TensorId>,
    pub head_probs: Vec<TensorId>,
    pub value: TensorId,
    pub h: TensorId,
    pub c: TensorId,
}

/// A network instance: the tape, plus leaf ids for every parameter tensor.
pub struct Network<T: Real> {
    config: AgentConfig,
    tape: Tape<T>,
    param_ids: Vec<TensorId>,
    by_name: BTreeMap<String, usize>,
    base_mark: usize,
}

impl<T: Real> Network<T> {
    pub fn new(config: AgentConfig, params: &ParamSet<T>) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.entries().len() {
            return Err(PolicyError::BadConfig(format!(
                "parameter set has {} tensors, config expects {}",
                params.entries().len(),
                layout.len()
            )));
        }
        let mut tape = Tape::new();
        let mut param_ids = Vec::with_capacity(layout.len());
        let mut by_name = BTreeMap::new();
        for ((name, shape), entry) in layout.into_iter().zip(params.entries()) {
            if entry.name != name || entry.shape != shape {
                return Err(PolicyError::BadConfig(format!(
                    "parameter {} has shape {:?}, config expects {name} {shape:?}",
                    entry.name, entry.shape
                )));
            }
            let id = tape.leaf(&shape, entry.values.clone(), true);
            by_name.insert(name, param_ids.len());
            param_ids.push(id);
        }
        let base_mark = tape.watermark();
        Ok(Network {
            config,
            tape,
            param_ids,
            by_name,
            base_mark,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn tape(&mut self) -> &mut Tape<T> {
        &mut self.tape
    }

    pub fn param_ids(&self) -> &[TensorId] {
        &self.param_ids
    }

    fn id(&self, name: &str) -> TensorId {
        self.param_ids[self.by_name[name]]
    }

    /// Watermark right after the parameter leaves; truncating here drops
    /// all activation nodes while keeping parameters and their gradients.
    pub fn base_mark(&self) -> usize {
        self.base_mark
    }

    /// Refreshes all parameter leaves from a flat snapshot.
    pub fn sync_from_flat(&mut self, flat: &[T]) {
        let mut off = 0;
        for i in 0..self.param_ids.len() {
            let id = self.param_ids[i];
            let n = self.tape.len(id);
            self.tape.set_values(id, &flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    /// Copies out accumulated gradients, one vector per parameter tensor
    /// (zeros where no gradient arrived).
    pub fn grads(&self) -> Vec<Vec<T>> {
        self.param_ids
            .iter()
            .map(|&id| match self.tape.grad(id) {
                Some(g) => g.to_vec(),
                None => vec![T::ZERO; self.tape.len(id)],
            })
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for i in 0..self.param_ids.len() {
            let id = self.param_ids[i];
            self.tape.zero_grad(id);
        }
    }

    /// Registers the recurrent state as constant tape leaves, for starting
    /// a rollout window from a detached state.
    pub fn state_leaves(&mut self, state: &RecurrentState<T>) -> (TensorId, TensorId) {
        let h = self.tape.leaf(&[self.config.lstm_width], state.h.clone(), false);
        let c = self.tape.leaf(&[self.config.lstm_width], state.c.clone(), false);
        (h, c)
    }

    fn check_inputs(&self, image: &[T], kge: Option<&[T]>) -> Result<(), PolicyError> {
        let want = self.config.image_size * self.config.image_size * 3;
        if image.len() != want {
            return Err(PolicyError::ImageShape {
                got: image.len(),
                want,
                size: self.config.image_size,
            });
        }
        match (self.config.kge_dim, kge) {
            (0, None) => Ok(()),
            (0, Some(k)) => Err(PolicyError::KgeLength { got: k.len(), want: 0 }),
            (d, Some(k)) if k.len() == d => Ok(()),
            (d, k) => Err(PolicyError::KgeLength {
                got: k.map_or(0, <[T]>::len),
                want: d,
            }),
        }
    }

    /// One differentiable forward step. The recurrent inputs are tape
    /// tensors so gradients can flow through time within a rollout window.
    pub fn forward_on_tape(
        &mut self,
        image: &[T],
        kge: Option<&[T]>,
        h: TensorId,
        c: TensorId,
    ) -> Result<StepNodes, PolicyError> {
        self.check_inputs(image, kge)?;
        let s = self.config.image_size;
        let img = self.tape.leaf(&[s, s, 3], image.to_vec(), false);
        let c1 = self.tape.conv2d(
            img,
            self.id("conv1.kernel"),
            self.id("conv1.bias"),
            self.config.conv1.stride,
        )?;
        let r1 = self.tape.relu(c1);
        let c2 = self.tape.conv2d(
            r1,
            self.id("conv2.kernel"),
            self.id("conv2.bias"),
            self.config.conv2.stride,
        )?;
        let r2 = self.tape.relu(c2);
        // r2 is row-major, so the matvec sees it as the flattened vector.
        let fc = self
            .tape
            .fully_connected(r2, self.id("fc.weight"), self.id("fc.bias"))?;
        let rf = self.tape.relu(fc);
        let lstm_in = match kge {
            Some(k) => {
                let kl = self.tape.leaf(&[k.len()], k.to_vec(), false);
                self.tape.concat(rf, kl)
            }
            None => rf,
        };
        let weights = LstmWeights {
            w_x: self.id("lstm.w_x"),
            w_h: self.id("lstm.w_h"),
            bias: self.id("lstm.bias"),
        };
        let (h2, c2s) = self.tape.lstm_cell(lstm_in, h, c, &weights)?;
        let mut head_logits = Vec::with_capacity(self.config.n_joints);
        let mut head_probs = Vec::with_capacity(self.config.n_joints);
        for j in 0..self.config.n_joints {
            let logits = self.tape.fully_connected(
                h2,
                self.id(&format!("actor{j}.weight")),
                self.id(&format!("actor{j}.bias")),
            )?;
            head_logits.push(logits);
            head_probs.push(self.tape.softmax(logits));
        }
        let value_vec = self
            .tape
            .fully_connected(h2, self.id("critic.weight"), self.id("critic.bias"))?;
        let value = self.tape.gather(value_vec, 0)?;
        Ok(StepNodes {
            head_logits,
            head_probs,
            value,
            h: h2,
            c: c2s,
        })
    }

    /// Gradient-free forward: runs one step, extracts plain values, and
    /// truncates the tape back so evaluation loops stay flat in memory.
    pub fn forward(
        &mut self,
        image: &[T],
        kge: Option<&[T]>,
        state: &RecurrentState<T>,
    ) -> Result<(PolicyOutput<T>, RecurrentState<T>), PolicyError> {
        let mark = self.tape.watermark();
        let (h, c) = self.state_leaves(state);
        let nodes = self.forward_on_tape(image, kge, h, c)?;
        let action_dists = nodes
            .head_probs
            .iter()
            .map(|&p| self.tape.values(p).to_vec())
            .collect();
        let out = PolicyOutput {
            action_dists,
            value: self.tape.item(nodes.value),
        };
        let next = RecurrentState {
            h: self.tape.values(nodes.h).to_vec(),
            c: self.tape.values(nodes.c).to_vec(),
        };
        self.tape.truncate(mark);
        Ok((out, next))
    }
}

/// Samples one action per head. Returns the chosen indices, the joint
/// log-probability (sum over heads), and the summed head entropies.
pub fn sample_actions<T: Real, R: Rng>(
    output: &PolicyOutput<T>,
    rng: &mut R,
) -> (Vec<usize>, T, T) {
    let mut indices = Vec::with_capacity(output.action_dists.len());
    let mut log_prob = T::ZERO;
    let mut entropy = T::ZERO;
    for dist in &output.action_dists {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = dist.len() - 1;
        for (i, &p) in dist.iter().enumerate() {
            acc += p.to_f64();
            if u < acc {
                chosen = i;
                break;
            }
        }
        indices.push(chosen);
        log_prob += dist[chosen].ln();
        entropy += head_entropy(dist);
    }
    (indices, log_prob, entropy)
}

/// Argmax per head; exact ties go to the lowest index.
pub fn greedy_actions<T: Real>(output: &PolicyOutput<T>) -> Vec<usize> {
    output
        .action_dists
        .iter()
        .map(|dist| {
            let mut best = 0;
            for (i, &p) in dist.iter().enumerate().skip(1) {
                if p > dist[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn head_entropy<T: Real>(dist: &[T]) -> T {
    let mut h = T::ZERO;
    for &p in dist {
        if p > T::ZERO {
            h -= p * p.ln();
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn toy_config(kge_dim: usize) -> AgentConfig {
        AgentConfig {
            n_joints: 2,
            actions_per_joint: 7,
            kge_dim,
            image_size: 8,
            conv1: ConvSpec { kernel: 2, stride: 2, channels: 3 },
            conv2: ConvSpec { kernel: 2, stride: 2, channels: 4 },
            fc_width: 10,
            lstm_width: 6,
        }
    }

    fn rand_image<T: Real>(config: &AgentConfig, seed: u64) -> Vec<T> {
        let mut rng = stream(seed, 0x504f4c5f494d47);
        (0..config.image_size * config.image_size * 3)
            .map(|_| T::of(rng.gen_range(0.0..1.0)))
            .collect()
    }

    #[test]
    fn production_flatten_is_1152() {
        let cfg = AgentConfig::production(7, 0);
        assert_eq!(cfg.conv1_out(), 16);
        assert_eq!(cfg.conv2_out(), 6);
        assert_eq!(cfg.flatten_len(), 1152);
    }

    #[test]
    fn lstm_input_widths_match_quoted_sizes() {
        assert_eq!(AgentConfig::production(7, 0).lstm_input_width(), 128);
        assert_eq!(AgentConfig::production(7, 150).lstm_input_width(), 278);
        assert_eq!(AgentConfig::production(7, 300).lstm_input_width(), 428);
    }

    #[test]
    fn kge_dim_changes_only_lstm_input_weights() {
        let base = AgentConfig::production(7, 0);
        let full = AgentConfig::production(7, 150);
        let lb = base.layout();
        let lf = full.layout();
        assert_eq!(lb.len(), lf.len());
        let mut diff = 0usize;
        for ((bn, bs), (fname, fs)) in lb.iter().zip(&lf) {
            assert_eq!(bn, fname);
            if bn == "lstm.w_x" {
                diff = fs.iter().product::<usize>() - bs.iter().product::<usize>();
            } else {
                assert_eq!(bs, fs, "{bn} changed shape");
            }
        }
        assert_eq!(diff, 150 * 4 * 128);
    }

    #[test]
    fn config_rejects_oversized_kernels() {
        let mut cfg = toy_config(0);
        cfg.conv1.kernel = 20;
        assert!(cfg.validate().is_err());
        let cfg = toy_config(0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn forward_outputs_normalized_heads_and_finite_value() {
        let cfg = toy_config(5);
        let params = ParamSet::<f64>::orthogonal(&cfg, 3);
        let mut net = Network::new(cfg.clone(), &params).unwrap();
        let image = rand_image::<f64>(&cfg, 1);
        let kge = vec![0.3; 5];
        let state = RecurrentState::zeros(cfg.lstm_width);
        let (out, next) = net.forward(&image, Some(&kge), &state).unwrap();
        assert_eq!(out.action_dists.len(), 2);
        for dist in &out.action_dists {
            assert_eq!(dist.len(), 7);
            let total: f64 = dist.iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(dist.iter().all(|&p| p >= 0.0));
        }
        assert!(out.value.is_finite());
        assert_ne!(next.h, state.h);
    }

    #[test]
    fn forward_rejects_bad_image_and_kge_lengths() {
        let cfg = toy_config(5);
        let params = ParamSet::<f64>::orthogonal(&cfg, 3);
        let mut net = Network::new(cfg.clone(), &params).unwrap();
        let state = RecurrentState::zeros(cfg.lstm_width);
        let image = rand_image::<f64>(&cfg, 1);
        assert!(matches!(
            net.forward(&image[..10], Some(&[0.0; 5]), &state),
            Err(PolicyError::ImageShape { .. })
        ));
        assert!(matches!(
            net.forward(&image, Some(&[0.0; 4]), &state),
            Err(PolicyError::KgeLength { got: 4, want: 5 })
        ));
        assert!(matches!(
            net.forward(&image, None, &state),
            Err(PolicyError::KgeLength { got: 0, want: 5 })
        ));
        let cfg0 = toy_config(0);
        let params0 = ParamSet::<f64>::orthogonal(&cfg0, 3);
        let mut net0 = Network::new(cfg0.clone(), &params0).unwrap();
        assert!(matches!(
            net0.forward(&image, Some(&[0.0; 5]), &state),
            Err(PolicyError::KgeLength { got: 5, want: 0 })
        ));
    }

    #[test]
    fn identical_seeds_give_identical_episodes() {
        let cfg = toy_config(0);
        let params = ParamSet::<f64>::orthogonal(&cfg, 9);
        let mut net = Network::new(cfg.clone(), &params).unwrap();
        let image = rand_image::<f64>(&cfg, 2);
        let run = |net: &mut Network<f64>| {
            let mut state = RecurrentState::zeros(cfg.lstm_width);
            let mut values = Vec::new();
            for _ in 0..3 {
                let (out, next) = net.forward(&image, None, &state).unwrap();
                values.push(out.value);
                state = next;
            }
            values
        };
        let a = run(&mut net);
        let b = run(&mut net);
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_reaches_kge_side_lstm_weights() {
        let cfg = toy_config(5);
        let params = ParamSet::<f64>::orthogonal(&cfg, 11);
        let mut net = Network::new(cfg.clone(), &params).unwrap();
        let image = rand_image::<f64>(&cfg, 4);
        let kge = vec![0.7, -0.2, 0.5, 0.9, -0.8];
        let state = RecurrentState::zeros(cfg.lstm_width);
        let (h, c) = net.state_leaves(&state);
        let nodes = net.forward_on_tape(&image, Some(&kge), h, c).unwrap();
        net.tape().backward(nodes.value).unwrap();
        let wx_index = cfg
            .layout()
            .iter()
            .position(|(n, _)| n == "lstm.w_x")
            .unwrap();
        let g = net.grads()[wx_index].clone();
        // Rows fc_width.. belong to the embedding input.
        let kge_rows = &g[cfg.fc_width * 4 * cfg.lstm_width..];
        assert!(kge_rows.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn sampling_from_deterministic_head_is_certain() {
        let mut dist = vec![0.0; 7];
        dist[4] = 1.0;
        let out = PolicyOutput {
            action_dists: vec![dist],
            value: 0.0,
        };
        let mut rng = stream(5, 1);
        for _ in 0..20 {
            let (idx, lp, _) = sample_actions(&out, &mut rng);
            assert_eq!(idx, vec![4]);
            assert_eq!(lp, 0.0);
        }
    }

    #[test]
    fn uniform_head_entropy_is_ln7() {
        let out = PolicyOutput {
            action_dists: vec![vec![1.0 / 7.0; 7]],
            value: 0.0,
        };
        let mut rng = stream(6, 1);
        let (_, _, h) = sample_actions(&out, &mut rng);
        assert!((h - 7.0f64.ln()).abs() < 1e-12);
        let two = PolicyOutput {
            action_dists: vec![vec![1.0 / 7.0; 7], vec![1.0 / 7.0; 7]],
            value: 0.0,
        };
        let (_, _, h2) = sample_actions(&two, &mut rng);
        assert!((h2 - 2.0 * 7.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sampling_tracks_probabilities() {
        let out = PolicyOutput {
            action_dists: vec![vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]],
            value: 0.0,
        };
        let mut rng = stream(7, 1);
        let mut counts = [0usize; 7];
        for _ in 0..2000 {
            let (idx, _, _) = sample_actions(&out, &mut rng);
            counts[idx[0]] += 1;
        }
        assert_eq!(counts[2..].iter().sum::<usize>(), 0);
        assert!(counts[0] > 800 && counts[1] > 800, "counts {counts:?}");
    }

    #[test]
    fn greedy_breaks_ties_toward_lowest_index() {
        let out = PolicyOutput {
            action_dists: vec![
                vec![0.1, 0.1, 0.25, 0.1, 0.1, 0.25, 0.1],
                vec![1.0 / 7.0; 7],
                vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            ],
            value: 0.0,
        };
        assert_eq!(greedy_actions(&out), vec![2, 0, 6]);
    }

    #[test]
    fn f32_network_runs() {
        let cfg = toy_config(5);
        let params = ParamSet::<f32>::orthogonal(&cfg, 3);
        let mut net = Network::new(cfg.clone(), &params).unwrap();
        let image = rand_image::<f32>(&cfg, 1);
        let kge = vec![0.3f32; 5];
        let state = RecurrentState::zeros(cfg.lstm_width);
        let (out, _) = net.forward(&image, Some(&kge), &state).unwrap();
        let total: f32 = out.action_dists[0].iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
    }

    #[test]
    fn param_set_flat_round_trip() {
        let cfg = toy_config(5);
        let a = ParamSet::<f64>::orthogonal(&cfg, 13);
        let mut b = ParamSet::<f64>::orthogonal(&cfg, 14);
        b.load_flat(&a.flatten());
        for (ea, eb) in a.entries().iter().zip(b.entries()) {
            assert_eq!(ea.values, eb.values);
        }
    }
}
