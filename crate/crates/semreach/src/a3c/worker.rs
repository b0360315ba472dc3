//! Rollout worker: collects windows of experience and turns them into
//! shared parameter updates.
//!
//! Each window syncs the local network from the shared block, rolls out at
//! most `t_max` steps (stopping early at episode boundaries), builds the
//! combined policy and value loss on the tape, backpropagates once, clips
//! the flattened gradient by global norm, and applies it. The LSTM state
//! carries across windows inside an episode as plain values, so gradients
//! never flow past a window boundary.

use super::{compute_gae, n_step_returns, A3cError, SharedParameters};
use crate::arena::ReachArena;
use crate::autodiff::{clip_global_norm, TensorId};
use crate::policy::{sample_actions, AgentConfig, Network, ParamSet, PolicyOutput, RecurrentState, StepNodes};
use crate::real::Real;
use crate::rng::{derive, stream};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub beta: f64,
    pub lambda: f64,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub t_max: usize,
    pub grad_clip: f64,
    pub total_steps: u64,
    pub n_workers: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Stop as soon as an interim evaluation reaches this success-rate
    /// fraction, if set.
    pub stop_at_success_rate: Option<f64>,
    pub hogwild: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            beta: 0.01,
            lambda: 1.0,
            lr: 1e-4,
            rms_decay: 0.99,
            rms_eps: 1e-8,
            t_max: 20,
            grad_clip: 40.0,
            total_steps: 2_000_000,
            n_workers: 17,
            eval_every: 50_000,
            eval_episodes: 40,
            stop_at_success_rate: None,
            hogwild: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), A3cError> {
        let bad = |msg: &str| Err(A3cError::BadConfig(msg.into()));
        if !(0.0 < self.gamma && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0 < self.lambda && self.lambda <= 1.0) {
            return bad("lambda must be in (0, 1]");
        }
        // beta may take either sign: the loss is -sum(logpi * A - beta * H),
        // so positive beta penalizes entropy and negative beta is the
        // classical exploration bonus expressed through this convention.
        if self.lr <= 0.0 || self.grad_clip <= 0.0 {
            return bad("lr and grad_clip must be positive");
        }
        if self.t_max == 0 || self.n_workers == 0 || self.eval_episodes == 0 {
            return bad("t_max, n_workers, and eval_episodes must be positive");
        }
        if self.eval_every == 0 || self.total_steps == 0 {
            return bad("eval_every and total_steps must be positive");
        }
        Ok(())
    }
}

/// What one rollout window did, for callers that track progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowReport {
    pub steps: usize,
    pub terminal: bool,
    pub episode_finished_with_success: bool,
}

struct WindowStep {
    nodes: StepNodes,
    actions: Vec<usize>,
    reward: f64,
    value: f64,
}

pub struct Worker<T: Real> {
    network: Network<T>,
    env: ReachArena,
    kge: Option<Vec<T>>,
    cfg: TrainConfig,
    sample_rng: ChaCha8Rng,
    episode_seed_base: u64,
    episode_index: u64,
    state: RecurrentState<T>,
    obs: Vec<T>,
    episode_live: bool,
}

const WORKER_EPISODE_TAG: u64 = 0x45505f53454544;
const WORKER_SAMPLE_TAG: u64 = 0x53414d504c45;

impl<T: Real> Worker<T> {
    pub fn new(
        agent: AgentConfig,
        env: ReachArena,
        kge: Option<&[f64]>,
        cfg: TrainConfig,
        run_seed: u64,
        worker_id: usize,
    ) -> Result<Self, A3cError> {
        cfg.validate()?;
        let params = ParamSet::<T>::orthogonal(&agent, run_seed);
        let lstm_width = agent.lstm_width;
        let network = Network::new(agent, &params)?;
        Ok(Worker {
            network,
            env,
            kge: kge.map(|k| k.iter().map(|&v| T::of(v)).collect()),
            cfg,
            sample_rng: stream(derive(run_seed, WORKER_SAMPLE_TAG), worker_id as u64),
            episode_seed_base: derive(derive(run_seed, WORKER_EPISODE_TAG), worker_id as u64),
            episode_index: 0,
            state: RecurrentState::zeros(lstm_width),
            obs: Vec::new(),
            episode_live: false,
        })
    }

    pub fn network(&mut self) -> &mut Network<T> {
        &mut self.network
    }

    /// Runs one window: sync, rollout, one backward pass, one shared
    /// update. Returns how far the episode got.
    pub fn run_window(&mut self, shared: &SharedParameters) -> Result<WindowReport, A3cError> {
        self.network.sync_from_flat(&shared.snapshot_as::<T>());
        if !self.episode_live {
            let seed = derive(self.episode_seed_base, self.episode_index);
            self.episode_index += 1;
            self.obs = to_real(&self.env.reset(seed));
            self.state = RecurrentState::zeros(self.network.config().lstm_width);
            self.episode_live = true;
        }

        let (mut h, mut c) = self.network.state_leaves(&self.state);
        let mut window: Vec<WindowStep> = Vec::with_capacity(self.cfg.t_max);
        let mut terminal = false;
        let mut success = false;
        for _ in 0..self.cfg.t_max {
            let nodes = self
                .network
                .forward_on_tape(&self.obs, self.kge.as_deref(), h, c)?;
            let output = PolicyOutput {
                action_dists: nodes
                    .head_probs
                    .iter()
                    .map(|&p| self.network.tape().values(p).to_vec())
                    .collect(),
                value: self.network.tape().item(nodes.value),
            };
            let (actions, _lp, _ent) = sample_actions(&output, &mut self.sample_rng);
            let out = self.env.step(&actions)?;
            self.obs = to_real(&out.observation);
            h = nodes.h;
            c = nodes.c;
            window.push(WindowStep {
                value: self.network.tape().item(nodes.value).to_f64(),
                nodes,
                actions,
                reward: out.reward,
            });
            if out.done {
                terminal = true;
                success = out.info.success;
                self.episode_live = false;
                break;
            }
        }

        // Detach the recurrent state at the window boundary.
        let carried = RecurrentState {
            h: self.network.tape().values(h).to_vec(),
            c: self.network.tape().values(c).to_vec(),
        };
        let bootstrap = if terminal {
            0.0
        } else {
            let (out, _) = self
                .network
                .forward(&self.obs, self.kge.as_deref(), &carried)?;
            out.value.to_f64()
        };
        self.state = carried;

        let rewards: Vec<f64> = window.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = window.iter().map(|s| s.value).collect();
        let advantages = compute_gae(
            &rewards,
            &values,
            bootstrap,
            terminal,
            self.cfg.gamma,
            self.cfg.lambda,
        );
        let returns = n_step_returns(&rewards, bootstrap, terminal, self.cfg.gamma);

        let (policy_id, value_id) =
            build_window_losses(&mut self.network, &window, &advantages, &returns, self.cfg.beta)?;
        let loss = self.network.tape().add(policy_id, value_id)?;
        self.network.tape().backward(loss)?;

        let mut flat: Vec<f64> = Vec::new();
        for g in self.network.grads() {
            flat.extend(g.iter().map(|v| v.to_f64()));
        }
        let mut groups = [flat];
        clip_global_norm(&mut groups, self.cfg.grad_clip);
        shared.apply_gradients(&groups[0]);
        shared.add_steps(window.len() as u64);

        let base = self.network.base_mark();
        self.network.zero_grads();
        self.network.tape().truncate(base);

        Ok(WindowReport {
            steps: window.len(),
            terminal,
            episode_finished_with_success: success,
        })
    }
}

fn to_real<T: Real>(obs: &[f64]) -> Vec<T> {
    obs.iter().map(|&v| T::of(v)).collect()
}

/// Builds the window's policy and value losses on the tape and returns
/// their scalar node ids. Advantages and returns enter as constants, so
/// the policy gradient treats them as fixed weights and the value
/// gradient only flows through the critic outputs.
fn build_window_losses<T: Real>(
    network: &mut Network<T>,
    window: &[WindowStep],
    advantages: &[f64],
    returns: &[f64],
    beta: f64,
) -> Result<(TensorId, TensorId), A3cError> {
    let mut policy_terms: Option<TensorId> = None;
    let mut value_terms: Option<TensorId> = None;
    for (t, step) in window.iter().enumerate() {
        let tape = network.tape();
        let mut log_prob: Option<TensorId> = None;
        let mut entropy: Option<TensorId> = None;
        for (j, (&logits, &probs)) in step
            .nodes
            .head_logits
            .iter()
            .zip(&step.nodes.head_probs)
            .enumerate()
        {
            let log_dist = tape.log_softmax(logits);
            let picked = tape.gather(log_dist, step.actions[j])?;
            log_prob = Some(match log_prob {
                Some(acc) => tape.add(acc, picked)?,
                None => picked,
            });
            let plogp = tape.mul(probs, log_dist)?;
            let sum = tape.sum(plogp);
            let h = tape.neg(sum);
            entropy = Some(match entropy {
                Some(acc) => tape.add(acc, h)?,
                None => h,
            });
        }
        let log_prob = log_prob.expect("at least one action head");
        let entropy = entropy.expect("at least one action head");
        let weighted = tape.scale(log_prob, T::of(advantages[t]));
        let penalty = tape.scale(entropy, T::of(beta));
        let term = tape.sub(weighted, penalty)?;
        policy_terms = Some(match policy_terms {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });

        let neg_v = tape.neg(step.nodes.value);
        let diff = tape.add_const(neg_v, T::of(returns[t]));
        let sq = tape.mul(diff, diff)?;
        value_terms = Some(match value_terms {
            Some(acc) => tape.add(acc, sq)?,
            None => sq,
        });
    }
    let tape = network.tape();
    let policy = tape.neg(policy_terms.expect("non-empty window"));
    let value = tape.scale(value_terms.expect("non-empty window"), T::of(0.5));
    Ok((policy, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::EnvConfig;
    use crate::policy::ConvSpec;

    fn tiny_agent() -> AgentConfig {
        AgentConfig {
            n_joints: 2,
            actions_per_joint: 7,
            kge_dim: 0,
            image_size: 16,
            conv1: ConvSpec {
                kernel: 2,
                stride: 2,
                channels: 4,
            },
            conv2: ConvSpec {
                kernel: 2,
                stride: 2,
                channels: 8,
            },
            fc_width: 32,
            lstm_width: 24,
        }
    }

    fn tiny_env(seed: u64) -> ReachArena {
        let cfg = EnvConfig {
            image_size: 16,
            ..EnvConfig::reach2()
        };
        ReachArena::new(cfg, seed).unwrap()
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            t_max: 8,
            total_steps: 1_000,
            n_workers: 1,
            eval_every: 500,
            eval_episodes: 2,
            ..TrainConfig::default()
        }
    }

    fn fresh_shared(agent: &AgentConfig, cfg: &TrainConfig, seed: u64) -> SharedParameters {
        let flat = ParamSet::<f64>::orthogonal(agent, seed).flatten();
        SharedParameters::new(&flat, cfg.lr, cfg.rms_decay, cfg.rms_eps, cfg.hogwild)
    }

    #[test]
    fn window_respects_t_max_and_episode_cuts() {
        let agent = tiny_agent();
        let cfg = tiny_train();
        let shared = fresh_shared(&agent, &cfg, 3);
        let mut w: Worker<f32> = Worker::new(agent, tiny_env(3), None, cfg.clone(), 3, 0).unwrap();
        let mut total = 0usize;
        let mut saw_terminal = false;
        for _ in 0..12 {
            let rep = w.run_window(&shared).unwrap();
            assert!(rep.steps >= 1 && rep.steps <= cfg.t_max);
            total += rep.steps;
            if rep.terminal {
                saw_terminal = true;
                // Episodes cap at 50 env steps, so windows must cut there.
                assert!(total % 50 <= cfg.t_max * 12);
            }
        }
        assert!(saw_terminal, "no episode ended in 12 windows of 8 steps");
        assert_eq!(shared.steps(), total as u64);
    }

    #[test]
    fn updates_move_the_shared_parameters() {
        let agent = tiny_agent();
        let cfg = tiny_train();
        let shared = fresh_shared(&agent, &cfg, 5);
        let before = shared.snapshot();
        let mut w: Worker<f32> = Worker::new(agent, tiny_env(5), None, cfg, 5, 0).unwrap();
        for _ in 0..3 {
            w.run_window(&shared).unwrap();
        }
        let after = shared.snapshot();
        let moved = before
            .iter()
            .zip(&after)
            .filter(|(a, b)| a != b)
            .count();
        assert!(moved > after.len() / 2, "only {moved} parameters moved");
        assert!(after.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identical_workers_produce_identical_updates() {
        let run = || {
            let agent = tiny_agent();
            let cfg = tiny_train();
            let shared = fresh_shared(&agent, &cfg, 7);
            let mut w: Worker<f32> = Worker::new(agent, tiny_env(7), None, cfg, 7, 0).unwrap();
            for _ in 0..4 {
                w.run_window(&shared).unwrap();
            }
            shared.snapshot()
        };
        let a = run();
        let b = run();
        let ab: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb, "single-worker training must be bit-deterministic");
    }

    #[test]
    fn policy_and_value_losses_touch_disjoint_heads() {
        let agent = tiny_agent();
        let cfg = tiny_train();
        let shared = fresh_shared(&agent, &cfg, 9);
        let mut w: Worker<f64> = Worker::new(agent.clone(), tiny_env(9), None, cfg.clone(), 9, 0).unwrap();

        // Rebuild one window by hand so the two losses can be separated.
        w.network.sync_from_flat(&shared.snapshot_as::<f64>());
        let seed = derive(w.episode_seed_base, 0);
        w.obs = to_real(&w.env.reset(seed));
        w.state = RecurrentState::zeros(w.network.config().lstm_width);
        let (mut h, mut c) = w.network.state_leaves(&w.state);
        let mut window = Vec::new();
        for _ in 0..4 {
            let nodes = w.network.forward_on_tape(&w.obs, None, h, c).unwrap();
            let output = PolicyOutput {
                action_dists: nodes
                    .head_probs
                    .iter()
                    .map(|&p| w.network.tape().values(p).to_vec())
                    .collect(),
                value: w.network.tape().item(nodes.value),
            };
            let (actions, _, _) = sample_actions(&output, &mut w.sample_rng);
            let out = w.env.step(&actions).unwrap();
            w.obs = to_real(&out.observation);
            h = nodes.h;
            c = nodes.c;
            window.push(WindowStep {
                value: w.network.tape().item(nodes.value),
                nodes,
                actions,
                reward: out.reward,
            });
            if out.done {
                break;
            }
        }
        let advantages = vec![1.0; window.len()];
        let returns = vec![0.5; window.len()];
        let (policy_id, value_id) =
            build_window_losses(&mut w.network, &window, &advantages, &returns, 0.01).unwrap();

        let grad_norm = |net: &Network<f64>, name: &str| -> f64 {
            let layout = net.config().layout();
            let idx = layout.iter().position(|(n, _)| n == name).unwrap();
            net.grads()[idx].iter().map(|g| g * g).sum::<f64>().sqrt()
        };

        w.network.tape().backward(policy_id).unwrap();
        assert_eq!(grad_norm(&w.network, "critic.weight"), 0.0);
        assert!(grad_norm(&w.network, "actor0.weight") > 0.0);
        assert!(grad_norm(&w.network, "lstm.w_x") > 0.0);

        w.network.zero_grads();
        w.network.tape().backward(value_id).unwrap();
        assert!(grad_norm(&w.network, "critic.weight") > 0.0);
        assert_eq!(grad_norm(&w.network, "actor0.weight"), 0.0);
        assert_eq!(grad_norm(&w.network, "actor1.weight"), 0.0);
        assert!(grad_norm(&w.network, "lstm.w_x") > 0.0);
    }

    #[test]
    fn gradient_clipping_bounds_the_applied_norm() {
        let mut groups = [vec![30.0f64, 40.0]];
        let norm = clip_global_norm(&mut groups, 40.0);
        assert!((norm - 50.0).abs() < 1e-12);
        let clipped: f64 = groups[0].iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!((clipped - 40.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let cases = [
            TrainConfig {
                gamma: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                lambda: 1.5,
                ..TrainConfig::default()
            },
            TrainConfig {
                t_max: 0,
                ..TrainConfig::default()
            },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?} should be rejected");
        }
        assert!(TrainConfig::default().validate().is_ok());
    }
}
