//! Training orchestration: worker threads, the evaluator, and run output.
//!
//! With one worker the whole loop runs on the calling thread and interim
//! evaluations trigger synchronously at exact step-counter crossings, so
//! two runs from the same seed produce bit-identical evaluation logs. With
//! more workers the evaluator runs on its own thread, polling the shared
//! step counter, which matches the asynchronous topology but gives up
//! exact step alignment.

use super::{
    save_checkpoint, tensors_from_flat, A3cError, SharedParameters, TrainConfig, Worker,
};
use crate::arena::{EnvConfig, ReachArena};
use crate::policy::{greedy_actions, AgentConfig, Network, ParamSet, RecurrentState};
use crate::real::Real;
use crate::rng::derive;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

/// One interim evaluation, as recorded in `eval_log.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub step: u64,
    pub avg_return: f64,
    pub success_rate: f64,
    /// Checkpoint path relative to the run directory.
    pub checkpoint: String,
}

impl EvalRow {
    pub fn csv_header() -> &'static str {
        "step,avg_return,success_rate,checkpoint_path"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.step, self.avg_return, self.success_rate, self.checkpoint
        )
    }

    pub fn from_csv(line: &str) -> Option<EvalRow> {
        let mut parts = line.split(',');
        let step = parts.next()?.parse().ok()?;
        let avg_return = parts.next()?.parse().ok()?;
        let success_rate = parts.next()?.parse().ok()?;
        let checkpoint = parts.next()?.to_string();
        Some(EvalRow {
            step,
            avg_return,
            success_rate,
            checkpoint,
        })
    }
}

/// The best row is the one with the highest average return; ties go to the
/// earliest step.
pub fn select_best(rows: &[EvalRow]) -> Result<&EvalRow, A3cError> {
    rows.iter()
        .reduce(|best, row| if row.avg_return > best.avg_return { row } else { best })
        .ok_or(A3cError::EmptyEvalLog)
}

/// Scores frozen parameters by greedy rollouts from fixed episode seeds.
/// Returns the mean episode return and the success fraction.
pub fn interim_evaluate<T: Real>(
    agent: &AgentConfig,
    env_cfg: &EnvConfig,
    kge: Option<&[f64]>,
    flat: &[f64],
    eval_seeds: &[u64],
) -> Result<(f64, f64), A3cError> {
    let mut params = ParamSet::<T>::orthogonal(agent, 0);
    let cast: Vec<T> = flat.iter().map(|&v| T::of(v)).collect();
    params.load_flat(&cast);
    let mut network = Network::new(agent.clone(), &params)?;
    let kge_cast: Option<Vec<T>> = kge.map(|k| k.iter().map(|&v| T::of(v)).collect());
    let mut env = ReachArena::new(env_cfg.clone(), 0)?;
    let mut total_return = 0.0;
    let mut successes = 0usize;
    for &seed in eval_seeds {
        let mut obs: Vec<T> = env.reset(seed).iter().map(|&v| T::of(v)).collect();
        let mut state = RecurrentState::zeros(agent.lstm_width);
        loop {
            let (output, next) = network.forward(&obs, kge_cast.as_deref(), &state)?;
            let actions = greedy_actions(&output);
            let out = env.step(&actions)?;
            total_return += out.reward;
            obs = out.observation.iter().map(|&v| T::of(v)).collect();
            state = next;
            if out.done {
                if out.info.success {
                    successes += 1;
                }
                break;
            }
        }
    }
    let n = eval_seeds.len() as f64;
    Ok((total_return / n, successes as f64 / n))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub rows: Vec<EvalRow>,
    pub final_step: u64,
}

const EVAL_SEED_TAG: u64 = 0x4556414c53454544;

fn eval_seeds(run_seed: u64, n: usize) -> Vec<u64> {
    let base = derive(run_seed, EVAL_SEED_TAG);
    (0..n).map(|i| derive(base, i as u64)).collect()
}

struct Evaluator<'a> {
    agent: &'a AgentConfig,
    env_cfg: &'a EnvConfig,
    kge: Option<&'a [f64]>,
    seeds: Vec<u64>,
    out_dir: &'a Path,
    log_path: std::path::PathBuf,
    rows: Vec<EvalRow>,
}

impl<'a> Evaluator<'a> {
    fn new(
        agent: &'a AgentConfig,
        env_cfg: &'a EnvConfig,
        kge: Option<&'a [f64]>,
        cfg: &TrainConfig,
        run_seed: u64,
        out_dir: &'a Path,
    ) -> Result<Self, A3cError> {
        let ckpt_dir = out_dir.join("checkpoints");
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| A3cError::Io {
            path: ckpt_dir.display().to_string(),
            source: e,
        })?;
        let log_path = out_dir.join("eval_log.csv");
        std::fs::write(&log_path, format!("{}\n", EvalRow::csv_header())).map_err(|e| {
            A3cError::Io {
                path: log_path.display().to_string(),
                source: e,
            }
        })?;
        Ok(Evaluator {
            agent,
            env_cfg,
            kge,
            seeds: eval_seeds(run_seed, cfg.eval_episodes),
            out_dir,
            log_path,
            rows: Vec::new(),
        })
    }

    /// Evaluates a snapshot, writes its checkpoint, and appends the log
    /// row. Returns the row for stop-condition checks.
    fn run_once<T: Real>(
        &mut self,
        shared: &SharedParameters,
        step: u64,
    ) -> Result<&EvalRow, A3cError> {
        let flat = shared.snapshot();
        let (avg_return, success_rate) =
            interim_evaluate::<T>(self.agent, self.env_cfg, self.kge, &flat, &self.seeds)?;
        let rel = format!("checkpoints/step_{step:010}.bin");
        let tensors = tensors_from_flat(&self.agent.layout(), &flat);
        save_checkpoint(&self.out_dir.join(&rel), self.agent.kge_dim, &tensors)?;
        let row = EvalRow {
            step,
            avg_return,
            success_rate,
            checkpoint: rel,
        };
        let mut file = std::fs::OpenOptions::new()
            .append(true)
            .open(&self.log_path)
            .map_err(|e| A3cError::Io {
                path: self.log_path.display().to_string(),
                source: e,
            })?;
        writeln!(file, "{}", row.to_csv()).map_err(|e| A3cError::Io {
            path: self.log_path.display().to_string(),
            source: e,
        })?;
        self.rows.push(row);
        Ok(self.rows.last().expect("just pushed"))
    }
}

/// Runs a full training job and returns the evaluation rows. `out_dir`
/// receives `checkpoints/` and `eval_log.csv`.
pub fn train<T: Real>(
    agent: AgentConfig,
    env_cfg: EnvConfig,
    kge: Option<Vec<f64>>,
    cfg: TrainConfig,
    run_seed: u64,
    out_dir: &Path,
) -> Result<TrainOutcome, A3cError> {
    cfg.validate()?;
    agent.validate().map_err(A3cError::Policy)?;
    env_cfg.validate()?;
    if let Some(k) = &kge {
        if k.len() != agent.kge_dim {
            return Err(A3cError::BadConfig(format!(
                "scene embedding has {} values, agent expects kge_dim {}",
                k.len(),
                agent.kge_dim
            )));
        }
    } else if agent.kge_dim != 0 {
        return Err(A3cError::BadConfig(format!(
            "agent expects kge_dim {} but no scene embedding was given",
            agent.kge_dim
        )));
    }

    let flat = ParamSet::<f64>::orthogonal(&agent, run_seed).flatten();
    let shared = SharedParameters::new(&flat, cfg.lr, cfg.rms_decay, cfg.rms_eps, cfg.hogwild);
    let mut evaluator = Evaluator::new(&agent, &env_cfg, kge.as_deref(), &cfg, run_seed, out_dir)?;

    if cfg.n_workers == 1 {
        let env = ReachArena::new(env_cfg.clone(), run_seed)?;
        let mut worker: Worker<T> =
            Worker::new(agent.clone(), env, kge.as_deref(), cfg.clone(), run_seed, 0)?;
        let mut next_eval = cfg.eval_every;
        loop {
            worker.run_window(&shared)?;
            let steps = shared.steps();
            let mut stop = steps >= cfg.total_steps;
            while steps >= next_eval {
                let row = evaluator.run_once::<T>(&shared, steps)?;
                if let Some(thr) = cfg.stop_at_success_rate {
                    if row.success_rate >= thr {
                        stop = true;
                    }
                }
                next_eval += cfg.eval_every;
            }
            if stop {
                break;
            }
        }
    } else {
        let stop = AtomicBool::new(false);
        let shared_ref = &shared;
        let stop_ref = &stop;
        let worker_error = std::sync::Mutex::new(None::<A3cError>);
        std::thread::scope(|scope| -> Result<(), A3cError> {
            for wid in 0..cfg.n_workers {
                let agent = agent.clone();
                let env_cfg = env_cfg.clone();
                let kge = kge.clone();
                let cfg = cfg.clone();
                let worker_error = &worker_error;
                scope.spawn(move || {
                    let run = || -> Result<(), A3cError> {
                        let env = ReachArena::new(env_cfg, run_seed ^ wid as u64)?;
                        let mut worker: Worker<T> =
                            Worker::new(agent, env, kge.as_deref(), cfg, run_seed, wid)?;
                        while !stop_ref.load(Ordering::Relaxed) {
                            worker.run_window(shared_ref)?;
                        }
                        Ok(())
                    };
                    if let Err(e) = run() {
                        *worker_error.lock().expect("worker error lock") = Some(e);
                        stop_ref.store(true, Ordering::Relaxed);
                    }
                });
            }
            // Evaluator runs on this thread.
            let mut next_eval = cfg.eval_every;
            while !stop.load(Ordering::Relaxed) {
                std::thread::sleep(std::time::Duration::from_millis(20));
                let steps = shared.steps();
                if steps >= next_eval {
                    let row = evaluator.run_once::<T>(&shared, steps)?;
                    if let Some(thr) = cfg.stop_at_success_rate {
                        if row.success_rate >= thr {
                            stop.store(true, Ordering::Relaxed);
                        }
                    }
                    next_eval += cfg.eval_every;
                }
                if steps >= cfg.total_steps {
                    stop.store(true, Ordering::Relaxed);
                }
            }
            Ok(())
        })?;
        if let Some(e) = worker_error.into_inner().expect("worker error lock") {
            return Err(e);
        }
    }

    let final_step = shared.steps();
    if evaluator.rows.last().map(|r| r.step) != Some(final_step) {
        evaluator.run_once::<T>(&shared, final_step)?;
    }
    Ok(TrainOutcome {
        rows: evaluator.rows,
        final_step,
    })
}
