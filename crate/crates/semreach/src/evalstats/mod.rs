//! Post-training evaluation and cross-agent statistics.
//!
//! A trained parameter snapshot is scored over many seeded episodes with
//! relaxed success thresholds, summarized into a report (returns, episode
//! lengths, failure distances, reach accuracy), and dumped as one CSV row
//! per episode. Agents are compared against a baseline with one-way ANOVA
//! on their per-episode returns.

mod anova;

pub use anova::{anova_oneway, f_sf, ln_gamma, reg_incomplete_beta, AnovaResult};

use crate::arena::{EnvConfig, ReachArena, Rgb};
use crate::policy::{greedy_actions, sample_actions, AgentConfig, Network, ParamSet,
    PolicyError, RecurrentState};
use crate::real::Real;
use crate::rng::{derive, stream};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] crate::arena::EnvError),
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Reach accuracy: the percentage of distances at or under the threshold.
pub fn accuracy(distances: &[f64], threshold: f64) -> Result<f64, StatsError> {
    if distances.is_empty() {
        return Err(StatsError::BadInput(
            "accuracy needs at least one distance".into(),
        ));
    }
    let hits = distances.iter().filter(|&&d| d <= threshold).count();
    Ok(100.0 * hits as f64 / distances.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleStats {
    pub mean: f64,
    /// Population standard deviation (divide by N).
    pub std: f64,
    pub histogram: Vec<usize>,
    pub lo: f64,
    pub hi: f64,
}

/// Mean, population standard deviation, and a histogram of joint angles
/// over the working range. Values outside the range land in the edge bins.
pub fn joint_angle_stats(
    angles: &[f64],
    range: (f64, f64),
    bins: usize,
) -> Result<AngleStats, StatsError> {
    if angles.is_empty() {
        return Err(StatsError::BadInput("no angles to summarize".into()));
    }
    let (lo, hi) = range;
    if lo >= hi || bins == 0 {
        return Err(StatsError::BadInput(
            "angle range must be non-empty and bins positive".into(),
        ));
    }
    let n = angles.len() as f64;
    let mean = angles.iter().sum::<f64>() / n;
    let var = angles.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let mut histogram = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &a in angles {
        let idx = (((a - lo) / width).floor() as isize).clamp(0, bins as isize - 1);
        histogram[idx as usize] += 1;
    }
    Ok(AngleStats {
        mean,
        std: var.sqrt(),
        histogram,
        lo,
        hi,
    })
}

/// Settings for a post-training evaluation pass. The thresholds replace
/// the environment's training thresholds, and the policy is sampled
/// unless `greedy` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    pub dist_threshold: f64,
    pub deg_threshold: f64,
    pub greedy: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            episodes: 1000,
            dist_threshold: 0.10,
            deg_threshold: 17.0,
            greedy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEpisode {
    pub episode: usize,
    pub seed: u64,
    pub target_kind: &'static str,
    pub realized_color: Rgb,
    pub steps: usize,
    pub episode_return: f64,
    pub final_rel_dist: f64,
    pub final_rel_deg: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: Vec<EvalEpisode>,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_steps: f64,
    pub std_steps: f64,
    /// Final distances of failed episodes only.
    pub failure_distances: Vec<f64>,
    pub mean_failure_distance: Option<f64>,
    /// Reach accuracy over all final distances at the evaluation
    /// distance threshold.
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_episodes(
        episodes: Vec<EvalEpisode>,
        dist_threshold: f64,
    ) -> Result<Self, StatsError> {
        if episodes.is_empty() {
            return Err(StatsError::BadInput("no evaluation episodes".into()));
        }
        let n = episodes.len() as f64;
        let returns: Vec<f64> = episodes.iter().map(|e| e.episode_return).collect();
        let steps: Vec<f64> = episodes.iter().map(|e| e.steps as f64).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let pstd = |v: &[f64], m: f64| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
        let mean_return = mean(&returns);
        let mean_steps = mean(&steps);
        let failure_distances: Vec<f64> = episodes
            .iter()
            .filter(|e| !e.success)
            .map(|e| e.final_rel_dist)
            .collect();
        let mean_failure_distance = if failure_distances.is_empty() {
            None
        } else {
            Some(failure_distances.iter().sum::<f64>() / failure_distances.len() as f64)
        };
        let final_dists: Vec<f64> = episodes.iter().map(|e| e.final_rel_dist).collect();
        let acc = accuracy(&final_dists, dist_threshold)?;
        Ok(EvalReport {
            std_return: pstd(&returns, mean_return),
            std_steps: pstd(&steps, mean_steps),
            mean_return,
            mean_steps,
            failure_distances,
            mean_failure_distance,
            accuracy: acc,
            episodes,
        })
    }

    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.episode_return).collect()
    }
}

const EVAL_EPISODE_TAG: u64 = 0x504f535445564c;
const EVAL_SAMPLE_TAG: u64 = 0x504f535453414d;

/// Scores frozen parameters over seeded episodes with the evaluation
/// thresholds swapped in.
pub fn post_train_eval<T: Real>(
    agent: &AgentConfig,
    env_cfg: &EnvConfig,
    kge: Option<&[f64]>,
    flat: &[f64],
    settings: &EvalSettings,
    seed: u64,
) -> Result<EvalReport, StatsError> {
    if settings.episodes == 0 {
        return Err(StatsError::BadInput("need at least one episode".into()));
    }
    let mut eval_env_cfg = env_cfg.clone();
    eval_env_cfg.success_dist = settings.dist_threshold;
    eval_env_cfg.success_deg = settings.deg_threshold;
    let mut env = ReachArena::new(eval_env_cfg, seed)?;

    let mut params = ParamSet::<T>::orthogonal(agent, 0);
    let cast: Vec<T> = flat.iter().map(|&v| T::of(v)).collect();
    params.load_flat(&cast);
    let mut network = Network::new(agent.clone(), &params)?;
    let kge_cast: Option<Vec<T>> = kge.map(|k| k.iter().map(|&v| T::of(v)).collect());
    let mut sample_rng = stream(derive(seed, EVAL_SAMPLE_TAG), 0);

    let episode_base = derive(seed, EVAL_EPISODE_TAG);
    let mut episodes = Vec::with_capacity(settings.episodes);
    for i in 0..settings.episodes {
        let ep_seed = derive(episode_base, i as u64);
        let mut obs: Vec<T> = env.reset(ep_seed).iter().map(|&v| T::of(v)).collect();
        let mut state = RecurrentState::zeros(agent.lstm_width);
        let mut episode_return = 0.0;
        let mut steps = 0;
        let (success, rel_dist, rel_deg) = loop {
            let (output, next) = network.forward(&obs, kge_cast.as_deref(), &state)?;
            let actions = if settings.greedy {
                greedy_actions(&output)
            } else {
                sample_actions(&output, &mut sample_rng).0
            };
            let out = env.step(&actions)?;
            episode_return += out.reward;
            steps += 1;
            obs = out.observation.iter().map(|&v| T::of(v)).collect();
            state = next;
            if out.done {
                break (out.info.success, out.info.rel_dist, out.info.rel_deg);
            }
        };
        episodes.push(EvalEpisode {
            episode: i,
            seed: ep_seed,
            target_kind: env.state().target.spec.kind.label(),
            realized_color: env.state().target.color,
            steps,
            episode_return,
            final_rel_dist: rel_dist,
            final_rel_deg: rel_deg,
            success,
        });
    }
    EvalReport::from_episodes(episodes, settings.dist_threshold)
}

pub fn eval_csv_header() -> &'static str {
    "episode,seed,target_kind,realized_color,steps,return,final_rel_dist,final_rel_deg,success"
}

fn color_label(c: Rgb) -> String {
    format!("{}:{}:{}", c[0], c[1], c[2])
}

pub fn eval_csv_row(e: &EvalEpisode) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        e.episode,
        e.seed,
        e.target_kind,
        color_label(e.realized_color),
        e.steps,
        e.episode_return,
        e.final_rel_dist,
        e.final_rel_deg,
        e.success as u8
    )
}

/// Writes the per-episode evaluation CSV.
pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<(), StatsError> {
    let mut out = String::with_capacity(64 * (report.episodes.len() + 1));
    out.push_str(eval_csv_header());
    out.push('\n');
    for e in &report.episodes {
        out.push_str(&eval_csv_row(e));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| StatsError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// One evaluated agent entering a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEval {
    pub name: String,
    pub accuracy: f64,
    pub best_step: u64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub agent: String,
    pub accuracy: f64,
    pub best_step: u64,
    pub f: f64,
    pub p: f64,
}

/// Compares each agent's per-episode returns against the first entry via
/// one-way ANOVA. The baseline is compared against itself, which pins its
/// row to F = 0, p = 1.
pub fn compare_agents(entries: &[AgentEval]) -> Result<Vec<ComparisonRow>, StatsError> {
    let baseline = entries
        .first()
        .ok_or_else(|| StatsError::BadInput("no agents to compare".into()))?;
    entries
        .iter()
        .map(|e| {
            let r = anova_oneway(&[&baseline.returns, &e.returns])?;
            Ok(ComparisonRow {
                agent: e.name.clone(),
                accuracy: e.accuracy,
                best_step: e.best_step,
                f: r.f,
                p: r.p,
            })
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("agent,accuracy,best_step,F,p\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.agent, r.accuracy, r.best_step, r.f, r.p
        ));
    }
    out
}

/// Fixed-width text table of the comparison, one agent per line.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let name_w = rows
        .iter()
        .map(|r| r.agent.len())
        .chain(["agent".len()])
        .max()
        .unwrap_or(5);
    let mut out = format!(
        "{:name_w$}  {:>9}  {:>10}  {:>10}  {:>8}\n",
        "agent", "accuracy", "best_step", "F", "p"
    );
    for r in rows {
        out.push_str(&format!(
            "{:name_w$}  {:>8.2}%  {:>10}  {:>10.4}  {:>8.4}\n",
            r.agent, r.accuracy, r.best_step, r.f, r.p
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ConvSpec;

    #[test]
    fn accuracy_counts_the_boundary() {
        // 0.1 <= 0.1 counts, so two of three pass.
        let a = accuracy(&[0.05, 0.1, 0.2], 0.1).unwrap();
        assert_eq!(a, 200.0 / 3.0);
        assert_eq!(accuracy(&[0.2], 0.1).unwrap(), 0.0);
        assert_eq!(accuracy(&[0.0], 0.1).unwrap(), 100.0);
        assert!(accuracy(&[], 0.1).is_err());
    }

    #[test]
    fn accuracy_is_monotone_in_threshold() {
        let d = [0.01, 0.04, 0.09, 0.12, 0.31];
        let mut last = 0.0;
        for thr in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let a = accuracy(&d, thr).unwrap();
            assert!(a >= last, "accuracy dropped from {last} to {a} at {thr}");
            last = a;
        }
        assert_eq!(last, 100.0);
    }

    #[test]
    fn joint_angle_stats_hand_case() {
        let s = joint_angle_stats(
            &[0.0, std::f64::consts::FRAC_PI_2],
            (-std::f64::consts::PI, std::f64::consts::PI),
            4,
        )
        .unwrap();
        assert!((s.mean - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((s.std - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        // Four bins over [-pi, pi]: 0 opens bin 2 and pi/2 opens bin 3.
        assert_eq!(s.histogram, vec![0, 0, 1, 1]);
    }

    #[test]
    fn joint_angle_stats_matches_welford() {
        let mut rng = crate::rng::stream(17, 0x57454c46);
        use rand::Rng as _;
        let angles: Vec<f64> = (0..500).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s = joint_angle_stats(&angles, (-2.0, 2.0), 8).unwrap();
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &a) in angles.iter().enumerate() {
            let d = a - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (a - mean);
        }
        let std = (m2 / angles.len() as f64).sqrt();
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - std).abs() < 1e-12);
        assert_eq!(s.histogram.iter().sum::<usize>(), 500);
    }

    #[test]
    fn report_summaries_are_consistent() {
        let mk = |ret: f64, steps: usize, dist: f64, success: bool| EvalEpisode {
            episode: 0,
            seed: 0,
            target_kind: "mug",
            realized_color: [1.0, 0.0, 0.0],
            steps,
            episode_return: ret,
            final_rel_dist: dist,
            final_rel_deg: 3.0,
            success,
        };
        let eps = vec![
            mk(10.0, 5, 0.02, true),
            mk(-2.0, 50, 0.08, false),
            mk(-6.0, 50, 0.30, false),
        ];
        let r = EvalReport::from_episodes(eps, 0.10).unwrap();
        assert!((r.mean_return - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.mean_steps - 35.0).abs() < 1e-12);
        assert_eq!(r.failure_distances, vec![0.08, 0.30]);
        assert!((r.mean_failure_distance.unwrap() - 0.19).abs() < 1e-12);
        // Distances 0.02 and 0.08 clear the 0.10 threshold.
        assert!((r.accuracy - 200.0 / 3.0).abs() < 1e-12);
        let mean: f64 = 2.0 / 3.0;
        let want_var = ((10.0 - mean).powi(2) + (-2.0 - mean).powi(2) + (-6.0 - mean).powi(2)) / 3.0;
        assert!((r.std_return - want_var.sqrt()).abs() < 1e-12);
    }

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

    fn tiny_env_cfg() -> EnvConfig {
        EnvConfig {
            image_size: 16,
            ..EnvConfig::reach2()
        }
    }

    #[test]
    fn post_train_eval_reports_and_reproduces() {
        let agent = tiny_agent();
        let flat = ParamSet::<f64>::orthogonal(&agent, 5).flatten();
        let settings = EvalSettings {
            episodes: 12,
            ..EvalSettings::default()
        };
        let a = post_train_eval::<f32>(&agent, &tiny_env_cfg(), None, &flat, &settings, 99).unwrap();
        assert_eq!(a.episodes.len(), 12);
        for e in &a.episodes {
            assert!(e.steps >= 1 && e.steps <= 50);
            assert!(e.final_rel_dist >= 0.0);
            assert!((0.0..=180.0).contains(&e.final_rel_deg));
            assert!(["mug", "bottle", "cereal_box"].contains(&e.target_kind));
            // Success under the relaxed thresholds must match the metrics.
            assert_eq!(
                e.success,
                e.final_rel_dist < 0.10 && e.final_rel_deg < 180.0
            );
        }
        let b = post_train_eval::<f32>(&agent, &tiny_env_cfg(), None, &flat, &settings, 99).unwrap();
        assert_eq!(a, b, "same seed must reproduce the whole report");
        let c = post_train_eval::<f32>(&agent, &tiny_env_cfg(), None, &flat, &settings, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn eval_csv_has_one_row_per_episode() {
        let agent = tiny_agent();
        let flat = ParamSet::<f64>::orthogonal(&agent, 6).flatten();
        let settings = EvalSettings {
            episodes: 4,
            greedy: true,
            ..EvalSettings::default()
        };
        let report =
            post_train_eval::<f32>(&agent, &tiny_env_cfg(), None, &flat, &settings, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        write_eval_csv(&path, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], eval_csv_header());
        assert_eq!(lines.len(), 5);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 9);
        }
    }

    #[test]
    fn compare_agents_pins_the_baseline_row() {
        let base = AgentEval {
            name: "baseline".into(),
            accuracy: 40.0,
            best_step: 100_000,
            returns: vec![1.0, 2.0, 3.0],
        };
        let other = AgentEval {
            name: "kge".into(),
            accuracy: 55.0,
            best_step: 50_000,
            returns: vec![2.0, 3.0, 4.0],
        };
        let rows = compare_agents(&[base.clone(), other]).unwrap();
        assert_eq!(rows[0].f, 0.0);
        assert_eq!(rows[0].p, 1.0);
        assert!((rows[1].f - 1.5).abs() < 1e-12);
        assert!((rows[1].p - 0.2878641347266906).abs() < 1e-10);
        assert_eq!(rows[1].agent, "kge");
        assert_eq!(rows[1].best_step, 50_000);
        assert!(compare_agents(&[]).is_err());
    }

    #[test]
    fn comparison_outputs_are_well_formed() {
        let rows = vec![
            ComparisonRow {
                agent: "baseline".into(),
                accuracy: 41.25,
                best_step: 150_000,
                f: 0.0,
                p: 1.0,
            },
            ComparisonRow {
                agent: "kge-full".into(),
                accuracy: 63.5,
                best_step: 100_000,
                f: 12.345,
                p: 0.0005,
            },
        ];
        let csv = comparison_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "agent,accuracy,best_step,F,p");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("baseline,41.25,150000,"));
        let table = comparison_table(&rows);
        let tlines: Vec<&str> = table.lines().collect();
        assert_eq!(tlines.len(), 3);
        assert!(tlines[0].contains("agent") && tlines[0].contains("best_step"));
        assert!(tlines[1].len() == tlines[2].len(), "rows must align");
    }
}
