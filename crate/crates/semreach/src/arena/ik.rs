//! Closed-form inverse kinematics for the two- and three-link arms.
//!
//! Used as a scripted oracle policy: it computes in-range joint targets for
//! the current grasp point and greedily picks, per joint, the action index
//! whose increment lands closest to the target. Learning code never calls
//! this; tests and the demo command do.

use super::{action_decode, EnvConfig, ReachArena};

/// Joint angles that put the end effector on `grasp` (and, for a
/// three-link arm, at heading `grasp_deg`), or None when no solution fits
/// the joint ranges. `current` breaks ties between elbow branches.
pub fn ik_joint_targets(
    config: &EnvConfig,
    grasp: (f64, f64),
    grasp_deg: f64,
    current: &[f64],
) -> Option<Vec<f64>> {
    match config.n_links {
        2 => {
            let sols = two_link(config.link_lengths[0], config.link_lengths[1], grasp)?;
            pick(sols.iter().map(|s| s.to_vec()), config, current)
        }
        3 => {
            let phi = grasp_deg.to_radians();
            let l3 = config.link_lengths[2];
            let wrist = (grasp.0 - l3 * phi.cos(), grasp.1 - l3 * phi.sin());
            let sols = two_link(config.link_lengths[0], config.link_lengths[1], wrist)?;
            let full = sols
                .iter()
                .map(|&[t1, t2]| vec![t1, t2, wrap_to_pi(phi - t1 - t2)]);
            pick(full, config, current)
        }
        _ => None,
    }
}

/// Both elbow branches for a planar two-link arm, or None if out of reach.
fn two_link(l1: f64, l2: f64, target: (f64, f64)) -> Option<[[f64; 2]; 2]> {
    let (x, y) = target;
    let r2 = x * x + y * y;
    let d = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&d) {
        return None;
    }
    let s = (1.0 - d * d).max(0.0).sqrt();
    let base = y.atan2(x);
    let mut out = [[0.0; 2]; 2];
    for (i, elbow_s) in [s, -s].into_iter().enumerate() {
        let t2 = elbow_s.atan2(d);
        let t1 = base - (l2 * elbow_s).atan2(l1 + l2 * d);
        out[i] = [wrap_to_pi(t1), t2];
    }
    Some(out)
}

fn pick<I: Iterator<Item = Vec<f64>>>(
    candidates: I,
    config: &EnvConfig,
    current: &[f64],
) -> Option<Vec<f64>> {
    let in_range = |sol: &[f64]| {
        sol.iter()
            .zip(&config.joint_ranges)
            .all(|(&a, &(lo, hi))| a >= lo && a <= hi)
    };
    let effort = |sol: &[f64]| -> f64 {
        sol.iter()
            .zip(current)
            .map(|(&a, &c)| (a - c).abs())
            .sum()
    };
    candidates
        .filter(|s| in_range(s))
        .min_by(|a, b| effort(a).total_cmp(&effort(b)))
}

fn wrap_to_pi(a: f64) -> f64 {
    use std::f64::consts::PI;
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// One greedy oracle step: per joint, the action index whose increment
/// lands closest to the IK target. Holds still when IK has no solution.
pub fn ik_policy_action(env: &ReachArena) -> Vec<usize> {
    let config = env.config();
    let state = env.state();
    let grasp = state.target.grasp_point();
    let targets = ik_joint_targets(
        config,
        grasp,
        state.target.spec.grasp_orientation_deg,
        &state.joint_angles,
    );
    let Some(targets) = targets else {
        return vec![3; config.n_links];
    };
    state
        .joint_angles
        .iter()
        .zip(&targets)
        .map(|(&cur, &tgt)| {
            let diff = tgt - cur;
            let mut best = 3;
            let mut best_err = f64::INFINITY;
            for idx in 0..7 {
                let delta = action_decode(idx, config.mpi).expect("index in range");
                let err = (diff - delta).abs();
                if err < best_err {
                    best_err = err;
                    best = idx;
                }
            }
            best
        })
        .collect()
}
