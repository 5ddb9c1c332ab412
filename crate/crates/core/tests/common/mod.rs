#![allow(dead_code)]

use mtnav::env::{Action, AgentState, Heading, Pitch};
use mtnav::eval::{EpisodeTrace, Outcome, StepRecord};
use mtnav::nn::RngStream;

/// Synthetic trace with internally consistent outcome fields.
pub fn random_trace(rng: &mut RngStream, id: u64) -> EpisodeTrace {
    let start = AgentState::new(
        rng.below(9) as i32 + 1,
        rng.below(9) as i32 + 1,
        Heading::ALL[rng.below(4)],
        Pitch::Level,
    );
    let start_detected = rng.bernoulli(0.15);
    let len = rng.below(25);
    let mut pose = start;
    let mut steps = Vec::with_capacity(len);
    let mut path = 0.0;
    let mut success = false;
    let mut first = start_detected.then_some(0);
    for t in 0..len {
        let last = t + 1 == len;
        let action = if last && rng.bernoulli(0.5) {
            Action::Done
        } else {
            Action::ALL[rng.below(5)]
        };
        let mut collided = false;
        match action {
            Action::MoveAhead => {
                if rng.bernoulli(0.3) {
                    collided = true;
                } else {
                    let (dx, dy) = pose.heading.step();
                    pose.x += dx;
                    pose.y += dy;
                    path += 0.5;
                }
            }
            Action::RotateLeft => pose.heading = pose.heading.left(),
            Action::RotateRight => pose.heading = pose.heading.right(),
            Action::LookDown => pose.pitch = pose.pitch.lower().unwrap_or(pose.pitch),
            Action::LookUp => pose.pitch = pose.pitch.raise().unwrap_or(pose.pitch),
            Action::Done => success = rng.bernoulli(0.6),
        }
        let target_detected = rng.bernoulli(0.2);
        if first.is_none() && target_detected {
            first = Some(t + 1);
        }
        steps.push(StepRecord {
            pose,
            action,
            reward: [0.0; 7],
            total: 0.0,
            target_detected,
            collided,
            activation_means: [0.0; 5],
        });
    }
    let l_star = rng.below(14) as f64 * 0.5;
    EpisodeTrace {
        episode_id: id,
        plan_id: format!("syn{id}"),
        target: rng.below(6),
        start,
        start_detected,
        steps,
        outcome: Outcome {
            success,
            path_length: path,
            l_star: Some(l_star),
            first_visible_step: first,
            l_star_nav: first.map(|_| rng.below(10) as f64 * 0.5),
        },
    }
}

/// Plain re-derivation of the six metrics over a set of traces:
/// `[SR, SPL, SSR, NSNPL (NaN if no navigate phase), REP, CP]`.
pub fn brute_force_metrics(traces: &[&EpisodeTrace]) -> [f64; 6] {
    let f = traces.len() as f64;
    let mut sums = [0.0f64; 6];
    let mut f_nav = 0.0;
    for tr in traces {
        let suc = if tr.outcome.success { 1.0 } else { 0.0 };
        sums[0] += suc;
        let ls = tr.outcome.l_star.unwrap();
        let l = tr.outcome.path_length;
        let big = if l > ls { l } else { ls };
        sums[1] += if suc == 0.0 {
            0.0
        } else if big == 0.0 {
            1.0
        } else {
            ls / big
        };

        // boundary by linear scan
        let mut boundary = None;
        if tr.start_detected {
            boundary = Some(0);
        } else {
            for (t, s) in tr.steps.iter().enumerate() {
                if s.target_detected {
                    boundary = Some(t + 1);
                    break;
                }
            }
        }
        if let Some(k) = boundary {
            f_nav += 1.0;
            sums[2] += 1.0;
            let mut moves = 0;
            for t in k..tr.steps.len() {
                let prev = if t == 0 { tr.start } else { tr.steps[t - 1].pose };
                if tr.steps[t].action == Action::MoveAhead && tr.steps[t].pose != prev {
                    moves += 1;
                }
            }
            let lnav = moves as f64 * 0.5;
            let lsn = tr.outcome.l_star_nav.unwrap();
            let big = if lnav > lsn { lnav } else { lsn };
            sums[3] += if suc == 0.0 {
                0.0
            } else if big == 0.0 {
                1.0
            } else {
                lsn / big
            };
        }

        let mut poses: Vec<(i32, i32, i32, i32)> = Vec::new();
        let mut collisions = 0;
        for s in &tr.steps {
            if s.action == Action::Done {
                continue;
            }
            poses.push((s.pose.x, s.pose.y, s.pose.heading.quarter_turns(), s.pose.pitch.degrees()));
            if s.collided {
                collisions += 1;
            }
        }
        let li = poses.len() as f64;
        poses.sort();
        poses.dedup();
        if li > 0.0 {
            sums[4] += (li - poses.len() as f64) / li;
            sums[5] += collisions as f64 / li;
        }
    }
    [
        100.0 * sums[0] / f,
        100.0 * sums[1] / f,
        100.0 * sums[2] / f,
        if f_nav > 0.0 { 100.0 * sums[3] / f_nav } else { f64::NAN },
        100.0 * sums[4] / f,
        100.0 * sums[5] / f,
    ]
}
