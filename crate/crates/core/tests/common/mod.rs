#![allow(dead_code)]

use std::collections::VecDeque;

use oran_lab::evalx::TrajectoryLog;
use oran_lab::nnet::gradcheck::rel_error;
use oran_lab::nnet::{Grads, ParamSet};
use oran_lab::world::{AgentPose, Cell, GridWorld, Heading};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct GradCheck {
    /// Worst relative error over the checked (differentiable) coordinates.
    pub worst: f64,
    pub checked: usize,
    /// Coordinates sitting on a ReLU or clip kink within ε, where the
    /// analytic value matched one of the one-sided slopes instead.
    pub kinks: usize,
}

/// Central differences at `eps` over `indices`. A coordinate whose two
/// one-sided slopes disagree and whose analytic value matches one of them
/// is a kink (a valid subgradient) and is counted rather than scored.
pub fn gradcheck(
    params: &ParamSet,
    analytic: &Grads,
    eps: f64,
    indices: impl IntoIterator<Item = usize>,
    loss: impl Fn(&ParamSet) -> f64,
) -> GradCheck {
    let mut p = params.clone();
    let mut out = GradCheck {
        worst: 0.0,
        checked: 0,
        kinks: 0,
    };
    for i in indices {
        let orig = p.flat_get(i);
        let mid = loss(&p);
        p.flat_set(i, orig + eps);
        let up = loss(&p);
        p.flat_set(i, orig - eps);
        let down = loss(&p);
        p.flat_set(i, orig);
        let an = analytic.flat_get(i);
        let err = rel_error((up - down) / (2.0 * eps), an);
        let (right, left) = ((up - mid) / eps, (mid - down) / eps);
        let kink = rel_error(right, left) > 1e-3 && (rel_error(right, an) < 1e-3 || rel_error(left, an) < 1e-3);
        if err >= 1e-3 && kink {
            out.kinks += 1;
        } else {
            out.worst = out.worst.max(err);
            out.checked += 1;
        }
    }
    out
}

/// Recomputes an episode's outcome from its logged poses and decisions.
pub fn replay(world: &GridWorld, log: &TrajectoryLog) -> (bool, usize, usize, f64) {
    let mut moved = 0;
    for w in log.poses.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.cell != b.cell {
            let (dr, dc) = a.heading.unit();
            assert_eq!(a.heading, b.heading, "moves keep the heading");
            assert_eq!(
                (
                    b.cell.row as i64 - a.cell.row as i64,
                    b.cell.col as i64 - a.cell.col as i64
                ),
                (dr, dc)
            );
            assert!(!world.is_blocked(b.cell));
            moved += 1;
        } else if a.heading != b.heading {
            assert!(
                a.heading.left() == b.heading || a.heading.right() == b.heading,
                "one quarter turn per action"
            );
        }
    }
    let last = *log.poses.last().unwrap();
    let d = world.geodesic(last.cell) as f64;
    let stopped = log.decisions.last().is_some_and(|d| d.offset == (0, 0));
    (stopped && d <= 1.0, moved, log.poses.len() - 1, d)
}

pub fn bfs_from(h: usize, w: usize, blocked: &[bool], from: Cell) -> Vec<Option<usize>> {
    let mut dist = vec![None; h * w];
    dist[from.row * w + from.col] = Some(0);
    let mut q = VecDeque::from([from]);
    while let Some(c) = q.pop_front() {
        let d = dist[c.row * w + c.col].unwrap();
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (r, cc) = (c.row as i64 + dr, c.col as i64 + dc);
            if r < 0 || cc < 0 || r >= h as i64 || cc >= w as i64 {
                continue;
            }
            let i = r as usize * w + cc as usize;
            if !blocked[i] && dist[i].is_none() {
                dist[i] = Some(d + 1);
                q.push_back(Cell::new(r as usize, cc as usize));
            }
        }
    }
    dist
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, obstacles: usize) -> Vec<bool> {
    let mut blocked = vec![false; h * w];
    for _ in 0..obstacles {
        blocked[rng.gen_range(0..h * w)] = true;
    }
    blocked
}

fn turn_cost(from: Heading, to: Heading) -> usize {
    match (to.degrees() - from.degrees()).rem_euclid(360) {
        0 => 0,
        180 => 2,
        _ => 1,
    }
}

/// Enumerates every simple path from `start` to `goal` with at most `limit`
/// moves (Manhattan pruning only) and returns, for the fewest-move length,
/// the smallest number of actions (moves + turns).
pub fn exhaustive(
    h: usize,
    w: usize,
    blocked: &[bool],
    start: AgentPose,
    goal: Cell,
    limit: usize,
) -> Option<(usize, usize)> {
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        h: usize,
        w: usize,
        blocked: &[bool],
        goal: Cell,
        pose: AgentPose,
        moves: usize,
        turns: usize,
        limit: usize,
        visited: &mut Vec<bool>,
        best: &mut Option<(usize, usize)>,
    ) {
        if pose.cell == goal {
            let cand = (moves, moves + turns);
            if best.is_none_or(|b| cand < b) {
                *best = Some(cand);
            }
            return;
        }
        let bound = best.map_or(limit, |b| b.0);
        if moves + pose.cell.manhattan(goal) > bound {
            return;
        }
        for heading in Heading::ALL {
            let (dr, dc) = heading.unit();
            let (r, c) = (pose.cell.row as i64 + dr, pose.cell.col as i64 + dc);
            if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                continue;
            }
            let i = r as usize * w + c as usize;
            if blocked[i] || visited[i] {
                continue;
            }
            visited[i] = true;
            let next = AgentPose::new(Cell::new(r as usize, c as usize), heading);
            let t = turns + turn_cost(pose.heading, heading);
            dfs(h, w, blocked, goal, next, moves + 1, t, limit, visited, best);
            visited[i] = false;
        }
    }
    let mut visited = vec![false; h * w];
    visited[start.cell.row * w + start.cell.col] = true;
    let mut best = None;
    dfs(h, w, blocked, goal, start, 0, 0, limit, &mut visited, &mut best);
    best
}
