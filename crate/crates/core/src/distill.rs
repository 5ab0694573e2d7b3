//! Confidence-aware cross-task policy distillation: the student's action
//! maps are pulled toward the point-goal teacher's, only on the steps where
//! the teacher is most certain, weighted by that certainty.

use serde::{Deserialize, Serialize};

use crate::mapping::EgoCrop;
use crate::nnet::{ActionMap, PolicyNet};
use crate::world::{AgentPose, Cell};

/// Entropy floor: a deterministic teacher would otherwise get infinite
/// confidence.
pub const ENTROPY_FLOOR: f64 = 1e-3;

/// Floor on the second KL argument before the logarithm.
pub const KL_FLOOR: f64 = 1e-8;

/// Shannon entropy in nats, with 0·log 0 = 0.
pub fn shannon_entropy(map: &ActionMap) -> f64 {
    entropy_of(&map.probs)
}

pub fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Reciprocal entropy, clamped at 1 / [`ENTROPY_FLOOR`].
pub fn confidence(map: &ActionMap) -> f64 {
    confidence_from_entropy(shannon_entropy(map))
}

pub fn confidence_from_entropy(h: f64) -> f64 {
    1.0 / h.max(ENTROPY_FLOOR)
}

/// `Σ p log(p / max(q, 1e-8))`.
pub fn kl_divergence(p: &ActionMap, q: &ActionMap) -> f64 {
    kl_of(&p.probs, &q.probs)
}

pub fn kl_of(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(KL_FLOOR).ln()))
        .sum::<f64>()
        .max(0.0)
}

/// Which distribution sits first in the KL term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(student ‖ teacher), the form written in the objective.
    StudentFirst,
    /// KL(teacher ‖ student).
    TeacherFirst,
}

/// How distillation steps are chosen and weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    /// Top-k most confident steps, each weighted by its confidence.
    Confidence,
    /// Every step, unit weight (plain policy distillation).
    Plain,
}

/// One step of a student-forced trajectory with the teacher's view of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRecord {
    pub step: usize,
    pub student: ActionMap,
    pub teacher: ActionMap,
    pub entropy: f64,
    pub confidence: f64,
}

impl DistillRecord {
    pub fn new(step: usize, student: ActionMap, teacher: ActionMap) -> Self {
        let entropy = shannon_entropy(&teacher);
        DistillRecord {
            step,
            student,
            teacher,
            entropy,
            confidence: confidence_from_entropy(entropy),
        }
    }
}

/// Indices of the `k` largest confidences; ties go to the earlier step.
/// Returned in ascending index order.
pub fn select_topk(records: &[DistillRecord], k: usize) -> Vec<usize> {
    let keys: Vec<(f64, usize)> = records.iter().map(|r| (r.confidence, r.step)).collect();
    topk_by_confidence(&keys, k)
}

/// `keys[i] = (confidence, step index)`.
pub fn topk_by_confidence(keys: &[(f64, usize)], k: usize) -> Vec<usize> {
    assert!(k >= 1, "k must be positive");
    let mut order: Vec<usize> = (0..keys.len()).collect();
    if k < keys.len() {
        order.select_nth_unstable_by(k - 1, |&a, &b| {
            keys[b].0.total_cmp(&keys[a].0).then(keys[a].1.cmp(&keys[b].1))
        });
        order.truncate(k);
    }
    order.sort_unstable();
    order
}

/// Per-record loss weights: `c/|selected|` on the selected steps (or
/// `1/n` on every step for [`DistillMode::Plain`]), zero elsewhere.
pub fn distill_weights(keys: &[(f64, usize)], k: usize, mode: DistillMode) -> Vec<f64> {
    let mut w = vec![0.0; keys.len()];
    if keys.is_empty() {
        return w;
    }
    match mode {
        DistillMode::Plain => w.iter_mut().for_each(|x| *x = 1.0 / keys.len() as f64),
        DistillMode::Confidence => {
            let sel = topk_by_confidence(keys, k);
            let n = sel.len() as f64;
            for i in sel {
                w[i] = keys[i].0 / n;
            }
        }
    }
    w
}

fn kl_in(direction: KlDirection, student: &[f64], teacher: &[f64]) -> f64 {
    match direction {
        KlDirection::StudentFirst => kl_of(student, teacher),
        KlDirection::TeacherFirst => kl_of(teacher, student),
    }
}

/// Mean over the selected steps of `c · KL(student, teacher)`; zero for an
/// empty batch.
pub fn ccpd_loss(records: &[DistillRecord], k: usize, mode: DistillMode, direction: KlDirection) -> f64 {
    let keys: Vec<(f64, usize)> = records.iter().map(|r| (r.confidence, r.step)).collect();
    distill_weights(&keys, k, mode)
        .iter()
        .zip(records)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, r)| w * kl_in(direction, &r.student.probs, &r.teacher.probs))
        .sum()
}

/// KL value and its gradient with respect to the student's logits, where
/// `student = softmax(logits)` and the teacher is a constant.
pub fn kl_logit_grad(student: &[f64], teacher: &[f64], direction: KlDirection) -> (f64, Vec<f64>) {
    match direction {
        KlDirection::StudentFirst => {
            let kl = kl_of(student, teacher);
            let g = student
                .iter()
                .zip(teacher)
                .map(|(&p, &q)| {
                    if p > 0.0 {
                        p * (p.ln() - q.max(KL_FLOOR).ln() - kl)
                    } else {
                        0.0
                    }
                })
                .collect();
            (kl, g)
        }
        KlDirection::TeacherFirst => {
            let kl = kl_of(teacher, student);
            let mass: f64 = teacher.iter().sum();
            let g = student.iter().zip(teacher).map(|(&p, &q)| p * mass - q).collect();
            (kl, g)
        }
    }
}

/// Goal displacement `target − pose.cell` in the agent's egocentric frame.
pub fn goal_vector(pose: AgentPose, target: Cell) -> (f64, f64) {
    let dr = target.row as i64 - pose.cell.row as i64;
    let dc = target.col as i64 - pose.cell.col as i64;
    let (er, ec) = pose.world_to_ego(dr, dc);
    (er as f64, ec as f64)
}

/// The teacher's action map for the student's current situation, in the
/// same egocentric frame, and the teacher's next hidden state.
pub fn teacher_query(
    teacher: &PolicyNet,
    hidden: &[f64],
    target: Cell,
    pose: AgentPose,
    geometry: &EgoCrop,
) -> (ActionMap, Vec<f64>) {
    let (map, _, h) = teacher.forward_teacher(hidden, goal_vector(pose, target), geometry);
    (map, h)
}
