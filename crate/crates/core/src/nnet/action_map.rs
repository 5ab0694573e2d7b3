use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mapping::rotate_square_ccw;

/// An m×m distribution over egocentric waypoint cells, heading up, with
/// the centre cell meaning "stop here".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMap {
    pub m: usize,
    pub probs: Vec<f64>,
}

impl ActionMap {
    pub fn new(m: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), m * m, "action map size");
        ActionMap { m, probs }
    }

    pub fn uniform(m: usize) -> Self {
        ActionMap::new(m, vec![1.0 / (m * m) as f64; m * m])
    }

    pub fn delta(m: usize, index: usize) -> Self {
        let mut probs = vec![0.0; m * m];
        probs[index] = 1.0;
        ActionMap::new(m, probs)
    }

    pub fn center(&self) -> usize {
        (self.m / 2) * self.m + self.m / 2
    }

    /// Egocentric (row, col) offset of a cell index; negative row is ahead.
    pub fn offset_of(&self, index: usize) -> (i64, i64) {
        let half = (self.m / 2) as i64;
        ((index / self.m) as i64 - half, (index % self.m) as i64 - half)
    }

    pub fn index_of(&self, offset: (i64, i64)) -> Option<usize> {
        let half = (self.m / 2) as i64;
        let (r, c) = (offset.0 + half, offset.1 + half);
        (r >= 0 && c >= 0 && r < self.m as i64 && c < self.m as i64).then(|| r as usize * self.m + c as usize)
    }

    /// First maximal cell in row-major order.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.probs.iter().all(|&p| p >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }

    /// Counter-clockwise rotation by `quarter_turns` right angles.
    pub fn rotated_ccw(&self, quarter_turns: i32) -> ActionMap {
        ActionMap::new(self.m, rotate_square_ccw(&self.probs, self.m, quarter_turns))
    }
}

/// A chosen waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub index: usize,
    pub offset: (i64, i64),
    pub log_prob: f64,
}

/// Draws from the categorical distribution, or takes the argmax when
/// `greedy` (ties to the smallest row-major index).
pub fn sample_waypoint<R: Rng + ?Sized>(map: &ActionMap, greedy: bool, rng: &mut R) -> Waypoint {
    let index = if greedy {
        map.argmax()
    } else {
        let u: f64 = rng.gen::<f64>() * map.sum();
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &p) in map.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = Some(i);
                break;
            }
        }
        // Round-off can leave u beyond the final partial sum.
        chosen.unwrap_or_else(|| map.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
    };
    Waypoint {
        index,
        offset: map.offset_of(index),
        log_prob: map.probs[index].ln(),
    }
}
