//! Global geometry/acoustic maps and the egocentric crops the policies see.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::world::{AgentPose, BinauralAudio, Cell, Sighting};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryMap {
    pub height: usize,
    pub width: usize,
    pub explored: Vec<bool>,
    pub occupied: Vec<bool>,
}

impl GeometryMap {
    pub fn new(height: usize, width: usize) -> Self {
        GeometryMap {
            height,
            width,
            explored: vec![false; height * width],
            occupied: vec![false; height * width],
        }
    }

    fn idx(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn is_explored(&self, cell: Cell) -> bool {
        self.explored[self.idx(cell)]
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[self.idx(cell)]
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|&&e| e).count()
    }

    pub fn explored_cells(&self) -> BTreeSet<Cell> {
        (0..self.height * self.width)
            .filter(|&i| self.explored[i])
            .map(|i| Cell::new(i / self.width, i % self.width))
            .collect()
    }

    /// Marks every sighting explored with its occupancy. Cells are never
    /// un-explored.
    pub fn update(&mut self, visibility: &BTreeSet<Sighting>) {
        for s in visibility {
            let i = self.idx(s.cell);
            self.explored[i] = true;
            self.occupied[i] = s.occupied;
        }
    }

    /// Two-channel (explored, occupied) egocentric crop.
    pub fn crop(&self, pose: AgentPose, size: usize) -> EgoCrop {
        let mut crop = EgoCrop::zeros(size, 2);
        let plane = size * size;
        for_each_ego_cell(pose, size, self.height, self.width, |k, cell| {
            let i = self.idx(cell);
            crop.data[k] = self.explored[i] as u8 as f64;
            crop.data[plane + k] = self.occupied[i] as u8 as f64;
        });
        crop
    }
}

pub fn update_geometry(g: &mut GeometryMap, visibility: &BTreeSet<Sighting>) {
    g.update(visibility);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl AcousticMap {
    pub fn new(height: usize, width: usize) -> Self {
        AcousticMap {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values[cell.row * self.width + cell.col]
    }

    /// Stores the total heard intensity at `cell`, overwriting older values.
    pub fn update(&mut self, cell: Cell, audio: &BinauralAudio) {
        self.values[cell.row * self.width + cell.col] = audio.total();
    }

    pub fn crop(&self, pose: AgentPose, size: usize) -> EgoCrop {
        let mut crop = EgoCrop::zeros(size, 1);
        for_each_ego_cell(pose, size, self.height, self.width, |k, cell| {
            crop.data[k] = self.get(cell);
        });
        crop
    }
}

pub fn update_acoustic(i: &mut AcousticMap, cell: Cell, b: &BinauralAudio) {
    i.update(cell, b);
}

/// Visits every in-world cell of a heading-up window centred on the agent,
/// passing the row-major window index.
fn for_each_ego_cell(pose: AgentPose, size: usize, height: usize, width: usize, mut f: impl FnMut(usize, Cell)) {
    assert!(size % 2 == 1, "crop size must be odd, got {size}");
    let half = (size / 2) as i64;
    for i in 0..size {
        for j in 0..size {
            let (dr, dc) = pose.ego_to_world(i as i64 - half, j as i64 - half);
            let (r, c) = (pose.cell.row as i64 + dr, pose.cell.col as i64 + dc);
            if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                f(i * size + j, Cell::new(r as usize, c as usize));
            }
        }
    }
}

/// `channels` stacked `size`×`size` planes, heading up, agent at the centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoCrop {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl EgoCrop {
    pub fn zeros(size: usize, channels: usize) -> Self {
        EgoCrop {
            size,
            channels,
            data: vec![0.0; size * size * channels],
        }
    }

    pub fn plane(&self, ch: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[ch * n..(ch + 1) * n]
    }

    /// Every plane rotated counter-clockwise by `quarter_turns` × 90°.
    pub fn rotated_ccw(&self, quarter_turns: i32) -> EgoCrop {
        let n = self.size * self.size;
        let mut data = Vec::with_capacity(self.data.len());
        for ch in 0..self.channels {
            data.extend(rotate_square_ccw(
                &self.data[ch * n..(ch + 1) * n],
                self.size,
                quarter_turns,
            ));
        }
        EgoCrop {
            size: self.size,
            channels: self.channels,
            data,
        }
    }
}

pub fn ego_crop_geometry(map: &GeometryMap, pose: AgentPose, c: usize) -> EgoCrop {
    map.crop(pose, c)
}

pub fn ego_crop_acoustic(map: &AcousticMap, pose: AgentPose, c: usize) -> EgoCrop {
    map.crop(pose, c)
}

/// Exact counter-clockwise rotation of a row-major `n`×`n` grid by
/// `quarter_turns` right angles (negative turns rotate clockwise).
pub fn rotate_square_ccw<T: Copy>(src: &[T], n: usize, quarter_turns: i32) -> Vec<T> {
    assert_eq!(src.len(), n * n);
    let turns = quarter_turns.rem_euclid(4);
    let mut out = src.to_vec();
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = match turns {
                0 => (r, c),
                1 => (c, n - 1 - r),
                2 => (n - 1 - r, n - 1 - c),
                _ => (n - 1 - c, r),
            };
            out[r * n + c] = src[sr * n + sc];
        }
    }
    out
}

/// What the agent knows at one decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub geometry: EgoCrop,
    pub acoustic: EgoCrop,
    pub audio: BinauralAudio,
    /// Straight-line goal displacement in the agent frame (rows ahead are
    /// negative). Only the PointGoal teacher consumes it.
    pub goal: (f64, f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, perceive_visibility, Heading};

    fn numbered_map(h: usize, w: usize) -> AcousticMap {
        let mut m = AcousticMap::new(h, w);
        for (i, v) in m.values.iter_mut().enumerate() {
            *v = i as f64 + 1.0;
        }
        m
    }

    #[test]
    fn single_report_marks_one_cell() {
        let mut g = GeometryMap::new(5, 5);
        let vis = BTreeSet::from([Sighting {
            cell: Cell::new(2, 3),
            occupied: false,
        }]);
        update_geometry(&mut g, &vis);
        assert_eq!(g.explored_count(), 1);
        assert!(g.is_explored(Cell::new(2, 3)) && !g.is_occupied(Cell::new(2, 3)));
        let before = g.clone();
        update_geometry(&mut g, &vis);
        assert_eq!(g, before);
    }

    #[test]
    fn explored_set_is_union_of_sightings() {
        let w = generate_world(11, 14, 14, 0.25).unwrap();
        let mut g = GeometryMap::new(w.height, w.width);
        let mut union = BTreeSet::new();
        let mut count = 0;
        for (k, cell) in w.free_cells().step_by(3).enumerate() {
            let pose = AgentPose::new(cell, Heading::from_index(k));
            let vis = perceive_visibility(&w, pose, 90.0, 4);
            union.extend(vis.iter().map(|s| s.cell));
            update_geometry(&mut g, &vis);
            assert!(g.explored_count() >= count);
            count = g.explored_count();
        }
        assert_eq!(g.explored_cells(), union);
        for c in union {
            assert_eq!(g.is_occupied(c), w.is_blocked(c));
        }
    }

    #[test]
    fn acoustic_overwrites() {
        let mut m = AcousticMap::new(4, 4);
        let cell = Cell::new(1, 1);
        update_acoustic(&mut m, cell, &BinauralAudio::silence());
        assert_eq!(m.get(cell), 0.0);
        let mut a = BinauralAudio::silence();
        a.left = [0.5, 0.4, 0.3, 0.2];
        a.right = a.left;
        update_acoustic(&mut m, cell, &a);
        assert!((m.get(cell) - 2.8).abs() < 1e-12);
        a.left[0] = 0.0;
        update_acoustic(&mut m, cell, &a);
        assert!((m.get(cell) - 2.3).abs() < 1e-12);
    }

    #[test]
    fn heading_north_is_plain_copy() {
        let m = numbered_map(9, 9);
        let crop = m.crop(AgentPose::new(Cell::new(4, 4), Heading::North), 5);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(crop.data[i * 5 + j], m.get(Cell::new(i + 2, j + 2)));
            }
        }
    }

    #[test]
    fn crops_rotate_with_heading() {
        let m = numbered_map(11, 9);
        let cell = Cell::new(3, 6);
        let base = m.crop(AgentPose::new(cell, Heading::North), 7);
        for h in Heading::ALL {
            let crop = m.crop(AgentPose::new(cell, h), 7);
            assert_eq!(crop, base.rotated_ccw(h.index() as i32));
        }
    }

    #[test]
    fn rotation_matches_hand_case() {
        let m = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i'];
        let r = rotate_square_ccw(&m, 3, 1);
        assert_eq!(r, ['c', 'f', 'i', 'b', 'e', 'h', 'a', 'd', 'g']);
        assert_eq!(rotate_square_ccw(&r, 3, -1), m);
        assert_eq!(rotate_square_ccw(&m, 3, 4), m);
    }

    #[test]
    fn corner_padding_count() {
        // Padded cells are exactly the window cells outside the world.
        let (h, w, size) = (10usize, 12usize, 9usize);
        let mut m = AcousticMap::new(h, w);
        m.values.iter_mut().for_each(|v| *v = 1.0);
        let half = size as i64 / 2;
        for (cell, heading) in [
            (Cell::new(0, 0), Heading::North),
            (Cell::new(0, 11), Heading::East),
            (Cell::new(9, 5), Heading::West),
            (Cell::new(2, 1), Heading::South),
        ] {
            let crop = m.crop(AgentPose::new(cell, heading), size);
            let padded = crop.data.iter().filter(|&&v| v == 0.0).count() as i64;
            let rows = (cell.row as i64 - half).max(0)..=(cell.row as i64 + half).min(h as i64 - 1);
            let cols = (cell.col as i64 - half).max(0)..=(cell.col as i64 + half).min(w as i64 - 1);
            let inside = (rows.end() - rows.start() + 1) * (cols.end() - cols.start() + 1);
            assert_eq!(padded, (size * size) as i64 - inside);
        }
    }
}
