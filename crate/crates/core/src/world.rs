//! Procedural grid worlds, agent kinematics and the two perception channels:
//! ray-cast visibility and geodesic-attenuation binaural audio.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::planner;

/// Sentinel for cells the source cannot reach.
pub const UNREACHABLE: u32 = u32::MAX;

/// Number of audio bands.
pub const BANDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn offset(self, dr: i64, dc: i64) -> Option<(i64, i64)> {
        Some((self.row as i64 + dr, self.col as i64 + dc))
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

/// Compass heading. Angles grow clockwise: North = 0°, East = 90°.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn degrees(self) -> i32 {
        self.index() as i32 * 90
    }

    pub fn index(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i % 4]
    }

    /// Accepts any multiple of 90, negative included.
    pub fn from_degrees(deg: i32) -> Result<Heading> {
        if deg % 90 != 0 {
            return Err(LabError::NotRightAngle(deg));
        }
        Ok(Heading::from_index(deg.rem_euclid(360) as usize / 90))
    }

    pub fn right(self) -> Heading {
        Heading::from_index(self.index() + 1)
    }

    pub fn left(self) -> Heading {
        Heading::from_index(self.index() + 3)
    }

    /// Heading after turning clockwise by `deg` (a right-angle multiple).
    pub fn rotated(self, deg: i32) -> Heading {
        Heading::from_index((self.index() as i32 + deg.div_euclid(90)).rem_euclid(4) as usize)
    }

    /// Unit (drow, dcol) step along this heading.
    pub fn unit(self) -> (i64, i64) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    pub fn from_unit(dr: i64, dc: i64) -> Option<Heading> {
        match (dr, dc) {
            (-1, 0) => Some(Heading::North),
            (0, 1) => Some(Heading::East),
            (1, 0) => Some(Heading::South),
            (0, -1) => Some(Heading::West),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Cell,
    pub heading: Heading,
}

impl AgentPose {
    pub fn new(cell: Cell, heading: Heading) -> Self {
        AgentPose { cell, heading }
    }

    /// Maps an egocentric offset (negative row = ahead, positive col = right)
    /// to a world-frame offset.
    pub fn ego_to_world(&self, ego_dr: i64, ego_dc: i64) -> (i64, i64) {
        let (fr, fc) = self.heading.unit();
        let (rr, rc) = self.heading.right().unit();
        let ahead = -ego_dr;
        (ahead * fr + ego_dc * rr, ahead * fc + ego_dc * rc)
    }

    /// Inverse of [`AgentPose::ego_to_world`].
    pub fn world_to_ego(&self, dr: i64, dc: i64) -> (i64, i64) {
        let (fr, fc) = self.heading.unit();
        let (rr, rc) = self.heading.right().unit();
        let ahead = dr * fr + dc * fc;
        let right = dr * rr + dc * rc;
        (-ahead, right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LowLevelAction {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinauralAudio {
    pub left: [f64; BANDS],
    pub right: [f64; BANDS],
}

impl BinauralAudio {
    pub fn silence() -> Self {
        BinauralAudio {
            left: [0.0; BANDS],
            right: [0.0; BANDS],
        }
    }

    pub fn total(&self) -> f64 {
        self.left.iter().chain(self.right.iter()).sum()
    }

    /// Network-facing feature vector: raw channels, total energy and the
    /// normalized level difference.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(2 * BANDS + 2);
        f.extend_from_slice(&self.left);
        f.extend_from_slice(&self.right);
        let l: f64 = self.left.iter().sum();
        let r: f64 = self.right.iter().sum();
        let total = l + r;
        f.push(total);
        f.push(if total > 1e-9 { (l - r) / total } else { 0.0 });
        f
    }

    pub const FEATURES: usize = 2 * BANDS + 2;
}

/// Acoustic rendering constants plus the per-band gain profile that acts as
/// the sound's identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioParams {
    pub amplitude: f64,
    pub exponent: f64,
    pub gains: [f64; BANDS],
    pub noise_std: f64,
}

impl Default for AudioParams {
    fn default() -> Self {
        AudioParams {
            amplitude: 1.0,
            exponent: 1.0,
            gains: [1.0, 0.8, 0.6, 0.4],
            noise_std: 0.0,
        }
    }
}

/// Band-gain profiles heard during training.
pub const HEARD_GAINS: [[f64; BANDS]; 4] = [
    [1.0, 0.8, 0.6, 0.4],
    [0.4, 0.6, 0.8, 1.0],
    [0.9, 0.3, 0.9, 0.3],
    [0.7, 0.7, 0.7, 0.7],
];

/// Band-gain profiles held out for evaluation; disjoint from [`HEARD_GAINS`].
pub const UNHEARD_GAINS: [[f64; BANDS]; 3] = [[1.0, 0.5, 0.5, 1.0], [0.5, 1.0, 1.0, 0.5], [0.8, 0.4, 0.8, 0.8]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundSplit {
    Heard,
    Unheard,
}

impl SoundSplit {
    pub fn profiles(self) -> &'static [[f64; BANDS]] {
        match self {
            SoundSplit::Heard => &HEARD_GAINS,
            SoundSplit::Unheard => &UNHEARD_GAINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub height: usize,
    pub width: usize,
    pub cell_size: f64,
    /// Row-major, `true` = blocked.
    pub occupancy: Vec<bool>,
    pub source: Cell,
    pub geodesic_field: Vec<u32>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct WorldDoc {
    height: usize,
    width: usize,
    cell_size: f64,
    occupancy: String,
    source: [usize; 2],
    seed: u64,
}

impl GridWorld {
    pub fn from_occupancy(
        height: usize,
        width: usize,
        occupancy: Vec<bool>,
        source: Cell,
        seed: u64,
    ) -> Result<GridWorld> {
        if occupancy.len() != height * width {
            return Err(LabError::InvalidWorld(format!(
                "occupancy has {} cells, expected {}",
                occupancy.len(),
                height * width
            )));
        }
        if source.row >= height || source.col >= width || occupancy[source.row * width + source.col] {
            return Err(LabError::InvalidWorld(format!("source {source:?} is not a free cell")));
        }
        let mut w = GridWorld {
            height,
            width,
            cell_size: 0.5,
            occupancy,
            source,
            geodesic_field: Vec::new(),
            seed,
        };
        w.geodesic_field = bfs_field(&w, source);
        Ok(w)
    }

    /// Parses an ASCII layout: `#` blocked, `S` source, anything else free.
    pub fn from_ascii(rows: &[&str]) -> Result<GridWorld> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut occ = Vec::with_capacity(height * width);
        let mut source = None;
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(LabError::InvalidWorld("ragged ascii layout".into()));
            }
            for (c, ch) in line.chars().enumerate() {
                occ.push(ch == '#');
                if ch == 'S' {
                    source = Some(Cell::new(r, c));
                }
            }
        }
        let source = source.ok_or_else(|| LabError::InvalidWorld("no source marker".into()))?;
        GridWorld::from_occupancy(height, width, occ, source, 0)
    }

    #[inline]
    pub fn idx(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn in_bounds(&self, r: i64, c: i64) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width
    }

    pub fn cell_at(&self, r: i64, c: i64) -> Option<Cell> {
        self.in_bounds(r, c).then(|| Cell::new(r as usize, c as usize))
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.occupancy[self.idx(cell)]
    }

    /// Out-of-world coordinates count as blocked.
    pub fn blocked_at(&self, r: i64, c: i64) -> bool {
        match self.cell_at(r, c) {
            Some(cell) => self.is_blocked(cell),
            None => true,
        }
    }

    pub fn geodesic(&self, cell: Cell) -> u32 {
        self.geodesic_field[self.idx(cell)]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| Cell::new(r, c)))
            .filter(move |&c| !self.is_blocked(c))
    }

    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = (Heading, Cell)> + '_ {
        Heading::ALL.into_iter().filter_map(move |h| {
            let (dr, dc) = h.unit();
            self.cell_at(cell.row as i64 + dr, cell.col as i64 + dc).map(|n| (h, n))
        })
    }

    /// First step of the geodesic path from `cell` toward the source, in
    /// N, E, S, W preference order.
    pub fn geodesic_step(&self, cell: Cell) -> Option<Heading> {
        let d = self.geodesic(cell);
        if d == 0 || d == UNREACHABLE {
            return None;
        }
        self.neighbors(cell)
            .find(|&(_, n)| !self.is_blocked(n) && self.geodesic(n) == d - 1)
            .map(|(h, _)| h)
    }

    pub fn to_json(&self) -> String {
        let doc = WorldDoc {
            height: self.height,
            width: self.width,
            cell_size: self.cell_size,
            occupancy: self.occupancy.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            source: [self.source.row, self.source.col],
            seed: self.seed,
        };
        serde_json::to_string_pretty(&doc).expect("world document serializes")
    }

    pub fn from_json(text: &str) -> Result<GridWorld> {
        let doc: WorldDoc = serde_json::from_str(text)?;
        let mut occ = Vec::with_capacity(doc.occupancy.len());
        for ch in doc.occupancy.chars() {
            match ch {
                '0' => occ.push(false),
                '1' => occ.push(true),
                other => return Err(LabError::InvalidWorld(format!("bad occupancy character {other:?}"))),
            }
        }
        let mut w = GridWorld::from_occupancy(
            doc.height,
            doc.width,
            occ,
            Cell::new(doc.source[0], doc.source[1]),
            doc.seed,
        )?;
        w.cell_size = doc.cell_size;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GridWorld> {
        GridWorld::from_json(&fs::read_to_string(path)?)
    }

    /// Binary PGM (P5), blocked cells black, source mid-grey.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = Cell::new(r, c);
                out.push(if cell == self.source {
                    128
                } else if self.is_blocked(cell) {
                    0
                } else {
                    255
                });
            }
        }
        out
    }
}

/// Breadth-first geodesic distances from `from` over free cells.
pub fn bfs_field(world: &GridWorld, from: Cell) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; world.height * world.width];
    if world.is_blocked(from) {
        return dist;
    }
    let mut queue = VecDeque::new();
    dist[world.idx(from)] = 0;
    queue.push_back(from);
    while let Some(cell) = queue.pop_front() {
        let d = dist[world.idx(cell)];
        for (_, n) in world.neighbors(cell) {
            let ni = world.idx(n);
            if !world.occupancy[ni] && dist[ni] == UNREACHABLE {
                dist[ni] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Random wall segments at the requested density, then every stray free
/// component is joined to the source's component by carving.
pub fn generate_world(seed: u64, height: usize, width: usize, obstacle_density: f64) -> Result<GridWorld> {
    if height < 8 || width < 8 {
        return Err(LabError::InvalidWorld(format!(
            "world must be at least 8x8, got {height}x{width}"
        )));
    }
    if !(0.0..=0.4).contains(&obstacle_density) || obstacle_density.is_nan() {
        return Err(LabError::InvalidWorld(format!(
            "obstacle density {obstacle_density} outside [0, 0.4]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = height * width;
    let mut occ = vec![false; n];
    let target = (obstacle_density * n as f64).round() as usize;
    let mut blocked = 0;
    while blocked < target {
        let vertical = rng.gen_bool(0.5);
        let len = rng.gen_range(1..=4usize);
        let r0 = rng.gen_range(0..height);
        let c0 = rng.gen_range(0..width);
        for k in 0..len {
            let (r, c) = if vertical { (r0 + k, c0) } else { (r0, c0 + k) };
            if r >= height || c >= width || blocked >= target {
                break;
            }
            if !occ[r * width + c] {
                occ[r * width + c] = true;
                blocked += 1;
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !occ[i]).collect();
    if free.is_empty() {
        return Err(LabError::InvalidWorld("no free cells".into()));
    }
    let s = free[rng.gen_range(0..free.len())];
    let source = Cell::new(s / width, s % width);

    let budget = n / 4;
    let mut carves = 0;
    loop {
        let comp = component_of(&occ, height, width, source);
        let stray = (0..n).find(|&i| !occ[i] && !comp[i]);
        let Some(stray) = stray else { break };
        if carves >= budget {
            return Err(LabError::RepairBudget { budget });
        }
        carve_to_component(&mut occ, height, width, stray, &comp);
        carves += 1;
    }
    GridWorld::from_occupancy(height, width, occ, source, seed)
}

fn component_of(occ: &[bool], h: usize, w: usize, from: Cell) -> Vec<bool> {
    let mut seen = vec![false; h * w];
    let mut queue = VecDeque::from([from.row * w + from.col]);
    seen[from.row * w + from.col] = true;
    while let Some(i) = queue.pop_front() {
        let (r, c) = (i / w, i % w);
        for (dr, dc) in [(-1i64, 0i64), (0, 1), (1, 0), (0, -1)] {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                continue;
            }
            let ni = nr as usize * w + nc as usize;
            if !occ[ni] && !seen[ni] {
                seen[ni] = true;
                queue.push_back(ni);
            }
        }
    }
    seen
}

/// Unblocks the cells of a shortest obstacle-ignoring path from `start` to
/// the nearest cell of `comp`.
fn carve_to_component(occ: &mut [bool], h: usize, w: usize, start: usize, comp: &[bool]) {
    let mut parent = vec![usize::MAX; h * w];
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    let mut hit = None;
    while let Some(i) = queue.pop_front() {
        if comp[i] {
            hit = Some(i);
            break;
        }
        let (r, c) = (i / w, i % w);
        for (dr, dc) in [(-1i64, 0i64), (0, 1), (1, 0), (0, -1)] {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                continue;
            }
            let ni = nr as usize * w + nc as usize;
            if parent[ni] == usize::MAX {
                parent[ni] = i;
                queue.push_back(ni);
            }
        }
    }
    let mut i = hit.expect("source component is non-empty");
    while i != start {
        occ[i] = false;
        i = parent[i];
    }
}

/// One low-level action. Collisions are reported, never an error.
pub fn step(world: &GridWorld, pose: AgentPose, act: LowLevelAction) -> (AgentPose, bool) {
    match act {
        LowLevelAction::TurnLeft => (AgentPose::new(pose.cell, pose.heading.left()), false),
        LowLevelAction::TurnRight => (AgentPose::new(pose.cell, pose.heading.right()), false),
        LowLevelAction::Stop => (pose, false),
        LowLevelAction::Forward => {
            let (dr, dc) = pose.heading.unit();
            let (r, c) = (pose.cell.row as i64 + dr, pose.cell.col as i64 + dc);
            if world.blocked_at(r, c) {
                (pose, true)
            } else {
                (AgentPose::new(Cell::new(r as usize, c as usize), pose.heading), false)
            }
        }
    }
}

/// A cell reported by the visibility sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sighting {
    pub cell: Cell,
    pub occupied: bool,
}

/// Ray angles (radians, relative to heading, counter-clockwise positive)
/// spread over the field of view. Midpoint sampling keeps rays off exact
/// grid diagonals; an odd count keeps a central ray.
pub fn ray_offsets(fov_deg: f64, range_cells: usize) -> Vec<f64> {
    let n = 8 * range_cells.max(1) + 1;
    (0..n)
        .map(|i| (-fov_deg / 2.0 + fov_deg * (i as f64 + 0.5) / n as f64).to_radians())
        .collect()
}

/// World-frame (drow, dcol) direction of a ray at `offset` radians to the
/// left of `heading`.
pub fn ray_direction(heading: Heading, offset: f64) -> (f64, f64) {
    // Heading angle measured counter-clockwise from East in (x = col, y = -row).
    let base = match heading {
        Heading::East => 0.0,
        Heading::North => std::f64::consts::FRAC_PI_2,
        Heading::West => std::f64::consts::PI,
        Heading::South => -std::f64::consts::FRAC_PI_2,
    };
    let a = base + offset;
    let (dr, dc) = (-a.sin(), a.cos());
    // Snap round-off on axis-aligned rays.
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    (snap(dr), snap(dc))
}

/// Cells crossed by one ray (exact grid traversal), in order, with the
/// parametric distance at which the ray enters each cell.
fn traverse_ray(start: Cell, dir: (f64, f64), max_t: f64) -> Vec<(i64, i64)> {
    let (mut r, mut c) = (start.row as i64, start.col as i64);
    let (dr, dc) = dir;
    let step_r: i64 = if dr > 0.0 { 1 } else { -1 };
    let step_c: i64 = if dc > 0.0 { 1 } else { -1 };
    let delta_r = if dr != 0.0 { 1.0 / dr.abs() } else { f64::INFINITY };
    let delta_c = if dc != 0.0 { 1.0 / dc.abs() } else { f64::INFINITY };
    let mut next_r = if dr != 0.0 { 0.5 * delta_r } else { f64::INFINITY };
    let mut next_c = if dc != 0.0 { 0.5 * delta_c } else { f64::INFINITY };
    let mut cells = vec![(r, c)];
    loop {
        let t = next_r.min(next_c);
        if t > max_t {
            break;
        }
        if next_r < next_c {
            r += step_r;
            next_r += delta_r;
        } else {
            c += step_c;
            next_c += delta_c;
        }
        cells.push((r, c));
    }
    cells
}

/// Ray-cast field of view. The agent's own cell is always reported; a
/// blocked cell ends its ray and is reported occupied.
pub fn perceive_visibility(world: &GridWorld, pose: AgentPose, fov_deg: f64, range_cells: usize) -> BTreeSet<Sighting> {
    let mut seen = BTreeSet::new();
    for offset in ray_offsets(fov_deg, range_cells) {
        let dir = ray_direction(pose.heading, offset);
        for (r, c) in traverse_ray(pose.cell, dir, range_cells as f64) {
            let Some(cell) = world.cell_at(r, c) else { break };
            let occupied = world.is_blocked(cell);
            seen.insert(Sighting { cell, occupied });
            if occupied {
                break;
            }
        }
    }
    seen
}

/// Counter-clockwise bearing (degrees) from `heading` to `toward`.
pub fn bearing_ccw(heading: Heading, toward: Heading) -> i32 {
    (heading.degrees() - toward.degrees()).rem_euclid(360)
}

/// Binaural intensities from geodesic attenuation and level difference.
/// At the source the bearing is taken as 0; an unreachable source is silent.
pub fn render_audio<R: Rng + ?Sized>(
    world: &GridWorld,
    pose: AgentPose,
    params: &AudioParams,
    rng: &mut R,
) -> BinauralAudio {
    let d = world.geodesic(pose.cell);
    if d == UNREACHABLE {
        return BinauralAudio::silence();
    }
    let intensity = params.amplitude / (1.0 + d as f64).powf(params.exponent);
    let beta = world
        .geodesic_step(pose.cell)
        .map_or(0, |toward| bearing_ccw(pose.heading, toward));
    let s = (beta as f64).to_radians().sin();
    let s = if s.abs() < 1e-12 { 0.0 } else { s };
    let noise = (params.noise_std > 0.0).then(|| Normal::new(0.0, params.noise_std).expect("finite std"));
    let mut out = BinauralAudio::silence();
    for b in 0..BANDS {
        let base = params.gains[b] * intensity;
        let (mut l, mut r) = (base * (1.0 + s) / 2.0, base * (1.0 - s) / 2.0);
        if let Some(n) = &noise {
            l += n.sample(rng);
            r += n.sample(rng);
        }
        out.left[b] = l.max(0.0);
        out.right[b] = r.max(0.0);
    }
    out
}

/// A navigation episode: start pose, target and oracle path statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub world_id: usize,
    pub start: AgentPose,
    pub target: Cell,
    pub step_limit: usize,
    pub shortest_len: usize,
    pub shortest_actions: usize,
    pub gains: [f64; BANDS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBounds {
    pub min_len: usize,
    pub max_len: usize,
    pub step_limit: usize,
}

impl Default for EpisodeBounds {
    fn default() -> Self {
        EpisodeBounds {
            min_len: 4,
            max_len: 14,
            step_limit: 30,
        }
    }
}

/// Samples a start pose uniformly among free cells whose geodesic distance
/// lies within the bounds, and a gain profile from the split.
pub fn sample_episode<R: Rng + ?Sized>(
    world: &GridWorld,
    world_id: usize,
    bounds: &EpisodeBounds,
    split: SoundSplit,
    rng: &mut R,
) -> Result<Episode> {
    let candidates: Vec<Cell> = world
        .free_cells()
        .filter(|&c| {
            let d = world.geodesic(c);
            d != UNREACHABLE && (bounds.min_len..=bounds.max_len).contains(&(d as usize))
        })
        .collect();
    if candidates.is_empty() {
        return Err(LabError::EpisodeSampling(format!(
            "world {world_id} has no start within [{}, {}]",
            bounds.min_len, bounds.max_len
        )));
    }
    let cell = candidates[rng.gen_range(0..candidates.len())];
    let heading = Heading::from_index(rng.gen_range(0..4));
    let start = AgentPose::new(cell, heading);
    let (l, n_star) = planner::oracle_shortest(world, start, world.source)?;
    let profiles = split.profiles();
    let gains = profiles[rng.gen_range(0..profiles.len())];
    Ok(Episode {
        world_id,
        start,
        target: world.source,
        step_limit: bounds.step_limit,
        shortest_len: l,
        shortest_actions: n_star,
        gains,
    })
}
