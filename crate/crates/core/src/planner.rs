//! Shortest-path planning on the known map, low-level execution of a
//! waypoint leg, and ground-truth path oracles.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{LabError, Result};
use crate::mapping::GeometryMap;
use crate::world::{self, AgentPose, Cell, GridWorld, Heading, LowLevelAction, UNREACHABLE};

/// Dijkstra output: distances (`f64::INFINITY` when unreachable) and, for
/// every reached non-source cell, the neighbour one step closer to a source.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub height: usize,
    pub width: usize,
    pub dist: Vec<f64>,
    pub parent: Vec<Option<usize>>,
}

impl DistanceField {
    pub fn at(&self, cell: Cell) -> f64 {
        self.dist[cell.row * self.width + cell.col]
    }

    /// Cells from `cell` back to its source, inclusive.
    pub fn path_to_source(&self, cell: Cell) -> Vec<Cell> {
        let mut out = vec![cell];
        let mut i = cell.row * self.width + cell.col;
        while let Some(p) = self.parent[i] {
            out.push(Cell::new(p / self.width, p % self.width));
            i = p;
        }
        out
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Multi-source Dijkstra over a 4-connected grid. `cost[i]` is the price of
/// entering cell `i`; infinite or NaN cost marks it blocked.
pub fn dijkstra_field(height: usize, width: usize, cost: &[f64], sources: &[Cell]) -> Result<DistanceField> {
    assert_eq!(cost.len(), height * width);
    let passable = |i: usize| cost[i].is_finite();
    let mut dist = vec![f64::INFINITY; height * width];
    let mut parent = vec![None; height * width];
    let mut heap = BinaryHeap::new();
    for s in sources {
        let i = s.row * width + s.col;
        if s.row < height && s.col < width && passable(i) {
            dist[i] = 0.0;
            heap.push(Reverse(Entry(0.0, i)));
        }
    }
    if heap.is_empty() {
        return Err(LabError::NoSource);
    }
    while let Some(Reverse(Entry(d, i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (r, c) = ((i / width) as i64, (i % width) as i64);
        for h in Heading::ALL {
            let (dr, dc) = h.unit();
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= height as i64 || nc >= width as i64 {
                continue;
            }
            let ni = nr as usize * width + nc as usize;
            if !passable(ni) {
                continue;
            }
            let nd = d + cost[ni];
            if nd < dist[ni] {
                dist[ni] = nd;
                parent[ni] = Some(i);
                heap.push(Reverse(Entry(nd, ni)));
            }
        }
    }
    Ok(DistanceField {
        height,
        width,
        dist,
        parent,
    })
}

/// Unit entry cost for cells not known to be occupied; unexplored space is
/// assumed traversable.
pub fn optimistic_costs(known: &GeometryMap) -> Vec<f64> {
    known
        .occupied
        .iter()
        .map(|&o| if o { f64::INFINITY } else { 1.0 })
        .collect()
}

/// Turns needed to go from `from` to `to`, as actions.
pub fn turns_between(from: Heading, to: Heading) -> &'static [LowLevelAction] {
    use LowLevelAction::*;
    match (to.index() + 4 - from.index()) % 4 {
        0 => &[],
        1 => &[TurnRight],
        2 => &[TurnRight, TurnRight],
        _ => &[TurnLeft],
    }
}

/// Lexicographically cheapest (forwards first, then turns) action sequence
/// from `start` to `goal` over cells where `blocked` is false.
fn lexicographic_plan(
    height: usize,
    width: usize,
    blocked: impl Fn(usize) -> bool,
    start: AgentPose,
    goal: Cell,
) -> Option<Vec<LowLevelAction>> {
    let n = height * width * 4;
    let state = |cell: usize, h: Heading| cell * 4 + h.index();
    let mut best = vec![(u32::MAX, u32::MAX); n];
    let mut prev: Vec<Option<(usize, LowLevelAction)>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    let s0 = state(start.cell.row * width + start.cell.col, start.heading);
    best[s0] = (0, 0);
    heap.push(Reverse(((0u32, 0u32), s0)));
    let goal_i = goal.row * width + goal.col;
    let mut reached = None;
    while let Some(Reverse((cost, s))) = heap.pop() {
        if cost > best[s] {
            continue;
        }
        let (cell, h) = (s / 4, Heading::from_index(s % 4));
        if cell == goal_i {
            reached = Some(s);
            break;
        }
        let (r, c) = ((cell / width) as i64, (cell % width) as i64);
        let mut moves: Vec<(usize, (u32, u32), LowLevelAction)> = vec![
            (state(cell, h.left()), (cost.0, cost.1 + 1), LowLevelAction::TurnLeft),
            (state(cell, h.right()), (cost.0, cost.1 + 1), LowLevelAction::TurnRight),
        ];
        let (dr, dc) = h.unit();
        let (nr, nc) = (r + dr, c + dc);
        if nr >= 0 && nc >= 0 && nr < height as i64 && nc < width as i64 {
            let ni = nr as usize * width + nc as usize;
            if !blocked(ni) {
                moves.push((state(ni, h), (cost.0 + 1, cost.1), LowLevelAction::Forward));
            }
        }
        for (ns, nc, act) in moves {
            if nc < best[ns] {
                best[ns] = nc;
                prev[ns] = Some((s, act));
                heap.push(Reverse((nc, ns)));
            }
        }
    }
    let mut s = reached?;
    let mut actions = Vec::new();
    while let Some((p, act)) = prev[s] {
        actions.push(act);
        s = p;
    }
    actions.reverse();
    Some(actions)
}

/// Resolves a requested world coordinate to the cell the planner will head
/// for: the coordinate itself when it is in bounds, not known-occupied and
/// reachable; otherwise the reachable known-free cell nearest to it
/// (Manhattan), ties by distance from the agent, then row-major order.
pub fn resolve_target(known: &GeometryMap, field: &DistanceField, target: (i64, i64)) -> Cell {
    let (tr, tc) = target;
    if tr >= 0 && tc >= 0 && (tr as usize) < known.height && (tc as usize) < known.width {
        let cell = Cell::new(tr as usize, tc as usize);
        if !known.is_occupied(cell) && field.at(cell).is_finite() {
            return cell;
        }
    }
    let mut best: Option<(u64, f64, usize)> = None;
    for i in 0..known.height * known.width {
        // The agent's own cell (distance 0) is free even before any look.
        let known_free = (known.explored[i] && !known.occupied[i]) || field.dist[i] == 0.0;
        if !known_free || !field.dist[i].is_finite() {
            continue;
        }
        let (r, c) = ((i / known.width) as i64, (i % known.width) as i64);
        let md = (r - tr).unsigned_abs() + (c - tc).unsigned_abs();
        let key = (md, field.dist[i], i);
        let better = match best {
            None => true,
            Some(b) => (key.0, key.1).partial_cmp(&(b.0, b.1)) == Some(Ordering::Less),
        };
        if better {
            best = Some(key);
        }
    }
    let (_, _, i) = best.expect("the agent's own cell is always a known-free candidate");
    Cell::new(i / known.width, i % known.width)
}

/// Optimistic shortest plan from `pose` to a world-frame target coordinate.
pub fn plan_to_cell(known: &GeometryMap, pose: AgentPose, target: (i64, i64)) -> Vec<LowLevelAction> {
    let costs = optimistic_costs(known);
    let field =
        dijkstra_field(known.height, known.width, &costs, &[pose.cell]).expect("agent cell is never known-occupied");
    let goal = resolve_target(known, &field, target);
    lexicographic_plan(known.height, known.width, |i| known.occupied[i], pose, goal)
        .expect("resolved target is reachable")
}

/// Plan to an egocentric waypoint offset (negative row = ahead). An empty
/// plan means "stay", i.e. stop.
pub fn plan_to_waypoint(known: &GeometryMap, pose: AgentPose, offset: (i64, i64)) -> Vec<LowLevelAction> {
    if offset == (0, 0) {
        return Vec::new();
    }
    let (dr, dc) = pose.ego_to_world(offset.0, offset.1);
    plan_to_cell(known, pose, (pose.cell.row as i64 + dr, pose.cell.col as i64 + dc))
}

/// Sensor settings used when a collision forces a fresh look.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensor {
    pub fov_deg: f64,
    pub range_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub pose: AgentPose,
    /// Low-level actions executed, collided forwards included.
    pub actions: usize,
    /// Cells moved.
    pub forwards: usize,
    pub collisions: usize,
    /// Every pose after each action.
    pub trace: Vec<AgentPose>,
}

/// Runs a plan toward the world-frame `target`. A collision triggers a
/// look, a map update and a replan, at most `replan_budget` times.
pub fn execute_transition(
    world: &GridWorld,
    known: &mut GeometryMap,
    pose: AgentPose,
    target: (i64, i64),
    replan_budget: usize,
    sensor: Sensor,
) -> Transition {
    let mut out = Transition {
        pose,
        actions: 0,
        forwards: 0,
        collisions: 0,
        trace: Vec::new(),
    };
    let mut plan = plan_to_cell(known, pose, target);
    let mut replans = 0;
    'legs: loop {
        for act in plan.iter().copied() {
            let (next, collided) = world::step(world, out.pose, act);
            out.actions += 1;
            out.trace.push(next);
            if collided {
                out.collisions += 1;
                let seen = world::perceive_visibility(world, out.pose, sensor.fov_deg, sensor.range_cells);
                known.update(&seen);
                if replans >= replan_budget {
                    break 'legs;
                }
                replans += 1;
                plan = plan_to_cell(known, out.pose, target);
                continue 'legs;
            }
            if act == LowLevelAction::Forward {
                out.forwards += 1;
            }
            out.pose = next;
        }
        break;
    }
    out
}

/// Ground-truth shortest path length `l` (cells) and minimal action count
/// `N*` over all shortest paths (forwards plus the fewest turns).
pub fn oracle_shortest(world: &GridWorld, start: AgentPose, target: Cell) -> Result<(usize, usize)> {
    let l = if target == world.source {
        world.geodesic(start.cell)
    } else {
        world::bfs_field(world, target)[world.idx(start.cell)]
    };
    if l == UNREACHABLE {
        return Err(LabError::Unreachable {
            start: (start.cell.row, start.cell.col),
            target: (target.row, target.col),
        });
    }
    let plan = oracle_plan(world, start, target)?;
    debug_assert_eq!(
        plan.iter().filter(|&&a| a == LowLevelAction::Forward).count(),
        l as usize
    );
    Ok((l as usize, plan.len()))
}

/// The action sequence realising [`oracle_shortest`].
pub fn oracle_plan(world: &GridWorld, start: AgentPose, target: Cell) -> Result<Vec<LowLevelAction>> {
    lexicographic_plan(world.height, world.width, |i| world.occupancy[i], start, target).ok_or(LabError::Unreachable {
        start: (start.cell.row, start.cell.col),
        target: (target.row, target.col),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::generate_world;
    use LowLevelAction::*;

    fn unit_costs(w: &GridWorld) -> Vec<f64> {
        w.occupancy
            .iter()
            .map(|&b| if b { f64::INFINITY } else { 1.0 })
            .collect()
    }

    fn fully_known(w: &GridWorld) -> GeometryMap {
        let mut g = GeometryMap::new(w.height, w.width);
        g.explored.iter_mut().for_each(|e| *e = true);
        g.occupied = w.occupancy.clone();
        g
    }

    #[test]
    fn empty_grid_is_manhattan() {
        let f = dijkstra_field(3, 3, &[1.0; 9], &[Cell::new(0, 0)]).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(f.at(Cell::new(r, c)), (r + c) as f64);
            }
        }
    }

    #[test]
    fn walled_cell_is_infinite() {
        let w = GridWorld::from_ascii(&["S.#.", "..#.", "##..", "#.#."]).unwrap();
        let f = dijkstra_field(4, 4, &unit_costs(&w), &[w.source]).unwrap();
        assert!(f.at(Cell::new(3, 1)).is_infinite());
        assert!(f.at(Cell::new(0, 3)).is_infinite());
    }

    #[test]
    fn blocked_sources_error() {
        let w = GridWorld::from_ascii(&["S#", ".."]).unwrap();
        assert!(matches!(
            dijkstra_field(2, 2, &unit_costs(&w), &[Cell::new(0, 1)]),
            Err(LabError::NoSource)
        ));
    }

    #[test]
    fn zero_offset_is_stop() {
        let g = GeometryMap::new(5, 5);
        assert!(plan_to_waypoint(&g, AgentPose::new(Cell::new(2, 2), Heading::East), (0, 0)).is_empty());
    }

    #[test]
    fn straight_corridor() {
        let g = GeometryMap::new(7, 7);
        let pose = AgentPose::new(Cell::new(5, 3), Heading::North);
        assert_eq!(plan_to_waypoint(&g, pose, (-3, 0)), vec![Forward; 3]);
        let pose = AgentPose::new(Cell::new(3, 1), Heading::East);
        assert_eq!(plan_to_waypoint(&g, pose, (-3, 0)), vec![Forward; 3]);
    }

    #[test]
    fn routes_around_known_wall() {
        // Known L-shaped wall; target behind it.
        let w = GridWorld::from_ascii(&["S......", ".......", ".####..", "....#..", "....#..", "......."]).unwrap();
        let g = fully_known(&w);
        let pose = AgentPose::new(Cell::new(4, 2), Heading::North);
        let plan = plan_to_waypoint(&g, pose, (-3, 0));
        let (l, n) = oracle_shortest(
            &GridWorld::from_occupancy(6, 7, w.occupancy.clone(), Cell::new(1, 2), 0).unwrap(),
            pose,
            Cell::new(1, 2),
        )
        .unwrap();
        assert_eq!(plan.iter().filter(|&&a| a == Forward).count(), l);
        assert_eq!(plan.len(), n);
    }

    #[test]
    fn fallback_when_target_occupied() {
        let w = GridWorld::from_ascii(&["S....", ".....", "..#..", ".....", "....."]).unwrap();
        let g = fully_known(&w);
        let pose = AgentPose::new(Cell::new(4, 2), Heading::North);
        let plan = plan_to_waypoint(&g, pose, (-2, 0));
        let mut p = pose;
        for a in plan {
            p = world::step(&w, p, a).0;
        }
        // Nearest free cells to (2,2) at Manhattan distance 1: (1,2),(2,1),(2,3),(3,2);
        // (3,2) is closest to the agent.
        assert_eq!(p.cell, Cell::new(3, 2));
    }

    #[test]
    fn free_plan_reaches_waypoint() {
        let w = generate_world(5, 12, 12, 0.0).unwrap();
        let mut g = GeometryMap::new(12, 12);
        let pose = AgentPose::new(Cell::new(6, 6), Heading::West);
        let sensor = Sensor {
            fov_deg: 90.0,
            range_cells: 4,
        };
        let (dr, dc) = pose.ego_to_world(-2, 3);
        let t = execute_transition(&w, &mut g, pose, (6 + dr, 6 + dc), 3, sensor);
        assert_eq!(t.pose.cell, Cell::new((6 + dr) as usize, (6 + dc) as usize));
        assert_eq!(t.collisions, 0);
        assert_eq!(t.forwards, 5);
    }

    #[test]
    fn hidden_wall_causes_collision() {
        let w = GridWorld::from_ascii(&["S......", ".......", "###.###", ".......", "......."]).unwrap();
        let mut g = GeometryMap::new(w.height, w.width);
        let pose = AgentPose::new(Cell::new(3, 1), Heading::North);
        let sensor = Sensor {
            fov_deg: 90.0,
            range_cells: 3,
        };
        let t = execute_transition(&w, &mut g, pose, (1, 1), 3, sensor);
        assert!(t.collisions >= 1);
        assert!(!w.is_blocked(t.pose.cell));
        // replanning through the gap reaches the target
        assert_eq!(t.pose.cell, Cell::new(1, 1));
        let mut g = GeometryMap::new(w.height, w.width);
        let t = execute_transition(&w, &mut g, pose, (1, 1), 0, sensor);
        assert_eq!(t.collisions, 1);
        assert_eq!(t.pose.cell, Cell::new(3, 1));
    }

    #[test]
    fn oracle_trivial_cases() {
        let w = GridWorld::from_ascii(&["#######", "S.....#", "#######"]).unwrap();
        assert_eq!(
            oracle_shortest(&w, AgentPose::new(w.source, Heading::North), w.source).unwrap(),
            (0, 0)
        );
        let start = AgentPose::new(Cell::new(1, 5), Heading::West);
        assert_eq!(oracle_shortest(&w, start, w.source).unwrap(), (5, 5));
        let start = AgentPose::new(Cell::new(1, 5), Heading::East);
        assert_eq!(oracle_shortest(&w, start, w.source).unwrap(), (5, 7));
    }

    #[test]
    fn oracle_unreachable_errors() {
        let w = GridWorld::from_ascii(&["S#.", "##.", "..."]).unwrap();
        assert!(oracle_shortest(&w, AgentPose::new(Cell::new(2, 2), Heading::North), w.source).is_err());
    }
}
