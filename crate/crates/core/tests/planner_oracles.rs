use oran_lab::mapping::GeometryMap;
use oran_lab::planner::{dijkstra_field, execute_transition, oracle_shortest, plan_to_waypoint, Sensor};
use oran_lab::world::{step, AgentPose, Cell, GridWorld, Heading, LowLevelAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{bfs_from, exhaustive, random_grid};

#[test]
fn unit_cost_dijkstra_equals_bfs_on_100_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for g in 0..100 {
        let blocked = random_grid(&mut rng, 20, 20, 100);
        let free: Vec<usize> = (0..400).filter(|&i| !blocked[i]).collect();
        let s = free[rng.gen_range(0..free.len())];
        let src = Cell::new(s / 20, s % 20);
        let cost: Vec<f64> = blocked.iter().map(|&b| if b { f64::INFINITY } else { 1.0 }).collect();
        let field = dijkstra_field(20, 20, &cost, &[src]).unwrap();
        let want = bfs_from(20, 20, &blocked, src);
        for (i, want) in want.iter().enumerate() {
            match *want {
                Some(d) => assert_eq!(field.dist[i], d as f64, "grid {g} cell {i}"),
                None => assert!(field.dist[i].is_infinite(), "grid {g} cell {i}"),
            }
        }
    }
}

fn world_with_source(h: usize, w: usize, blocked: &[bool], source: Cell) -> GridWorld {
    GridWorld::from_occupancy(h, w, blocked.to_vec(), source, 0).unwrap()
}

#[test]
fn oracle_counts_match_exhaustive_search_on_small_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut compared = 0;
    while compared < 150 {
        let (h, w) = (rng.gen_range(3..=8), rng.gen_range(3..=8));
        let n_obstacles = rng.gen_range(0..=10);
        let blocked = random_grid(&mut rng, h, w, n_obstacles);
        let free: Vec<usize> = (0..h * w).filter(|&i| !blocked[i]).collect();
        if free.len() < 2 {
            continue;
        }
        let s = free[rng.gen_range(0..free.len())];
        let g = free[rng.gen_range(0..free.len())];
        let (start_cell, goal) = (Cell::new(s / w, s % w), Cell::new(g / w, g % w));
        let start = AgentPose::new(start_cell, Heading::from_index(rng.gen_range(0..4)));
        let world = world_with_source(h, w, &blocked, goal);
        let want = exhaustive(h, w, &blocked, start, goal, h * w);
        match (oracle_shortest(&world, start, goal), want) {
            (Ok((l, n)), Some((wl, wn))) => {
                assert_eq!((l, n), (wl, wn), "{h}x{w} {start:?} -> {goal:?}");
                compared += 1;
            }
            (Err(_), None) => {}
            (got, want) => panic!("reachability disagrees: {got:?} vs {want:?}"),
        }
    }
}

fn known_from_ascii(rows: &[&str]) -> (GeometryMap, Vec<bool>) {
    let (h, w) = (rows.len(), rows[0].len());
    let mut known = GeometryMap::new(h, w);
    let mut blocked = vec![false; h * w];
    for (r, line) in rows.iter().enumerate() {
        for (c, ch) in line.chars().enumerate() {
            known.explored[r * w + c] = true;
            known.occupied[r * w + c] = ch == '#';
            blocked[r * w + c] = ch == '#';
        }
    }
    (known, blocked)
}

#[test]
fn l_shaped_wall_costs_shortest_length_plus_turns() {
    let rows = [
        ".......", //
        ".......", "..####.", ".....#.", ".....#.", ".......", ".......",
    ];
    let (known, blocked) = known_from_ascii(&rows);
    let pose = AgentPose::new(Cell::new(4, 3), Heading::North);
    // Waypoints all around the wall, in the agent frame (heading north).
    for offset in [(-3, 0), (-3, 3), (-4, 1), (0, 3), (2, 3), (-1, 3)] {
        let plan = plan_to_waypoint(&known, pose, offset);
        let goal = Cell::new((4 + offset.0) as usize, (3 + offset.1) as usize);
        let (l, n) = exhaustive(7, 7, &blocked, pose, goal, 49).unwrap();
        let forwards = plan.iter().filter(|&&a| a == LowLevelAction::Forward).count();
        assert_eq!(forwards, l, "offset {offset:?}");
        assert_eq!(plan.len(), n, "offset {offset:?}");
        let mut p = pose;
        for &a in &plan {
            let (next, collided) = step(&world_with_source(7, 7, &blocked, goal), p, a);
            assert!(!collided);
            p = next;
        }
        assert_eq!(p.cell, goal);
    }
}

#[test]
fn transitions_always_end_on_free_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sensor = Sensor {
        fov_deg: 90.0,
        range_cells: 4,
    };
    for seed in 0..30 {
        let world = oran_lab::world::generate_world(seed, 12, 12, 0.25).unwrap();
        let free: Vec<Cell> = world.free_cells().collect();
        let mut known = GeometryMap::new(12, 12);
        let mut pose = AgentPose::new(
            free[rng.gen_range(0..free.len())],
            Heading::from_index(rng.gen_range(0..4)),
        );
        for _ in 0..20 {
            let (dr, dc) = pose.ego_to_world(rng.gen_range(-4..=4), rng.gen_range(-4..=4));
            let target = (pose.cell.row as i64 + dr, pose.cell.col as i64 + dc);
            let budget = 3;
            let tr = execute_transition(&world, &mut known, pose, target, budget, sensor);
            assert!(!world.is_blocked(tr.pose.cell));
            assert!(tr.trace.iter().all(|p| !world.is_blocked(p.cell)));
            assert!(tr.collisions <= budget + 1);
            // Each leg is an optimistic shortest plan inside a 12×12 grid.
            assert!(tr.actions <= (budget + 1) * (12 * 12 * 2));
            assert_eq!(tr.trace.last().map_or(pose, |p| *p), tr.pose);
            pose = tr.pose;
        }
    }
}
