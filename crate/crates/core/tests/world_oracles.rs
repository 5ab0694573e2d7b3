use std::collections::{BTreeSet, VecDeque};

use oran_lab::world::{
    generate_world, perceive_visibility, render_audio, step, AgentPose, AudioParams, Cell, GridWorld, Heading,
    LowLevelAction, Sighting, BANDS, UNREACHABLE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain 4-connected BFS from the source over the occupancy grid.
fn bfs(world: &GridWorld) -> Vec<u32> {
    let (h, w) = (world.height as i64, world.width as i64);
    let mut dist = vec![UNREACHABLE; world.occupancy.len()];
    let s = world.source.row * world.width + world.source.col;
    dist[s] = 0;
    let mut q = VecDeque::from([(world.source.row as i64, world.source.col as i64)]);
    while let Some((r, c)) = q.pop_front() {
        let d = dist[(r * w + c) as usize];
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= h || nc >= w {
                continue;
            }
            let i = (nr * w + nc) as usize;
            if !world.occupancy[i] && dist[i] == UNREACHABLE {
                dist[i] = d + 1;
                q.push_back((nr, nc));
            }
        }
    }
    dist
}

#[test]
fn geodesic_field_matches_independent_bfs() {
    let w = generate_world(7, 20, 20, 0.25).unwrap();
    assert_eq!(w.geodesic_field, bfs(&w));
    for seed in 0..20 {
        let w = generate_world(seed, 12, 15, 0.2).unwrap();
        assert_eq!(w.geodesic_field, bfs(&w), "seed {seed}");
    }
}

/// Walks each ray in small increments and records every cell entered, in
/// order. Rays use the same angular spread, measured counter-clockwise
/// from the heading, so the two walks must agree cell for cell.
fn ray_march(world: &GridWorld, pose: AgentPose, fov: f64, range: usize) -> BTreeSet<Sighting> {
    let n = 8 * range + 1;
    let facing = match pose.heading {
        Heading::East => 0.0f64,
        Heading::North => 90.0,
        Heading::West => 180.0,
        Heading::South => 270.0,
    };
    let mut seen = BTreeSet::new();
    let (r0, c0) = (pose.cell.row as f64 + 0.5, pose.cell.col as f64 + 0.5);
    for i in 0..n {
        let a = (facing - fov / 2.0 + fov * (i as f64 + 0.5) / n as f64).to_radians();
        let (dr, dc) = (-a.sin(), a.cos());
        let mut last = (pose.cell.row as i64, pose.cell.col as i64);
        seen.insert(Sighting {
            cell: pose.cell,
            occupied: world.is_blocked(pose.cell),
        });
        let steps = 4000 * range;
        for s in 1..=steps {
            let t = range as f64 * s as f64 / steps as f64;
            let cell = ((r0 + t * dr).floor() as i64, (c0 + t * dc).floor() as i64);
            if cell == last {
                continue;
            }
            last = cell;
            let Some(c) = world.cell_at(cell.0, cell.1) else { break };
            let occupied = world.is_blocked(c);
            seen.insert(Sighting { cell: c, occupied });
            if occupied {
                break;
            }
        }
    }
    seen
}

#[test]
fn visibility_matches_ray_march() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for seed in 0..4 {
        let w = generate_world(100 + seed, 15, 15, 0.25).unwrap();
        let free: Vec<Cell> = w.free_cells().collect();
        for _ in 0..10 {
            let pose = AgentPose::new(
                free[rng.gen_range(0..free.len())],
                Heading::from_index(rng.gen_range(0..4)),
            );
            for range in [2, 4] {
                let got = perceive_visibility(&w, pose, 90.0, range);
                let want = ray_march(&w, pose, 90.0, range);
                // Midpoint ray angles never pass exactly through a lattice
                // corner, so a fine march sees the same cells.
                assert_eq!(got, want, "pose {pose:?} range {range}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 80);
}

#[test]
fn visibility_never_reports_behind_a_wall() {
    let w = generate_world(5, 15, 15, 0.3).unwrap();
    for cell in w.free_cells() {
        let pose = AgentPose::new(cell, Heading::North);
        for s in perceive_visibility(&w, pose, 90.0, 4) {
            // Every reported cell lies within the forward quarter-plane cone.
            let ahead = cell.row as i64 - s.cell.row as i64;
            let side = (s.cell.col as i64 - cell.col as i64).abs();
            assert!(ahead >= 0 && side <= ahead + 1, "{s:?} from {cell:?}");
        }
    }
}

/// Hand evaluation of the closed form with the BFS distance and the
/// first geodesic step chosen independently.
fn closed_form(world: &GridWorld, dist: &[u32], pose: AgentPose, gains: [f64; BANDS]) -> ([f64; BANDS], [f64; BANDS]) {
    let d = dist[world.idx(pose.cell)];
    if d == UNREACHABLE {
        return ([0.0; BANDS], [0.0; BANDS]);
    }
    let intensity = 1.0 / (1.0 + d as f64);
    let beta_deg = if d == 0 {
        0.0
    } else {
        // First step: N, E, S, W preference among neighbours one closer.
        let (r, c) = (pose.cell.row as i64, pose.cell.col as i64);
        let dir = [(-1i64, 0i64, 0), (0, 1, 90), (1, 0, 180), (0, -1, 270)]
            .into_iter()
            .find(|&(dr, dc, _)| {
                world
                    .cell_at(r + dr, c + dc)
                    .is_some_and(|n| dist[world.idx(n)].checked_add(1) == Some(d))
            })
            .map(|t| t.2)
            .unwrap();
        let heading = pose.heading.degrees();
        // Counter-clockwise angle from heading to that direction.
        ((heading - dir).rem_euclid(360)) as f64
    };
    let s = beta_deg.to_radians().sin();
    let mut l = [0.0; BANDS];
    let mut rr = [0.0; BANDS];
    for b in 0..BANDS {
        l[b] = gains[b] * intensity * (1.0 + s) / 2.0;
        rr[b] = gains[b] * intensity * (1.0 - s) / 2.0;
    }
    (l, rr)
}

#[test]
fn noiseless_audio_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = AudioParams::default();
    for seed in 0..5 {
        let w = generate_world(seed, 14, 14, 0.2).unwrap();
        let dist = bfs(&w);
        for cell in w.free_cells() {
            let pose = AgentPose::new(cell, Heading::from_index(rng.gen_range(0..4)));
            let audio = render_audio(&w, pose, &params, &mut rng);
            let (l, r) = closed_form(&w, &dist, pose, params.gains);
            for b in 0..BANDS {
                assert!((audio.left[b] - l[b]).abs() < 1e-12, "{pose:?}");
                assert!((audio.right[b] - r[b]).abs() < 1e-12, "{pose:?}");
            }
        }
    }
}

#[test]
fn noiseless_audio_in_a_serpentine_corridor() {
    // Every cell has exactly one step toward the source; all headings.
    let w = GridWorld::from_ascii(&["S....", "####.", ".....", ".####", "....."]).unwrap();
    let dist = bfs(&w);
    let params = AudioParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for cell in w.free_cells() {
        for h in 0..4 {
            let pose = AgentPose::new(cell, Heading::from_index(h));
            let audio = render_audio(&w, pose, &params, &mut rng);
            let (l, r) = closed_form(&w, &dist, pose, params.gains);
            for b in 0..BANDS {
                assert!((audio.left[b] - l[b]).abs() < 1e-12, "{pose:?}");
                assert!((audio.right[b] - r[b]).abs() < 1e-12, "{pose:?}");
            }
        }
    }
}

#[test]
fn left_right_swap_at_opposite_headings() {
    let params = AudioParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..5 {
        let w = generate_world(seed, 12, 12, 0.2).unwrap();
        for cell in w
            .free_cells()
            .filter(|&c| w.geodesic(c) > 0 && w.geodesic(c) != UNREACHABLE)
        {
            for h in 0..4 {
                let a = render_audio(&w, AgentPose::new(cell, Heading::from_index(h)), &params, &mut rng);
                let b = render_audio(
                    &w,
                    AgentPose::new(cell, Heading::from_index((h + 2) % 4)),
                    &params,
                    &mut rng,
                );
                for band in 0..BANDS {
                    assert!((a.left[band] - b.right[band]).abs() < 1e-12);
                    assert!((a.right[band] - b.left[band]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn intensity_strictly_decreases_with_distance() {
    let w = generate_world(9, 16, 16, 0.15).unwrap();
    let params = AudioParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut by_d: Vec<(u32, f64)> = w
        .free_cells()
        .filter(|&c| w.geodesic(c) != UNREACHABLE)
        .map(|c| {
            (
                w.geodesic(c),
                render_audio(&w, AgentPose::new(c, Heading::North), &params, &mut rng).total(),
            )
        })
        .collect();
    by_d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for pair in by_d.windows(2) {
        if pair[0].0 < pair[1].0 {
            assert!(pair[0].1 > pair[1].1);
        } else {
            assert!((pair[0].1 - pair[1].1).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_along_geodesic_descends_by_one() {
    let w = generate_world(21, 14, 14, 0.2).unwrap();
    for start in w.free_cells().filter(|&c| w.geodesic(c) != UNREACHABLE) {
        let mut cell = start;
        while let Some(h) = w.geodesic_step(cell) {
            let d = w.geodesic(cell);
            let (next, collided) = step(&w, AgentPose::new(cell, h), LowLevelAction::Forward);
            assert!(!collided);
            assert_eq!(w.geodesic(next.cell) + 1, d);
            cell = next.cell;
        }
        assert_eq!(cell, w.source);
    }
}
