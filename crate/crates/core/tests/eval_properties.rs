use std::sync::Arc;

use oran_lab::evalx::{
    ensemble_maps, metrics, run_eval, sample_episode_set, EpisodeResult, EvalSet, OracleAgent, PolicyAgent, RandomAgent,
};
use oran_lab::nnet::{ActionMap, NetConfig, NetKind, PolicyNet};
use oran_lab::oig::{aggregate, DirectionSet};
use oran_lab::rl::{EnvParams, NavEnv};
use oran_lab::world::{generate_world, AgentPose, EpisodeBounds, GridWorld, Heading, SoundSplit};
use rand::{Rng, SeedableRng};

mod common;
use common::replay;
use rand_chacha::ChaCha8Rng;

fn small_net(seed: u64) -> PolicyNet {
    let cfg = NetConfig {
        hidden: 16,
        map_hidden: 16,
        aux_hidden: 8,
        ..NetConfig::default()
    };
    PolicyNet::new(NetKind::Student, cfg, seed)
}

fn eval_set(n: usize, seed: u64) -> EvalSet {
    let worlds: Vec<Arc<GridWorld>> = (0..4)
        .map(|s| Arc::new(generate_world(900 + s, 12, 12, 0.15).unwrap()))
        .collect();
    let episodes = sample_episode_set(&worlds, n, &EpisodeBounds::default(), SoundSplit::Unheard, seed).unwrap();
    EvalSet {
        worlds,
        episodes,
        env: EnvParams::default(),
        seed,
    }
}

#[test]
fn metric_fixtures() {
    let r = |success, l, p, d_init, d_final, n, n_star| EpisodeResult {
        success,
        stopped: true,
        path_len: p,
        shortest_len: l,
        actions: n,
        shortest_actions: n_star,
        d_init,
        d_final,
        decisions: 3,
        collisions: 0,
    };
    let set = [
        r(true, 10, 12, 10.0, 0.0, 15, 12),
        r(false, 10, 10, 10.0, 5.0, 12, 12),
        r(true, 4, 4, 4.0, 1.0, 4, 6),
        r(false, 7, 20, 7.0, 9.0, 30, 9),
    ];
    let m = metrics(&set);
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    close(m.sr, 0.5);
    close(m.spl, (10.0 / 12.0 + 1.0) / 4.0);
    close(m.soft_spl, (10.0 / 12.0 + 0.5 + 0.75) / 4.0);
    close(m.sna, (12.0 / 15.0 + 1.0) / 4.0);
    close(m.ne, 15.0 / 4.0);
    close(m.na, 61.0 / 4.0);
}

fn fuzz_result(rng: &mut ChaCha8Rng) -> EpisodeResult {
    let l = rng.gen_range(0..20);
    let n_star = l + rng.gen_range(0..4);
    let success = rng.gen_bool(0.5);
    let d_init = l as f64;
    EpisodeResult {
        success,
        stopped: success || rng.gen_bool(0.3),
        path_len: l + rng.gen_range(0..30),
        shortest_len: l,
        actions: rng.gen_range(0..60),
        shortest_actions: n_star,
        d_init,
        d_final: if success {
            rng.gen_range(0..2) as f64
        } else {
            rng.gen_range(0..25) as f64
        },
        decisions: rng.gen_range(1..30),
        collisions: rng.gen_range(0..5),
    }
}

#[test]
fn spl_and_sna_never_exceed_sr_on_fuzzed_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..12);
        let set: Vec<EpisodeResult> = (0..n).map(|_| fuzz_result(&mut rng)).collect();
        let m = metrics(&set);
        assert!(m.spl <= m.sr + 1e-15);
        assert!(m.sna <= m.sr + 1e-15);
        assert!((0.0..=1.0).contains(&m.soft_spl));
        for r in &set {
            if !r.success {
                assert!(r.soft_spl() >= 0.0 && r.spl() == 0.0);
            } else if r.d_final == 0.0 {
                assert!((r.soft_spl() - r.spl()).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn metrics_match_column_by_column_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let set: Vec<EpisodeResult> = (0..25).map(|_| fuzz_result(&mut rng)).collect();
        // One column per quantity, then column means.
        let s: Vec<f64> = set.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect();
        let ratio: Vec<f64> = set
            .iter()
            .map(|r| match (r.shortest_len, r.path_len.max(r.shortest_len)) {
                (_, 0) => 1.0,
                (l, d) => l as f64 / d as f64,
            })
            .collect();
        let progress: Vec<f64> = set
            .iter()
            .map(|r| {
                if r.d_init > 0.0 {
                    (1.0 - r.d_final / r.d_init).max(0.0)
                } else {
                    1.0
                }
            })
            .collect();
        let act: Vec<f64> = set
            .iter()
            .map(|r| match (r.shortest_actions, r.actions.max(r.shortest_actions)) {
                (_, 0) => 1.0,
                (n, d) => n as f64 / d as f64,
            })
            .collect();
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let m = metrics(&set);
        assert!((m.sr - mean(s.clone())).abs() < 1e-12);
        assert!((m.spl - mean(s.iter().zip(&ratio).map(|(a, b)| a * b).collect())).abs() < 1e-12);
        assert!((m.soft_spl - mean(progress.iter().zip(&ratio).map(|(a, b)| a * b).collect())).abs() < 1e-12);
        assert!((m.sna - mean(s.iter().zip(&act).map(|(a, b)| a * b).collect())).abs() < 1e-12);
        assert!((m.ne - mean(set.iter().map(|r| r.d_final).collect())).abs() < 1e-12);
        assert!((m.na - mean(set.iter().map(|r| r.actions as f64).collect())).abs() < 1e-12);
    }
}

#[test]
fn logged_episodes_agree_with_replay() {
    let set = eval_set(100, 17);
    let mut agent = PolicyAgent::single(small_net(3), false);
    let run = run_eval(&mut agent, &set).unwrap();
    assert_eq!(run.trajectories.len(), 100);
    for log in &run.trajectories {
        let world = &set.worlds[log.world_id];
        let (success, moved, actions, d_final) = replay(world, log);
        assert_eq!(success, log.result.success, "episode {}", log.episode);
        assert_eq!(moved, log.result.path_len);
        assert_eq!(actions, log.result.actions);
        assert_eq!(d_final, log.result.d_final);
        assert!(log.result.path_len >= log.result.shortest_len || !log.result.success);
        assert_eq!(log.poses[0], set.episodes[log.episode].start);
    }
}

#[test]
fn same_seed_same_metrics() {
    let set = eval_set(30, 8);
    let a = run_eval(&mut PolicyAgent::single(small_net(1), false), &set).unwrap();
    let b = run_eval(&mut PolicyAgent::single(small_net(1), false), &set).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_is_perfect_and_random_is_poor() {
    let set = eval_set(100, 23);
    let oracle = run_eval(&mut OracleAgent, &set).unwrap().metrics();
    assert_eq!(oracle.sr, 1.0);
    assert_eq!(oracle.spl, 1.0);
    assert!(oracle.sna <= 1.0);
    let random = run_eval(&mut RandomAgent { m: 9 }, &set).unwrap().metrics();
    assert!(random.sr < 0.2, "random SR {}", random.sr);
    assert!(random.spl < 0.15, "random SPL {}", random.spl);
}

fn random_map(rng: &mut ChaCha8Rng, m: usize) -> ActionMap {
    let raw: Vec<f64> = (0..m * m).map(|_| rng.gen::<f64>().powi(3)).collect();
    let z: f64 = raw.iter().sum();
    ActionMap::new(m, raw.into_iter().map(|v| v / z).collect())
}

#[test]
fn aggregate_matches_pose_frame_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cell = oran_lab::world::Cell::new(10, 10);
    for trial in 0..50 {
        let m = [3, 5, 9][trial % 3];
        let dirs = DirectionSet::full();
        let maps: Vec<ActionMap> = (0..4).map(|_| random_map(&mut rng, m)).collect();
        let got = aggregate(&maps, &dirs).unwrap();
        for h in Heading::ALL {
            // Map i was produced facing h turned clockwise by ω_i. Send each
            // of its cells through the world frame back into the frame of h.
            let me = AgentPose::new(cell, h);
            let mut want = vec![0.0; m * m];
            for (map, &w) in maps.iter().zip(dirs.angles()) {
                let facing = AgentPose::new(cell, h.rotated(w));
                for (k, &p) in map.probs.iter().enumerate() {
                    let (r, c) = map.offset_of(k);
                    let (wr, wc) = facing.ego_to_world(r, c);
                    let idx = map.index_of(me.world_to_ego(wr, wc)).unwrap();
                    want[idx] += p / 4.0;
                }
            }
            for (a, b) in got.probs.iter().zip(&want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        assert!((got.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn aggregate_is_equivariant_under_relabelling() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let maps: Vec<ActionMap> = (0..4).map(|_| random_map(&mut rng, 5)).collect();
    let base = aggregate(&maps, &DirectionSet::full()).unwrap();
    let shifted = DirectionSet::new(&[90, 180, 270, 0]).unwrap();
    let turned: Vec<ActionMap> = maps.iter().map(|m| oran_lab::oig::rotate_map(m, 90).unwrap()).collect();
    let again = aggregate(&turned, &shifted).unwrap();
    for (a, b) in base.probs.iter().zip(&again.probs) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn forward_only_gathering_equals_plain_perception() {
    let mut set = eval_set(20, 31);
    set.env.noise_std = 0.0;
    let plain = run_eval(&mut PolicyAgent::single(small_net(5), false), &set).unwrap();
    let fwd = run_eval(
        &mut PolicyAgent::single(small_net(5), false).with_oig(DirectionSet::forward()),
        &set,
    )
    .unwrap();
    assert_eq!(plain.results, fwd.results);
}

#[test]
fn gathering_sees_a_superset_of_forward_perception() {
    let set = eval_set(10, 41);
    for ep in &set.episodes {
        let world = set.worlds[ep.world_id].clone();
        let fwd = NavEnv::new(world.clone(), ep.clone(), set.env.clone(), 1);
        let mut all = NavEnv::new(world, ep.clone(), set.env.clone(), 1);
        let _ = oran_lab::oig::gather_observations(&mut all, &DirectionSet::full());
        let (a, b) = (fwd.geometry.explored_cells(), all.geometry.explored_cells());
        assert!(a.is_subset(&b) && b.len() > a.len());
        // Looking around never moves the agent or counts as an action.
        assert_eq!(all.pose, ep.start);
        assert_eq!(all.actions, 0);
    }
}

#[test]
fn ensemble_mean_matches_recomputation() {
    let set = eval_set(3, 2);
    let ep = &set.episodes[0];
    let env = NavEnv::new(set.worlds[ep.world_id].clone(), ep.clone(), set.env.clone(), 0);
    let obs = env.observation().clone();
    let nets: Vec<PolicyNet> = (0..3).map(|s| small_net(40 + s)).collect();
    let hidden: Vec<Vec<f64>> = nets
        .iter()
        .enumerate()
        .map(|(i, n)| vec![0.1 * i as f64; n.config.hidden])
        .collect();
    let (mean, next) = ensemble_maps(&nets, &hidden, &obs);
    let mut want = vec![0.0; 81];
    for (net, h) in nets.iter().zip(&hidden) {
        let out = net.step(&net.input(&obs), h);
        // Softmax by hand from the raw logits.
        let mx = out.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = out.logits.iter().map(|l| (l - mx).exp()).sum();
        for (w, l) in want.iter_mut().zip(&out.logits) {
            *w += (l - mx).exp() / z / 3.0;
        }
    }
    for (a, b) in mean.probs.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((mean.sum() - 1.0).abs() < 1e-12);
    assert_eq!(next.len(), 3);
}

#[test]
fn duplicated_members_equal_a_single_model() {
    let set = eval_set(20, 5);
    let one = run_eval(&mut PolicyAgent::single(small_net(9), true), &set).unwrap();
    let two = run_eval(&mut PolicyAgent::new(vec![small_net(9), small_net(9)], true), &set).unwrap();
    assert_eq!(one.results, two.results);
}
