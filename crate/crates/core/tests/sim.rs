use std::collections::BTreeMap;

use entinav::agent::{neighbors, AgentKind, AgentState, CrowdState, MotionParams, WorldGeometry};
use entinav::geometry::{Rect, Vec2};
use entinav::scenarios::builtin;
use entinav::sim::{
    fit_agent_params, predict, rvo_step, simulate, CrowdModel, FitConfig, FitWindow, ParamTable, ReactionModel,
    Recording, Sample, Trajectory,
};
use entinav::Error;
use proptest::prelude::*;

fn open_world() -> WorldGeometry {
    WorldGeometry::open(Rect::new(Vec2::splat(-50.0), Vec2::splat(50.0)).unwrap())
}

fn ped(id: u32, p: (f64, f64), goal: (f64, f64), radius: f64) -> AgentState {
    AgentState::new(id, AgentKind::Pedestrian, Vec2::new(p.0, p.1), radius, Vec2::new(goal.0, goal.1)).unwrap()
}

fn params(pref_speed: f64, radius: f64) -> MotionParams {
    MotionParams {
        pref_speed,
        radius,
        ..MotionParams::default()
    }
}

fn table(crowd: &CrowdState, p: MotionParams) -> ParamTable {
    crowd.agents.iter().map(|a| (a.id, p)).collect()
}

fn run(model: &CrowdModel, crowd: CrowdState, steps: usize) -> Recording {
    simulate(model, crowd, steps, None, ReactionModel::default())
        .unwrap()
        .recording
}

/// Every pair at every frame, independent of `Recording`'s own helpers.
fn worst_overlap(rec: &Recording) -> f64 {
    let mut worst = f64::INFINITY;
    for ps in &rec.frames {
        for i in 0..ps.len() {
            for j in 0..ps.len() {
                if i != j {
                    let gap = (ps[i] - ps[j]).length() - rec.agents[i].2 - rec.agents[j].2;
                    worst = worst.min(gap);
                }
            }
        }
    }
    worst
}

#[test]
fn circle8_run_has_no_penetration() {
    let scenario = builtin::load(builtin::CIRCLE_8).unwrap();
    let (crowd, model) = scenario.build().unwrap();
    let rec = run(&model, crowd, scenario.steps());
    assert!(worst_overlap(&rec) >= -1e-6, "overlap {}", worst_overlap(&rec));
}

#[test]
fn small_bodies_cross_a_perturbed_circle() {
    let mut scenario = builtin::load(builtin::CIRCLE_8).unwrap();
    scenario.start_jitter = 0.05;
    for p in &mut scenario.pedestrians {
        p.params.radius = 0.3;
    }
    let (crowd, model) = scenario.build().unwrap();
    let rec = run(&model, crowd, scenario.steps());
    assert!(worst_overlap(&rec) >= -1e-6);
    let last = rec.frames.last().unwrap();
    for (i, p) in scenario.pedestrians.iter().enumerate() {
        assert!(last[i].distance(p.goal) < 0.05, "agent {i} at {:?}", last[i]);
    }
}

#[test]
fn lone_agent_prediction_is_constant_velocity() {
    let v = Vec2::new(1.2, -0.4);
    let a = ped(0, (1.0, 2.0), (0.0, 0.0), 0.3).with_velocity(v);
    let mut a = a;
    a.goal = a.position + v * 100.0;
    let crowd = CrowdState::new(vec![a], 0.0).unwrap();
    let speed = v.length();
    let pred = predict(&crowd, &table(&crowd, params(speed, 0.3)), &open_world(), 2.0, 0.1).unwrap();
    let end = *pred.positions[&0].last().unwrap();
    let expected = Vec2::new(1.0, 2.0) + v * 2.0;
    assert!(end.distance(expected) < 1e-9, "{end:?} vs {expected:?}");
}

#[test]
fn prediction_reproduces_simulation() {
    let crowd = CrowdState::new(
        vec![
            ped(0, (-4.0, 0.1), (4.0, 0.0), 0.3),
            ped(1, (4.0, -0.1), (-4.0, 0.0), 0.3),
            ped(2, (0.0, -4.0), (0.0, 4.0), 0.4),
            ped(3, (-3.0, -3.0), (3.0, 3.0), 0.3),
        ],
        0.0,
    )
    .unwrap();
    let p = table(&crowd, MotionParams::default());
    let world = open_world();
    let model = CrowdModel::new(p.clone(), world.clone(), 0.1);
    let rec = run(&model, crowd.clone(), 50);
    let pred = predict(&crowd, &p, &world, 5.0, 0.1).unwrap();
    assert_eq!(pred.steps(), 50);
    for (idx, (id, _, _)) in rec.agents.iter().enumerate() {
        for k in 0..50 {
            let d = pred.at(*id, k).unwrap().distance(rec.frames[k + 1][idx]);
            assert!(d <= 1e-12, "agent {id} step {k}: {d}");
        }
    }
}

#[test]
fn head_on_prediction_keeps_bodies_apart() {
    let crowd = CrowdState::new(
        vec![
            ped(0, (-5.0, 0.0), (5.0, 0.0), 0.4),
            ped(1, (5.0, 0.0), (-5.0, 0.0), 0.3),
        ],
        0.0,
    )
    .unwrap();
    let pred = predict(&crowd, &table(&crowd, MotionParams::default()), &open_world(), 10.0, 0.1).unwrap();
    let min = (0..pred.steps())
        .map(|k| pred.at(0, k).unwrap().distance(pred.at(1, k).unwrap()))
        .fold(f64::INFINITY, f64::min);
    assert!(min >= 0.7, "closest approach {min}");
}

fn straight_track(id: u32, speed: f64, n: usize) -> Trajectory {
    let samples = (0..n)
        .map(|k| Sample {
            frame: k as u32,
            position: Vec2::new(speed * 0.1 * k as f64, 0.0),
        })
        .collect();
    Trajectory::new(id, AgentKind::Pedestrian, samples).unwrap()
}

#[test]
fn straight_walk_fits_speed_and_keeps_prior_elsewhere() {
    let t = straight_track(0, 1.8, 20);
    // Finite-difference speed of the track itself.
    let fd = t.samples[1].position.distance(t.samples[0].position) / 0.1;
    let world = open_world();
    let window = FitWindow {
        observed: &t,
        previous: Some(Vec2::new(-0.18, 0.0)),
        context: &[],
        goal: None,
        world: &world,
        dt: 0.1,
    };
    let prior = MotionParams::default();
    let fit = fit_agent_params(&window, &prior, &FitConfig::default()).unwrap();
    assert!((fit.pref_speed - fd).abs() <= 0.05 * fd, "pref_speed {}", fit.pref_speed);
    assert!((fit.neighbor_dist - prior.neighbor_dist).abs() < 1e-6);
    assert!((fit.radius - prior.radius).abs() < 1e-6);
    assert!((fit.group_cohesion - prior.group_cohesion).abs() < 1e-6);
}

#[test]
fn three_samples_are_insufficient() {
    let t = straight_track(0, 1.0, 3);
    let world = open_world();
    let window = FitWindow {
        observed: &t,
        previous: None,
        context: &[],
        goal: None,
        world: &world,
        dt: 0.1,
    };
    let err = fit_agent_params(&window, &MotionParams::default(), &FitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InsufficientData { got: 3, .. }), "{err:?}");
}

/// Crossing encounter simulated at `truth`; returns the observed track of
/// agent 0, the context and agent 0's pre-window position.
fn synthetic_encounter(truth: MotionParams) -> (Trajectory, Vec<Trajectory>, Vec2, Vec2) {
    let crowd = CrowdState::new(
        vec![
            ped(0, (-4.0, 0.0), (6.0, 0.0), truth.radius),
            ped(1, (0.0, -3.5), (0.0, 6.0), truth.radius),
            ped(2, (3.5, 0.6), (-6.0, 0.6), truth.radius),
        ],
        0.0,
    )
    .unwrap();
    let model = CrowdModel::new(table(&crowd, truth), open_world(), 0.1);
    let rec = run(&model, crowd, 45);
    let trajs = rec.trajectories();
    let start = 5;
    let observed = trajs[0].window(start, 40);
    let context: Vec<Trajectory> = trajs[1..].iter().map(|t| t.window(start - 1, 42)).collect();
    let previous = trajs[0].samples[start - 1].position;
    (observed, context, previous, Vec2::new(6.0, 0.0))
}

#[test]
fn fit_recovers_generating_speed_and_radius() {
    let truth = params(1.8, 0.5);
    let (observed, context, previous, goal) = synthetic_encounter(truth);
    let world = open_world();
    let window = FitWindow {
        observed: &observed,
        previous: Some(previous),
        context: &context,
        goal: Some(goal),
        world: &world,
        dt: 0.1,
    };
    let fit = fit_agent_params(&window, &MotionParams::default(), &FitConfig::default()).unwrap();
    assert!((fit.pref_speed - 1.8).abs() <= 0.18, "pref_speed {}", fit.pref_speed);
    assert!((fit.radius - 0.5).abs() <= 0.05, "radius {}", fit.radius);
}

#[test]
fn refitting_at_fitted_params_is_stable() {
    let truth = params(1.8, 0.5);
    let (observed, context, previous, goal) = synthetic_encounter(truth);
    let world = open_world();
    let fit_window = |obs: &Trajectory, ctx: &[Trajectory], prev: Vec2| {
        let window = FitWindow {
            observed: obs,
            previous: Some(prev),
            context: ctx,
            goal: Some(goal),
            world: &world,
            dt: 0.1,
        };
        fit_agent_params(&window, &MotionParams::default(), &FitConfig::default()).unwrap()
    };
    let first = fit_window(&observed, &context, previous);
    let (observed2, context2, previous2, _) = synthetic_encounter(first);
    let second = fit_window(&observed2, &context2, previous2);
    assert!((first.pref_speed - second.pref_speed).abs() <= 0.05 * first.pref_speed);
    assert!((first.radius - second.radius).abs() <= 0.05 * first.radius);
}

fn group_spread(cohesion: f64, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let agents: Vec<AgentState> = (0..6)
        .map(|i| {
            let p = (rng.random_range(-0.2..0.2), -3.0 + 1.2 * i as f64 + rng.random_range(-0.2..0.2));
            ped(i, p, (40.0, p.1), 0.3)
        })
        .collect();
    let crowd = CrowdState::new(agents, 0.0).unwrap();
    let p = MotionParams {
        group_cohesion: cohesion,
        ..MotionParams::default()
    };
    let mut model = CrowdModel::new(table(&crowd, p), open_world(), 0.1);
    model.groups = vec![(0..6).collect()];
    let rec = run(&model, crowd, 150);
    let tail = &rec.frames[100..];
    let total: f64 = tail
        .iter()
        .map(|ps| {
            let c = ps.iter().copied().sum::<Vec2>() / ps.len() as f64;
            ps.iter().map(|p| p.distance(c)).sum::<f64>() / ps.len() as f64
        })
        .sum();
    total / tail.len() as f64
}

/// Seed-averaged spread. Between cohesion 0.2 and 0.4 the normalized blend
/// leaves longitudinal gaps open, so levels are compared outside that band.
#[test]
fn cohesion_tightens_groups_on_average() {
    let means: Vec<f64> = [0.0, 0.1, 0.5, 1.0]
        .iter()
        .map(|c| (0..16).map(|seed| group_spread(*c, seed)).sum::<f64>() / 16.0)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}

fn crowd_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    prop::collection::vec((-6.0..6.0f64, -6.0..6.0f64, -8.0..8.0f64, -8.0..8.0f64), 2..10)
}

/// Agents on a 1.5 m lattice plus jitter, so starts never overlap.
fn lattice_crowd(raw: &[(f64, f64, f64, f64)]) -> CrowdState {
    let agents = raw
        .iter()
        .enumerate()
        .map(|(i, (jx, jy, gx, gy))| {
            let p = (1.5 * (i % 4) as f64 + jx * 0.05, 1.5 * (i / 4) as f64 + jy * 0.05);
            ped(i as u32 * 3 + 1, p, (*gx, *gy), 0.3)
        })
        .collect();
    CrowdState::new(agents, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evaluation_order_does_not_matter(raw in crowd_strategy(), rot in 0usize..10) {
        let crowd = lattice_crowd(&raw);
        let p = table(&crowd, MotionParams::default());
        let world = open_world();
        let a = rvo_step(&crowd, &p, &world, 0.1).unwrap();
        let mut shuffled = crowd.clone();
        let k = rot % shuffled.agents.len();
        shuffled.agents.rotate_left(k);
        shuffled.agents.reverse();
        let b = rvo_step(&shuffled, &p, &world, 0.1).unwrap();
        prop_assert_eq!(a.velocities, b.velocities);
    }

    #[test]
    fn per_step_displacement_respects_speed_cap(raw in crowd_strategy(), speed in 1.2..2.2f64) {
        let crowd = lattice_crowd(&raw);
        let p = params(speed, 0.3);
        let model = CrowdModel::new(table(&crowd, p), open_world(), 0.1);
        let rec = run(&model, crowd, 30);
        for w in rec.frames.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                prop_assert!(a.distance(*b) <= p.speed_cap() * 0.1 + 1e-12);
            }
        }
    }

    #[test]
    fn neighbors_match_brute_force(
        pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 12),
        dist in 0.5..8.0f64,
        max in 1usize..11,
        who in 0usize..12,
    ) {
        let agents: Vec<AgentState> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| ped(100 - i as u32, *p, *p, 0.1))
            .collect();
        let crowd = CrowdState::new(agents.clone(), 0.0).unwrap();
        let me = &agents[who];
        let mut expected: Vec<(f64, u32)> = agents
            .iter()
            .filter(|a| a.id != me.id)
            .map(|a| (a.position.distance(me.position), a.id))
            .filter(|(d, _)| *d <= dist)
            .collect();
        expected.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let expected: Vec<u32> = expected.into_iter().take(max).map(|(_, id)| id).collect();
        prop_assert_eq!(neighbors(&crowd, me.id, dist, max).unwrap(), expected);
    }

    #[test]
    fn neighborhood_is_symmetric_without_truncation(
        pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 12),
        dist in 0.5..8.0f64,
    ) {
        let agents: Vec<AgentState> = pts.iter().enumerate().map(|(i, p)| ped(i as u32, *p, *p, 0.1)).collect();
        let crowd = CrowdState::new(agents, 0.0).unwrap();
        let sets: BTreeMap<u32, Vec<u32>> = (0..12).map(|i| (i, neighbors(&crowd, i, dist, 12).unwrap())).collect();
        for (i, ns) in &sets {
            for j in ns {
                prop_assert!(sets[j].contains(i));
            }
        }
    }
}
