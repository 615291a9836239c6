mod common;

use std::time::Instant;

use common::{brute_force_lagrangian, infeasibility, profit, random_instance, SmallShape};
use dspopt::{
    dual_value, oracle, solve_dual, two_phase, Campaign, DualConfig, DualOracle, GeneratorConfig, ImpressionType,
    Instance, Landscape, LandscapeEntry,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_by_two(budgets: [f64; 2]) -> Instance {
    let types = vec![
        ImpressionType { id: "a".into(), supply: 4.0, landscape: 0 },
        ImpressionType { id: "b".into(), supply: 6.0, landscape: 1 },
    ];
    let campaigns = vec![
        Campaign { id: "x".into(), budget: budgets[0], cpc: 1.0, targets: vec![0, 1] },
        Campaign { id: "y".into(), budget: budgets[1], cpc: 1.5, targets: vec![0, 1] },
    ];
    let landscapes = vec![
        LandscapeEntry { id: "L0".into(), landscape: Landscape::binomial_max_uniform(3, 0.5).unwrap() },
        LandscapeEntry { id: "L1".into(), landscape: Landscape::binomial_max_uniform(5, 0.3).unwrap() },
    ];
    Instance::new(types, campaigns, [(0, 0, 0.8), (0, 1, 0.3), (1, 0, 0.5), (1, 1, 0.6)], landscapes)
}

fn box_point<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn hand_instance_matches_vertex_and_grid_search() {
    let inst = two_by_two([1.0, 2.5]);
    for lambda in [[0.0, 0.0], [0.3, 0.7], [0.9, 0.1], [1.0, 1.0], [0.5, 0.0]] {
        let exact = dual_value(&inst, &lambda).unwrap();
        let brute = brute_force_lagrangian(&inst, &lambda, 1000);
        assert!(exact >= brute - 1e-12, "{lambda:?}: {exact} < {brute}");
        assert!(exact - brute <= 1e-3, "{lambda:?}: {exact} vs {brute}");
    }
}

#[test]
fn random_three_edge_instances_match_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, SmallShape::new(3, 3, 3));
        let lambda = box_point(&mut rng, inst.n_campaigns());
        let exact = dual_value(&inst, &lambda).unwrap();
        let brute = brute_force_lagrangian(&inst, &lambda, 1000);
        assert!((exact - brute).abs() <= 1e-3, "{exact} vs {brute}");
        assert!(exact >= brute - 1e-12);
    }
}

#[test]
fn subgradient_inequality_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, SmallShape::new(6, 6, 20));
        let mut orc = DualOracle::new(&inst).unwrap();
        for _ in 0..50 {
            let a = box_point(&mut rng, inst.n_campaigns());
            let b = box_point(&mut rng, inst.n_campaigns());
            let out = orc.evaluate(&a).unwrap().clone();
            let lb = orc.evaluate(&b).unwrap().dual_value;
            let lin: f64 = out.subgradient.iter().zip(b.iter().zip(&a)).map(|(g, (y, x))| g * (y - x)).sum();
            assert!(lb >= out.dual_value + lin - 1e-9, "{lb} < {} + {lin}", out.dual_value);
        }
    }
}

#[test]
fn dual_is_convex_along_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, SmallShape::new(8, 8, 30));
        for _ in 0..30 {
            let a = box_point(&mut rng, inst.n_campaigns());
            let b = box_point(&mut rng, inst.n_campaigns());
            let t: f64 = rng.random();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = dual_value(&inst, &mid).unwrap();
            let rhs = t * dual_value(&inst, &a).unwrap() + (1.0 - t) * dual_value(&inst, &b).unwrap();
            assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }
    }
}

#[test]
fn recovered_plans_stay_below_every_dual_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, SmallShape::new(10, 10, 60));
        let (plan, _) = two_phase(&inst, &DualConfig { max_iters: 200, step_scale: None }).unwrap();
        assert!(infeasibility(&inst, &plan.x, &plan.bids) <= 1e-9);
        let pi = profit(&inst, &plan.x, &plan.bids);
        assert!((pi - plan.primal_value).abs() <= 1e-9 * pi.abs().max(1.0));
        for _ in 0..10 {
            let lambda = box_point(&mut rng, inst.n_campaigns());
            assert!(pi <= dual_value(&inst, &lambda).unwrap() + 1e-9);
        }
    }
}

#[test]
fn single_campaign_single_type_reaches_grid_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, SmallShape::new(1, 1, 1));
        let grid_min =
            (0..=1000).map(|j| dual_value(&inst, &[j as f64 / 1000.0]).unwrap()).fold(f64::INFINITY, f64::min);
        let state = solve_dual(&inst, &DualConfig::default()).unwrap();
        assert!(
            (state.best_value - grid_min).abs() <= 1e-3,
            "best {} vs grid {grid_min} (budget {})",
            state.best_value,
            inst.campaigns()[0].budget
        );
    }
}

#[test]
fn oracle_cost_is_linear_in_edges() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut points = Vec::new();
    for n_types in [20, 200, 2000] {
        let cfg = GeneratorConfig { n_types, ..GeneratorConfig::example_a(3) };
        let inst = dspopt::generate(&cfg).unwrap().instance;
        let lambda = vec![0.3; inst.n_campaigns()];
        let mut orc = DualOracle::new(&inst).unwrap();
        let reps = (2_000_000 / inst.edge_count()).max(3);
        let mut samples: Vec<f64> = (0..5)
            .map(|_| {
                pool.install(|| {
                    let start = Instant::now();
                    for _ in 0..reps {
                        std::hint::black_box(orc.evaluate(&lambda).unwrap().dual_value);
                    }
                    start.elapsed().as_secs_f64() / reps as f64
                })
            })
            .collect();
        samples.sort_by(f64::total_cmp);
        points.push(((inst.edge_count() as f64).ln(), samples[2].ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((0.8..=1.2).contains(&slope), "fitted exponent {slope}");
}

#[test]
fn oracle_matches_free_function() {
    let inst = two_by_two([0.5, 0.5]);
    let mut orc = DualOracle::new(&inst).unwrap();
    let a = orc.evaluate(&[0.2, 0.4]).unwrap().clone();
    assert_eq!(a, oracle(&inst, &[0.2, 0.4]).unwrap());
}
