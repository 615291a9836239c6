//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use dspopt::{BidLandscape, Campaign, ImpressionType, Instance, Landscape, LandscapeEntry, StructuredLp};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct SmallShape {
    pub max_types: usize,
    pub max_campaigns: usize,
    pub max_edges: usize,
    pub max_supply: f64,
    pub max_budget: f64,
}

impl SmallShape {
    pub const fn new(max_types: usize, max_campaigns: usize, max_edges: usize) -> Self {
        Self { max_types, max_campaigns, max_edges, max_supply: 10.0, max_budget: 10.0 }
    }
}

/// Random valid instance with binomial-max-uniform landscapes and at least
/// one edge.
pub fn random_instance<R: Rng>(rng: &mut R, shape: SmallShape) -> Instance {
    let n_types = rng.random_range(1..=shape.max_types);
    let n_campaigns = rng.random_range(1..=shape.max_campaigns);
    let mut pairs: Vec<(usize, usize)> =
        (0..n_types).flat_map(|i| (0..n_campaigns).map(move |k| (i, k))).filter(|_| rng.random_bool(0.6)).collect();
    if pairs.is_empty() {
        pairs.push((rng.random_range(0..n_types), rng.random_range(0..n_campaigns)));
    }
    pairs.shuffle(rng);
    pairs.truncate(shape.max_edges);

    let landscapes = (0..n_types)
        .map(|i| LandscapeEntry {
            id: format!("L{i}"),
            landscape: Landscape::binomial_max_uniform(rng.random_range(1..=10), rng.random_range(0.05..0.95)).unwrap(),
        })
        .collect();
    let types = (0..n_types)
        .map(|i| ImpressionType { id: format!("i{i}"), supply: rng.random_range(1.0..shape.max_supply), landscape: i })
        .collect();
    let campaigns = (0..n_campaigns)
        .map(|k| {
            let mut targets: Vec<usize> = pairs.iter().filter(|p| p.1 == k).map(|p| p.0).collect();
            targets.sort_unstable();
            Campaign {
                id: format!("k{k}"),
                budget: rng.random_range(0.1..shape.max_budget),
                cpc: rng.random_range(0.5..2.0),
                targets,
            }
        })
        .collect();
    let edges: Vec<(usize, usize, f64)> = pairs.iter().map(|&(i, k)| (i, k, rng.random_range(0.05..1.0))).collect();
    let inst = Instance::new(types, campaigns, edges, landscapes);
    assert!(inst.is_valid(), "{}", inst.validate());
    inst
}

/// Same market with every budget replaced.
pub fn with_budgets(inst: &Instance, budgets: &[f64]) -> Instance {
    let campaigns = inst.campaigns().iter().zip(budgets).map(|(c, &m)| Campaign { budget: m, ..c.clone() }).collect();
    Instance::from_parts(inst.impression_types().to_vec(), campaigns, inst.edges().to_vec(), inst.landscapes().to_vec())
}

/// `sum s x (r rho(b) - E[B 1(B <= b)])` computed edge by edge.
pub fn profit(inst: &Instance, x: &[f64], b: &[f64]) -> f64 {
    inst.edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let l = inst.landscape_of(edge.impression);
            let s = inst.impression_types()[edge.impression].supply;
            s * x[e] * (edge.ecpi * l.cdf(b[e]) - l.partial_expectation(b[e]))
        })
        .sum()
}

/// Largest row overshoot of `x` against supply and budget rows.
pub fn infeasibility(inst: &Instance, x: &[f64], b: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for &v in x {
        worst = worst.max(-v).max(v - 1.0);
    }
    for i in 0..inst.n_types() {
        let mass: f64 = inst.edges().iter().enumerate().filter(|(_, e)| e.impression == i).map(|(j, _)| x[j]).sum();
        worst = worst.max(mass - 1.0);
    }
    for (k, c) in inst.campaigns().iter().enumerate() {
        let spend: f64 = inst
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.campaign == k)
            .map(|(j, e)| {
                let s = inst.impression_types()[e.impression].supply;
                e.ecpi * s * x[j] * inst.landscape_of(e.impression).cdf(b[j])
            })
            .sum();
        worst = worst.max(spend - c.budget);
    }
    worst
}

/// `max_{x, b} L(x, b, lambda)` by enumerating allocation vertices (at most
/// one edge per type, or none) and a uniform grid of `grid + 1` bids on
/// `[0, 1]`. Bids above 1 win surely and cost the same as bid 1.
pub fn brute_force_lagrangian(inst: &Instance, lambda: &[f64], grid: usize) -> f64 {
    let bids: Vec<f64> = (0..=grid).map(|j| j as f64 / grid as f64).collect();
    let best_edge_value: Vec<f64> = inst
        .edges()
        .iter()
        .map(|e| {
            let l = inst.landscape_of(e.impression);
            let s = inst.impression_types()[e.impression].supply;
            let lam = lambda[e.campaign];
            bids.iter()
                .map(|&b| s * ((1.0 - lam) * e.ecpi * l.cdf(b) - l.partial_expectation(b)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let options: Vec<Vec<Option<usize>>> = (0..inst.n_types())
        .map(|i| {
            let mut o = vec![None];
            o.extend(inst.edges().iter().enumerate().filter(|(_, e)| e.impression == i).map(|(j, _)| Some(j)));
            o
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut choice = vec![0usize; options.len()];
    loop {
        let v: f64 = choice.iter().zip(&options).filter_map(|(&c, o)| o[c]).map(|e| best_edge_value[e]).sum();
        best = best.max(v);
        let mut t = 0;
        while t < choice.len() {
            choice[t] += 1;
            if choice[t] < options[t].len() {
                break;
            }
            choice[t] = 0;
            t += 1;
        }
        if t == choice.len() {
            break;
        }
    }
    best + inst.campaigns().iter().zip(lambda).map(|(c, l)| l * c.budget).sum::<f64>()
}

/// Dense `A x <= rhs` form of the phase-two LP including the box.
pub fn dense_constraints(lp: &StructuredLp) -> Vec<(Vec<f64>, f64)> {
    let n = lp.edge_type.len();
    let mut rows = Vec::new();
    for k in 0..lp.n_campaigns {
        let a: Vec<f64> = (0..n).map(|j| if lp.edge_campaign[j] == k { lp.budget_coeffs[j] } else { 0.0 }).collect();
        rows.push((a, lp.budgets[k]));
    }
    for i in 0..lp.n_types {
        let a: Vec<f64> = (0..n).map(|j| if lp.edge_type[j] == i { 1.0 } else { 0.0 }).collect();
        rows.push((a, 1.0));
    }
    for j in 0..n {
        let mut up = vec![0.0; n];
        up[j] = 1.0;
        rows.push((up, 1.0));
        let mut lo = vec![0.0; n];
        lo[j] = -1.0;
        rows.push((lo, 0.0));
    }
    rows
}

fn solve_square(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        rhs.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for t in c..n {
                        a[r][t] -= f * a[c][t];
                    }
                    rhs[r] -= f * rhs[c];
                }
            }
        }
    }
    Some((0..n).map(|r| rhs[r] / a[r][r]).collect())
}

/// Optimum of `max c x` over the phase-two polytope by enumerating every
/// basic solution.
pub fn lp_vertex_optimum(lp: &StructuredLp) -> f64 {
    let n = lp.edge_type.len();
    let rows: Vec<_> = dense_constraints(lp).into_iter().filter(|(a, _)| a.iter().any(|&v| v != 0.0)).collect();
    let mut best = f64::NEG_INFINITY;
    let mut pick: Vec<usize> = (0..n).collect();
    let m = rows.len();
    loop {
        let a: Vec<Vec<f64>> = pick.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = pick.iter().map(|&r| rows[r].1).collect();
        if let Some(x) = solve_square(a, b) {
            let feasible = rows.iter().all(|(a, rhs)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= rhs + 1e-9);
            if feasible {
                best = best.max(lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum());
            }
        }
        // next combination
        let mut t = n;
        loop {
            if t == 0 {
                return best;
            }
            t -= 1;
            if pick[t] < m - n + t {
                break;
            }
        }
        pick[t] += 1;
        for u in t + 1..n {
            pick[u] = pick[u - 1] + 1;
        }
    }
}

/// Worst complementary-slackness violation of `(x, y)` for the bounded LP,
/// with the bound multipliers taken as the positive and negative parts of
/// the reduced costs. Negative row duals count as violations.
pub fn complementary_slackness(lp: &StructuredLp, x: &[f64], y: &[f64]) -> f64 {
    let rows = dense_constraints(lp);
    let n = x.len();
    let n_rows = lp.n_campaigns + lp.n_types;
    let mut worst = 0.0f64;
    for r in 0..n_rows {
        let (a, rhs) = &rows[r];
        let slack = rhs - a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
        worst = worst.max((y[r] * slack).abs()).max(-y[r]);
    }
    for j in 0..n {
        let d = lp.objective[j] - (0..n_rows).map(|r| y[r] * rows[r].0[j]).sum::<f64>();
        worst = worst.max(d.max(0.0) * (1.0 - x[j])).max((-d).max(0.0) * x[j]);
    }
    worst
}

/// `E[B^j 1(B <= b)]` for the max of a Bernoulli(Q)-thinned field of `M`
/// uniform bids, summed over the field size.
pub fn landscape_moment(m: u32, q: f64, b: f64, j: i32) -> f64 {
    let c = b.min(1.0);
    let mut total = if j == 0 { (1.0 - q).powi(m as i32) } else { 0.0 };
    let mut binom = 1.0;
    for n in 1..=m {
        binom *= (m - n + 1) as f64 / n as f64;
        let weight = binom * q.powi(n as i32) * (1.0 - q).powi((m - n) as i32);
        // density of the max of n uniforms is n t^(n-1)
        total += weight * n as f64 * c.powi(n as i32 + j) / (n as f64 + j as f64);
    }
    total
}

/// Monte-Carlo estimates `(rho, pe)` of `P(B <= b)` and `E[B 1(B <= b)]`
/// together with the standard errors of both estimators, taken from the
/// exact second moments.
pub fn monte_carlo_landscape<R: Rng>(rng: &mut R, m: u32, q: f64, b: f64, draws: usize) -> (f64, f64, f64, f64) {
    let (mut hits, mut sum) = (0usize, 0.0f64);
    for _ in 0..draws {
        let mut top = 0.0f64;
        for _ in 0..m {
            if rng.random::<f64>() < q {
                top = top.max(rng.random::<f64>());
            }
        }
        if top <= b {
            hits += 1;
            sum += top;
        }
    }
    let n = draws as f64;
    let (p, e1, e2) = (landscape_moment(m, q, b, 0), landscape_moment(m, q, b, 1), landscape_moment(m, q, b, 2));
    (hits as f64 / n, (p * (1.0 - p) / n).sqrt(), sum / n, ((e2 - e1 * e1).max(0.0) / n).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
            e += 1;
        }
        let avg = (s + e) as f64 / 2.0 + 1.0;
        for &i in &idx[s..=e] {
            r[i] = avg;
        }
        s = e + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
