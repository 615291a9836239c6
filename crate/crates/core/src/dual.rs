//! Lagrangian dual of the planning problem with the budget constraints
//! relaxed.
//!
//! For multipliers `lambda` in the box `[0, 1]^K` the inner maximization over
//! allocations and bids decouples: each edge bids its shaded eCPI
//! `(1 - lambda_k) r_ik` and each impression type is given to the single
//! campaign with the best positive score. [`oracle`] returns that maximizer,
//! the dual value and a subgradient; [`solve_dual`] runs projected subgradient
//! descent on the box.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::landscape::BidLandscape;
use crate::primal::greedy_allocate_into;

// Edge count above which the per-edge pass runs on the rayon pool.
const PAR_EDGES: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    /// Shaded bids `(1 - lambda_k) r_ik`, per edge.
    pub bids: Vec<f64>,
    /// Per-edge scores `[b - beta_i(b)] s_i rho_i(b)` at the shaded bid.
    pub scores: Vec<f64>,
    /// 0/1 allocation maximizing the Lagrangian.
    pub allocation: Vec<f64>,
    /// Subgradient of the dual function, per campaign.
    pub subgradient: Vec<f64>,
    pub dual_value: f64,
}

impl OracleOutput {
    fn empty(instance: &Instance) -> Self {
        let e = instance.edge_count();
        Self {
            bids: vec![0.0; e],
            scores: vec![0.0; e],
            allocation: vec![0.0; e],
            subgradient: vec![0.0; instance.n_campaigns()],
            dual_value: 0.0,
        }
    }
}

pub(crate) fn check_lambda(instance: &Instance, lambda: &[f64]) -> Result<()> {
    if lambda.len() != instance.n_campaigns() {
        return Err(Error::LambdaLength { got: lambda.len(), expected: instance.n_campaigns() });
    }
    match lambda.iter().position(|l| !(0.0..=1.0).contains(l)) {
        Some(index) => Err(Error::LambdaOutOfBox { index, value: lambda[index] }),
        None => Ok(()),
    }
}

/// Reusable buffers for repeated oracle calls on one instance.
pub struct DualOracle<'a> {
    instance: &'a Instance,
    // expected spend r s rho(b) of each edge if selected
    spend: Vec<f64>,
    out: OracleOutput,
}

impl<'a> DualOracle<'a> {
    pub fn new(instance: &'a Instance) -> Result<Self> {
        instance.ensure_valid()?;
        Ok(Self { instance, spend: vec![0.0; instance.edge_count()], out: OracleOutput::empty(instance) })
    }

    pub fn evaluate(&mut self, lambda: &[f64]) -> Result<&OracleOutput> {
        let instance = self.instance;
        check_lambda(instance, lambda)?;
        let edges = instance.edges();
        let types = instance.impression_types();

        let per_edge = |(idx, ((bid, score), spend)): (usize, ((&mut f64, &mut f64), &mut f64))| {
            let e = &edges[idx];
            let supply = types[e.impression].supply;
            let landscape = instance.landscape_of(e.impression);
            let b = (1.0 - lambda[e.campaign]) * e.ecpi;
            let rho = landscape.cdf(b);
            *bid = b;
            *score = supply * (b * rho - landscape.partial_expectation(b));
            *spend = e.ecpi * supply * rho;
        };
        let out = &mut self.out;
        if edges.len() >= PAR_EDGES {
            out.bids
                .par_iter_mut()
                .zip(out.scores.par_iter_mut())
                .zip(self.spend.par_iter_mut())
                .enumerate()
                .for_each(per_edge);
        } else {
            out.bids.iter_mut().zip(out.scores.iter_mut()).zip(self.spend.iter_mut()).enumerate().for_each(per_edge);
        }

        greedy_allocate_into(instance, &out.scores, &mut out.allocation);

        let mut value = 0.0;
        for (score, x) in out.scores.iter().zip(&out.allocation) {
            if *x > 0.0 {
                value += score;
            }
        }
        for (k, campaign) in instance.campaigns().iter().enumerate() {
            let spent: f64 = instance
                .edges_of_campaign(k)
                .iter()
                .filter(|&&e| out.allocation[e] > 0.0)
                .map(|&e| self.spend[e])
                .sum();
            out.subgradient[k] = campaign.budget - spent;
            value += lambda[k] * campaign.budget;
        }
        out.dual_value = value;
        Ok(&self.out)
    }
}

/// Maximizer of the Lagrangian at `lambda`, with dual value and subgradient.
pub fn oracle(instance: &Instance, lambda: &[f64]) -> Result<OracleOutput> {
    let mut o = DualOracle::new(instance)?;
    o.evaluate(lambda)?;
    Ok(o.out)
}

pub fn dual_value(instance: &Instance, lambda: &[f64]) -> Result<f64> {
    oracle(instance, lambda).map(|o| o.dual_value)
}

pub const DEFAULT_MAX_ITERS: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct DualConfig {
    pub max_iters: usize,
    /// Step-size constant; `None` uses `1 / ||g(0)||`.
    pub step_scale: Option<f64>,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self { max_iters: DEFAULT_MAX_ITERS, step_scale: None }
    }
}

impl DualConfig {
    pub fn check(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if let Some(s) = self.step_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("step_scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub dual_value: f64,
    pub step_size: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Last evaluated iterate.
    pub lambda: Vec<f64>,
    pub dual_value: f64,
    pub subgradient: Vec<f64>,
    /// Iterate with the lowest dual value seen.
    pub best_lambda: Vec<f64>,
    pub best_value: f64,
    pub iteration: usize,
    pub step_scale: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl DualState {
    /// Trajectory as CSV with header `iteration,dual_value,step_size,grad_norm`.
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("iteration,dual_value,step_size,grad_norm\n");
        for p in &self.trajectory {
            s.push_str(&format!("{},{},{},{}\n", p.iteration, p.dual_value, p.step_size, p.grad_norm));
        }
        s
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projected subgradient descent from `lambda = 0` with steps
/// `step_scale / sqrt(t + 1)`, returning the best iterate.
pub fn solve_dual(instance: &Instance, config: &DualConfig) -> Result<DualState> {
    config.check()?;
    let mut oracle = DualOracle::new(instance)?;
    let n = instance.n_campaigns();
    let mut lambda = vec![0.0; n];
    let mut state = DualState {
        lambda: lambda.clone(),
        dual_value: f64::INFINITY,
        subgradient: vec![0.0; n],
        best_lambda: lambda.clone(),
        best_value: f64::INFINITY,
        iteration: 0,
        step_scale: 0.0,
        trajectory: Vec::with_capacity(config.max_iters),
    };

    for t in 0..config.max_iters {
        let out = oracle.evaluate(&lambda)?;
        let grad_norm = norm(&out.subgradient);
        if t == 0 {
            state.step_scale = config.step_scale.unwrap_or(if grad_norm > 0.0 { 1.0 / grad_norm } else { 1.0 });
        }
        if out.dual_value < state.best_value {
            state.best_value = out.dual_value;
            state.best_lambda.copy_from_slice(&lambda);
        }
        let step = state.step_scale / ((t + 1) as f64).sqrt();
        state.trajectory.push(TrajectoryPoint { iteration: t, dual_value: out.dual_value, step_size: step, grad_norm });
        state.lambda.copy_from_slice(&lambda);
        state.dual_value = out.dual_value;
        state.subgradient.copy_from_slice(&out.subgradient);
        state.iteration = t + 1;

        for (l, g) in lambda.iter_mut().zip(&out.subgradient) {
            *l = (*l - step * g).clamp(0.0, 1.0);
        }
    }
    Ok(state)
}
