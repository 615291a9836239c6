//! Primal recovery: fix bids from the dual multipliers, solve the remaining
//! allocation LP, and package the plan.

use serde::{Deserialize, Serialize};

use crate::dual::{check_lambda, solve_dual, DualConfig, DualState};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::landscape::BidLandscape;
use crate::lp::{self, LpError, LpSolution, StructuredLp};

/// Slack tolerated on a supply row before the plan is considered malformed.
pub const SUPPLY_TOL: f64 = 1e-9;

/// Per impression type, puts all mass on the highest-scoring campaign if its
/// score is strictly positive. Ties go to the lowest campaign index.
pub fn greedy_allocate(instance: &Instance, scores: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; instance.edge_count()];
    greedy_allocate_into(instance, scores, &mut x);
    x
}

pub(crate) fn greedy_allocate_into(instance: &Instance, scores: &[f64], x: &mut [f64]) {
    x.fill(0.0);
    for i in 0..instance.n_types() {
        let mut best: Option<usize> = None;
        // by-type view is in increasing campaign order, so strict > keeps the lowest index
        for &e in instance.edges_of_type(i) {
            if best.is_none_or(|b| scores[e] > scores[b]) {
                best = Some(e);
            }
        }
        if let Some(e) = best {
            if scores[e] > 0.0 {
                x[e] = 1.0;
            }
        }
    }
}

/// Expected profit `sum_e [r_e - beta_i(b_e)] s_i x_e rho_i(b_e)` of a plan.
pub fn expected_profit(instance: &Instance, x: &[f64], bids: &[f64]) -> f64 {
    instance
        .edges()
        .iter()
        .zip(x.iter().zip(bids))
        .map(|(e, (&xe, &b))| {
            let s = instance.impression_types()[e.impression].supply;
            let l = instance.landscape_of(e.impression);
            s * xe * (e.ecpi * l.cdf(b) - l.partial_expectation(b))
        })
        .sum()
}

/// Expected charge `sum_{i in I_k} r_ik s_i x_ik rho_i(b_ik)` per campaign.
pub fn expected_spend(instance: &Instance, x: &[f64], bids: &[f64]) -> Vec<f64> {
    (0..instance.n_campaigns())
        .map(|k| {
            instance
                .edges_of_campaign(k)
                .iter()
                .map(|&idx| {
                    let e = &instance.edges()[idx];
                    let s = instance.impression_types()[e.impression].supply;
                    e.ecpi * s * x[idx] * instance.landscape_of(e.impression).cdf(bids[idx])
                })
                .sum()
        })
        .collect()
}

/// The allocation LP for fixed bids `(1 - lambda_k) r_ik`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Lp {
    pub bids: Vec<f64>,
    pub lp: StructuredLp,
}

pub fn build_phase2_lp(instance: &Instance, lambda: &[f64]) -> Result<Phase2Lp> {
    instance.ensure_valid()?;
    check_lambda(instance, lambda)?;
    let edges = instance.edges();
    let n = edges.len();
    let mut bids = Vec::with_capacity(n);
    let mut objective = Vec::with_capacity(n);
    let mut budget_coeffs = Vec::with_capacity(n);
    for e in edges {
        let s = instance.impression_types()[e.impression].supply;
        let l = instance.landscape_of(e.impression);
        let b = (1.0 - lambda[e.campaign]) * e.ecpi;
        let rho = l.cdf(b);
        bids.push(b);
        // true revenue r, not the shaded bid, in the objective
        objective.push(s * (e.ecpi * rho - l.partial_expectation(b)));
        budget_coeffs.push(e.ecpi * s * rho);
    }
    let lp = StructuredLp {
        n_types: instance.n_types(),
        n_campaigns: instance.n_campaigns(),
        edge_type: edges.iter().map(|e| e.impression).collect(),
        edge_campaign: edges.iter().map(|e| e.campaign).collect(),
        objective,
        budget_coeffs,
        budgets: instance.campaigns().iter().map(|c| c.budget).collect(),
    };
    Ok(Phase2Lp { bids, lp })
}

/// Solves the allocation LP and cleans the solution into exact
/// sub-probability rows: entries clamped to `[0, 1]`, and rows that exceed 1
/// by at most [`SUPPLY_TOL`] rescaled onto the simplex.
pub fn solve_lp(lp: &StructuredLp) -> Result<LpSolution> {
    let mut sol = lp::solve(lp)?;
    for v in &mut sol.x {
        *v = v.clamp(0.0, 1.0);
    }
    let mut row_mass = vec![0.0; lp.n_types];
    for (j, v) in sol.x.iter().enumerate() {
        row_mass[lp.edge_type[j]] += v;
    }
    for (i, &mass) in row_mass.iter().enumerate() {
        if mass > 1.0 + SUPPLY_TOL {
            return Err(LpError::Certificate(format!("supply row {i} has mass {mass}")).into());
        }
    }
    for j in 0..sol.x.len() {
        let mass = row_mass[lp.edge_type[j]];
        if mass > 1.0 {
            sol.x[j] /= mass;
        }
    }
    sol.objective = lp.objective_value(&sol.x);
    Ok(sol)
}

/// Output of the two-phase scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSolution {
    pub lambda: Vec<f64>,
    /// Allocation probabilities, per edge.
    pub x: Vec<f64>,
    /// Bid prices, per edge.
    pub bids: Vec<f64>,
    pub primal_value: f64,
    pub dual_bound: f64,
    /// `dual_bound - primal_value`.
    pub gap_abs: f64,
    /// `(dual_bound - primal_value) / primal_value`; `None` when the primal
    /// value is zero and the dual bound is not.
    pub gap: Option<f64>,
    /// Expected spend per campaign under the plan.
    pub spend: Vec<f64>,
}

fn relative_gap(primal: f64, dual: f64) -> Option<f64> {
    let diff = dual - primal;
    if primal > 0.0 {
        Some(diff / primal)
    } else if diff.abs() <= 1e-12 {
        Some(0.0)
    } else {
        None
    }
}

/// Phase 1 (dual solve) followed by phase 2 (bid fixing and LP).
pub fn two_phase(instance: &Instance, config: &DualConfig) -> Result<(PlanSolution, DualState)> {
    let dual = solve_dual(instance, config)?;
    let phase2 = build_phase2_lp(instance, &dual.best_lambda)?;
    let sol = solve_lp(&phase2.lp)?;
    let primal_value = expected_profit(instance, &sol.x, &phase2.bids);
    let dual_bound = dual.best_value;
    if primal_value > dual_bound + 1e-9 * dual_bound.abs().max(1.0) {
        return Err(Error::Lp(LpError::Certificate(format!(
            "primal value {primal_value} exceeds dual bound {dual_bound}"
        ))));
    }
    let plan = PlanSolution {
        lambda: dual.best_lambda.clone(),
        spend: expected_spend(instance, &sol.x, &phase2.bids),
        x: sol.x,
        bids: phase2.bids,
        primal_value,
        dual_bound,
        gap_abs: dual_bound - primal_value,
        gap: relative_gap(primal_value, dual_bound),
    };
    Ok((plan, dual))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    lambda: Vec<f64>,
    x: Vec<PlanEntry>,
    b: Vec<f64>,
    primal: f64,
    dual_bound: f64,
    gap: Option<f64>,
    #[serde(default)]
    gap_abs: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanEntry {
    i: usize,
    k: usize,
    v: f64,
}

fn plan_err(message: String) -> Error {
    Error::Parse { what: "plan".into(), message }
}

impl PlanSolution {
    /// JSON with only the nonzero allocation entries.
    pub fn to_json_string(&self, instance: &Instance) -> Result<String> {
        let doc = PlanDoc {
            lambda: self.lambda.clone(),
            x: instance
                .edges()
                .iter()
                .zip(&self.x)
                .filter(|(_, &v)| v != 0.0)
                .map(|(e, &v)| PlanEntry { i: e.impression, k: e.campaign, v })
                .collect(),
            b: self.bids.clone(),
            primal: self.primal_value,
            dual_bound: self.dual_bound,
            gap: self.gap,
            gap_abs: Some(self.gap_abs),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Reads a plan written for `instance`. Spend is recomputed from the
    /// instance.
    pub fn from_json_str(text: &str, instance: &Instance) -> Result<Self> {
        instance.ensure_valid()?;
        let doc: PlanDoc = serde_json::from_str(text).map_err(|e| plan_err(e.to_string()))?;
        if doc.lambda.len() != instance.n_campaigns() {
            return Err(plan_err(format!(
                "lambda has {} entries, instance has {} campaigns",
                doc.lambda.len(),
                instance.n_campaigns()
            )));
        }
        if doc.b.len() != instance.edge_count() {
            return Err(plan_err(format!(
                "b has {} entries, instance has {} edges",
                doc.b.len(),
                instance.edge_count()
            )));
        }
        let mut x = vec![0.0; instance.edge_count()];
        for (n, entry) in doc.x.iter().enumerate() {
            let e = instance
                .find_edge(entry.i, entry.k)
                .ok_or_else(|| plan_err(format!("x[{n}]: ({}, {}) is not an edge", entry.i, entry.k)))?;
            x[e] = entry.v;
        }
        let plan = Self {
            spend: expected_spend(instance, &x, &doc.b),
            lambda: doc.lambda,
            x,
            bids: doc.b,
            primal_value: doc.primal,
            dual_bound: doc.dual_bound,
            gap_abs: doc.gap_abs.unwrap_or(doc.dual_bound - doc.primal),
            gap: doc.gap,
        };
        plan.check_rows(instance)?;
        Ok(plan)
    }

    /// Every row must be a sub-probability vector and every bid nonnegative.
    pub fn check_rows(&self, instance: &Instance) -> Result<()> {
        if self.x.len() != instance.edge_count() || self.bids.len() != instance.edge_count() {
            return Err(Error::MalformedPlan("plan does not match the instance's edge count".into()));
        }
        if let Some(e) = self.x.iter().position(|v| !(*v >= 0.0 && *v <= 1.0 + SUPPLY_TOL)) {
            return Err(Error::MalformedPlan(format!("allocation of edge {e} is {}", self.x[e])));
        }
        if let Some(e) = self.bids.iter().position(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::MalformedPlan(format!("bid of edge {e} is {}", self.bids[e])));
        }
        for i in 0..instance.n_types() {
            let mass: f64 = instance.edges_of_type(i).iter().map(|&e| self.x[e]).sum();
            if mass > 1.0 + SUPPLY_TOL {
                return Err(Error::MalformedPlan(format!("impression type {i} has allocation mass {mass}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Campaign, ImpressionType, LandscapeEntry};
    use crate::landscape::Landscape;

    fn one_type(scores_len: usize) -> Instance {
        let types = vec![ImpressionType { id: "t".into(), supply: 1.0, landscape: 0 }];
        let campaigns = (0..scores_len)
            .map(|k| Campaign { id: format!("c{k}"), budget: 1.0, cpc: 1.0, targets: vec![0] })
            .collect();
        let landscapes =
            vec![LandscapeEntry { id: "l".into(), landscape: Landscape::binomial_max_uniform(2, 0.5).unwrap() }];
        Instance::new(types, campaigns, (0..scores_len).map(|k| (0, k, 0.5)), landscapes)
    }

    #[test]
    fn greedy_skips_negative_scores() {
        assert_eq!(greedy_allocate(&one_type(2), &[-0.1, -3.0]), vec![0.0, 0.0]);
        assert_eq!(greedy_allocate(&one_type(2), &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn greedy_takes_argmax() {
        assert_eq!(greedy_allocate(&one_type(2), &[0.3, 0.7]), vec![0.0, 1.0]);
    }

    #[test]
    fn greedy_breaks_ties_by_lowest_index() {
        assert_eq!(greedy_allocate(&one_type(2), &[0.5, 0.5]), vec![1.0, 0.0]);
        assert_eq!(greedy_allocate(&one_type(3), &[0.1, 0.5, 0.5]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn phase2_at_zero_multipliers_uses_truthful_scores() {
        let inst = one_type(2);
        let p2 = build_phase2_lp(&inst, &[0.0, 0.0]).unwrap();
        for (idx, e) in inst.edges().iter().enumerate() {
            let l = inst.landscape_of(0);
            let r = e.ecpi;
            let pi = (r - l.truncated_mean(r).unwrap()) * l.win_prob(r).unwrap();
            assert_eq!(p2.bids[idx], r);
            assert!((p2.lp.objective[idx] - pi).abs() < 1e-15);
        }
    }

    #[test]
    fn phase2_at_unit_multipliers_hits_atom() {
        let inst = one_type(2);
        let p2 = build_phase2_lp(&inst, &[1.0, 1.0]).unwrap();
        assert!(p2.bids.iter().all(|&b| b == 0.0));
        for (w, e) in p2.lp.budget_coeffs.iter().zip(inst.edges()) {
            assert!((w - e.ecpi * 0.25).abs() < 1e-15);
        }
        assert_eq!(p2.lp.n_rows(), 3);
        assert!(build_phase2_lp(&inst, &[1.0, 1.5]).is_err());
    }

    #[test]
    fn plan_rejects_overfull_rows() {
        let inst = one_type(2);
        let plan = PlanSolution {
            lambda: vec![0.0; 2],
            x: vec![0.7, 0.4],
            bids: vec![0.5, 0.5],
            primal_value: 0.0,
            dual_bound: 0.0,
            gap_abs: 0.0,
            gap: Some(0.0),
            spend: vec![0.0; 2],
        };
        assert!(matches!(plan.check_rows(&inst), Err(Error::MalformedPlan(_))));
    }
}
