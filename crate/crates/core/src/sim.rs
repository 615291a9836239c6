//! Paired discrete-event simulation of impression arrivals, second-price
//! auctions and clicks.
//!
//! A trace fixes every random input of a run: the arrival sequence, the
//! highest competing bid of each auction, and two uniforms per arrival (one
//! used by the Lagrangian policy to sample a campaign, one compared against
//! the click-through rate of whichever campaign a policy shows). Both policies
//! consume the same trace, so their difference is not blurred by independent
//! noise.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::landscape::BidLandscape;
use crate::primal::PlanSolution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub impression: usize,
    /// Highest bid entered by the other bidders.
    pub max_bid: f64,
    /// Click happens iff `click_u < ctr` of the campaign shown.
    pub click_u: f64,
    /// Campaign-sampling uniform for randomized plans.
    pub select_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalTrace {
    pub seed: u64,
    pub arrivals: Vec<Arrival>,
}

impl ArrivalTrace {
    pub fn counts_by_type(&self, n_types: usize) -> Vec<usize> {
        let mut counts = vec![0; n_types];
        for a in &self.arrivals {
            counts[a.impression] += 1;
        }
        counts
    }
}

/// Draws `N ~ Poisson(sum_i s_i)` arrivals and types each one independently
/// with probability `s_i / sum_j s_j`, which reproduces independent
/// `Poisson(s_i)` counts per type in exchangeable order.
pub fn generate_trace(instance: &Instance, seed: u64) -> Result<ArrivalTrace> {
    instance.ensure_valid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = instance.total_supply();
    if total <= 0.0 {
        return Ok(ArrivalTrace { seed, arrivals: Vec::new() });
    }
    let n =
        Poisson::new(total).map_err(|e| Error::Config(format!("total supply {total}: {e}")))?.sample(&mut rng) as usize;
    let types = WeightedIndex::new(instance.impression_types().iter().map(|t| t.supply))
        .map_err(|e| Error::Config(format!("supply weights: {e}")))?;
    let mut arrivals = Vec::with_capacity(n);
    for _ in 0..n {
        let impression = types.sample(&mut rng);
        let max_bid = instance.landscape_of(impression).sample(&mut rng);
        let click_u = rng.random::<f64>();
        let select_u = rng.random::<f64>();
        arrivals.push(Arrival { impression, max_bid, click_u, select_u });
    }
    Ok(ArrivalTrace { seed, arrivals })
}

/// Online ledger of one policy over one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub remaining: Vec<f64>,
    /// Payments to the exchange.
    pub cost: f64,
    /// CPC collections from campaigns.
    pub revenue: f64,
    pub clicks: Vec<u64>,
    pub bids_entered: u64,
    pub auctions_won: u64,
}

impl PolicyState {
    fn new(instance: &Instance) -> Self {
        Self {
            remaining: instance.campaigns().iter().map(|c| c.budget).collect(),
            cost: 0.0,
            revenue: 0.0,
            clicks: vec![0; instance.n_campaigns()],
            bids_entered: 0,
            auctions_won: 0,
        }
    }

    pub fn profit(&self) -> f64 {
        self.revenue - self.cost
    }

    /// Revenue charged to each campaign.
    pub fn charged(&self, instance: &Instance) -> Vec<f64> {
        instance.campaigns().iter().zip(&self.clicks).map(|(c, &n)| c.cpc * n as f64).collect()
    }

    /// A campaign is depleted once it cannot pay for one more click.
    fn depleted(&self, instance: &Instance, k: usize) -> bool {
        self.remaining[k] < instance.campaigns()[k].cpc
    }

    // Auction and click steps shared by both policies.
    fn bid(&mut self, instance: &Instance, edge: usize, bid: f64, arrival: &Arrival) {
        self.bids_entered += 1;
        // ties go to the DSP
        if bid < arrival.max_bid {
            return;
        }
        self.auctions_won += 1;
        self.cost += arrival.max_bid;
        let e = &instance.edges()[edge];
        if arrival.click_u < e.ctr {
            let q = instance.campaigns()[e.campaign].cpc;
            self.revenue += q;
            self.remaining[e.campaign] -= q;
            self.clicks[e.campaign] += 1;
        }
    }

    pub fn totals(&self, instance: &Instance) -> PolicyTotals {
        let profit = self.profit();
        let total_budget = instance.total_budget();
        PolicyTotals {
            profit,
            cost: self.cost,
            revenue: self.revenue,
            budget_util: if total_budget > 0.0 { self.revenue / total_budget } else { 0.0 },
            margin: if self.revenue > 0.0 { profit / self.revenue } else { 0.0 },
        }
    }
}

/// Decision rule driven through a trace.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Sample a campaign from the plan's allocation row and bid its planned
    /// price; skip if the campaign is depleted.
    Lagrangian(&'a PlanSolution),
    /// Bid the eCPI of the non-depleted campaign with the largest eCPI.
    Greedy,
}

struct LagrangianRule {
    // per type: (edge, cumulative mass) over nonzero entries, campaign order
    rows: Vec<Vec<(usize, f64)>>,
}

impl LagrangianRule {
    fn new(instance: &Instance, plan: &PlanSolution) -> Result<Self> {
        plan.check_rows(instance)?;
        let rows = (0..instance.n_types())
            .map(|i| {
                let mut acc = 0.0;
                instance
                    .edges_of_type(i)
                    .iter()
                    .filter(|&&e| plan.x[e] > 0.0)
                    .map(|&e| {
                        acc += plan.x[e];
                        (e, acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { rows })
    }

    fn select(&self, impression: usize, u: f64) -> Option<usize> {
        self.rows[impression].iter().find(|(_, cum)| u < *cum).map(|&(e, _)| e)
    }
}

struct GreedyRule {
    // per type: edges by decreasing eCPI, lowest campaign first on ties
    rows: Vec<Vec<usize>>,
}

impl GreedyRule {
    fn new(instance: &Instance) -> Self {
        let rows = (0..instance.n_types())
            .map(|i| {
                let mut row = instance.edges_of_type(i).to_vec();
                row.sort_by(|&a, &b| instance.edges()[b].ecpi.total_cmp(&instance.edges()[a].ecpi));
                row
            })
            .collect();
        Self { rows }
    }
}

enum Rule {
    Lagrangian(LagrangianRule, Vec<f64>),
    Greedy(GreedyRule),
}

impl Rule {
    fn new(instance: &Instance, policy: Policy<'_>) -> Result<Self> {
        Ok(match policy {
            Policy::Lagrangian(plan) => Rule::Lagrangian(LagrangianRule::new(instance, plan)?, plan.bids.clone()),
            Policy::Greedy => Rule::Greedy(GreedyRule::new(instance)),
        })
    }

    fn run(&self, instance: &Instance, trace: &ArrivalTrace) -> PolicyState {
        let mut state = PolicyState::new(instance);
        let edges = instance.edges();
        for a in &trace.arrivals {
            match self {
                Rule::Lagrangian(rule, bids) => {
                    let Some(e) = rule.select(a.impression, a.select_u) else {
                        continue;
                    };
                    if state.depleted(instance, edges[e].campaign) {
                        continue;
                    }
                    state.bid(instance, e, bids[e], a);
                }
                Rule::Greedy(rule) => {
                    let chosen =
                        rule.rows[a.impression].iter().copied().find(|&e| !state.depleted(instance, edges[e].campaign));
                    if let Some(e) = chosen {
                        state.bid(instance, e, edges[e].ecpi, a);
                    }
                }
            }
        }
        state
    }
}

pub fn run_policy(instance: &Instance, policy: Policy<'_>, trace: &ArrivalTrace) -> Result<PolicyState> {
    instance.ensure_valid()?;
    Ok(Rule::new(instance, policy)?.run(instance, trace))
}

pub fn run_lagrangian_policy(instance: &Instance, plan: &PlanSolution, trace: &ArrivalTrace) -> Result<PolicyState> {
    run_policy(instance, Policy::Lagrangian(plan), trace)
}

pub fn run_greedy_policy(instance: &Instance, trace: &ArrivalTrace) -> Result<PolicyState> {
    run_policy(instance, Policy::Greedy, trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyTotals {
    pub profit: f64,
    pub cost: f64,
    pub revenue: f64,
    /// Revenue over total budget.
    pub budget_util: f64,
    /// Profit over revenue (0 without revenue).
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub first: PolicyTotals,
    pub second: PolicyTotals,
}

/// Mean and standard error of a per-run ratio, over runs whose denominator
/// is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeStat {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub excluded: usize,
}

impl RelativeStat {
    fn from_pairs(pairs: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut values = Vec::new();
        let mut excluded = 0;
        for (num, den) in pairs {
            if den == 0.0 {
                excluded += 1;
            } else {
                values.push(num / den);
            }
        }
        let (mean, stderr) = mean_stderr(&values);
        Self { mean, stderr, count: values.len(), excluded }
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-policy means over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicySummary {
    pub profit: f64,
    pub cost: f64,
    pub revenue: f64,
    pub budget_util: f64,
    pub margin: f64,
}

impl PolicySummary {
    fn mean_of(totals: impl Iterator<Item = PolicyTotals> + Clone) -> Self {
        let n = totals.clone().count().max(1) as f64;
        let sum = |f: fn(&PolicyTotals) -> f64| totals.clone().map(|t| f(&t)).sum::<f64>() / n;
        Self {
            profit: sum(|t| t.profit),
            cost: sum(|t| t.cost),
            revenue: sum(|t| t.revenue),
            budget_util: sum(|t| t.budget_util),
            margin: sum(|t| t.margin),
        }
    }
}

/// Aggregate of a paired experiment. "first" is the Lagrangian side and
/// "second" the greedy baseline in the standard comparison; relatives are
/// first over second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub runs: usize,
    pub base_seed: u64,
    pub first: PolicySummary,
    pub second: PolicySummary,
    pub relative_profit: RelativeStat,
    pub relative_cost: RelativeStat,
    pub relative_revenue: RelativeStat,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

impl SimulationReport {
    fn from_records(records: Vec<RunRecord>, base_seed: u64) -> Self {
        let first = records.iter().map(|r| r.first);
        let second = records.iter().map(|r| r.second);
        Self {
            runs: records.len(),
            base_seed,
            first: PolicySummary::mean_of(first),
            second: PolicySummary::mean_of(second),
            relative_profit: RelativeStat::from_pairs(records.iter().map(|r| (r.first.profit, r.second.profit))),
            relative_cost: RelativeStat::from_pairs(records.iter().map(|r| (r.first.cost, r.second.cost))),
            relative_revenue: RelativeStat::from_pairs(records.iter().map(|r| (r.first.revenue, r.second.revenue))),
            records,
        }
    }

    /// Per-run CSV: `run,policy,profit,cost,revenue,budget_util,margin`.
    pub fn runs_csv(&self, first_name: &str, second_name: &str) -> String {
        let mut s = String::from("run,policy,profit,cost,revenue,budget_util,margin\n");
        for r in &self.records {
            for (name, t) in [(first_name, &r.first), (second_name, &r.second)] {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.run, name, t.profit, t.cost, t.revenue, t.budget_util, t.margin
                ));
            }
        }
        s
    }
}

/// Runs `first` and `second` on traces seeded `base_seed + 1 ..= base_seed + runs`.
pub fn paired_experiment_with(
    instance: &Instance,
    first: Policy<'_>,
    second: Policy<'_>,
    runs: usize,
    base_seed: u64,
) -> Result<SimulationReport> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    instance.ensure_valid()?;
    let first = Rule::new(instance, first)?;
    let second = Rule::new(instance, second)?;
    let records = (1..=runs)
        .into_par_iter()
        .map(|run| {
            let seed = base_seed.wrapping_add(run as u64);
            let trace = generate_trace(instance, seed)?;
            Ok(RunRecord {
                run,
                seed,
                first: first.run(instance, &trace).totals(instance),
                second: second.run(instance, &trace).totals(instance),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationReport::from_records(records, base_seed))
}

/// Lagrangian policy from `plan` against the greedy baseline.
pub fn paired_experiment(
    instance: &Instance,
    plan: &PlanSolution,
    runs: usize,
    base_seed: u64,
) -> Result<SimulationReport> {
    paired_experiment_with(instance, Policy::Lagrangian(plan), Policy::Greedy, runs, base_seed)
}
