//! Synthetic market instances built from uniform quality scores.
//!
//! Each campaign `k` and impression type `i` draws a quality `Q ~ U[0, 1]`.
//! Type `i` is targeted by each campaign independently with probability
//! `Q_i`, its competing-bid landscape is the max of `Binomial(M, Q_i)`
//! uniforms, and click-through rates are `Q_i * Q_k`.
//!
//! Random streams, all ChaCha8 keyed by the seed:
//!
//! | stream | draws                                               |
//! |--------|-----------------------------------------------------|
//! | 0      | campaign qualities, in campaign order               |
//! | 1      | impression-type qualities, in type order            |
//! | 2      | edge coins, type-major then campaign, one per pair  |
//!
//! Budgets consume no randomness, so configurations that differ only in
//! budgets share every draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Campaign, ImpressionType, Instance, LandscapeEntry};
use crate::landscape::Landscape;

/// Budget levels of the budget sweep.
pub const SWEEP_BUDGETS: [f64; 10] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetMode {
    /// `m_k = c`.
    Constant(f64),
    /// `m_k = c * Q_k`.
    QualityScaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_types: usize,
    pub n_campaigns: usize,
    pub market_size: u32,
    pub supply: f64,
    pub cpc: f64,
    pub budget: BudgetMode,
    pub seed: u64,
}

impl GeneratorConfig {
    /// 100 types, 100 campaigns, M = 10, supply 5000, cpc 1, budget 50.
    pub fn example_a(seed: u64) -> Self {
        Self {
            n_types: 100,
            n_campaigns: 100,
            market_size: 10,
            supply: 5000.0,
            cpc: 1.0,
            budget: BudgetMode::Constant(50.0),
            seed,
        }
    }

    /// Example A with budgets `50 Q_k`.
    pub fn example_b(seed: u64) -> Self {
        Self { budget: BudgetMode::QualityScaled(50.0), ..Self::example_a(seed) }
    }

    /// 10 impression types with a constant budget.
    pub fn sweep(seed: u64, budget: f64) -> Self {
        Self { n_types: 10, budget: BudgetMode::Constant(budget), ..Self::example_a(seed) }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_types == 0 || self.n_campaigns == 0 || self.market_size == 0 {
            return Err(Error::Config("type, campaign and market-size counts must be at least 1".into()));
        }
        let c = match self.budget {
            BudgetMode::Constant(c) | BudgetMode::QualityScaled(c) => c,
        };
        for (name, v) in [("supply", self.supply), ("cpc", self.cpc), ("budget", c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// The quality scores behind a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityDraws {
    pub seed: u64,
    pub campaign_quality: Vec<f64>,
    pub type_quality: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub instance: Instance,
    pub quality: QualityDraws,
    /// Campaigns whose sampled target set is empty.
    pub empty_campaigns: Vec<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn generate(config: &GeneratorConfig) -> Result<Generated> {
    config.check()?;
    let campaign_quality: Vec<f64> = {
        let mut rng = stream(config.seed, 0);
        (0..config.n_campaigns).map(|_| rng.random()).collect()
    };
    let type_quality: Vec<f64> = {
        let mut rng = stream(config.seed, 1);
        (0..config.n_types).map(|_| rng.random()).collect()
    };
    build(config, campaign_quality, type_quality)
}

/// Like [`generate`] but with the quality scores supplied; only the edge
/// coins are drawn from `config.seed`.
pub fn generate_with_quality(
    config: &GeneratorConfig,
    campaign_quality: &[f64],
    type_quality: &[f64],
) -> Result<Generated> {
    config.check()?;
    if campaign_quality.len() != config.n_campaigns || type_quality.len() != config.n_types {
        return Err(Error::Config("quality vectors do not match the configured counts".into()));
    }
    if let Some(q) = campaign_quality.iter().chain(type_quality).find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::Config(format!("quality {q} outside [0, 1]")));
    }
    build(config, campaign_quality.to_vec(), type_quality.to_vec())
}

fn build(config: &GeneratorConfig, campaign_quality: Vec<f64>, type_quality: Vec<f64>) -> Result<Generated> {
    let mut coins = stream(config.seed, 2);
    let mut edges = Vec::new();
    let mut targets = vec![Vec::new(); config.n_campaigns];
    for (i, &qi) in type_quality.iter().enumerate() {
        for (k, &qk) in campaign_quality.iter().enumerate() {
            if coins.random::<f64>() < qi {
                edges.push((i, k, qi * qk));
                targets[k].push(i);
            }
        }
    }

    let landscapes = type_quality
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            Ok(LandscapeEntry {
                id: format!("L{i}"),
                landscape: Landscape::binomial_max_uniform(config.market_size, q)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let types = (0..config.n_types)
        .map(|i| ImpressionType { id: format!("i{i}"), supply: config.supply, landscape: i })
        .collect();
    let campaigns = targets
        .into_iter()
        .enumerate()
        .map(|(k, targets)| Campaign {
            id: format!("k{k}"),
            budget: match config.budget {
                BudgetMode::Constant(c) => c,
                BudgetMode::QualityScaled(c) => c * campaign_quality[k],
            },
            cpc: config.cpc,
            targets,
        })
        .collect::<Vec<_>>();
    let empty_campaigns = campaigns.iter().enumerate().filter(|(_, c)| c.targets.is_empty()).map(|(k, _)| k).collect();

    Ok(Generated {
        instance: Instance::new(types, campaigns, edges, landscapes),
        quality: QualityDraws { seed: config.seed, campaign_quality, type_quality },
        empty_campaigns,
    })
}

/// One instance per budget level, all sharing the quality and edge draws of
/// `seed`.
pub fn sweep_instances(seed: u64, budgets: &[f64]) -> Result<Vec<Generated>> {
    budgets.iter().map(|&m| generate(&GeneratorConfig::sweep(seed, m))).collect()
}
