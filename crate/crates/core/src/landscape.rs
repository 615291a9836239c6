//! Bid landscapes: the distribution of the highest competing bid `B` an
//! impression type sees in a second-price auction.
//!
//! Every landscape exposes three quantities:
//!
//! * `win_prob(b) = P(B <= b)`, the probability of winning with bid `b`
//!   (ties are won by the DSP);
//! * `truncated_mean(b) = E[B | B <= b]`, the expected second price paid;
//! * a sampler for `B`.
//!
//! The planning code mostly needs the product `truncated_mean(b) * win_prob(b)`,
//! i.e. the partial expectation `E[B 1(B <= b)]`, which is available directly
//! and stays well defined when `win_prob(b) = 0`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

/// Capability shared by all landscape kinds.
///
/// Implementors provide the raw functions on `b >= 0`; the checked wrappers
/// reject negative or non-finite bids.
pub trait BidLandscape {
    /// `P(B <= bid)` for `bid >= 0`.
    fn cdf(&self, bid: f64) -> f64;

    /// `E[B 1(B <= bid)]` for `bid >= 0`.
    fn partial_expectation(&self, bid: f64) -> f64;

    /// Draws one realization of the highest competing bid.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    fn win_prob(&self, bid: f64) -> Result<f64> {
        check_bid(bid)?;
        Ok(self.cdf(bid))
    }

    /// `E[B | B <= bid]`, taken as 0 on a zero-probability event.
    fn truncated_mean(&self, bid: f64) -> Result<f64> {
        check_bid(bid)?;
        let p = self.cdf(bid);
        if p > 0.0 {
            Ok((self.partial_expectation(bid) / p).min(bid))
        } else {
            Ok(0.0)
        }
    }

    /// Expected utility `[v - E[B | B <= b]] P(B <= b)` of entering bid `b`
    /// with valuation `v`.
    fn expected_win_utility(&self, bid: f64, valuation: f64) -> Result<f64> {
        check_bid(bid)?;
        Ok(valuation * self.cdf(bid) - self.partial_expectation(bid))
    }
}

fn check_bid(bid: f64) -> Result<()> {
    if bid >= 0.0 && bid.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeBid(bid))
    }
}

/// `B` is the maximum of `Binomial(M, Q)` independent `U[0, 1]` bids, and 0
/// when nobody shows up.
///
/// With `c = min(b, 1)`:
///
/// ```text
/// P(B <= b)        = (1 - Q + Q c)^M
/// E[B 1(B <= b)]   = sum_{n=1..M} C(M, n) Q^n (1 - Q)^(M - n) n c^(n+1) / (n + 1)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialMaxUniform {
    market_size: u32,
    quality: f64,
    // weight[n] = P(N = n) * n / (n + 1), so the partial expectation is
    // c * sum_n weight[n] c^n.
    weights: Vec<f64>,
}

impl BinomialMaxUniform {
    pub fn new(market_size: u32, quality: f64) -> Result<Self> {
        if market_size == 0 {
            return Err(Error::Config("market size M must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&quality) {
            return Err(Error::Config(format!("participation probability Q = {quality} is outside [0, 1]")));
        }
        let m = market_size as usize;
        let mut weights = vec![0.0; m + 1];
        let mut binom = 1.0_f64;
        for (n, w) in weights.iter_mut().enumerate() {
            if n > 0 {
                binom = binom * (m - n + 1) as f64 / n as f64;
            }
            let pmf = binom * quality.powi(n as i32) * (1.0 - quality).powi((m - n) as i32);
            *w = pmf * n as f64 / (n as f64 + 1.0);
        }
        Ok(Self { market_size, quality, weights })
    }

    pub fn market_size(&self) -> u32 {
        self.market_size
    }

    pub fn quality(&self) -> f64 {
        self.quality
    }

    /// Probability mass of the empty field, `(1 - Q)^M`.
    pub fn empty_field_prob(&self) -> f64 {
        (1.0 - self.quality).powi(self.market_size as i32)
    }
}

impl BidLandscape for BinomialMaxUniform {
    fn cdf(&self, bid: f64) -> f64 {
        let c = bid.min(1.0);
        (1.0 - self.quality + self.quality * c).powi(self.market_size as i32)
    }

    fn partial_expectation(&self, bid: f64) -> f64 {
        let c = bid.min(1.0);
        let poly = self.weights.iter().rev().fold(0.0, |acc, &w| acc * c + w);
        c * poly
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let count = Binomial::new(self.market_size as u64, self.quality)
            .expect("quality validated at construction")
            .sample(rng);
        (0..count).map(|_| rng.random::<f64>()).fold(0.0, f64::max)
    }
}

/// Piecewise-constant landscape built from observed competing bids.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    sorted: Vec<f64>,
    // prefix[j] = sum of the j smallest samples
    prefix: Vec<f64>,
}

impl Empirical {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("empirical landscape needs at least one sample".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Config(format!("empirical landscape sample {bad} is not a nonnegative number")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for s in &sorted {
            acc += s;
            prefix.push(acc);
        }
        Ok(Self { sorted, prefix })
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    fn count_le(&self, bid: f64) -> usize {
        self.sorted.partition_point(|&s| s <= bid)
    }
}

impl BidLandscape for Empirical {
    fn cdf(&self, bid: f64) -> f64 {
        self.count_le(bid) as f64 / self.sorted.len() as f64
    }

    fn partial_expectation(&self, bid: f64) -> f64 {
        self.prefix[self.count_le(bid)] / self.sorted.len() as f64
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sorted[rng.random_range(0..self.sorted.len())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Landscape {
    BinomialMaxUniform(BinomialMaxUniform),
    Empirical(Empirical),
}

impl Landscape {
    pub fn binomial_max_uniform(market_size: u32, quality: f64) -> Result<Self> {
        BinomialMaxUniform::new(market_size, quality).map(Self::BinomialMaxUniform)
    }

    pub fn empirical(samples: &[f64]) -> Result<Self> {
        Empirical::new(samples).map(Self::Empirical)
    }
}

impl BidLandscape for Landscape {
    fn cdf(&self, bid: f64) -> f64 {
        match self {
            Self::BinomialMaxUniform(l) => l.cdf(bid),
            Self::Empirical(l) => l.cdf(bid),
        }
    }

    fn partial_expectation(&self, bid: f64) -> f64 {
        match self {
            Self::BinomialMaxUniform(l) => l.partial_expectation(bid),
            Self::Empirical(l) => l.partial_expectation(bid),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::BinomialMaxUniform(l) => l.sample(rng),
            Self::Empirical(l) => l.sample(rng),
        }
    }
}
