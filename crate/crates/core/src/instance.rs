//! The planning problem: impression types, campaigns, the targeting graph
//! between them, and one bid landscape per impression type.
//!
//! An [`Instance`] can hold inconsistent data; [`Instance::validate`] lists
//! every problem found, and the solver entry points refuse instances that
//! carry violations. Edges are kept once, sorted by `(impression, campaign)`,
//! with two index views: by impression type (campaigns in increasing index
//! order) and by campaign (impression types in increasing index order).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::Landscape;

/// Relative slack allowed between a stored eCPI and `cpc * ctr`.
pub const ECPI_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionType {
    pub id: String,
    /// Expected number of arrivals over the horizon.
    pub supply: f64,
    /// Index into [`Instance::landscapes`].
    pub landscape: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub id: String,
    pub budget: f64,
    /// Price charged per click.
    pub cpc: f64,
    /// Targeted impression-type indices.
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub impression: usize,
    pub campaign: usize,
    pub ctr: f64,
    /// Expected revenue per displayed ad, `cpc * ctr`.
    pub ecpi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeEntry {
    pub id: String,
    pub landscape: Landscape,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeSupply { impression: usize, value: f64 },
    NegativeBudget { campaign: usize, value: f64 },
    NonPositiveCpc { campaign: usize, value: f64 },
    CtrOutOfRange { impression: usize, campaign: usize, value: f64 },
    DanglingLandscape { impression: usize, landscape: usize },
    DanglingTarget { campaign: usize, impression: usize },
    DuplicateTarget { campaign: usize, impression: usize },
    DanglingEdge { impression: usize, campaign: usize },
    DuplicateEdge { impression: usize, campaign: usize },
    EdgeNotInTargetSet { impression: usize, campaign: usize },
    MissingEdge { impression: usize, campaign: usize },
    EcpiMismatch { impression: usize, campaign: usize, stored: f64, expected: f64 },
    EmptyTargetSet { campaign: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match *self {
            NegativeSupply { impression, value } => {
                write!(f, "impression type {impression}: negative supply {value}")
            }
            NegativeBudget { campaign, value } => {
                write!(f, "campaign {campaign}: negative budget {value}")
            }
            NonPositiveCpc { campaign, value } => {
                write!(f, "campaign {campaign}: cpc {value} is not positive")
            }
            CtrOutOfRange { impression, campaign, value } => {
                write!(f, "edge ({impression}, {campaign}): ctr {value} outside [0, 1]")
            }
            DanglingLandscape { impression, landscape } => {
                write!(f, "impression type {impression}: dangling landscape index {landscape}")
            }
            DanglingTarget { campaign, impression } => {
                write!(f, "campaign {campaign}: dangling target index {impression}")
            }
            DuplicateTarget { campaign, impression } => {
                write!(f, "campaign {campaign}: duplicate target {impression}")
            }
            DanglingEdge { impression, campaign } => {
                write!(f, "edge ({impression}, {campaign}): dangling index")
            }
            DuplicateEdge { impression, campaign } => {
                write!(f, "edge ({impression}, {campaign}): duplicate edge")
            }
            EdgeNotInTargetSet { impression, campaign } => {
                write!(f, "edge ({impression}, {campaign}): edge not in target set")
            }
            MissingEdge { impression, campaign } => {
                write!(f, "campaign {campaign} targets impression type {impression} without an edge")
            }
            EcpiMismatch { impression, campaign, stored, expected } => {
                write!(f, "edge ({impression}, {campaign}): ecpi {stored} differs from cpc * ctr = {expected}")
            }
            EmptyTargetSet { campaign } => write!(f, "campaign {campaign}: empty target set"),
        }
    }
}

/// Outcome of [`Instance::validate`]. Violations make the instance unusable;
/// warnings are informational.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "pass")?;
        } else {
            write!(f, "{} violation(s)", self.violations.len())?;
            for v in &self.violations {
                write!(f, "\n  error: {v}")?;
            }
        }
        for w in &self.warnings {
            write!(f, "\n  warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    impression_types: Vec<ImpressionType>,
    campaigns: Vec<Campaign>,
    edges: Vec<Edge>,
    landscapes: Vec<LandscapeEntry>,
    by_type: Vec<Vec<usize>>,
    by_campaign: Vec<Vec<usize>>,
    report: ValidationReport,
}

impl Instance {
    /// Builds an instance from `(impression, campaign, ctr)` triples, deriving
    /// each eCPI from the campaign's cpc.
    pub fn new(
        impression_types: Vec<ImpressionType>,
        campaigns: Vec<Campaign>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        landscapes: Vec<LandscapeEntry>,
    ) -> Self {
        let edges = edges
            .into_iter()
            .map(|(impression, campaign, ctr)| Edge {
                impression,
                campaign,
                ctr,
                ecpi: campaigns.get(campaign).map_or(f64::NAN, |c| c.cpc * ctr),
            })
            .collect();
        Self::from_parts(impression_types, campaigns, edges, landscapes)
    }

    /// Builds an instance from raw edges, trusting nothing.
    pub fn from_parts(
        impression_types: Vec<ImpressionType>,
        mut campaigns: Vec<Campaign>,
        mut edges: Vec<Edge>,
        landscapes: Vec<LandscapeEntry>,
    ) -> Self {
        for c in &mut campaigns {
            c.targets.sort_unstable();
        }
        edges.sort_by_key(|e| (e.impression, e.campaign));

        let mut by_type = vec![Vec::new(); impression_types.len()];
        let mut by_campaign = vec![Vec::new(); campaigns.len()];
        for (idx, e) in edges.iter().enumerate() {
            if e.impression < by_type.len() && e.campaign < by_campaign.len() {
                by_type[e.impression].push(idx);
                by_campaign[e.campaign].push(idx);
            }
        }

        let mut instance = Self {
            impression_types,
            campaigns,
            edges,
            landscapes,
            by_type,
            by_campaign,
            report: ValidationReport::default(),
        };
        instance.report = instance.check();
        instance
    }

    pub fn impression_types(&self) -> &[ImpressionType] {
        &self.impression_types
    }

    pub fn campaigns(&self) -> &[Campaign] {
        &self.campaigns
    }

    /// All edges, sorted by `(impression, campaign)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn landscapes(&self) -> &[LandscapeEntry] {
        &self.landscapes
    }

    pub fn n_types(&self) -> usize {
        self.impression_types.len()
    }

    pub fn n_campaigns(&self) -> usize {
        self.campaigns.len()
    }

    /// Number of edges `|E|`.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge indices of campaigns targeting impression type `i`, by campaign index.
    pub fn edges_of_type(&self, i: usize) -> &[usize] {
        &self.by_type[i]
    }

    /// Edge indices targeted by campaign `k`, by impression-type index.
    pub fn edges_of_campaign(&self, k: usize) -> &[usize] {
        &self.by_campaign[k]
    }

    /// Landscape of impression type `i`. Only meaningful on a valid instance.
    pub fn landscape_of(&self, i: usize) -> &Landscape {
        &self.landscapes[self.impression_types[i].landscape].landscape
    }

    pub fn total_budget(&self) -> f64 {
        self.campaigns.iter().map(|c| c.budget).sum()
    }

    pub fn total_supply(&self) -> f64 {
        self.impression_types.iter().map(|t| t.supply).sum()
    }

    /// Edge index of `(i, k)`, if present.
    pub fn find_edge(&self, i: usize, k: usize) -> Option<usize> {
        let row = self.by_type.get(i)?;
        row.binary_search_by_key(&k, |&e| self.edges[e].campaign).ok().map(|pos| row[pos])
    }

    pub fn validate(&self) -> &ValidationReport {
        &self.report
    }

    pub fn is_valid(&self) -> bool {
        self.report.passed()
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(self.report.clone()))
        }
    }

    fn check(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let v = &mut report.violations;
        let n_types = self.impression_types.len();
        let n_campaigns = self.campaigns.len();

        for (i, t) in self.impression_types.iter().enumerate() {
            if !(t.supply >= 0.0 && t.supply.is_finite()) {
                v.push(Violation::NegativeSupply { impression: i, value: t.supply });
            }
            if t.landscape >= self.landscapes.len() {
                v.push(Violation::DanglingLandscape { impression: i, landscape: t.landscape });
            }
        }

        for (k, c) in self.campaigns.iter().enumerate() {
            if !(c.budget >= 0.0 && c.budget.is_finite()) {
                v.push(Violation::NegativeBudget { campaign: k, value: c.budget });
            }
            if !(c.cpc > 0.0 && c.cpc.is_finite()) {
                v.push(Violation::NonPositiveCpc { campaign: k, value: c.cpc });
            }
            if c.targets.is_empty() {
                report.warnings.push(Violation::EmptyTargetSet { campaign: k });
            }
            for (pos, &i) in c.targets.iter().enumerate() {
                if i >= n_types {
                    v.push(Violation::DanglingTarget { campaign: k, impression: i });
                } else if pos > 0 && c.targets[pos - 1] == i {
                    v.push(Violation::DuplicateTarget { campaign: k, impression: i });
                } else if self.find_edge(i, k).is_none() {
                    v.push(Violation::MissingEdge { impression: i, campaign: k });
                }
            }
        }

        for (idx, e) in self.edges.iter().enumerate() {
            let (i, k) = (e.impression, e.campaign);
            if i >= n_types || k >= n_campaigns {
                v.push(Violation::DanglingEdge { impression: i, campaign: k });
                continue;
            }
            if idx > 0 {
                let prev = &self.edges[idx - 1];
                if prev.impression == i && prev.campaign == k {
                    v.push(Violation::DuplicateEdge { impression: i, campaign: k });
                    continue;
                }
            }
            if !(0.0..=1.0).contains(&e.ctr) {
                v.push(Violation::CtrOutOfRange { impression: i, campaign: k, value: e.ctr });
            }
            if self.campaigns[k].targets.binary_search(&i).is_err() {
                v.push(Violation::EdgeNotInTargetSet { impression: i, campaign: k });
            }
            let expected = self.campaigns[k].cpc * e.ctr;
            if !((e.ecpi - expected).abs() <= ECPI_TOLERANCE * expected.abs().max(1.0)) {
                v.push(Violation::EcpiMismatch { impression: i, campaign: k, stored: e.ecpi, expected });
            }
        }
        report
    }
}

// ---------------------------------------------------------------------------
// JSON file format

/// Identifier as written in a file: a string, or an integer read as its
/// decimal string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ExternalId {
    Str(String),
    Int(i64),
}

impl From<ExternalId> for String {
    fn from(id: ExternalId) -> Self {
        match id {
            ExternalId::Str(s) => s,
            ExternalId::Int(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    impression_types: Vec<TypeDoc>,
    campaigns: Vec<CampaignDoc>,
    edges: Vec<EdgeDoc>,
    landscapes: Vec<LandscapeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeDoc {
    #[serde(deserialize_with = "de_id")]
    id: String,
    s: f64,
    #[serde(deserialize_with = "de_id")]
    landscape: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignDoc {
    #[serde(deserialize_with = "de_id")]
    id: String,
    budget: f64,
    cpc: f64,
    #[serde(deserialize_with = "de_ids")]
    targets: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    #[serde(deserialize_with = "de_id")]
    i: String,
    #[serde(deserialize_with = "de_id")]
    k: String,
    ctr: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandscapeDoc {
    #[serde(deserialize_with = "de_id")]
    id: String,
    kind: LandscapeKind,
    params: serde_json::Value,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LandscapeKind {
    BinomialMaxUniform,
    Empirical,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinomialParams {
    #[serde(rename = "M")]
    market_size: u32,
    #[serde(rename = "Q")]
    quality: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmpiricalParams {
    samples: Vec<f64>,
}

fn de_id<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    ExternalId::deserialize(d).map(String::from)
}

fn de_ids<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    Vec::<ExternalId>::deserialize(d).map(|v| v.into_iter().map(String::from).collect())
}

fn parse_err(message: String) -> Error {
    Error::Parse { what: "instance".into(), message }
}

fn index_ids<'a>(section: &str, ids: impl Iterator<Item = &'a String>) -> Result<HashMap<&'a str, usize>> {
    let mut map = HashMap::new();
    for (idx, id) in ids.enumerate() {
        if map.insert(id.as_str(), idx).is_some() {
            return Err(parse_err(format!("{section}[{idx}].id: duplicate id {id:?}")));
        }
    }
    Ok(map)
}

fn resolve(map: &HashMap<&str, usize>, id: &str, at: impl FnOnce() -> String) -> Result<usize> {
    map.get(id).copied().ok_or_else(|| parse_err(format!("{}: unknown id {id:?}", at())))
}

impl Instance {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;

        let landscape_ids = index_ids("landscapes", doc.landscapes.iter().map(|l| &l.id))?;
        let type_ids = index_ids("impression_types", doc.impression_types.iter().map(|t| &t.id))?;
        let campaign_ids = index_ids("campaigns", doc.campaigns.iter().map(|c| &c.id))?;

        let mut landscapes = Vec::with_capacity(doc.landscapes.len());
        for (idx, l) in doc.landscapes.iter().enumerate() {
            let at = |e: String| parse_err(format!("landscapes[{idx}].params: {e}"));
            let landscape = match l.kind {
                LandscapeKind::BinomialMaxUniform => {
                    let p: BinomialParams = serde_json::from_value(l.params.clone()).map_err(|e| at(e.to_string()))?;
                    Landscape::binomial_max_uniform(p.market_size, p.quality).map_err(|e| at(e.to_string()))?
                }
                LandscapeKind::Empirical => {
                    let p: EmpiricalParams = serde_json::from_value(l.params.clone()).map_err(|e| at(e.to_string()))?;
                    Landscape::empirical(&p.samples).map_err(|e| at(e.to_string()))?
                }
            };
            landscapes.push(LandscapeEntry { id: l.id.clone(), landscape });
        }

        let mut types = Vec::with_capacity(doc.impression_types.len());
        for (idx, t) in doc.impression_types.iter().enumerate() {
            let landscape = resolve(&landscape_ids, &t.landscape, || format!("impression_types[{idx}].landscape"))?;
            types.push(ImpressionType { id: t.id.clone(), supply: t.s, landscape });
        }

        let mut campaigns = Vec::with_capacity(doc.campaigns.len());
        for (idx, c) in doc.campaigns.iter().enumerate() {
            let targets = c
                .targets
                .iter()
                .enumerate()
                .map(|(j, id)| resolve(&type_ids, id, || format!("campaigns[{idx}].targets[{j}]")))
                .collect::<Result<Vec<_>>>()?;
            campaigns.push(Campaign { id: c.id.clone(), budget: c.budget, cpc: c.cpc, targets });
        }

        let mut edges = Vec::with_capacity(doc.edges.len());
        for (idx, e) in doc.edges.iter().enumerate() {
            let i = resolve(&type_ids, &e.i, || format!("edges[{idx}].i"))?;
            let k = resolve(&campaign_ids, &e.k, || format!("edges[{idx}].k"))?;
            edges.push((i, k, e.ctr));
        }

        Ok(Self::new(types, campaigns, edges, landscapes))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let landscapes = self
            .landscapes
            .iter()
            .map(|l| -> Result<LandscapeDoc> {
                let (kind, params) = match &l.landscape {
                    Landscape::BinomialMaxUniform(b) => (
                        LandscapeKind::BinomialMaxUniform,
                        serde_json::to_value(BinomialParams { market_size: b.market_size(), quality: b.quality() })?,
                    ),
                    Landscape::Empirical(e) => (
                        LandscapeKind::Empirical,
                        serde_json::to_value(EmpiricalParams { samples: e.samples().to_vec() })?,
                    ),
                };
                Ok(LandscapeDoc { id: l.id.clone(), kind, params })
            })
            .collect::<Result<Vec<_>>>()?;
        let type_id = |i: usize| self.impression_types[i].id.clone();
        let doc = InstanceDoc {
            impression_types: self
                .impression_types
                .iter()
                .map(|t| TypeDoc { id: t.id.clone(), s: t.supply, landscape: self.landscapes[t.landscape].id.clone() })
                .collect(),
            campaigns: self
                .campaigns
                .iter()
                .map(|c| CampaignDoc {
                    id: c.id.clone(),
                    budget: c.budget,
                    cpc: c.cpc,
                    targets: c.targets.iter().map(|&i| type_id(i)).collect(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc { i: type_id(e.impression), k: self.campaigns[e.campaign].id.clone(), ctr: e.ctr })
                .collect(),
            landscapes,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}
