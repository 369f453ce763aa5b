//! JSON scenario files.
//!
//! ```json
//! {"n": 3, "active_site": 1,
//!  "selection": {"s": 0.8},
//!  "mutation": {"u": [0.1, 0.1, 0.1]},
//!  "recombination": {"mode": "single_crossover", "rates": [0.5, 0.25]},
//!  "initial": {"product": [[0.7, 0.3], [0.7, 0.3], [0.7, 0.3]]},
//!  "t": 1.0}
//! ```
//!
//! Sites are 1-based. `initial` is `"uniform"`, `"delta:x1,...,xn"`,
//! `{"weights": [...]}`, `{"product": [[...], ...]}` or
//! `{"mixture": [{"weight": w, "initial": ...}, ...]}`. General recombination
//! lists `{"partition": [rgs], "rate": r}` or `{"blocks": [[1, 3], [2]], "rate": r}`.

use serde::{Deserialize, Serialize};

use crate::dynamics::PsiSpec;
use crate::error::{Error, Result};
use crate::partitions::{Partition, RecombinationRates};
use crate::recursion::{OrderingPolicy, SiteOrdering};
use crate::typespace::{SiteSet, TypeDistribution, TypeSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: usize,
    pub active_site: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationFile>,
    pub recombination: RecombinationFile,
    pub initial: InitialFile,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<OrderingFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionFile {
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationFile {
    pub u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecombinationMode {
    SingleCrossover,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecombinationFile {
    pub mode: RecombinationMode,
    pub rates: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatedPartitionFile {
    Rgs { partition: Vec<u8>, rate: f64 },
    Blocks { blocks: Vec<Vec<usize>>, rate: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialFile {
    Named(String),
    Weights { weights: Vec<f64> },
    Product { product: Vec<Vec<f64>> },
    Mixture { mixture: Vec<MixtureComponent> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub initial: InitialFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderingFile {
    Named(String),
    Sites(Vec<usize>),
}

/// A validated scenario with 0-based sites.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub space: TypeSpace,
    pub psi: PsiSpec,
    pub rates: RecombinationRates,
    pub initial: TypeDistribution,
    pub t: f64,
    pub ordering: OrderingPolicy,
}

impl Scenario {
    pub fn site_ordering(&self) -> Result<SiteOrdering> {
        SiteOrdering::from_policy(self.space.n(), self.space.active_site(), &self.ordering)
    }
}

fn at(pointer: &str, message: impl Into<String>) -> Error {
    Error::Parse { pointer: pointer.into(), message: message.into() }
}

fn relabel(pointer: &str, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => at(pointer, other.to_string()),
    }
}

/// Parses and validates a scenario; errors carry a JSON pointer.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let pointer = if path == "." { String::new() } else { format!("/{}", path.replace('[', ".").replace(']', "").replace('.', "/")) };
        at(&pointer, e.into_inner().to_string())
    })?;
    file.validate()
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<Scenario> {
        let n = self.n;
        if n == 0 || n > 16 {
            return Err(at("/n", format!("n = {n} must lie in 1..=16")));
        }
        if self.active_site == 0 || self.active_site > n {
            return Err(at("/active_site", format!("active site {} must lie in 1..={n}", self.active_site)));
        }
        let active = self.active_site - 1;
        let sizes = self.alphabet_sizes.clone().unwrap_or_else(|| vec![2; n]);
        if sizes.len() != n {
            return Err(at("/alphabet_sizes", format!("expected {n} alphabet sizes, got {}", sizes.len())));
        }
        let space = TypeSpace::new(sizes, active).map_err(|e| relabel("/alphabet_sizes", e))?;

        let s = self.selection.as_ref().map_or(0.0, |sel| sel.s);
        let (u, m) = match &self.mutation {
            None => (vec![0.0; n], vec![[0.5, 0.5]; n]),
            Some(mf) => {
                if mf.u.len() != n {
                    return Err(at("/mutation/u", format!("expected {n} rates, got {}", mf.u.len())));
                }
                let m0 = mf.m0.clone().unwrap_or_else(|| vec![0.5; n]);
                if m0.len() != n {
                    return Err(at("/mutation/m0", format!("expected {n} entries, got {}", m0.len())));
                }
                let m1 = match &mf.m1 {
                    Some(m1) => m1.clone(),
                    None => m0.iter().map(|p| 1.0 - p).collect(),
                };
                if m1.len() != n {
                    return Err(at("/mutation/m1", format!("expected {n} entries, got {}", m1.len())));
                }
                for i in 0..n {
                    if (m0[i] + m1[i] - 1.0).abs() > 1e-12 {
                        return Err(at(&format!("/mutation/m1/{i}"), format!("m0 + m1 = {} at site {}, expected 1", m0[i] + m1[i], i + 1)));
                    }
                }
                (mf.u.clone(), m0.into_iter().zip(m1).map(|(a, b)| [a, b]).collect())
            }
        };
        let pointer = if self.mutation.is_some() { "/mutation" } else { "/selection" };
        let psi = PsiSpec::new(active, s, u, m).map_err(|e| relabel(pointer, e))?;

        let rates = self.recombination_rates(n, active)?;
        let initial = build_initial(&space, &self.initial, "/initial")?;
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(at("/t", format!("horizon {} must be finite and nonnegative", self.t)));
        }
        let ordering = match &self.ordering {
            None => OrderingPolicy::Default,
            Some(OrderingFile::Named(name)) if name == "default" => OrderingPolicy::Default,
            Some(OrderingFile::Named(name)) => return Err(at("/ordering", format!("unknown ordering {name:?}"))),
            Some(OrderingFile::Sites(sites)) => {
                let zero: Vec<usize> =
                    sites.iter().map(|&i| i.checked_sub(1).ok_or_else(|| at("/ordering", "sites are 1-based"))).collect::<Result<_>>()?;
                SiteOrdering::explicit(n, active, zero.clone()).map_err(|e| relabel("/ordering", e))?;
                OrderingPolicy::Explicit(zero)
            }
        };
        Ok(Scenario { space, psi, rates, initial, t: self.t, ordering })
    }

    fn recombination_rates(&self, n: usize, active: usize) -> Result<RecombinationRates> {
        let raw = &self.recombination.rates;
        match self.recombination.mode {
            RecombinationMode::SingleCrossover => {
                let rates: Vec<f64> = serde_json::from_value(raw.clone()).map_err(|e| at("/recombination/rates", e.to_string()))?;
                if rates.len() + 1 != n {
                    return Err(at(
                        "/recombination/rates",
                        format!("single-crossover mode needs n - 1 = {} rates, got {}", n - 1, rates.len()),
                    ));
                }
                RecombinationRates::single_crossover(n, active, &rates).map_err(|e| relabel("/recombination/rates", e))
            }
            RecombinationMode::General => {
                let entries: Vec<RatedPartitionFile> =
                    serde_json::from_value(raw.clone()).map_err(|e| at("/recombination/rates", e.to_string()))?;
                let mut rates = Vec::with_capacity(entries.len());
                for (k, entry) in entries.iter().enumerate() {
                    let pointer = format!("/recombination/rates/{k}");
                    let (p, r) = match entry {
                        RatedPartitionFile::Rgs { partition, rate } => {
                            (Partition::from_rgs(partition.clone()).map_err(|e| relabel(&pointer, e))?, *rate)
                        }
                        RatedPartitionFile::Blocks { blocks, rate } => {
                            let sets = blocks
                                .iter()
                                .map(|b| SiteSet::from_one_based(b))
                                .collect::<Result<Vec<_>>>()
                                .map_err(|e| relabel(&pointer, e))?;
                            (Partition::from_blocks(n, &sets).map_err(|e| relabel(&pointer, e))?, *rate)
                        }
                    };
                    if p.n() != n {
                        return Err(at(&pointer, format!("partition covers {} sites, expected {n}", p.n())));
                    }
                    rates.push((p, r));
                }
                RecombinationRates::general(n, rates).map_err(|e| relabel("/recombination/rates", e))
            }
        }
    }
}

fn build_initial(space: &TypeSpace, init: &InitialFile, pointer: &str) -> Result<TypeDistribution> {
    let layout = space.layout();
    match init {
        InitialFile::Named(name) if name == "uniform" => Ok(TypeDistribution::uniform(layout)),
        InitialFile::Named(name) => {
            let Some(tuple) = name.strip_prefix("delta:") else {
                return Err(at(pointer, format!("unknown initial state {name:?}")));
            };
            let letters: Vec<usize> = tuple
                .split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|_| at(pointer, format!("bad letter {x:?} in {name:?}"))))
                .collect::<Result<_>>()?;
            TypeDistribution::point_mass(layout, &letters).map_err(|e| relabel(pointer, e))
        }
        InitialFile::Weights { weights } => {
            if weights.len() != space.size() {
                return Err(at(&format!("{pointer}/weights"), format!("expected {} weights, got {}", space.size(), weights.len())));
            }
            TypeDistribution::new(layout, weights.clone()).map_err(|e| relabel(&format!("{pointer}/weights"), e))
        }
        InitialFile::Product { product } => {
            let p = format!("{pointer}/product");
            if product.len() != space.n() {
                return Err(at(&p, format!("expected {} site marginals, got {}", space.n(), product.len())));
            }
            for (i, m) in product.iter().enumerate() {
                if m.len() != space.alphabet_sizes()[i] {
                    return Err(at(&format!("{p}/{i}"), format!("expected {} letters, got {}", space.alphabet_sizes()[i], m.len())));
                }
            }
            TypeDistribution::product_of_sites(product).map_err(|e| relabel(&p, e))
        }
        InitialFile::Mixture { mixture } => {
            let p = format!("{pointer}/mixture");
            if mixture.is_empty() {
                return Err(at(&p, "empty mixture"));
            }
            let mut w = vec![0.0; space.size()];
            let mut total = 0.0;
            for (k, c) in mixture.iter().enumerate() {
                if !(c.weight >= 0.0) || !c.weight.is_finite() {
                    return Err(at(&format!("{p}/{k}/weight"), format!("weight {} must be nonnegative", c.weight)));
                }
                let d = build_initial(space, &c.initial, &format!("{p}/{k}/initial"))?;
                total += c.weight;
                for (a, b) in w.iter_mut().zip(d.weights()) {
                    *a += c.weight * b;
                }
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(at(&p, format!("mixture weights sum to {total}, expected 1")));
            }
            TypeDistribution::normalized(layout, w).map_err(|e| relabel(&p, e))
        }
    }
}
