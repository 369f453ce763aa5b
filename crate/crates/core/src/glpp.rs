//! Pathwise simulation of the labelled partitioning process and Monte Carlo
//! estimation of the forward solution through its duality function.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::{assumption_h_check, exp_time, LabelProcess};
use crate::montecarlo::{replicate_rng, run_replicates, MCEstimate};
use crate::partitions::{LabelledPartition, Partition, RecombinationRates};
use crate::typespace::{product_assemble, SiteSet, TypeDistribution, TypeSpace};

/// Defect above which a label process is refused for estimation.
pub const H_ASSUMPTION_TOLERANCE: f64 = 1e-8;

/// One applied transition: the time, the block hit (1-based sites) and the
/// partition drawn.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlppEvent {
    pub t: f64,
    pub block: Vec<usize>,
    #[serde(rename = "B")]
    pub partition: Partition,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GlppMode {
    /// Every event is drawn, silent ones included.
    #[default]
    Faithful,
    /// Only events that change the state are drawn.
    Thinned,
}

#[derive(Clone, Debug)]
pub struct GlppState<S> {
    pub labelled: LabelledPartition<S>,
    pub clock: f64,
    pub events: Option<Vec<GlppEvent>>,
}

/// The jump-chain simulator for fixed recombination rates.
#[derive(Clone, Debug)]
pub struct Glpp {
    n: usize,
    active: usize,
    rated: Vec<(Partition, f64)>,
    total: f64,
    mode: GlppMode,
}

impl Glpp {
    pub fn new(n: usize, active: usize, rates: &RecombinationRates) -> Result<Self> {
        if active >= n {
            return Err(Error::InvalidArgument("active site out of range".into()));
        }
        let rated = rates.rated_partitions(n);
        if rated.iter().any(|(p, _)| p.n() != n) {
            return Err(Error::InvalidPartition(format!("rates are not on {n} sites")));
        }
        let total = rated.iter().map(|(_, r)| r).sum();
        Ok(Self { n, active, rated, total, mode: GlppMode::Faithful })
    }

    pub fn with_mode(mut self, mode: GlppMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn active(&self) -> usize {
        self.active
    }

    fn silent(&self, a: SiteSet, b: &Partition) -> bool {
        a.is_subset(b.block_of(self.active))
    }

    fn live_rate(&self, a: SiteSet) -> f64 {
        self.rated.iter().filter(|(b, _)| !self.silent(a, b)).map(|(_, r)| r).sum()
    }

    /// Picks an index with probability proportional to `weights`.
    fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
        let total: f64 = weights.clone().sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for (k, w) in weights.enumerate() {
            if w > 0.0 {
                last = k;
                if u < w {
                    return k;
                }
                u -= w;
            }
        }
        last
    }

    /// Runs the process from `initial` over `[0, t]`. Labels are advanced
    /// only between their creation and the horizon.
    pub fn simulate<P, R>(
        &self,
        initial: &LabelledPartition<P::State>,
        t: f64,
        process: &P,
        log_events: bool,
        rng: &mut R,
    ) -> Result<GlppState<P::State>>
    where
        P: LabelProcess,
        R: Rng + ?Sized,
    {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon {t} must be finite and nonnegative")));
        }
        if initial.partition().n() != self.n {
            return Err(Error::InvalidPartition("initial state is on a different site set".into()));
        }
        let mut lp = LabelledPartition::new(initial.partition().clone(), initial.labels().iter().map(|y| (y.clone(), 0.0)).collect())?;
        let mut events = log_events.then(Vec::new);
        let mut now = 0.0;
        loop {
            let blocks = lp.partition().blocks().to_vec();
            let live: Option<Vec<f64>> = match self.mode {
                GlppMode::Faithful => None,
                GlppMode::Thinned => Some(blocks.iter().map(|&a| self.live_rate(a)).collect()),
            };
            let rate = match &live {
                None => self.total * blocks.len() as f64,
                Some(live) => live.iter().sum(),
            };
            let dt = exp_time(rate, rng);
            if now + dt > t {
                break;
            }
            now += dt;
            let (block, partition) = match live {
                None => {
                    let k = Self::pick(self.rated.iter().map(|(_, r)| *r), rng);
                    let a = blocks[rng.random_range(0..blocks.len())];
                    (a, &self.rated[k].0)
                }
                Some(live) => {
                    let a = blocks[Self::pick(live.iter().copied(), rng)];
                    let k = Self::pick(self.rated.iter().map(|(b, r)| if self.silent(a, b) { 0.0 } else { *r }), rng);
                    (a, &self.rated[k].0)
                }
            };
            if let Some(log) = events.as_mut() {
                log.push(GlppEvent { t: now, block: block.to_one_based(), partition: partition.clone() });
            }
            lp = lp.boxwedge(block, partition, (process.empty(), now), self.active)?;
        }
        let labels = lp.labels().iter().map(|(y, born)| process.step(y, t - born, rng)).collect::<Result<Vec<_>>>()?;
        Ok(GlppState { labelled: LabelledPartition::new(lp.partition().clone(), labels)?, clock: t, events })
    }
}

/// Free-function form of [`Glpp::simulate`] in faithful mode.
pub fn glpp_simulate<P, R>(
    initial: &LabelledPartition<P::State>,
    t: f64,
    active: usize,
    rates: &RecombinationRates,
    process: &P,
    rng: &mut R,
) -> Result<GlppState<P::State>>
where
    P: LabelProcess,
    R: Rng + ?Sized,
{
    Glpp::new(initial.partition().n(), active, rates)?.simulate(initial, t, process, true, rng)
}

/// `H(𝒜, v; ν) = ⊗_A h(ν, v_A)_A`.
pub fn duality_h<P: LabelProcess>(lp: &LabelledPartition<P::State>, nu: &TypeDistribution, process: &P) -> Result<TypeDistribution> {
    if nu.sites() != SiteSet::full(lp.partition().n()) {
        return Err(Error::IncompatibleSupports);
    }
    if lp.partition().num_blocks() == 1 {
        return process.dual_h(nu, &lp.labels()[0]);
    }
    let factors = lp.iter().map(|(a, y)| Ok(process.dual_h(nu, y)?.marginal(a))).collect::<Result<Vec<_>>>()?;
    product_assemble(&factors.iter().collect::<Vec<_>>())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityConfig {
    pub replicates: u64,
    pub seed: u64,
    pub mode: GlppMode,
    /// Skip the check of the duality function's structural requirements.
    pub override_assumption: bool,
}

impl DualityConfig {
    pub fn new(replicates: u64, seed: u64) -> Self {
        Self { replicates, seed, mode: GlppMode::Faithful, override_assumption: false }
    }
}

/// Mean of `H(Σ_t, ω₀)` over replicates started from `({S}, ∅)`.
pub fn duality_estimate<P: LabelProcess>(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    rates: &RecombinationRates,
    process: &P,
    cfg: &DualityConfig,
) -> Result<MCEstimate> {
    duality_estimate_with(space, omega0, t, rates, process, cfg, Ok)
}

/// [`duality_estimate`] with a linear map applied to each replicate's value.
pub fn duality_estimate_with<P, G>(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    rates: &RecombinationRates,
    process: &P,
    cfg: &DualityConfig,
    post: G,
) -> Result<MCEstimate>
where
    P: LabelProcess,
    G: Fn(TypeDistribution) -> Result<TypeDistribution> + Sync,
{
    if omega0.layout() != &space.layout() {
        return Err(Error::IncompatibleSupports);
    }
    let glpp = Glpp::new(space.n(), space.active_site(), rates)?.with_mode(cfg.mode);
    if !cfg.override_assumption && rates.total() > 0.0 {
        let mut rng = replicate_rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, u64::MAX);
        let report = assumption_h_check(space, process, t.max(1e-3), 20, &mut rng)?;
        if report.max_defect() > H_ASSUMPTION_TOLERANCE {
            return Err(Error::AssumptionViolated(format!(
                "duality function defect {:.3e} exceeds {H_ASSUMPTION_TOLERANCE:e}",
                report.max_defect()
            )));
        }
    }
    let start = LabelledPartition::trivial(space.n(), process.empty());
    let moments = run_replicates(cfg.replicates, cfg.seed, space.size(), |_, rng, out| {
        let state = glpp.simulate(&start, t, process, false, rng)?;
        let h = post(duality_h(&state.labelled, omega0, process)?)?;
        out.copy_from_slice(h.weights());
        Ok(())
    })?;
    MCEstimate::from_moments(space.layout(), &moments, cfg.seed)
}

/// The event log of replicate 0, reproducing the path used in estimation.
pub fn glpp_event_log<P: LabelProcess>(
    space: &TypeSpace,
    t: f64,
    rates: &RecombinationRates,
    process: &P,
    cfg: &DualityConfig,
) -> Result<GlppState<P::State>> {
    let glpp = Glpp::new(space.n(), space.active_site(), rates)?.with_mode(cfg.mode);
    let start = LabelledPartition::trivial(space.n(), process.empty());
    glpp.simulate(&start, t, process, true, &mut replicate_rng(cfg.seed, 0))
}
