//! Label processes carried by the blocks of a partitioning process, their
//! duality functions, and the per-site processes with initiation and
//! resetting.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{assumption_check_map, AssumptionReport, Flow};
use crate::error::{Error, Result};
use crate::typespace::{condition_on_active, product_assemble, SiteSet, TypeDistribution, TypeSpace};

/// Cap on the Yule line count.
pub const YULE_CAP: u64 = 1_000_000;

/// Draws an `Exp(rate)` holding time; infinite for a zero rate.
pub(crate) fn exp_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        Exp::new(rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}

/// A Markov label process with an empty state and a duality function `h`.
pub trait LabelProcess: Sync {
    type State: Clone + Debug + Send + Sync;

    /// The state `∅` with `h(ν, ∅) = ν`.
    fn empty(&self) -> Self::State;

    /// Simulates the process for `dt` time units.
    fn step<R: Rng + ?Sized>(&self, state: &Self::State, dt: f64, rng: &mut R) -> Result<Self::State>;

    /// `h(ν, y)`.
    fn dual_h(&self, nu: &TypeDistribution, state: &Self::State) -> Result<TypeDistribution>;

    fn describe(&self, state: &Self::State) -> LabelState;
}

/// Serializable view of any label state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelState {
    Clock { t: f64 },
    Yule { k: u64 },
    Flags { v: Vec<Option<u8>> },
    Delta,
}

/// `Y_t = Y_0 + t` with `h(ν, y) = Ψ_y(ν)` for a deterministic flow Ψ.
#[derive(Clone, Debug)]
pub struct ClockProcess<F> {
    flow: F,
}

impl<F: Flow> ClockProcess<F> {
    pub fn new(flow: F) -> Self {
        Self { flow }
    }

    pub fn flow(&self) -> &F {
        &self.flow
    }
}

impl<F: Flow> LabelProcess for ClockProcess<F> {
    type State = f64;

    fn empty(&self) -> f64 {
        0.0
    }

    fn step<R: Rng + ?Sized>(&self, state: &f64, dt: f64, _rng: &mut R) -> Result<f64> {
        Ok(state + dt)
    }

    fn dual_h(&self, nu: &TypeDistribution, state: &f64) -> Result<TypeDistribution> {
        self.flow.apply(nu, *state)
    }

    fn describe(&self, state: &f64) -> LabelState {
        LabelState::Clock { t: *state }
    }
}

/// Pure-birth line counting with branching rate `s`, dual to selection.
#[derive(Clone, Debug)]
pub struct YuleProcess {
    s: f64,
    active: usize,
}

impl YuleProcess {
    pub fn new(s: f64, active: usize) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("branching rate {s} must be finite and nonnegative")));
        }
        Ok(Self { s, active })
    }
}

impl LabelProcess for YuleProcess {
    type State = u64;

    fn empty(&self) -> u64 {
        1
    }

    fn step<R: Rng + ?Sized>(&self, state: &u64, dt: f64, rng: &mut R) -> Result<u64> {
        let mut k = *state;
        let mut left = dt;
        loop {
            let hold = exp_time(self.s * k as f64, rng);
            if hold >= left {
                return Ok(k);
            }
            left -= hold;
            k += 1;
            if k > YULE_CAP {
                return Err(Error::YuleOverflow { cap: YULE_CAP });
            }
        }
    }

    /// `(1 − f)^k d + (1 − (1 − f)^k) b` with `f` the fit frequency and
    /// `b`, `d` the laws conditioned on fit and unfit.
    fn dual_h(&self, nu: &TypeDistribution, k: &u64) -> Result<TypeDistribution> {
        let split = condition_on_active(nu, self.active)?;
        let (Some(b), Some(d)) = (&split.fit, &split.unfit) else {
            return Ok(nu.clone());
        };
        let q = (1.0 - split.fit_frequency).powf(*k as f64);
        let w = b.weights().iter().zip(d.weights()).map(|(bx, dx)| q * dx + (1.0 - q) * bx).collect();
        TypeDistribution::with_tolerance(nu.layout().clone(), w, 1e-15, 1e-12)
    }

    fn describe(&self, k: &u64) -> LabelState {
        LabelState::Yule { k: *k }
    }
}

/// Per-site flags in `{0, 1, ∘}`: site `i` leaves `∘` at rate `u_i` and is
/// absorbed in letter 0 or 1 with probabilities `m_i`.
#[derive(Clone, Debug)]
pub struct MutationFlagProcess {
    u: Vec<f64>,
    m: Vec<[f64; 2]>,
}

impl MutationFlagProcess {
    pub fn new(u: Vec<f64>, m: Vec<[f64; 2]>) -> Result<Self> {
        if u.len() != m.len() {
            return Err(Error::InvalidArgument("rates and target laws differ in length".into()));
        }
        if u.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("mutation rates must be finite and nonnegative".into()));
        }
        Ok(Self { u, m })
    }
}

impl LabelProcess for MutationFlagProcess {
    type State = Vec<Option<u8>>;

    fn empty(&self) -> Self::State {
        vec![None; self.u.len()]
    }

    fn step<R: Rng + ?Sized>(&self, state: &Self::State, dt: f64, rng: &mut R) -> Result<Self::State> {
        let mut out = state.clone();
        for (i, flag) in out.iter_mut().enumerate() {
            if flag.is_none() && self.u[i] > 0.0 {
                let p = -(-self.u[i] * dt).exp_m1();
                if rng.random::<f64>() < p {
                    *flag = Some(if rng.random::<f64>() < self.m[i][0] { 0 } else { 1 });
                }
            }
        }
        Ok(out)
    }

    /// `ν_B ⊗ δ_y` with `B` the unflagged sites and `y` the flagged letters.
    fn dual_h(&self, nu: &TypeDistribution, flags: &Self::State) -> Result<TypeDistribution> {
        let flagged: SiteSet = flags.iter().enumerate().filter(|(_, f)| f.is_some()).map(|(i, _)| i).collect();
        let flagged = flagged.intersection(nu.sites());
        if flagged.is_empty() {
            return Ok(nu.clone());
        }
        let rest = nu.marginal(nu.sites().difference(flagged));
        let layout = nu.layout().restrict(flagged);
        let letters: Vec<usize> = flagged.iter().map(|i| flags[i].unwrap() as usize).collect();
        let point = TypeDistribution::point_mass(layout, &letters)?;
        product_assemble(&[&rest, &point])
    }

    fn describe(&self, flags: &Self::State) -> LabelState {
        LabelState::Flags { v: flags.clone() }
    }
}

/// Value of a site process: a label or the extra symbol `Δ`.
#[derive(Clone, Debug, PartialEq)]
pub enum SiteValue<S> {
    Delta,
    Label(S),
}

/// The process `Y_i` at a non-active site: from `Δ` it starts at `∅` at rate
/// `ϱ_i`; from a label it evolves like the label process and is reset to `∅`
/// at rate `r_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteProcessState<S> {
    pub value: SiteValue<S>,
    pub site: usize,
    pub reset_rate: f64,
    pub initiation_rate: f64,
}

/// Exact event-driven simulation of a site process over `dt`.
pub fn site_process_step<P: LabelProcess, R: Rng + ?Sized>(
    process: &P,
    sp: &SiteProcessState<P::State>,
    dt: f64,
    rng: &mut R,
) -> Result<SiteProcessState<P::State>> {
    let mut left = dt;
    let mut state = match &sp.value {
        SiteValue::Delta => {
            let start = exp_time(sp.initiation_rate, rng);
            if start >= left {
                return Ok(sp.clone());
            }
            left -= start;
            process.empty()
        }
        SiteValue::Label(y) => y.clone(),
    };
    loop {
        let reset = exp_time(sp.reset_rate, rng);
        if reset >= left {
            state = process.step(&state, left, rng)?;
            break;
        }
        left -= reset;
        state = process.empty();
    }
    Ok(SiteProcessState { value: SiteValue::Label(state), ..sp.clone() })
}

/// Defects of `h(·, y)` against the multiplicativity and linearity
/// requirements, maximized over `trials` states drawn by running the process
/// from `∅` for a uniform time in `[0, horizon]`.
pub fn assumption_h_check<P: LabelProcess, R: Rng + ?Sized>(
    space: &TypeSpace,
    process: &P,
    horizon: f64,
    trials: usize,
    rng: &mut R,
) -> Result<AssumptionReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is needed".into()));
    }
    let mut report = AssumptionReport::default();
    for _ in 0..trials {
        let dt = horizon * rng.random::<f64>();
        let y = process.step(&process.empty(), dt, rng)?;
        let r = assumption_check_map(space, 1, rng, |nu| Ok(process.dual_h(nu, &y)?.to_signed()))?;
        report.multiplicativity = report.multiplicativity.max(r.multiplicativity);
        report.linearity = report.linearity.max(r.linearity);
    }
    Ok(report)
}

/// [`assumption_h_check`] at one fixed state.
pub fn assumption_h_check_at<P: LabelProcess, R: Rng + ?Sized>(
    space: &TypeSpace,
    process: &P,
    state: &P::State,
    trials: usize,
    rng: &mut R,
) -> Result<AssumptionReport> {
    assumption_check_map(space, trials, rng, |nu| Ok(process.dual_h(nu, state)?.to_signed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::BulletFlow;
    use crate::dynamics::PsiSpec;
    use crate::typespace::tv_distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(21)
    }

    #[test]
    fn empty_state_is_identity() {
        let space = TypeSpace::binary(3, 1).unwrap();
        let nu = TypeDistribution::random(space.layout(), &mut rng());
        let clock = ClockProcess::new(BulletFlow::new(&space, 0.8, 0.2, [0.5, 0.5]).unwrap());
        assert_eq!(clock.dual_h(&nu, &clock.empty()).unwrap(), nu);
        let yule = YuleProcess::new(0.8, 1).unwrap();
        assert!(tv_distance(&yule.dual_h(&nu, &yule.empty()).unwrap(), &nu).unwrap() < 1e-15);
        let flags = MutationFlagProcess::new(vec![0.1; 3], vec![[0.5, 0.5]; 3]).unwrap();
        assert_eq!(flags.dual_h(&nu, &flags.empty()).unwrap(), nu);
        let mut r = rng();
        assert_eq!(yule.step(&3, 0.0, &mut r).unwrap(), 3);
        assert_eq!(flags.step(&flags.empty(), 0.0, &mut r).unwrap(), flags.empty());
    }

    #[test]
    fn clock_semigroup() {
        let space = TypeSpace::binary(1, 0).unwrap();
        let clock = ClockProcess::new(BulletFlow::new(&space, 1.4, 0.0, [0.5, 0.5]).unwrap());
        let nu = TypeDistribution::uniform(space.layout());
        let e = (1.4f64 * 0.7).exp();
        let h = clock.dual_h(&nu, &0.7).unwrap();
        assert!((h.weights()[0] - 0.5 * e / (0.5 + 0.5 * e)).abs() < 1e-12);
        let twice = clock.dual_h(&clock.dual_h(&nu, &0.3).unwrap(), &0.4).unwrap();
        assert!(tv_distance(&twice, &h).unwrap() < 1e-9);
    }

    #[test]
    fn yule_h_examples() {
        let space = TypeSpace::binary(2, 0).unwrap();
        let nu = TypeDistribution::new(space.layout(), vec![0.25, 0.5, 0.25, 0.0]).unwrap();
        let yule = YuleProcess::new(1.0, 0).unwrap();
        let split = condition_on_active(&nu, 0).unwrap();
        let (b, d) = (split.fit.unwrap(), split.unfit.unwrap());
        let h2 = yule.dual_h(&nu, &2).unwrap();
        for x in 0..4 {
            assert!((h2.weights()[x] - (0.25 * d.weights()[x] + 0.75 * b.weights()[x])).abs() < 1e-15);
        }
        let all_fit = TypeDistribution::new(space.layout(), vec![0.5, 0.0, 0.5, 0.0]).unwrap();
        assert_eq!(yule.dual_h(&all_fit, &7).unwrap(), all_fit);
    }

    #[test]
    fn flag_h_examples() {
        let space = TypeSpace::binary(2, 0).unwrap();
        let nu = TypeDistribution::random(space.layout(), &mut rng());
        let p = MutationFlagProcess::new(vec![1.0; 2], vec![[0.5, 0.5]; 2]).unwrap();
        let h = p.dual_h(&nu, &vec![None, Some(1)]).unwrap();
        let m1 = nu.marginal(SiteSet::singleton(0));
        let want = [0.0, 0.0, m1.weights()[0], m1.weights()[1]];
        assert!(h.weights().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        let h = p.dual_h(&nu, &vec![Some(1), Some(0)]).unwrap();
        assert!(h.weights().iter().zip([0.0, 1.0, 0.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn yule_mean() {
        let yule = YuleProcess::new(0.7, 0).unwrap();
        let mut r = rng();
        let t = 1.5;
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| yule.step(&1, t, &mut r).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - (0.7f64 * t).exp()).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn yule_overflow() {
        let yule = YuleProcess::new(50.0, 0).unwrap();
        assert!(matches!(yule.step(&1, 1.0, &mut rng()), Err(Error::YuleOverflow { .. })));
    }

    #[test]
    fn flag_holding_time() {
        let p = MutationFlagProcess::new(vec![0.6, 1.2], vec![[0.5, 0.5]; 2]).unwrap();
        let mut r = rng();
        let n = 100_000;
        let t = 0.8;
        let still = (0..n).filter(|_| p.step(&p.empty(), t, &mut r).unwrap()[1].is_none()).count();
        let q = (-1.2f64 * t).exp();
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((still as f64 / n as f64 - q).abs() <= 3.0 * se);
    }

    #[test]
    fn site_process_degenerate_rates() {
        let yule = YuleProcess::new(0.5, 0).unwrap();
        let sp = SiteProcessState { value: SiteValue::Label(1u64), site: 1, reset_rate: 0.0, initiation_rate: 0.0 };
        let mut a = ChaCha8Rng::seed_from_u64(8);
        let mut b = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let x = site_process_step(&yule, &sp, 1.0, &mut a).unwrap();
            let y = yule.step(&1, 1.0, &mut b).unwrap();
            // With no resets the site process draws one infinite holding time
            // without touching the stream, so paths coincide.
            assert_eq!(x.value, SiteValue::Label(y));
        }
        let delta = SiteProcessState { value: SiteValue::<u64>::Delta, site: 1, reset_rate: 1.0, initiation_rate: 0.0 };
        assert_eq!(site_process_step(&yule, &delta, 5.0, &mut a).unwrap().value, SiteValue::Delta);
    }

    #[test]
    fn assumption_h_examples() {
        let space = TypeSpace::binary(3, 1).unwrap();
        let mut r = rng();
        let yule = YuleProcess::new(1.0, 1).unwrap();
        assert!(assumption_h_check(&space, &yule, 2.0, 30, &mut r).unwrap().max_defect() <= 1e-10);
        let psi = PsiSpec::new(1, 0.8, vec![0.0, 0.3, 0.0], vec![[0.4, 0.6]; 3]).unwrap();
        let clock = ClockProcess::new(BulletFlow::from_psi(&space, &psi).unwrap());
        assert!(assumption_h_check(&space, &clock, 2.0, 30, &mut r).unwrap().max_defect() <= 1e-8);
        let flags = MutationFlagProcess::new(vec![0.3; 3], vec![[0.5, 0.5]; 3]).unwrap();
        let bad = assumption_h_check_at(&space, &flags, &vec![None, None, Some(1)], 30, &mut r).unwrap();
        assert!(bad.multiplicativity > 0.01, "{bad:?}");
    }

    #[test]
    fn label_state_json() {
        let s = serde_json::to_string(&LabelState::Clock { t: 1.5 }).unwrap();
        assert_eq!(s, r#"{"kind":"clock","t":1.5}"#);
        let s = serde_json::to_string(&LabelState::Flags { v: vec![None, Some(1)] }).unwrap();
        assert_eq!(s, r#"{"kind":"flags","v":[null,1]}"#);
        assert_eq!(serde_json::to_string(&LabelState::Delta).unwrap(), r#"{"kind":"delta"}"#);
        let y: LabelState = serde_json::from_str(r#"{"kind":"yule","k":3}"#).unwrap();
        assert_eq!(y, LabelState::Yule { k: 3 });
    }
}
