//! Vector fields for selection, mutation and recombination, and the forward
//! ODE solver.

use rand::Rng;

use crate::error::{Error, Result};
use crate::partitions::RecombinationRates;
use crate::typespace::{tv_weights, Layout, SignedMeasure, SiteSet, TypeDistribution, TypeSpace, MASS_TOLERANCE};

/// Negative coordinates down to this size are treated as integration noise.
pub const ODE_NEGATIVE_TOLERANCE: f64 = 1e-10;

/// Which sites the mutation part of ψ acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationScope {
    None,
    ActiveOnly,
    NonActiveOnly,
    All,
}

impl MutationScope {
    fn includes(self, site: usize, active: usize) -> bool {
        match self {
            MutationScope::None => false,
            MutationScope::ActiveOnly => site == active,
            MutationScope::NonActiveOnly => site != active,
            MutationScope::All => true,
        }
    }
}

/// ψ = ψ_sel + ψ_mut restricted to a [`MutationScope`]. The fit allele at the
/// active site is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiSpec {
    active: usize,
    s: f64,
    u: Vec<f64>,
    m: Vec<[f64; 2]>,
    scope: MutationScope,
}

impl PsiSpec {
    /// `u[i]` is the mutation rate at site i, `m[i] = [m_{i,0}, m_{i,1}]`.
    pub fn new(active: usize, s: f64, u: Vec<f64>, m: Vec<[f64; 2]>) -> Result<Self> {
        if u.len() != m.len() || active >= u.len() {
            return Err(Error::InvalidArgument(format!("{} mutation rates, {} target laws, active site {}", u.len(), m.len(), active + 1)));
        }
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("selection strength {s} must be finite and nonnegative")));
        }
        for (i, (&ui, mi)) in u.iter().zip(&m).enumerate() {
            if !(ui >= 0.0) || !ui.is_finite() {
                return Err(Error::InvalidArgument(format!("mutation rate {ui} at site {}", i + 1)));
            }
            if mi[0] < 0.0 || mi[1] < 0.0 || (mi[0] + mi[1] - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "mutation target law ({}, {}) at site {} must be a probability vector",
                    mi[0],
                    mi[1],
                    i + 1
                )));
            }
        }
        Ok(Self { active, s, u, m, scope: MutationScope::All })
    }

    /// ψ = 0 on `n` sites.
    pub fn zero(n: usize, active: usize) -> Self {
        Self::new(active, 0.0, vec![0.0; n], vec![[0.5, 0.5]; n]).expect("valid")
    }

    pub fn selection_only(n: usize, active: usize, s: f64) -> Result<Self> {
        Self::new(active, s, vec![0.0; n], vec![[0.5, 0.5]; n])
    }

    pub fn with_scope(mut self, scope: MutationScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn m(&self) -> &[[f64; 2]] {
        &self.m
    }

    pub fn scope(&self) -> MutationScope {
        self.scope
    }

    /// ψ• = ψ_sel + mutation at the active site only.
    pub fn bullet(&self) -> PsiSpec {
        let scope = if self.scope.includes(self.active, self.active) { MutationScope::ActiveOnly } else { MutationScope::None };
        PsiSpec { scope, ..self.clone() }
    }

    /// Sites with a mutation term in this ψ.
    pub fn mutation_sites(&self) -> SiteSet {
        (0..self.n()).filter(|&i| self.u[i] > 0.0 && self.scope.includes(i, self.active)).collect()
    }

    /// Non-active sites with a mutation term; these break the multiplicativity
    /// requirement and are handled by the mutation envelope instead.
    pub fn envelope_sites(&self) -> SiteSet {
        self.mutation_sites().difference(SiteSet::singleton(self.active))
    }

    /// Whether ψ only depends on the active site (no non-active mutation).
    pub fn satisfies_assumption(&self) -> bool {
        self.envelope_sites().is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.s == 0.0 && self.mutation_sites().is_empty()
    }

    /// Checks the alphabet restrictions of the concrete selection and mutation terms.
    pub fn check_space(&self, space: &TypeSpace) -> Result<()> {
        if space.n() != self.n() || space.active_site() != self.active {
            return Err(Error::InvalidArgument("ψ configured for a different type space".into()));
        }
        if space.alphabet_sizes()[self.active] != 2 {
            return Err(Error::Unsupported("selection needs a binary alphabet at the active site".into()));
        }
        for i in self.mutation_sites().iter() {
            if space.alphabet_sizes()[i] != 2 {
                return Err(Error::Unsupported(format!("mutation needs a binary alphabet at site {}", i + 1)));
            }
        }
        Ok(())
    }
}

fn binary_stride(layout: &Layout, site: usize) -> Result<usize> {
    match (layout.stride(site), layout.radix_of(site)) {
        (Some(st), Some(2)) => Ok(st),
        (Some(_), Some(_)) => Err(Error::Unsupported(format!("site {} is not binary", site + 1))),
        _ => Err(Error::InvalidArgument(format!("site {} not covered", site + 1))),
    }
}

/// Pairs `(x with letter 0 at the site, same x with letter 1)`.
fn for_each_pair(len: usize, stride: usize, mut f: impl FnMut(usize, usize)) {
    let block = 2 * stride;
    for base in (0..len).step_by(block) {
        for j in base..base + stride {
            f(j, j + stride);
        }
    }
}

/// `out += s (F w − f(w) w)` with `f(w)` the frequency of allele 0 at `active`.
pub(crate) fn add_selection(layout: &Layout, w: &[f64], s: f64, active: usize, out: &mut [f64]) -> Result<()> {
    let st = binary_stride(layout, active)?;
    if s == 0.0 {
        return Ok(());
    }
    let mut f = 0.0;
    for_each_pair(w.len(), st, |i0, _| f += w[i0]);
    for_each_pair(w.len(), st, |i0, i1| {
        out[i0] += s * (w[i0] - f * w[i0]);
        out[i1] += s * (-f * w[i1]);
    });
    Ok(())
}

/// `out += u (M_i w − w)`.
pub(crate) fn add_site_mutation(layout: &Layout, w: &[f64], u: f64, m: [f64; 2], site: usize, out: &mut [f64]) -> Result<()> {
    let st = binary_stride(layout, site)?;
    if u == 0.0 {
        return Ok(());
    }
    for_each_pair(w.len(), st, |i0, i1| {
        let tot = w[i0] + w[i1];
        out[i0] += u * (m[0] * tot - w[i0]);
        out[i1] += u * (m[1] * tot - w[i1]);
    });
    Ok(())
}

/// `out += c M_i w`.
pub(crate) fn add_site_mutation_matrix(layout: &Layout, w: &[f64], c: f64, m: [f64; 2], site: usize, out: &mut [f64]) -> Result<()> {
    let st = binary_stride(layout, site)?;
    for_each_pair(w.len(), st, |i0, i1| {
        let tot = w[i0] + w[i1];
        out[i0] += c * m[0] * tot;
        out[i1] += c * m[1] * tot;
    });
    Ok(())
}

/// Applies `M_i` in place.
pub(crate) fn apply_site_mutation_matrix(layout: &Layout, w: &mut [f64], m: [f64; 2], site: usize) -> Result<()> {
    let st = binary_stride(layout, site)?;
    let len = w.len();
    let mut pairs = Vec::with_capacity(len / 2);
    for_each_pair(len, st, |i0, i1| pairs.push((i0, i1)));
    for (i0, i1) in pairs {
        let tot = w[i0] + w[i1];
        w[i0] = m[0] * tot;
        w[i1] = m[1] * tot;
    }
    Ok(())
}

/// ψ_sel(ν) = s(Fν − f(ν)ν).
pub fn psi_sel_apply(nu: &TypeDistribution, s: f64, active: usize) -> Result<SignedMeasure> {
    let mut out = vec![0.0; nu.weights().len()];
    add_selection(nu.layout(), nu.weights(), s, active, &mut out)?;
    SignedMeasure::new(nu.layout().clone(), out)
}

/// Σ_{i} u_i(M_i ν − ν) over the sites of `psi` selected by `scope`.
pub fn psi_mut_apply(nu: &TypeDistribution, psi: &PsiSpec, scope: MutationScope) -> Result<SignedMeasure> {
    let mut out = vec![0.0; nu.weights().len()];
    for i in 0..psi.n() {
        if scope.includes(i, psi.active) && psi.u[i] > 0.0 {
            add_site_mutation(nu.layout(), nu.weights(), psi.u[i], psi.m[i], i, &mut out)?;
        }
    }
    SignedMeasure::new(nu.layout().clone(), out)
}

/// A recombination term prepared for repeated evaluation on one layout.
#[derive(Clone, Debug)]
struct RecoTerm {
    rate: f64,
    /// Per block: projection map and marginal length.
    blocks: Vec<(Vec<usize>, usize)>,
}

/// `Σ_𝒜 ϱ_𝒜 (R_𝒜 − id)` on a fixed layout.
#[derive(Clone, Debug)]
pub struct Recombination {
    terms: Vec<RecoTerm>,
}

impl Recombination {
    pub fn new(layout: &Layout, rates: &RecombinationRates) -> Self {
        let n = layout.sites().last().map_or(0, |m| m + 1);
        let terms = rates
            .rated_partitions(n)
            .into_iter()
            .filter(|(p, _)| !p.is_trivial())
            .map(|(p, rate)| RecoTerm {
                rate,
                blocks: p.blocks().iter().map(|&b| (layout.projection(b), layout.restrict(b).len())).collect(),
            })
            .collect();
        Self { terms }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `out += Σ ϱ_𝒜 (R_𝒜(w) − w)`.
    pub fn add_to(&self, w: &[f64], out: &mut [f64]) {
        let mut margs: Vec<Vec<f64>> = Vec::new();
        for term in &self.terms {
            margs.clear();
            for (proj, len) in &term.blocks {
                let mut m = vec![0.0; *len];
                for (x, &j) in w.iter().zip(proj) {
                    m[j] += x;
                }
                margs.push(m);
            }
            for (x, o) in out.iter_mut().enumerate() {
                let mut r = 1.0;
                for ((proj, _), m) in term.blocks.iter().zip(&margs) {
                    r *= m[proj[x]];
                }
                *o += term.rate * (r - w[x]);
            }
        }
    }
}

/// Right-hand side `ψ(ν) + Σ ϱ_𝒜 (R_𝒜(ν) − ν)` on raw weights.
#[derive(Clone, Debug)]
pub struct PsiRecoField {
    layout: Layout,
    psi: PsiSpec,
    reco: Recombination,
}

impl PsiRecoField {
    pub fn new(space: &TypeSpace, psi: &PsiSpec, rates: &RecombinationRates) -> Result<Self> {
        psi.check_space(space)?;
        let layout = space.layout();
        Ok(Self { reco: Recombination::new(&layout, rates), layout, psi: psi.clone() })
    }

    pub fn eval(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let psi = &self.psi;
        add_selection(&self.layout, w, psi.s, psi.active, out).expect("checked");
        for i in psi.mutation_sites().iter() {
            add_site_mutation(&self.layout, w, psi.u[i], psi.m[i], i, out).expect("checked");
        }
        self.reco.add_to(w, out);
    }

    /// Largest rate scale, used for the default step size.
    pub fn rate_scale(&self) -> f64 {
        let umax = self.psi.mutation_sites().iter().map(|i| self.psi.u[i]).fold(0.0, f64::max);
        self.psi.s + umax + self.reco.terms.iter().map(|t| t.rate).sum::<f64>()
    }
}

pub fn rhs_eval(space: &TypeSpace, nu: &TypeDistribution, psi: &PsiSpec, rates: &RecombinationRates) -> Result<SignedMeasure> {
    if nu.sites() != space.all_sites() {
        return Err(Error::IncompatibleSupports);
    }
    let field = PsiRecoField::new(space, psi, rates)?;
    let mut out = vec![0.0; nu.weights().len()];
    field.eval(nu.weights(), &mut out);
    SignedMeasure::new(space.layout(), out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OdeMethod {
    /// Classical Runge–Kutta; `None` picks `min(0.01, 0.1 / rate scale)`.
    Rk4 { step: Option<f64> },
    /// Dormand–Prince 5(4) with error control.
    Dopri5 { rtol: f64, atol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeConfig {
    pub method: OdeMethod,
    /// Divide by the mass after every step when it drifts beyond 1e-12.
    pub renormalize: bool,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { method: OdeMethod::Rk4 { step: None }, renormalize: true }
    }
}

impl OdeConfig {
    pub fn rk4(step: f64) -> Self {
        Self { method: OdeMethod::Rk4 { step: Some(step) }, renormalize: true }
    }

    pub fn dopri5(rtol: f64, atol: f64) -> Self {
        Self { method: OdeMethod::Dopri5 { rtol, atol }, renormalize: true }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.method {
            OdeMethod::Rk4 { step } => step.is_none_or(|h| h > 0.0 && h.is_finite()),
            OdeMethod::Dopri5 { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad ODE configuration {self:?}")))
        }
    }
}

/// Bookkeeping from one integration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    /// Smallest coordinate seen after any step, before clamping.
    pub min_coordinate: f64,
    pub max_mass_drift: f64,
    pub renormalizations: usize,
}

pub fn default_rk4_step(rate_scale: f64) -> f64 {
    if rate_scale > 0.0 {
        (0.1 / rate_scale).min(0.01)
    } else {
        0.01
    }
}

fn post_step(y: &mut [f64], renormalize: bool, stats: &mut OdeStats) {
    stats.steps += 1;
    let mass: f64 = y.iter().sum();
    let drift = (mass - 1.0).abs();
    stats.max_mass_drift = stats.max_mass_drift.max(drift);
    if renormalize && drift > MASS_TOLERANCE && mass > 0.0 {
        y.iter_mut().for_each(|v| *v /= mass);
        stats.renormalizations += 1;
        log::debug!("renormalized mass drift {drift:e}");
    }
    stats.min_coordinate = y.iter().fold(stats.min_coordinate, |m, &v| m.min(v));
}

/// Integrates `y' = f(y)` and returns the state at each of the ascending
/// `times` (starting from time 0). Intended for probability vectors, hence
/// the optional renormalization.
pub fn integrate<F>(y0: &[f64], times: &[f64], f: F, cfg: &OdeConfig, rate_scale: f64) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: Fn(&[f64], &mut [f64]),
{
    cfg.validate()?;
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("output times must be finite, nonnegative and ascending".into()));
    }
    let mut stats = OdeStats { min_coordinate: y0.iter().fold(f64::INFINITY, |m, &v| m.min(v)), ..Default::default() };
    let mut y = y0.to_vec();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut dopri_h = None;
    for &target in times {
        match cfg.method {
            OdeMethod::Rk4 { step } => {
                let h_max = step.unwrap_or_else(|| default_rk4_step(rate_scale));
                rk4_segment(&mut y, target - now, h_max, &f, cfg.renormalize, &mut stats);
            }
            OdeMethod::Dopri5 { rtol, atol } => {
                dopri_segment(&mut y, now, target, &mut dopri_h, rtol, atol, &f, cfg.renormalize, &mut stats)?;
            }
        }
        now = target;
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn rk4_segment<F: Fn(&[f64], &mut [f64])>(y: &mut [f64], span: f64, h_max: f64, f: &F, renorm: bool, stats: &mut OdeStats) {
    if span <= 0.0 {
        return;
    }
    let steps = (span / h_max).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let n = y.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..steps {
        f(y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        post_step(y, renorm, stats);
    }
}

// Dormand–Prince tableau.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

#[allow(clippy::too_many_arguments)]
fn dopri_segment<F: Fn(&[f64], &mut [f64])>(
    y: &mut [f64],
    start: f64,
    end: f64,
    h_state: &mut Option<f64>,
    rtol: f64,
    atol: f64,
    f: &F,
    renorm: bool,
    stats: &mut OdeStats,
) -> Result<()> {
    let n = y.len();
    let mut t = start;
    let mut h = h_state.unwrap_or(((end - start) / 100.0).clamp(1e-6, 0.1));
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    while t < end {
        let last = h >= end - t;
        let hh = if last { end - t } else { h };
        f(y, &mut k[0]);
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in DP_A[stage][..stage].iter().enumerate() {
                    acc += hh * a * k[j][i];
                }
                tmp[i] = acc;
            }
            f(&tmp, &mut k[stage]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut acc = y[i];
            let mut e = 0.0;
            for j in 0..7 {
                acc += hh * DP_B[j] * k[j][i];
                e += hh * DP_E[j] * k[j][i];
            }
            y5[i] = acc;
            let sc = atol + rtol * y[i].abs().max(acc.abs());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 {
            t = if last { end } else { t + hh };
            y.copy_from_slice(&y5);
            post_step(y, renorm, stats);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                h = hh * fac;
            }
        } else {
            stats.rejected += 1;
            h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h < 1e-14 * end.abs().max(1.0) {
            return Err(Error::StiffnessError { t, h });
        }
    }
    *h_state = Some(h);
    Ok(())
}

fn to_distribution(layout: Layout, w: Vec<f64>) -> Result<TypeDistribution> {
    TypeDistribution::with_tolerance(layout, w, ODE_NEGATIVE_TOLERANCE, 1e-9)
}

/// Solution of the ψ-recombination equation at each of the given times.
pub fn ode_trajectory(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    times: &[f64],
    psi: &PsiSpec,
    rates: &RecombinationRates,
    cfg: &OdeConfig,
) -> Result<(Vec<TypeDistribution>, OdeStats)> {
    if omega0.sites() != space.all_sites() || omega0.layout() != &space.layout() {
        return Err(Error::IncompatibleSupports);
    }
    let field = PsiRecoField::new(space, psi, rates)?;
    let (states, stats) = integrate(omega0.weights(), times, |w, out| field.eval(w, out), cfg, field.rate_scale())?;
    if stats.min_coordinate < -ODE_NEGATIVE_TOLERANCE {
        log::warn!("ODE trajectory dipped to {:e}", stats.min_coordinate);
    }
    let dists = states.into_iter().map(|w| to_distribution(space.layout(), w)).collect::<Result<Vec<_>>>()?;
    Ok((dists, stats))
}

pub fn ode_solve(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    psi: &PsiSpec,
    rates: &RecombinationRates,
    cfg: &OdeConfig,
) -> Result<TypeDistribution> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {t} must be nonnegative")));
    }
    let (mut v, _) = ode_trajectory(space, omega0, &[t], psi, rates, cfg)?;
    Ok(v.pop().expect("one time"))
}

/// CSV with a `t` column followed by one column per state.
pub fn trajectory_csv(times: &[f64], states: &[TypeDistribution]) -> String {
    let mut out = String::from("t");
    if let Some(first) = states.first() {
        for i in 0..first.weights().len() {
            out.push_str(&format!(",w{i}"));
        }
    }
    out.push('\n');
    for (t, d) in times.iter().zip(states) {
        out.push_str(&format!("{t:.16e}"));
        for w in d.weights() {
            out.push_str(&format!(",{w:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// A deterministic evolution map `(ν, t) ↦ Ψ_t(ν)` for ψ alone.
pub trait Flow: Send + Sync {
    fn apply(&self, nu: &TypeDistribution, t: f64) -> Result<TypeDistribution>;
}

/// Ψ⁽⁰⁾ by ODE integration of `ν' = ψ(ν)`.
#[derive(Clone, Debug)]
pub struct OdeFlow {
    space: TypeSpace,
    psi: PsiSpec,
    cfg: OdeConfig,
}

impl OdeFlow {
    pub fn new(space: TypeSpace, psi: PsiSpec, cfg: OdeConfig) -> Result<Self> {
        psi.check_space(&space)?;
        Ok(Self { space, psi, cfg })
    }
}

impl Flow for OdeFlow {
    fn apply(&self, nu: &TypeDistribution, t: f64) -> Result<TypeDistribution> {
        if t == 0.0 {
            return Ok(nu.clone());
        }
        ode_solve(&self.space, nu, t, &self.psi, &RecombinationRates::none(), &self.cfg)
    }
}

/// Worst-case defects of the two structural requirements on ψ (or on a
/// duality function), measured in total variation.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct AssumptionReport {
    pub multiplicativity: f64,
    pub linearity: f64,
}

impl AssumptionReport {
    pub fn max_defect(&self) -> f64 {
        self.multiplicativity.max(self.linearity)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_defect() <= tol
    }
}

fn signed_tv(a: &SignedMeasure, b: &SignedMeasure) -> f64 {
    tv_weights(a.layout(), a.weights(), b.layout(), b.weights()).unwrap_or(f64::INFINITY)
}

/// Random `(C, D)` split of the sites with `active ∈ C` and `D` nonempty.
pub(crate) fn random_split<R: Rng + ?Sized>(n: usize, active: usize, rng: &mut R) -> Option<(SiteSet, SiteSet)> {
    if n < 2 {
        return None;
    }
    loop {
        let d: SiteSet = (0..n).filter(|&i| i != active && rng.random::<bool>()).collect();
        if !d.is_empty() {
            return Some((SiteSet::full(n).difference(d), d));
        }
    }
}

/// A second random distribution whose active-site marginal equals `mu`'s.
pub(crate) fn matching_active_marginal<R: Rng + ?Sized>(mu: &TypeDistribution, active: usize, rng: &mut R) -> TypeDistribution {
    let layout = mu.layout().clone();
    let other = TypeDistribution::random(layout.clone(), rng);
    let target = mu.marginal(SiteSet::singleton(active));
    let have = other.marginal(SiteSet::singleton(active));
    let proj = layout.projection(SiteSet::singleton(active));
    let w: Vec<f64> = other.weights().iter().zip(&proj).map(|(&x, &j)| x * target.weights()[j] / have.weights()[j]).collect();
    TypeDistribution::normalized(layout, w).expect("positive mass")
}

/// Generic check of the multiplicativity and linearity requirements for a
/// measure-valued map `g` on distributions over all sites.
pub fn assumption_check_map<G, R>(space: &TypeSpace, trials: usize, rng: &mut R, mut g: G) -> Result<AssumptionReport>
where
    G: FnMut(&TypeDistribution) -> Result<SignedMeasure>,
    R: Rng + ?Sized,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is needed".into()));
    }
    let n = space.n();
    let active = space.active_site();
    let mut report = AssumptionReport::default();
    for _ in 0..trials {
        if let Some((c, d)) = random_split(n, active, rng) {
            let nu_c = TypeDistribution::random(space.sub_layout(c), rng);
            let nu_d = TypeDistribution::random(space.sub_layout(d), rng);
            let nu = crate::typespace::product_assemble(&[&nu_c, &nu_d])?;
            let lhs = g(&nu)?;
            let rhs = SignedMeasure::product(&[&lhs.marginal(c), &nu_d.to_signed()])?;
            report.multiplicativity = report.multiplicativity.max(signed_tv(&lhs, &rhs));
        }
        let mu = TypeDistribution::random(space.layout(), rng);
        let mu2 = matching_active_marginal(&mu, active, rng);
        let alpha: f64 = rng.random();
        let mix_w: Vec<f64> = mu.weights().iter().zip(mu2.weights()).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let mix = TypeDistribution::normalized(space.layout(), mix_w)?;
        let lhs = g(&mix)?;
        let mut rhs = g(&mu)?;
        rhs.scale(alpha);
        rhs.add_scaled(1.0 - alpha, &g(&mu2)?)?;
        report.linearity = report.linearity.max(signed_tv(&lhs, &rhs));
    }
    Ok(report)
}

/// Defects of ψ with respect to multiplicativity over `{C, D}` splits and
/// linearity over mixtures with equal active marginal.
pub fn assumption_psi_check<R: Rng + ?Sized>(space: &TypeSpace, psi: &PsiSpec, trials: usize, rng: &mut R) -> Result<AssumptionReport> {
    let field = PsiRecoField::new(space, psi, &RecombinationRates::none())?;
    assumption_check_map(space, trials, rng, |nu| {
        let mut out = vec![0.0; nu.weights().len()];
        field.eval(nu.weights(), &mut out);
        SignedMeasure::new(nu.layout().clone(), out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::Partition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn selection_examples() {
        let s1 = TypeSpace::binary(1, 0).unwrap();
        let half = TypeDistribution::uniform(s1.layout());
        let out = psi_sel_apply(&half, 2.0, 0).unwrap();
        assert_eq!(out.weights(), &[0.5, -0.5]);
        let fit = TypeDistribution::point_mass(s1.layout(), &[0]).unwrap();
        assert_eq!(psi_sel_apply(&fit, 2.0, 0).unwrap().max_abs(), 0.0);
        let unfit = TypeDistribution::point_mass(s1.layout(), &[1]).unwrap();
        assert_eq!(psi_sel_apply(&unfit, 2.0, 0).unwrap().max_abs(), 0.0);
        let s3 = TypeSpace::new(vec![3, 2], 0).unwrap();
        let u = TypeDistribution::uniform(s3.layout());
        assert!(matches!(psi_sel_apply(&u, 1.0, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn mutation_examples() {
        let space = TypeSpace::binary(3, 0).unwrap();
        let m = vec![[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]];
        let psi = PsiSpec::new(0, 0.0, vec![0.2, 0.5, 1.0], m.clone()).unwrap();
        let stat = TypeDistribution::product_of_sites(&m.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap();
        assert!(psi_mut_apply(&stat, &psi, MutationScope::All).unwrap().max_abs() < 1e-16);
        let psi0 = PsiSpec::zero(3, 0);
        let r = TypeDistribution::random(space.layout(), &mut rng());
        assert_eq!(psi_mut_apply(&r, &psi0, MutationScope::All).unwrap().max_abs(), 0.0);

        let s1 = TypeSpace::binary(1, 0).unwrap();
        let d0 = TypeDistribution::point_mass(s1.layout(), &[0]).unwrap();
        let psi = PsiSpec::new(0, 0.0, vec![1.0], vec![[0.0, 1.0]]).unwrap();
        assert_eq!(psi_mut_apply(&d0, &psi, MutationScope::All).unwrap().weights(), &[-1.0, 1.0]);
    }

    #[test]
    fn rhs_examples() {
        let space = TypeSpace::binary(3, 1).unwrap();
        let psi = PsiSpec::new(1, 0.7, vec![0.1, 0.2, 0.3], vec![[0.5, 0.5]; 3]).unwrap();
        let nu = TypeDistribution::random(space.layout(), &mut rng());
        let none = rhs_eval(&space, &nu, &psi, &RecombinationRates::none()).unwrap();
        let sel = psi_sel_apply(&nu, 0.7, 1).unwrap();
        let mut expect = psi_mut_apply(&nu, &psi, MutationScope::All).unwrap();
        expect.add_scaled(1.0, &sel).unwrap();
        assert!(signed_tv(&none, &expect) < 1e-15);

        let rates = RecombinationRates::single_crossover(3, 1, &[0.4, 0.9]).unwrap();
        let prod = nu.recombine(&[SiteSet::singleton(0), SiteSet::singleton(1), SiteSet::singleton(2)]).unwrap();
        let zero = rhs_eval(&space, &prod, &PsiSpec::zero(3, 1), &rates).unwrap();
        assert!(zero.max_abs() < 1e-16);

        let full = rhs_eval(&space, &nu, &psi, &rates).unwrap();
        assert!(full.mass().abs() < 1e-13);
    }

    #[test]
    fn ld_decay_two_sites() {
        let space = TypeSpace::binary(2, 0).unwrap();
        let omega0 = TypeDistribution::new(space.layout(), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let rates = RecombinationRates::single_crossover(2, 0, &[1.0]).unwrap();
        let times: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
        let (traj, stats) = ode_trajectory(&space, &omega0, &times, &PsiSpec::zero(2, 0), &rates, &OdeConfig::default()).unwrap();
        for (t, w) in times.iter().zip(&traj) {
            let ld = w.weights()[0] - w.marginal(SiteSet::singleton(0)).weights()[0] * w.marginal(SiteSet::singleton(1)).weights()[0];
            assert!((ld - 0.25 * (-t).exp()).abs() <= 1e-8, "t={t} ld={ld}");
        }
        assert!(stats.min_coordinate >= -1e-10);
    }

    #[test]
    fn logistic_selection() {
        let space = TypeSpace::binary(1, 0).unwrap();
        let omega0 = TypeDistribution::uniform(space.layout());
        let psi = PsiSpec::selection_only(1, 0, 1.3).unwrap();
        for cfg in [OdeConfig::default(), OdeConfig::dopri5(1e-12, 1e-14)] {
            for t in [0.3, 1.0, 4.0] {
                let w = ode_solve(&space, &omega0, t, &psi, &RecombinationRates::none(), &cfg).unwrap();
                let e = (1.3f64 * t).exp();
                assert!((w.weights()[0] - 0.5 * e / (0.5 + 0.5 * e)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rk4_order() {
        let space = TypeSpace::binary(3, 0).unwrap();
        let psi = PsiSpec::new(0, 1.5, vec![0.3, 0.4, 0.2], vec![[0.3, 0.7]; 3]).unwrap();
        let rates = RecombinationRates::single_crossover(3, 0, &[1.0, 2.0]).unwrap();
        let omega0 = TypeDistribution::random(space.layout(), &mut rng());
        let solve = |h: f64| ode_solve(&space, &omega0, 2.0, &psi, &rates, &OdeConfig::rk4(h)).unwrap();
        let hs = [0.2, 0.1, 0.05, 0.025];
        let sols: Vec<_> = hs.iter().map(|&h| solve(h)).collect();
        let d1 = crate::typespace::tv_distance(&sols[0], &sols[1]).unwrap();
        let d2 = crate::typespace::tv_distance(&sols[1], &sols[2]).unwrap();
        let d3 = crate::typespace::tv_distance(&sols[2], &sols[3]).unwrap();
        let order = ((d1 / d2).log2() + (d2 / d3).log2()) / 2.0;
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn head_only_identity() {
        // ψ•(R_𝒜 ν) = ψ•(ν)_{A•} ⊗ ⊗_{tail} ν_A
        let mut r = rng();
        for n in 2..=4 {
            for active in 0..n {
                let space = TypeSpace::binary(n, active).unwrap();
                let psi = PsiSpec::new(active, 0.9, vec![0.4; n], vec![[0.2, 0.8]; n]).unwrap().bullet();
                for p in crate::partitions::enumerate_partitions(n).unwrap() {
                    let nu = TypeDistribution::random(space.layout(), &mut r);
                    let rec = nu.recombine(p.blocks()).unwrap();
                    let lhs = rhs_eval(&space, &rec, &psi, &RecombinationRates::none()).unwrap();
                    let full = rhs_eval(&space, &nu, &psi, &RecombinationRates::none()).unwrap();
                    let (head, tail) = p.head_tail(active);
                    let mut factors = vec![full.marginal(head)];
                    factors.extend(tail.iter().map(|&b| nu.marginal(b).to_signed()));
                    let refs: Vec<&SignedMeasure> = factors.iter().collect();
                    let rhs = SignedMeasure::product(&refs).unwrap();
                    assert!(signed_tv(&lhs, &rhs) < 1e-12, "{:?}", p.rgs());
                }
            }
        }
    }

    #[test]
    fn assumption_check_examples() {
        let space = TypeSpace::binary(4, 1).unwrap();
        let psi = PsiSpec::new(1, 0.8, vec![0.1, 0.3, 0.2, 0.4], vec![[0.3, 0.7]; 4]).unwrap();
        let good = assumption_psi_check(&space, &psi.bullet(), 50, &mut rng()).unwrap();
        assert!(good.max_defect() <= 1e-12, "{good:?}");
        let bad = assumption_psi_check(&space, &psi, 50, &mut rng()).unwrap();
        assert!(bad.multiplicativity > 1e-3, "{bad:?}");
        let zero = assumption_psi_check(&space, &PsiSpec::zero(4, 1), 10, &mut rng()).unwrap();
        assert_eq!(zero.max_defect(), 0.0);
    }

    #[test]
    fn general_rates_and_trivial_partition() {
        let space = TypeSpace::binary(3, 0).unwrap();
        let p = Partition::from_rgs(vec![0, 1, 0]).unwrap();
        let rates = RecombinationRates::general(3, vec![(p, 1.0), (Partition::trivial(3), 2.0)]).unwrap();
        let nu = TypeDistribution::random(space.layout(), &mut rng());
        let out = rhs_eval(&space, &nu, &PsiSpec::zero(3, 0), &rates).unwrap();
        let only = RecombinationRates::general(3, vec![(Partition::from_rgs(vec![0, 1, 0]).unwrap(), 1.0)]).unwrap();
        let expect = rhs_eval(&space, &nu, &PsiSpec::zero(3, 0), &only).unwrap();
        assert!(signed_tv(&out, &expect) < 1e-16);
    }
}
