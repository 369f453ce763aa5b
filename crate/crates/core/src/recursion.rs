//! The single-crossover recursion over a site ordering, evaluated by
//! composite Simpson quadrature on a uniform time grid.

use crate::closedform::BulletFlow;
use crate::dynamics::{integrate, OdeConfig, PsiRecoField, PsiSpec};
use crate::error::{Error, Result};
use crate::partitions::{precedes, split_pair, RecombinationRates};
use crate::typespace::{tv_distance, Layout, TypeDistribution, TypeSpace};

/// Largest grid tried by [`recursion_convergence`].
pub const MAX_GRID: usize = 1 << 14;

/// Sites `i⁽⁰⁾ = i•, i⁽¹⁾, …, i⁽ⁿ⁻¹⁾`, non-decreasing in the active-site order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteOrdering {
    sites: Vec<usize>,
    active: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderingPolicy {
    /// Sites by distance from the active site, right side first on ties.
    Default,
    /// 0-based sites, starting with the active site.
    Explicit(Vec<usize>),
}

impl SiteOrdering {
    pub fn default_for(n: usize, active: usize) -> Result<Self> {
        if active >= n {
            return Err(Error::InvalidArgument("active site out of range".into()));
        }
        let mut sites: Vec<usize> = (0..n).collect();
        sites.sort_by_key(|&i| (i.abs_diff(active), i < active));
        Ok(Self { sites, active })
    }

    pub fn explicit(n: usize, active: usize, sites: Vec<usize>) -> Result<Self> {
        let shown = || sites.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",");
        if sites.len() != n || sites.first() != Some(&active) {
            return Err(Error::NotMonotoneOrdering(format!(
                "{} must list all {n} sites starting with the active site {}",
                shown(),
                active + 1
            )));
        }
        let mut seen = vec![false; n];
        for &i in &sites {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::NotMonotoneOrdering(format!("{} is not a permutation", shown())));
            }
        }
        for (k, &a) in sites.iter().enumerate() {
            for &b in &sites[k + 1..] {
                if precedes(b, a, active) {
                    return Err(Error::NotMonotoneOrdering(format!("{}: site {} precedes site {} but comes later", shown(), b + 1, a + 1)));
                }
            }
        }
        Ok(Self { sites, active })
    }

    pub fn from_policy(n: usize, active: usize, policy: &OrderingPolicy) -> Result<Self> {
        match policy {
            OrderingPolicy::Default => Self::default_for(n, active),
            OrderingPolicy::Explicit(s) => Self::explicit(n, active, s.clone()),
        }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn active(&self) -> usize {
        self.active
    }
}

/// How the level-0 flow (ψ alone) is evaluated on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaseFlow {
    /// The normalized matrix exponential; needs ψ = ψ•.
    Bullet,
    /// ODE integration of `ν' = ψ(ν)`.
    Ode(OdeConfig),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecursionConfig {
    /// Number of grid intervals; must be even.
    pub grid: usize,
    pub base: BaseFlow,
    /// Run even when ψ violates the multiplicativity requirement.
    pub override_assumption: bool,
}

impl Default for RecursionConfig {
    fn default() -> Self {
        Self { grid: 512, base: BaseFlow::Bullet, override_assumption: false }
    }
}

#[allow(clippy::too_many_arguments)]
fn check_inputs(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    psi: &PsiSpec,
    rates: &RecombinationRates,
    ordering: &SiteOrdering,
    k: usize,
    cfg: &RecursionConfig,
) -> Result<()> {
    let n = space.n();
    if omega0.layout() != &space.layout() {
        return Err(Error::IncompatibleSupports);
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon {t} must be finite and nonnegative")));
    }
    if cfg.grid < 2 || cfg.grid % 2 == 1 {
        return Err(Error::InvalidGrid(format!("grid size {} must be even and at least 2", cfg.grid)));
    }
    if k >= n {
        return Err(Error::InvalidArgument(format!("truncation level {k} exceeds {}", n - 1)));
    }
    if !rates.is_single_crossover() && !rates.rated_partitions(n).is_empty() {
        return Err(Error::Unsupported("the recursion needs single-crossover rates".into()));
    }
    if ordering.sites.len() != n || ordering.active != space.active_site() {
        return Err(Error::InvalidArgument("ordering does not match the type space".into()));
    }
    if !psi.satisfies_assumption() && !cfg.override_assumption {
        return Err(Error::AssumptionViolated(
            "ψ mutates non-active sites; use the ψ• part with the mutation envelope or pass the override".into(),
        ));
    }
    if cfg.base == BaseFlow::Bullet && !psi.satisfies_assumption() {
        return Err(Error::Unsupported("the matrix-exponential base flow only covers ψ•".into()));
    }
    Ok(())
}

/// Level-0 values at the grid nodes.
fn base_grid(space: &TypeSpace, omega0: &TypeDistribution, t: f64, psi: &PsiSpec, cfg: &RecursionConfig) -> Result<Vec<Vec<f64>>> {
    let g = cfg.grid;
    match cfg.base {
        BaseFlow::Bullet => BulletFlow::from_psi(space, psi)?.grid(omega0, t, g),
        BaseFlow::Ode(ode) => {
            let field = PsiRecoField::new(space, psi, &RecombinationRates::none())?;
            let times: Vec<f64> = (0..=g).map(|j| t * j as f64 / g as f64).collect();
            let (states, _) = integrate(omega0.weights(), &times, |w, o| field.eval(w, o), &ode, field.rate_scale())?;
            Ok(states)
        }
    }
}

/// Marginal weights on `keep` for each grid node.
fn marginals(layout: &Layout, nodes: &[Vec<f64>], keep: crate::typespace::SiteSet) -> (Vec<usize>, usize, Vec<Vec<f64>>) {
    let proj = layout.projection(keep);
    let len = layout.restrict(keep).len();
    let out = nodes
        .iter()
        .map(|w| {
            let mut m = vec![0.0; len];
            for (x, &j) in w.iter().zip(&proj) {
                m[j] += x;
            }
            m
        })
        .collect();
    (proj, len, out)
}

/// One recursion level: from `ω⁽ᵏ⁻¹⁾` at all nodes to `ω⁽ᵏ⁾` at all nodes.
fn level_step(layout: &Layout, prev: &[Vec<f64>], t: f64, rate: f64, site: usize, active: usize, n: usize) -> Vec<Vec<f64>> {
    if rate == 0.0 {
        return prev.to_vec();
    }
    let g = prev.len() - 1;
    let h = t / g as f64;
    let (c, d) = split_pair(site, active, n).expect("valid split");
    let (proj_c, _, marg_c) = marginals(layout, prev, c);
    let (proj_d, len_d, marg_d) = marginals(layout, prev, d);
    // Integrand ϱ e^{−ϱτ} ω_D(τ) at the nodes.
    let f: Vec<Vec<f64>> = marg_d
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let wgt = rate * (-rate * h * j as f64).exp();
            m.iter().map(|x| wgt * x).collect()
        })
        .collect();
    // Cumulative Simpson: even nodes by panels over [τ_{j−2}, τ_j], odd nodes
    // by the one-interval rule h/12 (5 f_{j−1} + 8 f_j − f_{j+1}).
    let mut integral = vec![vec![0.0; len_d]; g + 1];
    for j in 1..=g {
        let (done, rest) = integral.split_at_mut(j);
        let cur = &mut rest[0];
        if j % 2 == 0 {
            let base = &done[j - 2];
            for x in 0..len_d {
                cur[x] = base[x] + h / 3.0 * (f[j - 2][x] + 4.0 * f[j - 1][x] + f[j][x]);
            }
        } else {
            let base = &done[j - 1];
            for x in 0..len_d {
                cur[x] = base[x] + h / 12.0 * (5.0 * f[j - 1][x] + 8.0 * f[j][x] - f[j + 1][x]);
            }
        }
    }
    prev.iter()
        .enumerate()
        .map(|(j, w)| {
            let decay = (-rate * h * j as f64).exp();
            w.iter().enumerate().map(|(x, &v)| decay * v + marg_c[j][proj_c[x]] * integral[j][proj_d[x]]).collect()
        })
        .collect()
}

/// `ω⁽ᵏ⁾_t`: the recursion truncated after the first `k` sites of `ordering`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_solve_levels(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    psi: &PsiSpec,
    rates: &RecombinationRates,
    ordering: &SiteOrdering,
    k: usize,
    cfg: &RecursionConfig,
) -> Result<TypeDistribution> {
    check_inputs(space, omega0, t, psi, rates, ordering, k, cfg)?;
    let layout = space.layout();
    let mut nodes = base_grid(space, omega0, t, psi, cfg)?;
    for level in 1..=k {
        let site = ordering.sites[level];
        nodes = level_step(&layout, &nodes, t, rates.site_rate(site), site, space.active_site(), space.n());
        let drift = (nodes[cfg.grid].iter().sum::<f64>() - 1.0).abs();
        if drift > 1e-9 {
            log::warn!("recursion level {level} drifted from unit mass by {drift:e}");
        }
    }
    let last = nodes.swap_remove(cfg.grid);
    TypeDistribution::from_measure(layout, last, 1e-10)
}

/// `truncated_solve_levels` with the flow choice taken from `cfg`; the full
/// solution of the ψ-recombination equation is level `n − 1`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_solve(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    psi: &PsiSpec,
    rates: &RecombinationRates,
    ordering: &SiteOrdering,
    k: usize,
    cfg: &RecursionConfig,
) -> Result<TypeDistribution> {
    truncated_solve_levels(space, omega0, t, psi, rates, ordering, k, cfg)
}

/// Result of grid doubling.
#[derive(Clone, Debug)]
pub struct Converged {
    pub value: TypeDistribution,
    /// TV distance between the last two grids.
    pub estimate: f64,
    pub grid: usize,
}

/// Doubles the grid from `cfg.grid` until consecutive results are within
/// `tol` in total variation.
#[allow(clippy::too_many_arguments)]
pub fn recursion_convergence(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    psi: &PsiSpec,
    rates: &RecombinationRates,
    ordering: &SiteOrdering,
    k: usize,
    cfg: &RecursionConfig,
    tol: f64,
) -> Result<Converged> {
    let mut cfg = *cfg;
    let mut prev = truncated_solve(space, omega0, t, psi, rates, ordering, k, &cfg)?;
    let mut estimate = f64::INFINITY;
    while cfg.grid * 2 <= MAX_GRID {
        cfg.grid *= 2;
        let next = truncated_solve(space, omega0, t, psi, rates, ordering, k, &cfg)?;
        estimate = tv_distance(&prev, &next)?;
        if estimate <= tol {
            return Ok(Converged { value: next, estimate, grid: cfg.grid });
        }
        prev = next;
    }
    Err(Error::QuadratureError { estimate, grid: cfg.grid })
}
