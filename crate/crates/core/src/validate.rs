//! Runs the solution routes on one scenario and compares them pairwise.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::ancestry::aig_estimate;
use crate::closedform::{psi_envelope, smr_solve, BulletFlow};
use crate::dynamics::{assumption_psi_check, ode_solve, AssumptionReport, OdeConfig};
use crate::error::{Error, Result};
use crate::glpp::{duality_estimate_with, DualityConfig};
use crate::labels::ClockProcess;
use crate::montecarlo::{replicate_rng, MCEstimate};
use crate::recursion::{truncated_solve, BaseFlow, RecursionConfig};
use crate::scenario::Scenario;
use crate::typespace::{tv_distance, DistributionRecord, TypeDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Ode,
    Recursion,
    #[serde(rename = "closedform")]
    ClosedForm,
    Glpp,
    Aig,
}

impl Route {
    pub const ALL: [Route; 5] = [Route::Ode, Route::Recursion, Route::ClosedForm, Route::Glpp, Route::Aig];

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Route::Glpp | Route::Aig)
    }

    pub fn name(self) -> &'static str {
        match self {
            Route::Ode => "ode",
            Route::Recursion => "recursion",
            Route::ClosedForm => "closedform",
            Route::Glpp => "glpp",
            Route::Aig => "aig",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Route::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown route {s:?}; expected one of ode, recursion, closedform, glpp, aig")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// TV bound between two deterministic routes.
    pub deterministic: f64,
    /// Floor of the TV bound when a Monte Carlo route is involved.
    pub mc_floor: f64,
    /// Multiple of the (combined) standard error.
    pub mc_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { deterministic: 1e-5, mc_floor: 0.01, mc_sigmas: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidateConfig {
    pub routes: Vec<Route>,
    /// Routes whose skip counts as a failure.
    pub required: Vec<Route>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub replicates: u64,
    pub grid: usize,
    pub ode: OdeConfig,
    /// Solve ψ• by recursion and apply the mutation envelope afterwards;
    /// when false the recursion runs on ψ itself.
    pub envelope: bool,
    pub override_assumption: bool,
    pub timings: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            routes: Route::ALL.to_vec(),
            required: Vec::new(),
            tolerances: Tolerances::default(),
            seed: 0,
            replicates: 100_000,
            grid: 512,
            ode: OdeConfig::default(),
            envelope: true,
            override_assumption: false,
            timings: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RouteStatus {
    Ok {
        distribution: DistributionRecord,
        #[serde(skip_serializing_if = "Option::is_none")]
        stderr: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        replicates: Option<u64>,
    },
    Skipped {
        reason: String,
    },
    Failed {
        error: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteReport {
    pub route: Route,
    #[serde(flatten)]
    pub status: RouteStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairComparison {
    pub a: Route,
    pub b: Route,
    pub tv: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionSummary {
    pub psi: AssumptionReport,
    pub psi_bullet: AssumptionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub active_site: usize,
    pub t: f64,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub routes: Vec<RouteReport>,
    pub pairs: Vec<PairComparison>,
    pub assumption: AssumptionSummary,
    pub pass: bool,
}

impl ValidationReport {
    pub fn route(&self, r: Route) -> Option<&RouteReport> {
        self.routes.iter().find(|x| x.route == r)
    }

    pub fn pair(&self, a: Route, b: Route) -> Option<&PairComparison> {
        self.pairs.iter().find(|p| (p.a, p.b) == (a, b) || (p.a, p.b) == (b, a))
    }
}

struct RouteValue {
    dist: TypeDistribution,
    mc: Option<MCEstimate>,
}

fn deterministic(dist: TypeDistribution) -> RouteValue {
    RouteValue { dist, mc: None }
}

fn run_route(sc: &Scenario, route: Route, cfg: &ValidateConfig) -> Result<RouteValue> {
    let (space, psi, rates, omega0, t) = (&sc.space, &sc.psi, &sc.rates, &sc.initial, sc.t);
    match route {
        Route::Ode => Ok(deterministic(ode_solve(space, omega0, t, psi, rates, &cfg.ode)?)),
        Route::Recursion => {
            let ordering = sc.site_ordering()?;
            let rcfg = RecursionConfig { grid: cfg.grid, base: BaseFlow::Ode(cfg.ode), override_assumption: cfg.override_assumption };
            if cfg.envelope {
                let bullet = truncated_solve(space, omega0, t, &psi.bullet(), rates, &ordering, space.n() - 1, &rcfg)?;
                Ok(deterministic(psi_envelope(&bullet, t, psi)?))
            } else {
                Ok(deterministic(truncated_solve(space, omega0, t, psi, rates, &ordering, space.n() - 1, &rcfg)?))
            }
        }
        Route::ClosedForm => {
            let ordering = sc.site_ordering()?;
            Ok(deterministic(smr_solve(space, omega0, t, psi, rates, &ordering, cfg.grid)?))
        }
        Route::Glpp => {
            let clock = ClockProcess::new(BulletFlow::from_psi(space, psi)?);
            let dcfg = DualityConfig { override_assumption: cfg.override_assumption, ..DualityConfig::new(cfg.replicates, cfg.seed) };
            let est = duality_estimate_with(space, omega0, t, rates, &clock, &dcfg, |h| psi_envelope(&h, t, psi))?;
            Ok(RouteValue { dist: est.mean.clone(), mc: Some(est) })
        }
        Route::Aig => {
            let est = aig_estimate(space, omega0, t, psi, rates, cfg.replicates, cfg.seed)?;
            Ok(RouteValue { dist: est.mean.clone(), mc: Some(est) })
        }
    }
}

fn is_skip(e: &Error) -> bool {
    matches!(e, Error::Unsupported(_) | Error::AssumptionViolated(_))
}

/// Tolerance for comparing two routes.
pub fn pair_tolerance(tol: &Tolerances, a: Option<&MCEstimate>, b: Option<&MCEstimate>) -> f64 {
    let combined = match (a, b) {
        (None, None) => return tol.deterministic,
        (Some(x), None) | (None, Some(x)) => x.max_stderr(),
        (Some(x), Some(y)) => x.stderr.iter().zip(&y.stderr).map(|(p, q)| p.hypot(*q)).fold(0.0, f64::max),
    };
    tol.mc_floor.max(tol.mc_sigmas * combined)
}

pub fn run_validate(sc: &Scenario, cfg: &ValidateConfig) -> Result<ValidationReport> {
    let mut routes = cfg.routes.clone();
    routes.sort();
    routes.dedup();
    let results: Vec<(Route, Result<RouteValue>, f64)> = routes
        .par_iter()
        .map(|&r| {
            let start = Instant::now();
            let value = run_route(sc, r, cfg);
            (r, value, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut reports = Vec::new();
    let mut values: Vec<(Route, RouteValue)> = Vec::new();
    let mut pass = true;
    for (route, value, secs) in results {
        let seconds = cfg.timings.then_some(secs);
        let status = match value {
            Ok(v) => {
                let status = RouteStatus::Ok {
                    distribution: DistributionRecord::from(&v.dist),
                    stderr: v.mc.as_ref().map(|m| m.stderr.clone()),
                    replicates: v.mc.as_ref().map(|m| m.replicates),
                };
                values.push((route, v));
                status
            }
            Err(e) if is_skip(&e) => {
                if cfg.required.contains(&route) {
                    pass = false;
                }
                RouteStatus::Skipped { reason: e.to_string() }
            }
            Err(e) => {
                pass = false;
                RouteStatus::Failed { error: e.to_string() }
            }
        };
        reports.push(RouteReport { route, status, seconds });
    }

    let mut pairs = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let (ra, va) = &values[i];
            let (rb, vb) = &values[j];
            let tv = tv_distance(&va.dist, &vb.dist)?;
            let tolerance = pair_tolerance(&cfg.tolerances, va.mc.as_ref(), vb.mc.as_ref());
            let ok = tv <= tolerance;
            pass &= ok;
            pairs.push(PairComparison { a: *ra, b: *rb, tv, tolerance, pass: ok });
        }
    }

    let mut rng = replicate_rng(cfg.seed, u64::MAX - 1);
    let assumption = if sc.psi.check_space(&sc.space).is_ok() {
        AssumptionSummary {
            psi: assumption_psi_check(&sc.space, &sc.psi, 50, &mut rng)?,
            psi_bullet: assumption_psi_check(&sc.space, &sc.psi.bullet(), 50, &mut rng)?,
        }
    } else {
        AssumptionSummary { psi: AssumptionReport::default(), psi_bullet: AssumptionReport::default() }
    };

    Ok(ValidationReport {
        n: sc.space.n(),
        active_site: sc.space.active_site() + 1,
        t: sc.t,
        seed: cfg.seed,
        tolerances: cfg.tolerances,
        routes: reports,
        pairs,
        assumption,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn scenario(extra: &str, rec: &str) -> Scenario {
        parse_scenario(&format!(
            r#"{{"n":3,"active_site":1,{extra}"recombination":{rec},"initial":{{"product":[[0.7,0.3],[0.6,0.4],[0.5,0.5]]}},"t":1.0}}"#
        ))
        .unwrap()
    }

    fn quick() -> ValidateConfig {
        ValidateConfig { replicates: 20_000, grid: 128, ..ValidateConfig::default() }
    }

    #[test]
    fn route_names() {
        for r in Route::ALL {
            assert_eq!(r.name().parse::<Route>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{r}\""));
        }
        assert!("magic".parse::<Route>().is_err());
    }

    #[test]
    fn logistic_all_routes() {
        let sc = scenario(r#""selection":{"s":1.2},"#, r#"{"mode":"single_crossover","rates":[0.0,0.0]}"#);
        let cfg = ValidateConfig { tolerances: Tolerances { deterministic: 1e-8, ..Tolerances::default() }, ..quick() };
        let report = run_validate(&sc, &cfg).unwrap();
        assert!(report.pass, "{report:#?}");
        assert_eq!(report.pairs.len(), 10);
        let f0 = 0.7;
        let e = (1.2f64).exp();
        let want = f0 * e / (1.0 - f0 + f0 * e);
        let RouteStatus::Ok { distribution, .. } = &report.route(Route::ClosedForm).unwrap().status else { panic!() };
        let fit: f64 = distribution.weights.iter().step_by(2).sum();
        assert!((fit - want).abs() < 1e-12);
        assert!(report.pair(Route::Ode, Route::Recursion).unwrap().tv < 1e-8);
    }

    #[test]
    fn general_rates_skip_recursion() {
        let sc = scenario(r#""selection":{"s":0.5},"#, r#"{"mode":"general","rates":[{"blocks":[[1,3],[2]],"rate":0.6}]}"#);
        let report =
            run_validate(&sc, &ValidateConfig { routes: vec![Route::Ode, Route::Recursion, Route::ClosedForm], ..quick() }).unwrap();
        assert!(report.pass);
        assert!(matches!(report.route(Route::Recursion).unwrap().status, RouteStatus::Skipped { .. }));
        assert!(report.pairs.is_empty());
        let strict = ValidateConfig { routes: vec![Route::Ode, Route::Recursion], required: vec![Route::Recursion], ..quick() };
        assert!(!run_validate(&sc, &strict).unwrap().pass);
    }

    #[test]
    fn full_mutation_without_envelope_is_skipped() {
        let sc = scenario(r#""mutation":{"u":[0.1,0.2,0.3]},"#, r#"{"mode":"single_crossover","rates":[0.5,0.25]}"#);
        let cfg = ValidateConfig { routes: vec![Route::Ode, Route::Recursion], envelope: false, ..quick() };
        let report = run_validate(&sc, &cfg).unwrap();
        let RouteStatus::Skipped { reason } = &report.route(Route::Recursion).unwrap().status else { panic!() };
        assert!(reason.contains("assumption") || reason.contains("ψ"), "{reason}");
        assert!(report.assumption.psi.max_defect() > 0.01);
        assert!(report.assumption.psi_bullet.max_defect() <= 1e-10);
    }

    #[test]
    fn report_is_deterministic() {
        let sc = scenario(r#""selection":{"s":0.8},"mutation":{"u":[0.1,0.1,0.1]},"#, r#"{"mode":"single_crossover","rates":[0.5,0.25]}"#);
        let cfg = ValidateConfig { replicates: 5_000, ..quick() };
        let a = serde_json::to_string(&run_validate(&sc, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_validate(&sc, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("seconds"));
    }

    #[test]
    fn tolerance_rules() {
        let tol = Tolerances::default();
        assert_eq!(pair_tolerance(&tol, None, None), 1e-5);
        let space = crate::typespace::TypeSpace::binary(1, 0).unwrap();
        let est = |s: f64| MCEstimate { mean: TypeDistribution::uniform(space.layout()), stderr: vec![s, s], replicates: 10, seed: 0 };
        assert_eq!(pair_tolerance(&tol, Some(&est(0.001)), None), 0.01);
        assert!((pair_tolerance(&tol, Some(&est(0.01)), None) - 0.03).abs() < 1e-15);
        assert!((pair_tolerance(&tol, Some(&est(0.03)), Some(&est(0.04))) - 0.15).abs() < 1e-12);
    }
}
