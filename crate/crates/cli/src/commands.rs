use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use psireco::closedform::psi_envelope;
use psireco::dynamics::trajectory_csv;
use psireco::glpp::{duality_estimate_with, glpp_event_log};
use psireco::labels::LabelProcess;
use psireco::recursion::{recursion_convergence, BaseFlow};
use psireco::validate::Tolerances;
use psireco::*;
use serde::Serialize;
use serde_json::json;

use crate::output::{csv_table, distribution_csv, emit, estimate_csv, float, write_text};
use crate::{AigArgs, CheckArgs, ClosedFormArgs, Command, Global, GlppArgs, Labels, RecursionArgs, SolveArgs, ValidateArgs};

/// Runs one subcommand; `Ok(false)` means a comparison failed.
pub fn run(g: &Global, command: Command) -> Result<bool> {
    if let Some(threads) = g.threads {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let sc = load(g)?;
    match command {
        Command::Solve(a) => solve(g, &sc, &a),
        Command::Recursion(a) => recursion(g, sc, &a),
        Command::Closedform(a) => closedform(g, sc, &a),
        Command::Glpp(a) => glpp(g, &sc, &a),
        Command::Aig(a) => aig(g, &sc, &a),
        Command::Validate(a) => validate(g, &sc, &a),
        Command::CheckAssumptions(a) => check_assumptions(g, &sc, &a),
    }
}

fn load(g: &Global) -> Result<Scenario> {
    let path = g.scenario.as_deref().ok_or_else(|| anyhow!("--scenario is required"))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut sc = parse_scenario(&text).with_context(|| format!("invalid scenario {}", path.display()))?;
    if let Some(t) = g.t {
        if !(t >= 0.0 && t.is_finite()) {
            bail!("--t must be a nonnegative number, got {t}");
        }
        sc.t = t;
    }
    Ok(sc)
}

fn ordering_override(sc: &mut Scenario, spec: Option<&str>) -> Result<()> {
    let Some(spec) = spec else { return Ok(()) };
    sc.ordering = if spec == "default" {
        OrderingPolicy::Default
    } else {
        let sites = spec
            .split(',')
            .map(|s| match s.trim().parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(anyhow!("bad site {s:?} in --ordering; sites are 1-based")),
            })
            .collect::<Result<Vec<_>>>()?;
        OrderingPolicy::Explicit(sites)
    };
    sc.site_ordering()?;
    Ok(())
}

#[derive(Serialize)]
struct Solution<'a> {
    route: &'a str,
    t: f64,
    /// TV change at the last grid doubling, when converging on a tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_change: Option<f64>,
    distribution: DistributionRecord,
}

fn emit_solution(g: &Global, route: &str, t: f64, d: &TypeDistribution) -> Result<()> {
    emit_solution_with(g, route, t, None, d)
}

fn emit_solution_with(g: &Global, route: &str, t: f64, grid_change: Option<f64>, d: &TypeDistribution) -> Result<()> {
    emit(g, &Solution { route, t, grid_change, distribution: d.into() }, || Ok(distribution_csv(d)))
}

fn solve(g: &Global, sc: &Scenario, a: &SolveArgs) -> Result<bool> {
    let cfg = match (a.step, a.rtol) {
        (Some(h), _) => OdeConfig::rk4(h),
        (None, Some(r)) => OdeConfig::dopri5(r, r),
        (None, None) => OdeConfig::default(),
    };
    match &a.times {
        None => {
            let d = ode_solve(&sc.space, &sc.initial, sc.t, &sc.psi, &sc.rates, &cfg)?;
            emit_solution(g, "ode", sc.t, &d)?;
        }
        Some(times) => {
            if times.windows(2).any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt())) {
                bail!("--times must be non-decreasing");
            }
            let (states, _) = ode_trajectory(&sc.space, &sc.initial, times, &sc.psi, &sc.rates, &cfg)?;
            let points: Vec<_> =
                times.iter().zip(&states).map(|(t, d)| json!({ "t": t, "distribution": DistributionRecord::from(d) })).collect();
            emit(g, &json!({ "route": "ode", "trajectory": points }), || Ok(trajectory_csv(times, &states)))?;
        }
    }
    Ok(true)
}

fn recursion(g: &Global, mut sc: Scenario, a: &RecursionArgs) -> Result<bool> {
    ordering_override(&mut sc, a.ordering.as_deref())?;
    let ordering = sc.site_ordering()?;
    let n = sc.space.n();
    let k = a.levels.unwrap_or(n - 1);
    if k >= n {
        bail!("--levels must be below n = {n}");
    }
    let psi = if a.no_envelope { sc.psi.clone() } else { sc.psi.bullet() };
    let cfg = RecursionConfig { grid: a.grid, base: BaseFlow::Ode(OdeConfig::default()), override_assumption: a.override_assumption };
    let (d, estimate) = match a.tol {
        Some(tol) => {
            let c = recursion_convergence(&sc.space, &sc.initial, sc.t, &psi, &sc.rates, &ordering, k, &cfg, tol)?;
            log::info!("grid {} reached TV change {:e}", c.grid, c.estimate);
            (c.value, Some(c.estimate))
        }
        None => (truncated_solve(&sc.space, &sc.initial, sc.t, &psi, &sc.rates, &ordering, k, &cfg)?, None),
    };
    let d = if a.no_envelope { d } else { psi_envelope(&d, sc.t, &sc.psi)? };
    emit_solution_with(g, "recursion", sc.t, estimate, &d)?;
    Ok(true)
}

fn closedform(g: &Global, mut sc: Scenario, a: &ClosedFormArgs) -> Result<bool> {
    ordering_override(&mut sc, a.ordering.as_deref())?;
    let d = smr_solve(&sc.space, &sc.initial, sc.t, &sc.psi, &sc.rates, &sc.site_ordering()?, a.grid)?;
    emit_solution(g, "closedform", sc.t, &d)?;
    Ok(true)
}

fn glpp_run<P: LabelProcess>(g: &Global, sc: &Scenario, a: &GlppArgs, process: &P, envelope: bool) -> Result<bool> {
    let cfg = DualityConfig {
        mode: if a.thinned { GlppMode::Thinned } else { GlppMode::Faithful },
        override_assumption: a.override_assumption,
        ..DualityConfig::new(a.replicates, g.seed)
    };
    let est = duality_estimate_with(&sc.space, &sc.initial, sc.t, &sc.rates, process, &cfg, |h| {
        if envelope {
            psi_envelope(&h, sc.t, &sc.psi)
        } else {
            Ok(h)
        }
    })?;
    if let Some(path) = &a.log_events {
        let state = glpp_event_log(&sc.space, sc.t, &sc.rates, process, &cfg)?;
        write_jsonl(path, state.events.as_deref().unwrap_or_default())?;
    }
    let labels = format!("{:?}", a.labels).to_lowercase();
    emit(g, &json!({ "route": "glpp", "labels": labels, "t": sc.t, "estimate": est.to_record() }), || estimate_csv(&est))?;
    Ok(true)
}

fn write_jsonl(path: &Path, events: &[GlppEvent]) -> Result<()> {
    let mut text = String::new();
    for e in events {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    write_text(path, &text)
}

fn glpp(g: &Global, sc: &Scenario, a: &GlppArgs) -> Result<bool> {
    let psi = &sc.psi;
    match a.labels {
        Labels::Clock => {
            let clock = ClockProcess::new(BulletFlow::from_psi(&sc.space, psi)?);
            glpp_run(g, sc, a, &clock, !psi.envelope_sites().is_empty())
        }
        Labels::Yule => {
            if psi.u().iter().any(|&u| u > 0.0) {
                bail!("yule labels represent selection only; the scenario has mutation");
            }
            glpp_run(g, sc, a, &YuleProcess::new(psi.s(), sc.space.active_site())?, false)
        }
        Labels::Flags => {
            if psi.s() != 0.0 {
                bail!("flag labels represent mutation only; the scenario has selection");
            }
            glpp_run(g, sc, a, &MutationFlagProcess::new(psi.u().to_vec(), psi.m().to_vec())?, false)
        }
    }
}

fn graph_summary(graph: &AncestryGraph) -> serde_json::Value {
    let lines: Vec<_> = graph
        .lines()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            json!({
                "line": i,
                "birth": l.birth,
                "age": graph.age(i),
                "leaf_sites": l.leaf_sites().to_one_based(),
                "ancestral": l.is_ancestral(),
            })
        })
        .collect();
    let events: Vec<_> =
        graph.events().iter().map(|e| json!({ "tau": e.time, "line": e.line, "B": e.partition.rgs(), "attached": e.attached })).collect();
    json!({ "n": graph.n(), "active_site": graph.active() + 1, "t": graph.horizon(), "lines": lines, "events": events })
}

fn aig(g: &Global, sc: &Scenario, a: &AigArgs) -> Result<bool> {
    let (n, active) = (sc.space.n(), sc.space.active_site());
    let graph = aig_sample(n, active, sc.t, &sc.rates, &mut replicate_rng(g.seed, 0))?;
    if let Some(path) = &a.export_dot {
        write_text(path, &graph.to_dot())?;
    }
    if a.estimate {
        let est = aig_estimate(&sc.space, &sc.initial, sc.t, &sc.psi, &sc.rates, a.replicates, g.seed)?;
        emit(g, &json!({ "route": "aig", "t": sc.t, "estimate": est.to_record() }), || estimate_csv(&est))?;
    } else {
        emit(g, &graph_summary(&graph), || {
            csv_table(
                &["line", "birth", "age", "leaf_sites", "ancestral"],
                graph.lines().iter().enumerate().map(|(i, l)| {
                    let sites: Vec<String> = l.leaf_sites().to_one_based().iter().map(|s| s.to_string()).collect();
                    vec![i.to_string(), float(l.birth), float(graph.age(i)), sites.join(" "), l.is_ancestral().to_string()]
                }),
            )
        })?;
    }
    Ok(true)
}

fn validate(g: &Global, sc: &Scenario, a: &ValidateArgs) -> Result<bool> {
    let defaults = Tolerances::default();
    let tolerances = Tolerances {
        deterministic: a.det_tol.unwrap_or(defaults.deterministic),
        mc_floor: a.mc_floor.unwrap_or(defaults.mc_floor),
        mc_sigmas: a.mc_sigmas.unwrap_or(defaults.mc_sigmas),
    };
    let cfg = ValidateConfig {
        routes: a.routes.clone().unwrap_or_else(|| Route::ALL.to_vec()),
        required: a.require.clone(),
        tolerances,
        seed: g.seed,
        replicates: a.replicates,
        grid: a.grid,
        envelope: !a.no_envelope,
        override_assumption: a.override_assumption,
        timings: a.timings,
        ..ValidateConfig::default()
    };
    let report = run_validate(sc, &cfg)?;
    emit(g, &report, || {
        csv_table(
            &["a", "b", "tv", "tolerance", "pass"],
            report.pairs.iter().map(|p| vec![p.a.to_string(), p.b.to_string(), float(p.tv), float(p.tolerance), p.pass.to_string()]),
        )
    })?;
    for r in &report.routes {
        if let validate::RouteStatus::Skipped { reason } = &r.status {
            log::warn!("{} skipped: {reason}", r.route);
        }
    }
    Ok(report.pass)
}

fn check_assumptions(g: &Global, sc: &Scenario, a: &CheckArgs) -> Result<bool> {
    let mut rng = replicate_rng(g.seed, 0);
    let psi = assumption_psi_check(&sc.space, &sc.psi, a.trials, &mut rng)?;
    let bullet = assumption_psi_check(&sc.space, &sc.psi.bullet(), a.trials, &mut rng)?;
    let value = json!({
        "trials": a.trials,
        "psi": psi,
        "psi_bullet": bullet,
        "psi_satisfied": psi.holds(1e-10),
        "psi_bullet_satisfied": bullet.holds(1e-10),
    });
    emit(g, &value, || {
        csv_table(
            &["map", "multiplicativity", "linearity"],
            [("psi", psi), ("psi_bullet", bullet)].map(|(name, r)| vec![name.to_string(), float(r.multiplicativity), float(r.linearity)]),
        )
    })?;
    Ok(true)
}
