//! Backward-time ancestry graphs: splitting forests with aged leaves,
//! Poisson mutation marks, forward type propagation to the root, and the
//! resulting Monte Carlo estimator of the forward solution.
//!
//! Times are measured backwards from the sampled individual: the root sits at
//! `τ = 0` and every leaf at `τ = t`.

use std::fmt::Write as _;

use rand::Rng;

use crate::closedform::BulletFlow;
use crate::dynamics::{Flow, PsiSpec};
use crate::error::{Error, Result};
use crate::labels::exp_time;
use crate::montecarlo::{run_replicates, MCEstimate};
use crate::partitions::{Partition, RecombinationRates};
use crate::typespace::{sample_type, SiteSet, TypeDistribution, TypeSpace};

/// A line of the graph. The ancestral set can only shrink going back in
/// time; `segments` lists `(from τ, set)` in increasing `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AncestralLine {
    pub birth: f64,
    pub parent_event: Option<usize>,
    pub segments: Vec<(f64, SiteSet)>,
}

impl AncestralLine {
    pub fn sites_at(&self, tau: f64) -> SiteSet {
        self.segments.iter().rev().find(|(from, _)| *from <= tau).map_or(SiteSet::EMPTY, |(_, s)| *s)
    }

    /// Ancestral set at the leaf.
    pub fn leaf_sites(&self) -> SiteSet {
        self.segments.last().map_or(SiteSet::EMPTY, |(_, s)| *s)
    }

    pub fn is_ancestral(&self) -> bool {
        self.segments.iter().any(|(_, s)| !s.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitEvent {
    pub time: f64,
    pub partition: Partition,
    pub line: usize,
    /// Lines attached for the tail blocks, in block order.
    pub attached: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AncestryGraph {
    n: usize,
    active: usize,
    t: f64,
    lines: Vec<AncestralLine>,
    events: Vec<SplitEvent>,
}

impl AncestryGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn lines(&self) -> &[AncestralLine] {
        &self.lines
    }

    pub fn events(&self) -> &[SplitEvent] {
        &self.events
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Age of the leaf of `line`.
    pub fn age(&self, line: usize) -> f64 {
        self.t - self.lines[line].birth
    }

    /// Events hitting `line`, in increasing `τ`.
    pub fn events_on(&self, line: usize) -> Vec<usize> {
        let mut ev: Vec<usize> = (0..self.events.len()).filter(|&e| self.events[e].line == line).collect();
        ev.sort_by(|&a, &b| self.events[a].time.total_cmp(&self.events[b].time));
        ev
    }

    /// Ancestral sets of all lines alive at `τ`.
    pub fn cross_section(&self, tau: f64) -> Vec<SiteSet> {
        self.lines.iter().filter(|l| l.birth <= tau).map(|l| l.sites_at(tau)).collect()
    }

    /// DOT rendering with one rank per event time.
    pub fn to_dot(&self) -> String {
        let label = |s: SiteSet| format!("{{{}}}", s.to_one_based().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","));
        let mut out = String::from("digraph ancestry {\n  rankdir=LR;\n  node [shape=box];\n");
        let _ = writeln!(out, "  root [shape=doublecircle, label=\"root\"];");
        for (k, l) in self.lines.iter().enumerate() {
            let _ = writeln!(out, "  leaf{k} [shape=circle, label=\"age {:.4}\\n{}\"];", self.t - l.birth, label(l.leaf_sites()));
        }
        for (e, ev) in self.events.iter().enumerate() {
            let rgs: Vec<String> = ev.partition.rgs().iter().map(|r| r.to_string()).collect();
            let _ = writeln!(out, "  ev{e} [label=\"[{}]\\nτ={:.4}\"];", rgs.join(""), ev.time);
        }
        let _ = writeln!(out, "  {{ rank=same; {} }}", (0..self.lines.len()).map(|k| format!("leaf{k};")).collect::<String>());
        let mut times: Vec<usize> = (0..self.events.len()).collect();
        times.sort_by(|&a, &b| self.events[b].time.total_cmp(&self.events[a].time));
        for e in times {
            let _ = writeln!(out, "  {{ rank=same; ev{e}; }}");
        }
        for (k, l) in self.lines.iter().enumerate() {
            // Walk from the leaf toward the root through the line's events.
            let mut from = format!("leaf{k}");
            let evs = self.events_on(k);
            for &e in evs.iter().rev() {
                let sites = l.sites_at(self.events[e].time);
                let style = if sites.is_empty() { ", color=gray" } else { "" };
                let _ = writeln!(out, "  {from} -> ev{e} [label=\"{}\"{style}];", label(sites));
                from = format!("ev{e}");
            }
            let (to, sites) = match l.parent_event {
                None => ("root".to_string(), l.sites_at(0.0)),
                Some(p) => (format!("ev{p}"), l.sites_at(l.birth)),
            };
            let style = if sites.is_empty() { ", color=gray" } else { "" };
            let _ = writeln!(out, "  {from} -> {to} [label=\"{}\"{style}];", label(sites));
        }
        out.push_str("}\n");
        out
    }
}

/// Builds graphs event by event; used by the sampler and for hand-made
/// configurations.
#[derive(Clone, Debug)]
pub struct AigBuilder {
    graph: AncestryGraph,
}

impl AigBuilder {
    pub fn new(n: usize, active: usize, t: f64) -> Result<Self> {
        if active >= n {
            return Err(Error::InvalidArgument("active site out of range".into()));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon {t} must be finite and nonnegative")));
        }
        let root = AncestralLine { birth: 0.0, parent_event: None, segments: vec![(0.0, SiteSet::full(n))] };
        Ok(Self { graph: AncestryGraph { n, active, t, lines: vec![root], events: Vec::new() } })
    }

    /// Splits `line` at `τ` by `b`; returns the attached lines. Splits on one
    /// line must be added in increasing `τ`.
    pub fn split(&mut self, line: usize, tau: f64, b: &Partition) -> Result<Vec<usize>> {
        let g = &mut self.graph;
        let l = g.lines.get(line).ok_or_else(|| Error::InvalidArgument(format!("no line {line}")))?;
        if b.n() != g.n {
            return Err(Error::InvalidPartition("partition on a different site set".into()));
        }
        if !(tau >= l.birth && tau <= g.t) || l.segments.last().is_some_and(|(from, _)| *from > tau) {
            return Err(Error::InvalidArgument(format!("split time {tau} out of order on line {line}")));
        }
        let a = l.leaf_sites();
        let (head, tail) = b.head_tail(g.active);
        let event = g.events.len();
        let mut attached = Vec::with_capacity(tail.len());
        for block in tail {
            attached.push(g.lines.len());
            g.lines.push(AncestralLine { birth: tau, parent_event: Some(event), segments: vec![(tau, a.intersection(block))] });
        }
        g.lines[line].segments.push((tau, a.intersection(head)));
        g.events.push(SplitEvent { time: tau, partition: b.clone(), line, attached: attached.clone() });
        Ok(attached)
    }

    pub fn build(self) -> AncestryGraph {
        self.graph
    }
}

/// Samples the splitting forest over `[0, t]`: every line, ancestral or
/// not, is hit at rate `ϱ_ℬ` for each `ℬ`.
pub fn aig_sample<R: Rng + ?Sized>(n: usize, active: usize, t: f64, rates: &RecombinationRates, rng: &mut R) -> Result<AncestryGraph> {
    let rated = rates.rated_partitions(n);
    let total: f64 = rated.iter().map(|(_, r)| r).sum();
    let mut builder = AigBuilder::new(n, active, t)?;
    let mut queue = vec![0usize];
    while let Some(line) = queue.pop() {
        let mut tau = builder.graph.lines[line].birth;
        loop {
            tau += exp_time(total, rng);
            if tau > t {
                break;
            }
            let mut u = rng.random::<f64>() * total;
            let mut k = rated.len() - 1;
            for (j, (_, r)) in rated.iter().enumerate() {
                if u < *r {
                    k = j;
                    break;
                }
                u -= r;
            }
            queue.extend(builder.split(line, tau, &rated[k].0)?);
        }
    }
    Ok(builder.build())
}

/// Poisson mark times per line and site: `to0[line][site]`, `to1[line][site]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MutationMarks {
    pub to0: Vec<Vec<Vec<f64>>>,
    pub to1: Vec<Vec<Vec<f64>>>,
}

impl MutationMarks {
    pub fn empty(g: &AncestryGraph) -> Self {
        let blank = vec![vec![Vec::new(); g.n]; g.lines.len()];
        Self { to0: blank.clone(), to1: blank }
    }

    pub fn total(&self) -> usize {
        self.to0.iter().chain(&self.to1).flatten().map(Vec::len).sum()
    }

    /// The letter written last in forward time on `(lo, hi]`, if any.
    fn last_forward(&self, line: usize, site: usize, lo: f64, hi: f64) -> Option<usize> {
        let first = |marks: &[f64]| marks.iter().copied().filter(|&m| m > lo && m <= hi).fold(f64::INFINITY, f64::min);
        let (a, b) = (first(&self.to0[line][site]), first(&self.to1[line][site]));
        match (a.is_finite(), b.is_finite()) {
            (false, false) => None,
            _ => Some(if a < b { 0 } else { 1 }),
        }
    }
}

/// Marks at rates `u_i m_{i,0}` and `u_i m_{i,1}` on every line for each
/// non-active site `i` with mutation.
pub fn aig_decorate<R: Rng + ?Sized>(g: &AncestryGraph, psi: &PsiSpec, rng: &mut R) -> Result<MutationMarks> {
    if psi.n() != g.n || psi.active() != g.active {
        return Err(Error::InvalidArgument("mutation parameters do not match the graph".into()));
    }
    let mut marks = MutationMarks::empty(g);
    let sites = psi.envelope_sites();
    for (k, l) in g.lines.iter().enumerate() {
        for i in sites.iter() {
            for (letter, list) in [(0, &mut marks.to0[k][i]), (1, &mut marks.to1[k][i])] {
                let rate = psi.u()[i] * psi.m()[i][letter];
                let mut tau = l.birth;
                loop {
                    tau += exp_time(rate, rng);
                    if tau > g.t {
                        break;
                    }
                    list.push(tau);
                }
            }
        }
    }
    Ok(marks)
}

/// Propagates leaf types (letters on each leaf's ancestral set, in site
/// order) forward to the root.
pub fn aig_propagate(g: &AncestryGraph, marks: &MutationMarks, leaf_types: &[Option<Vec<usize>>]) -> Result<Vec<usize>> {
    let mut x = vec![usize::MAX; g.n];
    propagate_line(g, marks, leaf_types, 0, 0.0, &mut x)?;
    Ok(x)
}

/// Writes into `x` the type carried by `line` just after `until` (towards
/// the root) on its ancestral set there.
fn propagate_line(
    g: &AncestryGraph,
    marks: &MutationMarks,
    leaf_types: &[Option<Vec<usize>>],
    line: usize,
    until: f64,
    x: &mut [usize],
) -> Result<()> {
    let l = &g.lines[line];
    let leaf = l.leaf_sites();
    if !leaf.is_empty() {
        let letters =
            leaf_types.get(line).and_then(|t| t.as_ref()).filter(|t| t.len() == leaf.len()).ok_or(Error::IncompleteLeaves { line })?;
        for (i, &a) in leaf.iter().zip(letters) {
            x[i] = a;
        }
    }
    let mut current = leaf;
    let mut hi = g.t;
    for e in g.events_on(line).into_iter().rev() {
        let ev = &g.events[e];
        for i in current.iter() {
            if let Some(a) = marks.last_forward(line, i, ev.time, hi) {
                x[i] = a;
            }
        }
        for &child in &ev.attached {
            propagate_line(g, marks, leaf_types, child, ev.time, x)?;
            current = current.union(g.lines[child].sites_at(ev.time));
        }
        hi = ev.time;
    }
    for i in current.iter() {
        if let Some(a) = marks.last_forward(line, i, until, hi) {
            x[i] = a;
        }
    }
    Ok(())
}

/// Empirical law of the root type over replicates.
pub fn aig_estimate(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    psi: &PsiSpec,
    rates: &RecombinationRates,
    replicates: u64,
    seed: u64,
) -> Result<MCEstimate> {
    if omega0.layout() != &space.layout() {
        return Err(Error::IncompatibleSupports);
    }
    let flow = BulletFlow::from_psi(space, psi)?;
    let at_horizon = flow.apply(omega0, t)?;
    let (n, active) = (space.n(), space.active_site());
    let moments = run_replicates(replicates, seed, space.size(), |_, rng, out| {
        let g = aig_sample(n, active, t, rates, rng)?;
        let marks = aig_decorate(&g, psi, rng)?;
        let mut leaves = Vec::with_capacity(g.lines.len());
        for (k, l) in g.lines.iter().enumerate() {
            let a = l.leaf_sites();
            if a.is_empty() {
                leaves.push(None);
                continue;
            }
            let law = if l.birth == 0.0 { at_horizon.clone() } else { flow.apply(omega0, g.age(k))? };
            leaves.push(Some(sample_type(&law.marginal(a), rng)));
        }
        let root = aig_propagate(&g, &marks, &leaves)?;
        out[space.encode(&root)?] = 1.0;
        Ok(())
    })?;
    MCEstimate::from_moments(space.layout(), &moments, seed)
}
