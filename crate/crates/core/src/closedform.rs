//! Exact linear-algebra solutions: the selection and mutation operators,
//! nonnegative matrix exponentials, the normalized ψ• flow, the mutation
//! envelope and the full closed-form solver.

use nalgebra::DMatrix;

use crate::dynamics::{add_site_mutation_matrix, apply_site_mutation_matrix, Flow, PsiSpec};
use crate::error::{Error, Result};
use crate::partitions::RecombinationRates;
use crate::recursion::{truncated_solve_levels, BaseFlow, RecursionConfig, SiteOrdering};
use crate::typespace::{Layout, SiteSet, TypeDistribution, TypeSpace};

/// Largest state count for which operators are materialized densely.
pub const MAX_DENSE: usize = 4096;

/// `t‖A‖₁` beyond which the exponential is refused.
pub const EXP_OVERFLOW_LIMIT: f64 = 700.0;

/// Requested relative accuracy of [`expmv`].
pub const EXPMV_TOLERANCE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub enum OpTerm {
    Identity,
    /// `F`: keeps the weight of types with allele 0 at the site.
    Selection {
        site: usize,
    },
    /// `M_i`: resamples the letter at the site from `m`.
    SiteMutation {
        site: usize,
        m: [f64; 2],
    },
    Dense(DMatrix<f64>),
}

/// A linear map on weight arrays of one layout, stored as a weighted sum of
/// structured terms and applied matrix-free.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    layout: Layout,
    terms: Vec<(f64, OpTerm)>,
}

impl LinearOperator {
    pub fn zero(layout: Layout) -> Self {
        Self { layout, terms: Vec::new() }
    }

    pub fn identity(layout: Layout) -> Self {
        Self { layout, terms: vec![(1.0, OpTerm::Identity)] }
    }

    pub fn dense(layout: Layout, matrix: DMatrix<f64>) -> Result<Self> {
        let len = layout.len();
        if matrix.nrows() != len || matrix.ncols() != len {
            return Err(Error::InvalidArgument(format!("matrix is not {len}x{len}")));
        }
        Ok(Self { layout, terms: vec![(1.0, OpTerm::Dense(matrix))] })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn terms(&self) -> &[(f64, OpTerm)] {
        &self.terms
    }

    /// `self + c · other`.
    pub fn plus(mut self, c: f64, other: &LinearOperator) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::IncompatibleSupports);
        }
        self.terms.extend(other.terms.iter().map(|(a, t)| (c * a, t.clone())));
        Ok(self)
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.terms.iter_mut().for_each(|(a, _)| *a *= c);
        self
    }

    /// `out = self · v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, term) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            match term {
                OpTerm::Identity => out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x),
                OpTerm::Selection { site } => {
                    let st = self.layout.stride(*site).expect("site in layout");
                    let r = self.layout.radix_of(*site).expect("site in layout");
                    for (i, (o, x)) in out.iter_mut().zip(v).enumerate() {
                        if (i / st) % r == 0 {
                            *o += c * x;
                        }
                    }
                }
                OpTerm::SiteMutation { site, m } => {
                    add_site_mutation_matrix(&self.layout, v, *c, *m, *site, out).expect("binary site");
                }
                OpTerm::Dense(a) => {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += c * a.row(i).iter().zip(v).map(|(a, x)| a * x).sum::<f64>();
                    }
                }
            }
        }
    }

    /// Upper bound on the induced ℓ₁ norm (maximal column sum).
    pub fn norm1(&self) -> f64 {
        self.terms
            .iter()
            .map(|(c, term)| {
                c.abs()
                    * match term {
                        OpTerm::Identity | OpTerm::Selection { .. } | OpTerm::SiteMutation { .. } => 1.0,
                        OpTerm::Dense(a) => a.column_iter().map(|col| col.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max),
                    }
            })
            .sum()
    }

    /// Whether every matrix entry is nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        if self.terms.iter().all(|(c, t)| match t {
            OpTerm::Dense(a) => *c >= 0.0 && a.iter().all(|&x| x >= 0.0),
            OpTerm::SiteMutation { m, .. } => *c >= 0.0 && m[0] >= 0.0 && m[1] >= 0.0,
            _ => *c >= 0.0,
        }) {
            return true;
        }
        // Mixed signs may still cancel; decide on the dense form when small.
        self.to_dense().is_ok_and(|a| a.iter().all(|&x| x >= -1e-300))
    }

    /// Dense matrix, offered up to [`MAX_DENSE`] states.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let len = self.layout.len();
        if len > MAX_DENSE {
            return Err(Error::Unsupported(format!("dense form limited to {MAX_DENSE} states, have {len}")));
        }
        let mut a = DMatrix::zeros(len, len);
        let mut e = vec![0.0; len];
        let mut col = vec![0.0; len];
        for j in 0..len {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            a.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        Ok(a)
    }
}

/// `F`, diagonal with 1 where the active site carries allele 0.
pub fn build_selection_operator(space: &TypeSpace) -> Result<LinearOperator> {
    let a = space.active_site();
    if space.alphabet_sizes()[a] != 2 {
        return Err(Error::Unsupported("selection needs a binary alphabet at the active site".into()));
    }
    Ok(LinearOperator { layout: space.layout(), terms: vec![(1.0, OpTerm::Selection { site: a })] })
}

/// `M_i`: `δ_x ↦ m_0 δ_{x←0 at i} + m_1 δ_{x←1 at i}`.
pub fn build_mutation_operator(space: &TypeSpace, site: usize, m: [f64; 2]) -> Result<LinearOperator> {
    if site >= space.n() {
        return Err(Error::InvalidArgument(format!("site {} out of range", site + 1)));
    }
    if space.alphabet_sizes()[site] != 2 {
        return Err(Error::Unsupported(format!("mutation needs a binary alphabet at site {}", site + 1)));
    }
    Ok(LinearOperator { layout: space.layout(), terms: vec![(1.0, OpTerm::SiteMutation { site, m })] })
}

/// `e^{tA} v` for a nonnegative operator by a scaled Taylor series. Every term
/// is nonnegative, so the truncation bound is certified relative to the result.
pub fn expmv(a: &LinearOperator, t: f64, v: &[f64]) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
    }
    if v.len() != a.layout.len() {
        return Err(Error::IncompatibleSupports);
    }
    if !a.is_nonnegative() {
        return Err(Error::NegativeOperator);
    }
    let norm = t * a.norm1();
    if norm > EXP_OVERFLOW_LIMIT {
        return Err(Error::ExpOverflow { norm });
    }
    let mut result = v.to_vec();
    if norm == 0.0 {
        return Ok(result);
    }
    let steps = norm.ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let theta = norm / steps as f64;
    let tol = EXPMV_TOLERANCE / steps as f64;
    let mut term = vec![0.0; v.len()];
    let mut next = vec![0.0; v.len()];
    for _ in 0..steps {
        term.copy_from_slice(&result);
        let mut k = 0usize;
        loop {
            k += 1;
            a.apply(&term, &mut next);
            let scale = h / k as f64;
            let mut term_norm = 0.0;
            for (x, r) in next.iter_mut().zip(result.iter_mut()) {
                *x *= scale;
                *r += *x;
                term_norm += x.abs();
            }
            std::mem::swap(&mut term, &mut next);
            let sum_norm: f64 = result.iter().map(|x| x.abs()).sum();
            // Tail ≤ ‖term_k‖ Σ_{j≥1} θ^j / ((k+1)⋯(k+j)).
            let q = theta / (k as f64 + 2.0);
            let tail = if q < 1.0 { term_norm * theta / (k as f64 + 1.0) / (1.0 - q) } else { f64::INFINITY };
            if tail <= tol * sum_norm || term_norm == 0.0 {
                break;
            }
            if k > 200 {
                return Err(Error::ExpOverflow { norm });
            }
        }
    }
    Ok(result)
}

/// `e^{t(A − c·id)} v = e^{−ct} e^{tA} v`, for generators written as a
/// nonnegative operator minus a multiple of the identity.
pub fn expmv_shifted(a: &LinearOperator, shift: f64, t: f64, v: &[f64]) -> Result<Vec<f64>> {
    let mut out = expmv(a, t, v)?;
    let f = (-shift * t).exp();
    out.iter_mut().for_each(|x| *x *= f);
    Ok(out)
}

/// The ψ• flow: `e^{t(sF + u M)} ν` divided by its mass.
#[derive(Clone, Debug)]
pub struct BulletFlow {
    generator: LinearOperator,
}

impl BulletFlow {
    pub fn new(space: &TypeSpace, s: f64, u_active: f64, m_active: [f64; 2]) -> Result<Self> {
        let f = build_selection_operator(space)?.scaled(s);
        let m = build_mutation_operator(space, space.active_site(), m_active)?;
        Ok(Self { generator: f.plus(u_active, &m)? })
    }

    pub fn from_psi(space: &TypeSpace, psi: &PsiSpec) -> Result<Self> {
        let a = space.active_site();
        let u = if psi.mutation_sites().contains(a) { psi.u()[a] } else { 0.0 };
        Self::new(space, psi.s(), u, psi.m()[a])
    }

    pub fn generator(&self) -> &LinearOperator {
        &self.generator
    }

    pub fn apply_weights(&self, w: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = expmv(&self.generator, t, w)?;
        let mass: f64 = out.iter().sum();
        out.iter_mut().for_each(|x| *x /= mass);
        Ok(out)
    }

    /// Values at the uniform grid `j·t/g`, `j = 0..=g`, by sequential stepping.
    pub fn grid(&self, nu: &TypeDistribution, t: f64, g: usize) -> Result<Vec<Vec<f64>>> {
        let h = if g == 0 { 0.0 } else { t / g as f64 };
        let mut out = Vec::with_capacity(g + 1);
        let mut w = nu.weights().to_vec();
        out.push(w.clone());
        for _ in 0..g {
            // Renormalizing between steps commutes with the final normalization.
            w = self.apply_weights(&w, h)?;
            out.push(w.clone());
        }
        Ok(out)
    }
}

impl Flow for BulletFlow {
    fn apply(&self, nu: &TypeDistribution, t: f64) -> Result<TypeDistribution> {
        if nu.layout() != self.generator.layout() {
            return Err(Error::IncompatibleSupports);
        }
        if t == 0.0 {
            return Ok(nu.clone());
        }
        let w = self.apply_weights(nu.weights(), t)?;
        TypeDistribution::with_tolerance(nu.layout().clone(), w, 1e-15, 1e-12)
    }
}

/// Ψ•⁽⁰⁾_t(ν) with selection `s` and mutation `(u, m)` at the active site.
pub fn flow_bullet(
    space: &TypeSpace,
    nu: &TypeDistribution,
    t: f64,
    s: f64,
    u_active: f64,
    m_active: [f64; 2],
) -> Result<TypeDistribution> {
    BulletFlow::new(space, s, u_active, m_active)?.apply(nu, t)
}

/// `E_t = Π_{i ∈ sites} [id + (1 − e^{−u_i t})(M_i − id)]`, applied to the
/// sites of `sites` covered by `nu`.
pub fn mutation_envelope_apply(nu: &TypeDistribution, t: f64, u: &[f64], m: &[[f64; 2]], sites: SiteSet) -> Result<TypeDistribution> {
    let mut w = nu.weights().to_vec();
    envelope_weights(nu.layout(), &mut w, t, u, m, sites)?;
    TypeDistribution::with_tolerance(nu.layout().clone(), w, 1e-15, 1e-12)
}

pub(crate) fn envelope_weights(layout: &Layout, w: &mut [f64], t: f64, u: &[f64], m: &[[f64; 2]], sites: SiteSet) -> Result<()> {
    for i in sites.intersection(layout.sites()).iter() {
        let p = -(-u[i] * t).exp_m1();
        if p == 0.0 {
            continue;
        }
        let mut mw = w.to_vec();
        apply_site_mutation_matrix(layout, &mut mw, m[i], i)?;
        for (x, y) in w.iter_mut().zip(mw) {
            *x += p * (y - *x);
        }
    }
    Ok(())
}

/// The envelope for the non-active mutation of `psi`.
pub fn psi_envelope(nu: &TypeDistribution, t: f64, psi: &PsiSpec) -> Result<TypeDistribution> {
    mutation_envelope_apply(nu, t, psi.u(), psi.m(), psi.envelope_sites())
}

/// Closed-form solution `ω_t = E_t ω•_t`, with `ω•` from the recursion over
/// the ψ• flow.
pub fn smr_solve(
    space: &TypeSpace,
    omega0: &TypeDistribution,
    t: f64,
    psi: &PsiSpec,
    rates: &RecombinationRates,
    ordering: &SiteOrdering,
    grid: usize,
) -> Result<TypeDistribution> {
    if !rates.is_single_crossover() && !rates.rated_partitions(space.n()).is_empty() {
        return Err(Error::Unsupported("the closed form needs single-crossover rates".into()));
    }
    if space.alphabet_sizes().iter().any(|&r| r != 2) {
        return Err(Error::Unsupported("the closed form needs binary alphabets".into()));
    }
    let cfg = RecursionConfig { grid, base: BaseFlow::Bullet, ..Default::default() };
    let bullet = truncated_solve_levels(space, omega0, t, &psi.bullet(), rates, ordering, space.n() - 1, &cfg)?;
    psi_envelope(&bullet, t, psi)
}
