//! Finite product type spaces and dense measures on them.
//!
//! Sites are 0-based internally. A measure on a site subset `A` is stored as a
//! dense weight array in mixed-radix order with the smallest site of `A` as the
//! least significant digit. The empty site set carries a single weight (the
//! point mass on the empty sequence).

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of sites a [`SiteSet`] can hold.
pub const MAX_SITES: usize = 64;

/// Round-off tolerance below which negative weights are clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-15;

/// Tolerance on the total mass of a probability vector.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A subset of sites, stored as a bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SiteSet(u64);

impl SiteSet {
    pub const EMPTY: SiteSet = SiteSet(0);

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_SITES);
        if n == MAX_SITES {
            SiteSet(u64::MAX)
        } else {
            SiteSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(site: usize) -> Self {
        SiteSet(1u64 << site)
    }

    /// Sites `lo..hi` (half-open).
    pub fn range(lo: usize, hi: usize) -> Self {
        if hi <= lo {
            return Self::EMPTY;
        }
        SiteSet(Self::full(hi).0 & !Self::full(lo).0)
    }

    pub fn from_bits(bits: u64) -> Self {
        SiteSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, site: usize) -> bool {
        site < MAX_SITES && self.0 >> site & 1 == 1
    }

    pub fn insert(&mut self, site: usize) {
        self.0 |= 1u64 << site;
    }

    pub fn union(self, other: SiteSet) -> SiteSet {
        SiteSet(self.0 | other.0)
    }

    pub fn intersection(self, other: SiteSet) -> SiteSet {
        SiteSet(self.0 & other.0)
    }

    pub fn difference(self, other: SiteSet) -> SiteSet {
        SiteSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: SiteSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: SiteSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn first(self) -> Option<usize> {
        (!self.is_empty()).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn last(self) -> Option<usize> {
        (!self.is_empty()).then(|| 63 - self.0.leading_zeros() as usize)
    }

    /// Sites in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// 1-based site list, as used in every external format.
    pub fn to_one_based(self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }

    pub fn from_one_based(sites: &[usize]) -> Result<Self> {
        let mut s = SiteSet::EMPTY;
        for &i in sites {
            if i == 0 || i > MAX_SITES {
                return Err(Error::InvalidArgument(format!("site {i} out of range")));
            }
            s.insert(i - 1);
        }
        Ok(s)
    }
}

impl FromIterator<usize> for SiteSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = SiteSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// The shape of a dense measure: which sites it covers and their alphabet sizes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    sites: SiteSet,
    radices: Vec<usize>,
}

impl Layout {
    /// `radices[k]` is the alphabet size of the k-th smallest site of `sites`.
    pub fn new(sites: SiteSet, radices: Vec<usize>) -> Result<Self> {
        if sites.len() != radices.len() {
            return Err(Error::InvalidArgument(format!("{} sites but {} alphabet sizes", sites.len(), radices.len())));
        }
        if let Some(r) = radices.iter().find(|&&r| r < 2) {
            return Err(Error::InvalidArgument(format!("alphabet size {r} < 2")));
        }
        Ok(Self { sites, radices })
    }

    pub fn sites(&self) -> SiteSet {
        self.sites
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.radices.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Alphabet size at `site`, if the site is covered.
    pub fn radix_of(&self, site: usize) -> Option<usize> {
        self.position(site).map(|p| self.radices[p])
    }

    /// Digit position of `site` in the mixed-radix index.
    pub fn position(&self, site: usize) -> Option<usize> {
        self.sites.contains(site).then(|| SiteSet(self.sites.0 & ((1u64 << site) - 1)).len())
    }

    pub fn stride(&self, site: usize) -> Option<usize> {
        self.position(site).map(|p| self.radices[..p].iter().product())
    }

    /// Layout of the sub-measure on `self.sites ∩ keep`.
    pub fn restrict(&self, keep: SiteSet) -> Layout {
        let sites = self.sites.intersection(keep);
        let radices = self.sites.iter().zip(&self.radices).filter(|(s, _)| keep.contains(*s)).map(|(_, &r)| r).collect();
        Layout { sites, radices }
    }

    /// Letters of `index` for the covered sites, in site order.
    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        self.radices
            .iter()
            .map(|&r| {
                let d = index % r;
                index /= r;
                d
            })
            .collect()
    }

    /// Inverse of [`Layout::decode`].
    pub fn encode(&self, letters: &[usize]) -> Result<usize> {
        if letters.len() != self.radices.len() {
            return Err(Error::InvalidType(format!("expected {} letters, got {}", self.radices.len(), letters.len())));
        }
        let mut index = 0;
        for (&x, &r) in letters.iter().zip(&self.radices).rev() {
            if x >= r {
                return Err(Error::InvalidType(format!("letter {x} outside alphabet of size {r}")));
            }
            index = index * r + x;
        }
        Ok(index)
    }

    /// For each state of `self`, the index of its projection onto `self.sites ∩ keep`.
    pub fn projection(&self, keep: SiteSet) -> Vec<usize> {
        let mut out_strides = Vec::with_capacity(self.radices.len());
        let mut acc = 1;
        for (s, &r) in self.sites.iter().zip(&self.radices) {
            if keep.contains(s) {
                out_strides.push(acc);
                acc *= r;
            } else {
                out_strides.push(0);
            }
        }
        let len = self.len();
        let mut map = Vec::with_capacity(len);
        let mut digits = vec![0usize; self.radices.len()];
        let mut out = 0usize;
        for _ in 0..len {
            map.push(out);
            for (p, d) in digits.iter_mut().enumerate() {
                *d += 1;
                out += out_strides[p];
                if *d < self.radices[p] {
                    break;
                }
                out -= out_strides[p] * self.radices[p];
                *d = 0;
            }
        }
        map
    }
}

/// Finite product type space with a distinguished active site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeSpace {
    alphabet_sizes: Vec<usize>,
    active_site: usize,
}

impl TypeSpace {
    /// `active_site` is 0-based.
    pub fn new(alphabet_sizes: Vec<usize>, active_site: usize) -> Result<Self> {
        let n = alphabet_sizes.len();
        if n == 0 || n > MAX_SITES {
            return Err(Error::InvalidArgument(format!("number of sites {n} out of range")));
        }
        if active_site >= n {
            return Err(Error::InvalidArgument(format!("active site {} outside 1..={n}", active_site + 1)));
        }
        if alphabet_sizes.iter().any(|&r| r < 2) {
            return Err(Error::InvalidArgument("alphabet sizes must be at least 2".into()));
        }
        Ok(Self { alphabet_sizes, active_site })
    }

    pub fn binary(n: usize, active_site: usize) -> Result<Self> {
        Self::new(vec![2; n], active_site)
    }

    pub fn n(&self) -> usize {
        self.alphabet_sizes.len()
    }

    pub fn alphabet_sizes(&self) -> &[usize] {
        &self.alphabet_sizes
    }

    pub fn active_site(&self) -> usize {
        self.active_site
    }

    pub fn all_sites(&self) -> SiteSet {
        SiteSet::full(self.n())
    }

    /// Sites other than the active one.
    pub fn passive_sites(&self) -> SiteSet {
        self.all_sites().difference(SiteSet::singleton(self.active_site))
    }

    /// Total number of types.
    pub fn size(&self) -> usize {
        self.alphabet_sizes.iter().product()
    }

    pub fn layout(&self) -> Layout {
        Layout { sites: self.all_sites(), radices: self.alphabet_sizes.clone() }
    }

    pub fn sub_layout(&self, sites: SiteSet) -> Layout {
        self.layout().restrict(sites)
    }

    pub fn encode(&self, x: &[usize]) -> Result<usize> {
        self.layout().encode(x)
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        self.layout().decode(index)
    }
}

/// Sums weights over the sites of `layout` not in `keep`.
pub(crate) fn marginal_weights(layout: &Layout, weights: &[f64], keep: SiteSet) -> (Layout, Vec<f64>) {
    let target = layout.restrict(keep);
    if target.sites == layout.sites {
        return (target, weights.to_vec());
    }
    let mut out = vec![0.0; target.len()];
    for (w, j) in weights.iter().zip(layout.projection(keep)) {
        out[j] += w;
    }
    (target, out)
}

/// Site-ordered product of factors with pairwise disjoint site sets.
pub(crate) fn product_weights(factors: &[(&Layout, &[f64])]) -> Result<(Layout, Vec<f64>)> {
    let mut sites = SiteSet::EMPTY;
    for (l, _) in factors {
        if !sites.is_disjoint(l.sites) {
            return Err(Error::InvalidPartitionFactors(format!("site sets overlap at {:?}", sites.intersection(l.sites))));
        }
        sites = sites.union(l.sites);
    }
    let mut radices = vec![0; sites.len()];
    for (l, _) in factors {
        for (s, &r) in l.sites.iter().zip(&l.radices) {
            let p = SiteSet(sites.0 & ((1u64 << s) - 1)).len();
            radices[p] = r;
        }
    }
    let layout = Layout { sites, radices };
    let mut out = vec![1.0; layout.len()];
    for (l, w) in factors {
        for (o, j) in out.iter_mut().zip(layout.projection(l.sites)) {
            *o *= w[j];
        }
    }
    Ok((layout, out))
}

/// Probability vector on the types of a site subset.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeDistribution {
    layout: Layout,
    weights: Vec<f64>,
}

impl TypeDistribution {
    /// Validates nonnegativity (up to [`NEGATIVE_CLAMP`]) and unit mass
    /// (up to [`MASS_TOLERANCE`]), then clamps and renormalizes.
    pub fn new(layout: Layout, weights: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(layout, weights, NEGATIVE_CLAMP, MASS_TOLERANCE)
    }

    /// Like [`TypeDistribution::new`] with explicit tolerances; used by solvers
    /// whose round-off exceeds the defaults.
    pub fn with_tolerance(layout: Layout, mut weights: Vec<f64>, neg_tol: f64, mass_tol: f64) -> Result<Self> {
        if weights.len() != layout.len() {
            return Err(Error::InvalidDistribution(format!("expected {} weights, got {}", layout.len(), weights.len())));
        }
        for (index, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidDistribution(format!("non-finite weight at index {index}")));
            }
            if *w < 0.0 {
                if *w < -neg_tol {
                    return Err(Error::NegativeWeight { index, value: *w });
                }
                *w = 0.0;
            }
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > mass_tol {
            return Err(Error::InvalidDistribution(format!("total mass {mass} differs from 1")));
        }
        if mass != 1.0 {
            weights.iter_mut().for_each(|w| *w /= mass);
        }
        Ok(Self { layout, weights })
    }

    /// Clamps negatives down to `-neg_tol` and divides by the mass, whatever it is.
    pub fn from_measure(layout: Layout, weights: Vec<f64>, neg_tol: f64) -> Result<Self> {
        let mut weights = weights;
        for (index, w) in weights.iter_mut().enumerate() {
            if *w < 0.0 {
                if *w < -neg_tol {
                    return Err(Error::NegativeWeight { index, value: *w });
                }
                *w = 0.0;
            }
        }
        Self::normalized(layout, weights)
    }

    /// Normalizes an arbitrary nonnegative weight vector with positive mass.
    pub fn normalized(layout: Layout, weights: Vec<f64>) -> Result<Self> {
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidDistribution(format!("cannot normalize mass {mass}")));
        }
        Self::new(layout, weights.into_iter().map(|w| w / mass).collect())
    }

    pub fn point_mass(layout: Layout, letters: &[usize]) -> Result<Self> {
        let idx = layout.encode(letters)?;
        let mut weights = vec![0.0; layout.len()];
        weights[idx] = 1.0;
        Ok(Self { layout, weights })
    }

    pub fn uniform(layout: Layout) -> Self {
        let len = layout.len();
        Self { layout, weights: vec![1.0 / len as f64; len] }
    }

    /// The point mass on the empty sequence.
    pub fn empty_sequence() -> Self {
        Self { layout: Layout { sites: SiteSet::EMPTY, radices: vec![] }, weights: vec![1.0] }
    }

    /// Product of independent per-site marginals (`marginals[i]` for site i).
    pub fn product_of_sites(marginals: &[Vec<f64>]) -> Result<Self> {
        let mut acc = TypeDistribution::empty_sequence();
        for (i, m) in marginals.iter().enumerate() {
            let layout = Layout::new(SiteSet::singleton(i), vec![m.len()])?;
            let factor = TypeDistribution::new(layout, m.clone())?;
            acc = product_assemble(&[&acc, &factor])?;
        }
        Ok(acc)
    }

    /// Random distribution with i.i.d. exponential weights (uniform on the simplex).
    pub fn random<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let weights: Vec<f64> = (0..layout.len()).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        Self::normalized(layout, weights).expect("positive mass")
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn sites(&self) -> SiteSet {
        self.layout.sites
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn prob(&self, letters: &[usize]) -> Result<f64> {
        Ok(self.weights[self.layout.encode(letters)?])
    }

    /// Marginal on `self.sites ∩ keep`.
    pub fn marginal(&self, keep: SiteSet) -> TypeDistribution {
        let (layout, weights) = marginal_weights(&self.layout, &self.weights, keep);
        TypeDistribution { layout, weights }
    }

    pub fn to_signed(&self) -> SignedMeasure {
        SignedMeasure { layout: self.layout.clone(), weights: self.weights.clone() }
    }

    /// Product of the block marginals of `self` over `blocks`, which must
    /// partition the sites of `self`.
    pub fn recombine(&self, blocks: &[SiteSet]) -> Result<TypeDistribution> {
        let cover = blocks.iter().fold(SiteSet::EMPTY, |a, &b| a.union(b));
        if cover != self.sites() {
            return Err(Error::InvalidPartitionFactors(format!("blocks cover {cover:?}, distribution lives on {:?}", self.sites())));
        }
        if blocks.len() == 1 {
            return Ok(self.clone());
        }
        let margs: Vec<TypeDistribution> = blocks.iter().map(|&b| self.marginal(b)).collect();
        let refs: Vec<&TypeDistribution> = margs.iter().collect();
        product_assemble(&refs)
    }
}

/// Site-ordered product measure of distributions on disjoint site sets.
pub fn product_assemble(factors: &[&TypeDistribution]) -> Result<TypeDistribution> {
    let parts: Vec<(&Layout, &[f64])> = factors.iter().map(|d| (&d.layout, d.weights.as_slice())).collect();
    let (layout, weights) = product_weights(&parts)?;
    Ok(TypeDistribution { layout, weights })
}

/// Like [`product_assemble`], but checks that the factors cover `universe` exactly.
pub fn product_assemble_on(universe: SiteSet, factors: &[&TypeDistribution]) -> Result<TypeDistribution> {
    let d = product_assemble(factors)?;
    if d.sites() != universe {
        return Err(Error::InvalidPartitionFactors(format!("factors cover {:?}, expected {universe:?}", d.sites())));
    }
    Ok(d)
}

/// Total variation distance `½ Σ |μ(x) − ν(x)|`.
pub fn tv_distance(mu: &TypeDistribution, nu: &TypeDistribution) -> Result<f64> {
    tv_weights(mu.layout(), mu.weights(), nu.layout(), nu.weights())
}

pub(crate) fn tv_weights(la: &Layout, a: &[f64], lb: &Layout, b: &[f64]) -> Result<f64> {
    if la != lb {
        return Err(Error::IncompatibleSupports);
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Decomposition of a distribution by the allele at the active site.
#[derive(Clone, Debug)]
pub struct ActiveSplit {
    /// Frequency of allele 0 at the active site (the fit type).
    pub fit_frequency: f64,
    /// Conditional law given allele 0; `None` when `fit_frequency == 0`.
    pub fit: Option<TypeDistribution>,
    /// Conditional law given an allele other than 0; `None` when `fit_frequency == 1`.
    pub unfit: Option<TypeDistribution>,
}

pub fn condition_on_active(nu: &TypeDistribution, active: usize) -> Result<ActiveSplit> {
    let layout = nu.layout();
    let (stride, radix) = match (layout.stride(active), layout.radix_of(active)) {
        (Some(s), Some(r)) => (s, r),
        _ => return Err(Error::InvalidArgument(format!("active site {} not covered by the distribution", active + 1))),
    };
    let is_fit = |idx: usize| (idx / stride) % radix == 0;
    let f: f64 = nu.weights.iter().enumerate().filter(|(i, _)| is_fit(*i)).map(|(_, w)| w).sum();
    let part = |fit: bool, mass: f64| -> Option<TypeDistribution> {
        if mass <= 0.0 {
            return None;
        }
        let weights = nu.weights.iter().enumerate().map(|(i, &w)| if is_fit(i) == fit { w / mass } else { 0.0 }).collect();
        Some(TypeDistribution { layout: layout.clone(), weights })
    };
    let fit = part(true, f);
    let unfit = part(false, 1.0 - f);
    Ok(ActiveSplit { fit_frequency: f.clamp(0.0, 1.0), fit, unfit })
}

/// Draws a state index by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(nu: &TypeDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in nu.weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Draws a type (letters for the covered sites, in site order).
pub fn sample_type<R: Rng + ?Sized>(nu: &TypeDistribution, rng: &mut R) -> Vec<usize> {
    nu.layout.decode(sample_index(nu, rng))
}

/// A real-valued measure with the same shape as a [`TypeDistribution`];
/// holds vector-field values and intermediate linear combinations.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedMeasure {
    layout: Layout,
    weights: Vec<f64>,
}

impl SignedMeasure {
    pub fn new(layout: Layout, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != layout.len() {
            return Err(Error::InvalidDistribution(format!("expected {} weights, got {}", layout.len(), weights.len())));
        }
        Ok(Self { layout, weights })
    }

    pub fn zeros(layout: Layout) -> Self {
        let len = layout.len();
        Self { layout, weights: vec![0.0; len] }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn sites(&self) -> SiteSet {
        self.layout.sites
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Sum of all coordinates.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn marginal(&self, keep: SiteSet) -> SignedMeasure {
        let (layout, weights) = marginal_weights(&self.layout, &self.weights, keep);
        SignedMeasure { layout, weights }
    }

    pub fn product(factors: &[&SignedMeasure]) -> Result<SignedMeasure> {
        let parts: Vec<(&Layout, &[f64])> = factors.iter().map(|d| (&d.layout, d.weights.as_slice())).collect();
        let (layout, weights) = product_weights(&parts)?;
        Ok(SignedMeasure { layout, weights })
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &SignedMeasure) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::IncompatibleSupports);
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.weights.iter_mut().for_each(|w| *w *= alpha);
    }

    /// Converts to a probability vector, clamping negatives down to `-neg_tol`
    /// and renormalizing when the mass is within `mass_tol` of 1.
    pub fn into_distribution(self, neg_tol: f64, mass_tol: f64) -> Result<TypeDistribution> {
        TypeDistribution::with_tolerance(self.layout, self.weights, neg_tol, mass_tol)
    }
}

/// Wire format of a distribution: 1-based sites and the dense weight array.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DistributionRecord {
    pub sites: Vec<usize>,
    pub weights: Vec<f64>,
}

impl From<&TypeDistribution> for DistributionRecord {
    fn from(d: &TypeDistribution) -> Self {
        Self { sites: d.sites().to_one_based(), weights: d.weights.clone() }
    }
}

impl DistributionRecord {
    pub fn into_distribution(self, space: &TypeSpace) -> Result<TypeDistribution> {
        let sites = SiteSet::from_one_based(&self.sites)?;
        if !sites.is_subset(space.all_sites()) {
            return Err(Error::InvalidArgument("sites outside the type space".into()));
        }
        TypeDistribution::new(space.sub_layout(sites), self.weights)
    }
}

/// CSV rows `index,tuple,weight`; the tuple is written as `(x1,...,xk)` over
/// the covered sites and weights carry 17 significant digits.
pub fn distribution_csv(d: &TypeDistribution) -> String {
    let mut out = String::from("index,type,weight\n");
    for (i, w) in d.weights.iter().enumerate() {
        let letters: Vec<String> = d.layout.decode(i).iter().map(|x| x.to_string()).collect();
        out.push_str(&format!("{i},\"({})\",{w:.16e}\n", letters.join(",")));
    }
    out
}
