//! Set partitions of the site set, the active-site order, split pairs and
//! labelled partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::typespace::{SiteSet, MAX_SITES};

/// Largest site count for which [`enumerate_partitions`] is offered.
pub const MAX_ENUMERATE: usize = 10;

/// A partition of `{0, .., n-1}` in restricted-growth-string form.
///
/// Block ids are assigned in order of first occurrence, so block `k` is the
/// block with the k-th smallest minimum.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Partition {
    rgs: Vec<u8>,
    #[serde(skip)]
    blocks: Vec<SiteSet>,
}

impl TryFrom<Vec<u8>> for Partition {
    type Error = Error;

    fn try_from(rgs: Vec<u8>) -> Result<Self> {
        Partition::from_rgs(rgs)
    }
}

impl From<Partition> for Vec<u8> {
    fn from(p: Partition) -> Self {
        p.rgs
    }
}

impl Partition {
    pub fn from_rgs(rgs: Vec<u8>) -> Result<Self> {
        if rgs.is_empty() || rgs.len() > MAX_SITES {
            return Err(Error::InvalidPartition(format!("length {} out of range", rgs.len())));
        }
        let mut next = 0u8;
        for (i, &b) in rgs.iter().enumerate() {
            if b > next {
                return Err(Error::InvalidPartition(format!("entry {b} at position {i} skips a block id")));
            }
            if b == next {
                next += 1;
            }
        }
        let mut blocks = vec![SiteSet::EMPTY; next as usize];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b as usize].insert(i);
        }
        Ok(Self { rgs, blocks })
    }

    /// Canonical form of a list of blocks covering `{0, .., n-1}`.
    pub fn from_blocks(n: usize, blocks: &[SiteSet]) -> Result<Self> {
        let mut seen = SiteSet::EMPTY;
        for &b in blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            if !seen.is_disjoint(b) {
                return Err(Error::InvalidPartition(format!("blocks overlap at {:?}", seen.intersection(b))));
            }
            seen = seen.union(b);
        }
        if seen != SiteSet::full(n) {
            return Err(Error::InvalidPartition(format!("blocks miss sites {:?}", SiteSet::full(n).difference(seen))));
        }
        let mut sorted = blocks.to_vec();
        sorted.sort_by_key(|b| b.first());
        let mut rgs = vec![0u8; n];
        for (k, b) in sorted.iter().enumerate() {
            for i in b.iter() {
                rgs[i] = k as u8;
            }
        }
        Ok(Self { rgs, blocks: sorted })
    }

    /// The one-block partition `{S}`.
    pub fn trivial(n: usize) -> Self {
        Self::from_rgs(vec![0; n]).expect("valid")
    }

    /// The partition into singletons.
    pub fn discrete(n: usize) -> Self {
        Self::from_rgs((0..n as u8).collect()).expect("valid")
    }

    pub fn n(&self) -> usize {
        self.rgs.len()
    }

    pub fn rgs(&self) -> &[u8] {
        &self.rgs
    }

    /// Blocks ordered by their smallest site.
    pub fn blocks(&self) -> &[SiteSet] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn block_of(&self, site: usize) -> SiteSet {
        self.blocks[self.rgs[site] as usize]
    }

    /// `{σ ∩ B : B ∈ self} \ {∅}`.
    pub fn restrict(&self, sigma: SiteSet) -> Result<Vec<SiteSet>> {
        if sigma.is_empty() {
            return Err(Error::InvalidArgument("cannot restrict to the empty set".into()));
        }
        Ok(restrict_blocks(&self.blocks, sigma))
    }

    /// Coarsest common refinement.
    pub fn meet(&self, other: &Partition) -> Partition {
        assert_eq!(self.n(), other.n(), "partitions of different site sets");
        let mut blocks = Vec::new();
        for &a in &self.blocks {
            blocks.extend(restrict_blocks(&other.blocks, a));
        }
        Partition::from_blocks(self.n(), &blocks).expect("meet is a partition")
    }

    /// True when every block of `self` lies inside a block of `other`.
    pub fn refines(&self, other: &Partition) -> bool {
        self.blocks.iter().all(|&b| b.is_subset(other.block_of(b.first().unwrap())))
    }

    /// The head block (containing `active`) and the remaining tail blocks.
    pub fn head_tail(&self, active: usize) -> (SiteSet, Vec<SiteSet>) {
        let head = self.block_of(active);
        let tail = self.blocks.iter().copied().filter(|&b| b != head).collect();
        (head, tail)
    }
}

fn restrict_blocks(blocks: &[SiteSet], sigma: SiteSet) -> Vec<SiteSet> {
    blocks.iter().map(|&b| b.intersection(sigma)).filter(|b| !b.is_empty()).collect()
}

/// All partitions of `{0, .., n-1}` in lexicographic RGS order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    if n == 0 || n > MAX_ENUMERATE {
        return Err(Error::InvalidArgument(format!("enumeration offered for 1..={MAX_ENUMERATE} sites, got {n}")));
    }
    let mut out = Vec::new();
    let mut rgs = vec![0u8; n];
    let mut maxes = vec![0u8; n];
    loop {
        out.push(Partition::from_rgs(rgs.clone()).expect("valid"));
        // Increment the rightmost position that can still grow.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if rgs[i] <= maxes[i - 1] {
                rgs[i] += 1;
                maxes[i] = maxes[i - 1].max(rgs[i]);
                for j in i + 1..n {
                    rgs[j] = 0;
                    maxes[j] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

/// The order on sites induced by distance from the active site:
/// `i ≼ j` iff `active ≤ i ≤ j` or `j ≤ i ≤ active`.
pub fn precedes(i: usize, j: usize, active: usize) -> bool {
    (active <= i && i <= j) || (j <= i && i <= active)
}

/// The `≼`-minimal site of a block lying on one side of `active`
/// (the site closest to `active`).
pub fn preorder_min(block: SiteSet, active: usize) -> Option<usize> {
    block.iter().min_by_key(|&i| i.abs_diff(active))
}

/// `(C_i, D_i)` with `D_i = {j : i ≼ j}` and `C_i` its complement.
pub fn split_pair(i: usize, active: usize, n: usize) -> Result<(SiteSet, SiteSet)> {
    if i == active || i >= n || active >= n {
        return Err(Error::InvalidArgument(format!("no split pair for site {} with active site {}", i + 1, active + 1)));
    }
    let d = if i > active { SiteSet::range(i, n) } else { SiteSet::range(0, i + 1) };
    Ok((SiteSet::full(n).difference(d), d))
}

/// The two-block partition `{C_i, D_i}`.
pub fn split_partition(i: usize, active: usize, n: usize) -> Result<Partition> {
    let (c, d) = split_pair(i, active, n)?;
    Partition::from_blocks(n, &[c, d])
}

/// Recombination rates, either on arbitrary partitions or one rate per
/// non-active site for the single-crossover splits `{C_i, D_i}`.
#[derive(Clone, Debug, PartialEq)]
pub enum RecombinationRates {
    General(Vec<(Partition, f64)>),
    /// `rates[i]` is the rate of `{C_i, D_i}`; the entry at the active site is 0.
    SingleCrossover {
        active: usize,
        rates: Vec<f64>,
    },
}

impl RecombinationRates {
    pub fn none() -> Self {
        RecombinationRates::General(Vec::new())
    }

    /// Rates for the non-active sites in increasing site order.
    pub fn single_crossover(n: usize, active: usize, nonactive: &[f64]) -> Result<Self> {
        if active >= n {
            return Err(Error::InvalidArgument("active site out of range".into()));
        }
        if nonactive.len() != n - 1 {
            return Err(Error::InvalidArgument(format!("single-crossover mode needs {} rates, got {}", n - 1, nonactive.len())));
        }
        check_rates(nonactive.iter().copied())?;
        let mut rates = Vec::with_capacity(n);
        let mut it = nonactive.iter();
        for i in 0..n {
            rates.push(if i == active { 0.0 } else { *it.next().unwrap() });
        }
        Ok(RecombinationRates::SingleCrossover { active, rates })
    }

    pub fn general(n: usize, rates: Vec<(Partition, f64)>) -> Result<Self> {
        check_rates(rates.iter().map(|(_, r)| *r))?;
        if let Some((p, _)) = rates.iter().find(|(p, _)| p.n() != n) {
            return Err(Error::InvalidPartition(format!("partition {:?} is not on {n} sites", p.rgs())));
        }
        for (k, (p, _)) in rates.iter().enumerate() {
            if rates[..k].iter().any(|(q, _)| q == p) {
                return Err(Error::InvalidPartition(format!("partition {:?} listed twice", p.rgs())));
            }
        }
        if rates.iter().any(|(p, r)| p.is_trivial() && *r > 0.0) {
            log::warn!("rate on the trivial partition only produces silent transitions");
        }
        Ok(RecombinationRates::General(rates))
    }

    pub fn is_single_crossover(&self) -> bool {
        matches!(self, RecombinationRates::SingleCrossover { .. })
    }

    pub fn has_trivial(&self) -> bool {
        match self {
            RecombinationRates::General(r) => r.iter().any(|(p, _)| p.is_trivial()),
            RecombinationRates::SingleCrossover { .. } => false,
        }
    }

    /// Partitions with strictly positive rate.
    pub fn rated_partitions(&self, n: usize) -> Vec<(Partition, f64)> {
        match self {
            RecombinationRates::General(r) => r.iter().filter(|(_, r)| *r > 0.0).cloned().collect(),
            RecombinationRates::SingleCrossover { active, rates } => rates
                .iter()
                .enumerate()
                .filter(|&(i, &r)| i != *active && r > 0.0)
                .map(|(i, &r)| (split_partition(i, *active, n).expect("valid site"), r))
                .collect(),
        }
    }

    /// `Σ_ℬ ϱ_ℬ`.
    pub fn total(&self) -> f64 {
        match self {
            RecombinationRates::General(r) => r.iter().map(|(_, r)| r).sum(),
            RecombinationRates::SingleCrossover { rates, .. } => rates.iter().sum(),
        }
    }

    /// Single-crossover rate at `site` (0 in general mode).
    pub fn site_rate(&self, site: usize) -> f64 {
        match self {
            RecombinationRates::SingleCrossover { rates, .. } => rates.get(site).copied().unwrap_or(0.0),
            RecombinationRates::General(_) => 0.0,
        }
    }

    /// Equivalent general-mode rate list.
    pub fn to_general(&self, n: usize) -> Vec<(Partition, f64)> {
        self.rated_partitions(n)
    }
}

fn check_rates(rates: impl Iterator<Item = f64>) -> Result<()> {
    for r in rates {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("recombination rate {r} must be finite and nonnegative")));
        }
    }
    Ok(())
}

/// `r_A`: total rate of partitions whose tail has a block containing `a`.
pub fn resetting_rate(a: SiteSet, rates: &RecombinationRates, n: usize, active: usize) -> f64 {
    if a.is_empty() || a.contains(active) {
        return 0.0;
    }
    rates
        .rated_partitions(n)
        .iter()
        .filter(|(p, _)| {
            let b = p.block_of(a.first().unwrap());
            !b.contains(active) && a.is_subset(b)
        })
        .map(|(_, r)| r)
        .sum()
}

/// Single-crossover resetting rate of site `i`: `Σ_{j ≼ i, j ≠ active} ϱ_j`.
pub fn site_resetting_rate(i: usize, rates: &[f64], active: usize) -> f64 {
    if i == active {
        return 0.0;
    }
    (0..rates.len()).filter(|&j| j != active && precedes(j, i, active)).map(|j| rates[j]).sum()
}

/// A partition together with one label per block (indexed by block id).
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledPartition<L> {
    partition: Partition,
    labels: Vec<L>,
}

impl<L: Clone> LabelledPartition<L> {
    pub fn new(partition: Partition, labels: Vec<L>) -> Result<Self> {
        if labels.len() != partition.num_blocks() {
            return Err(Error::InvalidArgument(format!("{} labels for {} blocks", labels.len(), partition.num_blocks())));
        }
        Ok(Self { partition, labels })
    }

    /// `({S}, v)`.
    pub fn trivial(n: usize, label: L) -> Self {
        Self { partition: Partition::trivial(n), labels: vec![label] }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn label_of(&self, block: SiteSet) -> Option<&L> {
        self.block_index(block).map(|k| &self.labels[k])
    }

    pub fn block_index(&self, block: SiteSet) -> Option<usize> {
        let k = self.partition.rgs[block.first()?] as usize;
        (self.partition.blocks[k] == block).then_some(k)
    }

    /// Blocks paired with their labels.
    pub fn iter(&self) -> impl Iterator<Item = (SiteSet, &L)> {
        self.partition.blocks.iter().copied().zip(&self.labels)
    }

    pub fn head_label(&self, active: usize) -> &L {
        &self.labels[self.partition.rgs[active] as usize]
    }

    /// Replaces block `a` by its pieces `a ∩ B`; the piece meeting the head of
    /// `b` keeps the old label and every other piece gets `empty`.
    pub fn boxwedge(&self, a: SiteSet, b: &Partition, empty: L, active: usize) -> Result<Self> {
        let k = self.block_index(a).ok_or(Error::InvalidBlock)?;
        if b.n() != self.partition.n() {
            return Err(Error::InvalidPartition("partition on a different site set".into()));
        }
        let b_head = b.block_of(active);
        if a.is_subset(b_head) {
            return Ok(self.clone());
        }
        let mut pieces: Vec<(SiteSet, L)> = self.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, (s, l))| (s, l.clone())).collect();
        for piece in restrict_blocks(b.blocks(), a) {
            let label = if piece.is_subset(b_head) { self.labels[k].clone() } else { empty.clone() };
            pieces.push((piece, label));
        }
        pieces.sort_by_key(|(s, _)| s.first());
        let blocks: Vec<SiteSet> = pieces.iter().map(|(s, _)| *s).collect();
        let partition = Partition::from_blocks(self.partition.n(), &blocks)?;
        Ok(Self { partition, labels: pieces.into_iter().map(|(_, l)| l).collect() })
    }
}

/// Per-site view of an interval labelled partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteLabel<L> {
    Delta,
    Label(L),
}

/// Puts each block's label at its `≼`-minimal site and `Δ` everywhere else.
pub fn encode_site_labels<L: Clone>(lp: &LabelledPartition<L>, active: usize) -> Result<Vec<SiteLabel<L>>> {
    let n = lp.partition.n();
    let mut out = vec![SiteLabel::Delta; n];
    for (block, label) in lp.iter() {
        let (lo, hi) = (block.first().unwrap(), block.last().unwrap());
        if hi - lo + 1 != block.len() {
            return Err(Error::NotIntervalPartition);
        }
        let site = if block.contains(active) { active } else { preorder_min(block, active).unwrap() };
        out[site] = SiteLabel::Label(label.clone());
    }
    Ok(out)
}

/// Inverse of [`encode_site_labels`].
pub fn decode_site_labels<L: Clone>(sites: &[SiteLabel<L>], active: usize) -> Result<LabelledPartition<L>> {
    let n = sites.len();
    if active >= n {
        return Err(Error::InvalidArgument("active site out of range".into()));
    }
    let SiteLabel::Label(head) = &sites[active] else {
        return Err(Error::InvalidArgument("the active site carries Δ".into()));
    };
    let mut head_block = SiteSet::singleton(active);
    let mut pieces: Vec<(SiteSet, L)> = Vec::new();
    for side in [(active + 1..n).collect::<Vec<_>>(), (0..active).rev().collect()] {
        let mut current: Option<(SiteSet, L)> = None;
        for i in side {
            match &sites[i] {
                SiteLabel::Label(l) => {
                    pieces.extend(current.take());
                    current = Some((SiteSet::singleton(i), l.clone()));
                }
                SiteLabel::Delta => match current.as_mut() {
                    Some((b, _)) => b.insert(i),
                    None => head_block.insert(i),
                },
            }
        }
        pieces.extend(current);
    }
    pieces.push((head_block, head.clone()));
    pieces.sort_by_key(|(s, _)| s.first());
    let blocks: Vec<SiteSet> = pieces.iter().map(|(s, _)| *s).collect();
    let partition = Partition::from_blocks(n, &blocks)?;
    LabelledPartition::new(partition, pieces.into_iter().map(|(_, l)| l).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(sites: &[usize]) -> SiteSet {
        SiteSet::from_one_based(sites).unwrap()
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(Partition::from_blocks(3, &[set(&[2]), set(&[1, 3])]).unwrap().rgs(), &[0, 1, 0]);
        assert_eq!(Partition::from_blocks(3, &[set(&[1]), set(&[2]), set(&[3])]).unwrap().rgs(), &[0, 1, 2]);
        assert_eq!(Partition::from_blocks(3, &[set(&[1, 2, 3])]).unwrap().rgs(), &[0, 0, 0]);
        assert!(Partition::from_blocks(3, &[set(&[1, 2]), set(&[2, 3])]).is_err());
        assert!(Partition::from_blocks(3, &[set(&[1, 2])]).is_err());
        assert!(Partition::from_rgs(vec![0, 2, 1]).is_err());
        assert!(Partition::from_rgs(vec![1, 0]).is_err());
    }

    #[test]
    fn restrict_examples() {
        let b = Partition::from_blocks(3, &[set(&[1, 3]), set(&[2])]).unwrap();
        let mut r = b.restrict(set(&[2, 3])).unwrap();
        r.sort();
        assert_eq!(r, vec![set(&[2]), set(&[3])]);
        assert_eq!(b.restrict(set(&[1, 3])).unwrap(), vec![set(&[1, 3])]);
        assert_eq!(Partition::discrete(3).restrict(set(&[1, 3])).unwrap(), vec![set(&[1]), set(&[3])]);
        assert!(b.restrict(SiteSet::EMPTY).is_err());
    }

    #[test]
    fn meet_examples() {
        let a = Partition::from_blocks(3, &[set(&[1, 2]), set(&[3])]).unwrap();
        let b = Partition::from_blocks(3, &[set(&[1]), set(&[2, 3])]).unwrap();
        assert_eq!(a.meet(&b), Partition::discrete(3));
        assert_eq!(a.meet(&a), a);
        assert_eq!(a.meet(&Partition::trivial(3)), a);
    }

    #[test]
    fn head_tail_examples() {
        let a = Partition::from_blocks(3, &[set(&[1]), set(&[2, 3])]).unwrap();
        assert_eq!(a.head_tail(1), (set(&[2, 3]), vec![set(&[1])]));
        assert_eq!(Partition::trivial(3).head_tail(0), (SiteSet::full(3), vec![]));
        assert_eq!(Partition::discrete(3).head_tail(2).0, set(&[3]));
    }

    #[test]
    fn precedes_examples() {
        // 0-based: active site 4 is index 3.
        assert!(precedes(3, 7, 3));
        assert!(!precedes(7, 3, 3));
        assert!(precedes(2, 1, 3));
        assert!(!precedes(1, 8, 3));
        assert!(!precedes(8, 1, 3));
    }

    #[test]
    fn split_pair_examples() {
        assert_eq!(split_pair(7, 3, 10).unwrap(), (SiteSet::range(0, 7), set(&[8, 9, 10])));
        assert_eq!(split_pair(1, 3, 10).unwrap(), (SiteSet::range(2, 10), set(&[1, 2])));
        assert_eq!(split_pair(1, 0, 2).unwrap(), (set(&[1]), set(&[2])));
        assert!(split_pair(3, 3, 10).is_err());
    }

    #[test]
    fn resetting_rate_examples() {
        let rates = RecombinationRates::single_crossover(3, 0, &[0.5, 0.25]).unwrap();
        assert_eq!(resetting_rate(set(&[3]), &rates, 3, 0), 0.75);
        assert_eq!(resetting_rate(set(&[2]), &rates, 3, 0), 0.5);
        assert_eq!(resetting_rate(set(&[1, 2]), &rates, 3, 0), 0.0);
        let RecombinationRates::SingleCrossover { rates: per_site, .. } = &rates else { unreachable!() };
        assert_eq!(site_resetting_rate(2, per_site, 0), 0.75);
        assert_eq!(site_resetting_rate(1, per_site, 0), 0.5);
    }

    #[test]
    fn boxwedge_examples() {
        let b = Partition::from_blocks(3, &[set(&[1, 3]), set(&[2])]).unwrap();
        let lp = LabelledPartition::trivial(3, "v");
        let out = lp.boxwedge(SiteSet::full(3), &b, "∅", 0).unwrap();
        assert_eq!(out.partition(), &b);
        assert_eq!(out.label_of(set(&[1, 3])), Some(&"v"));
        assert_eq!(out.label_of(set(&[2])), Some(&"∅"));

        let lp = LabelledPartition::new(b.clone(), vec!["v", "w"]).unwrap();
        let out = lp.boxwedge(set(&[2]), &b, "∅", 0).unwrap();
        assert_eq!(out.partition(), &b);
        assert_eq!(out.labels(), &["v", "∅"]);

        let out = lp.boxwedge(set(&[2]), &Partition::trivial(3), "∅", 0).unwrap();
        assert_eq!(out, lp);
        assert_eq!(lp.boxwedge(set(&[1]), &b, "∅", 0), Err(Error::InvalidBlock));
    }

    #[test]
    fn site_label_figure_example() {
        let p = Partition::from_blocks(10, &[set(&[1, 2, 3]), set(&[4, 5]), set(&[6, 7, 8]), set(&[9, 10])]).unwrap();
        let lp = LabelledPartition::new(p, vec!["y3", "y5", "y6", "y9"]).unwrap();
        let enc = encode_site_labels(&lp, 4).unwrap();
        use SiteLabel::*;
        assert_eq!(enc, vec![Delta, Delta, Label("y3"), Delta, Label("y5"), Label("y6"), Delta, Delta, Label("y9"), Delta]);
        assert_eq!(decode_site_labels(&enc, 4).unwrap(), lp);

        let lp = LabelledPartition::trivial(4, "v");
        let enc = encode_site_labels(&lp, 2).unwrap();
        assert_eq!(enc, vec![Delta, Delta, Label("v"), Delta]);
        assert_eq!(decode_site_labels(&enc, 2).unwrap(), lp);

        let bad = LabelledPartition::new(Partition::from_rgs(vec![0, 1, 0]).unwrap(), vec![1, 2]).unwrap();
        assert_eq!(encode_site_labels(&bad, 0), Err(Error::NotIntervalPartition));
    }

    #[test]
    fn enumeration_counts() {
        let bell = [1, 2, 5, 15, 52, 203, 877, 4140];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(enumerate_partitions(n + 1).unwrap().len(), b);
        }
        assert!(enumerate_partitions(11).is_err());
    }

    #[test]
    fn rgs_serializes_as_array() {
        let p = Partition::from_rgs(vec![0, 1, 0]).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[0,1,0]");
        let q: Partition = serde_json::from_str("[0,1,0]").unwrap();
        assert_eq!(q, p);
        assert!(serde_json::from_str::<Partition>("[1,0]").is_err());
    }

    fn arb_partition(max_n: usize) -> impl Strategy<Value = Partition> {
        (1..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(0u8..n as u8, n).prop_map(|raw| {
                // Relabel raw ids in order of first appearance.
                let mut map = [u8::MAX; 64];
                let mut next = 0;
                let rgs = raw
                    .iter()
                    .map(|&r| {
                        if map[r as usize] == u8::MAX {
                            map[r as usize] = next;
                            next += 1;
                        }
                        map[r as usize]
                    })
                    .collect();
                Partition::from_rgs(rgs).unwrap()
            })
        })
    }

    fn same_n_pair(max_n: usize) -> impl Strategy<Value = (Partition, Partition, Partition)> {
        arb_partition(max_n).prop_flat_map(|a| {
            let n = a.n();
            let other = proptest::collection::vec(0u8..n as u8, n).prop_map(move |raw| {
                let blocks: Vec<SiteSet> = (0..n as u8)
                    .map(|id| raw.iter().enumerate().filter(|(_, &r)| r == id).map(|(i, _)| i).collect())
                    .filter(|b: &SiteSet| !b.is_empty())
                    .collect();
                Partition::from_blocks(n, &blocks).unwrap()
            });
            (Just(a), other.clone(), other)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn restrict_partitions_sigma(p in arb_partition(6), bits in 1u64..64) {
            let sigma = SiteSet::from_bits(bits).intersection(SiteSet::full(p.n()));
            prop_assume!(!sigma.is_empty());
            let r = p.restrict(sigma).unwrap();
            prop_assert_eq!(r.iter().map(|b| b.len()).sum::<usize>(), sigma.len());
            prop_assert_eq!(r.iter().fold(SiteSet::EMPTY, |a, &b| a.union(b)), sigma);
        }

        #[test]
        fn meet_lattice_laws((a, b, c) in same_n_pair(6)) {
            let ab = a.meet(&b);
            prop_assert_eq!(&ab, &b.meet(&a));
            prop_assert_eq!(ab.meet(&c), a.meet(&b.meet(&c)));
            prop_assert_eq!(a.meet(&a), a.clone());
            prop_assert!(ab.refines(&a) && ab.refines(&b));
        }

        #[test]
        fn boxwedge_keeps_head_label(
            p in arb_partition(6),
            steps in proptest::collection::vec((0usize..64, any::<u64>()), 1..12),
        ) {
            let n = p.n();
            let active = n / 2;
            let mut lp = LabelledPartition::trivial(n, 7u32);
            for (pick, bits) in steps {
                let blocks = lp.partition().blocks().to_vec();
                let a = blocks[pick % blocks.len()];
                let raw: Vec<u8> = (0..n).map(|i| ((bits >> (2 * i)) & 3) as u8 % n as u8).collect();
                let groups: Vec<SiteSet> = (0..n as u8)
                    .map(|id| raw.iter().enumerate().filter(|(_, &r)| r == id).map(|(i, _)| i).collect())
                    .filter(|b: &SiteSet| !b.is_empty())
                    .collect();
                let b = Partition::from_blocks(n, &groups).unwrap();
                let before = lp.partition().num_blocks();
                lp = lp.boxwedge(a, &b, 0, active).unwrap();
                prop_assert_eq!(*lp.head_label(active), 7);
                prop_assert!(lp.partition().num_blocks() >= before);
            }
            let _ = p;
        }

        #[test]
        fn encode_decode_roundtrip(n in 1usize..=6, active_raw in 0usize..6, cuts in any::<u8>(), seed in any::<u32>()) {
            let active = active_raw % n;
            // Interval partition: cut between i and i+1 when bit i is set.
            let mut blocks = Vec::new();
            let mut start = 0;
            for i in 0..n {
                if i + 1 == n || cuts >> i & 1 == 1 {
                    blocks.push(SiteSet::range(start, i + 1));
                    start = i + 1;
                }
            }
            let p = Partition::from_blocks(n, &blocks).unwrap();
            let labels: Vec<u32> = (0..p.num_blocks() as u32).map(|k| k.wrapping_mul(seed)).collect();
            let lp = LabelledPartition::new(p, labels).unwrap();
            let enc = encode_site_labels(&lp, active).unwrap();
            prop_assert!(matches!(enc[active], SiteLabel::Label(_)));
            prop_assert_eq!(decode_site_labels(&enc, active).unwrap(), lp);
        }
    }

    #[test]
    fn precedes_is_partial_order() {
        for n in 1..=8 {
            for a in 0..n {
                for i in 0..n {
                    assert!(precedes(i, i, a));
                    assert!(precedes(a, i, a));
                    for j in 0..n {
                        if precedes(i, j, a) && precedes(j, i, a) {
                            assert_eq!(i, j);
                        }
                        for k in 0..n {
                            if precedes(i, j, a) && precedes(j, k, a) {
                                assert!(precedes(i, k, a));
                            }
                        }
                    }
                    // Down-set of i is a chain.
                    let down: Vec<usize> = (0..n).filter(|&j| precedes(j, i, a)).collect();
                    for &x in &down {
                        for &y in &down {
                            assert!(precedes(x, y, a) || precedes(y, x, a));
                        }
                    }
                }
            }
        }
    }
}
