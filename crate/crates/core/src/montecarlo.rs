//! Replicate plumbing shared by the Monte Carlo estimators: per-replicate
//! random streams, parallel chunked accumulation and a fixed-order merge, so
//! results for a given seed do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::typespace::{DistributionRecord, Layout, TypeDistribution};

const CHUNK: u64 = 2048;

/// The random stream of replicate `index` under master `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Running coordinatewise mean and sum of squared deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), &xi) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = xi - *m;
            *m += d / k;
            *s += d * (xi - *m);
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Standard error of the mean per coordinate.
    pub fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|s| (s.max(0.0) / (n - 1.0) / n).sqrt()).collect()
    }
}

/// Runs `replicates` independent draws of `f` in parallel. `f` receives the
/// replicate index, its stream and a zeroed output buffer of length `dim`.
pub fn run_replicates<F>(replicates: u64, seed: u64, dim: usize, f: F) -> Result<Moments>
where
    F: Fn(u64, &mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = replicates.div_ceil(CHUNK);
    let parts: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::new(dim);
            let mut buf = vec![0.0; dim];
            for r in c * CHUNK..((c + 1) * CHUNK).min(replicates) {
                buf.iter_mut().for_each(|x| *x = 0.0);
                let mut rng = replicate_rng(seed, r);
                f(r, &mut rng, &mut buf)?;
                acc.push(&buf);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Moments::new(dim);
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

/// A Monte Carlo estimate of a type distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MCEstimate {
    pub mean: TypeDistribution,
    pub stderr: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
}

impl MCEstimate {
    pub(crate) fn from_moments(layout: Layout, moments: &Moments, seed: u64) -> Result<Self> {
        if moments.count() == 0 {
            return Err(Error::InvalidArgument("at least one replicate is needed".into()));
        }
        Ok(Self {
            mean: TypeDistribution::from_measure(layout, moments.mean().to_vec(), 1e-12)?,
            stderr: moments.stderr(),
            replicates: moments.count(),
            seed,
        })
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Largest `|mean_x − exact_x| / stderr_x`, with `slack` added to each
    /// standard error to absorb round-off in the exact value.
    pub fn max_z(&self, exact: &TypeDistribution, slack: f64) -> Result<f64> {
        if exact.layout() != self.mean.layout() {
            return Err(Error::IncompatibleSupports);
        }
        Ok(self
            .mean
            .weights()
            .iter()
            .zip(exact.weights())
            .zip(&self.stderr)
            .map(|((m, e), s)| (m - e).abs() / (s + slack))
            .fold(0.0, f64::max))
    }

    pub fn to_record(&self) -> MCRecord {
        MCRecord { mean: DistributionRecord::from(&self.mean), stderr: self.stderr.clone(), replicates: self.replicates, seed: self.seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCRecord {
    pub mean: DistributionRecord,
    pub stderr: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
}
