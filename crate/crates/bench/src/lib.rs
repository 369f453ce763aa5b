//! Scenario fixtures shared by the benchmarks.

use psireco::{PsiSpec, RecombinationRates, TypeDistribution, TypeSpace};

pub struct Fixture {
    pub space: TypeSpace,
    pub psi: PsiSpec,
    pub rates: RecombinationRates,
    pub initial: TypeDistribution,
}

/// `n` binary sites with the active site in the middle, selection, mutation
/// everywhere and decreasing single-crossover rates.
pub fn fixture(n: usize) -> Fixture {
    let active = n / 2;
    let space = TypeSpace::binary(n, active).expect("valid space");
    let psi = PsiSpec::new(active, 0.8, vec![0.1; n], vec![[0.5, 0.5]; n]).expect("valid psi");
    let nonactive: Vec<f64> = (1..n).map(|i| 0.5 / i as f64).collect();
    let rates = RecombinationRates::single_crossover(n, active, &nonactive).expect("valid rates");
    let marginals: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let p = 0.2 + 0.6 * i as f64 / n as f64;
            vec![1.0 - p, p]
        })
        .collect();
    let initial = TypeDistribution::product_of_sites(&marginals).expect("valid marginals");
    Fixture { space, psi, rates, initial }
}
