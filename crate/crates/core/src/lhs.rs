//! Latin hypercube sampling over a [`ParameterSpace`].

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::rng;
use crate::space::{Configuration, ParameterSpace};

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub seed: u64,
    pub n: usize,
    /// Stratified points in the unit hypercube, before decoding.
    pub points: Vec<Vec<f64>>,
    pub configs: Vec<Configuration>,
}

/// Draws `n` points so that every dimension has exactly one point in each of
/// the `n` intervals `[(i-1)/n, i/n)`, then decodes them into configurations.
pub fn lhs_sample(space: &ParameterSpace, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(crate::Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let d = space.dim();
    let mut rng = rng::stream(seed, 0x1a5);
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(&mut rng);
        for (point, &stratum) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            // (stratum + u) / n can round up to the next boundary for large n.
            let x = (stratum as f64 + u) / n as f64;
            let upper = (stratum + 1) as f64 / n as f64;
            point[j] = if x >= upper { x.next_down() } else { x };
        }
    }
    let configs = points
        .iter()
        .map(|p| space.denormalize(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleBatch {
        seed,
        n,
        points,
        configs,
    })
}
