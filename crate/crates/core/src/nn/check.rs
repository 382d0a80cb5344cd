use ndarray::Array2;
use rand::Rng;

use super::Network;
use crate::error::{Error, Result};
use crate::rng;

const MAX_PARAMS: usize = 10_000;
/// Floor on the relative-error denominator so that gradients which are zero
/// analytically (a bias feeding batch norm, say) compare on absolute terms.
const DENOM_FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(DENOM_FLOOR)
}

/// Largest relative discrepancy between backpropagated gradients and central
/// differences of `0.5 * sum((net(batch) - t)^2)`, with `t` a fixed
/// pseudo-random target. Covers every parameter and the input batch.
///
/// Forward passes use the network's current mode; in train mode batch-norm
/// layers use batch statistics but running statistics are left untouched.
pub fn finite_diff_check(net: &Network, batch: &Array2<f64>, epsilon: f64) -> Result<f64> {
    if net.param_count() >= MAX_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "{} parameters exceed the finite-difference budget of {MAX_PARAMS}",
            net.param_count()
        )));
    }
    let mut r = rng::stream(0xfd, 0);
    let out_dim = (batch.nrows(), net.output_width());
    let target = Array2::from_shape_simple_fn(out_dim, || r.random_range(-1.0..1.0));
    let loss = |n: &Network, x: &Array2<f64>| -> Result<f64> {
        let y = n.output(x)?;
        Ok(0.5 * (&y - &target).mapv(|d| d * d).sum())
    };

    let mut work = net.clone();
    let y = work.forward(batch)?;
    let back = work.backward(&(&y - &target))?;

    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for (k, grad) in back.grads.0.iter().enumerate() {
        for idx in 0..grad.len() {
            let (i, j) = (idx / grad.ncols(), idx % grad.ncols());
            let original = probe.params()[k][[i, j]];
            probe.params_mut()[k][[i, j]] = original + epsilon;
            let up = loss(&probe, batch)?;
            probe.params_mut()[k][[i, j]] = original - epsilon;
            let down = loss(&probe, batch)?;
            probe.params_mut()[k][[i, j]] = original;
            worst = worst.max(relative_error(grad[[i, j]], (up - down) / (2.0 * epsilon)));
        }
    }

    let mut x = batch.clone();
    for idx in 0..x.len() {
        let (i, j) = (idx / x.ncols(), idx % x.ncols());
        let original = x[[i, j]];
        x[[i, j]] = original + epsilon;
        let up = loss(net, &x)?;
        x[[i, j]] = original - epsilon;
        let down = loss(net, &x)?;
        x[[i, j]] = original;
        worst = worst.max(relative_error(back.input_grad[[i, j]], (up - down) / (2.0 * epsilon)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, NetworkBuilder};

    fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, 7);
        Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_net_is_exact() {
        let mut r = rng::stream(1, 0);
        let net = NetworkBuilder::new(4, &mut r).dense(3).build();
        let err = finite_diff_check(&net, &batch(6, 4, 1), 1e-5).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn relu_net() {
        for seed in 0..5 {
            let mut r = rng::stream(seed, 0);
            let net = NetworkBuilder::new(5, &mut r).dense(16).relu().dense(16).relu().dense(3).build();
            let err = finite_diff_check(&net, &batch(8, 5, seed), 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn batch_norm_both_modes() {
        for seed in 0..5 {
            let mut r = rng::stream(seed, 0);
            let mut net = NetworkBuilder::new(5, &mut r)
                .dense(12)
                .relu()
                .batch_norm()
                .dense(12)
                .relu()
                .dense(2)
                .sigmoid()
                .build();
            let train = finite_diff_check(&net, &batch(8, 5, seed), 1e-5).unwrap();
            assert!(train <= 1e-3, "seed {seed}: {train}");
            net.set_mode(Mode::Eval);
            let eval = finite_diff_check(&net, &batch(8, 5, seed), 1e-5).unwrap();
            assert!(eval <= 1e-4, "seed {seed}: {eval}");
        }
    }

    #[test]
    fn refuses_large_nets() {
        let mut r = rng::stream(0, 0);
        let net = NetworkBuilder::new(100, &mut r).dense(100).build();
        assert!(finite_diff_check(&net, &batch(2, 100, 0), 1e-5).is_err());
    }
}
