use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GradientSet, Network};
use crate::error::{Error, Result};

/// Adam with bias-corrected moment estimates. Moment buffers are created
/// lazily on the first step so one optimizer can serve any parameter list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        self.step_params(net.params_mut(), grads)
    }

    /// Descends `params` along `grads`, which must match in count and shape.
    pub fn step_params(&mut self, mut params: Vec<&mut Array2<f64>>, grads: &GradientSet) -> Result<()> {
        if params.len() != grads.0.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters, {} gradients",
                params.len(),
                grads.0.len()
            )));
        }
        for (p, g) in params.iter().zip(&grads.0) {
            if p.dim() != g.dim() {
                return Err(Error::ShapeMismatch(format!("parameter {:?} vs gradient {:?}", p.dim(), g.dim())));
            }
        }
        if grads.0.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient"));
        }
        if self.m.is_empty() {
            self.m = grads.0.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.0.len() || self.m.iter().zip(&grads.0).any(|(m, g)| m.dim() != g.dim()) {
            return Err(Error::ShapeMismatch("optimizer state belongs to another parameter list".into()));
        }

        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            m.zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            v.zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            ndarray::Zip::from(&mut **p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p -= self.lr * (m / c1) / ((v / c2).sqrt() + self.eps);
            });
        }
        Ok(())
    }
}
