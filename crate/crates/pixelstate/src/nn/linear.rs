use super::{join, uniform_init_1d, uniform_init_2d, Params};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Fully connected layer, `y = x Wᵀ + b`, with `W` stored as (out, in).
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
}

impl Linear {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: uniform_init_2d(out_dim, in_dim, in_dim, rng),
            b: uniform_init_1d(out_dim, in_dim, rng),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    /// `x`: (batch, in) → (batch, out).
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// Accumulates gradients; `x` is the input the forward pass saw.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.gw += &dy.t().dot(x);
        self.gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.view().into_dyn());
        f(&join(prefix, "b"), self.b.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.view_mut().into_dyn());
        f(&join(prefix, "b"), self.b.view_mut().into_dyn());
    }

    fn visit_grads(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.gw.view().into_dyn());
        f(&join(prefix, "b"), self.gb.view().into_dyn());
    }

    fn visit_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>, ndarray::ArrayViewD<'_, f64>),
    ) {
        f(&join(prefix, "w"), self.w.view_mut().into_dyn(), self.gw.view().into_dyn());
        f(&join(prefix, "b"), self.b.view_mut().into_dyn(), self.gb.view().into_dyn());
    }

    fn zero_grads(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }
}
