//! Minimal dense/convolutional/recurrent layers with explicit backprop.
//!
//! Everything is `f64` and single-threaded; forward passes take `&self` so a
//! frozen model can be shared freely, and callers own the activation caches
//! that backward passes consume. Gradients accumulate into the layer's `g*`
//! buffers until [`Params::zero_grads`].

mod adam;
mod conv;
mod gru;
mod linear;

pub use adam::Adam;
pub use conv::{Conv2d, FeatMap};
pub use gru::{GruCell, GruStepCache};
pub use linear::Linear;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

/// Uniform access to named parameter/gradient tensors, in a fixed order.
///
/// The visit order is part of each model's contract: the optimizer state and
/// the checkpoint format both index by it.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>));
    fn visit_grads(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>));
    /// Visit (parameter, gradient) pairs together, for optimizer updates.
    fn visit_pairs(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>, ArrayViewD<'_, f64>));
    fn zero_grads(&mut self);

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, v| n += v.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Fan-in scaled uniform init, U(-1/√fan_in, 1/√fan_in), row-major draws.
pub fn uniform_init_2d(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

pub fn uniform_init_1d(len: usize, fan_in: usize, rng: &mut impl Rng) -> Array1<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array1::from_shape_simple_fn(len, || rng.random_range(-bound..bound))
}

pub fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// Mask `grad` by the activation pattern of the (already rectified) output.
pub fn relu_backward_inplace(grad: &mut Array2<f64>, activated: &Array2<f64>) {
    ndarray::Zip::from(grad).and(activated).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::Params;

    /// Central-difference gradient check against the analytic gradients in
    /// the model's `g*` buffers. `loss` must be a pure function of the
    /// current parameters.
    pub fn check_gradients<M: Params>(
        model: &mut M,
        mut loss: impl FnMut(&mut M) -> f64,
        probes: usize,
        step: f64,
        rel_tol: f64,
        rng: &mut impl rand::Rng,
    ) {
        // collect analytic grads (flattened, in visit order)
        let mut analytic = Vec::new();
        model.visit_grads("", &mut |name, g| {
            for &v in g.iter() {
                analytic.push((name.to_string(), v));
            }
        });
        let n = analytic.len();
        assert!(n > 0);
        for _ in 0..probes {
            let idx = rng.random_range(0..n);
            let (ref name, g_analytic) = analytic[idx];

            let plus = eval_perturbed(model, &mut loss, idx, step);
            let minus = eval_perturbed(model, &mut loss, idx, -step);
            let g_numeric = (plus - minus) / (2.0 * step);

            let denom = g_analytic.abs().max(g_numeric.abs()).max(1e-8);
            let rel = (g_analytic - g_numeric).abs() / denom;
            assert!(
                rel <= rel_tol,
                "grad mismatch at {name}[{idx}]: analytic {g_analytic:.3e}, numeric {g_numeric:.3e}, rel {rel:.3e}"
            );
        }
    }

    fn eval_perturbed<M: Params>(
        model: &mut M,
        loss: &mut impl FnMut(&mut M) -> f64,
        flat_idx: usize,
        delta: f64,
    ) -> f64 {
        shift_param(model, flat_idx, delta);
        let value = loss(model);
        shift_param(model, flat_idx, -delta);
        value
    }

    fn shift_param<M: Params>(model: &mut M, flat_idx: usize, delta: f64) {
        let mut seen = 0usize;
        model.visit_mut("", &mut |_, mut view| {
            let len = view.len();
            if flat_idx >= seen && flat_idx < seen + len {
                let local = flat_idx - seen;
                *view.iter_mut().nth(local).unwrap() += delta;
            }
            seen += len;
        });
    }
}
