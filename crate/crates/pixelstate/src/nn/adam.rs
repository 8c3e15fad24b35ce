use super::Params;
use ndarray::ArrayD;

/// Adam optimizer with bias correction.
///
/// Moment buffers are created on the first step, aligned with the model's
/// parameter visit order, and can be exported/restored for checkpointing.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: Vec<Moment>,
}

#[derive(Debug, Clone)]
struct Moment {
    name: String,
    m: ArrayD<f64>,
    v: ArrayD<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, state: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, model: &mut impl Params) {
        self.t += 1;
        if self.state.is_empty() {
            model.visit("", &mut |name, view| {
                self.state.push(Moment {
                    name: name.to_string(),
                    m: ArrayD::zeros(view.raw_dim()),
                    v: ArrayD::zeros(view.raw_dim()),
                });
            });
        }
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        let (beta1, beta2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);

        let mut idx = 0usize;
        let state = &mut self.state;
        model.visit_pairs("", &mut |name, mut param, grad| {
            let slot = &mut state[idx];
            debug_assert_eq!(slot.name, name, "optimizer state order drifted");
            ndarray::Zip::from(&mut slot.m).and(&grad).for_each(|m, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
            });
            ndarray::Zip::from(&mut slot.v).and(&grad).for_each(|v, &g| {
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            });
            ndarray::Zip::from(&mut param)
                .and(&slot.m)
                .and(&slot.v)
                .for_each(|p, &m, &v| {
                    let m_hat = m / bias1;
                    let v_hat = v / bias2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
            idx += 1;
        });
    }

    /// (name, m, v) triples in visit order, for checkpointing.
    pub fn export_state(&self) -> Vec<(String, ArrayD<f64>, ArrayD<f64>)> {
        self.state.iter().map(|s| (s.name.clone(), s.m.clone(), s.v.clone())).collect()
    }

    pub fn import_state(&mut self, t: u64, moments: Vec<(String, ArrayD<f64>, ArrayD<f64>)>) {
        self.t = t;
        self.state = moments.into_iter().map(|(name, m, v)| Moment { name, m, v }).collect();
    }
}
