use super::{join, sigmoid, uniform_init_1d, uniform_init_2d, Params};
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;

/// Gated recurrent cell.
///
/// One step computes, with `[a, b]` denoting feature concatenation:
///
/// ```text
/// z = σ(W_z [h_prev, p] + b_z)          update gate
/// r = σ(W_r [h_prev, p] + b_r)          reset gate
/// h̃ = tanh(W_h [r ⊙ h_prev, p] + b_h)  candidate state
/// h = (1 − z) ⊙ h_prev + z ⊙ h̃
/// ```
///
/// Weight matrices are (hidden, hidden + input); the hidden block comes
/// first, matching the concatenation order.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub wz: Array2<f64>,
    pub wr: Array2<f64>,
    pub wh: Array2<f64>,
    pub bz: Array1<f64>,
    pub br: Array1<f64>,
    pub bh: Array1<f64>,
    pub gwz: Array2<f64>,
    pub gwr: Array2<f64>,
    pub gwh: Array2<f64>,
    pub gbz: Array1<f64>,
    pub gbr: Array1<f64>,
    pub gbh: Array1<f64>,
    pub hidden: usize,
    pub input: usize,
}

/// Intermediates of one step, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    /// `[h_prev, p]`, (batch, hidden + input).
    concat: Array2<f64>,
    /// `[r ⊙ h_prev, p]`, (batch, hidden + input).
    concat_r: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    hcand: Array2<f64>,
}

impl GruCell {
    pub fn new(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let fan_in = hidden + input;
        let w = |rng: &mut _| uniform_init_2d(hidden, fan_in, fan_in, rng);
        let b = |rng: &mut _| uniform_init_1d(hidden, fan_in, rng);
        GruCell {
            wz: w(rng),
            bz: b(rng),
            wr: w(rng),
            br: b(rng),
            wh: w(rng),
            bh: b(rng),
            gwz: Array2::zeros((hidden, fan_in)),
            gwr: Array2::zeros((hidden, fan_in)),
            gwh: Array2::zeros((hidden, fan_in)),
            gbz: Array1::zeros(hidden),
            gbr: Array1::zeros(hidden),
            gbh: Array1::zeros(hidden),
            hidden,
            input,
        }
    }

    /// `h_prev`: (batch, hidden), `p`: (batch, input) → next hidden state.
    pub fn step(&self, h_prev: &Array2<f64>, p: &Array2<f64>) -> (Array2<f64>, GruStepCache) {
        assert_eq!(h_prev.ncols(), self.hidden, "hidden width mismatch");
        assert_eq!(p.ncols(), self.input, "input width mismatch");
        let concat = concatenate![Axis(1), h_prev.view(), p.view()];

        let mut z = concat.dot(&self.wz.t());
        z += &self.bz;
        z.mapv_inplace(sigmoid);

        let mut r = concat.dot(&self.wr.t());
        r += &self.br;
        r.mapv_inplace(sigmoid);

        let gated = &r * h_prev;
        let concat_r = concatenate![Axis(1), gated.view(), p.view()];
        let mut hcand = concat_r.dot(&self.wh.t());
        hcand += &self.bh;
        hcand.mapv_inplace(f64::tanh);

        let h = (1.0 - &z) * h_prev + &z * &hcand;
        (h, GruStepCache { concat, concat_r, z, r, hcand })
    }

    /// Backprop one step; returns (dh_prev, dp) and accumulates weight grads.
    pub fn backward(&mut self, cache: &GruStepCache, dh: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h_prev = cache.concat.slice(ndarray::s![.., ..self.hidden]);

        let dz = dh * (&cache.hcand - &h_prev);
        let dhcand = dh * &cache.z;
        let mut dh_prev = dh * (1.0 - &cache.z);

        // tanh'
        let du_h = dhcand * cache.hcand.mapv(|v| 1.0 - v * v);
        self.gwh += &du_h.t().dot(&cache.concat_r);
        self.gbh += &du_h.sum_axis(Axis(0));
        let dconcat_r = du_h.dot(&self.wh);
        let d_gated = dconcat_r.slice(ndarray::s![.., ..self.hidden]);
        let mut dp = dconcat_r.slice(ndarray::s![.., self.hidden..]).to_owned();

        let dr = &d_gated * &h_prev;
        dh_prev += &(&d_gated * &cache.r);

        // sigmoid'
        let du_z = dz * cache.z.mapv(|v| v * (1.0 - v));
        let du_r = dr * cache.r.mapv(|v| v * (1.0 - v));
        self.gwz += &du_z.t().dot(&cache.concat);
        self.gbz += &du_z.sum_axis(Axis(0));
        self.gwr += &du_r.t().dot(&cache.concat);
        self.gbr += &du_r.sum_axis(Axis(0));

        let dconcat = du_z.dot(&self.wz) + du_r.dot(&self.wr);
        dh_prev += &dconcat.slice(ndarray::s![.., ..self.hidden]);
        dp += &dconcat.slice(ndarray::s![.., self.hidden..]);
        (dh_prev, dp)
    }
}

impl Params for GruCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "wz"), self.wz.view().into_dyn());
        f(&join(prefix, "bz"), self.bz.view().into_dyn());
        f(&join(prefix, "wr"), self.wr.view().into_dyn());
        f(&join(prefix, "br"), self.br.view().into_dyn());
        f(&join(prefix, "wh"), self.wh.view().into_dyn());
        f(&join(prefix, "bh"), self.bh.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>)) {
        f(&join(prefix, "wz"), self.wz.view_mut().into_dyn());
        f(&join(prefix, "bz"), self.bz.view_mut().into_dyn());
        f(&join(prefix, "wr"), self.wr.view_mut().into_dyn());
        f(&join(prefix, "br"), self.br.view_mut().into_dyn());
        f(&join(prefix, "wh"), self.wh.view_mut().into_dyn());
        f(&join(prefix, "bh"), self.bh.view_mut().into_dyn());
    }

    fn visit_grads(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "wz"), self.gwz.view().into_dyn());
        f(&join(prefix, "bz"), self.gbz.view().into_dyn());
        f(&join(prefix, "wr"), self.gwr.view().into_dyn());
        f(&join(prefix, "br"), self.gbr.view().into_dyn());
        f(&join(prefix, "wh"), self.gwh.view().into_dyn());
        f(&join(prefix, "bh"), self.gbh.view().into_dyn());
    }

    fn visit_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>, ndarray::ArrayViewD<'_, f64>),
    ) {
        f(&join(prefix, "wz"), self.wz.view_mut().into_dyn(), self.gwz.view().into_dyn());
        f(&join(prefix, "bz"), self.bz.view_mut().into_dyn(), self.gbz.view().into_dyn());
        f(&join(prefix, "wr"), self.wr.view_mut().into_dyn(), self.gwr.view().into_dyn());
        f(&join(prefix, "br"), self.br.view_mut().into_dyn(), self.gbr.view().into_dyn());
        f(&join(prefix, "wh"), self.wh.view_mut().into_dyn(), self.gwh.view().into_dyn());
        f(&join(prefix, "bh"), self.bh.view_mut().into_dyn(), self.gbh.view().into_dyn());
    }

    fn zero_grads(&mut self) {
        for g in [&mut self.gwz, &mut self.gwr, &mut self.gwh] {
            g.fill(0.0);
        }
        for g in [&mut self.gbz, &mut self.gbr, &mut self.gbh] {
            g.fill(0.0);
        }
    }
}
