use super::{join, uniform_init_1d, uniform_init_2d, Params};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Channel-major activation layout: `mat[(c, (b*h + y)*w + x)]`.
///
/// Keeping batches flattened this way lets every convolution in a batch run
/// as a single GEMM against the im2col matrix.
#[derive(Debug, Clone)]
pub struct FeatMap {
    pub mat: Array2<f64>,
    pub batch: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatMap {
    pub fn zeros(channels: usize, batch: usize, h: usize, w: usize) -> Self {
        FeatMap { mat: Array2::zeros((channels, batch * h * w)), batch, h, w }
    }

    pub fn channels(&self) -> usize {
        self.mat.nrows()
    }
}

/// 2-D convolution with square kernel, fixed stride and zero padding.
/// Weights are stored flat as (out_channels, in_channels·k·k) so the forward
/// pass is one matrix product.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let patch = in_channels * kernel * kernel;
        Conv2d {
            w: uniform_init_2d(out_channels, patch, patch, rng),
            b: uniform_init_1d(out_channels, patch, rng),
            gw: Array2::zeros((out_channels, patch)),
            gb: Array1::zeros(out_channels),
            in_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_size(&self, in_size: usize) -> usize {
        (in_size + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Valid output range [lo, hi) for one kernel offset: positions whose
    /// sampled input index stays inside [0, in_size).
    fn valid_range(&self, kk: usize, in_size: usize, out_size: usize) -> (usize, usize) {
        let stride = self.stride as isize;
        let pad = self.pad as isize;
        let kk = kk as isize;
        // in = out*stride + kk − pad ∈ [0, in_size)
        let lo = (pad - kk + stride - 1).div_euclid(stride).clamp(0, out_size as isize);
        let hi_excl = ((in_size as isize - 1 - kk + pad).div_euclid(stride) + 1)
            .clamp(lo, out_size as isize);
        (lo as usize, hi_excl as usize)
    }

    /// Unfold input patches into a (in_c·k·k, batch·oh·ow) matrix.
    /// Hot path: flat-slice loops over precomputed valid ranges.
    fn im2col(&self, x: &FeatMap) -> Array2<f64> {
        let (k, stride, pad) = (self.kernel, self.stride, self.pad);
        let (ih, iw) = (x.h, x.w);
        let (oh, ow) = (self.out_size(ih), self.out_size(iw));
        let n = x.batch * oh * ow;
        let mut cols = Array2::<f64>::zeros((self.in_channels * k * k, n));
        for ic in 0..self.in_channels {
            let x_row = x.mat.row(ic);
            let x_row = x_row.as_slice().expect("FeatMap rows are contiguous");
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, ih, oh);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, iw, ow);
                    let mut col_row = cols.row_mut((ic * k + ky) * k + kx);
                    let col_row = col_row.as_slice_mut().expect("contiguous");
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    // first sampled input column; nonnegative by range choice
                    let ix_lo = ox_lo * stride + kx - pad;
                    for b in 0..x.batch {
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let dst_base = (b * oh + oy) * ow;
                            let dst = &mut col_row[dst_base + ox_lo..dst_base + ox_hi];
                            let src = &x_row[(b * ih + iy) * iw + ix_lo..];
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d = src[j * stride];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-add of column gradients back to input positions.
    fn col2im(&self, dcols: &Array2<f64>, batch: usize, ih: usize, iw: usize) -> FeatMap {
        let (k, stride, pad) = (self.kernel, self.stride, self.pad);
        let (oh, ow) = (self.out_size(ih), self.out_size(iw));
        let mut dx = FeatMap::zeros(self.in_channels, batch, ih, iw);
        for ic in 0..self.in_channels {
            let mut dx_row = dx.mat.row_mut(ic);
            let dx_row = dx_row.as_slice_mut().expect("contiguous");
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, ih, oh);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, iw, ow);
                    let dcol_row = dcols.row((ic * k + ky) * k + kx);
                    let dcol_row = dcol_row.as_slice().expect("contiguous");
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let ix_lo = ox_lo * stride + kx - pad;
                    for b in 0..batch {
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let src_base = (b * oh + oy) * ow;
                            let src = &dcol_row[src_base + ox_lo..src_base + ox_hi];
                            let dst = &mut dx_row[(b * ih + iy) * iw + ix_lo..];
                            for (j, s) in src.iter().enumerate() {
                                dst[j * stride] += s;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Returns the output map and the im2col matrix (needed by `backward`).
    pub fn forward(&self, x: &FeatMap) -> (FeatMap, Array2<f64>) {
        assert_eq!(x.channels(), self.in_channels, "input channel mismatch");
        let cols = self.im2col(x);
        let mut y = self.w.dot(&cols);
        y += &self.b.view().insert_axis(Axis(1));
        let out = FeatMap { mat: y, batch: x.batch, h: self.out_size(x.h), w: self.out_size(x.w) };
        (out, cols)
    }

    /// Accumulates weight gradients; returns the input gradient unless the
    /// caller doesn't need it (the first layer of an encoder never does).
    pub fn backward(
        &mut self,
        cols: &Array2<f64>,
        dy: &FeatMap,
        input_hw: (usize, usize),
        need_dx: bool,
    ) -> Option<FeatMap> {
        self.gw += &dy.mat.dot(&cols.t());
        self.gb += &dy.mat.sum_axis(Axis(1));
        if !need_dx {
            return None;
        }
        let dcols = self.w.t().dot(&dy.mat);
        Some(self.col2im(&dcols, dy.batch, input_hw.0, input_hw.1))
    }
}

impl Params for Conv2d {
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
