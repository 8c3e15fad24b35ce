//! The frame-sequence → state regressor.
//!
//! Per frame, a two-layer stride-2 CNN with ReLU feeds a fully connected
//! layer producing a 128-wide feature vector. Each feature is concatenated
//! with the scalar action taken at that frame and pushed through a GRU; the
//! final hidden state passes through a small fully connected head that
//! outputs the 4-vector `[x, ẋ, θ, θ̇]`. Training minimizes mean squared
//! error end to end.

pub(crate) mod checkpoint;
mod train;

pub use checkpoint::{load_predictor, save_predictor, PredictorCheckpoint};
pub use train::{train, EpochStats, ResumeState, TrainConfig, TrainOutput};

use crate::error::{Error, Result};
use crate::nn::{self, Conv2d, FeatMap, GruCell, GruStepCache, Linear, Params};
use crate::seed::sub_rng;
use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};

/// Layer dimensions. The defaults are the shipping architecture; tests use
/// reduced instances (small frames, thin GRU) for oracle work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorArch {
    pub frame_channels: usize,
    pub frame_size: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub head_hidden: usize,
    pub seq_len: usize,
    pub state_dim: usize,
}

impl Default for PredictorArch {
    fn default() -> Self {
        PredictorArch {
            frame_channels: 3,
            frame_size: 64,
            conv1_channels: 16,
            conv2_channels: 32,
            kernel: 3,
            stride: 2,
            pad: 1,
            feature_dim: 128,
            hidden_dim: 128,
            head_hidden: 64,
            seq_len: 4,
            state_dim: 4,
        }
    }
}

impl PredictorArch {
    fn conv_out(&self, size: usize) -> usize {
        (size + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Spatial side after the two stride-2 convolutions.
    pub fn encoded_side(&self) -> usize {
        self.conv_out(self.conv_out(self.frame_size))
    }

    /// Flattened width entering the encoder's fully connected layer.
    pub fn flat_dim(&self) -> usize {
        self.conv2_channels * self.encoded_side() * self.encoded_side()
    }

    /// GRU input width: feature plus the scalar action.
    pub fn gru_input(&self) -> usize {
        self.feature_dim + 1
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.frame_channels,
            self.frame_size,
            self.conv1_channels,
            self.conv2_channels,
            self.kernel,
            self.stride,
            self.feature_dim,
            self.hidden_dim,
            self.head_hidden,
            self.seq_len,
            self.state_dim,
        ];
        if pos.iter().any(|&v| v == 0) {
            return Err(Error::Config { detail: "predictor arch dimensions must be positive".into() });
        }
        if self.encoded_side() == 0 {
            return Err(Error::Config {
                detail: format!("frame size {} too small for two stride-{} convs", self.frame_size, self.stride),
            });
        }
        Ok(())
    }
}

/// All learnable parameters of the regressor.
#[derive(Debug, Clone)]
pub struct PredictorModel {
    pub arch: PredictorArch,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc: Linear,
    pub gru: GruCell,
    pub head1: Linear,
    pub head2: Linear,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache {
    frames_n: usize,
    cols1: Array2<f64>,
    a1: FeatMap,
    cols2: Array2<f64>,
    a2: FeatMap,
    flat: Array2<f64>,
    feats: Array2<f64>,
    gru_caches: Vec<GruStepCache>,
    hidden_states: Vec<Array2<f64>>,
    head_act: Array2<f64>,
}

impl PredictorModel {
    pub fn new(arch: PredictorArch, seed: u64) -> Self {
        arch.validate().expect("invalid predictor architecture");
        let rng = |label| sub_rng(seed, label, 0);
        PredictorModel {
            arch,
            conv1: Conv2d::new(
                arch.conv1_channels,
                arch.frame_channels,
                arch.kernel,
                arch.stride,
                arch.pad,
                &mut rng("init.conv1"),
            ),
            conv2: Conv2d::new(
                arch.conv2_channels,
                arch.conv1_channels,
                arch.kernel,
                arch.stride,
                arch.pad,
                &mut rng("init.conv2"),
            ),
            fc: Linear::new(arch.feature_dim, arch.flat_dim(), &mut rng("init.fc")),
            gru: GruCell::new(arch.hidden_dim, arch.gru_input(), &mut rng("init.gru")),
            head1: Linear::new(arch.head_hidden, arch.hidden_dim, &mut rng("init.head1")),
            head2: Linear::new(arch.state_dim, arch.head_hidden, &mut rng("init.head2")),
        }
    }

    /// Encode a batch of images (channel-major) into feature rows, keeping
    /// intermediates. `frames.batch` counts images, not samples.
    fn encode(&self, frames: &FeatMap) -> (Array2<f64>, Array2<f64>, FeatMap, Array2<f64>, FeatMap, Array2<f64>) {
        let (mut a1, cols1) = self.conv1.forward(frames);
        nn::relu_inplace(&mut a1.mat);
        let (mut a2, cols2) = self.conv2.forward(&a1);
        nn::relu_inplace(&mut a2.mat);

        // flatten (c, h, w) per image into rows
        let n = a2.batch;
        let side = a2.h;
        let px = side * side;
        let mut flat = Array2::<f64>::zeros((n, self.arch.flat_dim()));
        for c in 0..a2.channels() {
            let src = a2.mat.row(c);
            for img in 0..n {
                let dst_start = c * px;
                let src_start = img * px;
                flat.row_mut(img)
                    .slice_mut(ndarray::s![dst_start..dst_start + px])
                    .assign(&src.slice(ndarray::s![src_start..src_start + px]));
            }
        }
        let mut feats = self.fc.forward(&flat);
        nn::relu_inplace(&mut feats);
        (feats, cols1, a1, cols2, a2, flat)
    }

    /// Forward a batch of samples. `frames` holds `batch·seq_len` images in
    /// sample-major order; `actions` is (batch, seq_len).
    pub fn forward(&self, frames: &FeatMap, actions: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let arch = &self.arch;
        let batch = actions.nrows();
        if actions.ncols() != arch.seq_len {
            return Err(Error::InvalidShape {
                expected: format!("(batch, {})", arch.seq_len),
                found: format!("{:?}", actions.shape()),
            });
        }
        if frames.batch != batch * arch.seq_len
            || frames.channels() != arch.frame_channels
            || frames.h != arch.frame_size
            || frames.w != arch.frame_size
        {
            return Err(Error::InvalidShape {
                expected: format!(
                    "{} images of {}×{}×{}",
                    batch * arch.seq_len,
                    arch.frame_channels,
                    arch.frame_size,
                    arch.frame_size
                ),
                found: format!("{} images of {}×{}×{}", frames.batch, frames.channels(), frames.h, frames.w),
            });
        }

        let (feats, cols1, a1, cols2, a2, flat) = self.encode(frames);

        let mut h = Array2::<f64>::zeros((batch, arch.hidden_dim));
        let mut hidden_states = vec![h.clone()];
        let mut gru_caches = Vec::with_capacity(arch.seq_len);
        for k in 0..arch.seq_len {
            let mut p = Array2::<f64>::zeros((batch, arch.gru_input()));
            for b in 0..batch {
                p.row_mut(b)
                    .slice_mut(ndarray::s![..arch.feature_dim])
                    .assign(&feats.row(b * arch.seq_len + k));
                p[[b, arch.feature_dim]] = actions[[b, k]];
            }
            let (h_next, cache) = self.gru.step(&h, &p);
            h = h_next;
            hidden_states.push(h.clone());
            gru_caches.push(cache);
        }

        let mut head_act = self.head1.forward(&h);
        nn::relu_inplace(&mut head_act);
        let out = self.head2.forward(&head_act);

        let cache = ForwardCache {
            frames_n: frames.batch,
            cols1,
            a1,
            cols2,
            a2,
            flat,
            feats,
            gru_caches,
            hidden_states,
            head_act,
        };
        Ok((out, cache))
    }

    /// Backprop `dout` (gradient w.r.t. the output) through the whole model,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, cache: &ForwardCache, dout: &Array2<f64>) {
        let arch = self.arch;
        let batch = dout.nrows();

        let mut d_head_act = self.head2.backward(&cache.head_act, dout);
        nn::relu_backward_inplace(&mut d_head_act, &cache.head_act);
        let h_last = &cache.hidden_states[arch.seq_len];
        let mut dh = self.head1.backward(h_last, &d_head_act);

        let mut dfeats = Array2::<f64>::zeros((cache.frames_n, arch.feature_dim));
        for k in (0..arch.seq_len).rev() {
            let (dh_prev, dp) = self.gru.backward(&cache.gru_caches[k], &dh);
            for b in 0..batch {
                let mut row = dfeats.row_mut(b * arch.seq_len + k);
                row += &dp.row(b).slice(ndarray::s![..arch.feature_dim]);
            }
            dh = dh_prev;
        }

        let mut dfeats_pre = dfeats;
        nn::relu_backward_inplace(&mut dfeats_pre, &cache.feats);
        let dflat = self.fc.backward(&cache.flat, &dfeats_pre);

        // unflatten rows back into the channel-major map
        let side = arch.encoded_side();
        let px = side * side;
        let mut d_a2 = FeatMap::zeros(arch.conv2_channels, cache.frames_n, side, side);
        for c in 0..arch.conv2_channels {
            let mut dst = d_a2.mat.row_mut(c);
            for img in 0..cache.frames_n {
                dst.slice_mut(ndarray::s![img * px..(img + 1) * px])
                    .assign(&dflat.row(img).slice(ndarray::s![c * px..(c + 1) * px]));
            }
        }
        nn::relu_backward_inplace(&mut d_a2.mat, &cache.a2.mat);
        let mid = arch.conv_out(arch.frame_size);
        let mut d_a1 = self
            .conv2
            .backward(&cache.cols2, &d_a2, (mid, mid), true)
            .expect("conv2 input gradient requested");
        nn::relu_backward_inplace(&mut d_a1.mat, &cache.a1.mat);
        // the frame gradient is never needed: frames are data
        self.conv1.backward(&cache.cols1, &d_a1, (arch.frame_size, arch.frame_size), false);
    }

    /// Batch mean squared error and its gradient w.r.t. predictions.
    /// Per sample the loss is the squared Euclidean norm of the residual;
    /// the batch value is the mean over samples.
    pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
        let batch = pred.nrows() as f64;
        let diff = pred - target;
        let loss = diff.mapv(|d| d * d).sum() / batch;
        let dpred = diff * (2.0 / batch);
        (loss, dpred)
    }

    /// Single-sample squared-error loss (no batch averaging).
    pub fn sample_loss(pred: &[f64; 4], target: &[f64; 4]) -> f64 {
        pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum()
    }

    /// Encode one preprocessed frame (3, side, side) into a feature vector.
    pub fn encode_frame(&self, frame: &Array3<f64>) -> Result<Array1<f64>> {
        let arch = &self.arch;
        let want = (arch.frame_channels, arch.frame_size, arch.frame_size);
        if frame.dim() != want {
            return Err(Error::InvalidShape {
                expected: format!("{want:?}"),
                found: format!("{:?}", frame.dim()),
            });
        }
        let mut fm = FeatMap::zeros(arch.frame_channels, 1, arch.frame_size, arch.frame_size);
        for c in 0..arch.frame_channels {
            let src = frame.index_axis(Axis(0), c);
            let flat: Vec<f64> = src.iter().copied().collect();
            fm.mat.row_mut(c).assign(&Array1::from(flat));
        }
        let (feats, ..) = self.encode(&fm);
        Ok(feats.row(0).to_owned())
    }

    /// One GRU step on vectors, exactly the gate equations.
    pub fn gru_step(&self, h_prev: ArrayView1<'_, f64>, p: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let arch = &self.arch;
        if h_prev.len() != arch.hidden_dim || p.len() != arch.gru_input() {
            return Err(Error::InvalidShape {
                expected: format!("h[{}], p[{}]", arch.hidden_dim, arch.gru_input()),
                found: format!("h[{}], p[{}]", h_prev.len(), p.len()),
            });
        }
        let h = h_prev.insert_axis(Axis(0)).to_owned();
        let p = p.insert_axis(Axis(0)).to_owned();
        let (h_next, _) = self.gru.step(&h, &p);
        Ok(h_next.row(0).to_owned())
    }

    /// Predict the state following one window of per-frame features and the
    /// actions taken at them. Control loops use this form so each frame is
    /// encoded exactly once as it arrives.
    pub fn predict_from_features(&self, features: &[Array1<f64>], actions: &[f64]) -> Result<[f64; 4]> {
        let arch = &self.arch;
        if features.len() != arch.seq_len || actions.len() != arch.seq_len {
            return Err(Error::InvalidShape {
                expected: format!("{} features and actions", arch.seq_len),
                found: format!("{} features, {} actions", features.len(), actions.len()),
            });
        }
        let mut h = Array2::<f64>::zeros((1, arch.hidden_dim));
        for (feat, &action) in features.iter().zip(actions) {
            if feat.len() != arch.feature_dim {
                return Err(Error::InvalidShape {
                    expected: format!("feature[{}]", arch.feature_dim),
                    found: format!("feature[{}]", feat.len()),
                });
            }
            let mut p = Array2::<f64>::zeros((1, arch.gru_input()));
            p.row_mut(0).slice_mut(ndarray::s![..arch.feature_dim]).assign(feat);
            p[[0, arch.feature_dim]] = action;
            let (h_next, _) = self.gru.step(&h, &p);
            h = h_next;
        }
        let mut head_act = self.head1.forward(&h);
        nn::relu_inplace(&mut head_act);
        let out = self.head2.forward(&head_act);
        let mut result = [0.0; 4];
        for (i, r) in result.iter_mut().enumerate() {
            *r = out[[0, i]];
        }
        Ok(result)
    }

    /// Predict the state following one 4-frame window.
    pub fn predict(&self, frames: &[Array3<f64>], actions: &[f64]) -> Result<[f64; 4]> {
        let arch = &self.arch;
        if frames.len() != arch.seq_len || actions.len() != arch.seq_len {
            return Err(Error::InvalidShape {
                expected: format!("{} frames and actions", arch.seq_len),
                found: format!("{} frames, {} actions", frames.len(), actions.len()),
            });
        }
        let features = frames
            .iter()
            .map(|f| self.encode_frame(f))
            .collect::<Result<Vec<_>>>()?;
        self.predict_from_features(&features, actions)
    }
}

impl Params for PredictorModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.conv1.visit(&nn::join(prefix, "conv1"), f);
        self.conv2.visit(&nn::join(prefix, "conv2"), f);
        self.fc.visit(&nn::join(prefix, "fc"), f);
        self.gru.visit(&nn::join(prefix, "gru"), f);
        self.head1.visit(&nn::join(prefix, "head1"), f);
        self.head2.visit(&nn::join(prefix, "head2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>)) {
        self.conv1.visit_mut(&nn::join(prefix, "conv1"), f);
        self.conv2.visit_mut(&nn::join(prefix, "conv2"), f);
        self.fc.visit_mut(&nn::join(prefix, "fc"), f);
        self.gru.visit_mut(&nn::join(prefix, "gru"), f);
        self.head1.visit_mut(&nn::join(prefix, "head1"), f);
        self.head2.visit_mut(&nn::join(prefix, "head2"), f);
    }

    fn visit_grads(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.conv1.visit_grads(&nn::join(prefix, "conv1"), f);
        self.conv2.visit_grads(&nn::join(prefix, "conv2"), f);
        self.fc.visit_grads(&nn::join(prefix, "fc"), f);
        self.gru.visit_grads(&nn::join(prefix, "gru"), f);
        self.head1.visit_grads(&nn::join(prefix, "head1"), f);
        self.head2.visit_grads(&nn::join(prefix, "head2"), f);
    }

    fn visit_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, f64>, ndarray::ArrayViewD<'_, f64>),
    ) {
        self.conv1.visit_pairs(&nn::join(prefix, "conv1"), f);
        self.conv2.visit_pairs(&nn::join(prefix, "conv2"), f);
        self.fc.visit_pairs(&nn::join(prefix, "fc"), f);
        self.gru.visit_pairs(&nn::join(prefix, "gru"), f);
        self.head1.visit_pairs(&nn::join(prefix, "head1"), f);
        self.head2.visit_pairs(&nn::join(prefix, "head2"), f);
    }

    fn zero_grads(&mut self) {
        self.conv1.zero_grads();
        self.conv2.zero_grads();
        self.fc.zero_grads();
        self.gru.zero_grads();
        self.head1.zero_grads();
        self.head2.zero_grads();
    }
}

/// Small architecture used by oracle and gradient tests: 4×4 frames, single
/// conv filters, 3-wide GRU.
#[cfg(test)]
pub(crate) fn reduced_arch() -> PredictorArch {
    PredictorArch {
        frame_channels: 1,
        frame_size: 4,
        conv1_channels: 1,
        conv2_channels: 2,
        kernel: 3,
        stride: 2,
        pad: 1,
        feature_dim: 2,
        hidden_dim: 3,
        head_hidden: 3,
        seq_len: 4,
        state_dim: 4,
    }
}
