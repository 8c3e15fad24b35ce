//! Supervised corpus generation: balanced collection, preprocessing,
//! persistence and splitting of frame/action sequences.
//!
//! A sample is four consecutive preprocessed frames plus the four actions
//! taken at them, labeled with the true state reached after the fourth
//! action. Windows slide with stride 1 inside a single episode and never
//! cross a reset.

mod format;

pub use format::{
    Dataset, DatasetWriter, Manifest, CHANNELS, FORMAT_VERSION, FRAME_BYTES, FRAME_SIDE,
    RECORD_BYTES, SEQ_LEN,
};

use crate::env::{self, Action, CartPoleEnv, EnvParams, Frame, State, StateBounds};
use crate::error::{Error, Result};
use crate::nn::FeatMap;
use crate::seed::{sub_rng, sub_seed};
use ndarray::{Array2, Array3};
use rand::Rng;
use std::path::Path;

/// Downsample a raw 128×128 RGB frame to 64×64 by 2×2 area averaging and
/// scale into [0, 1]. Output is channel-major (3, 64, 64).
pub fn preprocess(raw: &[u8]) -> Result<Array3<f64>> {
    let (rw, rh, ch) = (env::FRAME_WIDTH, env::FRAME_HEIGHT, env::FRAME_CHANNELS);
    if raw.len() != rw * rh * ch {
        return Err(Error::InvalidShape {
            expected: format!("{rw}×{rh}×{ch} = {} bytes", rw * rh * ch),
            found: format!("{} bytes", raw.len()),
        });
    }
    let side = FRAME_SIDE;
    let mut out = Array3::<f64>::zeros((ch, side, side));
    for c in 0..ch {
        for oy in 0..side {
            for ox in 0..side {
                let mut sum = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        sum += u32::from(raw[((2 * oy + dy) * rw + 2 * ox + dx) * ch + c]);
                    }
                }
                out[[c, oy, ox]] = (f64::from(sum) / 4.0) / 255.0;
            }
        }
    }
    Ok(out)
}

/// Byte form of a preprocessed frame: the 2×2 block average, which the
/// renderer palette keeps exactly integral. `byte / 255` equals the
/// [`preprocess`] value bit for bit, so storage loses nothing.
pub(crate) fn resize_to_bytes(frame: &Frame) -> [u8; FRAME_BYTES] {
    let (rw, ch) = (env::FRAME_WIDTH, env::FRAME_CHANNELS);
    let raw = frame.data();
    let side = FRAME_SIDE;
    let mut out = [0u8; FRAME_BYTES];
    for c in 0..ch {
        for oy in 0..side {
            for ox in 0..side {
                let mut sum = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        sum += u32::from(raw[((2 * oy + dy) * rw + 2 * ox + dx) * ch + c]);
                    }
                }
                assert!(sum % 4 == 0, "renderer palette must keep block sums divisible by 4");
                out[(c * side + oy) * side + ox] = (sum / 4) as u8;
            }
        }
    }
    out
}

/// Uniform discretization of the state space with per-bin sample tallies.
#[derive(Debug, Clone)]
pub struct BinTable {
    pub bins_per_dim: [usize; 4],
    pub lows: [f64; 4],
    pub highs: [f64; 4],
    counts: Vec<u64>,
}

impl BinTable {
    pub fn new(bins_per_dim: [usize; 4], env: &EnvParams, v_cap: f64, omega_cap: f64) -> Self {
        let lows = [-env.position_bound, -v_cap, -env.angle_bound, -omega_cap];
        let highs = [env.position_bound, v_cap, env.angle_bound, omega_cap];
        let n: usize = bins_per_dim.iter().product();
        BinTable { bins_per_dim, lows, highs, counts: vec![0; n] }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn multi_index(&self, bin: usize) -> [usize; 4] {
        let [_, n1, n2, n3] = self.bins_per_dim;
        let mut rest = bin;
        let i3 = rest % n3;
        rest /= n3;
        let i2 = rest % n2;
        rest /= n2;
        let i1 = rest % n1;
        rest /= n1;
        [rest, i1, i2, i3]
    }

    /// State-space box of one bin.
    pub fn bounds(&self, bin: usize) -> Result<StateBounds> {
        if bin >= self.n_bins() {
            return Err(Error::InvalidBin { index: bin, n_bins: self.n_bins() });
        }
        let idx = self.multi_index(bin);
        let mut low = [0.0; 4];
        let mut high = [0.0; 4];
        for d in 0..4 {
            let width = (self.highs[d] - self.lows[d]) / self.bins_per_dim[d] as f64;
            low[d] = self.lows[d] + idx[d] as f64 * width;
            high[d] = low[d] + width;
        }
        Ok(StateBounds { low, high })
    }

    /// Bin containing the state; values outside the covered box clamp into
    /// the edge bins so every state is countable.
    pub fn locate(&self, state: &State) -> usize {
        let vals = state.to_array();
        let mut bin = 0usize;
        for d in 0..4 {
            let n = self.bins_per_dim[d];
            let t = (vals[d] - self.lows[d]) / (self.highs[d] - self.lows[d]);
            let i = ((t * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
            bin = bin * n + i;
        }
        bin
    }

    pub fn record(&mut self, state: &State) {
        let bin = self.locate(state);
        self.counts[bin] += 1;
    }
}

/// How episode start states are chosen during collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetPolicy {
    /// Cycle round-robin over bins whose tally is at or below the running
    /// mean, resetting uniformly inside the chosen bin.
    BinBalanced,
    /// Always reset near the center, like a plain episodic rollout.
    CenterOnly,
}

impl ResetPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ResetPolicy::BinBalanced => "bin_balanced",
            ResetPolicy::CenterOnly => "center_only",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CollectConfig {
    pub n_samples: u64,
    pub bins_per_dim: [usize; 4],
    pub v_cap: f64,
    pub omega_cap: f64,
    pub seed: u64,
    pub reset_policy: ResetPolicy,
}

pub struct CollectOutput {
    pub manifest: Manifest,
    pub bins: BinTable,
}

/// Generate `n_samples` sequence samples into `out_dir/dataset.bin` plus
/// `manifest.txt` and `bin_histogram.csv`. Fully determined by the seed.
pub fn collect(env_params: &EnvParams, cfg: &CollectConfig, out_dir: &Path) -> Result<CollectOutput> {
    env_params.validate()?;
    if cfg.n_samples == 0 {
        return Err(Error::Empty { what: "requested sample count".into() });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut writer = DatasetWriter::create(&out_dir.join("dataset.bin"))?;
    let mut bins = BinTable::new(cfg.bins_per_dim, env_params, cfg.v_cap, cfg.omega_cap);
    let mut env = CartPoleEnv::new(*env_params);

    let mut episode_id: u32 = 0;
    let mut cursor = 0usize; // round-robin position over bins
    let mut barren_streak = 0u32;

    while writer.count() < cfg.n_samples {
        // choose a start region
        let reset_seed = sub_seed(cfg.seed, "ep.reset", u64::from(episode_id));
        match cfg.reset_policy {
            ResetPolicy::CenterOnly => {
                env.reset(reset_seed);
            }
            ResetPolicy::BinBalanced => {
                let mean = writer.count() as f64 / bins.n_bins() as f64;
                let mut chosen = cursor;
                for probe in 0..bins.n_bins() {
                    let candidate = (cursor + probe) % bins.n_bins();
                    if bins.counts()[candidate] as f64 <= mean {
                        chosen = candidate;
                        break;
                    }
                }
                cursor = (chosen + 1) % bins.n_bins();
                env.reset_in(reset_seed, &bins.bounds(chosen)?);
            }
        }

        // roll the episode with random actions
        let mut action_rng = sub_rng(cfg.seed, "ep.actions", u64::from(episode_id));
        let mut states = vec![env.state()];
        let mut frame_bytes: Vec<[u8; FRAME_BYTES]> = Vec::new();
        let mut actions: Vec<u8> = Vec::new();
        loop {
            frame_bytes.push(resize_to_bytes(&env.render()));
            let a = action_rng.random_range(0..2u8);
            actions.push(a);
            let r = env.step(Action::from_value(a)?)?;
            states.push(r.next_state);
            if r.terminated || r.truncated {
                break;
            }
        }

        // slide length-4 windows, stride 1, inside this episode
        let t = actions.len(); // number of steps taken
        let mut emitted = 0u64;
        if t >= SEQ_LEN {
            for k in 0..=(t - SEQ_LEN) {
                if writer.count() >= cfg.n_samples {
                    break;
                }
                let frames: [&[u8; FRAME_BYTES]; SEQ_LEN] =
                    [&frame_bytes[k], &frame_bytes[k + 1], &frame_bytes[k + 2], &frame_bytes[k + 3]];
                let acts: [u8; SEQ_LEN] =
                    [actions[k], actions[k + 1], actions[k + 2], actions[k + 3]];
                let target = states[k + SEQ_LEN];
                writer.write_record(episode_id, k as u32, &frames, &acts, &target.to_array())?;
                bins.record(&target);
                emitted += 1;
            }
        }
        if emitted == 0 {
            barren_streak += 1;
            if barren_streak > 10_000 {
                return Err(Error::Config {
                    detail: "collection stalled: 10000 consecutive episodes yielded no samples".into(),
                });
            }
        } else {
            barren_streak = 0;
        }
        episode_id += 1;
    }

    let n = writer.finish()?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        n_samples: n,
        seed: cfg.seed,
        reset_policy: cfg.reset_policy.name().to_string(),
        bins_per_dim: cfg.bins_per_dim,
        v_cap: cfg.v_cap,
        omega_cap: cfg.omega_cap,
        episodes_used: u64::from(episode_id),
        env: *env_params,
    };
    manifest.write(&out_dir.join("manifest.txt"))?;
    write_histogram(&bins, &out_dir.join("bin_histogram.csv"))?;
    Ok(CollectOutput { manifest, bins })
}

fn write_histogram(bins: &BinTable, path: &Path) -> Result<()> {
    let mut s = String::from("bin_x,bin_x_dot,bin_theta,bin_theta_dot,count\n");
    for (bin, count) in bins.counts().iter().enumerate() {
        let [i0, i1, i2, i3] = bins.multi_index(bin);
        s.push_str(&format!("{i0},{i1},{i2},{i3},{count}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Disjoint covering train/validation partition of `0..n`, shuffled by seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
}

pub fn split(n: usize, train_ratio: f64, seed: u64) -> Result<Split> {
    if n == 0 {
        return Err(Error::Empty { what: "dataset".into() });
    }
    let mut ids: Vec<u32> = (0..n as u32).collect();
    let mut rng = sub_rng(seed, "split", 0);
    // Fisher-Yates
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let n_train = ((train_ratio * n as f64).round() as usize).min(n);
    let val = ids.split_off(n_train);
    Ok(Split { train: ids, val })
}

/// Assemble a training batch: frames as one channel-major [`FeatMap`] over
/// `batch·seq_len` images, actions and targets as small dense matrices.
pub fn fill_batch(ds: &Dataset, ids: &[u32]) -> (FeatMap, Array2<f64>, Array2<f64>) {
    let b = ids.len();
    let side = FRAME_SIDE;
    let px = side * side;
    let n_imgs = b * SEQ_LEN;
    let mut frames = FeatMap::zeros(CHANNELS, n_imgs, side, side);
    let mut actions = Array2::<f64>::zeros((b, SEQ_LEN));
    let mut targets = Array2::<f64>::zeros((b, 4));
    for (bi, &id) in ids.iter().enumerate() {
        let id = id as usize;
        for k in 0..SEQ_LEN {
            let src = ds.frame_bytes(id, k);
            let img = bi * SEQ_LEN + k;
            for c in 0..CHANNELS {
                let mut dst = frames.mat.row_mut(c);
                let dst = dst.slice_mut(ndarray::s![img * px..(img + 1) * px]);
                let src = &src[c * px..(c + 1) * px];
                for (d, &s) in dst.into_slice().unwrap().iter_mut().zip(src) {
                    *d = f64::from(s) / 255.0;
                }
            }
        }
        for k in 0..SEQ_LEN {
            actions[[bi, k]] = f64::from(ds.sample_actions(id)[k]);
        }
        targets.row_mut(bi).assign(&ndarray::ArrayView1::from(&ds.targets[id]));
    }
    (frames, actions, targets)
}
