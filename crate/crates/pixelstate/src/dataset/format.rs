//! On-disk layout of a collected dataset.
//!
//! `dataset.bin`: fixed header, then fixed-length records. All integers
//! little-endian.
//!
//! ```text
//! header: magic [8] = "PXSTDATA", version u32, record_count u64,
//!         frame_side u32, channels u32, seq_len u32
//! record: episode_id u32, step_index u32,
//!         seq_len × (channels·side·side bytes, channel-major),
//!         seq_len action bytes,
//!         4 × f64 target state
//! ```
//!
//! Frames are stored as bytes *before* normalization: the renderer palette
//! guarantees each stored byte is the exact 2×2 block average, so
//! `byte / 255` reproduces [`super::preprocess`] output bit for bit at a
//! quarter of the float size.
//!
//! `manifest.txt` is a human-readable `key = value` companion, written in a
//! fixed key order with no timestamps, so identical runs produce identical
//! bytes.

use crate::env::EnvParams;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: [u8; 8] = *b"PXSTDATA";
pub const FORMAT_VERSION: u32 = 1;
pub const FRAME_SIDE: usize = 64;
pub const CHANNELS: usize = 3;
pub const SEQ_LEN: usize = 4;
pub const FRAME_BYTES: usize = CHANNELS * FRAME_SIDE * FRAME_SIDE;
pub const RECORD_BYTES: usize = 4 + 4 + SEQ_LEN * FRAME_BYTES + SEQ_LEN + 4 * 8;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Streaming record writer; writes to `<path>.tmp` and renames on `finish`,
/// removing the partial file if anything fails in between.
pub struct DatasetWriter {
    path: PathBuf,
    tmp_path: PathBuf,
    out: BufWriter<File>,
    count: u64,
}

impl DatasetWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let tmp_path = path.with_extension("bin.tmp");
        let file = File::create(&tmp_path).map_err(io_err(&tmp_path))?;
        let mut out = BufWriter::new(file);
        // placeholder count, fixed up in finish()
        write_header(&mut out, 0).map_err(io_err(&tmp_path))?;
        Ok(DatasetWriter { path: path.to_path_buf(), tmp_path, out, count: 0 })
    }

    pub fn write_record(
        &mut self,
        episode_id: u32,
        step_index: u32,
        frames: &[&[u8; FRAME_BYTES]; SEQ_LEN],
        actions: &[u8; SEQ_LEN],
        target: &[f64; 4],
    ) -> Result<()> {
        let w = &mut self.out;
        let fail = |e| Error::io(&self.tmp_path, e);
        w.write_all(&episode_id.to_le_bytes()).map_err(fail)?;
        w.write_all(&step_index.to_le_bytes()).map_err(fail)?;
        for f in frames {
            w.write_all(&f[..]).map_err(fail)?;
        }
        w.write_all(actions).map_err(fail)?;
        for v in target {
            w.write_all(&v.to_le_bytes()).map_err(fail)?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(mut self) -> Result<u64> {
        let result = (|| -> std::io::Result<()> {
            self.out.flush()?;
            let mut file = self.out.get_ref();
            use std::io::Seek;
            file.seek(std::io::SeekFrom::Start(0))?;
            write_header(&mut file, self.count)?;
            file.sync_all()?;
            std::fs::rename(&self.tmp_path, &self.path)
        })();
        match result {
            Ok(()) => Ok(self.count),
            Err(e) => {
                let _ = std::fs::remove_file(&self.tmp_path);
                Err(Error::io(&self.tmp_path, e))
            }
        }
    }
}

impl Drop for DatasetWriter {
    fn drop(&mut self) {
        // finish() renames the tmp file away; anything left behind is a
        // partial dataset and must not survive.
        if self.tmp_path.exists() {
            let _ = std::fs::remove_file(&self.tmp_path);
        }
    }
}

fn write_header(w: &mut impl Write, count: u64) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&(FRAME_SIDE as u32).to_le_bytes())?;
    w.write_all(&(CHANNELS as u32).to_le_bytes())?;
    w.write_all(&(SEQ_LEN as u32).to_le_bytes())?;
    Ok(())
}

/// Fully resident dataset; roughly 50 KB per sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub episode_ids: Vec<u32>,
    pub step_indices: Vec<u32>,
    /// n · seq_len · FRAME_BYTES, channel-major within each frame.
    pub frames: Vec<u8>,
    /// n · seq_len.
    pub actions: Vec<u8>,
    pub targets: Vec<[f64; 4]>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn frame_bytes(&self, sample: usize, k: usize) -> &[u8] {
        let start = (sample * SEQ_LEN + k) * FRAME_BYTES;
        &self.frames[start..start + FRAME_BYTES]
    }

    pub fn sample_actions(&self, sample: usize) -> &[u8] {
        &self.actions[sample * SEQ_LEN..(sample + 1) * SEQ_LEN]
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let file = File::open(path).map_err(io_err(path))?;
        let size = file.metadata().map_err(io_err(path))?.len();
        let mut r = BufReader::new(file);

        let corrupt = |detail: &str| Error::CorruptFile { path: path.to_path_buf(), detail: detail.into() };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("file shorter than header"))?;
        if magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(&mut r).map_err(|_| corrupt("truncated header"))?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = read_u64(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
        let side = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
        let channels = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
        let seq_len = read_u32(&mut r).map_err(|_| corrupt("truncated header"))? as usize;
        if side != FRAME_SIDE || channels != CHANNELS || seq_len != SEQ_LEN {
            return Err(Error::InvalidShape {
                expected: format!("{FRAME_SIDE}×{FRAME_SIDE}×{CHANNELS}, seq {SEQ_LEN}"),
                found: format!("{side}×{side}×{channels}, seq {seq_len}"),
            });
        }
        let expected_size = 32 + count as u64 * RECORD_BYTES as u64;
        if size != expected_size {
            return Err(corrupt(&format!("size {size} != expected {expected_size} for {count} records")));
        }

        let mut ds = Dataset {
            episode_ids: Vec::with_capacity(count),
            step_indices: Vec::with_capacity(count),
            frames: vec![0u8; count * SEQ_LEN * FRAME_BYTES],
            actions: vec![0u8; count * SEQ_LEN],
            targets: Vec::with_capacity(count),
        };
        for i in 0..count {
            ds.episode_ids.push(read_u32(&mut r).map_err(|_| corrupt("truncated record"))?);
            ds.step_indices.push(read_u32(&mut r).map_err(|_| corrupt("truncated record"))?);
            let fstart = i * SEQ_LEN * FRAME_BYTES;
            r.read_exact(&mut ds.frames[fstart..fstart + SEQ_LEN * FRAME_BYTES])
                .map_err(|_| corrupt("truncated record"))?;
            let astart = i * SEQ_LEN;
            r.read_exact(&mut ds.actions[astart..astart + SEQ_LEN])
                .map_err(|_| corrupt("truncated record"))?;
            let mut target = [0f64; 4];
            for t in &mut target {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf).map_err(|_| corrupt("truncated record"))?;
                *t = f64::from_le_bytes(buf);
            }
            ds.targets.push(target);
        }
        Ok(ds)
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Dataset provenance, serialized as deterministic `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub format_version: u32,
    pub n_samples: u64,
    pub seed: u64,
    pub reset_policy: String,
    pub bins_per_dim: [usize; 4],
    pub v_cap: f64,
    pub omega_cap: f64,
    pub episodes_used: u64,
    pub env: EnvParams,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv(&mut s, "format_version", self.format_version.to_string());
        kv(&mut s, "n_samples", self.n_samples.to_string());
        kv(&mut s, "seed", self.seed.to_string());
        kv(&mut s, "reset_policy", self.reset_policy.clone());
        kv(&mut s, "bins_per_dim", format!("{:?}", self.bins_per_dim));
        kv(&mut s, "v_cap", self.v_cap.to_string());
        kv(&mut s, "omega_cap", self.omega_cap.to_string());
        kv(&mut s, "episodes_used", self.episodes_used.to_string());
        kv(&mut s, "frame_side", FRAME_SIDE.to_string());
        kv(&mut s, "seq_len", SEQ_LEN.to_string());
        kv(&mut s, "record_bytes", RECORD_BYTES.to_string());
        kv(&mut s, "env.gravity", self.env.gravity.to_string());
        kv(&mut s, "env.cart_mass", self.env.cart_mass.to_string());
        kv(&mut s, "env.pole_mass", self.env.pole_mass.to_string());
        kv(&mut s, "env.pole_half_length", self.env.pole_half_length.to_string());
        kv(&mut s, "env.force_magnitude", self.env.force_magnitude.to_string());
        kv(&mut s, "env.time_step", self.env.time_step.to_string());
        kv(&mut s, "env.position_bound", self.env.position_bound.to_string());
        kv(&mut s, "env.angle_bound", self.env.angle_bound.to_string());
        kv(&mut s, "env.max_episode_steps", self.env.max_episode_steps.to_string());
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }
}
