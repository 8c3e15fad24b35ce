//! Versioned binary checkpoints: named f64 tensors plus architecture words.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic [8] = "PXSTCKPT", version u32, kind u8,
//! arch_len u32, arch_len × u32,
//! epoch u64, adam_t u64,
//! tensor_count u32,
//! tensor: name_len u16, name bytes, ndim u8, ndim × u32 dims, f64 data
//! ```
//!
//! The same container backs predictor and Q-network checkpoints (different
//! `kind` bytes). Writes go through a temp file and rename.

use super::{PredictorArch, PredictorModel};
use crate::error::{Error, Result};
use crate::nn::{Adam, Params};
use ndarray::ArrayD;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub(crate) const MAGIC: [u8; 8] = *b"PXSTCKPT";
pub(crate) const VERSION: u32 = 1;
pub(crate) const KIND_PREDICTOR: u8 = 0;
pub(crate) const KIND_QNET: u8 = 1;

pub(crate) struct Container {
    pub arch_words: Vec<u32>,
    pub epoch: u64,
    pub adam_t: u64,
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

pub(crate) fn write_container(
    path: &Path,
    kind: u8,
    arch_words: &[u32],
    epoch: u64,
    adam_t: u64,
    tensors: &[(String, ArrayD<f64>)],
) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[kind])?;
        w.write_all(&(arch_words.len() as u32).to_le_bytes())?;
        for word in arch_words {
            w.write_all(&word.to_le_bytes())?;
        }
        w.write_all(&epoch.to_le_bytes())?;
        w.write_all(&adam_t.to_le_bytes())?;
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, data) in tensors {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&[data.ndim() as u8])?;
            for d in data.shape() {
                w.write_all(&(*d as u32).to_le_bytes())?;
            }
            for v in data.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        w.get_ref().sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub(crate) fn read_container(path: &Path, expect_kind: u8) -> Result<Container> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let corrupt =
        |detail: &str| Error::CorruptFile { path: path.to_path_buf(), detail: detail.into() };

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt("shorter than header"))?;
    if magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = read_u32(&mut r).map_err(|_| corrupt("truncated header"))?;
    if version != VERSION {
        return Err(Error::VersionMismatch { path: path.to_path_buf(), found: version, expected: VERSION });
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).map_err(|_| corrupt("truncated header"))?;
    if kind[0] != expect_kind {
        return Err(corrupt(&format!("checkpoint kind {} where {} expected", kind[0], expect_kind)));
    }
    let arch_len = read_u32(&mut r).map_err(|_| corrupt("truncated arch block"))? as usize;
    if arch_len > 64 {
        return Err(corrupt("implausible arch block"));
    }
    let mut arch_words = Vec::with_capacity(arch_len);
    for _ in 0..arch_len {
        arch_words.push(read_u32(&mut r).map_err(|_| corrupt("truncated arch block"))?);
    }
    let epoch = read_u64(&mut r).map_err(|_| corrupt("truncated header"))?;
    let adam_t = read_u64(&mut r).map_err(|_| corrupt("truncated header"))?;
    let count = read_u32(&mut r).map_err(|_| corrupt("truncated tensor table"))? as usize;

    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let mut len_buf = [0u8; 2];
        r.read_exact(&mut len_buf).map_err(|_| corrupt("truncated tensor name"))?;
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| corrupt("truncated tensor name"))?;
        let name = String::from_utf8(name_bytes).map_err(|_| corrupt("tensor name not utf-8"))?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim).map_err(|_| corrupt("truncated tensor dims"))?;
        let mut dims = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            dims.push(read_u32(&mut r).map_err(|_| corrupt("truncated tensor dims"))? as usize);
        }
        let n: usize = dims.iter().product();
        if n > 100_000_000 {
            return Err(corrupt("implausible tensor size"));
        }
        let mut data = vec![0f64; n];
        for v in &mut data {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf).map_err(|_| corrupt("truncated tensor data"))?;
            *v = f64::from_le_bytes(buf);
        }
        let arr = ArrayD::from_shape_vec(ndarray::IxDyn(&dims), data)
            .map_err(|_| corrupt("inconsistent tensor dims"))?;
        tensors.insert(name, arr);
    }
    // trailing garbage means the file isn't what we wrote
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(corrupt("trailing bytes after tensor table"));
    }
    Ok(Container { arch_words, epoch, adam_t, tensors })
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

fn arch_to_words(a: &PredictorArch) -> Vec<u32> {
    [
        a.frame_channels,
        a.frame_size,
        a.conv1_channels,
        a.conv2_channels,
        a.kernel,
        a.stride,
        a.pad,
        a.feature_dim,
        a.hidden_dim,
        a.head_hidden,
        a.seq_len,
        a.state_dim,
    ]
    .iter()
    .map(|&v| v as u32)
    .collect()
}

fn arch_from_words(words: &[u32], path: &Path) -> Result<PredictorArch> {
    if words.len() != 12 {
        return Err(Error::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("predictor arch block has {} words, expected 12", words.len()),
        });
    }
    let w = |i: usize| words[i] as usize;
    Ok(PredictorArch {
        frame_channels: w(0),
        frame_size: w(1),
        conv1_channels: w(2),
        conv2_channels: w(3),
        kernel: w(4),
        stride: w(5),
        pad: w(6),
        feature_dim: w(7),
        hidden_dim: w(8),
        head_hidden: w(9),
        seq_len: w(10),
        state_dim: w(11),
    })
}

fn arch_mismatch_report(expected: &PredictorArch, found: &PredictorArch) -> String {
    let pairs = [
        ("frame_channels", expected.frame_channels, found.frame_channels),
        ("frame_size", expected.frame_size, found.frame_size),
        ("conv1_channels", expected.conv1_channels, found.conv1_channels),
        ("conv2_channels", expected.conv2_channels, found.conv2_channels),
        ("kernel", expected.kernel, found.kernel),
        ("stride", expected.stride, found.stride),
        ("pad", expected.pad, found.pad),
        ("feature_dim", expected.feature_dim, found.feature_dim),
        ("hidden_dim", expected.hidden_dim, found.hidden_dim),
        ("head_hidden", expected.head_hidden, found.head_hidden),
        ("seq_len", expected.seq_len, found.seq_len),
        ("state_dim", expected.state_dim, found.state_dim),
    ];
    pairs
        .iter()
        .filter(|(_, e, f)| e != f)
        .map(|(name, e, f)| format!("{name}: expected {e}, checkpoint has {f}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// A loaded predictor with its training progress.
pub struct PredictorCheckpoint {
    pub model: PredictorModel,
    pub epoch: u32,
    pub adam_t: u64,
    /// (name, m, v) moment tensors, empty when the file carries none.
    pub moments: Vec<(String, ArrayD<f64>, ArrayD<f64>)>,
}

pub fn save_predictor(
    path: &Path,
    model: &PredictorModel,
    epoch: u32,
    adam: Option<&Adam>,
) -> Result<()> {
    let mut tensors: Vec<(String, ArrayD<f64>)> = Vec::new();
    model.visit("", &mut |name, view| {
        tensors.push((name.to_string(), view.to_owned()));
    });
    let mut adam_t = 0;
    if let Some(adam) = adam {
        adam_t = adam.steps_taken();
        for (name, m, v) in adam.export_state() {
            tensors.push((format!("opt.m.{name}"), m));
            tensors.push((format!("opt.v.{name}"), v));
        }
    }
    write_container(path, KIND_PREDICTOR, &arch_to_words(&model.arch), u64::from(epoch), adam_t, &tensors)
}

pub fn load_predictor(path: &Path, expected: Option<&PredictorArch>) -> Result<PredictorCheckpoint> {
    let container = read_container(path, KIND_PREDICTOR)?;
    let arch = arch_from_words(&container.arch_words, path)?;
    if let Some(want) = expected {
        if *want != arch {
            return Err(Error::ArchMismatch { detail: arch_mismatch_report(want, &arch) });
        }
    }
    let mut model = PredictorModel::new(arch, 0);
    let tensors = container.tensors;
    let mut missing = Vec::new();
    model.visit_mut("", &mut |name, mut view| match tensors.get(name) {
        Some(data) if data.shape() == view.shape() => view.assign(data),
        Some(data) => missing.push(format!("{name}: shape {:?} vs {:?}", data.shape(), view.shape())),
        None => missing.push(format!("{name}: absent")),
    });
    if !missing.is_empty() {
        return Err(Error::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("parameter table mismatch: {}", missing.join("; ")),
        });
    }

    let mut moments = Vec::new();
    let mut param_names = Vec::new();
    model.visit("", &mut |name, _| param_names.push(name.to_string()));
    for name in param_names {
        let (m_key, v_key) = (format!("opt.m.{name}"), format!("opt.v.{name}"));
        if let (Some(m), Some(v)) = (tensors.get(&m_key), tensors.get(&v_key)) {
            moments.push((name, m.clone(), v.clone()));
        }
    }
    Ok(PredictorCheckpoint { model, epoch: container.epoch as u32, adam_t: container.adam_t, moments })
}
