//! Subcommand implementations: each takes an effective [`RunConfig`], owns
//! the run-directory layout, and leaves every artifact needed to reproduce
//! or extend the run.
//!
//! Layout under `<output_root>/<run id>/`:
//!
//! ```text
//! config.toml            exact effective config of the last command
//! dataset/               dataset.bin, manifest.txt, bin_histogram.csv
//! predictor/             best.ckpt, last.ckpt, loss.csv
//! rl_full/, rl_pred/     agent.ckpt, episodes.csv
//! eval/                  metrics_*.csv, report.txt, *.svg
//! ```

use crate::config::RunConfig;
use crate::dataset::{self, CollectConfig, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, ReportInputs};
use crate::predictor::{
    load_predictor, save_predictor, PredictorArch, PredictorModel, ResumeState,
};
use crate::rl::{self, ObservationMode};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Exclusive marker preventing two processes from writing one run directory.
/// Removed on drop, including on error paths.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<RunLock> {
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::LockHeld { path })
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Paths inside one run directory.
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: PathBuf) -> Self {
        RunPaths { root }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn dataset_bin(&self) -> PathBuf {
        self.dataset_dir().join("dataset.bin")
    }

    pub fn predictor_dir(&self) -> PathBuf {
        self.root.join("predictor")
    }

    pub fn predictor_best(&self) -> PathBuf {
        self.predictor_dir().join("best.ckpt")
    }

    pub fn predictor_last(&self) -> PathBuf {
        self.predictor_dir().join("last.ckpt")
    }

    pub fn loss_csv(&self) -> PathBuf {
        self.predictor_dir().join("loss.csv")
    }

    pub fn rl_dir(&self, mode: &str) -> PathBuf {
        match mode {
            "full" => self.root.join("rl_full"),
            _ => self.root.join("rl_pred"),
        }
    }

    pub fn agent_ckpt(&self, mode: &str) -> PathBuf {
        self.rl_dir(mode).join("agent.ckpt")
    }

    pub fn episodes_csv(&self, mode: &str) -> PathBuf {
        self.rl_dir(mode).join("episodes.csv")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
}

fn prepare(cfg: &RunConfig) -> Result<(RunPaths, RunLock)> {
    cfg.validate()?;
    let paths = RunPaths::new(cfg.run_dir());
    let lock = RunLock::acquire(&paths.root)?;
    cfg.save(&paths.config())?;
    Ok((paths, lock))
}

/// Collect the dataset described by `cfg.dataset`.
pub fn cmd_collect(cfg: &RunConfig) -> Result<()> {
    let (paths, _lock) = prepare(cfg)?;
    let out = dataset::collect(
        &cfg.env,
        &CollectConfig {
            n_samples: cfg.dataset.n_samples,
            bins_per_dim: cfg.dataset.bins_per_dim,
            v_cap: cfg.dataset.v_cap,
            omega_cap: cfg.dataset.omega_cap,
            seed: cfg.dataset.seed,
            reset_policy: cfg.dataset.reset_policy,
        },
        &paths.dataset_dir(),
    )?;
    let counts = out.bins.counts();
    let max = counts.iter().max().copied().unwrap_or(0);
    let min = counts.iter().min().copied().unwrap_or(0);
    println!(
        "collected {} samples over {} episodes into {} (bin counts min {} / max {})",
        out.manifest.n_samples,
        out.manifest.episodes_used,
        paths.dataset_dir().display(),
        min,
        max
    );
    Ok(())
}

/// Train the predictor on the collected dataset.
pub fn cmd_train_predictor(cfg: &RunConfig, resume: bool) -> Result<()> {
    let (paths, _lock) = prepare(cfg)?;
    let bin = paths.dataset_bin();
    if !bin.exists() {
        return Err(Error::MissingArtifact { what: "dataset (run `collect` first)".into(), path: bin });
    }
    let ds = Dataset::load(&bin)?;
    let split = dataset::split(ds.len(), cfg.dataset.split_ratio, cfg.dataset.split_seed)?;
    std::fs::create_dir_all(paths.predictor_dir()).map_err(|e| Error::io(paths.predictor_dir(), e))?;

    let arch = PredictorArch::default();
    let resume_state = if resume {
        let last = paths.predictor_last();
        if !last.exists() {
            return Err(Error::MissingArtifact { what: "checkpoint to resume from".into(), path: last });
        }
        let ckpt = load_predictor(&last, Some(&arch))?;
        println!("resuming from epoch {}", ckpt.epoch + 1);
        Some(ResumeState {
            model: ckpt.model,
            start_epoch: ckpt.epoch + 1,
            adam_t: ckpt.adam_t,
            moments: ckpt.moments,
        })
    } else {
        None
    };

    let loss_csv = paths.loss_csv();
    let mut csv = if resume_state.is_some() && loss_csv.exists() {
        OpenOptions::new().append(true).open(&loss_csv).map_err(|e| Error::io(&loss_csv, e))?
    } else {
        let mut f = std::fs::File::create(&loss_csv).map_err(|e| Error::io(&loss_csv, e))?;
        writeln!(f, "epoch,train_loss,val_loss").map_err(|e| Error::io(&loss_csv, e))?;
        f
    };

    let best_path = paths.predictor_best();
    let last_path = paths.predictor_last();
    let mut best_val = f64::INFINITY;
    let out = crate::predictor::train(
        &ds,
        &split,
        arch,
        &cfg.predictor,
        resume_state,
        |stats, model, adam| {
            let val_text = stats.val_loss.map_or(String::new(), |v| v.to_string());
            writeln!(csv, "{},{},{}", stats.epoch, stats.train_loss, val_text)
                .map_err(|e| Error::io(&loss_csv, e))?;
            save_predictor(&last_path, model, stats.epoch, Some(adam))?;
            match stats.val_loss {
                Some(v) if v < best_val => {
                    best_val = v;
                    save_predictor(&best_path, model, stats.epoch, Some(adam))?;
                }
                None => save_predictor(&best_path, model, stats.epoch, Some(adam))?,
                _ => {}
            }
            println!(
                "epoch {:>3}  train {:.6}  val {}",
                stats.epoch,
                stats.train_loss,
                stats.val_loss.map_or("-".into(), |v| format!("{v:.6}"))
            );
            Ok(())
        },
    )?;
    if let Some((epoch, val)) = out.best {
        println!("best validation loss {val:.6} at epoch {epoch} → {}", best_path.display());
    }
    Ok(())
}

/// Train a DQN agent on full or predicted observations.
pub fn cmd_train_rl(cfg: &RunConfig, obs: &str) -> Result<()> {
    let (paths, _lock) = prepare(cfg)?;
    let predictor_model: Option<PredictorModel> = match obs {
        "full" => None,
        "predicted" => {
            let ckpt_path = paths.predictor_best();
            if !ckpt_path.exists() {
                return Err(Error::MissingArtifact {
                    what: "predictor checkpoint (run `train-predictor` first)".into(),
                    path: ckpt_path,
                });
            }
            Some(load_predictor(&ckpt_path, Some(&PredictorArch::default()))?.model)
        }
        other => {
            return Err(Error::Config { detail: format!("unknown observation mode `{other}`") });
        }
    };
    let mode = match &predictor_model {
        None => ObservationMode::FullState,
        Some(m) => ObservationMode::Predicted(m),
    };

    let out = rl::train_dqn(&cfg.env, &cfg.rl, mode)?;
    let dir = paths.rl_dir(obs);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let csv_path = paths.episodes_csv(obs);
    let mut csv = String::from("episode,steps,shaped_return,raw_return,epsilon\n");
    for row in &out.episodes {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.episode, row.steps, row.shaped_return, row.raw_return, row.epsilon
        ));
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    rl::save_qnet(&paths.agent_ckpt(obs), &out.qnet, out.steps_done)?;

    let tail: Vec<&rl::EpisodeRow> = out.episodes.iter().rev().take(20).collect();
    let mean_tail = if tail.is_empty() {
        0.0
    } else {
        tail.iter().map(|e| f64::from(e.steps)).sum::<f64>() / tail.len() as f64
    };
    println!(
        "trained {} agent for {} steps over {} episodes (mean steps, last 20 episodes: {:.1})",
        obs,
        out.steps_done,
        out.episodes.len(),
        mean_tail
    );
    Ok(())
}

/// Which artifacts an evaluation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    Predictor,
    Full,
    Predicted,
    All,
}

impl EvalTarget {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "predictor" => Ok(EvalTarget::Predictor),
            "full" => Ok(EvalTarget::Full),
            "predicted" => Ok(EvalTarget::Predicted),
            "all" => Ok(EvalTarget::All),
            other => Err(Error::Config { detail: format!("unknown eval target `{other}`") }),
        }
    }
}

/// Evaluate trained artifacts and write the report.
pub fn cmd_eval(cfg: &RunConfig, target: EvalTarget, agent_override: Option<&Path>) -> Result<()> {
    let (paths, _lock) = prepare(cfg)?;
    let e = &cfg.eval;

    let need_predictor = matches!(target, EvalTarget::Predictor | EvalTarget::Predicted | EvalTarget::All);
    let need_full = matches!(target, EvalTarget::Full | EvalTarget::All);
    let need_pred_agent = matches!(target, EvalTarget::Predicted | EvalTarget::All);

    // enumerate everything missing before doing any work
    let mut missing: Vec<String> = Vec::new();
    let predictor_path = paths.predictor_best();
    if need_predictor && !predictor_path.exists() {
        missing.push(format!("predictor checkpoint {}", predictor_path.display()));
    }
    let full_agent_path =
        if need_full { agent_override.map(Path::to_path_buf).unwrap_or(paths.agent_ckpt("full")) } else { paths.agent_ckpt("full") };
    if need_full && !full_agent_path.exists() {
        missing.push(format!("full-state agent {}", full_agent_path.display()));
    }
    let pred_agent_path = if matches!(target, EvalTarget::Predicted) {
        agent_override.map(Path::to_path_buf).unwrap_or(paths.agent_ckpt("predicted"))
    } else {
        paths.agent_ckpt("predicted")
    };
    if need_pred_agent && !pred_agent_path.exists() {
        missing.push(format!("predicted-state agent {}", pred_agent_path.display()));
    }
    if !missing.is_empty() {
        return Err(Error::MissingArtifact {
            what: missing.join(", "),
            path: paths.root.clone(),
        });
    }

    let predictor_model = if need_predictor {
        Some(load_predictor(&predictor_path, Some(&PredictorArch::default()))?.model)
    } else {
        None
    };

    let predictor_eval = match (&predictor_model, target) {
        (Some(model), EvalTarget::Predictor | EvalTarget::All) => Some(eval::evaluate_predictor(
            &cfg.env,
            model,
            &e.bounds,
            e.seed,
            e.n_rollouts,
            e.max_steps,
        )?),
        _ => None,
    };

    let full_eval = if need_full {
        let qnet = rl::load_qnet(&full_agent_path)?;
        Some(eval::evaluate_agent(
            &cfg.env,
            &qnet,
            ObservationMode::FullState,
            &e.bounds,
            e.seed,
            e.n_rollouts,
            e.max_steps,
        )?)
    } else {
        None
    };

    let pred_eval = if need_pred_agent {
        let qnet = rl::load_qnet(&pred_agent_path)?;
        let model = predictor_model.as_ref().expect("loaded above");
        Some(eval::evaluate_agent(
            &cfg.env,
            &qnet,
            ObservationMode::Predicted(model),
            &e.bounds,
            e.seed,
            e.n_rollouts,
            e.max_steps,
        )?)
    } else {
        None
    };

    let loss_history = read_loss_csv(&paths.loss_csv()).ok();
    let mut reward_histories = Vec::new();
    for mode in ["full", "predicted"] {
        if let Ok(rows) = read_episode_csv(&paths.episodes_csv(mode)) {
            reward_histories.push((mode.to_string(), rows));
        }
    }

    let inputs = ReportInputs {
        bounds: Some(e.bounds),
        predictor: predictor_eval.as_ref(),
        full_agent: full_eval.as_ref(),
        pred_agent: pred_eval.as_ref(),
        loss_history,
        reward_histories,
    };
    let written = eval::report(&inputs, &paths.eval_dir())?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    if let Some(p) = &predictor_eval {
        println!(
            "predictor RMSE%: x {:.3}  x_dot {:.3}  theta {:.3}  theta_dot {:.3}",
            p.mean[0], p.mean[1], p.mean[2], p.mean[3]
        );
    }
    for (name, a) in [("full", &full_eval), ("predicted", &pred_eval)] {
        if let Some(a) = a {
            println!(
                "{name} agent: mean steps {:.1}, MAE% x {:.3} theta {:.3}",
                a.mean_steps, a.mean_mae[0], a.mean_mae[2]
            );
        }
    }
    Ok(())
}

/// Parse our own loss CSV back into rows.
pub fn read_loss_csv(path: &Path) -> Result<Vec<(f64, f64, Option<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::CorruptFile {
                path: path.to_path_buf(),
                detail: format!("line {}: expected 3 fields", i + 1),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::CorruptFile {
                path: path.to_path_buf(),
                detail: format!("line {}: bad number `{s}`", i + 1),
            })
        };
        let epoch = parse(fields[0])?;
        let train = parse(fields[1])?;
        let val = if fields[2].is_empty() { None } else { Some(parse(fields[2])?) };
        rows.push((epoch, train, val));
    }
    Ok(rows)
}

/// Parse an episode log into (episode, raw_return) points.
pub fn read_episode_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::CorruptFile {
                path: path.to_path_buf(),
                detail: format!("line {}: expected 5 fields", i + 1),
            });
        }
        let episode: f64 = fields[0].parse().map_err(|_| Error::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("line {}: bad episode", i + 1),
        })?;
        let raw: f64 = fields[3].parse().map_err(|_| Error::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("line {}: bad raw_return", i + 1),
        })?;
        rows.push((episode, raw));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_excludes_second_holder_and_releases() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(Error::LockHeld { .. })));
        drop(a);
        let _b = RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn eval_target_parsing() {
        assert_eq!(EvalTarget::parse("all").unwrap(), EvalTarget::All);
        assert_eq!(EvalTarget::parse("predictor").unwrap(), EvalTarget::Predictor);
        assert!(EvalTarget::parse("everything").is_err());
    }
}
