//! Assemble metric CSVs, a text report and plots from run artifacts.

use super::plot::{line_chart, multi_panel_chart, Series, PALETTE};
use super::{AgentEval, Bounds, PredictorEval, Trajectory};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const DIMS: [&str; 4] = ["x", "x_dot", "theta", "theta_dot"];

/// Everything the report can draw on. Any subset may be present; an empty
/// set is an error that lists what was expected.
#[derive(Default)]
pub struct ReportInputs<'a> {
    pub bounds: Option<Bounds>,
    pub predictor: Option<&'a PredictorEval>,
    pub full_agent: Option<&'a AgentEval>,
    pub pred_agent: Option<&'a AgentEval>,
    /// (epoch, train_loss, val_loss) rows from predictor training.
    pub loss_history: Option<Vec<(f64, f64, Option<f64>)>>,
    /// (episode, raw_return) rows per agent log, with a label.
    pub reward_histories: Vec<(String, Vec<(f64, f64)>)>,
}

/// Write `metrics_rmse.csv`, `metrics_mae.csv`, `report.txt` and SVG plots
/// into `out_dir`; returns the files written.
pub fn report(inputs: &ReportInputs<'_>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if inputs.predictor.is_none() && inputs.full_agent.is_none() && inputs.pred_agent.is_none() {
        return Err(Error::MissingArtifact {
            what: "report inputs (predictor evaluation or at least one agent evaluation)".into(),
            path: out_dir.to_path_buf(),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut text = String::new();

    if let Some(pred) = inputs.predictor {
        let path = out_dir.join("metrics_rmse.csv");
        let mut csv = String::from("seed,x,x_dot,theta,theta_dot\n");
        for (seed, rmse) in &pred.per_seed {
            let _ = writeln!(csv, "{seed},{},{},{},{}", rmse[0], rmse[1], rmse[2], rmse[3]);
        }
        let m = pred.mean;
        let _ = writeln!(csv, "mean,{},{},{},{}", m[0], m[1], m[2], m[3]);
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        written.push(path);

        text.push_str("state prediction error (RMSE %, normalized by state bounds)\n");
        let _ = writeln!(text, "{:>12} {:>10} {:>10} {:>10} {:>10}", "", DIMS[0], DIMS[1], DIMS[2], DIMS[3]);
        let _ = writeln!(
            text,
            "{:>12} {:>10.3} {:>10.3} {:>10.3} {:>10.3}\n",
            "rmse%", m[0], m[1], m[2], m[3]
        );
    }

    let agents: Vec<(&str, &AgentEval)> = [("full", inputs.full_agent), ("predicted", inputs.pred_agent)]
        .into_iter()
        .filter_map(|(name, a)| a.map(|a| (name, a)))
        .collect();
    if !agents.is_empty() {
        let path = out_dir.join("metrics_mae.csv");
        let mut csv = String::from("agent,seed,x,x_dot,theta,theta_dot,steps\n");
        for (name, eval) in &agents {
            for (seed, mae, steps) in &eval.per_seed {
                let _ = writeln!(csv, "{name},{seed},{},{},{},{},{steps}", mae[0], mae[1], mae[2], mae[3]);
            }
            let m = eval.mean_mae;
            let _ = writeln!(csv, "{name},mean,{},{},{},{},{}", m[0], m[1], m[2], m[3], eval.mean_steps);
        }
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        written.push(path);

        text.push_str("tracking error (MAE %, vs zero reference) by agent\n");
        let _ = writeln!(
            text,
            "{:>12} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "agent", DIMS[0], DIMS[1], DIMS[2], DIMS[3], "mean steps"
        );
        for (name, eval) in &agents {
            let m = eval.mean_mae;
            let _ = writeln!(
                text,
                "{:>12} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>12.1}",
                name, m[0], m[1], m[2], m[3], eval.mean_steps
            );
        }
        text.push('\n');
    }

    if let Some(bounds) = &inputs.bounds {
        let b = bounds.to_array();
        let _ = writeln!(
            text,
            "normalization bounds: x ±{}, x_dot ±{}, theta ±{}, theta_dot ±{}\n",
            b[0], b[1], b[2], b[3]
        );
    }

    if let Some(history) = &inputs.loss_history {
        let path = out_dir.join("loss_curves.svg");
        let train: Vec<(f64, f64)> = history.iter().map(|(e, t, _)| (*e, *t)).collect();
        let val: Vec<(f64, f64)> =
            history.iter().filter_map(|(e, _, v)| v.map(|v| (*e, v))).collect();
        let mut series = vec![Series { label: "train", color: PALETTE[0], points: train }];
        if !val.is_empty() {
            series.push(Series { label: "validation", color: PALETTE[1], points: val });
        }
        line_chart(&path, "prediction model loss", "epoch", "mse", &series)?;
        written.push(path);
    }

    if !inputs.reward_histories.is_empty() {
        let path = out_dir.join("reward_curve.svg");
        let series: Vec<Series<'_>> = inputs
            .reward_histories
            .iter()
            .enumerate()
            .map(|(i, (label, points))| Series {
                label,
                color: PALETTE[i % PALETTE.len()],
                points: points.clone(),
            })
            .collect();
        line_chart(&path, "episode return during training", "episode", "raw return", &series)?;
        written.push(path);
    }

    // overlay of true vs predicted states on the richest trajectory we have
    let trace: Option<(&Trajectory, bool)> = inputs
        .pred_agent
        .map(|a| (&a.sample, true))
        .or_else(|| inputs.predictor.map(|p| (&p.sample, true)))
        .or_else(|| inputs.full_agent.map(|a| (&a.sample, false)));
    if let Some((traj, with_estimates)) = trace {
        let path = out_dir.join("state_traces.svg");
        let mut panels = Vec::new();
        for d in 0..4 {
            let truth: Vec<(f64, f64)> =
                traj.steps.iter().enumerate().map(|(k, s)| (k as f64, s.state[d])).collect();
            let mut series = vec![Series { label: "true", color: PALETTE[0], points: truth }];
            if with_estimates && traj.has_estimates() {
                let est: Vec<(f64, f64)> = traj
                    .steps
                    .iter()
                    .enumerate()
                    .map(|(k, s)| (k as f64, s.estimate.expect("has_estimates")[d]))
                    .collect();
                series.push(Series { label: "predicted", color: PALETTE[1], points: est });
            }
            let zero: Vec<(f64, f64)> = vec![(0.0, 0.0), ((traj.len().max(2) - 1) as f64, 0.0)];
            series.push(Series { label: "reference", color: PALETTE[5], points: zero });
            panels.push((DIMS[d].to_string(), series));
        }
        multi_panel_chart(&path, "state trajectory", "step", &panels)?;
        written.push(path);
    }

    let report_path = out_dir.join("report.txt");
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    written.push(report_path);
    Ok(written)
}
