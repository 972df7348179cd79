//! Artifact writers: CSV tables, SVG line plots and the run manifest.
//!
//! Floats are written with 17 significant digits so every value parses back
//! to the identical `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::{EpisodeLog, PolicySummary, ScenarioFile};

pub const SLOT_COLUMNS: [&str; 16] = [
    "n",
    "true_x",
    "true_y",
    "est_x",
    "est_y",
    "pred_crb",
    "crb_at_truth",
    "snr_db",
    "wc_snr_db",
    "q1x",
    "q1y",
    "q2x",
    "q2y",
    "d12",
    "sca_iters",
    "converged",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Files and directories created by a command, removed again on failure.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Artifacts {
    pub fn dir(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            // Record each missing ancestor so cleanup leaves no empty shells.
            let mut missing: Vec<PathBuf> = path.ancestors().take_while(|p| !p.as_os_str().is_empty() && !p.exists()).map(Path::to_path_buf).collect();
            fs::create_dir_all(path)?;
            missing.reverse();
            self.dirs.extend(missing);
        }
        Ok(())
    }

    pub fn file(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes)?;
        self.files.push(path.to_path_buf());
        Ok(())
    }

    pub fn created(&self) -> &[PathBuf] {
        &self.files
    }

    /// Delete everything this command wrote.
    pub fn remove(&self) {
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn slots_csv(log: &EpisodeLog) -> Result<Vec<u8>> {
    to_csv(
        &SLOT_COLUMNS,
        log.slots.iter().map(|s| {
            vec![
                s.n.to_string(),
                fmt_f64(s.truth.x),
                fmt_f64(s.truth.y),
                fmt_f64(s.belief.x_hat.x),
                fmt_f64(s.belief.x_hat.y),
                fmt_f64(s.pred_crb),
                fmt_f64(s.crb_at_truth),
                fmt_f64(s.snr_db),
                fmt_f64(s.wc_snr_db),
                fmt_f64(s.q1.qx),
                fmt_f64(s.q1.qy),
                fmt_f64(s.q2.qx),
                fmt_f64(s.q2.qy),
                fmt_f64(s.inter_uav_distance()),
                s.sca.iterations.to_string(),
                u8::from(s.sca.converged).to_string(),
            ]
        }),
    )
}

/// SCA iterates per slot; iteration 0 is the slot's starting point.
pub fn trace_csv(log: &EpisodeLog) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for s in &log.slots {
        for (k, obj) in s.sca.objectives.iter().enumerate() {
            let step = if k == 0 { 0.0 } else { s.sca.step_norms[k - 1] };
            rows.push(vec![s.n.to_string(), k.to_string(), fmt_f64(*obj), fmt_f64(step)]);
        }
    }
    to_csv(&["n", "iter", "objective", "step_norm"], rows)
}

const SUMMARY_COLUMNS: [&str; 12] = [
    "policy",
    "seed",
    "rmse",
    "mean_crb",
    "max_crb",
    "snr_satisfaction",
    "mean_d12",
    "mean_d1t",
    "violations",
    "infeasible_slots",
    "final_error",
    "episodes",
];

/// One row per episode followed by one pooled row per policy (`seed = all`).
pub fn summary_csv(logs: &[EpisodeLog], pooled: &[PolicySummary]) -> Result<Vec<u8>> {
    let per_episode = logs.iter().map(|l| {
        let s = &l.summary;
        vec![
            l.policy.label(),
            l.seed.to_string(),
            fmt_f64(s.rmse),
            fmt_f64(s.mean_crb),
            fmt_f64(s.max_crb),
            fmt_f64(s.snr_satisfaction),
            fmt_f64(s.mean_d12),
            fmt_f64(s.mean_d1t),
            s.violations.to_string(),
            s.infeasible_slots.to_string(),
            fmt_f64(s.final_error),
            "1".into(),
        ]
    });
    let aggregate = pooled.iter().map(|p| {
        vec![
            p.policy.clone(),
            "all".into(),
            fmt_f64(p.rmse),
            fmt_f64(p.mean_crb),
            fmt_f64(p.max_crb),
            fmt_f64(p.snr_satisfaction),
            fmt_f64(p.mean_d12),
            fmt_f64(p.mean_d1t),
            p.violations.to_string(),
            p.infeasible_slots.to_string(),
            String::new(),
            p.episodes.to_string(),
        ]
    });
    to_csv(&SUMMARY_COLUMNS, per_episode.chain(aggregate).collect::<Vec<_>>())
}

/// SHA-256 of the canonical JSON form of the scenario.
pub fn config_hash(file: &ScenarioFile) -> String {
    let json = serde_json::to_string(file).expect("scenario serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub tool_version: String,
    pub policy: Option<String>,
    /// Command-specific arguments (sweep key and values, calibration knobs).
    pub arguments: serde_json::Value,
    pub config: ScenarioFile,
}

impl RunManifest {
    pub fn to_json(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s.into_bytes()
    }
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

fn svg_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Vec<u8> {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">{y_label}</text>\n\
         <text x=\"{m}\" y=\"{}\">{x0:.3}</text><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{x1:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y0:.3e}</text><text x=\"{}\" y=\"{m}\" text-anchor=\"end\">{y1:.3e}</text>\n",
        w / 2.0,
        h - m,
        w - m,
        h - m,
        h - m,
        w / 2.0,
        h - 15.0,
        h / 2.0,
        h / 2.0,
        h - m + 15.0,
        w - m,
        h - m + 15.0,
        m - 4.0,
        h - m,
        m - 4.0,
    );
    for (i, s) in series.iter().enumerate() {
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n",
            s.color,
            coords.join(" "),
            w - m - 140.0,
            m + 15.0 * i as f64,
            s.color,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out.into_bytes()
}

/// `(file name, contents)` for the CRB, trajectory and SCA-trace plots.
pub fn episode_svgs(log: &EpisodeLog) -> Vec<(&'static str, Vec<u8>)> {
    let crb = svg_chart(
        "CRB per slot",
        "slot",
        "log10 CRB (m²)",
        &[
            Series {
                label: "at truth",
                color: "#1f77b4",
                points: log.slots.iter().map(|s| (s.n as f64, s.crb_at_truth.log10())).collect(),
            },
            Series {
                label: "predicted",
                color: "#ff7f0e",
                points: log.slots.iter().map(|s| (s.n as f64, s.pred_crb.log10())).collect(),
            },
        ],
    );
    let traj = svg_chart(
        "Trajectories",
        "x (m)",
        "y (m)",
        &[
            Series { label: "target", color: "#000000", points: log.slots.iter().map(|s| (s.truth.x, s.truth.y)).collect() },
            Series {
                label: "estimate",
                color: "#7f7f7f",
                points: log.slots.iter().map(|s| (s.belief.x_hat.x, s.belief.x_hat.y)).collect(),
            },
            Series { label: "UAV-1", color: "#d62728", points: log.slots.iter().map(|s| (s.q1.qx, s.q1.qy)).collect() },
            Series { label: "UAV-2", color: "#2ca02c", points: log.slots.iter().map(|s| (s.q2.qx, s.q2.qy)).collect() },
        ],
    );
    let first = log.slots.first();
    let trace = svg_chart(
        "SCA objective (first slot)",
        "iteration",
        "predicted CRB (m²)",
        &[Series {
            label: "objective",
            color: "#9467bd",
            points: first.map_or(Vec::new(), |s| s.sca.objectives.iter().enumerate().map(|(k, v)| (k as f64, *v)).collect()),
        }],
    );
    vec![("crb.svg", crb), ("trajectory.svg", traj), ("sca_trace.svg", trace)]
}
