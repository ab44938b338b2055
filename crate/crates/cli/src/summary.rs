//! Run summaries and the comparison report built from them.

use std::io::Write;
use std::path::Path;

use gridweave::agents::CurvePoint;
use gridweave::oracle::ScoreReport;
use serde::{Deserialize, Serialize};

use crate::config::sha256_file;

pub const SUMMARY_FORMAT: &str = "gridweave-run-summary";
pub const SUMMARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveStats {
    pub iterations: usize,
    pub first_mean_reward: f64,
    pub final_mean_reward: f64,
    /// Mean over the last (up to) 100 iterations.
    pub tail_mean_reward: f64,
    pub final_mean_cost_price: f64,
    pub final_mean_cost_emission: f64,
}

impl CurveStats {
    pub fn from_curve(curve: &[CurvePoint]) -> Option<Self> {
        let (first, last) = (curve.first()?, curve.last()?);
        let tail = &curve[curve.len().saturating_sub(100)..];
        Some(CurveStats {
            iterations: curve.len(),
            first_mean_reward: first.mean_reward,
            final_mean_reward: last.mean_reward,
            tail_mean_reward: tail.iter().map(|p| p.mean_reward).sum::<f64>() / tail.len() as f64,
            final_mean_cost_price: last.mean_cost_price,
            final_mean_cost_emission: last.mean_cost_emission,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub format: String,
    pub version: u32,
    pub command: String,
    /// `oracle`, `pg`, `a2c`, or absent for data generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreReport>,
    pub files: Vec<FileEntry>,
}

impl RunSummary {
    pub fn new(command: &str, label: Option<String>, config_hash: String, seed: u64) -> Self {
        RunSummary {
            format: SUMMARY_FORMAT.into(),
            version: SUMMARY_VERSION,
            command: command.into(),
            label,
            config_hash,
            seed,
            wall_time_s: 0.0,
            curve: None,
            score: None,
            files: Vec::new(),
        }
    }

    /// Record the listed files of `dir`, in the given order.
    pub fn inventory(&mut self, dir: &Path, names: &[String]) -> std::io::Result<()> {
        for name in names {
            let path = dir.join(name);
            self.files.push(FileEntry {
                name: name.clone(),
                bytes: std::fs::metadata(&path)?.len(),
                sha256: sha256_file(&path)?,
            });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read summary {}: {e}", path.display()))?;
        let s: RunSummary =
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid summary {}: {e}", path.display()))?;
        if s.format != SUMMARY_FORMAT || s.version != SUMMARY_VERSION {
            anyhow::bail!("{}: unsupported summary {} v{}", path.display(), s.format, s.version);
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

/// One column of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportColumn {
    pub label: String,
    pub reward: f64,
    pub price_score: f64,
    pub emission_score: f64,
    pub wall_time_s: f64,
}

impl ReportColumn {
    pub fn from_summary(s: &RunSummary) -> anyhow::Result<Self> {
        let score = s
            .score
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("summary of '{}' has no score", s.command))?;
        Ok(ReportColumn {
            label: s.label.clone().unwrap_or_else(|| s.command.clone()),
            reward: score.mean_reward,
            price_score: score.distributor.price_score,
            emission_score: score.distributor.emission_score,
            wall_time_s: s.wall_time_s,
        })
    }
}

type Row = (&'static str, fn(&ReportColumn) -> f64);

const ROWS: [Row; 4] = [
    ("reward", |c| c.reward),
    ("price_score", |c| c.price_score),
    ("emission_score", |c| c.emission_score),
    ("wall_time_s", |c| c.wall_time_s),
];

pub fn write_report_csv(path: &Path, columns: &[ReportColumn]) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "metric")?;
    for c in columns {
        write!(out, ",{}", c.label)?;
    }
    writeln!(out)?;
    for (name, get) in ROWS {
        write!(out, "{name}")?;
        for c in columns {
            write!(out, ",{}", get(c))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn render_report(columns: &[ReportColumn]) -> String {
    let mut s = format!("{:<16}", "");
    for c in columns {
        s += &format!("{:>14}", c.label);
    }
    s.push('\n');
    for (name, get) in ROWS {
        s += &format!("{name:<16}");
        for c in columns {
            s += &format!("{:>14.4}", get(c));
        }
        s.push('\n');
    }
    s
}
