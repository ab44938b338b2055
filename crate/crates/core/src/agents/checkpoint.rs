//! Versioned JSON checkpoints and learning-curve CSVs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::train::{Algo, CurvePoint, TrainConfig};
use crate::error::{GridError, Result};

pub const CHECKPOINT_FORMAT: &str = "gridweave-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkBlob {
    /// `[[hidden, input], [hidden], [output, hidden], [output]]`
    pub shapes: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl NetworkBlob {
    pub fn from_mlp(m: &Mlp) -> Self {
        NetworkBlob {
            shapes: vec![
                vec![m.hidden, m.input],
                vec![m.hidden],
                vec![m.output, m.hidden],
                vec![m.output],
            ],
            weights: m.flat(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let bad = || GridError::Config("malformed network shapes in checkpoint".into());
        let [w1, b1, w2, b2] = self.shapes.as_slice() else {
            return Err(bad());
        };
        let (hidden, input) = match w1.as_slice() {
            [h, i] => (*h, *i),
            _ => return Err(bad()),
        };
        let output = match w2.as_slice() {
            [o, h] if *h == hidden => *o,
            _ => return Err(bad()),
        };
        if b1.as_slice() != [hidden] || b2.as_slice() != [output] {
            return Err(bad());
        }
        let mut m = Mlp::zeros(input, hidden, output);
        m.set_flat(&self.weights)?;
        if !m.is_finite() {
            return Err(GridError::NonFinite("checkpoint weights".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub algo: Algo,
    pub seed: u64,
    pub obs_dim: usize,
    pub train_config: TrainConfig,
    pub actor: NetworkBlob,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic: Option<NetworkBlob>,
}

impl Checkpoint {
    pub fn new(algo: Algo, seed: u64, train_config: TrainConfig, actor: &Mlp, critic: Option<&Mlp>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            algo,
            seed,
            obs_dim: actor.input,
            train_config,
            actor: NetworkBlob::from_mlp(actor),
            critic: critic.map(NetworkBlob::from_mlp),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(GridError::Config(format!("not a checkpoint file: format '{}'", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(GridError::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }
}

pub const CURVE_HEADER: &str = "iteration,mean_reward,mean_cost_price,mean_cost_emission";

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CURVE_HEADER}")?;
    for p in curve {
        writeln!(
            out,
            "{},{},{},{}",
            p.iteration, p.mean_reward, p.mean_cost_price, p.mean_cost_emission
        )?;
    }
    out.flush()?;
    Ok(())
}
