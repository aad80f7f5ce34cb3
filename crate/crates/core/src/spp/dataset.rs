use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::sim::{episode_seed, simulate_episode};
use super::{EnvironmentSpec, InfoVector, MetaPolicy, RoundRecord};

/// Value recorded for `y_{−1}`: the receiver's uniform starting belief.
pub const PRE_INITIAL_TOKEN: &str = "uniform";

/// One logged round: state, chosen policy index, signal, receiver action,
/// receiver reward and sender reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedRound {
    pub s: usize,
    pub u: usize,
    pub q: usize,
    pub a: usize,
    pub rr: f64,
    pub rs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableTrajectory {
    pub y_pre: String,
    pub rounds: Vec<ObservedRound>,
}

impl ObservableTrajectory {
    pub fn new(rounds: Vec<ObservedRound>) -> Self {
        Self { y_pre: PRE_INITIAL_TOKEN.to_string(), rounds }
    }

    /// Converts to round records, indexing `rr` into `receiver_values`.
    pub fn records(&self, receiver_values: &[f64]) -> Result<Vec<RoundRecord>> {
        self.rounds
            .iter()
            .map(|r| {
                let receiver_reward = receiver_values
                    .iter()
                    .position(|&v| v == r.rr)
                    .ok_or_else(|| Error::field("rr", format!("{} not in receiver value set", r.rr)))?;
                Ok(RoundRecord { state: r.s, policy: r.u, signal: r.q, action: r.a, receiver_reward })
            })
            .collect()
    }

    /// The full information vector `δ_{T+1}`.
    pub fn info_vector(&self, receiver_values: &[f64]) -> Result<InfoVector> {
        Ok(InfoVector::from_rounds(self.records(receiver_values)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub kind: String,
    pub environment_hash: String,
    pub seed: u64,
    pub n: usize,
    pub horizon: usize,
    pub num_policies: usize,
    pub receiver_values: Vec<f64>,
    pub sender_values: Vec<f64>,
    pub behavioral: String,
}

/// Logged observable trajectories plus provenance. `warnings` is not
/// persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<ObservableTrajectory>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the header line then one record per line.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let line = serde_json::to_string(&self.header).map_err(|e| Error::InternalInconsistency(e.to_string()))?;
        writeln!(w, "{line}")?;
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::InternalInconsistency(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines.next().ok_or(Error::EmptyDataset)?;
        let header: DatasetHeader = serde_json::from_str(&first?)
            .map_err(|e| Error::DatasetFormat { line: 1, reason: e.to_string() })?;
        if header.kind != "header" {
            return Err(Error::DatasetFormat { line: 1, reason: "first line is not a header".into() });
        }
        let mut records = Vec::with_capacity(header.n);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ObservableTrajectory = serde_json::from_str(&line)
                .map_err(|e| Error::DatasetFormat { line: i + 1, reason: e.to_string() })?;
            if rec.y_pre != PRE_INITIAL_TOKEN {
                return Err(Error::DatasetFormat { line: i + 1, reason: format!("unknown y_pre `{}`", rec.y_pre) });
            }
            if rec.rounds.len() != header.horizon + 1 {
                return Err(Error::DatasetFormat {
                    line: i + 1,
                    reason: format!("expected {} rounds, got {}", header.horizon + 1, rec.rounds.len()),
                });
            }
            records.push(rec);
        }
        if records.len() != header.n {
            return Err(Error::DatasetFormat {
                line: records.len() + 1,
                reason: format!("header declares n = {} but found {} records", header.n, records.len()),
            });
        }
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { header, records, warnings: Vec::new() })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Simulates `n` episodes under `behavioral` (episode `e` uses
/// `episode_seed(seed, e)`) and keeps their observable parts.
pub fn generate_dataset(
    env: &EnvironmentSpec,
    behavioral: &MetaPolicy,
    descriptor: &str,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::field("n", "must be at least 1"));
    }
    let mut warnings = Vec::new();
    if !behavioral.has_full_support() {
        warnings.push(format!(
            "behavioral meta-policy `{}` lacks full support over policies; off-policy estimates may be unidentified",
            behavioral.name()
        ));
    }
    let records = (0..n as u64)
        .into_par_iter()
        .map(|e| simulate_episode(env, behavioral, episode_seed(seed, e)).map(|t| t.observable()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        header: DatasetHeader {
            kind: "header".into(),
            environment_hash: env.hash().to_string(),
            seed,
            n,
            horizon: env.horizon(),
            num_policies: env.num_policies(),
            receiver_values: env.rewards().receiver_values().to_vec(),
            sender_values: env.rewards().sender_values().to_vec(),
            behavioral: descriptor.to_string(),
        },
        records,
        warnings,
    })
}
