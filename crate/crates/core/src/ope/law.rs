use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spp::{Dataset, InfoVector};

/// Where a law (and every matrix built from it) came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Population,
    Sample { n: usize, seed: u64 },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Population => write!(f, "population"),
            Provenance::Sample { n, seed } => write!(f, "sample(n={n}, seed={seed})"),
        }
    }
}

/// Law of the sender's observable trajectory under the behavioral strategy.
///
/// `y_{T+1} = δ_{T+1}` carries every earlier observation and action, so the
/// whole observable law is a mass function over complete information
/// vectors. Masses are probabilities (population) or counts (sample).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableLaw {
    horizon: usize,
    num_actions: usize,
    sender_values: Vec<f64>,
    weights: BTreeMap<InfoVector, f64>,
    reward: BTreeMap<(usize, usize), f64>,
    total: f64,
    provenance: Provenance,
}

impl ObservableLaw {
    /// `reward` maps `(s, a)` to the sender reward; it must cover every
    /// round appearing in `weights`.
    pub fn new(
        horizon: usize,
        num_actions: usize,
        sender_values: Vec<f64>,
        weights: BTreeMap<InfoVector, f64>,
        reward: BTreeMap<(usize, usize), f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let mut kept = BTreeMap::new();
        for (info, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::field("law weight", format!("{w} at {info}")));
            }
            if info.len() != horizon + 1 {
                return Err(Error::DimensionMismatch {
                    what: format!("rounds in {info}"),
                    expected: horizon + 1,
                    got: info.len(),
                });
            }
            for r in info.rounds() {
                if r.policy >= num_actions {
                    return Err(Error::field("law", format!("policy index {} out of range in {info}", r.policy)));
                }
                let v = reward
                    .get(&(r.state, r.action))
                    .ok_or_else(|| Error::field("law", format!("no sender reward for (s={}, a={})", r.state, r.action)))?;
                if !sender_values.contains(v) {
                    return Err(Error::field("law", format!("sender reward {v} not in the value set")));
                }
            }
            if w > 0.0 {
                kept.insert(info, w);
            }
        }
        let total: f64 = kept.values().sum();
        if kept.is_empty() || total <= 0.0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { horizon, num_actions, sender_values, weights: kept, reward, total, provenance })
    }

    /// Empirical law: one unit of mass per record.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let h = &data.header;
        let mut weights: BTreeMap<InfoVector, f64> = BTreeMap::new();
        let mut reward: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, rec) in data.records.iter().enumerate() {
            let line = i + 2;
            if rec.y_pre.is_empty() {
                return Err(Error::DatasetFormat { line, reason: "missing pre-initial observation".into() });
            }
            for r in &rec.rounds {
                match reward.insert((r.s, r.a), r.rs) {
                    Some(prev) if prev != r.rs => {
                        return Err(Error::DatasetFormat {
                            line,
                            reason: format!("sender reward for (s={}, a={}) is both {prev} and {}", r.s, r.a, r.rs),
                        })
                    }
                    _ => {}
                }
            }
            let info = rec
                .info_vector(&h.receiver_values)
                .map_err(|e| Error::DatasetFormat { line, reason: e.to_string() })?;
            *weights.entry(info).or_insert(0.0) += 1.0;
        }
        Self::new(
            h.horizon,
            h.num_policies,
            h.sender_values.clone(),
            weights,
            reward,
            Provenance::Sample { n: data.len(), seed: h.seed },
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn sender_values(&self) -> &[f64] {
        &self.sender_values
    }

    pub fn weights(&self) -> &BTreeMap<InfoVector, f64> {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[&(state, action)]
    }

    pub fn reward_table(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.reward
    }

    /// Index of `r_t` in the sender value set for a history with at least
    /// `t + 1` rounds.
    pub fn reward_index(&self, info: &[crate::spp::RoundRecord], t: usize) -> usize {
        let r = info[t];
        let v = self.reward(r.state, r.action);
        self.sender_values.iter().position(|&x| x == v).expect("validated in new")
    }

    /// Multinomial resample of `n` records from this law.
    pub fn resample(&self, n: usize, rng: &mut impl Rng) -> Result<Self> {
        let keys: Vec<&InfoVector> = self.weights.keys().collect();
        let mut cdf = Vec::with_capacity(keys.len());
        let mut acc = 0.0;
        for w in self.weights.values() {
            acc += w / self.total;
            cdf.push(acc);
        }
        let mut counts = vec![0.0; keys.len()];
        for _ in 0..n {
            let u: f64 = rng.gen();
            let i = cdf.partition_point(|&c| c <= u).min(keys.len() - 1);
            counts[i] += 1.0;
        }
        let weights = keys.into_iter().cloned().zip(counts).collect();
        let seed = match self.provenance {
            Provenance::Sample { seed, .. } => seed,
            Provenance::Population => 0,
        };
        Self::new(
            self.horizon,
            self.num_actions,
            self.sender_values.clone(),
            weights,
            self.reward.clone(),
            Provenance::Sample { n, seed },
        )
    }
}
