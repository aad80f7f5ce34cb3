//! The sequential persuasion process with a hidden receiver confounder.
//!
//! Each round the sender observes the state, picks a signaling policy with its
//! meta-policy, and sends a signal; the receiver updates a belief on a finite
//! grid through a confounded kernel and best-responds.

mod dataset;
mod env;
mod kernel;
mod meta;
mod sim;

pub use dataset::{
    generate_dataset, Dataset, DatasetHeader, ObservableTrajectory, ObservedRound, PRE_INITIAL_TOKEN,
};
pub use env::{
    ConfounderConfig, EnvironmentConfig, EnvironmentSpec, InitialRowConfig, KernelConfig, PolicyConfig,
    RewardsConfig, StatesConfig, StepRowConfig,
};
pub use kernel::{belief_step, BeliefKernel, KernelContext, KernelDims, KernelFamily};
pub use meta::{FeatureKey, Field, FieldMask, HistoryView, MetaPolicy, RecordView, StrategyConfig};
pub use sim::{episode_seed, monte_carlo_value, receiver_act, simulate_episode, Trajectory};

use serde::{Deserialize, Serialize};

use crate::bp::{BeliefVector, LabelSet};
use crate::error::{Error, Result};
use crate::prob::{checked_distribution, l1_distance, PROB_TOL};

/// The hidden receiver type `Z`: drawn once from `η`, constant afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderSpec {
    labels: LabelSet,
    initial_dist: Vec<f64>,
}

impl ConfounderSpec {
    pub fn new(labels: Vec<String>, initial_dist: &[f64]) -> Result<Self> {
        let labels = LabelSet::new("confounder.labels", labels)?;
        if initial_dist.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "confounder.initial_dist".into(),
                expected: labels.len(),
                got: initial_dist.len(),
            });
        }
        let initial_dist = checked_distribution("confounder.initial_dist", initial_dist)?;
        Ok(Self { labels, initial_dist })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }
}

/// The finite receiver belief space `ℬ`. Always contains the uniform belief.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGrid {
    points: Vec<BeliefVector>,
    uniform_index: usize,
}

impl BeliefGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::field("belief_grid", "no points"));
        }
        let n = points[0].len();
        let mut grid = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("belief_grid[{i}]"),
                    expected: n,
                    got: p.len(),
                });
            }
            grid.push(BeliefVector::new(&format!("belief_grid[{i}]"), p)?);
        }
        for i in 0..grid.len() {
            for j in 0..i {
                if l1_distance(grid[i].probs(), grid[j].probs()) <= 1e-9 {
                    return Err(Error::field(
                        format!("belief_grid[{i}]"),
                        format!("duplicates point {j}"),
                    ));
                }
            }
        }
        let uniform = BeliefVector::uniform(n);
        let uniform_index = grid
            .iter()
            .position(|b| l1_distance(b.probs(), uniform.probs()) <= PROB_TOL * n as f64)
            .ok_or_else(|| Error::field("belief_grid", "must contain the uniform belief"))?;
        Ok(Self { points: grid, uniform_index })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &BeliefVector {
        &self.points[i]
    }

    pub fn points(&self) -> &[BeliefVector] {
        &self.points
    }

    pub fn uniform_index(&self) -> usize {
        self.uniform_index
    }

    /// Nearest grid point in L1; ties go to the lowest index.
    pub fn nearest(&self, belief: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = l1_distance(p.probs(), belief);
            if d < best_d - 1e-12 {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// One round of the sender's information vector: `(s, π, q, a, ρ^r)`.
///
/// `receiver_reward` is the index of `ρ^r` in the distinct receiver value set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoundRecord {
    pub state: usize,
    pub policy: usize,
    pub signal: usize,
    pub action: usize,
    pub receiver_reward: usize,
}

/// Everything the sender has observed before the current round (`δ_i`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InfoVector(Vec<RoundRecord>);

impl InfoVector {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub const fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_rounds(rounds: Vec<RoundRecord>) -> Self {
        Self(rounds)
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<&RoundRecord> {
        self.0.last()
    }

    /// `δ_{i+1} = δ_i ⧺ record`.
    pub fn extended(&self, record: RoundRecord) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(record);
        Self(v)
    }

    /// The first `len` rounds.
    pub fn prefix(&self, len: usize) -> Self {
        Self(self.0[..len].to_vec())
    }
}

impl std::fmt::Display for InfoVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(
                f,
                "{}.{}.{}.{}.{}",
                r.state, r.policy, r.signal, r.action, r.receiver_reward
            )?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_requires_uniform_and_distinct_points() {
        assert!(BeliefGrid::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(BeliefGrid::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).is_err());
        let g = BeliefGrid::new(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert_eq!(g.uniform_index(), 1);
        assert_eq!(g.nearest(&[0.9, 0.1]), 0);
        assert_eq!(g.nearest(&[0.7, 0.3]), 1);
        // Equidistant from points 0 and 1: lowest index wins.
        assert_eq!(g.nearest(&[0.75, 0.25]), 0);
    }

    #[test]
    fn info_vector_extends_by_one_record() {
        let r = RoundRecord { state: 1, policy: 0, signal: 1, action: 1, receiver_reward: 1 };
        let d0 = InfoVector::new();
        let d1 = d0.extended(r);
        assert_eq!(d1.len(), d0.len() + 1);
        assert_eq!(d1.prefix(0), d0);
        assert_eq!(d1.last(), Some(&r));
    }
}
