use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bp::{best_response, LabelSet, Prior, RewardTable, SignalingPolicy, TieBreak};
use crate::error::{Error, Result};

use super::kernel::{BeliefKernel, KernelContext, KernelDims};
use super::{BeliefGrid, ConfounderSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesConfig {
    pub labels: Vec<String>,
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardsConfig {
    pub sender: Vec<Vec<f64>>,
    pub receiver: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfounderConfig {
    pub labels: Vec<String>,
    pub initial_dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialRowConfig {
    pub signal: usize,
    pub confounder: usize,
    pub policy: usize,
    pub row: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRowConfig {
    pub belief: usize,
    pub receiver_reward: usize,
    pub action: usize,
    pub signal: usize,
    pub confounder: usize,
    pub policy: usize,
    pub row: Vec<f64>,
}

/// Belief kernel description. Table rows index grid points, receiver reward
/// values (sorted ascending), actions, signals, confounders and policies by
/// position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    NeutralBayes {
        #[serde(default)]
        noise: f64,
    },
    DistortedBayes {
        optimism: Vec<f64>,
        #[serde(default)]
        noise: f64,
    },
    Table {
        initial: Vec<InitialRowConfig>,
        #[serde(default)]
        rows: Vec<StepRowConfig>,
    },
}

/// On-disk form of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default)]
    pub name: String,
    pub horizon: usize,
    #[serde(default)]
    pub tie_break: TieBreak,
    pub signals: Vec<String>,
    pub actions: Vec<String>,
    pub belief_grid: Vec<Vec<f64>>,
    pub states: StatesConfig,
    pub rewards: RewardsConfig,
    pub confounder: ConfounderConfig,
    pub policies: Vec<PolicyConfig>,
    pub belief_kernel: KernelConfig,
}

/// A validated environment. Immutable; build a new one from a modified
/// [`EnvironmentConfig`] to change anything.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    config: EnvironmentConfig,
    hash: String,
    states: LabelSet,
    prior: Prior,
    signals: LabelSet,
    actions: LabelSet,
    rewards: RewardTable,
    confounder: ConfounderSpec,
    grid: BeliefGrid,
    kernel: BeliefKernel,
    policies: Vec<SignalingPolicy>,
    grid_actions: Vec<usize>,
}

impl EnvironmentSpec {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let config: EnvironmentConfig =
            toml::from_str(src).map_err(|e| Error::config("environment", e.to_string().trim_end()))?;
        Self::from_config(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)?;
        let config: EnvironmentConfig = toml::from_str(&src)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string().trim_end()))?;
        Self::from_config(config)
    }

    pub fn from_config(config: EnvironmentConfig) -> Result<Self> {
        let states = LabelSet::new("states.labels", config.states.labels.clone())?;
        let signals = LabelSet::new("signals", config.signals.clone())?;
        let actions = LabelSet::new("actions", config.actions.clone())?;
        if config.states.prior.len() != states.len() {
            return Err(Error::DimensionMismatch {
                what: "states.prior".into(),
                expected: states.len(),
                got: config.states.prior.len(),
            });
        }
        let prior = Prior::new("states.prior", &config.states.prior)?;
        check_table("rewards.sender", &config.rewards.sender, states.len(), actions.len())?;
        check_table("rewards.receiver", &config.rewards.receiver, states.len(), actions.len())?;
        let rewards = RewardTable::new(config.rewards.sender.clone(), config.rewards.receiver.clone())?;
        let confounder = ConfounderSpec::new(config.confounder.labels.clone(), &config.confounder.initial_dist)?;
        let grid = BeliefGrid::new(config.belief_grid.clone())?;
        if grid.point(0).len() != states.len() {
            return Err(Error::DimensionMismatch {
                what: "belief_grid[0]".into(),
                expected: states.len(),
                got: grid.point(0).len(),
            });
        }
        if config.policies.is_empty() {
            return Err(Error::EmptyPolicySet);
        }
        let mut policies = Vec::with_capacity(config.policies.len());
        for (i, p) in config.policies.iter().enumerate() {
            check_table(&format!("policies[{i}].table"), &p.table, states.len(), signals.len())?;
            policies.push(SignalingPolicy::new(p.name.clone(), p.table.clone()).map_err(|e| match e {
                Error::InvalidDistribution { field, reason } => Error::InvalidDistribution {
                    field: format!("policies[{i}] ({}) {field}", p.name),
                    reason,
                },
                other => other,
            })?);
        }
        let n_rr = rewards.receiver_values().len();
        let kernel = match &config.belief_kernel {
            KernelConfig::NeutralBayes { noise } => BeliefKernel::distorted_bayes(
                &grid,
                &policies,
                n_rr,
                actions.len(),
                &vec![0.0; confounder.len()],
                *noise,
            )?,
            KernelConfig::DistortedBayes { optimism, noise } => {
                if optimism.len() != confounder.len() {
                    return Err(Error::DimensionMismatch {
                        what: "belief_kernel.optimism".into(),
                        expected: confounder.len(),
                        got: optimism.len(),
                    });
                }
                BeliefKernel::distorted_bayes(&grid, &policies, n_rr, actions.len(), optimism, *noise)?
            }
            KernelConfig::Table { initial, rows } => {
                let dims = KernelDims {
                    beliefs: grid.len(),
                    receiver_rewards: n_rr,
                    actions: actions.len(),
                    signals: signals.len(),
                    confounders: confounder.len(),
                    policies: policies.len(),
                };
                let mut k = BeliefKernel::empty(dims);
                for (i, r) in initial.iter().enumerate() {
                    let ctx = KernelContext::Initial {
                        signal: r.signal,
                        confounder: r.confounder,
                        policy: r.policy,
                    };
                    k.set_row(ctx, &r.row).map_err(|e| Error::config(format!("belief_kernel.initial[{i}]"), e.to_string()))?;
                }
                for (i, r) in rows.iter().enumerate() {
                    let ctx = KernelContext::Step {
                        belief: r.belief,
                        receiver_reward: r.receiver_reward,
                        action: r.action,
                        signal: r.signal,
                        confounder: r.confounder,
                        policy: r.policy,
                    };
                    k.set_row(ctx, &r.row).map_err(|e| Error::config(format!("belief_kernel.rows[{i}]"), e.to_string()))?;
                }
                k
            }
        };
        let grid_actions = grid
            .points()
            .iter()
            .map(|b| best_response(b.probs(), &rewards, config.tie_break))
            .collect::<Result<Vec<_>>>()?;
        let hash = config_hash(&config);
        Ok(Self {
            config,
            hash,
            states,
            prior,
            signals,
            actions,
            rewards,
            confounder,
            grid,
            kernel,
            policies,
            grid_actions,
        })
    }

    /// The same environment with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.horizon = horizon;
        Self::from_config(cfg)
    }

    pub fn config(&self) -> &EnvironmentConfig {
        &self.config
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn tie_break(&self) -> TieBreak {
        self.config.tie_break
    }

    pub fn states(&self) -> &LabelSet {
        &self.states
    }

    pub fn signals(&self) -> &LabelSet {
        &self.signals
    }

    pub fn actions(&self) -> &LabelSet {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_policies(&self) -> usize {
        self.policies.len()
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn rewards(&self) -> &RewardTable {
        &self.rewards
    }

    pub fn confounder(&self) -> &ConfounderSpec {
        &self.confounder
    }

    pub fn grid(&self) -> &BeliefGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &BeliefKernel {
        &self.kernel
    }

    pub fn policies(&self) -> &[SignalingPolicy] {
        &self.policies
    }

    /// Receiver's best response at grid point `b`.
    pub fn grid_action(&self, b: usize) -> usize {
        self.grid_actions[b]
    }
}

fn check_table(field: &str, t: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if t.len() != rows {
        return Err(Error::DimensionMismatch { what: field.into(), expected: rows, got: t.len() });
    }
    for (i, r) in t.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::DimensionMismatch {
                what: format!("{field}[{i}]"),
                expected: cols,
                got: r.len(),
            });
        }
    }
    Ok(())
}

fn config_hash(config: &EnvironmentConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = EnvironmentSpec::from_config(presets::e2(true, 1)).unwrap();
        let b = EnvironmentSpec::from_config(presets::e2(true, 1)).unwrap();
        let c = EnvironmentSpec::from_config(presets::e2(true, 2)).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn bad_policy_row_names_the_field() {
        let mut cfg = presets::e2(false, 1);
        cfg.policies[0].table[1] = vec![0.5, 0.6];
        let err = EnvironmentSpec::from_config(cfg).unwrap_err().to_string();
        assert!(err.contains("policies[0]"), "{err}");
    }

    #[test]
    fn toml_errors_carry_location() {
        let err = EnvironmentSpec::from_toml_str("horizon = \"x\"\n").unwrap_err().to_string();
        assert!(err.contains("horizon") || err.contains("line"), "{err}");
    }

    #[test]
    fn grid_actions_follow_best_response() {
        let env = EnvironmentSpec::from_config(presets::e2(false, 1)).unwrap();
        assert_eq!(env.grid_action(0), 0);
        assert_eq!(env.grid_action(1), 0);
        assert_eq!(env.grid_action(2), 1);
    }
}
