//! Built-in environments used by the tests, the shipped configs and the CLI.

use crate::bp::TieBreak;
use crate::spp::{
    ConfounderConfig, EnvironmentConfig, KernelConfig, PolicyConfig, RewardsConfig, StatesConfig,
};

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn two_point_grid() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]
}

/// Two states, two signals, two actions, a three-point belief grid, receiver
/// rewarded for matching the state and sender rewarded for `a1`.
///
/// Policies: `partial` (`π(q0|s0) = 0.8`, `π(q0|s1) = 0.3`) and `informative`.
/// Confounded: `z ∈ {cautious, credulous}` with optimism `(−0.5, 2.0)`;
/// otherwise a single neutral receiver type. Kernel noise is 0.1 in both.
pub fn e2(confounded: bool, horizon: usize) -> EnvironmentConfig {
    let (confounder, belief_kernel) = if confounded {
        (
            ConfounderConfig { labels: labels(&["cautious", "credulous"]), initial_dist: vec![0.5, 0.5] },
            KernelConfig::DistortedBayes { optimism: vec![-0.5, 2.0], noise: 0.1 },
        )
    } else {
        (
            ConfounderConfig { labels: labels(&["neutral"]), initial_dist: vec![1.0] },
            KernelConfig::NeutralBayes { noise: 0.1 },
        )
    };
    EnvironmentConfig {
        name: if confounded { "e2-confounded".into() } else { "e2".into() },
        horizon,
        tie_break: TieBreak::LowestIndex,
        signals: labels(&["q0", "q1"]),
        actions: labels(&["a0", "a1"]),
        belief_grid: two_point_grid(),
        states: StatesConfig { labels: labels(&["s0", "s1"]), prior: vec![0.5, 0.5] },
        rewards: RewardsConfig {
            sender: vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            receiver: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        confounder,
        policies: vec![
            PolicyConfig { name: "partial".into(), table: vec![vec![0.8, 0.2], vec![0.3, 0.7]] },
            PolicyConfig { name: "informative".into(), table: vec![vec![1.0, 0.0], vec![0.0, 1.0]] },
        ],
        belief_kernel,
    }
}

/// Every space a singleton; the sender earns `sender_reward` each round.
pub fn degenerate(horizon: usize, sender_reward: f64) -> EnvironmentConfig {
    EnvironmentConfig {
        name: "degenerate".into(),
        horizon,
        tie_break: TieBreak::LowestIndex,
        signals: labels(&["q"]),
        actions: labels(&["a"]),
        belief_grid: vec![vec![1.0]],
        states: StatesConfig { labels: labels(&["s"]), prior: vec![1.0] },
        rewards: RewardsConfig { sender: vec![vec![sender_reward]], receiver: vec![vec![0.0]] },
        confounder: ConfounderConfig { labels: labels(&["z"]), initial_dist: vec![1.0] },
        policies: vec![PolicyConfig { name: "only".into(), table: vec![vec![1.0]] }],
        belief_kernel: KernelConfig::NeutralBayes { noise: 0.0 },
    }
}

/// One state and three receiver types: the observations carry no information
/// about `z`. Paired with a behavioral strategy that never plays policy 1,
/// the matrices needed to evaluate policy 1 have no support.
pub fn rank_violating(horizon: usize) -> EnvironmentConfig {
    EnvironmentConfig {
        name: "rank-violating".into(),
        horizon,
        tie_break: TieBreak::LowestIndex,
        signals: labels(&["q0", "q1"]),
        actions: labels(&["a0", "a1"]),
        belief_grid: vec![vec![1.0]],
        states: StatesConfig { labels: labels(&["s"]), prior: vec![1.0] },
        rewards: RewardsConfig { sender: vec![vec![0.0, 1.0]], receiver: vec![vec![1.0, 0.0]] },
        confounder: ConfounderConfig {
            labels: labels(&["z0", "z1", "z2"]),
            initial_dist: vec![0.25, 0.25, 0.5],
        },
        policies: vec![
            PolicyConfig { name: "say-q0".into(), table: vec![vec![1.0, 0.0]] },
            PolicyConfig { name: "say-q1".into(), table: vec![vec![0.0, 1.0]] },
        ],
        belief_kernel: KernelConfig::DistortedBayes { optimism: vec![0.0, 0.5, 1.0], noise: 0.0 },
    }
}

/// Warehouse illustration: demand level, caution signal, worker pace and the
/// worker's risk attitude as the hidden type.
pub fn warehouse(horizon: usize) -> EnvironmentConfig {
    EnvironmentConfig {
        name: "warehouse".into(),
        horizon,
        tie_break: TieBreak::LowestIndex,
        signals: labels(&["relaxed", "caution"]),
        actions: labels(&["normal_pace", "slow_down"]),
        belief_grid: vec![vec![1.0, 0.0], vec![0.75, 0.25], vec![0.5, 0.5], vec![0.25, 0.75], vec![0.0, 1.0]],
        states: StatesConfig { labels: labels(&["low_demand", "high_demand"]), prior: vec![0.6, 0.4] },
        rewards: RewardsConfig {
            sender: vec![vec![1.0, 0.5], vec![0.0, 1.0]],
            receiver: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        confounder: ConfounderConfig {
            labels: labels(&["risk_averse", "risk_seeking"]),
            initial_dist: vec![0.5, 0.5],
        },
        policies: vec![
            PolicyConfig { name: "silent".into(), table: vec![vec![1.0, 0.0], vec![1.0, 0.0]] },
            PolicyConfig { name: "honest".into(), table: vec![vec![1.0, 0.0], vec![0.0, 1.0]] },
            PolicyConfig { name: "alarmist".into(), table: vec![vec![0.5, 0.5], vec![0.0, 1.0]] },
        ],
        belief_kernel: KernelConfig::DistortedBayes { optimism: vec![1.0, -0.5], noise: 0.05 },
    }
}
