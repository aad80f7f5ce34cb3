//! Static one-shot Bayesian persuasion.
//!
//! The sender commits to a signaling policy `π(q|s)`, the receiver forms the
//! Bayes posterior over states after seeing a signal and best-responds to it.
//! Everything here is a pure function of immutable inputs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{checked_distribution, distinct_values, PROB_TOL};

/// An ordered set of labels with a canonical index per label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(field: &str, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::field(field, "label set is empty"));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::field(field, format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels, index })
    }

    /// Labels `prefix0, prefix1, ...`.
    pub fn numbered(prefix: &str, n: usize) -> Self {
        let labels = (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self::new(prefix, labels).expect("numbered labels are unique and non-empty")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// The environment state space `𝒮`.
pub type StateSpace = LabelSet;

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    pub fn new(field: &str, probs: &[f64]) -> Result<Self> {
        Ok(Self(checked_distribution(field, probs)?))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        Self(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The common prior `μ`.
pub type Prior = BeliefVector;

/// A signaling policy `π(q|s)`, stored as a row-stochastic `|𝒮| × |𝒬|` table.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingPolicy {
    name: String,
    table: Vec<Vec<f64>>,
}

impl SignalingPolicy {
    pub fn new(name: impl Into<String>, table: Vec<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        if table.is_empty() {
            return Err(Error::field(format!("policy `{name}`"), "no rows"));
        }
        let width = table[0].len();
        let mut rows = Vec::with_capacity(table.len());
        for (s, row) in table.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    what: format!("policy `{name}` row {s}"),
                    expected: width,
                    got: row.len(),
                });
            }
            rows.push(checked_distribution(&format!("policy `{name}` row {s}"), row)?);
        }
        Ok(Self { name, table: rows })
    }

    /// `π(q_j|s_j) = 1` (requires `|𝒬| = |𝒮|`).
    pub fn fully_informative(n: usize) -> Self {
        let table = (0..n)
            .map(|s| (0..n).map(|q| if q == s { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { name: "informative".into(), table }
    }

    /// Every state emits every signal with equal probability.
    pub fn uninformative(num_states: usize, num_signals: usize) -> Self {
        let row = vec![1.0 / num_signals as f64; num_signals];
        Self { name: "uninformative".into(), table: vec![row; num_states] }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.table.len()
    }

    pub fn num_signals(&self) -> usize {
        self.table[0].len()
    }

    pub fn prob(&self, state: usize, signal: usize) -> f64 {
        self.table[state][signal]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.table[state]
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    /// Marginal probability of `signal` when states are drawn from `prior`.
    pub fn signal_marginal(&self, prior: &[f64], signal: usize) -> f64 {
        prior.iter().enumerate().map(|(s, &m)| m * self.table[s][signal]).sum()
    }
}

/// Receiver tie-breaking rule for the argmax in the best response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest canonical action index among the maximizers.
    #[default]
    LowestIndex,
    /// Among the maximizers, the action the sender prefers under the same
    /// belief; remaining ties go to the lowest index.
    SenderPreferred,
}

/// Sender and receiver reward tables `ρ^s(s,a)`, `ρ^r(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    sender: Vec<Vec<f64>>,
    receiver: Vec<Vec<f64>>,
    sender_values: Vec<f64>,
    receiver_values: Vec<f64>,
}

impl RewardTable {
    pub fn new(sender: Vec<Vec<f64>>, receiver: Vec<Vec<f64>>) -> Result<Self> {
        check_table("rewards.sender", &sender)?;
        check_table("rewards.receiver", &receiver)?;
        if sender.len() != receiver.len() || sender[0].len() != receiver[0].len() {
            return Err(Error::DimensionMismatch {
                what: "sender vs receiver reward table".into(),
                expected: sender.len() * sender[0].len(),
                got: receiver.len() * receiver[0].len(),
            });
        }
        let sender_values = distinct_values(sender.iter().flatten().copied());
        let receiver_values = distinct_values(receiver.iter().flatten().copied());
        Ok(Self { sender, receiver, sender_values, receiver_values })
    }

    pub fn num_states(&self) -> usize {
        self.sender.len()
    }

    pub fn num_actions(&self) -> usize {
        self.sender[0].len()
    }

    pub fn sender(&self, s: usize, a: usize) -> f64 {
        self.sender[s][a]
    }

    pub fn receiver(&self, s: usize, a: usize) -> f64 {
        self.receiver[s][a]
    }

    pub fn sender_table(&self) -> &[Vec<f64>] {
        &self.sender
    }

    pub fn receiver_table(&self) -> &[Vec<f64>] {
        &self.receiver
    }

    /// `ℛ^s`: distinct sender reward values, ascending.
    pub fn sender_values(&self) -> &[f64] {
        &self.sender_values
    }

    /// `ℛ^r`: distinct receiver reward values, ascending.
    pub fn receiver_values(&self) -> &[f64] {
        &self.receiver_values
    }

    /// Index of `ρ^r(s,a)` in [`Self::receiver_values`].
    pub fn receiver_value_index(&self, s: usize, a: usize) -> usize {
        let v = self.receiver[s][a];
        self.receiver_values
            .iter()
            .position(|&x| x == v)
            .expect("receiver table entries are in the value set")
    }

    pub fn sender_bounds(&self) -> (f64, f64) {
        (self.sender_values[0], *self.sender_values.last().unwrap())
    }

    pub fn receiver_bounds(&self) -> (f64, f64) {
        (self.receiver_values[0], *self.receiver_values.last().unwrap())
    }
}

fn check_table(field: &str, t: &[Vec<f64>]) -> Result<()> {
    if t.is_empty() || t[0].is_empty() {
        return Err(Error::field(field, "empty table"));
    }
    let width = t[0].len();
    for (s, row) in t.iter().enumerate() {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                what: format!("{field} row {s}"),
                expected: width,
                got: row.len(),
            });
        }
        if let Some(a) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::field(format!("{field}[{s}][{a}]"), "not finite"));
        }
    }
    Ok(())
}

/// Bayes posterior `p^π(·|q)` of `prior` after observing `signal` under `policy`.
pub fn posterior(policy: &SignalingPolicy, prior: &[f64], signal: usize) -> Result<BeliefVector> {
    if prior.len() != policy.num_states() {
        return Err(Error::DimensionMismatch {
            what: "prior vs policy states".into(),
            expected: policy.num_states(),
            got: prior.len(),
        });
    }
    if signal >= policy.num_signals() {
        return Err(Error::DimensionMismatch {
            what: "signal index".into(),
            expected: policy.num_signals(),
            got: signal,
        });
    }
    let marginal = policy.signal_marginal(prior, signal);
    if marginal <= 0.0 {
        return Err(Error::ZeroMarginalSignal { signal: format!("q{signal}") });
    }
    let probs = prior
        .iter()
        .enumerate()
        .map(|(s, &m)| policy.prob(s, signal) * m / marginal)
        .collect();
    Ok(BeliefVector(probs))
}

/// Expected receiver utility of every action under `belief`.
pub fn receiver_utilities(belief: &[f64], rewards: &RewardTable) -> Vec<f64> {
    (0..rewards.num_actions())
        .map(|a| belief.iter().enumerate().map(|(s, &b)| b * rewards.receiver(s, a)).sum())
        .collect()
}

/// The receiver's best response `argmax_a Σ_s b(s) ρ^r(s,a)`.
pub fn best_response(belief: &[f64], rewards: &RewardTable, tie: TieBreak) -> Result<usize> {
    if belief.len() != rewards.num_states() {
        return Err(Error::DimensionMismatch {
            what: "belief vs reward table states".into(),
            expected: rewards.num_states(),
            got: belief.len(),
        });
    }
    let utilities = receiver_utilities(belief, rewards);
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Utilities that differ only by accumulated rounding count as ties.
    let scale = utilities.iter().fold(1.0_f64, |m, u| m.max(u.abs()));
    let tol = PROB_TOL * scale;
    let maximizers = utilities.iter().enumerate().filter(|(_, &u)| best - u <= tol).map(|(a, _)| a);
    let choice = match tie {
        TieBreak::LowestIndex => maximizers.min(),
        TieBreak::SenderPreferred => {
            let sender_value =
                |a: usize| belief.iter().enumerate().map(|(s, &b)| b * rewards.sender(s, a)).sum::<f64>();
            let mut best_a = None;
            let mut best_v = f64::NEG_INFINITY;
            for a in maximizers {
                let v = sender_value(a);
                if v > best_v + tol {
                    best_v = v;
                    best_a = Some(a);
                }
            }
            best_a
        }
    };
    Ok(choice.expect("action set is non-empty"))
}

/// Sender performance `J(π) = Σ_s Σ_q μ(s) π(q|s) ρ^s(s, a*(q;π))`.
///
/// Signals with zero marginal carry no weight and are skipped.
pub fn policy_value(
    policy: &SignalingPolicy,
    prior: &[f64],
    rewards: &RewardTable,
    tie: TieBreak,
) -> Result<f64> {
    if policy.num_states() != rewards.num_states() {
        return Err(Error::DimensionMismatch {
            what: "policy vs reward table states".into(),
            expected: rewards.num_states(),
            got: policy.num_states(),
        });
    }
    let mut value = 0.0;
    for q in 0..policy.num_signals() {
        if policy.signal_marginal(prior, q) <= 0.0 {
            continue;
        }
        let post = posterior(policy, prior, q)?;
        let a = best_response(post.probs(), rewards, tie)?;
        for (s, &m) in prior.iter().enumerate() {
            value += m * policy.prob(s, q) * rewards.sender(s, a);
        }
    }
    Ok(value)
}

/// Values closer than this (relative) count as tied.
const VALUE_TIE_TOL: f64 = 1e-12;

/// Best policy in a finite list by enumeration. Ties, up to rounding, go to
/// the lowest list index.
pub fn solve_bp(
    policies: &[SignalingPolicy],
    prior: &[f64],
    rewards: &RewardTable,
    tie: TieBreak,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in policies.iter().enumerate() {
        let v = policy_value(p, prior, rewards, tie)?;
        if best.map_or(true, |(_, bv)| v > bv + VALUE_TIE_TOL * bv.abs().max(1.0)) {
            best = Some((i, v));
        }
    }
    best.ok_or(Error::EmptyPolicySet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_rewards(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    /// ρ^r identity, ρ^s(s,a) = 1 iff a = a1.
    fn e2_rewards() -> RewardTable {
        RewardTable::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]], identity_rewards(2)).unwrap()
    }

    #[test]
    fn posterior_examples() {
        let info = SignalingPolicy::fully_informative(2);
        assert_eq!(posterior(&info, &[0.5, 0.5], 0).unwrap().probs(), &[1.0, 0.0]);

        let uninf = SignalingPolicy::uninformative(2, 2);
        let p = posterior(&uninf, &[0.3, 0.7], 0).unwrap();
        assert!((p.probs()[0] - 0.3).abs() < 1e-15 && (p.probs()[1] - 0.7).abs() < 1e-15);

        let partial = SignalingPolicy::new("p", vec![vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        let p = posterior(&partial, &[0.3, 0.7], 0).unwrap();
        assert!((p.probs()[0] - 6.0 / 13.0).abs() < 1e-15);
        assert!((p.probs()[1] - 7.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_rejects_zero_marginal_signal() {
        let info = SignalingPolicy::fully_informative(2);
        let err = posterior(&info, &[1.0, 0.0], 1).unwrap_err();
        assert!(matches!(err, Error::ZeroMarginalSignal { .. }));
    }

    #[test]
    fn best_response_examples() {
        let r = RewardTable::new(identity_rewards(2), identity_rewards(2)).unwrap();
        assert_eq!(best_response(&[1.0, 0.0], &r, TieBreak::LowestIndex).unwrap(), 0);
        assert_eq!(best_response(&[0.5, 0.5], &r, TieBreak::LowestIndex).unwrap(), 0);
        assert_eq!(best_response(&[0.4, 0.6], &r, TieBreak::LowestIndex).unwrap(), 1);
        assert!(matches!(
            best_response(&[1.0], &r, TieBreak::LowestIndex),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sender_preferred_tie_break() {
        let r = e2_rewards();
        assert_eq!(best_response(&[0.5, 0.5], &r, TieBreak::LowestIndex).unwrap(), 0);
        assert_eq!(best_response(&[0.5, 0.5], &r, TieBreak::SenderPreferred).unwrap(), 1);
    }

    #[test]
    fn policy_value_examples() {
        let r = e2_rewards();
        let mu = [0.5, 0.5];
        let uninf = SignalingPolicy::uninformative(2, 2);
        let info = SignalingPolicy::fully_informative(2);
        assert_eq!(policy_value(&uninf, &mu, &r, TieBreak::LowestIndex).unwrap(), 0.0);
        assert_eq!(policy_value(&info, &mu, &r, TieBreak::LowestIndex).unwrap(), 0.5);

        let zero = RewardTable::new(vec![vec![0.0; 2]; 2], identity_rewards(2)).unwrap();
        assert_eq!(policy_value(&info, &mu, &zero, TieBreak::LowestIndex).unwrap(), 0.0);
    }

    #[test]
    fn solve_bp_examples() {
        let r = e2_rewards();
        let mu = [0.5, 0.5];
        let uninf = SignalingPolicy::uninformative(2, 2);
        let info = SignalingPolicy::fully_informative(2);

        let (i, _) = solve_bp(std::slice::from_ref(&uninf), &mu, &r, TieBreak::LowestIndex).unwrap();
        assert_eq!(i, 0);
        let (i, v) = solve_bp(&[uninf, info.clone()], &mu, &r, TieBreak::LowestIndex).unwrap();
        assert_eq!((i, v), (1, 0.5));
        let (i, _) = solve_bp(&[info.clone(), info], &mu, &r, TieBreak::LowestIndex).unwrap();
        assert_eq!(i, 0);
        assert!(matches!(solve_bp(&[], &mu, &r, TieBreak::LowestIndex), Err(Error::EmptyPolicySet)));
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn posterior_is_a_distribution(prior in simplex(3), rows in prop::collection::vec(simplex(4), 3), q in 0usize..4) {
            let pi = SignalingPolicy::new("r", rows).unwrap();
            let p = posterior(&pi, &prior, q).unwrap();
            prop_assert!(p.probs().iter().all(|&x| x >= 0.0));
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn best_response_is_affine_invariant(
            belief in simplex(3),
            table in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 3),
            alpha in 0.1f64..10.0,
            beta in -10.0f64..10.0,
        ) {
            let shifted: Vec<Vec<f64>> = table.iter().map(|r| r.iter().map(|x| alpha * x + beta).collect()).collect();
            let zeros = vec![vec![0.0; 4]; 3];
            let a = RewardTable::new(zeros.clone(), table).unwrap();
            let b = RewardTable::new(zeros, shifted).unwrap();
            prop_assert_eq!(
                best_response(&belief, &a, TieBreak::LowestIndex).unwrap(),
                best_response(&belief, &b, TieBreak::LowestIndex).unwrap()
            );
        }

        #[test]
        fn policy_value_within_sender_bounds(
            prior in simplex(2),
            rows in prop::collection::vec(simplex(3), 2),
            sender in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2),
        ) {
            let pi = SignalingPolicy::new("r", rows).unwrap();
            let r = RewardTable::new(sender, identity_rewards(2)).unwrap();
            let v = policy_value(&pi, &prior, &r, TieBreak::LowestIndex).unwrap();
            let (lo, hi) = r.sender_bounds();
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
