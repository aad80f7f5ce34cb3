use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::checked_distribution;

use super::{EnvironmentSpec, InfoVector, RoundRecord};

/// A component of a past round that a meta-policy may condition on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    State,
    Policy,
    Signal,
    Action,
    ReceiverReward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FieldMask {
    pub state: bool,
    pub policy: bool,
    pub signal: bool,
    pub action: bool,
    pub receiver_reward: bool,
}

impl FieldMask {
    pub fn all() -> Self {
        Self { state: true, policy: true, signal: true, action: true, receiver_reward: true }
    }

    pub fn from_fields(fields: &[Field]) -> Self {
        let mut m = Self::default();
        for f in fields {
            match f {
                Field::State => m.state = true,
                Field::Policy => m.policy = true,
                Field::Signal => m.signal = true,
                Field::Action => m.action = true,
                Field::ReceiverReward => m.receiver_reward = true,
            }
        }
        m
    }

    pub fn fields(&self) -> Vec<Field> {
        let mut v = Vec::new();
        if self.state {
            v.push(Field::State);
        }
        if self.policy {
            v.push(Field::Policy);
        }
        if self.signal {
            v.push(Field::Signal);
        }
        if self.action {
            v.push(Field::Action);
        }
        if self.receiver_reward {
            v.push(Field::ReceiverReward);
        }
        v
    }

    pub fn project(&self, r: &RoundRecord) -> RecordView {
        RecordView {
            state: self.state.then_some(r.state),
            policy: self.policy.then_some(r.policy),
            signal: self.signal.then_some(r.signal),
            action: self.action.then_some(r.action),
            receiver_reward: self.receiver_reward.then_some(r.receiver_reward),
        }
    }
}

/// A past round with the unmasked fields erased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordView {
    pub state: Option<usize>,
    pub policy: Option<usize>,
    pub signal: Option<usize>,
    pub action: Option<usize>,
    pub receiver_reward: Option<usize>,
}

/// How much of `δ_i` a meta-policy looks at: the last `window` rounds
/// (`None` = all of them), restricted to `fields`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryView {
    pub window: Option<usize>,
    pub fields: FieldMask,
}

impl HistoryView {
    pub fn exhaustive() -> Self {
        Self { window: None, fields: FieldMask::all() }
    }

    pub fn memoryless() -> Self {
        Self { window: Some(0), fields: FieldMask::default() }
    }

    pub fn key(&self, info: &InfoVector, state: usize) -> FeatureKey {
        let rounds = info.rounds();
        let start = match self.window {
            Some(k) => rounds.len().saturating_sub(k),
            None => 0,
        };
        FeatureKey {
            history: rounds[start..].iter().map(|r| self.fields.project(r)).collect(),
            state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureKey {
    pub history: Vec<RecordView>,
    pub state: usize,
}

/// A stochastic meta-policy: `(δ_i, s_i) ↦ Δ(𝒫)` through a feature table.
///
/// Inputs whose key is not in the table use `default`; without a default the
/// lookup fails.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPolicy {
    name: String,
    num_policies: usize,
    view: HistoryView,
    table: BTreeMap<FeatureKey, Vec<f64>>,
    default: Option<Vec<f64>>,
}

impl MetaPolicy {
    pub fn from_table(
        name: impl Into<String>,
        num_policies: usize,
        view: HistoryView,
        table: BTreeMap<FeatureKey, Vec<f64>>,
        default: Option<Vec<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        if num_policies == 0 {
            return Err(Error::EmptyPolicySet);
        }
        let mut checked = BTreeMap::new();
        for (k, row) in table {
            if row.len() != num_policies {
                return Err(Error::DimensionMismatch {
                    what: format!("meta-policy `{name}` row"),
                    expected: num_policies,
                    got: row.len(),
                });
            }
            let row = checked_distribution(&format!("meta-policy `{name}` row"), &row)?;
            checked.insert(k, row);
        }
        let default = match default {
            Some(d) => {
                if d.len() != num_policies {
                    return Err(Error::DimensionMismatch {
                        what: format!("meta-policy `{name}` default"),
                        expected: num_policies,
                        got: d.len(),
                    });
                }
                Some(checked_distribution(&format!("meta-policy `{name}` default"), &d)?)
            }
            None => None,
        };
        Ok(Self { name, num_policies, view, table: checked, default })
    }

    pub fn uniform(num_policies: usize) -> Result<Self> {
        let n = num_policies.max(1);
        Self::from_table(
            "uniform",
            num_policies,
            HistoryView::memoryless(),
            BTreeMap::new(),
            Some(vec![1.0 / n as f64; num_policies]),
        )
    }

    pub fn constant(num_policies: usize, policy: usize) -> Result<Self> {
        if policy >= num_policies {
            return Err(Error::field("strategy.policy", format!("index {policy} out of range {num_policies}")));
        }
        let mut row = vec![0.0; num_policies];
        row[policy] = 1.0;
        Self::from_table(
            format!("constant{policy}"),
            num_policies,
            HistoryView::memoryless(),
            BTreeMap::new(),
            Some(row),
        )
    }

    /// A memoryless meta-policy with one row per current state.
    pub fn state_table(rows: Vec<Vec<f64>>, num_policies: usize) -> Result<Self> {
        let table = rows
            .into_iter()
            .enumerate()
            .map(|(s, r)| (FeatureKey { history: Vec::new(), state: s }, r))
            .collect();
        Self::from_table("state_table", num_policies, HistoryView::memoryless(), table, None)
    }

    /// `(1 − ε)·self + ε·uniform`, applied to every row.
    pub fn mixed(&self, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::field("strategy.epsilon", format!("must lie in [0, 1], got {epsilon}")));
        }
        let n = self.num_policies as f64;
        let mix = |row: &Vec<f64>| row.iter().map(|p| (1.0 - epsilon) * p + epsilon / n).collect::<Vec<_>>();
        Self::from_table(
            format!("{}~eps{epsilon}", self.name),
            self.num_policies,
            self.view,
            self.table.iter().map(|(k, r)| (k.clone(), mix(r))).collect(),
            self.default.as_ref().map(mix),
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_policies(&self) -> usize {
        self.num_policies
    }

    pub fn view(&self) -> HistoryView {
        self.view
    }

    pub fn table(&self) -> &BTreeMap<FeatureKey, Vec<f64>> {
        &self.table
    }

    pub fn default_row(&self) -> Option<&[f64]> {
        self.default.as_deref()
    }

    /// The distribution over policy indices at `(δ_i, s_i)`.
    pub fn decide(&self, info: &InfoVector, state: usize) -> Result<&[f64]> {
        let key = self.view.key(info, state);
        self.table
            .get(&key)
            .or(self.default.as_ref())
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UndefinedOnReachableObservation {
                observation: format!("(delta={info}, s={state}) in meta-policy `{}`", self.name),
            })
    }

    /// Whether every stored row puts positive mass on every policy.
    pub fn has_full_support(&self) -> bool {
        self.table
            .values()
            .chain(self.default.iter())
            .all(|r| r.iter().all(|&p| p > 0.0))
    }

    /// The keys a window meta-policy of `view` can encounter over rounds
    /// `0..=horizon`, in canonical order.
    pub fn window_keys(env: &EnvironmentSpec, view: HistoryView) -> Vec<FeatureKey> {
        let f = view.fields;
        let dom = |on: bool, n: usize| -> Vec<Option<usize>> {
            if on {
                (0..n).map(Some).collect()
            } else {
                vec![None]
            }
        };
        let mut records = Vec::new();
        for state in dom(f.state, env.num_states()) {
            for policy in dom(f.policy, env.num_policies()) {
                for signal in dom(f.signal, env.num_signals()) {
                    for action in dom(f.action, env.num_actions()) {
                        for receiver_reward in dom(f.receiver_reward, env.rewards().receiver_values().len()) {
                            records.push(RecordView { state, policy, signal, action, receiver_reward });
                        }
                    }
                }
            }
        }
        let max_len = view.window.unwrap_or(env.horizon()).min(env.horizon());
        let mut histories: Vec<Vec<RecordView>> = vec![Vec::new()];
        let mut layer: Vec<Vec<RecordView>> = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for h in &layer {
                for r in &records {
                    let mut h2 = h.clone();
                    h2.push(*r);
                    next.push(h2);
                }
            }
            histories.extend(next.iter().cloned());
            layer = next;
        }
        let mut keys: Vec<FeatureKey> = histories
            .into_iter()
            .flat_map(|h| (0..env.num_states()).map(move |s| FeatureKey { history: h.clone(), state: s }))
            .collect();
        keys.sort();
        keys
    }

    /// Number of deterministic members of the window family, saturating.
    pub fn window_family_size(env: &EnvironmentSpec, view: HistoryView) -> u128 {
        let keys = Self::window_keys(env, view).len() as u32;
        (env.num_policies() as u128).checked_pow(keys).unwrap_or(u128::MAX)
    }

    /// The `index`-th deterministic meta-policy of the window family: key `j`
    /// (in canonical order) plays digit `j` of `index` in base `|𝒫|`, least
    /// significant digit first.
    pub fn window_member(env: &EnvironmentSpec, view: HistoryView, index: u128) -> Result<Self> {
        let keys = Self::window_keys(env, view);
        let p = env.num_policies() as u128;
        let size = Self::window_family_size(env, view);
        if index >= size {
            return Err(Error::field("strategy.index", format!("{index} out of range {size}")));
        }
        let mut rest = index;
        let mut table = BTreeMap::new();
        for k in keys {
            let d = (rest % p) as usize;
            rest /= p;
            let mut row = vec![0.0; p as usize];
            row[d] = 1.0;
            table.insert(k, row);
        }
        let names: Vec<String> = view
            .fields
            .fields()
            .iter()
            .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .collect();
        let w = view.window.map_or("all".to_string(), |k| k.to_string());
        Self::from_table(
            format!("window{w}[{}]#{index}", names.join(",")),
            p as usize,
            view,
            table,
            None,
        )
    }

    /// Deterministic window meta-policies. With `limit`, takes `limit` evenly
    /// spaced members (indices `j·size/limit`); otherwise all of them.
    pub fn window_family(env: &EnvironmentSpec, view: HistoryView, limit: Option<usize>) -> Result<Vec<Self>> {
        let size = Self::window_family_size(env, view);
        let indices: Vec<u128> = match limit {
            Some(l) if (l as u128) < size => (0..l as u128).map(|j| j * (size / l as u128)).collect(),
            _ => {
                if size > 1 << 20 {
                    return Err(Error::field(
                        "search.limit",
                        format!("family has {size} members; set a limit"),
                    ));
                }
                (0..size).collect()
            }
        };
        indices.into_iter().map(|i| Self::window_member(env, view, i)).collect()
    }
}

/// Serializable description of a meta-policy, used in configs and dataset
/// headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyConfig {
    Uniform,
    Constant { policy: usize },
    StateTable { table: Vec<Vec<f64>> },
    Window {
        #[serde(default = "default_window")]
        k: usize,
        fields: Vec<Field>,
        index: u64,
    },
    Mixture { epsilon: f64, base: Box<StrategyConfig> },
}

fn default_window() -> usize {
    1
}

impl StrategyConfig {
    pub fn build(&self, env: &EnvironmentSpec) -> Result<MetaPolicy> {
        let n = env.num_policies();
        match self {
            StrategyConfig::Uniform => MetaPolicy::uniform(n),
            StrategyConfig::Constant { policy } => MetaPolicy::constant(n, *policy),
            StrategyConfig::StateTable { table } => {
                if table.len() != env.num_states() {
                    return Err(Error::DimensionMismatch {
                        what: "strategy.table".into(),
                        expected: env.num_states(),
                        got: table.len(),
                    });
                }
                MetaPolicy::state_table(table.clone(), n)
            }
            StrategyConfig::Window { k, fields, index } => {
                let view = HistoryView { window: Some(*k), fields: FieldMask::from_fields(fields) };
                MetaPolicy::window_member(env, view, *index as u128)
            }
            StrategyConfig::Mixture { epsilon, base } => base.build(env)?.mixed(*epsilon),
        }
    }

    /// Compact single-line descriptor.
    pub fn descriptor(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn rec(s: usize, a: usize) -> RoundRecord {
        RoundRecord { state: s, policy: 0, signal: s, action: a, receiver_reward: 0 }
    }

    #[test]
    fn window_key_keeps_only_recent_masked_fields() {
        let view = HistoryView { window: Some(1), fields: FieldMask::from_fields(&[Field::Action]) };
        let info = InfoVector::from_rounds(vec![rec(0, 1), rec(1, 0)]);
        let key = view.key(&info, 1);
        assert_eq!(key.history.len(), 1);
        assert_eq!(key.history[0].action, Some(0));
        assert_eq!(key.history[0].state, None);
        assert_eq!(key.state, 1);
        assert!(view.key(&InfoVector::new(), 0).history.is_empty());
    }

    #[test]
    fn window_family_is_complete_and_deterministic() {
        let env = EnvironmentSpec::from_config(presets::e2(false, 1)).unwrap();
        let view = HistoryView { window: Some(1), fields: FieldMask::from_fields(&[Field::Action]) };
        // 2 states × (1 empty + 2 actions) histories = 6 keys.
        assert_eq!(MetaPolicy::window_keys(&env, view).len(), 6);
        assert_eq!(MetaPolicy::window_family_size(&env, view), 64);
        let fam = MetaPolicy::window_family(&env, view, Some(8)).unwrap();
        assert_eq!(fam.len(), 8);
        for m in &fam {
            assert!(m.table().values().all(|r| r.iter().filter(|&&p| p == 1.0).count() == 1));
        }
        let a = MetaPolicy::window_member(&env, view, 5).unwrap();
        let b = MetaPolicy::window_member(&env, view, 5).unwrap();
        assert_eq!(a, b);
        assert!(MetaPolicy::window_member(&env, view, 64).is_err());
    }

    #[test]
    fn mixture_has_full_support() {
        let c = MetaPolicy::constant(2, 1).unwrap();
        assert!(!c.has_full_support());
        let m = c.mixed(0.2).unwrap();
        assert!(m.has_full_support());
        assert_eq!(m.decide(&InfoVector::new(), 0).unwrap(), &[0.1, 0.9]);
    }

    #[test]
    fn missing_key_without_default_is_an_error() {
        let m = MetaPolicy::state_table(vec![vec![1.0, 0.0]], 2).unwrap();
        assert!(m.decide(&InfoVector::new(), 0).is_ok());
        assert!(matches!(
            m.decide(&InfoVector::new(), 1),
            Err(Error::UndefinedOnReachableObservation { .. })
        ));
    }

    #[test]
    fn strategy_config_roundtrips_through_toml() {
        let src = r#"
family = "mixture"
epsilon = 0.3
base = { family = "window", k = 1, fields = ["action"], index = 9 }
"#;
        let cfg: StrategyConfig = toml::from_str(src).unwrap();
        let env = EnvironmentSpec::from_config(presets::e2(true, 1)).unwrap();
        let m = cfg.build(&env).unwrap();
        assert!(m.has_full_support());
        assert!(cfg.descriptor().contains("mixture"));
    }
}
