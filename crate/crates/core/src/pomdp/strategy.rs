use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::prob::checked_distribution;
use crate::spp::{HistoryView, InfoVector, MetaPolicy};

use super::{LiftedPomdp, Observation};

/// Anything that maps a decision observation `y_t` (`t ≤ T`) to a
/// distribution over policy indices.
pub trait ObservationStrategy: Sync {
    fn name(&self) -> &str;
    fn num_actions(&self) -> usize;
    fn action_dist(&self, y: &Observation) -> Result<&[f64]>;
}

impl ObservationStrategy for MetaPolicy {
    fn name(&self) -> &str {
        MetaPolicy::name(self)
    }

    fn num_actions(&self) -> usize {
        self.num_policies()
    }

    fn action_dist(&self, y: &Observation) -> Result<&[f64]> {
        static EMPTY: InfoVector = InfoVector::empty();
        match y {
            Observation::Initial { state } => self.decide(&EMPTY, *state),
            Observation::Mid { info, state } => self.decide(info, *state),
            _ => Err(Error::UndefinedOnReachableObservation {
                observation: format!("{y} (no control at this epoch)"),
            }),
        }
    }
}

/// Observation-based strategy `g = (g_0, …, g_T)` as explicit per-epoch tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStrategy {
    name: String,
    num_actions: usize,
    rules: Vec<IndexMap<Observation, Vec<f64>>>,
}

impl ControlStrategy {
    pub fn new(name: impl Into<String>, num_actions: usize, horizon: usize) -> Self {
        Self { name: name.into(), num_actions, rules: vec![IndexMap::new(); horizon + 1] }
    }

    pub fn horizon(&self) -> usize {
        self.rules.len() - 1
    }

    pub fn set(&mut self, y: Observation, row: &[f64]) -> Result<()> {
        let t = match y.time() {
            Some(t) if t < self.rules.len() && !matches!(y, Observation::Final { .. }) => t,
            _ => return Err(Error::EpochOutOfRange { t: y.time().unwrap_or(usize::MAX), max: self.horizon() }),
        };
        if row.len() != self.num_actions {
            return Err(Error::DimensionMismatch {
                what: format!("strategy row at {y}"),
                expected: self.num_actions,
                got: row.len(),
            });
        }
        let row = checked_distribution(&format!("strategy row at {y}"), row)?;
        self.rules[t].insert(y, row);
        Ok(())
    }

    pub fn get(&self, y: &Observation) -> Option<&[f64]> {
        let t = y.time()?;
        self.rules.get(t)?.get(y).map(|v| v.as_slice())
    }

    pub fn rules(&self, t: usize) -> &IndexMap<Observation, Vec<f64>> {
        &self.rules[t]
    }

    /// Point mass on `action` at every decision observation of `pomdp`.
    pub fn point_mass(pomdp: &LiftedPomdp, action: usize) -> Result<Self> {
        let mut row = vec![0.0; pomdp.num_actions];
        *row.get_mut(action).ok_or_else(|| Error::field("action", format!("{action} out of range")))? = 1.0;
        let mut g = Self::new(format!("point{action}"), pomdp.num_actions, pomdp.horizon);
        for t in 0..=pomdp.horizon {
            for y in &pomdp.observations[t] {
                g.set(y.clone(), &row)?;
            }
        }
        Ok(g)
    }

    /// Observations in the table that are not in `𝒴_t` (should be empty).
    pub fn invalid_entries(&self, pomdp: &LiftedPomdp) -> Vec<Observation> {
        let mut out = Vec::new();
        for (t, rules) in self.rules.iter().enumerate() {
            for y in rules.keys() {
                if pomdp.observations.get(t).map_or(true, |o| !o.contains(y)) {
                    out.push(y.clone());
                }
            }
        }
        out
    }
}

impl ObservationStrategy for ControlStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn action_dist(&self, y: &Observation) -> Result<&[f64]> {
        self.get(y)
            .ok_or_else(|| Error::UndefinedOnReachableObservation { observation: y.to_string() })
    }
}

/// `g_t(y_t) := meta(δ_t, s_t)` on every reachable decision observation.
pub fn lift_meta_policy(meta: &MetaPolicy, pomdp: &LiftedPomdp) -> Result<ControlStrategy> {
    let mut g = ControlStrategy::new(format!("lift:{}", meta.name()), pomdp.num_actions, pomdp.horizon);
    for t in 0..=pomdp.horizon {
        for y in &pomdp.observations[t] {
            let row = meta.action_dist(y)?.to_vec();
            g.set(y.clone(), &row)?;
        }
    }
    Ok(g)
}

/// Reads a strategy back as an exhaustive-history meta-policy.
pub fn lower_meta_policy(strategy: &ControlStrategy) -> Result<MetaPolicy> {
    let view = HistoryView::exhaustive();
    let mut table = BTreeMap::new();
    for t in 0..=strategy.horizon() {
        for (y, row) in strategy.rules(t) {
            let state = y.state().expect("decision observations carry a state");
            let info = InfoVector::from_rounds(y.history().to_vec());
            table.insert(view.key(&info, state), row.clone());
        }
    }
    let name = strategy.name.strip_prefix("lift:").unwrap_or(&strategy.name).to_string();
    MetaPolicy::from_table(name, strategy.num_actions, view, table, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::build_pomdp;
    use crate::presets;
    use crate::spp::{EnvironmentSpec, Field, FieldMask};

    #[test]
    fn constant_meta_lifts_to_point_masses() {
        let env = EnvironmentSpec::from_config(presets::e2(true, 1)).unwrap();
        let p = build_pomdp(&env).unwrap();
        let g = lift_meta_policy(&MetaPolicy::constant(2, 0).unwrap(), &p).unwrap();
        for t in 0..=p.horizon {
            assert_eq!(g.rules(t).len(), p.observations[t].len());
            assert!(g.rules(t).values().all(|r| r == &vec![1.0, 0.0]));
        }
        assert!(g.invalid_entries(&p).is_empty());
    }

    #[test]
    fn lift_and_lower_are_inverse() {
        let env = EnvironmentSpec::from_config(presets::e2(true, 2)).unwrap();
        let p = build_pomdp(&env).unwrap();
        let view = HistoryView { window: Some(1), fields: FieldMask::from_fields(&[Field::Action, Field::Signal]) };
        for meta in MetaPolicy::window_family(&env, view, Some(5)).unwrap() {
            let g = lift_meta_policy(&meta, &p).unwrap();
            let lowered = lower_meta_policy(&g).unwrap();
            for t in 0..=p.horizon {
                for y in &p.observations[t] {
                    assert_eq!(lowered.action_dist(y).unwrap(), meta.action_dist(y).unwrap());
                }
            }
            assert_eq!(lift_meta_policy(&lowered, &p).unwrap().rules(p.horizon), g.rules(p.horizon));
        }
    }

    #[test]
    fn point_mass_strategy_lowers_to_constant_decisions() {
        let env = EnvironmentSpec::from_config(presets::e2(false, 1)).unwrap();
        let p = build_pomdp(&env).unwrap();
        let g = ControlStrategy::point_mass(&p, 1).unwrap();
        let m = lower_meta_policy(&g).unwrap();
        let c = MetaPolicy::constant(2, 1).unwrap();
        for t in 0..=p.horizon {
            for y in &p.observations[t] {
                assert_eq!(m.action_dist(y).unwrap(), c.action_dist(y).unwrap());
            }
        }
    }

    #[test]
    fn undefined_meta_is_reported() {
        let env = EnvironmentSpec::from_config(presets::e2(false, 1)).unwrap();
        let p = build_pomdp(&env).unwrap();
        let partial = MetaPolicy::state_table(vec![vec![1.0, 0.0]], 2).unwrap();
        assert!(matches!(
            lift_meta_policy(&partial, &p),
            Err(Error::UndefinedOnReachableObservation { .. })
        ));
    }
}
