use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pomdp::{Observation, ObservationStrategy};
use crate::spp::{episode_seed, Dataset};

use super::bundle::MatrixBundle;
use super::estimator::{ope_value, Variant};
use super::law::ObservableLaw;

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

/// Trajectory-level importance sampling:
/// `mean_i [Π_k g^e(u_k | y_k) / g^b(u_k | y_k) · Σ_t r_t]`.
///
/// Valid without confounding; with a hidden confounder it is the naive
/// baseline.
pub fn importance_sampling<B, E>(data: &Dataset, behavioral: &B, eval: &E) -> Result<PointEstimate>
where
    B: ObservationStrategy + ?Sized,
    E: ObservationStrategy + ?Sized,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rv = &data.header.receiver_values;
    let terms = data
        .records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let rounds = rec.records(rv).map_err(|e| Error::DatasetFormat { line: i + 2, reason: e.to_string() })?;
            let mut ratio = 1.0;
            for (t, r) in rounds.iter().enumerate() {
                let y = Observation::of_history(&rounds, t);
                let gb = behavioral.action_dist(&y)?[r.policy];
                if gb <= 0.0 {
                    return Err(Error::UnsupportedAction {
                        context: format!("record {i}: behavioral probability of u_{t}={} is zero", r.policy),
                    });
                }
                ratio *= eval.action_dist(&y)?[r.policy] / gb;
            }
            let ret: f64 = rec.rounds.iter().map(|r| r.rs).sum();
            Ok(ratio * ret)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_se(&terms))
}

pub fn mean_se(xs: &[f64]) -> PointEstimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    PointEstimate { value: mean, se: (var / n as f64).sqrt(), n }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub se: f64,
    pub replicates: usize,
    /// Replicates whose estimate could not be formed (e.g. an action
    /// vanished from the resample).
    pub failures: usize,
}

/// Standard error of the proximal estimate by multinomial resampling of the
/// dataset's law; replicate `b` draws from `episode_seed(seed, b)`.
pub fn bootstrap_se<E: ObservationStrategy + ?Sized>(
    law: &ObservableLaw,
    eval: &E,
    variant: Variant,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    let n = law.total().round() as usize;
    let values: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, b));
            let res = law.resample(n, &mut rng).and_then(|l| MatrixBundle::from_law(&l)).and_then(|bd| ope_value(&bd, eval, variant));
            res.ok().map(|e| e.value)
        })
        .collect();
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let failures = replicates - ok.len();
    if ok.len() < 2 {
        return Err(Error::RankConditionFailed(format!("bootstrap: only {} of {replicates} replicates succeeded", ok.len())));
    }
    let m = ok.iter().sum::<f64>() / ok.len() as f64;
    let var = ok.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (ok.len() - 1) as f64;
    Ok(BootstrapSummary { se: var.sqrt(), replicates: ok.len(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::spp::{generate_dataset, monte_carlo_value, EnvironmentSpec, MetaPolicy};

    #[test]
    fn on_policy_importance_sampling_is_the_sample_mean() {
        let env = EnvironmentSpec::from_config(presets::e2(true, 1)).unwrap();
        let meta = MetaPolicy::uniform(2).unwrap();
        let d = generate_dataset(&env, &meta, "u", 500, 2).unwrap();
        let est = importance_sampling(&d, &meta, &meta).unwrap();
        let mean = d.records.iter().map(|r| r.rounds.iter().map(|x| x.rs).sum::<f64>()).sum::<f64>() / 500.0;
        assert!((est.value - mean).abs() <= 1e-12);
        assert!(est.se > 0.0);
    }

    #[test]
    fn importance_sampling_is_consistent_without_confounding() {
        let env = EnvironmentSpec::from_config(presets::e2(false, 1)).unwrap();
        let b = MetaPolicy::uniform(2).unwrap();
        let e = MetaPolicy::constant(2, 1).unwrap();
        let d = generate_dataset(&env, &b, "u", 40_000, 8).unwrap();
        let is = importance_sampling(&d, &b, &e).unwrap();
        let mc = monte_carlo_value(&env, &e, 100_000, 9).unwrap();
        assert!((is.value - mc).abs() <= 4.0 * is.se + 0.01, "{is:?} vs {mc}");
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let env = EnvironmentSpec::from_config(presets::e2(false, 1)).unwrap();
        let b = MetaPolicy::uniform(2).unwrap();
        let d = generate_dataset(&env, &b, "u", 2000, 1).unwrap();
        let law = ObservableLaw::from_dataset(&d).unwrap();
        let e = MetaPolicy::constant(2, 0).unwrap();
        let a = bootstrap_se(&law, &e, Variant::default(), 20, 7).unwrap();
        let c = bootstrap_se(&law, &e, Variant::default(), 20, 7).unwrap();
        assert_eq!(a, c);
        assert!(a.se > 0.0 && a.se.is_finite());
    }
}
