//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use persuasion_lab::bp::{posterior, solve_bp, RewardTable, SignalingPolicy, TieBreak};
use persuasion_lab::error::Error;
use persuasion_lab::ope::{
    identity_check, bootstrap_se, estimate_matrices, importance_sampling, ope_value, estimated_reward_dist,
    ObservableLaw, Variant,
};
use persuasion_lab::oracle::{exact_reward_dists, exact_traj_dist, exact_value, map_tv, population_matrices, spp_observable_dist};
use persuasion_lab::pomdp::{build_pomdp, lift_meta_policy, validate_markov};
use persuasion_lab::presets;
use persuasion_lab::spp::{generate_dataset, EnvironmentSpec, Field, FieldMask, HistoryView, MetaPolicy};

type Check = Result<String, String>;

struct Criterion {
    id: u8,
    title: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn env(confounded: bool, horizon: usize) -> EnvironmentSpec {
    EnvironmentSpec::from_config(presets::e2(confounded, horizon)).unwrap()
}

const E2_SUITE: [(bool, usize); 4] = [(false, 1), (false, 2), (true, 1), (true, 2)];

fn behavioral() -> MetaPolicy {
    MetaPolicy::state_table(vec![vec![0.6, 0.4], vec![0.3, 0.7]], 2).unwrap().with_name("behavioral")
}

fn action_window() -> HistoryView {
    HistoryView { window: Some(1), fields: FieldMask::from_fields(&[Field::Action]) }
}

/// Evaluation strategies distinct from the behavioral one.
fn evaluation_strategies(env: &EnvironmentSpec) -> Vec<MetaPolicy> {
    vec![
        MetaPolicy::constant(2, 1).unwrap().with_name("informative-always"),
        MetaPolicy::constant(2, 0).unwrap().with_name("partial-always"),
        MetaPolicy::uniform(2).unwrap().with_name("uniform"),
        MetaPolicy::window_member(env, action_window(), 37).unwrap().with_name("window-37"),
    ]
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Check {
    let mut worst = 0.0f64;
    let mut histories = 0;
    for (confounded, horizon) in E2_SUITE {
        let env = env(confounded, horizon);
        let p = build_pomdp(&env).map_err(|e| e.to_string())?;
        let r = validate_markov(&env, &p).map_err(|e| e.to_string())?;
        ensure(r.max_gap <= 1e-12, || format!("|Z|={} T={horizon}: gap {:e}", env.confounder().len(), r.max_gap))?;
        worst = worst.max(r.max_gap);
        histories += r.histories_checked;
    }
    Ok(format!("max TV gap {worst:.1e} over {histories} histories"))
}

fn criterion_2() -> Check {
    let mut worst = 0.0f64;
    let mut members = 0;
    for (confounded, horizon) in E2_SUITE {
        let env = env(confounded, horizon);
        let p = build_pomdp(&env).map_err(|e| e.to_string())?;
        let family = MetaPolicy::window_family(&env, action_window(), Some(16)).map_err(|e| e.to_string())?;
        ensure(family.len() >= 8, || format!("family has only {} members", family.len()))?;
        for meta in &family {
            let g = lift_meta_policy(meta, &p).map_err(|e| e.to_string())?;
            let lifted = exact_traj_dist(&p, &g).map_err(|e| e.to_string())?;
            let direct = spp_observable_dist(&env, meta).map_err(|e| e.to_string())?;
            for t in 0..p.num_epochs() {
                let tv = map_tv(&direct[t], &lifted.observation_paths(&p, t));
                ensure(tv <= 1e-12, || format!("{} t={t}: TV {tv:e}", meta.name()))?;
                worst = worst.max(tv);
            }
        }
        members += family.len();
    }
    Ok(format!("max per-t TV {worst:.1e} over {members} window-1 members"))
}

fn criterion_3() -> Check {
    let mut worst = 0.0f64;
    let mut convention = String::new();
    let mut cases: Vec<(String, EnvironmentSpec)> =
        E2_SUITE.iter().map(|&(c, h)| (format!("e2 |Z|={} T={h}", 1 + c as usize), env(c, h))).collect();
    cases.push(("warehouse T=1".into(), EnvironmentSpec::from_config(presets::warehouse(1)).unwrap()));
    for (name, env) in &cases {
        let p = build_pomdp(env).map_err(|e| e.to_string())?;
        let b = lift_meta_policy(&MetaPolicy::uniform(env.num_policies()).unwrap(), &p).map_err(|e| e.to_string())?;
        let r = identity_check(&p, &b).map_err(|e| format!("{name}: {e}"))?;
        let dev = r.max_selected_deviation();
        ensure(r.passed() && dev <= 1e-8, || format!("{name}: deviation {dev:e}"))?;
        worst = worst.max(dev);
        convention = format!("{:?}", r.satisfying);
    }
    Ok(format!("max deviation {worst:.1e} on {} environments; reward-head convention {convention}", cases.len()))
}

fn criterion_4() -> Check {
    let env = env(true, 2);
    let p = build_pomdp(&env).map_err(|e| e.to_string())?;
    let bundle = population_matrices(&p, &behavioral()).map_err(|e| e.to_string())?;
    let (mut worst_j, mut worst_tv) = (0.0f64, 0.0f64);
    let evals = evaluation_strategies(&env);
    for g in &evals {
        let est = ope_value(&bundle, g, Variant::default()).map_err(|e| e.to_string())?;
        let exact = exact_value(&p, g).map_err(|e| e.to_string())?;
        let err = (est.value - exact).abs();
        ensure(err <= 1e-8, || format!("{}: |{} - {exact}| = {err:e}", g.name(), est.value))?;
        for d in exact_reward_dists(&p, g).map_err(|e| e.to_string())? {
            let r = estimated_reward_dist(&bundle, g, d.t, Variant::default()).map_err(|e| e.to_string())?;
            let tv = 0.5 * r.probs.iter().zip(&d.probs).map(|(a, b)| (a - b).abs()).sum::<f64>();
            ensure(tv <= 1e-8, || format!("{} t={}: TV {tv:e}", g.name(), d.t))?;
            worst_tv = worst_tv.max(tv);
        }
        worst_j = worst_j.max(err);
    }
    Ok(format!("{} strategies: max |J^ - J| {worst_j:.1e}, max reward TV {worst_tv:.1e}", evals.len()))
}

fn criterion_5() -> Check {
    let env = env(false, 2);
    let b = behavioral();
    let data = generate_dataset(&env, &b, "behavioral", 200_000, 11).map_err(|e| e.to_string())?;
    let bundle = estimate_matrices(&data).map_err(|e| e.to_string())?;
    let law = ObservableLaw::from_dataset(&data).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for (i, g) in evaluation_strategies(&env).iter().enumerate() {
        let prox = ope_value(&bundle, g, Variant::default()).map_err(|e| e.to_string())?;
        let se = bootstrap_se(&law, g, Variant::default(), 100, 500 + i as u64).map_err(|e| e.to_string())?;
        let is = importance_sampling(&data, &b, g).map_err(|e| e.to_string())?;
        let pooled = (se.se.powi(2) + is.se.powi(2)).sqrt();
        let gap = (prox.value - is.value).abs();
        ensure(gap <= 2.0 * pooled, || {
            format!("{}: proximal {:.4} vs IS {:.4}, gap {gap:.4} > 2 x {pooled:.4}", g.name(), prox.value, is.value)
        })?;
        parts.push(format!("{} {:.2}se", g.name(), gap / pooled));
    }
    Ok(format!("n=2e5, gap in pooled SE: {}", parts.join(", ")))
}

/// Mean absolute error over the evaluation strategies, as first verified.
const FROZEN_ERRORS: Option<[f64; 3]> = Some([0.02823314900994825, 0.007070115360877177, 0.0017560990695240364]);

fn criterion_6() -> Check {
    let env = env(true, 2);
    let p = build_pomdp(&env).map_err(|e| e.to_string())?;
    let evals = evaluation_strategies(&env);
    let exact: Vec<f64> = evals.iter().map(|g| exact_value(&p, g)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let (lo, hi) = env.rewards().sender_bounds();
    let bound = 0.05 * (hi - lo) * (env.horizon() + 1) as f64;
    let mut errors = Vec::new();
    for n in [2_000, 20_000, 200_000] {
        let data = generate_dataset(&env, &behavioral(), "behavioral", n, 1).map_err(|e| e.to_string())?;
        let bundle = estimate_matrices(&data).map_err(|e| e.to_string())?;
        let mut total = 0.0;
        for (g, j) in evals.iter().zip(&exact) {
            let est = ope_value(&bundle, g, Variant::default()).map_err(|e| format!("n={n} {}: {e}", g.name()))?;
            total += (est.value - j).abs();
        }
        errors.push(total / evals.len() as f64);
    }
    let shown = errors.iter().map(|e| format!("{e:.5}")).collect::<Vec<_>>().join(" > ");
    ensure(errors.windows(2).all(|w| w[1] < w[0]), || format!("errors not strictly decreasing: {errors:?}"))?;
    ensure(errors[2] <= bound, || format!("final error {:.5} exceeds {bound}", errors[2]))?;
    match FROZEN_ERRORS {
        Some(frozen) => {
            for (e, f) in errors.iter().zip(frozen) {
                ensure((e - f).abs() <= 1e-9, || format!("error {e} drifted from frozen reference {f}"))?;
            }
            Ok(format!("mean |error| {shown}, bound {bound:.3}, matches frozen reference"))
        }
        None => Ok(format!("mean |error| {shown} (unfrozen: {errors:?}), bound {bound:.3}")),
    }
}

fn rescan(table: &[Vec<f64>], prior: &[f64], sender: &[Vec<f64>], receiver: &[Vec<f64>]) -> f64 {
    let mut v = 0.0;
    for q in 0..table[0].len() {
        let joint: Vec<f64> = prior.iter().zip(table).map(|(m, row)| m * row[q]).collect();
        let mass: f64 = joint.iter().sum();
        if mass <= 0.0 {
            continue;
        }
        let util = |a: usize| joint.iter().enumerate().map(|(s, j)| j / mass * receiver[s][a]).sum::<f64>();
        let best = (1..receiver[0].len()).fold(0, |b, a| if util(a) > util(b) + 1e-12 { a } else { b });
        v += joint.iter().enumerate().map(|(s, j)| j * sender[s][best]).sum::<f64>();
    }
    v
}

fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let (ns, nq, na, np) = (rng.gen_range(2..5), rng.gen_range(2..5), rng.gen_range(2..5), rng.gen_range(1..8));
        let prior = random_simplex(&mut rng, ns);
        let tables: Vec<Vec<Vec<f64>>> = (0..np).map(|_| (0..ns).map(|_| random_simplex(&mut rng, nq)).collect()).collect();
        let table = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..ns).map(|_| (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        };
        let (sender, receiver) = (table(&mut rng), table(&mut rng));
        let policies: Vec<_> =
            tables.iter().enumerate().map(|(k, t)| SignalingPolicy::new(format!("p{k}"), t.clone()).unwrap()).collect();
        let rewards = RewardTable::new(sender.clone(), receiver.clone()).map_err(|e| e.to_string())?;
        let (best, value) = solve_bp(&policies, &prior, &rewards, TieBreak::LowestIndex).map_err(|e| e.to_string())?;
        let values: Vec<f64> = tables.iter().map(|t| rescan(t, &prior, &sender, &receiver)).collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = values.iter().position(|&v| v >= max - 1e-12).unwrap();
        ensure((value - max).abs() <= 1e-12 && best == first, || {
            format!("instance {i}: solve_bp ({best}, {value}) vs rescan ({first}, {max})")
        })?;
    }
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (ns, nq) = (rng.gen_range(2..6), rng.gen_range(2..6));
        let prior = random_simplex(&mut rng, ns);
        let pol = SignalingPolicy::new("p", (0..ns).map(|_| random_simplex(&mut rng, nq)).collect()).unwrap();
        let mut avg = vec![0.0; ns];
        for q in 0..nq {
            let m = pol.signal_marginal(&prior, q);
            let post = posterior(&pol, &prior, q).map_err(|e| e.to_string())?;
            for (a, p) in avg.iter_mut().zip(post.probs()) {
                *a += m * p;
            }
        }
        for (a, p) in avg.iter().zip(&prior) {
            worst = worst.max((a - p).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("law of total probability gap {worst:e}"))?;
    Ok(format!("100 instances match the rescan; total-probability gap {worst:.1e} over 1000 draws"))
}

fn criterion_8() -> Check {
    let env = EnvironmentSpec::from_config(presets::rank_violating(1)).unwrap();
    let data = generate_dataset(&env, &MetaPolicy::constant(2, 0).unwrap(), "b", 500, 3).map_err(|e| e.to_string())?;
    let bundle = estimate_matrices(&data).map_err(|e| e.to_string())?;
    match ope_value(&bundle, &MetaPolicy::constant(2, 1).unwrap(), Variant::default()) {
        Err(Error::RankConditionFailed(_)) => {}
        Ok(est) => return Err(format!("estimator returned {} instead of a rank failure", est.value)),
        Err(e) => return Err(format!("unexpected error kind: {e}")),
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut codes = Vec::new();
    for (command, config) in [("evaluate", "evaluate_rank_violating.toml"), ("check-identities", "check_identities_rank_violating.toml")] {
        let run = Command::new(env!("CARGO_BIN_EXE_persuasion-lab"))
            .args([command, "--config"])
            .arg(manifest.join("configs").join(config))
            .arg("--out")
            .arg(out.path())
            .output()
            .map_err(|e| e.to_string())?;
        let code = run.status.code().unwrap_or(-1);
        ensure(code != 0, || format!("{config}: exit status 0"))?;
        codes.push(code);
    }
    for entry in walk(out.path()) {
        let text = std::fs::read_to_string(&entry).unwrap_or_default().to_lowercase();
        let non_finite = text
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '.'))
            .any(|tok| matches!(tok, "nan" | "inf" | "infinity"));
        ensure(!non_finite, || format!("{} contains a non-finite value", entry.display()))?;
    }
    Ok(format!("RankConditionFailed raised; CLI exit codes {codes:?}; reports free of NaN/Inf"))
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, title: "lift is Markov on the E2 suite", budget: Duration::from_secs(30), run: criterion_1 },
        Criterion { id: 2, title: "lifted and direct observable laws agree", budget: Duration::from_secs(60), run: criterion_2 },
        Criterion { id: 3, title: "population identity suite", budget: Duration::from_secs(60), run: criterion_3 },
        Criterion { id: 4, title: "population-mode estimate is exact", budget: Duration::from_secs(60), run: criterion_4 },
        Criterion { id: 5, title: "unconfounded reduction to IS", budget: Duration::from_secs(300), run: criterion_5 },
        Criterion { id: 6, title: "sample-mode convergence", budget: Duration::from_secs(600), run: criterion_6 },
        Criterion { id: 7, title: "static BP solver", budget: Duration::from_secs(10), run: criterion_7 },
        Criterion { id: 8, title: "rank violation is a structured failure", budget: Duration::from_secs(10), run: criterion_8 },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let took = start.elapsed();
        let result = result.and_then(|m| {
            if took <= c.budget {
                Ok(m)
            } else {
                Err(format!("{m}; over the {} s budget", c.budget.as_secs()))
            }
        });
        let (tag, msg) = match &result {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        failed += result.is_err() as usize;
        println!("criterion {} {tag} {} ({:.2} s): {msg}", c.id, c.title, took.as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
