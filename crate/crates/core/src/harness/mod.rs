//! Experiment configs, run directories, reports and the CLI commands.
//!
//! Every command writes a fresh run directory under the configured output
//! root holding `summary.kvtree`, usually `rows.csv`, and for estimation
//! commands `matrices/*.csv`.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, Mode, SearchConfig, StrategySource};
pub use report::{create_run_dir, fmt_num, write_rows, write_table, ReportRow, Summary, UNAVAILABLE};

use crate::bp;
use crate::error::{Error, Result};
use crate::ope::{
    identity_check, estimate_matrices, ope_value, rank_failure_detail, MatrixBundle, OpeEstimate,
    RankDiagnostics, DEFAULT_REL_THRESHOLD,
};
use crate::oracle::{exact_reward_dists, population_bundle};
use crate::pomdp::{build_pomdp_with_cap, LiftedPomdp};
use crate::spp::{generate_dataset, monte_carlo_value, Dataset, EnvironmentSpec, MetaPolicy};

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    Parse = 2,
    Rank = 3,
    Identity = 4,
    SizeGuard = 5,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::DatasetFormat { .. }
            | Error::InvalidDistribution { .. }
            | Error::InvalidField { .. }
            | Error::DimensionMismatch { .. }
            | Error::UnindexedContext { .. }
            | Error::EmptyPolicySet
            | Error::EmptyDataset => ExitStatus::Parse,
            Error::RankConditionFailed(_) | Error::UnsupportedAction { .. } => ExitStatus::Rank,
            Error::StateSpaceTooLarge { .. } => ExitStatus::SizeGuard,
            _ => ExitStatus::Failure,
        }
    }
}

/// Command-line overrides shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    } else {
        cfg.out = cfg.resolve(&cfg.out);
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub status: ExitStatus,
    pub summary: Summary,
    /// Short human-readable result.
    pub message: String,
}

fn start(cfg: &ExperimentConfig, command: &str, env: &EnvironmentSpec) -> Result<(PathBuf, Summary)> {
    let dir = create_run_dir(&cfg.out, command)?;
    let mut s = Summary::new();
    s.set("command", command)
        .set("seed", cfg.seed as i64)
        .set("environment.path", cfg.environment_path().display().to_string())
        .set("environment.hash", env.hash())
        .set("environment.name", env.name())
        .set("environment.horizon", env.horizon() as i64);
    Ok((dir, s))
}

fn finish(dir: PathBuf, mut summary: Summary, status: ExitStatus, message: String) -> Result<Outcome> {
    summary.set("status.code", status.code() as i64).set("status.message", message.as_str());
    summary.write(&dir)?;
    Ok(Outcome { run_dir: dir, status, summary, message })
}

/// Writes a run directory for a command that failed after setup.
fn fail(dir: PathBuf, mut summary: Summary, e: &Error) -> Result<Outcome> {
    summary.set("error.kind", error_kind(e)).set("error.message", e.to_string());
    finish(dir, summary, ExitStatus::of_error(e), e.to_string())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::RankConditionFailed(_) => "rank_condition_failed",
        Error::UnsupportedAction { .. } => "unsupported_action",
        Error::StateSpaceTooLarge { .. } => "state_space_too_large",
        Error::Config { .. } => "config",
        Error::DatasetFormat { .. } => "dataset_format",
        _ => "other",
    }
}

/// `solve-bp`: best one-shot signaling policy in the environment's set.
pub fn cmd_solve_bp(cfg: &ExperimentConfig) -> Result<Outcome> {
    let env = cfg.load_environment()?;
    let (dir, mut s) = start(cfg, "solve-bp", &env)?;
    let prior = env.prior().probs();
    let (best, value) = bp::solve_bp(env.policies(), prior, env.rewards(), env.tie_break())?;
    let mut rows = Vec::new();
    for (i, p) in env.policies().iter().enumerate() {
        let v = bp::policy_value(p, prior, env.rewards(), env.tie_break())?;
        rows.push(vec![i.to_string(), p.name().to_string(), format!("{v}"), (i == best).to_string()]);
    }
    write_table(&dir.join("rows.csv"), &["index", "policy", "value", "best"], &rows)?;
    let p = &env.policies()[best];
    s.set("best.index", best as i64).set("best.policy", p.name()).set("best.value", value);
    s.set_serialized("best.table", &p.table().to_vec())?;
    let msg = format!("best policy {} ({best}) with J = {value}", p.name());
    finish(dir, s, ExitStatus::Success, msg)
}

/// `gen-data`: simulate `n` behavioral episodes and persist them.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<Outcome> {
    let env = cfg.load_environment()?;
    let (meta, desc) = cfg.behavioral(&env)?;
    let (dir, mut s) = start(cfg, "gen-data", &env)?;
    let data = generate_dataset(&env, &meta, &desc, cfg.n, cfg.seed)?;
    let path = dir.join("dataset.jsonl");
    data.save(&path)?;
    let bytes = std::fs::read(&path)?;
    s.set("dataset.path", path.display().to_string())
        .set("dataset.records", data.len() as i64)
        .set("dataset.sha256", hex::encode(Sha256::digest(&bytes)))
        .set("behavioral", desc.as_str())
        .set("warnings", data.warnings.clone());
    let msg = format!("{} records written to {}", data.len(), path.display());
    finish(dir, s, ExitStatus::Success, msg)
}

/// The lifted POMDP when it fits under the size guard. In population mode
/// the guard is fatal; in sample mode the oracle columns are dropped.
fn oracle_pomdp(cfg: &ExperimentConfig, env: &EnvironmentSpec) -> Result<Option<LiftedPomdp>> {
    match build_pomdp_with_cap(env, cfg.state_cap) {
        Ok(p) => Ok(Some(p)),
        Err(Error::StateSpaceTooLarge { .. }) if cfg.mode == Mode::Sample => Ok(None),
        Err(e) => Err(e),
    }
}

fn load_or_generate(cfg: &ExperimentConfig, env: &EnvironmentSpec, meta: &MetaPolicy, desc: &str) -> Result<Dataset> {
    match &cfg.dataset {
        Some(p) => {
            let d = Dataset::load(cfg.resolve(p))?;
            if d.header.environment_hash != env.hash() {
                return Err(Error::config(
                    "dataset",
                    format!("recorded for environment {} but the config uses {}", d.header.environment_hash, env.hash()),
                ));
            }
            Ok(d)
        }
        None => generate_dataset(env, meta, desc, cfg.n, cfg.seed),
    }
}

/// Bundle for the configured mode plus any data warnings.
fn build_bundle(
    cfg: &ExperimentConfig,
    env: &EnvironmentSpec,
    pomdp: Option<&LiftedPomdp>,
    behavioral: &MetaPolicy,
    desc: &str,
    s: &mut Summary,
) -> Result<MatrixBundle> {
    match cfg.mode {
        Mode::Population => {
            let p = pomdp.ok_or_else(|| Error::InternalInconsistency("population mode without a model".into()))?;
            population_bundle(p, behavioral)
        }
        Mode::Sample => {
            let d = load_or_generate(cfg, env, behavioral, desc)?;
            s.set("data.records", d.len() as i64).set("data.seed", d.header.seed as i64).set("data.warnings", d.warnings.clone());
            estimate_matrices(&d)
        }
    }
}

fn write_rank_csv(path: &Path, diags: &[RankDiagnostics]) -> Result<()> {
    let rows: Vec<Vec<String>> = diags
        .iter()
        .map(|d| {
            vec![
                d.name.clone(),
                d.rows.to_string(),
                d.cols.to_string(),
                d.effective_rank.to_string(),
                d.required_rank.map_or(UNAVAILABLE.into(), |r| r.to_string()),
                fmt_num(d.condition_number),
                fmt_num(d.singular_values.first().copied()),
                fmt_num(d.singular_values.iter().rev().find(|&&x| x > d.threshold).copied()),
                d.pass.map_or(UNAVAILABLE.into(), |p| p.to_string()),
            ]
        })
        .collect();
    write_table(
        path,
        &["matrix", "rows", "cols", "effective_rank", "hidden_states", "condition", "sigma_max", "sigma_min_kept", "rank_ge_hidden"],
        &rows,
    )
}

/// Matrix dumps and the rank summary shared by estimation commands.
fn report_bundle(dir: &Path, bundle: &MatrixBundle, s: &mut Summary) -> Result<()> {
    let mdir = dir.join("matrices");
    bundle.dump_csv(&mdir, None)?;
    let diags = bundle.rank_diagnostics(DEFAULT_REL_THRESHOLD);
    write_rank_csv(&mdir.join("rank_diagnostics.csv"), &diags)?;
    let unsupported = bundle.unsupported_rows();
    s.set("rank.rel_threshold", DEFAULT_REL_THRESHOLD)
        .set("rank.matrices", diags.len() as i64)
        .set("rank.min_effective_rank", diags.iter().map(|d| d.effective_rank as i64).min().unwrap_or(0))
        .set("rank.max_condition", diags.iter().filter_map(|d| d.condition_number).fold(0.0, f64::max))
        .set("rank.unsupported_cells", unsupported.len() as i64)
        .set("rank.row_support", unsupported.is_empty());
    if diags.iter().any(|d| d.pass.is_some()) {
        s.set("rank.rank_ge_hidden_states", diags.iter().all(|d| d.pass != Some(false)));
    }
    if !bundle.empty_cells().is_empty() {
        s.set("rank.empty_cells", bundle.empty_cells().to_vec());
    }
    Ok(())
}

/// One evaluation strategy against the bundle and, if present, the oracle.
fn evaluate_one(
    cfg: &ExperimentConfig,
    env: &EnvironmentSpec,
    pomdp: Option<&LiftedPomdp>,
    bundle: &MatrixBundle,
    meta: &MetaPolicy,
    desc: &str,
) -> (ReportRow, Option<OpeEstimate>) {
    let clock = Instant::now();
    let variant = cfg.variant().expect("validated at load");
    let est = ope_value(bundle, meta, variant);
    let exact = pomdp.map(|p| exact_reward_dists(p, meta));
    let mc = (cfg.mc_episodes > 0).then(|| monte_carlo_value(env, meta, cfg.mc_episodes, cfg.seed));
    let mut detail = Vec::new();
    let (rank_status, ope) = match &est {
        Ok(e) => {
            detail.extend(e.warnings.iter().cloned());
            ("ok".to_string(), Some(e.value))
        }
        Err(e @ Error::RankConditionFailed(_)) => {
            detail.push(e.to_string());
            ("rank_failed".to_string(), None)
        }
        Err(e) => {
            detail.push(e.to_string());
            ("error".to_string(), None)
        }
    };
    let exact = match exact {
        Some(Ok(d)) => Some(d),
        Some(Err(e)) => {
            detail.push(format!("oracle: {e}"));
            None
        }
        None => None,
    };
    let tv = (0..=env.horizon())
        .map(|t| {
            let (e, d) = (est.as_ref().ok()?, exact.as_ref()?);
            let (r, x) = (&e.per_t[t], &d[t]);
            let mut tv = 0.0;
            for (v, p) in x.values.iter().zip(&x.probs) {
                let q = bundle.sender_values().iter().position(|w| w == v).map_or(0.0, |i| r.probs[i]);
                tv += (p - q).abs();
            }
            for (i, v) in bundle.sender_values().iter().enumerate() {
                if !x.values.contains(v) {
                    tv += r.probs[i];
                }
            }
            Some(0.5 * tv)
        })
        .collect();
    let mc_value = match mc {
        Some(Ok(v)) => Some(v),
        Some(Err(e)) => {
            detail.push(format!("monte carlo: {e}"));
            None
        }
        None => None,
    };
    let row = ReportRow {
        strategy: desc.to_string(),
        ope_value: ope,
        exact_value: exact.as_ref().map(|d| d.iter().map(|r| r.mean()).sum()),
        mc_value,
        tv,
        rank_status,
        detail: detail.join("; "),
        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
    };
    (row, est.ok())
}

fn row_summary(s: &mut Summary, key: &str, r: &ReportRow, est: Option<&OpeEstimate>) {
    s.set(&format!("{key}.strategy"), r.strategy.as_str())
        .set_num(&format!("{key}.j_ope"), r.ope_value)
        .set_num(&format!("{key}.j_exact"), r.exact_value)
        .set_num(&format!("{key}.j_mc"), r.mc_value)
        .set_num(&format!("{key}.abs_error"), r.abs_error())
        .set_num(&format!("{key}.max_tv"), r.max_tv())
        .set(&format!("{key}.rank_status"), r.rank_status.as_str());
    if !r.detail.is_empty() {
        s.set(&format!("{key}.detail"), r.detail.as_str());
    }
    if let Some(e) = est {
        s.set_num(&format!("{key}.raw_value"), Some(e.raw_value));
        let mass: Vec<f64> = e.per_t.iter().map(|r| r.pre_normalization_mass).collect();
        let missing: Vec<f64> = e.per_t.iter().map(|r| r.missing_mass).collect();
        let neg: Vec<f64> = e.per_t.iter().map(|r| r.negative_mass).collect();
        s.set(&format!("{key}.pre_normalization_mass"), mass)
            .set(&format!("{key}.missing_mass"), missing)
            .set(&format!("{key}.negative_mass"), neg);
    }
}

fn estimation_setup(
    cfg: &ExperimentConfig,
    env: &EnvironmentSpec,
    command: &str,
) -> Result<(Option<LiftedPomdp>, MetaPolicy, String, PathBuf, Summary)> {
    let (behavioral, bdesc) = cfg.behavioral(env)?;
    let pomdp = oracle_pomdp(cfg, env)?;
    let (dir, mut s) = start(cfg, command, env)?;
    s.set("mode", cfg.mode.to_string())
        .set("variant", cfg.variant.as_str())
        .set("behavioral", bdesc.as_str())
        .set("n", cfg.n as i64)
        .set("mc_episodes", cfg.mc_episodes as i64)
        .set("oracle", pomdp.is_some());
    if let Some(p) = &pomdp {
        s.set("lifted_states", p.total_states() as i64);
    }
    Ok((pomdp, behavioral, bdesc, dir, s))
}

/// `evaluate`: proximal estimate for each evaluation strategy, plus exact and
/// Monte Carlo values. Rank failures are recorded per strategy; the run
/// exits with the rank status if any strategy failed.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let env = cfg.load_environment()?;
    let evals = cfg.evaluations(&env)?;
    let (pomdp, behavioral, bdesc, dir, mut s) = estimation_setup(cfg, &env, "evaluate")?;
    let bundle = match build_bundle(cfg, &env, pomdp.as_ref(), &behavioral, &bdesc, &mut s) {
        Ok(b) => b,
        Err(e) => return fail(dir, s, &e),
    };
    s.set("provenance", bundle.provenance().to_string());
    report_bundle(&dir, &bundle, &mut s)?;
    let results: Vec<(ReportRow, Option<OpeEstimate>)> =
        evals.par_iter().map(|(m, d)| evaluate_one(cfg, &env, pomdp.as_ref(), &bundle, m, d)).collect();
    let rows: Vec<ReportRow> = results.iter().map(|r| r.0.clone()).collect();
    write_rows(&dir, env.horizon(), &rows, &[])?;
    for (i, (r, e)) in results.iter().enumerate() {
        row_summary(&mut s, &format!("strategies.s{i}"), r, e.as_ref());
    }
    let failed = rows.iter().filter(|r| r.rank_status != "ok").count();
    let errors = rows.iter().filter(|r| r.rank_status == "error").count();
    s.set("rows", rows.len() as i64).set("failed", failed as i64);
    let status = if errors > 0 {
        ExitStatus::Failure
    } else if failed > 0 {
        ExitStatus::Rank
    } else {
        ExitStatus::Success
    };
    let msg = format!("{} strategies evaluated, {failed} failed", rows.len());
    finish(dir, s, status, msg)
}

/// `check-identities`: the population-level identity suite under the
/// behavioral strategy.
pub fn cmd_check_identities(cfg: &ExperimentConfig) -> Result<Outcome> {
    let env = cfg.load_environment()?;
    let (behavioral, bdesc) = cfg.behavioral(&env)?;
    let pomdp = build_pomdp_with_cap(&env, cfg.state_cap)?;
    let (dir, mut s) = start(cfg, "check-identities", &env)?;
    s.set("behavioral", bdesc.as_str()).set("lifted_states", pomdp.total_states() as i64);
    let bundle = population_bundle(&pomdp, &behavioral)?;
    report_bundle(&dir, &bundle, &mut s)?;
    let report = match identity_check(&pomdp, &behavioral) {
        Ok(r) => r,
        Err(e @ Error::RankConditionFailed(_)) => {
            let missing = bundle.unsupported_rows();
            let cells: Vec<String> = missing
                .iter()
                .map(|&(t, i, u)| format!("t={t} y={} u={u}", bundle.label(crate::ope::Axis::Observed(t as i64), i)))
                .collect();
            s.set("rank.detail", rank_failure_detail(&bundle, &missing)).set("rank.unsupported", cells);
            return fail(dir, s, &e);
        }
        Err(e) => return fail(dir, s, &e),
    };
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.identity.clone(),
                r.variant.clone(),
                format!("{:e}", r.max_deviation),
                r.checked.to_string(),
                r.selected.to_string(),
                (r.max_deviation <= report.tolerance).to_string(),
            ]
        })
        .collect();
    write_table(&dir.join("rows.csv"), &["identity", "variant", "max_deviation", "checked", "selected", "within_tolerance"], &rows)?;
    write_rank_csv(&dir.join("hidden_rank.csv"), &report.hidden_rank)?;
    s.set("identities.tolerance", report.tolerance)
        .set("identities.selected", report.selected.to_string())
        .set("identities.satisfying", report.satisfying.iter().map(|r| format!("{r:?}").to_lowercase()).collect::<Vec<_>>())
        .set("identities.max_selected_deviation", report.max_selected_deviation())
        .set("identities.passed", report.passed())
        .set("identities.finding", report.finding.as_str())
        .set("identities.strategies", report.strategies.clone())
        .set("identities.hidden_rank_met", report.hidden_rank.iter().all(|d| d.pass != Some(false)));
    for r in &report.rows {
        let key = if r.variant == "-" { r.identity.clone() } else { format!("{}.{}", r.identity, r.variant.replace('/', "_")) };
        s.set(&format!("deviation.{key}"), r.max_deviation);
    }
    let (status, msg) = if report.passed() {
        (ExitStatus::Success, format!("all selected identities within {:e} (max {:e})", report.tolerance, report.max_selected_deviation()))
    } else {
        (ExitStatus::Identity, format!("selected identity deviation {:e} exceeds {:e}", report.max_selected_deviation(), report.tolerance))
    };
    finish(dir, s, status, msg)
}

/// Competition rank (1 = best) of each value; values within `tol` tie.
pub fn competition_ranks(values: &[Option<f64>], tol: f64) -> Vec<Option<usize>> {
    values
        .iter()
        .map(|v| {
            let v = (*v)?;
            Some(1 + values.iter().flatten().filter(|&&w| w > v + tol).count())
        })
        .collect()
}

/// True when no pair is strictly ordered one way by `a` and the other by `b`
/// (differences within `tol` count as ties).
pub fn rankings_agree(a: &[f64], b: &[f64], tol: f64) -> bool {
    for i in 0..a.len() {
        for j in 0..a.len() {
            if a[i] > a[j] + tol && b[j] > b[i] + tol {
                return false;
            }
        }
    }
    true
}

/// Tolerance for treating two values as tied when ranking.
pub const RANK_TIE_TOL: f64 = 1e-9;

/// `search-policy`: rank the configured family by estimated value.
pub fn cmd_search_policy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let env = cfg.load_environment()?;
    let family = cfg.search_family(&env)?;
    let (pomdp, behavioral, bdesc, dir, mut s) = estimation_setup(cfg, &env, "search-policy")?;
    let bundle = match build_bundle(cfg, &env, pomdp.as_ref(), &behavioral, &bdesc, &mut s) {
        Ok(b) => b,
        Err(e) => return fail(dir, s, &e),
    };
    s.set("provenance", bundle.provenance().to_string()).set("family_size", family.len() as i64);
    report_bundle(&dir, &bundle, &mut s)?;
    let results: Vec<(ReportRow, Option<OpeEstimate>)> =
        family.par_iter().map(|(m, d)| evaluate_one(cfg, &env, pomdp.as_ref(), &bundle, m, d)).collect();
    let ope: Vec<Option<f64>> = results.iter().map(|r| r.0.ope_value).collect();
    let exact: Vec<Option<f64>> = results.iter().map(|r| r.0.exact_value).collect();
    let ope_rank = competition_ranks(&ope, RANK_TIE_TOL);
    let exact_rank = competition_ranks(&exact, RANK_TIE_TOL);
    // Estimated value descending, failures last, family order breaks ties.
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&i, &j| match (ope[i], ope[j]) {
        (Some(a), Some(b)) => b.total_cmp(&a).then(i.cmp(&j)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => i.cmp(&j),
    });
    let rows: Vec<ReportRow> = order.iter().map(|&i| results[i].0.clone()).collect();
    let col = |v: &[Option<usize>]| order.iter().map(|&i| v[i].map_or(UNAVAILABLE.into(), |r| r.to_string())).collect::<Vec<String>>();
    let member: Vec<String> = order.iter().map(|i| i.to_string()).collect();
    write_rows(&dir, env.horizon(), &rows, &[("member", member), ("ope_rank", col(&ope_rank)), ("exact_rank", col(&exact_rank))])?;
    for (k, &i) in order.iter().enumerate() {
        row_summary(&mut s, &format!("ranking.r{k}"), &results[i].0, results[i].1.as_ref());
        s.set_num(&format!("ranking.r{k}.exact_rank"), exact_rank[i].map(|r| r as f64));
    }
    let top = order[0];
    let mut status = ExitStatus::Success;
    if ope[top].is_none() {
        status = ExitStatus::Rank;
        s.set("top.strategy", UNAVAILABLE);
    } else {
        s.set("top.strategy", results[top].0.strategy.as_str()).set("top.member", top as i64).set_num("top.j_ope", ope[top]);
        s.set_num("top.j_exact", exact[top]).set_num("top.exact_rank", exact_rank[top].map(|r| r as f64));
    }
    if ope.iter().all(Option::is_some) && exact.iter().all(Option::is_some) {
        let a: Vec<f64> = ope.iter().flatten().copied().collect();
        let b: Vec<f64> = exact.iter().flatten().copied().collect();
        s.set("ranking_agrees_with_exact", rankings_agree(&a, &b, RANK_TIE_TOL));
    }
    let msg = match exact_rank[top] {
        Some(r) if ope[top].is_some() => format!("top strategy {} (exact rank {r})", results[top].0.strategy),
        _ if ope[top].is_some() => format!("top strategy {}", results[top].0.strategy),
        _ => "no strategy could be estimated".into(),
    };
    finish(dir, s, status, msg)
}

/// Dispatches a command by its CLI name.
pub fn run(command: &str, config: &Path, o: &Overrides) -> Result<Outcome> {
    let cfg = load_config(config, o)?;
    match command {
        "solve-bp" => cmd_solve_bp(&cfg),
        "gen-data" => cmd_gen_data(&cfg),
        "evaluate" => cmd_evaluate(&cfg),
        "check-identities" => cmd_check_identities(&cfg),
        "search-policy" => cmd_search_policy(&cfg),
        other => Err(Error::config("command", format!("unknown command `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let all = [
            ExitStatus::Success,
            ExitStatus::Failure,
            ExitStatus::Parse,
            ExitStatus::Rank,
            ExitStatus::Identity,
            ExitStatus::SizeGuard,
        ];
        let mut codes: Vec<i32> = all.iter().map(|s| s.code()).collect();
        codes.dedup();
        assert_eq!(codes, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(ExitStatus::of_error(&Error::RankConditionFailed("x".into())), ExitStatus::Rank);
        assert_eq!(ExitStatus::of_error(&Error::StateSpaceTooLarge { count: 2, cap: 1 }), ExitStatus::SizeGuard);
        assert_eq!(ExitStatus::of_error(&Error::config("f", "r")), ExitStatus::Parse);
    }

    #[test]
    fn competition_ranking_with_ties_and_gaps() {
        let r = competition_ranks(&[Some(0.5), Some(0.9), None, Some(0.5)], 1e-12);
        assert_eq!(r, vec![Some(2), Some(1), None, Some(2)]);
        assert!(rankings_agree(&[1.0, 2.0, 2.0], &[0.0, 1.0, 1.5], 1e-9));
        assert!(!rankings_agree(&[1.0, 2.0], &[1.0, 0.5], 1e-9));
    }
}
