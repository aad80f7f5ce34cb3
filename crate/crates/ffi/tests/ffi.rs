use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use persuasion_lab_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = pl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn env_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs/envs").join(name)
}

fn load_env(name: &str) -> *mut PlEnvironment {
    let mut env = ptr::null_mut();
    let p = cstr(env_path(name).to_str().unwrap());
    assert_eq!(unsafe { pl_env_from_path(p.as_ptr(), &mut env) }, PlStatus::Ok);
    env
}

fn strategy(env: *const PlEnvironment, src: &str) -> *mut PlStrategy {
    let mut s = ptr::null_mut();
    let src = cstr(src);
    assert_eq!(unsafe { pl_strategy_from_toml(env, src.as_ptr(), &mut s) }, PlStatus::Ok, "{}", last_error());
    s
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(pl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn solve_bp_through_the_abi() {
    let env = load_env("e2.toml");
    assert_eq!(unsafe { pl_env_horizon(env) }, 2);
    assert_eq!(unsafe { pl_env_num_policies(env) }, 2);
    let hash = unsafe { CStr::from_ptr(pl_env_hash(env)) }.to_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let (mut best, mut value) = (usize::MAX, f64::NAN);
    assert_eq!(unsafe { pl_solve_bp(env, &mut best, &mut value) }, PlStatus::Ok);
    assert_eq!((best, value), (1, 0.5));
    unsafe { pl_env_free(env) };
}

#[test]
fn null_and_malformed_inputs_report_errors() {
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { pl_env_from_toml(ptr::null(), &mut env) }, PlStatus::NullPointer);
    assert!(last_error().contains("toml"));
    let bad = cstr("horizon = \"x\"");
    assert_eq!(unsafe { pl_env_from_toml(bad.as_ptr(), &mut env) }, PlStatus::Parse);
    assert!(env.is_null());
    let (mut b, mut v) = (0usize, 0.0);
    assert_eq!(unsafe { pl_solve_bp(ptr::null(), &mut b, &mut v) }, PlStatus::NullPointer);
    assert_eq!(unsafe { pl_env_horizon(ptr::null()) }, 0);
    assert!(unsafe { pl_env_hash(ptr::null()) }.is_null());
    // Freeing null is a no-op.
    unsafe {
        pl_env_free(ptr::null_mut());
        pl_strategy_free(ptr::null_mut());
        pl_dataset_free(ptr::null_mut());
    }
    let env = load_env("e2.toml");
    let mut s = ptr::null_mut();
    let src = cstr("family = \"constant\"\npolicy = 7");
    assert_eq!(unsafe { pl_strategy_from_toml(env, src.as_ptr(), &mut s) }, PlStatus::Parse);
    unsafe { pl_env_free(env) };
}

#[test]
fn dataset_estimate_and_exact_value() {
    let env = load_env("e2_confounded.toml");
    let b = strategy(env, "family = \"state_table\"\ntable = [[0.6, 0.4], [0.3, 0.7]]");
    let g = strategy(env, "family = \"constant\"\npolicy = 1");
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { pl_dataset_generate(env, b, 50_000, 3, &mut ds) }, PlStatus::Ok);
    assert_eq!(unsafe { pl_dataset_len(ds) }, 50_000);

    let (mut est, mut exact, mut mc) = (f64::NAN, f64::NAN, f64::NAN);
    assert_eq!(unsafe { pl_ope_value(ds, g, &mut est) }, PlStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { pl_exact_value(env, g, &mut exact) }, PlStatus::Ok);
    assert_eq!(unsafe { pl_monte_carlo_value(env, g, 20_000, 5, &mut mc) }, PlStatus::Ok);
    assert!((exact - 1.45).abs() < 1e-12, "{exact}");
    assert!((est - exact).abs() < 0.05, "{est} vs {exact}");
    assert!((mc - exact).abs() < 0.05, "{mc} vs {exact}");

    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("d.jsonl").to_str().unwrap());
    assert_eq!(unsafe { pl_dataset_save(ds, path.as_ptr()) }, PlStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { pl_dataset_load(path.as_ptr(), &mut back) }, PlStatus::Ok);
    let mut est2 = f64::NAN;
    assert_eq!(unsafe { pl_ope_value(back, g, &mut est2) }, PlStatus::Ok);
    assert_eq!(est.to_bits(), est2.to_bits());

    unsafe {
        pl_dataset_free(back);
        pl_dataset_free(ds);
        pl_strategy_free(g);
        pl_strategy_free(b);
        pl_env_free(env);
    }
}

#[test]
fn unsupported_evaluation_is_a_rank_status() {
    let env = load_env("rank_violating.toml");
    let b = strategy(env, "family = \"constant\"\npolicy = 0");
    let g = strategy(env, "family = \"constant\"\npolicy = 1");
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { pl_dataset_generate(env, b, 100, 1, &mut ds) }, PlStatus::Ok);
    let mut v = 0.0;
    assert_eq!(unsafe { pl_ope_value(ds, g, &mut v) }, PlStatus::Rank);
    assert!(last_error().contains("rank condition failed"));
    assert_eq!(v, 0.0);
    unsafe {
        pl_dataset_free(ds);
        pl_strategy_free(g);
        pl_strategy_free(b);
        pl_env_free(env);
    }
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/persuasion_lab.h")).unwrap();
    for f in [
        "pl_version", "pl_last_error_message", "pl_env_from_toml", "pl_env_from_path", "pl_env_free", "pl_env_horizon",
        "pl_env_num_policies", "pl_env_hash", "pl_solve_bp", "pl_strategy_from_toml", "pl_strategy_free",
        "pl_dataset_generate", "pl_dataset_load", "pl_dataset_save", "pl_dataset_len", "pl_dataset_free",
        "pl_ope_value", "pl_exact_value", "pl_monte_carlo_value",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(h.contains("typedef struct PlEnvironment PlEnvironment;"));
    assert!(h.contains("PL_STATUS_RANK = 4"));
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include "persuasion_lab.h"

int main(int argc, char **argv) {
    PlEnvironment *env = NULL;
    if (pl_env_from_path(argv[1], &env) != PL_STATUS_OK) { fprintf(stderr, "%s\n", pl_last_error_message()); return 1; }
    size_t best = 0; double value = 0.0;
    if (pl_solve_bp(env, &best, &value) != PL_STATUS_OK) return 2;
    PlStrategy *g = NULL;
    if (pl_strategy_from_toml(env, "family = \"uniform\"", &g) != PL_STATUS_OK) return 3;
    double exact = 0.0;
    if (pl_exact_value(env, g, &exact) != PL_STATUS_OK) return 4;
    PlStatus s = pl_env_from_toml("not toml [", &env);
    printf("%zu %.17g %.17g %d\n", best, value, exact, (int)s);
    pl_strategy_free(g);
    pl_env_free(env);
    return 0;
}
"#;

/// Compiles and runs a C program against the static library when a C
/// compiler and the archive are available.
#[test]
fn c_program_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libpersuasion_lab_ffi.a");
    let cc_ok = Command::new("cc").arg("--version").output().map(|o| o.status.success()).unwrap_or(false);
    if !lib.is_file() || !cc_ok {
        eprintln!("skipping C link test: archive {} present = {}, cc = {cc_ok}", lib.display(), lib.is_file());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, C_SMOKE).unwrap();
    let bin = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).arg(env_path("e2.toml")).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let parts: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(parts[0], "1");
    assert_eq!(parts[1].parse::<f64>().unwrap(), 0.5);
    assert!(parts[2].parse::<f64>().unwrap().is_finite());
    assert_eq!(parts[3], "3");
}
