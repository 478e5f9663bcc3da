use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cd_core::embedding::save_embeddings;
use cd_core::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fast_config() -> PathBuf {
    fixtures().join("config_fast.json")
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_concept-decomp"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a modified copy of the fast config next to the fixtures it references.
fn patched_config(dir: &Path, patch: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(fast_config()).unwrap()).unwrap();
    for key in ["train", "test", "stub", "pretrain"] {
        let rel = v["paths"][key].as_str().unwrap().to_string();
        v["paths"][key] = fixtures().join(rel).to_string_lossy().into_owned().into();
    }
    patch(&mut v);
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

#[test]
fn gen_prints_counts_matching_the_stub() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&fast_config(), out.path(), &["gen"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Every stub answer has at least two cue words, so leak cleaning never empties one.
    let mut want: BTreeMap<String, usize> = BTreeMap::new();
    for line in fs::read_to_string(fixtures().join("stub.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        *want.entry(v["class"].as_str().unwrap().to_string()).or_default() += 1;
    }
    let stdout = String::from_utf8(o.stdout).unwrap();
    for (class, n) in &want {
        assert!(stdout.contains(&format!("{class}: {n} candidates")), "{stdout}");
    }
    let pool = fs::read_to_string(out.path().join("pool.jsonl")).unwrap();
    assert_eq!(pool.lines().count(), want.values().sum::<usize>());
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let out = tempfile::tempdir().unwrap();
    for stage in ["gen", "select", "tune", "explain", "attack", "eval", "sweep-k", "factor"] {
        let o = run(&fast_config(), out.path(), &[stage]);
        assert_eq!(code(&o), 0, "{stage}: {}", stderr(&o));
    }
    let eval = fs::read_to_string(out.path().join("eval.csv")).unwrap();
    let rows: Vec<&str> = eval.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["row", "1", "42", "Avg", "σ²"]);

    let corr = fs::read_to_string(out.path().join("correlation.csv")).unwrap();
    assert_eq!(corr.lines().count(), 1 + 3 * 3);

    let sweep = fs::read_to_string(out.path().join("sweep_k.csv")).unwrap();
    let ks: Vec<&str> = sweep.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["1", "5", "10", "15", "20"]);

    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let stages = m["stages"].as_object().unwrap();
    assert_eq!(stages.len(), 8);
    let mut listed = Vec::new();
    for rec in stages.values() {
        for a in rec["artifacts"].as_array().unwrap() {
            let p = out.path().join(a.as_str().unwrap());
            assert!(p.exists(), "{}", p.display());
            listed.push(p);
        }
    }
    // Everything on disk apart from the manifest itself is listed.
    let mut stack = vec![out.path().to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" || p.parent().unwrap() != out.path() {
                assert!(listed.contains(&p), "unlisted {}", p.display());
            }
        }
    }
}

#[test]
fn explain_before_tune_names_the_stage() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&fast_config(), out.path(), &["explain"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`tune`"), "{}", stderr(&o));
}

#[test]
fn select_before_gen_names_the_stage() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&fast_config(), out.path(), &["select"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`gen`"), "{}", stderr(&o));
}

#[test]
fn missing_stub_is_a_generation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched_config(dir.path(), |v| v["paths"]["stub"] = "absent.jsonl".into());
    let o = run(&cfg, &dir.path().join("out"), &["gen"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("absent.jsonl"));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched_config(dir.path(), |v| v["model"]["num_classes"] = 3.into());
    assert_eq!(code(&run(&cfg, &dir.path().join("out"), &["gen"])), 2);
    let cfg = patched_config(dir.path(), |v| v["seeds"] = serde_json::json!([]));
    assert_eq!(code(&run(&cfg, &dir.path().join("out"), &["gen"])), 2);
    let cfg = patched_config(dir.path(), |v| v["shots"] = 7.into());
    assert_eq!(code(&run(&cfg, &dir.path().join("out"), &["gen"])), 2);
    let cfg = patched_config(dir.path(), |v| v["unknown"] = 1.into());
    assert_eq!(code(&run(&cfg, &dir.path().join("out"), &["gen"])), 2);
    assert_eq!(code(&run(&dir.path().join("none.json"), &dir.path().join("out"), &["gen"])), 2);
}

#[test]
fn bad_tensor_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cdem");
    fs::write(&bad, b"not a tensor").unwrap();
    let o = run(&fast_config(), &dir.path().join("out"), &["factor", "--prompt", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&fast_config(), &dir.path().join("out"), &["factor"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn factor_residuals_follow_the_svd_bound() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = Matrix::random_normal(16, 5, 1.0, &mut rng);
    let path = dir.path().join("p.cdem");
    save_embeddings(&path, &p).unwrap();
    let out = dir.path().join("out");
    let o = run(&fast_config(), &out, &["factor", "--prompt", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(out.join("factor.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    let r: Vec<f64> = rows.iter().map(|x| x["residual_sq"].as_f64().unwrap()).collect();
    for w in r.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    assert!(r[4] <= 1e-10);
    for x in &rows {
        assert!((x["residual_sq"].as_f64().unwrap() - x["optimum_sq"].as_f64().unwrap()).abs() < 1e-6);
    }
    // Rank-1 energy is at least a fifth of the total, so one concept removes at least that much.
    let total: f64 = p.frobenius_norm().powi(2);
    assert!(r[0] <= total * 0.8 + 1e-9);
}

#[test]
fn flags_override_the_config() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&fast_config(), out.path(), &["gen"])), 0);
    assert_eq!(code(&run(&fast_config(), out.path(), &["select", "--k", "3"])), 0);
    let sel: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(out.path().join("selected.json")).unwrap()).unwrap();
    for s in &sel {
        assert_eq!(s["ids"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn help_exits_cleanly_and_unknown_commands_do_not() {
    assert_eq!(cd_cli::main_with_args(["concept-decomp", "--help"]), 0);
    assert_eq!(cd_cli::main_with_args(["concept-decomp", "frobnicate"]), 2);
}
