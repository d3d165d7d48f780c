use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use walkref::io::encode_graph6;
use walkref::oracle::{named_adjacency, random_permutation};

const BIN: &str = env!("CARGO_BIN_EXE_walkref");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn walkref(args: &[&str]) -> Run {
    walkref_env(args, &[])
}

fn walkref_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let out = Command::new(BIN).args(args).envs(env.iter().copied()).output().expect("binary runs");
    Run {
        code: out.status.code().expect("exited"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn fx(name: &str) -> String {
    fixture(name).display().to_string()
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let value: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&value).expect("schema compiles")
}

fn assert_valid(schema_name: &str, text: &str) {
    let instance: Value = serde_json::from_str(text).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"));
    let compiled = schema(schema_name);
    let msgs: Vec<String> = match compiled.validate(&instance) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| e.to_string()).collect(),
    };
    panic!("{schema_name} schema rejects output: {msgs:?}\n{text}");
}

#[test]
fn refine_uniform_k4() {
    let r = walkref(&["refine", "--proc", "wl2", &fx("k4_uniform.json")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("stable at round 0, 2 classes"), "{}", r.stdout);
    assert!(r.stdout.contains("round 1: 2 classes"));
}

#[test]
fn refine_missing_file_exits_2() {
    let r = walkref(&["refine", "does-not-exist.json"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("does-not-exist.json"));
}

#[test]
fn input_errors_exit_2() {
    for args in [
        vec!["refine".to_string(), fx("empty.json")],
        vec!["refine".to_string(), fx("bad_index.json")],
        vec!["refine".into(), "--proc".into(), "walk".into(), "--ell".into(), "1".into(), fx("c6.g6")],
        vec!["refine".into(), "--proc".into(), "wl3".into(), fx("c6.g6")],
        vec!["verify".into(), "--only".into(), "no-such-suite".into()],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = walkref(&args);
        assert_eq!(r.code, 2, "{args:?}: {}", r.stderr);
    }
}

#[test]
fn budget_exhaustion_exits_3() {
    let r = walkref(&["refine", "--max-rounds", "0", &fx("c6.g6")]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn threads_env_is_validated() {
    let r = walkref_env(&["refine", &fx("c6.g6")], &[("WALKREF_THREADS", "zero")]);
    assert_eq!(r.code, 2);
    let r = walkref_env(&["refine", &fx("c6.g6")], &[("WALKREF_THREADS", "1")]);
    assert_eq!(r.code, 0);
}

#[test]
fn longer_walks_stabilize_no_later() {
    for file in ["labelled.json", "petersen.g6", "c6.g6", "c3c3.g6", "shrikhande.g6"] {
        let round = |ell: &str| {
            let r = walkref(&["refine", "--proc", "walk", "--ell", ell, "--format", "json", &fx(file)]);
            assert_eq!(r.code, 0);
            serde_json::from_str::<Value>(&r.stdout).unwrap()["stable_round"].as_u64().unwrap()
        };
        assert!(round("3") <= round("2"), "{file}");
    }
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn compare_verdicts_match_golden() {
    let cases = [
        (["c6.g6", "c3c3.g6"], ["--proc", "wl2"], "c6_vs_c3c3_wl2.json"),
        (["shrikhande.g6", "rook4x4.g6"], ["--proc", "wl2"], "shrikhande_vs_rook4x4_wl2.json"),
        (["shrikhande.g6", "rook4x4.g6"], ["--proc", "walk"], "shrikhande_vs_rook4x4_walk3.json"),
    ];
    for (files, proc_args, expected) in cases {
        let mut args = vec!["compare".to_string(), fx(files[0]), fx(files[1])];
        args.extend(proc_args.iter().map(|s| s.to_string()));
        if proc_args[1] == "walk" {
            args.extend(["--ell".to_string(), "3".to_string()]);
        }
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = walkref(&args);
        assert_eq!(r.code, 0);
        assert_eq!(r.stdout, golden(expected), "{expected}");
        assert_valid("compare", &r.stdout);
    }
}

#[test]
fn compare_unequal_sizes_and_permuted_copy() {
    let r = walkref(&["compare", &fx("c6.g6"), &fx("petersen.g6")]);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["verdict"], "distinguished");
    assert_eq!(v["reason"], "size");

    let (n, adj) = named_adjacency("petersen").unwrap();
    let perm = random_permutation(n, 11);
    let permuted = encode_graph6(n, |i, j| adj[perm[i] * n + perm[j]]);
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("petersen_permuted.g6");
    std::fs::write(&path, permuted).unwrap();
    for proc_args in [vec!["--proc", "wl2"], vec!["--proc", "walk", "--ell", "3"]] {
        let first = fx("petersen.g6");
        let mut args = vec!["compare", first.as_str(), path.to_str().unwrap()];
        args.extend(proc_args);
        let r = walkref(&args);
        let v: Value = serde_json::from_str(&r.stdout).unwrap();
        assert_eq!(v["verdict"], "indistinguishable", "{}", r.stdout);
    }
}

#[test]
fn compare_text_format() {
    let r = walkref(&["compare", "--format", "text", &fx("shrikhande.g6"), &fx("rook4x4.g6")]);
    assert_eq!(r.stdout, "wl2: indistinguishable (stable at rounds 0, 0)\n");
    let r = walkref(&["compare", "--format", "text", &fx("c6.g6"), &fx("c3c3.g6")]);
    assert_eq!(r.stdout, "wl2: distinguished at round 1 (readout)\n");
}

#[test]
fn json_outputs_validate() {
    let r = walkref(&["refine", "--format", "json", "--proc", "walk", "--ell", "3", &fx("labelled.json")]);
    assert_valid("refine", &r.stdout);
    let r = walkref(&["mpnn-sim", "--format", "json", "--ell", "3", &fx("labelled.json")]);
    assert_eq!(r.code, 0);
    assert_valid("sim", &r.stdout);
    let r = walkref(&["gnn-sim", "--format", "json", &fx("c6.g6")]);
    assert_eq!(r.code, 0);
    assert_valid("sim", &r.stdout);
    let r = walkref(&["verify", "--format", "json", "--only", "feature-dim,witnesses"]);
    assert_eq!(r.code, 0);
    assert_valid("verify", &r.stdout);
    let r = walkref(&["refine", "--trace", "--matrix", &fx("petersen.g6")]);
    for line in r.stdout.lines() {
        assert_valid("trace-record", line);
    }
    assert!(r.stdout.lines().count() >= 2);
}

#[test]
fn output_is_byte_deterministic() {
    let runs = [
        vec!["refine".to_string(), "--trace".into(), "--matrix".into(), fx("labelled.json")],
        vec![
            "compare".to_string(),
            fx("shrikhande.g6"),
            fx("rook4x4.g6"),
            "--proc".into(),
            "walk".into(),
            "--ell".into(),
            "3".into(),
        ],
        vec!["mpnn-sim".to_string(), "--ell".into(), "2".into(), fx("c3c3.g6")],
        vec!["gnn-sim".to_string(), "--format".into(), "json".into(), fx("labelled.json")],
        vec!["verify".to_string(), "--only".into(), "powersum,witnesses".into()],
    ];
    for args in runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = walkref(&args);
        let b = walkref_env(&args, &[("WALKREF_THREADS", "1")]);
        assert_eq!(a.code, 0, "{args:?}: {}", a.stderr);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn verify_only_filters() {
    let r = walkref(&["verify", "--only", "speedup-bound", "--format", "json"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let suites = v["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 1);
    assert_eq!(suites[0]["suite"], "speedup-bound");
    assert!(suites[0]["checks"].as_u64().unwrap() > 0);
}

#[test]
fn mutant_fails_with_counterexample_graph() {
    let r = walkref(&["verify", "--only", "speedup-bound", "--mutant", "walk-length-off-by-one", "--format", "json"]);
    assert_eq!(r.code, 3);
    assert_valid("verify", &r.stdout);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["passed"], false);
    let graph = &v["suites"][0]["counterexample"]["graph"];
    assert!(graph["n"].as_u64().unwrap() >= 1);
    // The dumped graph is a loadable input file.
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("counterexample.json");
    std::fs::write(&path, graph.to_string()).unwrap();
    assert_eq!(walkref(&["refine", path.to_str().unwrap()]).code, 0);
}

#[test]
fn mutant_flag_is_hidden() {
    let r = walkref(&["verify", "--help"]);
    assert!(!r.stdout.contains("mutant"));
    assert!(r.stdout.contains("--only"));
}
