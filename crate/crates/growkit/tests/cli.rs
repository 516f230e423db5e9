use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use growkit::curves::read_curve;
use growkit::Checkpoint;

fn growkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_growkit")).args(args).env_remove("GROWKIT_SEED").output().expect("spawn growkit")
}

fn kv(out: &Output) -> HashMap<String, String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_owned(), v.to_owned())))
        .collect()
}

fn ok(out: Output) -> HashMap<String, String> {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    kv(&out)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn init(dir: &Path, name: &str, layers: usize) -> PathBuf {
    let path = dir.join(name);
    let l = layers.to_string();
    ok(growkit(&[
        "init",
        "--layers",
        &l,
        "--d-model",
        "16",
        "--d-ffn",
        "32",
        "--heads",
        "2",
        "--max-seq-len",
        "16",
        "--seed",
        "5",
        p(&path),
    ]));
    path
}

#[test]
fn stacking_six_layers_by_four() {
    let dir = tempfile::tempdir().unwrap();
    let base = init(dir.path(), "base.ckpt", 6);
    let out = dir.path().join("out.ckpt");
    let r = ok(growkit(&["grow", "--op", "stack", "--g", "4", p(&base), p(&out)]));
    assert_eq!(r["layers"], "24");
    assert_eq!(r["connection_rate"], "0.870");
    let c = Checkpoint::read(&out).unwrap();
    assert_eq!(c.config.n_layers, 24);
    assert_eq!(c.history.len(), 1);
    assert_eq!(c.history[0].from_layers, 6);
    let info = ok(growkit(&["info", p(&out)]));
    assert_eq!(info["growth.0.origin"], r["origin"]);
}

#[test]
fn pattern_connection_rate() {
    let dir = tempfile::tempdir().unwrap();
    let base = init(dir.path(), "base.ckpt", 6);
    let out = dir.path().join("out.ckpt");
    let r = ok(growkit(&["grow", "--op", "stack", "--pattern", "123*7-456", p(&base), p(&out)]));
    // 17 of the 23 adjacent pairs are consecutive base layers.
    assert_eq!(r["connection_rate"], format!("{:.3}", 17.0 / 23.0));
    assert_eq!(r["origin"], "1,2,3,1,2,3,1,2,3,1,2,3,1,2,3,1,2,3,1,2,3,4,5,6");
}

#[test]
fn identity_width_growth_keeps_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let base = init(dir.path(), "base.ckpt", 2);
    let out = dir.path().join("out.ckpt");
    ok(growkit(&["grow", "--op", "zero", "--dir", "width", "--g", "1", p(&base), p(&out)]));
    let (a, b) = (Checkpoint::read(&base).unwrap(), Checkpoint::read(&out).unwrap());
    let bits = |c: &Checkpoint| {
        let mut v = Vec::new();
        c.params.for_each(|_, _, s| v.extend(s.iter().map(|x| x.to_bits())));
        v
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.config, b.config);
}

#[test]
fn verify_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let base = init(dir.path(), "base.ckpt", 2);
    let zero = dir.path().join("zero.ckpt");
    let stacked = dir.path().join("stacked.ckpt");
    ok(growkit(&["grow", "--op", "zero", "--g", "2", p(&base), p(&zero)]));
    ok(growkit(&["grow", "--op", "stack", "--g", "2", p(&base), p(&stacked)]));

    let r = ok(growkit(&["verify", "--expect", "fp", "--tol", "1e-4", p(&base), p(&zero)]));
    assert_eq!(r["verdict"], "preserving");
    let out = growkit(&["verify", "--expect", "fp", p(&base), p(&stacked)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(kv(&out)["verdict"], "non-preserving");
    ok(growkit(&["verify", "--expect", "nonfp", p(&base), p(&stacked)]));
    let r = ok(growkit(&["verify", "--expect", "fp", p(&base), p(&base)]));
    assert_eq!(r["max_rel_dev"].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn guideline_row() {
    let r = ok(growkit(&["law", "guideline", "--N", "8e9", "--D", "15e12"]));
    let d: f64 = r["d"].parse().unwrap();
    assert!((d / 6.58e9 - 1.0).abs() < 0.01, "d={d}");
    assert_eq!(r["g"], "4");
    assert_eq!(r["C"].parse::<f64>().unwrap(), 6.0 * 8e9 * 15e12);
}

#[test]
fn speedup_of_identical_curves_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "step,tokens,flops,loss,lr\n1,100,1e10,3.5,1e-3\n2,200,2e10,2.8,1e-3\n3,300,3e10,2.5,1e-3\n")
        .unwrap();
    let r = ok(growkit(&["law", "speedup", "--target", "2.9", p(&a), p(&a)]));
    assert_eq!(r["speedup"].parse::<f64>().unwrap(), 0.0);
    let out = growkit(&["law", "speedup", "--target", "1.0", p(&a), p(&a)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn power_law_fit_of_exact_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("points.csv");
    let mut text = String::from("compute,loss\n");
    for e in 17..23 {
        let c = 10f64.powi(e);
        text.push_str(&format!("{c:e},{:e}\n", 40.0 * c.powf(-0.05)));
    }
    std::fs::write(&path, text).unwrap();
    let r = ok(growkit(&["law", "fit", p(&path)]));
    let (a, b): (f64, f64) = (r["a"].parse().unwrap(), r["b"].parse().unwrap());
    assert!((a / 40.0 - 1.0).abs() < 1e-9, "a={a}");
    assert!((b + 0.05).abs() < 1e-9, "b={b}");
}

const TINY: &str = "
[model]
d_model = 16
d_ffn = 32
n_heads = 2
n_layers = 1

[train]
seq_len = 17
tokens_per_batch = 68
total_tokens = TOTAL
warmup_steps = 2

[run]
synthetic_bytes = 30000
output = out
seed = 2
emit_every = 2
";

const TINY_GROWTH: &str = "
[growth]
operator = stack
g = 2
d_tokens = 340
D_tokens = 680
";

fn spec(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.spec");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn zero_tokens_gives_header_only_curve() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &TINY.replace("TOTAL", "0"));
    let r = ok(growkit(&["train", "-q", p(&s)]));
    assert_eq!(r["steps"], "0");
    assert_eq!(r["final_loss"], "-");
    assert_eq!(std::fs::read_to_string(dir.path().join("out/curve.csv")).unwrap(), "step,tokens,flops,loss,lr\n");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &TINY.replace("TOTAL", "0").replace("[run]", &format!("{TINY_GROWTH}\n[run]")));
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let r = ok(growkit(&["train", "-q", "--out", p(&first), p(&s)]));
    ok(growkit(&["train", "-q", "--out", p(&second), p(&s)]));
    assert_eq!(r["target_layers"], "2");
    for f in ["grown.csv", "scratch.csv", "grown.ckpt", "scratch.ckpt"] {
        let (a, b) = (std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap());
        assert!(a == b, "{f} differs between runs");
    }
    assert_eq!(read_curve(&first.join("grown.csv")).unwrap().last().unwrap().tokens, 1020);
}

#[test]
fn seed_variable_overrides_spec() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), &TINY.replace("TOTAL", "136"));
    let run = |seed: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_growkit"));
        cmd.args(["train", "-q", "--out", p(&dir.path().join(out)), p(&s)]).env_remove("GROWKIT_SEED");
        if let Some(v) = seed {
            cmd.env("GROWKIT_SEED", v);
        }
        ok(cmd.output().unwrap())
    };
    assert_eq!(run(None, "a")["seed"], "2");
    assert_eq!(run(Some("9"), "b")["seed"], "9");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = init(dir.path(), "base.ckpt", 6);
    let out = dir.path().join("out.ckpt");
    assert_eq!(growkit(&["grow", "--op", "stack", "--pattern", "12*", p(&base), p(&out)]).status.code(), Some(2));
    assert_eq!(growkit(&["grow", "--op", "sideways", p(&base), p(&out)]).status.code(), Some(2));
    assert_eq!(growkit(&["info", p(&dir.path().join("missing.ckpt"))]).status.code(), Some(3));
    std::fs::write(&out, b"GROWCKPT").unwrap();
    let bad = growkit(&["info", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&bad.stderr).is_empty());
    assert_eq!(growkit(&["law", "guideline", "--N", "8e9"]).status.code(), Some(2));
}

#[test]
fn shipped_demo_spec() {
    let dir = tempfile::tempdir().unwrap();
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/demo.spec");
    let r = ok(growkit(&["train", "-q", "--out", p(dir.path()), p(&demo)]));
    assert_eq!(r["mode"], "growth");
    assert_eq!(r["origin"], "1,2,1,2,1,2");
    let grown = read_curve(&dir.path().join("grown.csv")).unwrap();
    let scratch = read_curve(&dir.path().join("scratch.csv")).unwrap();
    assert!(!grown.is_empty() && !scratch.is_empty());
    let s: f64 = r["speedup"].parse().expect("both runs reach the target loss");
    assert!(s.is_finite());
    assert!(grown.last().unwrap().flops >= scratch.last().unwrap().flops);
}
