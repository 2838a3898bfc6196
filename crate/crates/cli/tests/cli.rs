//! End-to-end runs of the `vqmimo` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vqmimo"))
        .args(args)
        .output()
        .expect("spawn vqmimo")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = run(args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &TempDir, name: &str, profile: &str, n: usize, seed: u64) -> PathBuf {
    let out = p(dir, name);
    ok(&[
        "gen",
        "--profile",
        profile,
        "--samples",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    out
}

fn train(dir: &TempDir, model: &str, data: &Path, epochs: usize) -> (PathBuf, String) {
    let ckpt = p(dir, &format!("{model}.mmdl"));
    let stdout = ok(&[
        "train",
        "--model",
        model,
        "--data",
        s(data),
        "--out",
        s(&ckpt),
        "--epochs",
        &epochs.to_string(),
        "--batch-size",
        "8",
        "--seed",
        "3",
    ]);
    (ckpt, stdout)
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn gen_writes_the_expected_size_deterministically() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "a.mchd", "cdl-c", 4, 1);
    let b = gen(&dir, "b.mchd", "cdl-c", 4, 1);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes.len(), 32 + 4 * 4 * 64 * 16 * 2 * 8);
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let stdout = ok(&[
        "gen",
        "--profile",
        "cdl-a",
        "--samples",
        "2",
        "--out",
        s(&p(&dir, "c.mchd")),
    ]);
    assert!(
        stdout.contains("CDL-A") && stdout.contains("delay spread"),
        "{stdout}"
    );
}

#[test]
fn gen_rejects_unknown_profile() {
    let dir = TempDir::new().unwrap();
    let (c, err) = code(&[
        "gen",
        "--profile",
        "cdl-x",
        "--samples",
        "1",
        "--out",
        s(&p(&dir, "x.mchd")),
    ]);
    assert_eq!(c, 2);
    assert!(err.to_lowercase().contains("unknown profile"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "c.json");
    std::fs::write(&cfg, r#"{"train.lr": 0.001, "train.lrr": 1}"#).unwrap();
    let out_path = p(&dir, "x.mchd");
    let out = s(&out_path);
    assert_eq!(code(&["gen", "--config", s(&cfg), "--out", out]).0, 2);
    assert_eq!(
        code(&["gen", "--set", "channel.num_antennas=abc", "--out", out]).0,
        2
    );
    assert_eq!(
        code(&["gen", "--config", s(&p(&dir, "missing.json")), "--out", out]).0,
        2
    );
}

#[test]
fn config_file_overrides_defaults_and_flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "c.json");
    std::fs::write(
        &cfg,
        r#"{"gen.samples": 3, "channel.num_subcarriers": 8, "channel.num_symbols": 4}"#,
    )
    .unwrap();
    let a = p(&dir, "a.mchd");
    ok(&["gen", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(
        std::fs::metadata(&a).unwrap().len(),
        32 + 3 * 4 * 8 * 4 * 16
    );
    ok(&["gen", "--config", s(&cfg), "--samples", "2", "--out", s(&a)]);
    assert_eq!(
        std::fs::metadata(&a).unwrap().len(),
        32 + 2 * 4 * 8 * 4 * 16
    );
}

#[test]
fn train_missing_data_exits_3() {
    let dir = TempDir::new().unwrap();
    let (c, _) = code(&[
        "train",
        "--model",
        "ae",
        "--data",
        s(&p(&dir, "nope.mchd")),
        "--out",
        s(&p(&dir, "m.mmdl")),
    ]);
    assert_eq!(c, 3);
}

#[test]
fn train_reports_divergence_with_exit_4() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.mchd", "cdl-c", 8, 1);
    let (c, err) = code(&[
        "train",
        "--model",
        "ae",
        "--data",
        s(&data),
        "--out",
        s(&p(&dir, "m.mmdl")),
        "--epochs",
        "3",
        "--lr",
        "1e200",
    ]);
    assert_eq!(c, 4, "{err}");
    assert!(err.contains("epoch"), "{err}");
}

#[test]
fn train_overfits_a_tiny_set() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.mchd", "cdl-c", 4, 2);
    let ckpt = p(&dir, "ae.mmdl");
    let stdout = ok(&[
        "train",
        "--model",
        "ae",
        "--data",
        s(&data),
        "--out",
        s(&ckpt),
        "--epochs",
        "1000",
    ]);
    let mse: f64 = stdout
        .split("mse=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(mse < 1e-3, "{stdout}");
}

#[test]
fn vqvae_trace_has_quantizer_terms() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.mchd", "cdl-c", 16, 1);
    let (ckpt, _) = train(&dir, "vqvae", &data, 2);
    let trace = std::fs::read_to_string(ckpt.with_extension("loss.csv")).unwrap();
    assert!(trace.starts_with("# seed=3, version="));
    let rows = data_rows(&trace);
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(cols[4] > 0.0 && cols[5] > 0.0, "{r}");
    }
}

#[test]
fn sweep_rows_off_consistency_and_determinism() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.mchd", "cdl-c", 16, 1);
    let (ckpt, _) = train(&dir, "vae", &data, 1);
    let (a, b, c) = (p(&dir, "a.csv"), p(&dir, "b.csv"), p(&dir, "c.csv"));
    let sweep = |out: &Path, snr: &str| {
        ok(&[
            "sweep",
            "--ckpt",
            s(&ckpt),
            "--data",
            s(&data),
            "--snr",
            snr,
            "--seed",
            "4",
            "--out",
            s(out),
        ])
    };
    sweep(&a, "-10,-5,0,5,10,20,30,off");
    sweep(&b, "-10,-5,0,5,10,20,30,off");
    sweep(&c, "off");
    let (ta, tb, tc) = (
        std::fs::read_to_string(&a).unwrap(),
        std::fs::read_to_string(&b).unwrap(),
        std::fs::read_to_string(&c).unwrap(),
    );
    assert_eq!(ta, tb);
    let rows = data_rows(&ta);
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[7], data_rows(&tc)[0]);
    assert!(rows[0].starts_with("vae,CDL-C,-10,"));
}

#[test]
fn sweep_shape_mismatch_exits_5() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.mchd", "cdl-c", 4, 1);
    let (ckpt, _) = train(&dir, "ae", &data, 0);
    let other = p(&dir, "o.mchd");
    ok(&[
        "gen",
        "--samples",
        "2",
        "--set",
        "channel.num_subcarriers=32",
        "--out",
        s(&other),
    ]);
    let (c, err) = code(&[
        "sweep",
        "--ckpt",
        s(&ckpt),
        "--data",
        s(&other),
        "--out",
        s(&p(&dir, "s.csv")),
    ]);
    assert_eq!(c, 5, "{err}");
}

#[test]
fn ood_rows_and_profile_errors() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.mchd", "cdl-c", 4, 1);
    let (ckpt, _) = train(&dir, "vqvae", &data, 0);
    let out = p(&dir, "o.csv");
    ok(&[
        "ood",
        "--ckpt",
        s(&ckpt),
        "--profiles",
        "a,b,d",
        "--samples",
        "8",
        "--seed",
        "2",
        "--out",
        s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("vqvae,CDL-A,30,") && rows[5].starts_with("vqvae,CDL-D,off,"));
    let out_c = p(&dir, "c.csv");
    ok(&[
        "ood",
        "--ckpt",
        s(&ckpt),
        "--profiles",
        "c",
        "--samples",
        "8",
        "--seed",
        "2",
        "--out",
        s(&out_c),
    ]);
    assert_eq!(
        data_rows(&std::fs::read_to_string(&out_c).unwrap()).len(),
        2
    );
    let (c, _) = code(&[
        "ood",
        "--ckpt",
        s(&ckpt),
        "--profiles",
        "a,q",
        "--out",
        s(&out),
    ]);
    assert_eq!(c, 2);
}

#[test]
fn bench_rows_and_errors() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "d.mchd", "cdl-c", 4, 1);
    let ckpts: Vec<PathBuf> = ["ae", "vae", "vqvae"]
        .iter()
        .map(|m| train(&dir, m, &data, 0).0)
        .collect();
    let out = p(&dir, "b.csv");
    let mut args = vec!["bench", "--iters", "5", "--out", s(&out), "--ckpt"];
    args.extend(ckpts.iter().map(|c| s(c)));
    let stdout = ok(&args);
    assert!(stdout.contains("inference latency"), "{stdout}");
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3);
    let params: Vec<usize> = rows
        .iter()
        .map(|r| r.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(params[0] < params[2]);
    assert_eq!(params[2] - params[0], 512 * 64);
    let (c, _) = code(&["bench", "--ckpt", s(&data), "--out", s(&out)]);
    assert_eq!(c, 3);
}

#[test]
fn help_lists_flags_and_config_keys() {
    for sub in ["gen", "train", "sweep", "ood", "bench"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--config") && text.contains("--set"), "{sub}");
        assert!(text.contains("train.lr"), "{sub}");
    }
    assert!(run(&["--help"]).status.success());
}
