use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn silpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silpose")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = silpose(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    silpose(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// L-prism fields shared by the tests: 10k points, N = 48, seed 0.
struct Fixture {
    _dir: tempfile::TempDir,
    pal: PathBuf,
    pearl: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let pal = dir.path().join("pal.bin");
        let pearl = dir.path().join("pearl.bin");
        ok(&[
            "precompute", "--mesh", "builtin:lprism", "--points", "10000", "--grid", "48",
            "--out-pal", s(&pal), "--out-pearl", s(&pearl),
        ]);
        Fixture { _dir: dir, pal, pearl }
    })
}

fn minmax(stdout: &str, name: &str) -> (f64, f64) {
    let line = stdout.lines().find(|l| l.starts_with(name)).unwrap();
    let w: Vec<&str> = line.split_whitespace().collect();
    (w[2].parse().unwrap(), w[4].parse().unwrap())
}

#[test]
fn cube_precompute_is_bounded_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let run = |pal: &Path, pearl: &Path, threads: &str| {
        ok(&[
            "precompute", "--mesh", "builtin:cube", "--points", "5000", "--grid", "32", "--seed", "3",
            "--threads", threads, "--out-pal", s(pal), "--out-pearl", s(pearl),
        ])
    };
    let out = run(&p("a.pal"), &p("a.pearl"), "1");
    // A unit cube projects to between one face (area 1) and the hexagon seen
    // along a diagonal (area sqrt 3). An even grid has no node exactly face-on.
    let (lo, hi) = minmax(&out, "pal");
    assert!(lo > 0.97 && lo < 1.1, "{out}");
    assert!(hi > 1.65 && hi <= 3f64.sqrt() + 1e-9, "{out}");
    run(&p("b.pal"), &p("b.pearl"), "2");
    for (x, y) in [("a.pal", "b.pal"), ("a.pearl", "b.pearl")] {
        assert_eq!(std::fs::read(p(x)).unwrap(), std::fs::read(p(y)).unwrap());
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = s(dir.path());
    assert_eq!(code(&["precompute", "--mesh", "builtin:cube", "--mode", "persp", "--out-pal", o, "--out-pearl", o]), 2);
    assert_eq!(code(&["render", "--mesh", "builtin:cube", "--pose", "1,2,3", "--out", o]), 2);
    assert_eq!(code(&["render", "--mesh", "builtin:teapot", "--pose", "0,0,0,0,0,0", "--out", o]), 2);
    assert_eq!(code(&["ablate", "--param", "eps_h", "--values", "1", "--mesh", "builtin:cube", "--out", o]), 2);
    assert_eq!(code(&["estimate"]), 2);
}

#[test]
fn render_zero_pose_cube() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        ok(&["render", "--mesh", "builtin:cube", "--points", "20000", "--pose", "0,0,0,0,0,0", "--out", s(p)]);
    }
    let area: f64 = ok(&["render", "--mesh", "builtin:cube", "--points", "20000", "--pose", "0,0,0,0,0,0", "--out", s(&a)])
        .split_whitespace()
        .nth(3)
        .unwrap()
        .parse()
        .unwrap();
    assert!((area - 1.0).abs() < 0.02, "{area}");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let gt = json(&dir.path().join("a.csv.gt.json"));
    assert_eq!(gt["euler_xyz_deg"], serde_json::json!([0.0, 0.0, 0.0]));
}

fn vertices(p: &Path) -> Vec<(f64, f64)> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter_map(|l| {
            let mut it = l.split(',').map(|v| v.trim().parse::<f64>());
            match (it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y))) => Some((x, y)),
                _ => None,
            }
        })
        .collect()
}

#[test]
fn vertex_noise_has_rayleigh_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noisy) = (dir.path().join("c.csv"), dir.path().join("n.csv"));
    let base = ["render", "--mesh", "builtin:box", "--points", "30000", "--pose", "10,20,30,0,0,0"];
    ok(&[&base[..], &["--out", s(&clean)]].concat());
    ok(&[&base[..], &["--noise-sigma", "0.01", "--out", s(&noisy)]].concat());
    let (a, b) = (vertices(&clean), vertices(&noisy));
    assert_eq!(a.len(), b.len());
    let ld = 1.0; // the builtin box is 1 x 0.4 x 0.2
    let sigma = 0.01 * ld;
    let mean = a.iter().zip(&b).map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1)).sum::<f64>() / a.len() as f64;
    let expect = sigma * (std::f64::consts::PI / 2.0).sqrt();
    // Standard error of the mean is about 0.52 sigma / sqrt(n).
    let se = 0.523 * sigma / (a.len() as f64).sqrt();
    assert!((mean - expect).abs() < 4.0 * se, "{mean} vs {expect} over {} vertices", a.len());
}

#[test]
fn render_then_estimate_roundtrip() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    // A different sample of the mesh than the one behind the fields.
    ok(&["render", "--mesh", "builtin:lprism", "--points", "10000", "--seed", "9", "--pose=-40,25,140,0.2,-0.1,0", "--out", s(&g)]);
    let gt = dir.path().join("g.json.gt.json");
    let out = dir.path().join("est.json");
    ok(&[
        "estimate", "--pal", s(&f.pal), "--pearl", s(&f.pearl), "--mesh", "builtin:lprism",
        "--silhouette", s(&g), "--refine", "--gt", s(&gt), "--out", s(&out),
    ]);
    let v = json(&out);
    assert!(v["error"]["oe"].as_f64().unwrap() <= 2.0, "{}", v["error"]);
    assert!(v["refinement"]["hausdorff"].as_f64().unwrap() <= v["refinement"]["initial_hausdorff"].as_f64().unwrap());

    let plain = dir.path().join("plain.json");
    ok(&[
        "estimate", "--pal", s(&f.pal), "--mesh", "builtin:lprism", "--silhouette", s(&g), "--out", s(&plain),
    ]);
    let p = json(&plain);
    let first = |v: &Value| v["levels"][0]["candidates"].as_u64().unwrap();
    assert!(first(&p["search"]["diagnostics"]) >= first(&v["search"]["diagnostics"]));
    assert_eq!(p["search"]["diagnostics"]["levels"][0]["accelerated"], Value::Bool(false));
    assert!(p.get("refinement").is_none() && p.get("error").is_none());
}

#[test]
fn estimate_exit_codes() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    let out = dir.path().join("o.json");
    ok(&["render", "--mesh", "builtin:lprism", "--points", "10000", "--pose", "10,20,30,0,0,0", "--out", s(&g)]);
    // Fields of the L-prism, template of the cube.
    assert_eq!(
        code(&["estimate", "--pal", s(&f.pal), "--mesh", "builtin:cube", "--silhouette", s(&g), "--out", s(&out)]),
        4
    );
    // A cube silhouette is larger than any view of the L-prism.
    let big = dir.path().join("big.csv");
    ok(&["render", "--mesh", "builtin:cube", "--points", "10000", "--pose", "30,40,50,0,0,0", "--out", s(&big)]);
    let o = silpose(&["estimate", "--pal", s(&f.pal), "--mesh", "builtin:lprism", "--silhouette", s(&big), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no candidate"));
    assert_eq!(
        code(&["estimate", "--pal", s(&dir.path().join("missing.bin")), "--mesh", "builtin:lprism", "--silhouette", s(&g), "--out", s(&out)]),
        1
    );
}

#[test]
fn estimate_output_ignores_thread_count() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    ok(&["render", "--mesh", "builtin:lprism", "--points", "10000", "--seed", "4", "--pose", "70,-10,200,0,0,0", "--out", s(&g)]);
    let mut outs = Vec::new();
    for t in ["1", "3"] {
        let out = dir.path().join(format!("o{t}.json"));
        ok(&[
            "estimate", "--threads", t, "--seed", "2", "--pal", s(&f.pal), "--pearl", s(&f.pearl),
            "--mesh", "builtin:lprism", "--silhouette", s(&g), "--refine", "--out", s(&out),
        ]);
        outs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn benchmark_report_is_deterministic() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}.json"));
        let stdout = ok(&[
            "benchmark", "--mesh", "builtin:lprism", "--pal", s(&f.pal), "--pearl", s(&f.pearl),
            "--trials", "6", "--top-k", "3", "--seed", "11", "--out", s(&out),
        ]);
        assert!(stdout.contains("OE mean") && stdout.contains("top-3 success rate"), "{stdout}");
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["trial_count"], 6);
    assert_eq!(v["trials"].as_array().unwrap().len(), 6);
    let sum = &v["summary"];
    assert!(sum["success_rate"].as_f64().unwrap() <= sum["top_k_success_rate"].as_f64().unwrap());
}

#[test]
fn eps_cap_sweep_has_one_row_per_value() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    ok(&[
        "ablate", "--param", "eps_cap", "--values", "0.02,0.08,0.15", "--mesh", "builtin:lprism",
        "--pal", s(&f.pal), "--pearl", s(&f.pearl), "--trials", "3", "--no-refine", "--out", s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eps_cap,median_rmse_pct,mean_rmse_pct,median_oe_deg,runtime_s");
    assert_eq!(lines.len(), 4);
    for (l, v) in lines[1..].iter().zip(["0.02", "0.08", "0.15"]) {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols[0], v);
        assert!(cols[4].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn denser_templates_are_not_less_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    ok(&[
        "ablate", "--param", "points", "--values", "1500,12000", "--mesh", "builtin:lprism", "--grid", "32",
        "--trials", "8", "--seed", "5", "--out", s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let med: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // Median RMSE may only rise within sampling slack.
    assert!(med[1] <= 1.1 * med[0] + 0.05, "{med:?}");
}
