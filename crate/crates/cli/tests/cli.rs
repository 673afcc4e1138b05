use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn driftspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftspec")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn make_mesh(dir: &Path, shape: &[&str]) -> std::path::PathBuf {
    let out = dir.join("mesh");
    let mut args = vec!["mesh"];
    args.extend_from_slice(shape);
    args.extend_from_slice(&["--out", p(&out)]);
    let res = driftspec(&args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("manifest.json").exists());
    out.join("mesh.json")
}

fn eigenvalues(spectrum: &Path) -> Vec<f64> {
    let v: serde_json::Value = serde_json::from_slice(&fs::read(spectrum).unwrap()).unwrap();
    v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn solve_square_first_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = make_mesh(dir.path(), &["--shape", "square", "--h", "0.02"]);
    let out = dir.path().join("solve");
    let res = driftspec(&["solve", "--mesh", p(&mesh), "--phi", "0", "--problem", "dirichlet", "--k", "1", "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let l = eigenvalues(&out.join("spectrum.json"));
    assert_eq!(l.len(), 1);
    assert!((l[0] / 19.74 - 1.0).abs() < 0.01, "{l:?}");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["inputs"]["mesh"].as_str().unwrap().len(), 64);
    assert!(manifest["version"].is_string());
}

#[test]
fn nodal_line_of_second_mode_is_the_midline() {
    // On a 1 × 0.8 rectangle the second Dirichlet mode is sin(2πx) sin(πy/0.8).
    let dir = tempfile::tempdir().unwrap();
    let mesh = make_mesh(dir.path(), &["--shape", "rectangle", "--width", "1", "--height", "0.8", "--h", "0.05"]);
    let solve = dir.path().join("solve");
    let res = driftspec(&["solve", "--mesh", p(&mesh), "--problem", "dirichlet", "--k", "2", "--out", p(&solve)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let out = dir.path().join("nodal");
    let svg = dir.path().join("mode1.svg");
    let res = driftspec(&["nodal", "--mesh", p(&mesh), "--spectrum", p(&solve), "--index", "1", "--svg", p(&svg), "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let nodal: serde_json::Value = serde_json::from_slice(&fs::read(out.join("nodal.json")).unwrap()).unwrap();
    assert_eq!(nodal["analysis"]["domain_count"], 2);

    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.contains("viewBox=\"0 0 1000 1000\""));
    let nodal_paths: Vec<&str> = text.lines().filter(|l| l.contains("#c0392b")).collect();
    assert_eq!(nodal_paths.len(), 1, "{text}");
    let d = nodal_paths[0].split("d=\"").nth(1).unwrap().split('"').next().unwrap();
    assert_eq!(d.matches('M').count(), 1, "one polyline: {d}");
    // x = 1/2 maps to 20 + 0.5 · 960 in chart space.
    let xs: Vec<f64> = d.split_whitespace().step_by(2).map(|t| t.trim_start_matches(['M', 'L']).parse().unwrap()).collect();
    assert!(xs.len() > 5);
    assert!(xs.iter().all(|x| (x - 500.0).abs() < 5.0), "{xs:?}");
}

const SMALL_CONFIG: &str = r#"
[[instances]]
name = "coarse square"
shape = { shape = "rectangle", width = 1, height = 1 }
mesh_h = 0.1
problem = "dirichlet"
count = 3
reference_count = 3
reference_tol = 0.1
"#;

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL_CONFIG).unwrap();
    let res = driftspec(&["verify", "--config", p(&good), "--out", p(&dir.path().join("good"))]);
    assert_eq!(code(&res), 0, "{}{}", String::from_utf8_lossy(&res.stdout), String::from_utf8_lossy(&res.stderr));
    for f in ["report.json", "report.txt", "manifest.json"] {
        assert!(dir.path().join("good").join(f).exists(), "{f}");
    }

    let strict = dir.path().join("strict.toml");
    fs::write(&strict, SMALL_CONFIG.replace("reference_tol = 0.1", "reference_tol = 1e-9")).unwrap();
    let res = driftspec(&["verify", "--config", p(&strict), "--out", p(&dir.path().join("strict"))]);
    assert_eq!(code(&res), 1);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("strict/report.json")).unwrap()).unwrap();
    assert!(report["summary"]["fail"].as_u64().unwrap() > 0);
    let res = driftspec(&["verify", "--config", p(&strict), "--out", p(&dir.path().join("lenient")), "--allow-fail"]);
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMALL_CONFIG.replace("count = 3", "count = \"three\"")).unwrap();
    let res = driftspec(&["verify", "--config", p(&bad), "--out", p(&dir.path().join("bad"))]);
    assert_eq!(code(&res), 2);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 7"), "{err}");

    // JSON fallback.
    let json = dir.path().join("good.json");
    fs::write(
        &json,
        r#"{"instances": [{"name": "j", "shape": {"shape": "disk", "radius": 1.0}, "mesh_h": 0.15, "problem": "dirichlet", "count": 2}]}"#,
    )
    .unwrap();
    let res = driftspec(&["verify", "--config", p(&json), "--out", p(&dir.path().join("json"))]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    assert_eq!(code(&driftspec(&["verify", "--config", p(&good)])), 2, "missing output directory");
    assert_eq!(code(&driftspec(&["solve", "--k", "3"])), 2, "usage error");
}

#[test]
fn unconverged_solve_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = make_mesh(dir.path(), &["--shape", "disk", "--h", "0.2"]);
    let res = driftspec(&["solve", "--mesh", p(&mesh), "--problem", "dirichlet", "--k", "3", "--tol", "1e-20", "--out", p(&dir.path().join("s"))]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn outputs_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = make_mesh(dir.path(), &["--shape", "torus", "--h", "0.3"]);
    let phi = r#"{"builtin": "gaussian_well", "params": {"amplitude": 2.0, "sigma": 0.5, "center": [3.0, 3.0]}}"#;
    let mut runs = Vec::new();
    for r in ["a", "b"] {
        let out = dir.path().join(r);
        let res = driftspec(&["solve", "--mesh", p(&mesh), "--phi", phi, "--problem", "closed", "--k", "6", "--seed", "7", "--out", p(&out)]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        let nodal = out.join("nodal");
        let res = driftspec(&["nodal", "--mesh", p(&mesh), "--spectrum", p(&out.join("spectrum.json")), "--index", "3", "--out", p(&nodal)]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        runs.push(out);
    }
    for f in ["spectrum.json", "eigenvectors.json", "manifest.json", "nodal/nodal.json", "nodal/nodal.svg", "nodal/manifest.json"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(runs[0].join("spectrum.json")).unwrap();
    assert!(text.contains("e0") || text.contains("e-") || text.contains("e1"), "scientific notation: {text}");
}

#[test]
fn sweep_writes_points_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        r#"
[base]
name = "sweep"
shape = { shape = "rectangle", width = 1, height = 1 }
mesh_h = 0.125
problem = "dirichlet"
count = 3
checks = ["basics", "courant"]
phi = { builtin = "gaussian_well", params = { amplitude = 0.0, sigma = 0.5, center = [0.5, 0.5] } }

[grid]
"phi.params.amplitude" = [0.0, 1.0, 2.0]
refinements = [0, 1]
"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let res = driftspec(&["sweep", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let mut reader = csv::Reader::from_path(out.join("index.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(
        header,
        [
            "point", "phi.params.amplitude", "refinements", "lambda_0", "lambda_1", "lambda_2", "domains_0", "domains_1", "domains_2",
            "pass_rate_basics", "pass_rate_courant"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(&row[0], format!("point-{i:03}"));
        assert!(out.join(&row[0]).join("manifest.json").exists());
        assert!(out.join(&row[0]).join("report.json").exists());
        assert_eq!(&row[6], "1");
        assert_eq!(&row[10], "1.0000000000000000e0");
    }
    // Rows vary refinements fastest; refinement lowers the Dirichlet λ0.
    let l0 = |r: usize| rows[r][3].parse::<f64>().unwrap();
    assert!(l0(1) < l0(0) && l0(5) < l0(4));
    assert_ne!(l0(4), l0(0));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn verify_canonical_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("canonical");
    let res = driftspec(&["verify", "--out", p(&out)]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(code(&res), 0, "{stdout}{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["fail"], 0);
    assert_eq!(report["provenance"].as_array().unwrap().len(), 13);
    assert!(stdout.contains("0 fail"));
}
