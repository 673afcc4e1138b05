use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use driftspec::eigensolve::EigenvectorFile;
use driftspec::json;
use driftspec::mesh::{self, generate, refine};
use driftspec::nodal::render_svg;
use driftspec::verify::{prepare, run_checks, verify_suite, CheckKind, Status};
use driftspec::{analyze, assemble, smallest, FieldSpec, NodalAnalysis, NodalOptions, ProblemKind, Shape, Spectrum};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{self, RunConfig, SweepConfig};
use crate::CliError;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: Value,
    /// Role -> sha256 of the input file bytes.
    inputs: BTreeMap<&'a str, String>,
}

fn sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = json::to_vec(value).map_err(driftspec::Error::from)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, config: &C, inputs: BTreeMap<&str, String>) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "driftspec",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: serde_json::to_value(config).map_err(driftspec::Error::from)?,
        inputs,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn load_mesh(path: &Path) -> Result<(driftspec::TriMesh, Vec<u8>), CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
    Ok((driftspec::TriMesh::from_json(&text)?, bytes))
}

/// `--phi`/`--h` argument: a JSON field spec when it starts with `{`, otherwise an expression.
fn field_arg(s: &str) -> Result<FieldSpec, CliError> {
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| CliError::Usage(format!("field spec {s}: {e}")))
    } else {
        Ok(FieldSpec::expr(s))
    }
}

pub fn mesh(shape: &Shape, h: f64, refinements: u32, out: &Path) -> Result<(), CliError> {
    let mut m = generate(shape, h)?;
    for _ in 0..refinements {
        m = refine(&m)?;
    }
    fs::create_dir_all(out)?;
    mesh::save(&m, out.join("mesh.json"))?;
    #[derive(Serialize)]
    struct Echo<'a> {
        shape: &'a Shape,
        h: f64,
        refinements: u32,
    }
    write_manifest(out, "mesh", &Echo { shape, h, refinements }, BTreeMap::new())?;
    println!("{} vertices, {} triangles, mean edge {:.4e}", m.num_vertices(), m.num_triangles(), m.mean_edge_length());
    Ok(())
}

pub struct SolveArgs {
    pub mesh: PathBuf,
    pub phi: String,
    pub h: Option<String>,
    pub kind: ProblemKind,
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let (m, mesh_bytes) = load_mesh(&args.mesh)?;
    let phi_spec = field_arg(&args.phi)?;
    let h_spec = args.h.as_deref().map(field_arg).transpose()?;
    let phi = phi_spec.build(m.dim())?;
    let h = h_spec.as_ref().map(|s| s.build(m.dim())).transpose()?;
    let op = assemble(&m, &phi, h.as_ref(), args.kind)?;
    let spectrum = smallest(&op, args.k, args.tol, args.seed)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("spectrum.json"), &spectrum)?;
    write_json(&args.out.join("eigenvectors.json"), &spectrum.eigenvector_file(&op))?;
    #[derive(Serialize)]
    struct Echo<'a> {
        phi: &'a FieldSpec,
        h: &'a Option<FieldSpec>,
        problem: ProblemKind,
        k: usize,
        tol: f64,
        seed: u64,
    }
    let echo = Echo {
        phi: &phi_spec,
        h: &h_spec,
        problem: args.kind,
        k: args.k,
        tol: args.tol,
        seed: args.seed,
    };
    write_manifest(&args.out, "solve", &echo, BTreeMap::from([("mesh", sha256(&mesh_bytes))]))?;
    for (i, l) in spectrum.eigenvalues.iter().enumerate() {
        println!("{i:>4}  {}", json::fmt_f64(*l));
    }
    Ok(())
}

pub fn nodal(mesh_path: &Path, spectrum: &Path, index: usize, svg: Option<&Path>, tau_rel: f64, out: &Path) -> Result<(), CliError> {
    let (m, mesh_bytes) = load_mesh(mesh_path)?;
    let (spec_path, vec_path) = if spectrum.is_dir() {
        (spectrum.join("spectrum.json"), spectrum.join("eigenvectors.json"))
    } else {
        (spectrum.to_path_buf(), spectrum.with_file_name("eigenvectors.json"))
    };
    let (spec_bytes, vec_bytes) = (read(&spec_path)?, read(&vec_path)?);
    let spec: Spectrum = serde_json::from_slice(&spec_bytes).map_err(|e| CliError::Usage(format!("{}: {e}", spec_path.display())))?;
    let vectors: EigenvectorFile = serde_json::from_slice(&vec_bytes).map_err(|e| CliError::Usage(format!("{}: {e}", vec_path.display())))?;
    if vectors.dof_map.len() != m.num_vertices() {
        return Err(CliError::Usage(format!(
            "eigenvectors were computed on a mesh with {} vertices, this one has {}",
            vectors.dof_map.len(),
            m.num_vertices()
        )));
    }
    let Some(coeffs) = vectors.eigenvectors.get(index) else {
        return Err(CliError::Usage(format!("index {index} out of range: {} eigenvectors stored", vectors.eigenvectors.len())));
    };
    let u: Vec<f64> = vectors.dof_map.iter().map(|d| d.map_or(0.0, |d| coeffs[d])).collect();
    let options = NodalOptions {
        tau_rel,
        ..NodalOptions::default()
    };
    let analysis = analyze(&m, &u, Some(index), &options)?;
    fs::create_dir_all(out)?;
    #[derive(Serialize)]
    struct NodalFile<'a> {
        index: usize,
        eigenvalue: Option<f64>,
        domain_sizes: Vec<usize>,
        analysis: &'a NodalAnalysis,
    }
    let file = NodalFile {
        index,
        eigenvalue: spec.eigenvalues.get(index).copied(),
        domain_sizes: analysis.domain_sizes(&m),
        analysis: &analysis,
    };
    write_json(&out.join("nodal.json"), &file)?;
    let svg_path = svg.map_or_else(|| out.join("nodal.svg"), Path::to_path_buf);
    fs::write(&svg_path, render_svg(&m, &analysis))?;
    #[derive(Serialize)]
    struct Echo<'a> {
        index: usize,
        nodal: &'a NodalOptions,
    }
    let inputs = BTreeMap::from([
        ("mesh", sha256(&mesh_bytes)),
        ("spectrum", sha256(&spec_bytes)),
        ("eigenvectors", sha256(&vec_bytes)),
    ]);
    write_manifest(out, "nodal", &Echo { index, nodal: &options }, inputs)?;
    println!(
        "index {index}: {} nodal domains, {} singular point candidates",
        analysis.domain_count,
        analysis.singular_points.len()
    );
    Ok(())
}

fn output_dir(flag: Option<PathBuf>, config: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `output` in the config".into()))
}

fn finish(failed: usize, allow_fail: bool) -> Result<(), CliError> {
    match failed {
        0 => Ok(()),
        n if allow_fail => {
            eprintln!("warning: {n} verification record(s) failed");
            Ok(())
        }
        n => Err(CliError::ChecksFailed(n)),
    }
}

pub fn verify(config: Option<&Path>, out: Option<PathBuf>, allow_fail: bool) -> Result<(), CliError> {
    let (cfg, inputs) = match config {
        Some(p) => {
            let (mut cfg, bytes): (RunConfig, _) = config::load(p)?;
            if cfg.instances.is_empty() {
                cfg.instances = RunConfig::canonical().instances;
            }
            (cfg, BTreeMap::from([("config", sha256(&bytes))]))
        }
        None => (RunConfig::canonical(), BTreeMap::new()),
    };
    let dir = output_dir(out, &cfg.output)?;
    let report = verify_suite(&cfg.instances, &cfg.lemma_tolerance)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    let table = report.table();
    fs::write(dir.join("report.txt"), &table)?;
    let echo = RunConfig { output: None, ..cfg };
    write_manifest(&dir, "verify", &echo, inputs)?;
    print!("{table}");
    finish(report.summary.fail, allow_fail)
}

fn grid_label(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), json::fmt_f64),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn sweep(config: &Path, out: Option<PathBuf>, allow_fail: bool) -> Result<(), CliError> {
    let (cfg, bytes): (SweepConfig, _) = config::load(config)?;
    let dir = output_dir(out, &cfg.output)?;
    let points = config::grid_points(&cfg.grid);
    let k = cfg.base.count;
    let checks: Vec<CheckKind> = CheckKind::ALL.into_iter().filter(|c| cfg.base.checks.contains(c)).collect();
    fs::create_dir_all(&dir)?;
    let mut csv = csv::Writer::from_path(dir.join("index.csv")).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(cfg.grid.keys().cloned());
    header.extend((0..k).map(|i| format!("lambda_{i}")));
    header.extend((0..k).map(|i| format!("domains_{i}")));
    header.extend(checks.iter().map(|c| format!("pass_rate_{}", c.name())));
    csv.write_record(&header).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut failed = 0;
    for (p, overrides) in points.iter().enumerate() {
        let label = format!("point-{p:03}");
        let mut inst = config::apply(&cfg.base, overrides)?;
        inst.name = format!("{}/{label}", cfg.base.name);
        let run = prepare(&inst)?;
        let (records, provenance) = run_checks(&inst, &run, &cfg.lemma_tolerance)?;
        let report = driftspec::VerificationReport::new(records, vec![provenance], cfg.lemma_tolerance);
        failed += report.summary.fail;
        let sub = dir.join(&label);
        fs::create_dir_all(&sub)?;
        fs::write(sub.join("report.json"), report.to_json()?)?;
        write_json(&sub.join("spectrum.json"), &run.spectrum)?;
        let echo: BTreeMap<&str, Value> = BTreeMap::from([
            ("overrides", Value::Object(overrides.iter().cloned().collect())),
            ("instance", serde_json::to_value(&inst).map_err(driftspec::Error::from)?),
        ]);
        write_manifest(&sub, "sweep", &echo, BTreeMap::from([("config", sha256(&bytes))]))?;

        let mut row = vec![label];
        row.extend(overrides.iter().map(|(_, v)| grid_label(v)));
        row.extend((0..k).map(|i| run.spectrum.eigenvalues.get(i).map_or(String::new(), |l| json::fmt_f64(*l))));
        row.extend((0..k).map(|i| {
            run.functions
                .iter()
                .find(|f| f.analysis.function_index == Some(i))
                .map_or(String::new(), |f| f.analysis.domain_count.to_string())
        }));
        for c in &checks {
            let judged: Vec<Status> = report.records.iter().filter(|r| r.check == *c).map(|r| r.status).filter(|s| matches!(s, Status::Pass | Status::Fail)).collect();
            let pass = judged.iter().filter(|s| **s == Status::Pass).count();
            row.push(if judged.is_empty() { String::new() } else { json::fmt_f64(pass as f64 / judged.len() as f64) });
        }
        csv.write_record(&row).map_err(|e| CliError::Usage(e.to_string()))?;
        println!("{}: {} records, {} failed", inst.name, report.summary.total, report.summary.fail);
    }
    csv.flush()?;
    let echo = SweepConfig { output: None, ..cfg };
    write_manifest(&dir, "sweep", &echo, BTreeMap::from([("config", sha256(&bytes))]))?;
    finish(failed, allow_fail)
}
