//! Automated checks of the nodal and spectral bounds on concrete (mesh, φ, h) instances.
//!
//! [`run_instance`] builds the mesh, solves, analyses every tested eigenfunction and
//! emits [`CheckRecord`]s. [`verify_suite`] collects the records of several instances into a
//! [`VerificationReport`].

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::{assemble, ProblemKind, WeightedOperator};
use crate::eigensolve::{relative_residual, smallest, SolverReport, Spectrum, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, ParamValue, ScalarField};
use crate::mesh::{generate, refine, Shape, TriMesh};
use crate::nodal::{analyze, domain_mesh, max_angle_deviation, NodalAnalysis, NodalOptions};
use crate::reference;

/// How index i maps to eigenvalues in every report.
pub const INDEX_CONVENTION: &str = "eigenvalues are numbered from 0 in increasing order with multiplicity; \
     for closed problems index 0 is the zero eigenvalue, for Dirichlet problems index i is the (i+1)-th eigenvalue";

/// Largest deviation (degrees) of consecutive branch angles from π/N.
pub const EQUIANGULAR_TOL_DEG: f64 = 10.0;
/// Submesh solves with fewer interior vertices are reported as under-resolved.
pub const MIN_DOMAIN_INTERIOR: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaTolerance {
    pub c: f64,
    pub floor: f64,
}

impl Default for LemmaTolerance {
    /// `c` puts the tolerance at 5% for the canonical square (mean edge 0.0227).
    fn default() -> Self {
        LemmaTolerance { c: 2.2, floor: 0.01 }
    }
}

impl LemmaTolerance {
    pub fn at(&self, mean_edge: f64) -> f64 {
        (self.c * mean_edge).max(self.floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Basics,
    Reference,
    Courant,
    NodalDomainEigenvalue,
    MultiplicityBound,
    OrderBound,
    Equiangular,
    NodalChains,
    ShiftAndReduction,
    Convergence,
}

impl CheckKind {
    pub const ALL: [CheckKind; 10] = [
        CheckKind::Basics,
        CheckKind::Reference,
        CheckKind::Courant,
        CheckKind::NodalDomainEigenvalue,
        CheckKind::MultiplicityBound,
        CheckKind::OrderBound,
        CheckKind::Equiangular,
        CheckKind::NodalChains,
        CheckKind::ShiftAndReduction,
        CheckKind::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Basics => "basics",
            CheckKind::Reference => "reference",
            CheckKind::Courant => "courant",
            CheckKind::NodalDomainEigenvalue => "nodal_domain_eigenvalue",
            CheckKind::MultiplicityBound => "multiplicity_bound",
            CheckKind::OrderBound => "order_bound",
            CheckKind::Equiangular => "equiangular",
            CheckKind::NodalChains => "nodal_chains",
            CheckKind::ShiftAndReduction => "shift_and_reduction",
            CheckKind::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: CheckKind,
    pub instance: String,
    /// What was tested, e.g. the function label and the inequality.
    pub subject: String,
    pub assertion: String,
    pub measured: BTreeMap<String, f64>,
    /// Slack of the asserted inequality; negative on failure.
    pub margin: Option<f64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    fn new(check: CheckKind, instance: &str, subject: impl Into<String>, assertion: impl Into<String>) -> Self {
        CheckRecord {
            check,
            instance: instance.to_string(),
            subject: subject.into(),
            assertion: assertion.into(),
            measured: BTreeMap::new(),
            margin: None,
            status: Status::Skipped,
            note: None,
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.measured.insert(key.to_string(), value);
        self
    }

    /// Pass iff `margin ≥ 0`.
    fn judged(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self.status = if margin >= 0.0 { Status::Pass } else { Status::Fail };
        self
    }

    fn with_status(mut self, status: Status, note: impl Into<String>) -> Self {
        self.status = status;
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

fn default_count() -> usize {
    10
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_rotations() -> usize {
    5
}
fn default_checks() -> Vec<CheckKind> {
    CheckKind::ALL.iter().copied().filter(|&c| c != CheckKind::Convergence).collect()
}
fn default_lemma_count() -> usize {
    5
}
fn default_i_max() -> usize {
    5
}
fn default_reference_tol() -> f64 {
    0.01
}
fn default_shift() -> f64 {
    5.0
}
fn default_levels() -> u32 {
    3
}

/// One verification instance: a mesh, a weight, a problem and the checks to run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub name: String,
    pub shape: Shape,
    /// Target mean edge length handed to the generator.
    pub mesh_h: f64,
    #[serde(default)]
    pub refinements: u32,
    #[serde(default)]
    pub phi: FieldSpec,
    #[serde(default)]
    pub h: Option<FieldSpec>,
    pub problem: ProblemKind,
    /// Eigenfunctions 0..count are tested.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nodal: NodalOptions,
    /// Random bases sampled in every degenerate cluster.
    #[serde(default = "default_rotations")]
    pub rotations: usize,
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckKind>,
    /// Leading eigenvalues compared with the closed-form spectrum (φ and h constant only).
    #[serde(default)]
    pub reference_count: usize,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    /// Eigenfunctions 0..lemma_count get the nodal-domain eigenvalue check.
    #[serde(default = "default_lemma_count")]
    pub lemma_count: usize,
    #[serde(default = "default_i_max")]
    pub i_max: usize,
    /// Expression whose interpolant is projected onto the best-matching eigenspace and
    /// tested alongside the computed eigenfunctions.
    #[serde(default)]
    pub probe: Option<String>,
    #[serde(default = "default_shift")]
    pub shift: f64,
    /// Uniform refinements in the convergence study.
    #[serde(default = "default_levels")]
    pub convergence_levels: u32,
}

impl Instance {
    pub fn new(name: &str, shape: Shape, mesh_h: f64, phi: FieldSpec, problem: ProblemKind, count: usize) -> Self {
        Instance {
            name: name.to_string(),
            shape,
            mesh_h,
            refinements: 0,
            phi,
            h: None,
            problem,
            count,
            tol: DEFAULT_TOL,
            seed: 0,
            nodal: NodalOptions::default(),
            rotations: default_rotations(),
            checks: default_checks(),
            reference_count: 0,
            reference_tol: default_reference_tol(),
            lemma_count: default_lemma_count(),
            i_max: default_i_max(),
            probe: None,
            shift: default_shift(),
            convergence_levels: default_levels(),
        }
    }

    fn enabled(&self, c: CheckKind) -> bool {
        self.checks.contains(&c)
    }

    pub fn mesh(&self) -> Result<TriMesh> {
        let mut mesh = generate(&self.shape, self.mesh_h)?;
        for _ in 0..self.refinements {
            mesh = refine(&mesh)?;
        }
        Ok(mesh)
    }
}

/// An eigenfunction (basis vector, rotated basis vector or probe projection) with its analysis.
#[derive(Debug, Clone)]
pub struct TestedFunction {
    pub label: String,
    /// Eigenvalue indices of the cluster the function lies in.
    pub cluster: Vec<usize>,
    pub analysis: NodalAnalysis,
}

impl TestedFunction {
    /// Largest index sharing the eigenvalue; gives the weakest valid nodal-count bound.
    pub fn top_index(&self) -> usize {
        *self.cluster.last().expect("nonempty cluster")
    }

    /// Smallest index sharing the eigenvalue.
    pub fn first_index(&self) -> usize {
        self.cluster[0]
    }
}

/// Everything the checks of one instance read.
#[derive(Debug, Clone)]
pub struct InstanceRun {
    pub mesh: TriMesh,
    pub phi: ScalarField,
    pub h: Option<ScalarField>,
    pub op: WeightedOperator,
    pub spectrum: Spectrum,
    pub functions: Vec<TestedFunction>,
}

pub fn mesh_hash(mesh: &TriMesh) -> Result<String> {
    let digest = Sha256::digest(mesh.to_json()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn solve_complete(op: &WeightedOperator, count: usize, tol: f64, seed: u64) -> Result<Spectrum> {
    let limit = op.num_dofs() - 1;
    let mut k = (count + 2).min(limit);
    loop {
        let s = smallest(op, k, tol, seed)?;
        let last = s.cluster_of(count - 1).map(<[usize]>::to_vec).unwrap_or_default();
        if !s.cluster_is_truncated(&last) || k == limit {
            return Ok(s);
        }
        k = (k + 6).min(limit);
    }
}

/// M-projection of the interpolant of `source` onto the cluster it overlaps most.
fn probe_function(mesh: &TriMesh, op: &WeightedOperator, spectrum: &Spectrum, source: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let g = ScalarField::expression(source, mesh.dim())?;
    let nodal = mesh.vertices().iter().map(|p| g.eval(&p[..mesh.dim()])).collect::<Result<Vec<f64>>>()?;
    let mg = op.mass.mul_vec(&op.restrict(&nodal));
    let coeff = |j: usize| spectrum.eigenvectors[j].iter().zip(&mg).map(|(x, y)| x * y).sum::<f64>();
    let weight = |c: &Vec<usize>| c.iter().map(|&j| coeff(j).powi(2)).sum::<f64>();
    let best = spectrum
        .clusters
        .iter()
        .filter(|c| !spectrum.cluster_is_truncated(c))
        .max_by(|a, b| weight(a).total_cmp(&weight(b)))
        .ok_or_else(|| Error::InvalidRequest("no complete cluster to project the probe on".into()))?
        .clone();
    let mut p = vec![0.0; mg.len()];
    for &j in &best {
        let c = coeff(j);
        p.iter_mut().zip(&spectrum.eigenvectors[j]).for_each(|(pi, xi)| *pi += c * xi);
    }
    if p.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidRequest(format!("probe {source} is M-orthogonal to every cluster")));
    }
    Ok((best, op.extend(&p)))
}

/// Builds the mesh, solves and analyses the tested eigenfunctions.
pub fn prepare(inst: &Instance) -> Result<InstanceRun> {
    if inst.count == 0 {
        return Err(Error::Config(format!("instance {}: count must be at least 1", inst.name)));
    }
    let mesh = inst.mesh()?;
    let phi = inst.phi.build(mesh.dim())?;
    let h = inst.h.as_ref().map(|s| s.build(mesh.dim())).transpose()?;
    let op = assemble(&mesh, &phi, h.as_ref(), inst.problem)?;
    let spectrum = solve_complete(&op, inst.count.min(op.num_dofs() - 1), inst.tol, inst.seed)?;
    let count = inst.count.min(spectrum.len());
    let mut functions = Vec::new();
    for i in 0..count {
        let cluster = spectrum.cluster_of(i).expect("every index is clustered").to_vec();
        let analysis = analyze(&mesh, &op.extend(&spectrum.eigenvectors[i]), Some(i), &inst.nodal)?;
        functions.push(TestedFunction {
            label: format!("f{i}"),
            cluster: cluster.clone(),
            analysis,
        });
        if cluster.len() > 1 && cluster[0] == i {
            for (r, basis) in spectrum.rotations(&cluster, inst.rotations, inst.seed).into_iter().enumerate() {
                for (j, v) in basis.iter().enumerate() {
                    functions.push(TestedFunction {
                        label: format!("f{}-{} rotation {r} vector {j}", cluster[0], cluster[cluster.len() - 1]),
                        cluster: cluster.clone(),
                        analysis: analyze(&mesh, &op.extend(v), None, &inst.nodal)?,
                    });
                }
            }
        }
    }
    if let Some(source) = &inst.probe {
        let (cluster, u) = probe_function(&mesh, &op, &spectrum, source)?;
        functions.push(TestedFunction {
            label: format!("probe {source}"),
            cluster,
            analysis: analyze(&mesh, &u, None, &inst.nodal)?,
        });
    }
    Ok(InstanceRun {
        mesh,
        phi,
        h,
        op,
        spectrum,
        functions,
    })
}

pub fn check_orthogonality_and_basics(instance: &str, run: &InstanceRun, tol: f64) -> Vec<CheckRecord> {
    let (s, op) = (&run.spectrum, &run.op);
    let mut out = Vec::new();
    let mx: Vec<Vec<f64>> = s.eigenvectors.iter().map(|x| op.mass.mul_vec(x)).collect();
    let mut worst: f64 = 0.0;
    for (i, xi) in s.eigenvectors.iter().enumerate() {
        for (j, mxj) in mx.iter().enumerate() {
            let g: f64 = xi.iter().zip(mxj).map(|(a, b)| a * b).sum();
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    out.push(
        CheckRecord::new(CheckKind::Basics, instance, "eigenvectors", "max |x_i^T M x_j - delta_ij| <= 1e-8")
            .with("max_deviation", worst)
            .judged(1e-8 - worst),
    );
    let a = op.operator_matrix();
    let res = s
        .eigenvalues
        .iter()
        .zip(&s.eigenvectors)
        .map(|(&l, x)| relative_residual(&a, &op.mass, l, x))
        .fold(0.0, f64::max);
    out.push(
        CheckRecord::new(CheckKind::Basics, instance, "eigenpairs", "max relative residual <= requested tolerance")
            .with("max_residual", res)
            .with("tolerance", tol)
            .judged(tol - res),
    );
    match s.problem_kind {
        ProblemKind::Closed => {
            let x0 = &s.eigenvectors[0];
            let mean = x0.iter().sum::<f64>() / x0.len() as f64;
            let var = x0.iter().map(|x| (x / mean - 1.0).powi(2)).sum::<f64>() / x0.len() as f64;
            out.push(
                CheckRecord::new(CheckKind::Basics, instance, "f0", "zero mode is constant: variance of x/mean(x) <= 1e-8")
                    .with("lambda0", s.eigenvalues[0])
                    .with("variance", var)
                    .judged(1e-8 - var),
            );
            let ones = vec![1.0; op.num_dofs()];
            let r = op.stiffness.mul_vec(&ones).iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            let scale = op.stiffness.norm_inf();
            out.push(
                CheckRecord::new(CheckKind::Basics, instance, "stiffness", "|A 1|_inf <= 1e-12 * max row sum |A|")
                    .with("residual", r)
                    .with("row_scale", scale)
                    .judged(1e-12 * scale - r),
            );
        }
        ProblemKind::Dirichlet => {
            let size = s.cluster_of(0).map_or(0, <[usize]>::len);
            out.push(
                CheckRecord::new(CheckKind::Basics, instance, "lambda1", "first Dirichlet eigenvalue is simple")
                    .with("cluster_size", size as f64)
                    .judged(1.0 - size as f64),
            );
            if let Some(f) = run.functions.iter().find(|f| f.analysis.function_index == Some(0)) {
                let d = f.analysis.domain_count as f64;
                out.push(
                    CheckRecord::new(CheckKind::Basics, instance, "f0", "first Dirichlet eigenfunction is sign-definite")
                        .with("domain_count", d)
                        .judged(if d == 1.0 { 0.0 } else { -(d - 1.0).abs() }),
                );
            }
        }
    }
    out
}

pub fn check_reference(instance: &str, spectrum: &Spectrum, exact: &[f64], rel_tol: f64) -> Vec<CheckRecord> {
    let first_nonzero = exact.iter().copied().find(|&x| x > 0.0).unwrap_or(1.0);
    exact
        .iter()
        .zip(&spectrum.eigenvalues)
        .enumerate()
        .map(|(i, (&e, &l))| {
            let r = CheckRecord::new(CheckKind::Reference, instance, format!("lambda index {i}"), "").with("computed", l).with("exact", e);
            if e == 0.0 {
                let err = l.abs() / first_nonzero;
                CheckRecord {
                    assertion: format!("|lambda| <= {rel_tol} * (first nonzero exact eigenvalue)"),
                    ..r.with("scaled_error", err).judged(rel_tol - err)
                }
            } else {
                let err = (l - e).abs() / e;
                CheckRecord {
                    assertion: format!("|lambda - exact| / exact <= {rel_tol}"),
                    ..r.with("relative_error", err).judged(rel_tol - err)
                }
            }
        })
        .collect()
}

/// Nodal domain counts against k (Dirichlet, 1-based) or k+1 (closed, 0-based), using the
/// largest index of each eigenvalue cluster. Both reduce to `top_index + 1` in 0-based terms.
pub fn check_courant(instance: &str, functions: &[TestedFunction], kind: ProblemKind) -> Vec<CheckRecord> {
    let assertion = match kind {
        ProblemKind::Dirichlet => "domain_count <= k (1-based k, largest index of the cluster)",
        ProblemKind::Closed => "domain_count <= k + 1 (0-based k, largest index of the cluster)",
    };
    functions
        .iter()
        .map(|f| {
            let bound = f.top_index() + 1;
            let n = f.analysis.domain_count;
            CheckRecord::new(CheckKind::Courant, instance, f.label.clone(), assertion)
                .with("cluster_first", f.first_index() as f64)
                .with("cluster_last", f.top_index() as f64)
                .with("domain_count", n as f64)
                .with("bound", bound as f64)
                .judged(bound as f64 - n as f64)
        })
        .collect()
}

/// Dirichlet solves on each nodal domain of eigenfunction `index`, compared with λ_index.
/// Domains are cut out along the zero set of the interpolant (see [`domain_mesh`]).
#[allow(clippy::too_many_arguments)]
pub fn check_nodal_domain_eigenvalue(
    instance: &str,
    run: &InstanceRun,
    index: usize,
    analysis: &NodalAnalysis,
    tolerance: f64,
    tol: f64,
    seed: u64,
) -> Result<Vec<CheckRecord>> {
    let lambda = run.spectrum.eigenvalues[index];
    let cluster = run.spectrum.cluster_of(index).expect("clustered");
    let u = run.op.extend(&run.spectrum.eigenvectors[index]);
    let mut out = Vec::new();
    let assertion = format!("|lambda1(D) - lambda_k| / lambda_k <= {tolerance:.4}");
    for d in 0..analysis.domain_count {
        let subject = format!("f{index} domain {d}");
        let rec = CheckRecord::new(CheckKind::NodalDomainEigenvalue, instance, subject, assertion.clone())
            .with("index", index as f64)
            .with("cluster_first", cluster[0] as f64)
            .with("cluster_last", cluster[cluster.len() - 1] as f64)
            .with("lambda_k", lambda)
            .with("tolerance", tolerance);
        let sub = match domain_mesh(&run.mesh, &u, analysis, d) {
            Ok(m) => m,
            Err(Error::InvalidSelection(msg)) => {
                out.push(rec.with_status(Status::Skipped, format!("under-resolved: {msg}")));
                continue;
            }
            Err(e) => return Err(e),
        };
        let interior = (0..sub.num_vertices()).filter(|&v| !sub.is_boundary(v)).count();
        let rec = rec.with("interior_vertices", interior as f64).with("area", sub.total_area());
        if interior < MIN_DOMAIN_INTERIOR {
            out.push(rec.with_status(Status::Skipped, format!("under-resolved: {interior} interior vertices")));
            continue;
        }
        let op = assemble(&sub, &run.phi, run.h.as_ref(), ProblemKind::Dirichlet)?;
        let lambda_d = smallest(&op, 1, tol, seed)?.eigenvalues[0];
        let err = (lambda_d - lambda).abs() / lambda.abs();
        out.push(rec.with("lambda_domain", lambda_d).with("relative_error", err).judged(tolerance - err));
    }
    Ok(out)
}

fn multiplicity_bound(genus: u32, i: usize) -> usize {
    let a = 2 * genus as usize + i;
    (a + 1) * (a + 2) / 2
}

pub fn check_multiplicity_bound(instance: &str, spectrum: &Spectrum, genus: u32, i_max: usize) -> Vec<CheckRecord> {
    (1..=i_max.min(spectrum.len().saturating_sub(1)))
        .map(|i| {
            let cluster = spectrum.cluster_of(i).expect("clustered");
            let bound = multiplicity_bound(genus, i);
            let rec = CheckRecord::new(
                CheckKind::MultiplicityBound,
                instance,
                format!("lambda index {i}"),
                "multiplicity <= (2g+i+1)(2g+i+2)/2",
            )
            .with("genus", f64::from(genus))
            .with("multiplicity", cluster.len() as f64)
            .with("bound", bound as f64);
            if spectrum.cluster_is_truncated(cluster) {
                rec.with_status(Status::Inconclusive, "cluster may continue past the computed eigenvalues")
            } else {
                rec.judged(bound as f64 - cluster.len() as f64)
            }
        })
        .collect()
}

/// Fitted vanishing orders against 2g + i, with i the smallest index of the function's cluster.
pub fn check_order_bound(instance: &str, functions: &[TestedFunction], genus: u32) -> Vec<CheckRecord> {
    functions
        .iter()
        .map(|f| {
            let bound = 2 * genus as usize + f.first_index();
            let confident: Vec<usize> = f.analysis.confident_points().filter_map(|p| p.order).collect();
            let candidates = f.analysis.singular_points.len();
            let max_order = confident.iter().copied().max().unwrap_or(0);
            let rec = CheckRecord::new(CheckKind::OrderBound, instance, f.label.clone(), "every confident order N <= 2g + i")
                .with("bound", bound as f64)
                .with("candidates", candidates as f64)
                .with("confident", confident.len() as f64)
                .with("max_order", max_order as f64);
            if confident.is_empty() && candidates > 0 {
                rec.with_status(Status::Inconclusive, "no candidate fitted with confidence")
            } else {
                rec.judged(bound as f64 - max_order as f64)
            }
        })
        .collect()
}

pub fn check_equiangular(instance: &str, functions: &[TestedFunction]) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    for f in functions {
        for p in f.analysis.confident_points() {
            let n = p.order.expect("confident points have an order");
            let dev = max_angle_deviation(&p.branch_angles, n);
            let mut rec = CheckRecord::new(
                CheckKind::Equiangular,
                instance,
                format!("{} at vertex {}", f.label, p.vertex),
                format!("consecutive branch angles within {EQUIANGULAR_TOL_DEG} degrees of pi/N"),
            )
            .with("order", n as f64)
            .with("branches", p.branch_angles.len() as f64)
            .with("max_deviation_deg", dev)
            .with("fit_residual", p.fit_residual);
            for (k, x) in p.location.iter().enumerate() {
                rec = rec.with(&format!("location_{k}"), *x);
            }
            out.push(rec.judged(EQUIANGULAR_TOL_DEG - dev));
        }
    }
    out
}

/// On closed surfaces the nodal set has no loose ends.
pub fn check_nodal_chains(instance: &str, mesh: &TriMesh, functions: &[TestedFunction]) -> Vec<CheckRecord> {
    functions
        .iter()
        .map(|f| {
            let ends = f.analysis.open_ends(mesh);
            CheckRecord::new(CheckKind::NodalChains, instance, f.label.clone(), "nodal set has no odd-degree interior nodes")
                .with("open_ends", ends as f64)
                .with("polylines", f.analysis.segments.len() as f64)
                .judged(-(ends as f64))
        })
        .collect()
}

/// Largest |a_i − b_i| / |a_i|. Entries below 1e-8·max|a| (zero modes) are measured against max|a|.
pub fn spectral_distance(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0, |m: f64, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / if x.abs() < 1e-8 * scale { scale } else { x.abs() })
        .fold(if a.len() == b.len() { 0.0 } else { f64::INFINITY }, f64::max)
}

pub fn check_shift_and_reduction(instance: &str, run: &InstanceRun, shift: f64, tol: f64, seed: u64) -> Result<Vec<CheckRecord>> {
    let k = run.spectrum.len();
    let kind = run.spectrum.problem_kind;
    let solve = |phi: &ScalarField| -> Result<Vec<f64>> {
        Ok(smallest(&assemble(&run.mesh, phi, run.h.as_ref(), kind)?, k, tol, seed)?.eigenvalues)
    };
    let mut out = Vec::new();
    let shifted = solve(&run.phi.clone().offset(shift))?;
    let d = spectral_distance(&run.spectrum.eigenvalues, &shifted);
    out.push(
        CheckRecord::new(CheckKind::ShiftAndReduction, instance, format!("phi + {shift}"), "spectra of phi and phi + c agree to relative 1e-12")
            .with("shift", shift)
            .with("relative_difference", d)
            .judged(1e-12 - d),
    );
    let dim = run.mesh.dim();
    let (c, base) = if run.phi.is_constant() {
        (run.phi.eval(&vec![0.0; dim])?, run.spectrum.eigenvalues.clone())
    } else {
        (3.0, solve(&ScalarField::constant(3.0, dim)?)?)
    };
    let plain = solve(&ScalarField::zero(dim))?;
    let d = spectral_distance(&plain, &base);
    out.push(
        CheckRecord::new(CheckKind::ShiftAndReduction, instance, format!("phi = {c}"), "constant phi gives the unweighted spectrum to relative 1e-12")
            .with("constant", c)
            .with("relative_difference", d)
            .judged(1e-12 - d),
    );
    Ok(out)
}

/// Least-squares slope of log(error) against log(mean edge).
pub fn loglog_slope(h: &[f64], err: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// λ₁ over uniform refinements: non-increasing (1e-10 slack) with O(h²) error.
pub fn check_convergence(instance: &str, inst: &Instance, mesh: &TriMesh, phi: &ScalarField) -> Result<Vec<CheckRecord>> {
    let rec = |subject: &str, assertion: &str| CheckRecord::new(CheckKind::Convergence, instance, subject, assertion);
    let index = usize::from(inst.problem == ProblemKind::Closed);
    let constant = phi.is_constant() && inst.h.is_none() && exact_applies(inst, mesh);
    let Some(exact) = reference::spectrum(&inst.shape, index + 1).filter(|_| constant).map(|v| v[index]) else {
        return Ok(vec![rec("lambda index 0", "convergence study").with_status(Status::Skipped, "no closed-form reference for this instance")]);
    };
    let mut meshes = vec![mesh.clone()];
    for _ in 0..inst.convergence_levels {
        meshes.push(refine(meshes.last().expect("nonempty"))?);
    }
    let (mut hs, mut lams) = (Vec::new(), Vec::new());
    for m in &meshes {
        let op = assemble(m, phi, None, inst.problem)?;
        lams.push(smallest(&op, index + 2, inst.tol, inst.seed)?.eigenvalues[index]);
        hs.push(m.mean_edge_length());
    }
    let errs: Vec<f64> = lams.iter().map(|l| (l - exact).abs()).collect();
    let slope = loglog_slope(&hs, &errs);
    let rise = lams.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut a = rec(&format!("lambda index {index}"), "log-log slope of |lambda_h - lambda| is 2.0 +- 0.3")
        .with("slope", slope)
        .with("exact", exact);
    let mut b = rec(&format!("lambda index {index}"), "lambda_h non-increasing under refinement (1e-10 slack)").with("max_increase", rise);
    for (l, (h, v)) in hs.iter().zip(&lams).enumerate() {
        a = a.with(&format!("h_{l}"), *h).with(&format!("error_{l}"), errs[l]);
        b = b.with(&format!("lambda_{l}"), *v);
    }
    let b = if matches!(inst.shape, Shape::Sphere { .. }) {
        // Re-projected vertices make the refined spaces non-nested.
        b.with_status(Status::Skipped, "refined sphere spaces are not nested")
    } else {
        b.judged(1e-10 * lams[0].abs() - rise)
    };
    Ok(vec![a.judged(0.3 - (slope - 2.0).abs()), b])
}

fn exact_applies(inst: &Instance, mesh: &TriMesh) -> bool {
    matches!(
        (inst.problem, mesh.is_closed()),
        (ProblemKind::Dirichlet, false) | (ProblemKind::Closed, true)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub instance: String,
    pub shape: Shape,
    pub mesh_h: f64,
    pub refinements: u32,
    pub vertices: usize,
    pub triangles: usize,
    pub mean_edge: f64,
    pub mesh_sha256: String,
    pub phi: FieldSpec,
    pub h: Option<FieldSpec>,
    pub problem_kind: ProblemKind,
    pub eigenpairs: usize,
    pub tested_functions: usize,
    pub rotations: usize,
    pub nodal: NodalOptions,
    pub solver: SolverReport,
}

/// Runs the enabled checks of one instance.
pub fn run_instance(inst: &Instance, lemma: &LemmaTolerance) -> Result<(Vec<CheckRecord>, Provenance)> {
    run_checks(inst, &prepare(inst)?, lemma)
}

/// Runs the enabled checks of one instance on an already prepared run.
pub fn run_checks(inst: &Instance, run: &InstanceRun, lemma: &LemmaTolerance) -> Result<(Vec<CheckRecord>, Provenance)> {
    let name = inst.name.as_str();
    let kind = inst.problem;
    let mut out = Vec::new();
    for check in CheckKind::ALL.into_iter().filter(|&c| inst.enabled(c)) {
        match check {
            CheckKind::Basics => out.extend(check_orthogonality_and_basics(name, run, inst.tol)),
            CheckKind::Reference => {
                let n = inst.reference_count.min(run.spectrum.len());
                let constant = run.phi.is_constant() && run.h.is_none() && exact_applies(inst, &run.mesh);
                match reference::spectrum(&inst.shape, n).filter(|_| constant && n > 0) {
                    Some(exact) => out.extend(check_reference(name, &run.spectrum, &exact, inst.reference_tol)),
                    None if n > 0 => out.push(
                        CheckRecord::new(CheckKind::Reference, name, "spectrum", "agreement with the closed-form spectrum")
                            .with_status(Status::Skipped, "no closed-form spectrum for a non-constant weight or potential"),
                    ),
                    None => {}
                }
            }
            CheckKind::Courant => out.extend(check_courant(name, &run.functions, kind)),
            CheckKind::NodalDomainEigenvalue if kind == ProblemKind::Dirichlet => {
                let tolerance = lemma.at(run.mesh.mean_edge_length());
                for i in 0..inst.lemma_count.min(inst.count).min(run.spectrum.len()) {
                    let f = run.functions.iter().find(|f| f.analysis.function_index == Some(i)).expect("basis functions are analysed");
                    out.extend(check_nodal_domain_eigenvalue(name, run, i, &f.analysis, tolerance, inst.tol, inst.seed)?);
                }
            }
            CheckKind::MultiplicityBound | CheckKind::OrderBound | CheckKind::NodalChains if kind == ProblemKind::Closed => {
                let Some(g) = run.mesh.genus() else { continue };
                out.extend(match check {
                    CheckKind::MultiplicityBound => check_multiplicity_bound(name, &run.spectrum, g, inst.i_max),
                    CheckKind::OrderBound => check_order_bound(name, &run.functions, g),
                    _ => check_nodal_chains(name, &run.mesh, &run.functions),
                });
            }
            CheckKind::Equiangular => out.extend(check_equiangular(name, &run.functions)),
            CheckKind::ShiftAndReduction => out.extend(check_shift_and_reduction(name, run, inst.shift, inst.tol, inst.seed)?),
            CheckKind::Convergence => out.extend(check_convergence(name, inst, &run.mesh, &run.phi)?),
            _ => {}
        }
    }
    let provenance = Provenance {
        instance: inst.name.clone(),
        shape: inst.shape.clone(),
        mesh_h: inst.mesh_h,
        refinements: inst.refinements,
        vertices: run.mesh.num_vertices(),
        triangles: run.mesh.num_triangles(),
        mean_edge: run.mesh.mean_edge_length(),
        mesh_sha256: mesh_hash(&run.mesh)?,
        phi: inst.phi.clone(),
        h: inst.h.clone(),
        problem_kind: kind,
        eigenpairs: run.spectrum.len(),
        tested_functions: run.functions.len(),
        rotations: inst.rotations,
        nodal: inst.nodal.clone(),
        solver: run.spectrum.solver_report.clone(),
    };
    Ok((out, provenance))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub summary: Summary,
    pub index_convention: String,
    pub lemma_tolerance: LemmaTolerance,
    pub provenance: Vec<Provenance>,
    pub records: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn new(records: Vec<CheckRecord>, provenance: Vec<Provenance>, lemma: LemmaTolerance) -> Self {
        let mut summary = Summary {
            total: records.len(),
            ..Summary::default()
        };
        for r in &records {
            match r.status {
                Status::Pass => summary.pass += 1,
                Status::Fail => summary.fail += 1,
                Status::Skipped => summary.skipped += 1,
                Status::Inconclusive => summary.inconclusive += 1,
            }
        }
        VerificationReport {
            summary,
            index_convention: INDEX_CONVENTION.to_string(),
            lemma_tolerance: lemma,
            provenance,
            records,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.fail == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| r.status == Status::Fail)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(crate::json::to_vec(self)?)
    }

    /// Plain-text table: one row per (instance, check) with counts and the smallest margin,
    /// followed by every failed record.
    pub fn table(&self) -> String {
        let mut groups: Vec<((String, CheckKind), [usize; 4], f64)> = Vec::new();
        for r in &self.records {
            let key = (r.instance.clone(), r.check);
            if groups.last().is_none_or(|g| g.0 != key) {
                groups.push((key, [0; 4], f64::INFINITY));
            }
            let g = groups.last_mut().expect("just pushed");
            g.1[r.status as usize] += 1;
            if let Some(m) = r.margin {
                g.2 = g.2.min(m);
            }
        }
        let mut s = String::new();
        let _ = writeln!(s, "{:<28} {:<24} {:>6} {:>6} {:>6} {:>6}  {:>12}", "instance", "check", "pass", "fail", "skip", "inconc", "min margin");
        for ((inst, check), c, m) in &groups {
            let margin = if m.is_finite() { format!("{m:.3e}") } else { "-".into() };
            let _ = writeln!(s, "{inst:<28} {:<24} {:>6} {:>6} {:>6} {:>6}  {margin:>12}", check.name(), c[0], c[1], c[2], c[3]);
        }
        let sm = &self.summary;
        let _ = writeln!(
            s,
            "total {} records: {} pass, {} fail, {} skipped, {} inconclusive",
            sm.total, sm.pass, sm.fail, sm.skipped, sm.inconclusive
        );
        for r in self.failures() {
            let _ = writeln!(s, "FAIL {} {} [{}]: {} {:?}", r.instance, r.check.name(), r.subject, r.assertion, r.measured);
        }
        s
    }
}

/// Runs every instance in order and assembles the report.
pub fn verify_suite(instances: &[Instance], lemma: &LemmaTolerance) -> Result<VerificationReport> {
    let mut records = Vec::new();
    let mut provenance = Vec::new();
    for inst in instances {
        let (r, p) = run_instance(inst, lemma)?;
        records.extend(r);
        provenance.push(p);
    }
    Ok(VerificationReport::new(records, provenance, *lemma))
}

/// The three canonical weights for a shape: 0, radial_quadratic(1) (periodic substitute
/// 2 − cos x − cos y on the flat torus) and gaussian_well(2, 0.5) centred in the domain.
pub fn canonical_weights(shape: &Shape) -> Vec<(&'static str, FieldSpec)> {
    let center: Vec<f64> = match *shape {
        Shape::Rectangle { width, height } => vec![0.5 * width, 0.5 * height],
        Shape::Disk { .. } | Shape::Annulus { .. } => vec![0.0, 0.0],
        Shape::Sphere { radius } => vec![0.0, 0.0, radius],
        Shape::FlatTorus { lx, ly } => vec![0.5 * lx, 0.5 * ly],
    };
    let radial = match shape {
        Shape::FlatTorus { lx, ly } => FieldSpec::expr(format!("2 - cos({}*x) - cos({}*y)", TAU / lx, TAU / ly)),
        _ => FieldSpec::builtin("radial_quadratic", &[("c", ParamValue::Scalar(1.0))]),
    };
    vec![
        ("phi0", FieldSpec::constant(0.0)),
        ("radial", radial),
        (
            "gaussian",
            FieldSpec::builtin(
                "gaussian_well",
                &[
                    ("amplitude", ParamValue::Scalar(2.0)),
                    ("sigma", ParamValue::Scalar(0.5)),
                    ("center", ParamValue::Vector(center)),
                ],
            ),
        ),
    ]
}

/// Square and disk (Dirichlet, first 10 eigenfunctions), sphere and flat torus (closed, first 8),
/// each with the three canonical weights, plus a convergence study on a coarse square.
pub fn canonical_suite() -> Vec<Instance> {
    let mut out = Vec::new();
    let shapes = [
        ("square", Shape::Rectangle { width: 1.0, height: 1.0 }, 0.02, ProblemKind::Dirichlet, 10, 3, 0.01, None),
        ("disk", Shape::Disk { radius: 1.0 }, 0.02, ProblemKind::Dirichlet, 10, 3, 0.01, None),
        ("sphere", Shape::Sphere { radius: 1.0 }, 0.04, ProblemKind::Closed, 8, 9, 0.02, Some("x*y")),
        ("torus", Shape::FlatTorus { lx: TAU, ly: TAU }, 0.02, ProblemKind::Closed, 8, 9, 0.02, Some("sin(x)*sin(y)")),
    ];
    for (name, shape, mesh_h, kind, count, reference_count, reference_tol, probe) in shapes {
        for (label, phi) in canonical_weights(&shape) {
            let mut inst = Instance::new(&format!("{name}/{label}"), shape.clone(), mesh_h, phi, kind, count);
            inst.reference_count = reference_count;
            inst.reference_tol = reference_tol;
            if label == "phi0" {
                inst.probe = probe.map(str::to_string);
            }
            if name == "torus" {
                // Each extra solve on the 10^5-vertex torus costs as much as the instance itself.
                inst.checks.retain(|&c| c != CheckKind::ShiftAndReduction);
            }
            out.push(inst);
        }
    }
    let mut conv = Instance::new(
        "square/convergence",
        Shape::Rectangle { width: 1.0, height: 1.0 },
        0.1,
        FieldSpec::constant(0.0),
        ProblemKind::Dirichlet,
        1,
    );
    conv.checks = vec![CheckKind::Convergence];
    out.push(conv);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(shape: Shape, kind: ProblemKind, h: f64) -> Instance {
        let mut inst = Instance::new("t", shape, h, FieldSpec::constant(0.0), kind, 4);
        inst.reference_count = 3;
        inst.reference_tol = 0.05;
        inst
    }

    #[test]
    fn multiplicity_bound_values() {
        assert_eq!(multiplicity_bound(0, 1), 3);
        assert_eq!(multiplicity_bound(1, 1), 10);
        assert_eq!(multiplicity_bound(1, 5), 36);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((loglog_slope(&h, &e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_distance_handles_zero_modes() {
        assert_eq!(spectral_distance(&[0.0, 2.0], &[0.0, 2.0]), 0.0);
        assert!(spectral_distance(&[1e-14, 2.0], &[2e-17, 2.0]) < 1e-14);
        assert!(spectral_distance(&[1.0], &[1.0, 2.0]).is_infinite());
    }

    #[test]
    fn coarse_square_passes_all_checks() {
        let inst = small(Shape::Rectangle { width: 1.0, height: 1.0 }, ProblemKind::Dirichlet, 0.05);
        let (records, prov) = run_instance(&inst, &LemmaTolerance { c: 4.0, floor: 0.01 }).unwrap();
        let report = VerificationReport::new(records, vec![prov], LemmaTolerance::default());
        assert!(report.passed(), "{}", report.table());
        for c in [CheckKind::Basics, CheckKind::Reference, CheckKind::Courant, CheckKind::NodalDomainEigenvalue, CheckKind::ShiftAndReduction] {
            assert!(report.records.iter().any(|r| r.check == c && r.status == Status::Pass), "{c:?}");
        }
        assert!(!report.records.iter().any(|r| r.check == CheckKind::MultiplicityBound));
        assert_eq!(report.provenance[0].mesh_sha256.len(), 64);
    }

    #[test]
    fn coarse_sphere_closed_checks() {
        let mut inst = small(Shape::Sphere { radius: 1.0 }, ProblemKind::Closed, 0.15);
        inst.reference_count = 4;
        inst.probe = Some("x*y".into());
        let (records, _) = run_instance(&inst, &LemmaTolerance::default()).unwrap();
        let report = VerificationReport::new(records, vec![], LemmaTolerance::default());
        assert!(report.passed(), "{}", report.table());
        let m = report.records.iter().find(|r| r.check == CheckKind::MultiplicityBound).unwrap();
        assert_eq!(m.measured["multiplicity"], 3.0);
        assert_eq!(m.margin, Some(0.0));
        assert!(!report.records.iter().any(|r| r.check == CheckKind::NodalDomainEigenvalue));
    }

    #[test]
    fn failed_records_are_reported() {
        let f = |n| TestedFunction {
            label: "f".into(),
            cluster: vec![1],
            analysis: NodalAnalysis {
                domain_count: n,
                ..analyze(&crate::mesh::rectangle_grid(1.0, 1.0, 2, 2).unwrap(), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], None, &NodalOptions::default()).unwrap()
            },
        };
        let recs = check_courant("x", &[f(2), f(3)], ProblemKind::Dirichlet);
        assert_eq!(recs[0].status, Status::Pass);
        assert_eq!(recs[1].status, Status::Fail);
        assert_eq!(recs[1].margin, Some(-1.0));
        let report = VerificationReport::new(recs, vec![], LemmaTolerance::default());
        assert!(!report.passed());
        assert!(report.table().contains("FAIL x courant"));
    }

    #[test]
    fn instance_config_defaults() {
        let inst: Instance = serde_json::from_str(
            r#"{"name": "s", "shape": {"shape": "rectangle", "width": 1, "height": 1}, "mesh_h": 0.1, "problem": "dirichlet"}"#,
        )
        .unwrap();
        assert_eq!(inst.count, 10);
        assert_eq!(inst.rotations, 5);
        assert!(!inst.checks.contains(&CheckKind::Convergence));
        assert!(serde_json::from_str::<Instance>(r#"{"name": "s", "bogus": 1}"#).is_err());
    }
}
