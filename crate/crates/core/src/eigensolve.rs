//! Smallest eigenpairs of (A + H) x = λ M x by shift-invert block Krylov iteration.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Llt;
use faer::{Conj, Mat, Side};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, ProblemKind, WeightedOperator};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mesh::SubmeshExtraction;
use crate::sparse::CsrMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;
/// Below this many dofs the problem is solved densely.
const DENSE_LIMIT: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl SolverOptions {
    pub fn new(k: usize, tol: f64, seed: u64) -> Self {
        SolverOptions {
            k,
            tol,
            seed,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: String,
    pub iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub shift: f64,
    pub block_size: usize,
    pub factorization_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    pub cluster_tol: f64,
    pub problem_kind: ProblemKind,
    pub solver_report: SolverReport,
    /// Dof coefficient vectors, M-orthonormal. Written to a separate file.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Sidecar file holding the eigenvectors of a [`Spectrum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvectorFile {
    pub dof_map: Vec<Option<usize>>,
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Maximal runs with |λ_{i+1} − λ_i| / max(1, |λ_i|) < rel_tol.
pub fn cluster(eigenvalues: &[f64], rel_tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in eigenvalues.iter().enumerate() {
        match out.last_mut() {
            Some(run) if (l - eigenvalues[i - 1]).abs() / eigenvalues[i - 1].abs().max(1.0) < rel_tol => run.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

pub fn default_cluster_tol(residuals: &[f64]) -> f64 {
    (10.0 * residuals.iter().copied().fold(0.0, f64::max)).max(1e-8)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// ‖A x − λ M x‖₂ / ((‖A‖₁ + |λ|‖M‖₁) ‖x‖₂)
pub fn relative_residual(a: &CsrMatrix, m: &CsrMatrix, lambda: f64, x: &[f64]) -> f64 {
    let (ax, mx) = (a.mul_vec(x), m.mul_vec(x));
    let r: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p - lambda * q).collect();
    norm2(&r) / ((a.norm_1() + lambda.abs() * m.norm_1()) * norm2(x))
}

/// Makes the largest-magnitude entry positive.
fn fix_sign(x: &mut [f64]) {
    let mut best = 0;
    for i in 1..x.len() {
        if x[i].abs() > x[best].abs() {
            best = i;
        }
    }
    if x[best] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// M-orthonormalizes `cols` against `basis` (whose M-images are `mbasis`) and each other,
/// with two Gram-Schmidt passes. Nearly dependent columns are dropped.
fn m_orthonormalize(m: &CsrMatrix, basis: &mut Vec<Vec<f64>>, mbasis: &mut Vec<Vec<f64>>, cols: Vec<Vec<f64>>) {
    for mut v in cols {
        let before = dot(&v, &m.mul_vec(&v)).max(0.0).sqrt();
        if before == 0.0 || !before.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for (q, mq) in basis.iter().zip(mbasis.iter()) {
                let c = dot(&v, mq);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let mv = m.mul_vec(&v);
        let after = dot(&v, &mv).max(0.0).sqrt();
        if after <= 1e-10 * before {
            continue;
        }
        basis.push(v.iter().map(|x| x / after).collect());
        mbasis.push(mv.iter().map(|x| x / after).collect());
    }
}

struct ShiftInvert {
    llt: Llt<usize, f64>,
    shift: f64,
    attempts: usize,
}

fn factor_shifted(a: &CsrMatrix, m: &CsrMatrix, sigma0: f64) -> Result<ShiftInvert> {
    let mut last = String::new();
    for j in 0..3 {
        let sigma = sigma0 * 100f64.powi(j);
        let shifted = a.add_scaled(m, -sigma).to_faer()?;
        match shifted.sp_cholesky(Side::Lower) {
            Ok(llt) => {
                return Ok(ShiftInvert {
                    llt,
                    shift: sigma,
                    attempts: j as usize + 1,
                })
            }
            Err(e) => last = format!("{e:?} at shift {sigma:e}"),
        }
    }
    Err(Error::Factorization(last))
}

impl ShiftInvert {
    /// (A − σM)⁻¹ M applied to each column.
    fn apply(&self, m: &CsrMatrix, cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = m.n();
        let mut rhs = Mat::<f64>::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            let mc = m.mul_vec(c);
            for i in 0..n {
                rhs[(i, j)] = mc[i];
            }
        }
        self.llt.solve_in_place_with_conj(Conj::No, rhs.as_mut());
        (0..cols.len()).map(|j| (0..n).map(|i| rhs[(i, j)]).collect()).collect()
    }
}

fn sorted_eigen(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Slightly below the spectrum: trace(A)/trace(M) grows like h⁻², so the factor is kept small
/// enough that σ stays well under the lowest eigenvalues on fine meshes.
fn shift_for(op: &WeightedOperator) -> f64 {
    let scale = op.stiffness.trace() / op.mass.trace();
    op.h_min.min(0.0) - 1e-6 * scale.max(f64::MIN_POSITIVE)
}

/// k smallest eigenpairs with the default iteration budget.
pub fn smallest(op: &WeightedOperator, k: usize, tol: f64, seed: u64) -> Result<Spectrum> {
    smallest_with(op, &SolverOptions::new(k, tol, seed))
}

pub fn smallest_with(op: &WeightedOperator, opts: &SolverOptions) -> Result<Spectrum> {
    let n = op.num_dofs();
    if opts.k == 0 || opts.k + 1 > n {
        return Err(Error::InvalidRequest(format!("k = {} must lie in 1..={}", opts.k, n.saturating_sub(1))));
    }
    solve_unchecked(op, opts)
}

fn solve_unchecked(op: &WeightedOperator, opts: &SolverOptions) -> Result<Spectrum> {
    if !(opts.tol > 0.0 && opts.tol <= 1e-4) {
        return Err(Error::InvalidRequest(format!("tol = {} must lie in (0, 1e-4]", opts.tol)));
    }
    let a = op.operator_matrix();
    let n = op.num_dofs();
    let k = opts.k;
    let guard = (k / 2).max(4);
    let p = (k + guard).min(n);
    let (values, mut vectors, report) = if n <= DENSE_LIMIT || 3 * p >= n {
        dense_solve(&a, &op.mass, k, opts)?
    } else {
        krylov_solve(&a, &op.mass, k, p, opts, shift_for(op))?
    };
    let residuals: Vec<f64> = values.iter().zip(&vectors).map(|(l, x)| relative_residual(&a, &op.mass, *l, x)).collect();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(Error::NotConverged {
            iterations: report.iterations,
            worst,
            residuals,
        });
    }
    vectors.iter_mut().for_each(|x| fix_sign(x));
    let cluster_tol = default_cluster_tol(&residuals);
    Ok(Spectrum {
        clusters: cluster(&values, cluster_tol),
        eigenvalues: values,
        residuals,
        cluster_tol,
        problem_kind: op.problem_kind,
        solver_report: report,
        eigenvectors: vectors,
    })
}

type Pairs = (Vec<f64>, Vec<Vec<f64>>, SolverReport);

fn dense_solve(a: &CsrMatrix, m: &CsrMatrix, k: usize, opts: &SolverOptions) -> Result<Pairs> {
    let n = a.n();
    let ad = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
    let md = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
    let chol = md
        .cholesky()
        .ok_or_else(|| Error::Factorization("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_a = l.solve_lower_triangular(&ad).expect("nonsingular");
    let c = l.solve_lower_triangular(&linv_a.transpose()).expect("nonsingular");
    let c = (&c + c.transpose()) * 0.5;
    let (values, z) = sorted_eigen(c);
    let lt = l.transpose();
    let mut vecs = Vec::with_capacity(k);
    for j in 0..k.min(n) {
        let x = lt.solve_upper_triangular(&z.column(j).into_owned()).expect("nonsingular");
        vecs.push(x.iter().copied().collect());
    }
    let report = SolverReport {
        method: "dense".into(),
        iterations: 1,
        tolerance: opts.tol,
        seed: opts.seed,
        shift: 0.0,
        block_size: n,
        factorization_attempts: 1,
    };
    Ok((values[..k.min(n)].to_vec(), vecs, report))
}

fn krylov_solve(a: &CsrMatrix, m: &CsrMatrix, k: usize, p: usize, opts: &SolverOptions, sigma: f64) -> Result<Pairs> {
    let n = a.n();
    let si = factor_shifted(a, m, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let (a1, m1) = (a.norm_1(), m.norm_1());
    let mut best: Vec<f64> = vec![f64::INFINITY; k];
    for iter in 1..=opts.max_iterations {
        let b1 = si.apply(m, &x);
        let b2 = si.apply(m, &b1);
        let (mut basis, mut mbasis) = (Vec::with_capacity(3 * p), Vec::with_capacity(3 * p));
        // Highest powers first: they carry the wanted directions most strongly.
        m_orthonormalize(m, &mut basis, &mut mbasis, b2);
        m_orthonormalize(m, &mut basis, &mut mbasis, b1);
        m_orthonormalize(m, &mut basis, &mut mbasis, x);
        let d = basis.len();
        if d < k {
            return Err(Error::NotConverged {
                iterations: iter,
                worst: f64::INFINITY,
                residuals: best,
            });
        }
        let av: Vec<Vec<f64>> = basis.iter().map(|v| a.mul_vec(v)).collect();
        let mut g = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let s = 0.5 * (dot(&basis[i], &av[j]) + dot(&basis[j], &av[i]));
                g[(i, j)] = s;
                g[(j, i)] = s;
            }
        }
        let (theta, z) = sorted_eigen(g);
        let keep = p.min(d);
        let combine = |src: &[Vec<f64>], j: usize| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (r, v) in src.iter().enumerate() {
                let c = z[(r, j)];
                y.iter_mut().zip(v).for_each(|(yi, vi)| *yi += c * vi);
            }
            y
        };
        let ritz: Vec<Vec<f64>> = (0..keep).map(|j| combine(&basis, j)).collect();
        let mut res = Vec::with_capacity(k);
        for j in 0..k {
            let ay = combine(&av, j);
            let my = combine(&mbasis, j);
            let r: Vec<f64> = ay.iter().zip(&my).map(|(u, w)| u - theta[j] * w).collect();
            res.push(norm2(&r) / ((a1 + theta[j].abs() * m1) * norm2(&ritz[j])));
        }
        if res.iter().sum::<f64>() < best.iter().sum::<f64>() {
            best = res.clone();
        }
        if res.iter().all(|&r| r <= 0.5 * opts.tol) {
            let report = SolverReport {
                method: "shift_invert_block_krylov".into(),
                iterations: iter,
                tolerance: opts.tol,
                seed: opts.seed,
                shift: si.shift,
                block_size: p,
                factorization_attempts: si.attempts,
            };
            return Ok((theta[..k].to_vec(), ritz[..k].to_vec(), report));
        }
        x = ritz;
        while x.len() < p {
            x.push((0..n).map(|_| rng.sample(StandardNormal)).collect());
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        worst: best.iter().copied().fold(0.0, f64::max),
        residuals: best,
    })
}

fn orthogonal_matrix(size: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(size, size, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..size {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn recluster(&mut self, rel_tol: f64) {
        self.cluster_tol = rel_tol;
        self.clusters = cluster(&self.eigenvalues, rel_tol);
    }

    /// Cluster holding eigenvalue index `i`.
    pub fn cluster_of(&self, i: usize) -> Option<&[usize]> {
        self.clusters.iter().find(|c| c.contains(&i)).map(Vec::as_slice)
    }

    /// True when the cluster could continue past the computed eigenvalues.
    pub fn cluster_is_truncated(&self, cluster: &[usize]) -> bool {
        cluster.last() == Some(&(self.len() - 1))
    }

    /// `count` seeded random M-orthonormal bases of the eigenspace spanned by `cluster`.
    pub fn rotations(&self, cluster: &[usize], count: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let m = cluster.len();
        let n = self.eigenvectors.first().map_or(0, Vec::len);
        (0..count)
            .map(|_| {
                let q = orthogonal_matrix(m, &mut rng);
                (0..m)
                    .map(|j| {
                        let mut y = vec![0.0; n];
                        for (r, &idx) in cluster.iter().enumerate() {
                            let c = q[(r, j)];
                            y.iter_mut().zip(&self.eigenvectors[idx]).for_each(|(yi, xi)| *yi += c * xi);
                        }
                        y
                    })
                    .collect()
            })
            .collect()
    }

    pub fn eigenvector_file(&self, op: &WeightedOperator) -> EigenvectorFile {
        EigenvectorFile {
            dof_map: op.dof_map.clone(),
            eigenvectors: self.eigenvectors.clone(),
        }
    }
}

/// First `k` Dirichlet eigenpairs of a cut-out piece of a mesh, the same φ and h restricted to it.
pub fn solve_on_submesh(
    extraction: &SubmeshExtraction,
    phi: &ScalarField,
    h: Option<&ScalarField>,
    k: usize,
    tol: f64,
    seed: u64,
) -> Result<(Spectrum, WeightedOperator)> {
    let mesh = &extraction.submesh;
    let interior = (0..mesh.num_vertices()).filter(|&v| mesh.is_canonical(v) && !mesh.is_boundary(v)).count();
    if interior == 0 || mesh.is_closed() {
        return Err(Error::SubmeshTooSmall);
    }
    let op = assemble(mesh, phi, h, ProblemKind::Dirichlet)?;
    let k = k.min(op.num_dofs());
    let spectrum = solve_unchecked(&op, &SolverOptions::new(k, tol, seed))?;
    Ok((spectrum, op))
}
