//! P1 finite element assembly of the weighted stiffness, mass and potential matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mesh::{Point, TriMesh};
use crate::sparse::CsrMatrix;

/// Largest allowed spread of φ over the quadrature points.
pub const MAX_PHI_SPAN: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Dirichlet,
    Closed,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Dirichlet => "dirichlet",
            ProblemKind::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub lumped_mass: bool,
}

/// Discrete weak form on the retained degrees of freedom.
///
/// All three matrices carry the weight e^{-(φ - phi_shift)}; multiply by
/// [`WeightedOperator::weight_scale`] to recover the unshifted integrals.
#[derive(Debug, Clone)]
pub struct WeightedOperator {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub potential: Option<CsrMatrix>,
    /// Stored mesh vertex -> equation index.
    pub dof_map: Vec<Option<usize>>,
    pub problem_kind: ProblemKind,
    /// min φ over all quadrature points.
    pub phi_shift: f64,
    /// Lower bound of h over the quadrature points (0 without potential).
    pub h_min: f64,
    shifted_volume: f64,
}

/// Barycentric coordinates of the 3-point rule; each point has weight area/3.
const GAUSS: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

fn gauss_points(p: &[Point; 3], dim: usize) -> [Vec<f64>; 3] {
    GAUSS.map(|b| (0..dim).map(|k| b[0] * p[0][k] + b[1] * p[1][k] + b[2] * p[2][k]).collect())
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Local stiffness of the unweighted P1 element: (e_a · e_b) / (4·area),
/// e_a being the edge opposite vertex a.
pub fn local_stiffness(p: &[Point; 3]) -> [[f64; 3]; 3] {
    let e = [sub(&p[2], &p[1]), sub(&p[0], &p[2]), sub(&p[1], &p[0])];
    let n = {
        let (u, v) = (&e[2], &sub(&p[2], &p[0]));
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    };
    let area = 0.5 * dot(&n, &n).sqrt();
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            k[a][b] = dot(&e[a], &e[b]) / (4.0 * area);
            k[b][a] = k[a][b];
        }
    }
    k
}

/// Local mass with per-point weights w_q: Σ_q (area/3)·w_q·ψ_a(q)·ψ_b(q).
pub fn local_mass(area: f64, w: &[f64; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let s: f64 = (0..3).map(|q| w[q] * (GAUSS[q][a] * GAUSS[q][b])).sum();
            m[a][b] = area / 3.0 * s;
            m[b][a] = m[a][b];
        }
    }
    m
}

fn triangle_area(p: &[Point; 3]) -> f64 {
    let (u, v) = (sub(&p[1], &p[0]), sub(&p[2], &p[0]));
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * dot(&n, &n).sqrt()
}

/// Equation numbering: Dirichlet drops boundary vertices, periodic images share the canonical dof.
pub fn dof_map(mesh: &TriMesh, kind: ProblemKind) -> Vec<Option<usize>> {
    let mut canon_dof = vec![None; mesh.num_vertices()];
    let mut next = 0;
    for v in 0..mesh.num_vertices() {
        if mesh.is_canonical(v) && !(kind == ProblemKind::Dirichlet && mesh.is_boundary(v)) {
            canon_dof[v] = Some(next);
            next += 1;
        }
    }
    (0..mesh.num_vertices()).map(|v| canon_dof[mesh.canonical(v)]).collect()
}

pub fn assemble(mesh: &TriMesh, phi: &ScalarField, h: Option<&ScalarField>, kind: ProblemKind) -> Result<WeightedOperator> {
    assemble_with(mesh, phi, h, kind, AssemblyOptions::default())
}

pub fn assemble_with(
    mesh: &TriMesh,
    phi: &ScalarField,
    h: Option<&ScalarField>,
    kind: ProblemKind,
    options: AssemblyOptions,
) -> Result<WeightedOperator> {
    match kind {
        ProblemKind::Dirichlet if mesh.is_closed() => {
            return Err(Error::ProblemKind("dirichlet problem needs a mesh with boundary".into()))
        }
        ProblemKind::Closed if !mesh.is_closed() => {
            return Err(Error::ProblemKind("closed problem needs a mesh without boundary".into()))
        }
        _ => {}
    }
    let dim = mesh.dim();
    for f in std::iter::once(phi).chain(h) {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: f.dim() });
        }
    }
    let dofs = dof_map(mesh, kind);
    let n = dofs.iter().flatten().max().map_or(0, |m| m + 1);
    if n == 0 {
        return Err(Error::InvalidMesh("no interior vertex to carry a degree of freedom".into()));
    }

    let nt = mesh.num_triangles();
    let mut phi_q = Vec::with_capacity(nt);
    let mut h_q = Vec::with_capacity(if h.is_some() { nt } else { 0 });
    let (mut phi_min, mut phi_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut h_min = f64::INFINITY;
    for t in 0..nt {
        let pts = gauss_points(&mesh.triangle_points(t), dim);
        let mut vals = [0.0; 3];
        for (q, x) in pts.iter().enumerate() {
            vals[q] = phi.eval(x)?;
            phi_min = phi_min.min(vals[q]);
            phi_max = phi_max.max(vals[q]);
        }
        phi_q.push(vals);
        if let Some(h) = h {
            let mut hv = [0.0; 3];
            for (q, x) in pts.iter().enumerate() {
                hv[q] = h.eval(x)?;
                h_min = h_min.min(hv[q]);
            }
            h_q.push(hv);
        }
    }
    if phi_max - phi_min > MAX_PHI_SPAN {
        return Err(Error::WeightOverflow { span: phi_max - phi_min });
    }

    let cap = 9 * nt;
    let (mut kt, mut mt) = (Vec::with_capacity(cap), Vec::with_capacity(cap));
    let mut ht = Vec::with_capacity(if h.is_some() { cap } else { 0 });
    let mut volume = 0.0;
    for t in 0..nt {
        let p = mesh.triangle_points(t);
        let area = triangle_area(&p);
        let w = phi_q[t].map(|v| (-(v - phi_min)).exp());
        let w_mean = (w[0] + w[1] + w[2]) / 3.0;
        volume += area * w_mean;
        let k0 = local_stiffness(&p);
        let mut m = local_mass(area, &w);
        if options.lumped_mass {
            let mut lumped = [[0.0; 3]; 3];
            for a in 0..3 {
                lumped[a][a] = m[a][0] + m[a][1] + m[a][2];
            }
            m = lumped;
        }
        let hm = h_q.get(t).map(|hv| local_mass(area, &[w[0] * hv[0], w[1] * hv[1], w[2] * hv[2]]));
        let ids = mesh.triangles()[t].map(|v| dofs[v]);
        for a in 0..3 {
            let Some(r) = ids[a] else { continue };
            for b in 0..3 {
                let Some(c) = ids[b] else { continue };
                kt.push((r, c, k0[a][b] * w_mean));
                if m[a][b] != 0.0 || a == b {
                    mt.push((r, c, m[a][b]));
                }
                if let Some(hm) = &hm {
                    ht.push((r, c, hm[a][b]));
                }
            }
        }
    }
    Ok(WeightedOperator {
        stiffness: CsrMatrix::from_triplets(n, kt),
        mass: CsrMatrix::from_triplets(n, mt),
        potential: h.map(|_| CsrMatrix::from_triplets(n, ht)),
        dof_map: dofs,
        problem_kind: kind,
        phi_shift: phi_min,
        h_min: if h.is_some() { h_min } else { 0.0 },
        shifted_volume: volume,
    })
}

impl WeightedOperator {
    pub fn num_dofs(&self) -> usize {
        self.mass.n()
    }

    /// e^{-phi_shift}: factor between stored and unshifted matrices.
    pub fn weight_scale(&self) -> f64 {
        (-self.phi_shift).exp()
    }

    /// ∫ e^{-φ} dv
    pub fn weighted_volume(&self) -> f64 {
        self.shifted_volume * self.weight_scale()
    }

    /// A + H, the matrix on the left of the generalized eigenproblem.
    pub fn operator_matrix(&self) -> CsrMatrix {
        match &self.potential {
            Some(h) => self.stiffness.add_scaled(h, 1.0),
            None => self.stiffness.clone(),
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.num_dofs() {
            return Err(Error::DimensionMismatch { expected: self.num_dofs(), got: u.len() });
        }
        Ok(())
    }

    /// uᵀ M v with the unshifted weight, i.e. ∫ u v e^{-φ} dv.
    pub fn weighted_inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        self.check_len(v)?;
        // Symmetrized per entry so that swapping u and v gives the same bits.
        let mut s = 0.0;
        for i in 0..self.num_dofs() {
            for (j, m) in self.mass.row(i) {
                s += m * (0.5 * (u[i] * v[j] + u[j] * v[i]));
            }
        }
        Ok(s * self.weight_scale())
    }

    /// uᵀ(A + H)u / uᵀMu
    pub fn rayleigh(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        if u.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroVector);
        }
        let mut num = self.stiffness.bilinear(u, u);
        if let Some(h) = &self.potential {
            num += h.bilinear(u, u);
        }
        Ok(num / self.mass.bilinear(u, u))
    }

    /// Mesh vertex values -> dof coefficients (Dirichlet vertices dropped).
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_dofs()];
        for (v, d) in self.dof_map.iter().enumerate() {
            if let Some(d) = d {
                out[*d] = nodal[v];
            }
        }
        out
    }

    /// Dof coefficients -> value at every stored mesh vertex (0 on the Dirichlet boundary).
    pub fn extend(&self, coeffs: &[f64]) -> Vec<f64> {
        self.dof_map.iter().map(|d| d.map_or(0.0, |d| coeffs[d])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{rectangle_grid, refine, torus_grid};

    fn zero() -> ScalarField {
        ScalarField::zero(2)
    }

    #[test]
    fn reference_triangle() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let k = local_stiffness(&p);
        let expect_k = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let m = local_mass(0.5, &[1.0; 3]);
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[a][b] - expect_k[a][b]).abs() < 1e-15);
                let em = if a == b { 2.0 / 24.0 } else { 1.0 / 24.0 };
                assert!((m[a][b] - em).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn kind_mismatch_and_overflow() {
        let sq = rectangle_grid(1.0, 1.0, 4, 4).unwrap();
        let t = torus_grid(1.0, 1.0, 4, 4).unwrap();
        assert!(matches!(assemble(&sq, &zero(), None, ProblemKind::Closed), Err(Error::ProblemKind(_))));
        assert!(matches!(assemble(&t, &zero(), None, ProblemKind::Dirichlet), Err(Error::ProblemKind(_))));
        let steep = ScalarField::expression("1000*x", 2).unwrap();
        assert!(matches!(assemble(&sq, &steep, None, ProblemKind::Dirichlet), Err(Error::WeightOverflow { .. })));
        // A large constant is fine thanks to the shift.
        let big = ScalarField::constant(800.0, 2).unwrap();
        assert!(assemble(&sq, &big, None, ProblemKind::Dirichlet).is_ok());
    }

    #[test]
    fn dof_map_counts() {
        let sq = rectangle_grid(1.0, 1.0, 4, 4).unwrap();
        let op = assemble(&sq, &zero(), None, ProblemKind::Dirichlet).unwrap();
        assert_eq!(op.num_dofs(), 9);
        let t = torus_grid(1.0, 1.0, 4, 4).unwrap();
        let op = assemble(&t, &zero(), None, ProblemKind::Closed).unwrap();
        assert_eq!(op.num_dofs(), 16);
        assert_eq!(op.extend(&op.restrict(&vec![1.0; t.num_vertices()])), vec![1.0; t.num_vertices()]);
    }

    #[test]
    fn lumped_mass_is_diagonal_with_same_total() {
        let sq = refine(&rectangle_grid(1.0, 1.0, 4, 4).unwrap()).unwrap();
        let opts = AssemblyOptions { lumped_mass: true };
        let l = assemble_with(&sq, &zero(), None, ProblemKind::Dirichlet, opts).unwrap();
        assert!(l.mass.triplets().iter().all(|&(i, j, _)| i == j));
    }

    #[test]
    fn potential_matrix_constant_h() {
        let sq = rectangle_grid(1.0, 1.0, 6, 6).unwrap();
        let h = ScalarField::constant(3.0, 2).unwrap();
        let op = assemble(&sq, &zero(), Some(&h), ProblemKind::Dirichlet).unwrap();
        let hm = op.potential.as_ref().unwrap();
        for (i, j, v) in hm.triplets() {
            assert!((v - 3.0 * op.mass.get(i, j)).abs() < 1e-15);
        }
        assert_eq!(op.h_min, 3.0);
    }
}
