//! Triangulated 2-manifolds: planar domains, flat tori and embedded surfaces.
//!
//! A [`TriMesh`] is immutable once built. Every constructor runs the same
//! validation: distinct in-range triangle indices, strictly positive areas,
//! consistent orientation, edge-manifoldness after periodic identification,
//! and the Euler formula for closed meshes.
//!
//! Flat tori are stored as a rectangular grid whose last row and column
//! duplicate the first ones; `periodic_map` lists `[canonical, duplicate]`
//! pairs. All topological queries (edges, boundary, Euler characteristic,
//! adjacency) work on the quotient, while triangle geometry uses the stored
//! (unwrapped) coordinates.

mod generate;
mod io;
mod refine;
mod submesh;

use std::collections::{BTreeMap, HashMap};

pub use generate::{disk_rings, generate, icosphere, rectangle_grid, torus_grid, Shape};
pub use io::{load, save, MeshFile};
pub use refine::refine;
pub use submesh::{edge_components, extract_submesh, SubmeshExtraction};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone)]
pub struct TriMesh {
    dim: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_vertices: Vec<usize>,
    periodic_map: Option<Vec<[usize; 2]>>,
    genus: Option<u32>,
    canonical: Vec<usize>,
    period: [Option<f64>; 2],
    edges: Vec<[usize; 2]>,
    mean_edge_length: f64,
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.boundary_vertices == other.boundary_vertices
            && self.periodic_map == other.periodic_map
            && self.genus == other.genus
    }
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl TriMesh {
    /// Builds and validates a mesh, deriving the boundary vertex set.
    ///
    /// `dim` is 2 (planar or flat-torus chart, third coordinate must be 0)
    /// or 3 (embedded surface). For closed meshes without a given genus the
    /// genus is inferred from the Euler characteristic.
    pub fn new(
        dim: usize,
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        periodic_map: Option<Vec<[usize; 2]>>,
        genus: Option<u32>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("dimension must be 2 or 3, got {dim}")));
        }
        let nv = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {i} has a non-finite coordinate")));
            }
            if dim == 2 && v[2] != 0.0 {
                return Err(Error::InvalidMesh(format!("planar vertex {i} has nonzero z")));
            }
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {bad}, but there are only {nv} vertices"
                )));
            }
        }

        // Periodic identification: union-find with the smallest index as representative.
        let mut parent: Vec<usize> = (0..nv).collect();
        let mut period: [Option<f64>; 2] = [None, None];
        if let Some(pairs) = &periodic_map {
            if dim != 2 {
                return Err(Error::InvalidMesh("periodic identification requires a planar chart".into()));
            }
            for &[a, b] in pairs {
                if a >= nv || b >= nv || a == b {
                    return Err(Error::InvalidMesh(format!("invalid periodic pair [{a}, {b}]")));
                }
                let d = sub(&vertices[b], &vertices[a]);
                for axis in 0..2 {
                    let len = d[axis].abs();
                    if len > 0.0 {
                        match period[axis] {
                            None => period[axis] = Some(len),
                            Some(p) if (p - len).abs() <= 1e-9 * p.max(len) => {}
                            Some(p) => {
                                return Err(Error::InvalidMesh(format!(
                                    "inconsistent periodic offsets along axis {axis}: {p} vs {len}"
                                )))
                            }
                        }
                    }
                }
                let ra = find(&mut parent, a);
                let rb = find(&mut parent, b);
                if ra != rb {
                    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                    parent[hi] = lo;
                }
            }
        }
        let canonical: Vec<usize> = (0..nv).map(|i| find(&mut parent, i)).collect();

        let mut referenced = vec![false; nv];
        let mut edge_uses: BTreeMap<[usize; 2], Vec<(usize, bool)>> = BTreeMap::new();
        let mut edge_geom: HashMap<[usize; 2], f64> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            let c = tri.map(|i| canonical[i]);
            if c[0] == c[1] || c[1] == c[2] || c[0] == c[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} has repeated vertices {tri:?}")));
            }
            let p = tri.map(|i| vertices[i]);
            let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            let ok = if dim == 2 { n[2] > 0.0 } else { norm(&n) > 0.0 };
            if !ok {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate or clockwise (twice signed area {})",
                    if dim == 2 { n[2] } else { norm(&n) }
                )));
            }
            for k in 0..3 {
                referenced[tri[k]] = true;
                let (a, b) = (c[k], c[(k + 1) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                edge_uses.entry(key).or_default().push((t, a < b));
                edge_geom
                    .entry(key)
                    .or_insert_with(|| norm(&sub(&p[(k + 1) % 3], &p[k])));
            }
        }
        if let Some(v) = referenced.iter().position(|&r| !r) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not used by any triangle")));
        }

        let mut boundary_canon = vec![false; nv];
        for (key, uses) in &edge_uses {
            match uses.as_slice() {
                [_] => {
                    boundary_canon[key[0]] = true;
                    boundary_canon[key[1]] = true;
                }
                [(t0, d0), (t1, d1)] => {
                    if d0 == d1 {
                        return Err(Error::InvalidMesh(format!(
                            "inconsistent orientation across edge {key:?} (triangles {t0}, {t1})"
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {key:?} borders {} triangles",
                        uses.len()
                    )))
                }
            }
        }
        let boundary_vertices: Vec<usize> =
            (0..nv).filter(|&i| boundary_canon[canonical[i]]).collect();

        let edges: Vec<[usize; 2]> = edge_uses.keys().copied().collect();
        let mean_edge_length = edges.iter().map(|e| edge_geom[e]).sum::<f64>() / edges.len() as f64;

        let mut mesh = TriMesh {
            dim,
            vertices,
            triangles,
            boundary_vertices,
            periodic_map,
            genus,
            canonical,
            period,
            edges,
            mean_edge_length,
        };

        if mesh.is_closed() {
            let chi = mesh.euler_characteristic();
            match genus {
                Some(g) => {
                    if chi != 2 - 2 * g as i64 {
                        return Err(Error::InvalidMesh(format!(
                            "closed mesh has V - E + F = {chi}, but genus {g} requires {}",
                            2 - 2 * g as i64
                        )));
                    }
                }
                None => {
                    if chi > 2 || chi % 2 != 0 {
                        return Err(Error::InvalidMesh(format!(
                            "closed mesh has Euler characteristic {chi}, not of the form 2 - 2g"
                        )));
                    }
                    mesh.genus = Some(((2 - chi) / 2) as u32);
                }
            }
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Sorted indices of all stored vertices lying on the boundary.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn periodic_map(&self) -> Option<&[[usize; 2]]> {
        self.periodic_map.as_deref()
    }

    pub fn genus(&self) -> Option<u32> {
        self.genus
    }

    pub fn mean_edge_length(&self) -> f64 {
        self.mean_edge_length
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Representative of `v` under periodic identification (the smallest index in its class).
    pub fn canonical(&self, v: usize) -> usize {
        self.canonical[v]
    }

    pub fn canonical_map(&self) -> &[usize] {
        &self.canonical
    }

    pub fn is_canonical(&self, v: usize) -> bool {
        self.canonical[v] == v
    }

    /// Number of vertices after periodic identification.
    pub fn num_logical_vertices(&self) -> usize {
        (0..self.vertices.len()).filter(|&v| self.is_canonical(v)).count()
    }

    /// Unique edges of the quotient mesh as sorted canonical index pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_vertices.is_empty()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_vertices.binary_search(&v).is_ok()
    }

    pub fn is_periodic(&self) -> bool {
        self.period.iter().any(Option::is_some)
    }

    /// V - E + F of the quotient mesh.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_logical_vertices() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let p = self.triangle_points(t);
        0.5 * norm(&cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0])))
    }

    /// Unit normal of triangle `t` (for planar meshes, +z).
    pub fn triangle_normal(&self, t: usize) -> Point {
        let p = self.triangle_points(t);
        let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
        let l = norm(&n);
        [n[0] / l, n[1] / l, n[2] / l]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                let a = sub(&p[(k + 1) % 3], &p[k]);
                let b = sub(&p[(k + 2) % 3], &p[k]);
                let c = (dot(&a, &b) / (norm(&a) * norm(&b))).clamp(-1.0, 1.0);
                min = min.min(c.acos().to_degrees());
            }
        }
        min
    }

    /// Displacement from `from` to `to`, wrapped to the nearest periodic image.
    pub fn displacement(&self, from: &Point, to: &Point) -> Point {
        let mut d = sub(to, from);
        for axis in 0..2 {
            if let Some(p) = self.period[axis] {
                d[axis] -= p * (d[axis] / p).round();
            }
        }
        d
    }

    /// Canonical neighbours of each canonical vertex (empty lists for duplicates).
    pub fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &[a, b] in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Triangles incident to each canonical vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                vt[self.canonical[v]].push(t);
            }
        }
        vt
    }

    /// Area-weighted unit normal at a vertex (+z for planar meshes).
    pub fn vertex_normal(&self, incident: &[usize]) -> Point {
        if self.dim == 2 {
            return [0.0, 0.0, 1.0];
        }
        let mut n = [0.0; 3];
        for &t in incident {
            let p = self.triangle_points(t);
            let c = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            for k in 0..3 {
                n[k] += c[k];
            }
        }
        let l = norm(&n);
        [n[0] / l, n[1] / l, n[2] / l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_two_triangles() -> TriMesh {
        TriMesh::new(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn square_topology() {
        let m = unit_square_two_triangles();
        assert_eq!(m.edges().len(), 5);
        assert_eq!(m.euler_characteristic(), 1);
        assert_eq!(m.boundary_vertices(), &[0, 1, 2, 3]);
        assert!(!m.is_closed());
        assert_eq!(m.genus(), None);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_dangling_index() {
        let err = TriMesh::new(2, vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 5]], None, None);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn rejects_clockwise_and_degenerate() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(TriMesh::new(2, pts.clone(), vec![[0, 2, 1]], None, None).is_err());
        assert!(TriMesh::new(2, pts, vec![[0, 1, 3]], None, None).is_err());
    }

    #[test]
    fn rejects_non_manifold_edge() {
        let pts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 1.0],
            [0.5, 0.5, 1.0],
        ];
        let tris = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        assert!(TriMesh::new(3, pts, tris, None, None).is_err());
    }

    #[test]
    fn rejects_wrong_genus() {
        let m = icosphere(1.0, 0).unwrap();
        let err = TriMesh::new(3, m.vertices().to_vec(), m.triangles().to_vec(), None, Some(1));
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn periodic_displacement_wraps() {
        let m = torus_grid(2.0, 2.0, 4, 4).unwrap();
        let d = m.displacement(&[0.1, 1.9, 0.0], &[1.9, 0.1, 0.0]);
        assert!((d[0] + 0.2).abs() < 1e-12 && (d[1] - 0.2).abs() < 1e-12);
    }
}
