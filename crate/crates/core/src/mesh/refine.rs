use std::collections::HashMap;

use super::{norm, Point, TriMesh};
use crate::error::Result;

/// Radius of the origin-centred sphere all vertices lie on, if any.
fn sphere_radius(mesh: &TriMesh) -> Option<f64> {
    if mesh.dim() != 3 || !mesh.is_closed() || mesh.genus() != Some(0) {
        return None;
    }
    let r0 = norm(&mesh.vertices()[0]);
    mesh.vertices()
        .iter()
        .all(|v| (norm(v) - r0).abs() <= 1e-9 * r0)
        .then_some(r0)
}

/// Uniform 1-to-4 subdivision. Midpoints of a sphere mesh are projected back onto the sphere;
/// periodic identifications are carried over to the new seam midpoints.
pub fn refine(mesh: &TriMesh) -> Result<TriMesh> {
    let radius = sphere_radius(mesh);
    let mut verts: Vec<Point> = mesh.vertices().to_vec();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    // quotient edge -> first midpoint created for it
    let mut seam_rep: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs: Vec<[usize; 2]> = mesh.periodic_map().map(<[_]>::to_vec).unwrap_or_default();
    let mut tris = Vec::with_capacity(4 * mesh.num_triangles());

    for tri in mesh.triangles() {
        let mut m = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            m[k] = match mid.get(&key) {
                Some(&id) => id,
                None => {
                    let (pa, pb) = (verts[a], verts[b]);
                    let mut p = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])];
                    if let Some(r) = radius {
                        let l = norm(&p);
                        p = [r * p[0] / l, r * p[1] / l, r * p[2] / l];
                    }
                    verts.push(p);
                    let id = verts.len() - 1;
                    mid.insert(key, id);
                    if mesh.is_periodic() {
                        let (ca, cb) = (mesh.canonical(a), mesh.canonical(b));
                        let ckey = (ca.min(cb), ca.max(cb));
                        match seam_rep.get(&ckey) {
                            Some(&rep) => pairs.push([rep, id]),
                            None => {
                                seam_rep.insert(ckey, id);
                            }
                        }
                    }
                    id
                }
            };
        }
        let [a, b, c] = *tri;
        tris.push([a, m[0], m[2]]);
        tris.push([m[0], b, m[1]]);
        tris.push([m[2], m[1], c]);
        tris.push([m[0], m[1], m[2]]);
    }
    let periodic = mesh.periodic_map().map(|_| pairs);
    TriMesh::new(mesh.dim(), verts, tris, periodic, mesh.genus().filter(|_| mesh.is_closed()))
}
