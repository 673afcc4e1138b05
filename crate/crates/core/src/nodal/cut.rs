use std::collections::BTreeMap;

use super::{NodalAnalysis, NodeKey};
use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh};

fn angle_at(p: &Point, q: &Point, r: &Point) -> f64 {
    let a: Vec<f64> = (0..3).map(|k| q[k] - p[k]).collect();
    let b: Vec<f64> = (0..3).map(|k| r[k] - p[k]).collect();
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    cross.iter().map(|c| c * c).sum::<f64>().sqrt().atan2(dot)
}

fn min_angle(p: [&Point; 3]) -> f64 {
    angle_at(p[0], p[1], p[2]).min(angle_at(p[1], p[2], p[0])).min(angle_at(p[2], p[0], p[1]))
}

/// Nodal domain `d` as a standalone mesh whose boundary is the zero set of the P1 interpolant.
///
/// Triangles whose nonzero vertices all lie in the domain are kept whole. Sign-changing
/// triangles are clipped at the linear zero crossings of their edges and the kept piece
/// (a triangle or a quadrilateral) is retriangulated. Only the largest edge-connected piece
/// is returned. Periodic meshes are not supported.
pub fn domain_mesh(mesh: &TriMesh, u: &[f64], analysis: &NodalAnalysis, d: usize) -> Result<TriMesh> {
    if mesh.is_periodic() {
        return Err(Error::InvalidSelection("cut domain meshes need a non-periodic mesh".into()));
    }
    if d >= analysis.domain_count {
        return Err(Error::InvalidSelection(format!("domain {d} out of range")));
    }
    let s = f64::from(analysis.domain_signs[d]);
    let value = |v: usize| if analysis.sign_labels[v] == 0 { 0.0 } else { s * u[v] };
    let inside = |v: usize| analysis.domain_labels[v] == Some(d);

    let mut nodes: BTreeMap<NodeKey, usize> = BTreeMap::new();
    let mut points: Vec<Point> = Vec::new();
    fn node(nodes: &mut BTreeMap<NodeKey, usize>, points: &mut Vec<Point>, key: NodeKey, p: Point) -> usize {
        *nodes.entry(key).or_insert_with(|| {
            points.push(p);
            points.len() - 1
        })
    }
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for tri in mesh.triangles() {
        if !tri.iter().any(|&v| inside(v)) {
            continue;
        }
        let mut poly = Vec::with_capacity(4);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (va, vb) = (value(a), value(b));
            if va >= 0.0 {
                poly.push(node(&mut nodes, &mut points, NodeKey::Vertex(a), mesh.vertices()[a]));
            }
            if va * vb < 0.0 {
                let t = va / (va - vb);
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                let p = [0, 1, 2].map(|i| pa[i] + t * (pb[i] - pa[i]));
                poly.push(node(&mut nodes, &mut points, NodeKey::Edge(a.min(b), a.max(b)), p));
            }
        }
        match poly.len() {
            3 => tris.push([poly[0], poly[1], poly[2]]),
            4 => {
                let pts = |i: usize| &points[poly[i]];
                let q = [pts(0), pts(1), pts(2), pts(3)];
                let first = min_angle([q[0], q[1], q[2]]).min(min_angle([q[0], q[2], q[3]]));
                let second = min_angle([q[1], q[2], q[3]]).min(min_angle([q[1], q[3], q[0]]));
                if first >= second {
                    tris.push([poly[0], poly[1], poly[2]]);
                    tris.push([poly[0], poly[2], poly[3]]);
                } else {
                    tris.push([poly[1], poly[2], poly[3]]);
                    tris.push([poly[1], poly[3], poly[0]]);
                }
            }
            _ => {}
        }
    }
    if tris.is_empty() {
        return Err(Error::InvalidSelection(format!("domain {d} has no triangles")));
    }

    // Largest edge-connected piece.
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut by_edge: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if let Some(&other) = by_edge.get(&(a.min(b), a.max(b))) {
                let (ra, rb) = (root(&mut parent, t), root(&mut parent, other));
                parent[ra.max(rb)] = ra.min(rb);
            } else {
                by_edge.insert((a.min(b), a.max(b)), t);
            }
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for t in 0..tris.len() {
        *sizes.entry(root(&mut parent, t)).or_insert(0) += 1;
    }
    let keep = sizes.iter().max_by_key(|&(r, n)| (*n, std::cmp::Reverse(*r))).map(|(r, _)| *r).expect("nonempty");
    let mut local = vec![usize::MAX; points.len()];
    let mut vertices = Vec::new();
    let mut kept = Vec::new();
    for t in 0..tris.len() {
        if root(&mut parent, t) != keep {
            continue;
        }
        kept.push(tris[t].map(|v| {
            if local[v] == usize::MAX {
                local[v] = vertices.len();
                vertices.push(points[v]);
            }
            local[v]
        }));
    }
    TriMesh::new(mesh.dim(), vertices, kept, None, None)
}
