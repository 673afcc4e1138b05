use std::collections::{BTreeMap, HashMap, VecDeque};

use super::TriMesh;
use crate::error::{Error, Result};

/// A connected piece of a parent mesh, e.g. one nodal domain.
///
/// The submesh boundary (all of it) is the Dirichlet boundary for solves on the piece.
#[derive(Debug, Clone)]
pub struct SubmeshExtraction {
    pub submesh: TriMesh,
    /// Submesh vertex index -> parent vertex index (injective).
    pub vertex_lift: Vec<usize>,
    pub origin_domain_id: Option<usize>,
}

/// Groups `triangle_set` into edge-connected components (through quotient edges).
pub fn edge_components(mesh: &TriMesh, triangle_set: &[usize]) -> Vec<Vec<usize>> {
    let mut by_edge: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
    for (slot, &t) in triangle_set.iter().enumerate() {
        let c = mesh.triangles()[t].map(|v| mesh.canonical(v));
        for k in 0..3 {
            let (a, b) = (c[k], c[(k + 1) % 3]);
            by_edge.entry([a.min(b), a.max(b)]).or_default().push(slot);
        }
    }
    let mut adj = vec![Vec::new(); triangle_set.len()];
    for slots in by_edge.values() {
        for &a in slots {
            for &b in slots {
                if a != b {
                    adj[a].push(b);
                }
            }
        }
    }
    let mut seen = vec![false; triangle_set.len()];
    let mut comps = Vec::new();
    for start in 0..triangle_set.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![triangle_set[start]];
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for &n in &adj[s] {
                if !seen[n] {
                    seen[n] = true;
                    comp.push(triangle_set[n]);
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Cuts the triangles in `triangle_set` out of `mesh` as a standalone mesh.
///
/// The set must be nonempty and edge-connected. Parent vertices that are
/// periodic images of each other stay identified in the submesh.
pub fn extract_submesh(
    mesh: &TriMesh,
    triangle_set: &[usize],
    origin_domain_id: Option<usize>,
) -> Result<SubmeshExtraction> {
    if triangle_set.is_empty() {
        return Err(Error::InvalidSelection("empty triangle set".into()));
    }
    let mut sorted = triangle_set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&t| t >= mesh.num_triangles()) {
        return Err(Error::InvalidSelection(format!("triangle {bad} out of range")));
    }
    let comps = edge_components(mesh, &sorted);
    if comps.len() != 1 {
        return Err(Error::InvalidSelection(format!(
            "triangle set is not edge-connected ({} components)",
            comps.len()
        )));
    }

    let mut local: BTreeMap<usize, usize> = BTreeMap::new();
    for &t in &sorted {
        for &v in &mesh.triangles()[t] {
            local.insert(v, 0);
        }
    }
    let vertex_lift: Vec<usize> = local.keys().copied().collect();
    for (i, v) in vertex_lift.iter().enumerate() {
        local.insert(*v, i);
    }
    let vertices = vertex_lift.iter().map(|&v| mesh.vertices()[v]).collect();
    let triangles = sorted.iter().map(|&t| mesh.triangles()[t].map(|v| local[&v])).collect();

    let periodic_map = if mesh.is_periodic() {
        let mut first: HashMap<usize, usize> = HashMap::new();
        let mut pairs = Vec::new();
        for (i, &v) in vertex_lift.iter().enumerate() {
            match first.get(&mesh.canonical(v)) {
                Some(&rep) => pairs.push([rep, i]),
                None => {
                    first.insert(mesh.canonical(v), i);
                }
            }
        }
        (!pairs.is_empty()).then_some(pairs)
    } else {
        None
    };
    let whole = sorted.len() == mesh.num_triangles();
    let genus = if whole { mesh.genus() } else { None };
    let submesh = TriMesh::new(mesh.dim(), vertices, triangles, periodic_map, genus)?;
    Ok(SubmeshExtraction {
        submesh,
        vertex_lift,
        origin_domain_id,
    })
}
