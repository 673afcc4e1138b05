//! Nodal sets of P1 functions: sign labels, nodal domains, zero polylines and singular points.

mod cut;
mod singular;
mod svg;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh};

pub use singular::{detect_singular_points, fit_vanishing_order, max_angle_deviation, OrderFit, SingularPoint};
pub use cut::domain_mesh;
pub use svg::render_svg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodalOptions {
    /// Vertices with |u| ≤ tau_rel·max|u| count as zero.
    pub tau_rel: f64,
    /// Fit radius in units of the mean edge length.
    pub r_fit: f64,
    pub n_max: usize,
    /// Largest normalized order-fit residual still called confident.
    pub fit_threshold: f64,
}

impl Default for NodalOptions {
    fn default() -> Self {
        NodalOptions {
            tau_rel: 1e-8,
            r_fit: 3.0,
            n_max: 6,
            fit_threshold: 0.1,
        }
    }
}

/// Where a zero-set point sits: on a zero vertex or inside a sign-changing edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum NodeKey {
    Vertex(usize),
    Edge(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec<f64>>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalAnalysis {
    pub function_index: Option<usize>,
    pub tau: f64,
    /// Per stored vertex: 1, -1 or 0.
    pub sign_labels: Vec<i8>,
    /// Per stored vertex; zero vertices are unassigned.
    pub domain_labels: Vec<Option<usize>>,
    pub domain_count: usize,
    /// Sign of each domain.
    pub domain_signs: Vec<i8>,
    pub segments: Vec<Polyline>,
    pub singular_points: Vec<SingularPoint>,
    /// Triangles with a zero vertex or a sign change; candidates for singular points.
    pub flagged_triangles: usize,
    #[serde(skip)]
    pub(crate) graph: ZeroGraph,
}

/// Zero set of the interpolant as a graph on [`NodeKey`]s.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ZeroGraph {
    pub positions: BTreeMap<NodeKey, Point>,
    pub edges: Vec<[NodeKey; 2]>,
    /// Canonical vertex -> indices into `edges` of segments from incident triangles.
    pub by_vertex: BTreeMap<usize, Vec<usize>>,
}

impl ZeroGraph {
    pub fn degree(&self) -> BTreeMap<NodeKey, usize> {
        let mut d = BTreeMap::new();
        for e in &self.edges {
            for k in e {
                *d.entry(*k).or_insert(0) += 1;
            }
        }
        d
    }
}

pub fn sign_labels(u: &[f64], tau_rel: f64) -> Result<(Vec<i8>, f64)> {
    let max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 || !max.is_finite() {
        return Err(Error::ZeroVector);
    }
    let tau = tau_rel * max;
    let labels = u
        .iter()
        .map(|&v| {
            if v > tau {
                1
            } else if v < -tau {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok((labels, tau))
}

/// Components of same-sign vertices joined by quotient edges. Returns per-vertex labels and domain signs.
pub fn label_domains(mesh: &TriMesh, signs: &[i8]) -> (Vec<Option<usize>>, Vec<i8>) {
    let adj = mesh.vertex_adjacency();
    let mut canon_label: Vec<Option<usize>> = vec![None; mesh.num_vertices()];
    let mut domain_signs = Vec::new();
    for start in 0..mesh.num_vertices() {
        if !mesh.is_canonical(start) || signs[start] == 0 || canon_label[start].is_some() {
            continue;
        }
        let id = domain_signs.len();
        domain_signs.push(signs[start]);
        canon_label[start] = Some(id);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if canon_label[w].is_none() && signs[w] == signs[start] {
                    canon_label[w] = Some(id);
                    queue.push_back(w);
                }
            }
        }
    }
    let labels = (0..mesh.num_vertices()).map(|v| canon_label[mesh.canonical(v)]).collect();
    (labels, domain_signs)
}

fn lerp_min_image(mesh: &TriMesh, a: &Point, b: &Point, t: f64) -> Point {
    let d = mesh.displacement(a, b);
    [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]]
}

/// Zero set of the piecewise-linear interpolant, triangle by triangle.
/// Returns the graph and the number of flagged triangles.
fn zero_graph(mesh: &TriMesh, u: &[f64], signs: &[i8]) -> (ZeroGraph, usize) {
    let mut g = ZeroGraph::default();
    let mut seen: BTreeMap<[NodeKey; 2], usize> = BTreeMap::new();
    let mut flagged = 0;
    let canon = |v: usize| mesh.canonical(v);
    let vpos = |v: usize| mesh.vertices()[canon(v)];
    for tri in mesh.triangles() {
        let zeros: Vec<usize> = (0..3).filter(|&i| signs[tri[i]] == 0).collect();
        let mut crossings: Vec<NodeKey> = Vec::new();
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if signs[a] * signs[b] == -1 {
                let (ca, cb) = (canon(a), canon(b));
                let (lo, hi) = if ca < cb { (ca, cb) } else { (cb, ca) };
                let key = NodeKey::Edge(lo, hi);
                let (ulo, uhi) = (u[lo], u[hi]);
                let pos = lerp_min_image(mesh, &vpos(lo), &vpos(hi), ulo / (ulo - uhi));
                g.positions.entry(key).or_insert(pos);
                crossings.push(key);
            }
        }
        if !zeros.is_empty() || !crossings.is_empty() {
            flagged += 1;
        }
        let seg: Option<[NodeKey; 2]> = match (zeros.len(), crossings.len()) {
            (0, 2) => Some([crossings[0], crossings[1]]),
            (1, 1) => Some([NodeKey::Vertex(canon(tri[zeros[0]])), crossings[0]]),
            (2, 0) => {
                let (a, b) = (tri[zeros[0]], tri[zeros[1]]);
                // Both ends on the boundary: an artifact of the Dirichlet condition.
                (!(mesh.is_boundary(a) && mesh.is_boundary(b)))
                    .then_some([NodeKey::Vertex(canon(a)), NodeKey::Vertex(canon(b))])
            }
            _ => None,
        };
        let Some(mut seg) = seg else { continue };
        seg.sort();
        for k in seg {
            if let NodeKey::Vertex(v) = k {
                g.positions.entry(k).or_insert(vpos(v));
            }
        }
        let idx = *seen.entry(seg).or_insert_with(|| {
            g.edges.push(seg);
            g.edges.len() - 1
        });
        for &v in tri {
            let list = g.by_vertex.entry(canon(v)).or_default();
            if !list.contains(&idx) {
                list.push(idx);
            }
        }
    }
    (g, flagged)
}

/// Chains graph edges into maximal polylines; cycles come out closed.
fn chain(mesh: &TriMesh, g: &ZeroGraph) -> Vec<Polyline> {
    let mut adj: BTreeMap<NodeKey, Vec<(NodeKey, usize)>> = BTreeMap::new();
    for (i, [a, b]) in g.edges.iter().enumerate() {
        adj.entry(*a).or_default().push((*b, i));
        adj.entry(*b).or_default().push((*a, i));
    }
    let dim = mesh.dim();
    let point = |k: &NodeKey| g.positions[k][..dim].to_vec();
    let mut used = vec![false; g.edges.len()];
    let mut out = Vec::new();
    let walk = |start: NodeKey, used: &mut Vec<bool>, stop_at_branch: bool| -> Option<Polyline> {
        let mut cur = start;
        let mut pts = vec![point(&start)];
        loop {
            let next = adj[&cur].iter().find(|(_, e)| !used[*e]).copied();
            let Some((n, e)) = next else { break };
            used[e] = true;
            pts.push(point(&n));
            cur = n;
            if cur == start || (stop_at_branch && adj[&cur].len() != 2) {
                break;
            }
        }
        (pts.len() > 1).then(|| Polyline {
            closed: cur == start,
            points: pts,
        })
    };
    for (k, list) in &adj {
        if list.len() != 2 {
            for _ in 0..list.len() {
                if let Some(p) = walk(*k, &mut used, true) {
                    out.push(p);
                }
            }
        }
    }
    for k in adj.keys() {
        while adj[k].iter().any(|(_, e)| !used[*e]) {
            if let Some(p) = walk(*k, &mut used, true) {
                out.push(p);
            }
        }
    }
    out
}

/// Full nodal analysis of per-vertex values `u` (one value per stored vertex).
pub fn analyze(mesh: &TriMesh, u: &[f64], function_index: Option<usize>, options: &NodalOptions) -> Result<NodalAnalysis> {
    if u.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_vertices(),
            got: u.len(),
        });
    }
    let (signs, tau) = sign_labels(u, options.tau_rel)?;
    // Work with canonical values so periodic duplicates agree.
    let u: Vec<f64> = (0..mesh.num_vertices()).map(|v| u[mesh.canonical(v)]).collect();
    let signs: Vec<i8> = (0..mesh.num_vertices()).map(|v| signs[mesh.canonical(v)]).collect();
    let (domain_labels, domain_signs) = label_domains(mesh, &signs);
    let (graph, flagged) = zero_graph(mesh, &u, &signs);
    let segments = chain(mesh, &graph);
    let mut analysis = NodalAnalysis {
        function_index,
        tau,
        sign_labels: signs,
        domain_labels,
        domain_count: domain_signs.len(),
        domain_signs,
        segments,
        singular_points: Vec::new(),
        flagged_triangles: flagged,
        graph,
    };
    analysis.singular_points = detect_singular_points(mesh, &u, &analysis, options);
    Ok(analysis)
}

impl NodalAnalysis {
    /// Triangles of each domain. A triangle whose nonzero vertices all lie in one domain belongs
    /// to it; a triangle with both signs goes to the side its centroid value falls on, so the
    /// domains partition the mesh along a staircase that straddles the nodal line.
    pub fn domain_triangles(&self, mesh: &TriMesh, u: &[f64]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.domain_count];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let labels = tri.map(|v| self.domain_labels[v]);
            let mut nonzero = labels.iter().flatten();
            let Some(&first) = nonzero.next() else { continue };
            let owner = if nonzero.all(|&d| d == first) {
                Some(first)
            } else {
                let c: f64 = tri.iter().map(|&v| u[mesh.canonical(v)]).sum();
                let sign = if c > 0.0 { 1 } else if c < 0.0 { -1 } else { 0 };
                (0..3).find(|&k| self.sign_labels[tri[k]] == sign).and_then(|k| labels[k])
            };
            if let Some(d) = owner {
                out[d].push(t);
            }
        }
        out
    }

    /// Zero-set nodes of odd degree that do not lie on the boundary, i.e. loose ends of the nodal set.
    pub fn open_ends(&self, mesh: &TriMesh) -> usize {
        self.graph
            .degree()
            .into_iter()
            .filter(|&(key, d)| {
                let on_boundary = match key {
                    NodeKey::Vertex(v) => mesh.is_boundary(v),
                    NodeKey::Edge(a, b) => mesh.is_boundary(a) && mesh.is_boundary(b),
                };
                d % 2 == 1 && !on_boundary
            })
            .count()
    }

    /// Number of canonical vertices in each domain.
    pub fn domain_sizes(&self, mesh: &TriMesh) -> Vec<usize> {
        let mut sizes = vec![0; self.domain_count];
        for v in 0..mesh.num_vertices() {
            if let (true, Some(d)) = (mesh.is_canonical(v), self.domain_labels[v]) {
                sizes[d] += 1;
            }
        }
        sizes
    }

    pub fn confident_points(&self) -> impl Iterator<Item = &SingularPoint> {
        self.singular_points.iter().filter(|p| p.confident)
    }
}
