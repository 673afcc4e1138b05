//! Singular points of the nodal set: detection, vanishing order and branch directions.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{NodalAnalysis, NodalOptions, NodeKey, ZeroGraph};
use crate::mesh::{Point, TriMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub location: Vec<f64>,
    /// Vertex the candidate was found at.
    pub vertex: usize,
    /// Fitted vanishing order, if the fit was possible.
    pub order: Option<usize>,
    /// Directions (radians, ascending in [0, 2π)) of the nodal branches leaving the point.
    pub branch_angles: Vec<f64>,
    pub fit_residual: f64,
    /// Normalized residual for each order 1..=N_max.
    pub residuals: Vec<f64>,
    pub confident: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub location: Point,
    pub order: Option<usize>,
    pub residual: f64,
    pub residuals: Vec<f64>,
    pub branch_angles: Vec<f64>,
}

struct Context<'a> {
    mesh: &'a TriMesh,
    u: &'a [f64],
    graph: &'a ZeroGraph,
    adj: Vec<Vec<usize>>,
    vt: Vec<Vec<usize>>,
}

struct Frame {
    center: Point,
    e1: Point,
    e2: Point,
}

fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit(a: Point) -> Point {
    let l = dot(&a, &a).sqrt();
    [a[0] / l, a[1] / l, a[2] / l]
}

impl<'a> Context<'a> {
    fn new(mesh: &'a TriMesh, u: &'a [f64], graph: &'a ZeroGraph) -> Self {
        Context {
            mesh,
            u,
            graph,
            adj: mesh.vertex_adjacency(),
            vt: mesh.vertex_triangles(),
        }
    }

    /// Tangent frame at vertex `v`, centred at `center`.
    fn frame(&self, v: usize, center: Point) -> Frame {
        let n = self.mesh.vertex_normal(&self.vt[self.mesh.canonical(v)]);
        let a = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let e1 = unit([a[0] - dot(&a, &n) * n[0], a[1] - dot(&a, &n) * n[1], a[2] - dot(&a, &n) * n[2]]);
        Frame {
            center,
            e1,
            e2: cross(&n, &e1),
        }
    }

    fn local(&self, f: &Frame, p: &Point) -> [f64; 2] {
        let d = self.mesh.displacement(&f.center, p);
        [dot(&d, &f.e1), dot(&d, &f.e2)]
    }

    /// Canonical vertices within `radius` of the frame centre, grown from `start`.
    fn ball(&self, start: usize, f: &Frame, radius: f64) -> Vec<(usize, [f64; 2])> {
        let start = self.mesh.canonical(start);
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        let mut out = Vec::new();
        while let Some(v) = queue.pop_front() {
            let x = self.local(f, &self.mesh.vertices()[v]);
            let inside = x[0].hypot(x[1]) <= radius;
            if inside {
                out.push((v, x));
            }
            if inside || v == start {
                for &w in &self.adj[v] {
                    if seen.insert(w) {
                        queue.push_back(w);
                    }
                }
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }

    /// Zero-set segments touching any of `vertices`, in local coordinates.
    fn local_segments(&self, vertices: &[(usize, [f64; 2])], f: &Frame) -> Vec<[[f64; 2]; 2]> {
        let mut ids = BTreeSet::new();
        for (v, _) in vertices {
            if let Some(list) = self.graph.by_vertex.get(v) {
                ids.extend(list.iter().copied());
            }
        }
        ids.into_iter()
            .map(|i| {
                let [a, b] = self.graph.edges[i];
                let pa = self.local(f, &self.graph.positions[&a]);
                // Second end relative to the first so seam-crossing segments stay short.
                let d = self.mesh.displacement(&self.graph.positions[&a], &self.graph.positions[&b]);
                [pa, [pa[0] + dot(&d, &f.e1), pa[1] + dot(&d, &f.e2)]]
            })
            .collect()
    }

    fn touches_boundary(&self, ball: &[(usize, [f64; 2])]) -> bool {
        ball.iter().any(|(v, _)| self.mesh.is_boundary(*v))
    }
}

/// Angles in [0, 2π) where the segments cross the circle of radius `rho` about the origin.
fn circle_crossings(segments: &[[[f64; 2]; 2]], rho: f64) -> Vec<f64> {
    let mut angles = Vec::new();
    for [p, q] in segments {
        let d = [q[0] - p[0], q[1] - p[1]];
        let a = d[0] * d[0] + d[1] * d[1];
        if a == 0.0 {
            continue;
        }
        let b = 2.0 * (p[0] * d[0] + p[1] * d[1]);
        let c = p[0] * p[0] + p[1] * p[1] - rho * rho;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            continue;
        }
        let s = disc.sqrt();
        for t in [(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)] {
            if (0.0..=1.0).contains(&t) {
                let (x, y) = (p[0] + t * d[0], p[1] + t * d[1]);
                angles.push(y.atan2(x).rem_euclid(TAU));
            }
        }
        if s == 0.0 {
            angles.pop();
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if angles.len() > 1 && (angles[0] + TAU - angles[angles.len() - 1]).abs() < 1e-9 {
        angles.pop();
    }
    angles
}

/// Largest deviation (degrees) of consecutive branch gaps from π/N.
pub fn max_angle_deviation(angles: &[f64], order: usize) -> f64 {
    if angles.is_empty() {
        return f64::INFINITY;
    }
    let ideal = PI / order as f64;
    (0..angles.len())
        .map(|i| {
            let next = if i + 1 < angles.len() { angles[i + 1] } else { angles[0] + TAU };
            ((next - angles[i]) - ideal).abs().to_degrees()
        })
        .fold(0.0, f64::max)
}

fn lstsq(columns: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (rhs.len(), columns.len());
    let a = DMatrix::from_fn(m, n, |i, j| columns[j][i]);
    let b = DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= 1e-10 * smax {
        return None;
    }
    svd.solve(&b, 0.0).ok().map(|x| x.iter().copied().collect())
}

fn cpow(z: [f64; 2], n: usize) -> [f64; 2] {
    let mut w = [1.0, 0.0];
    for _ in 0..n {
        w = [w[0] * z[0] - w[1] * z[1], w[0] * z[1] + w[1] * z[0]];
    }
    w
}

fn cmul(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]]
}

fn cdiv(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = b[0] * b[0] + b[1] * b[1];
    [(a[0] * b[0] + a[1] * b[1]) / d, (a[1] * b[0] - a[0] * b[1]) / d]
}

/// Critical point of the degree-4 harmonic fit nearest the origin (scaled coordinates).
fn localize(points: &[[f64; 2]], values: &[f64]) -> [f64; 2] {
    const DEG: usize = 4;
    let mut cols = vec![vec![1.0; points.len()]];
    for j in 1..=DEG {
        cols.push(points.iter().map(|&z| cpow(z, j)[0]).collect());
        cols.push(points.iter().map(|&z| cpow(z, j)[1]).collect());
    }
    let Some(c) = lstsq(&cols, values) else { return [0.0, 0.0] };
    // p = Re f with f = Σ (a_j − i b_j) z^j
    let coef: Vec<[f64; 2]> = (1..=DEG).map(|j| [c[2 * j - 1], -c[2 * j]]).collect();
    let deriv = |z: [f64; 2], order: usize| -> [f64; 2] {
        let mut s = [0.0, 0.0];
        for j in order..=DEG {
            let k = (j - order + 1..=j).product::<usize>() as f64;
            let t = cmul(coef[j - 1], cpow(z, j - order));
            s[0] += k * t[0];
            s[1] += k * t[1];
        }
        s
    };
    let mut z = [0.0, 0.0];
    for _ in 0..60 {
        let (d1, d2) = (deriv(z, 1), deriv(z, 2));
        if d2 == [0.0, 0.0] {
            break;
        }
        let step = cdiv(d1, d2);
        z = [z[0] - step[0], z[1] - step[1]];
        if !(z[0].is_finite() && z[1].is_finite()) || z[0].hypot(z[1]) > 0.5 {
            return [0.0, 0.0];
        }
        if step[0].hypot(step[1]) < 1e-13 {
            break;
        }
    }
    z
}

fn fit(ctx: &Context, start: usize, position: Point, relocate: bool, options: &NodalOptions) -> OrderFit {
    let mesh = ctx.mesh;
    let h = mesh.mean_edge_length();
    let r = options.r_fit * h;
    let mut frame = ctx.frame(start, position);
    let undetermined = |loc: Point| OrderFit {
        location: loc,
        order: None,
        residual: f64::INFINITY,
        residuals: Vec::new(),
        branch_angles: Vec::new(),
    };
    let ball = ctx.ball(start, &frame, r);
    if ball.len() < 12 {
        return undetermined(position);
    }
    if relocate {
        let pts: Vec<[f64; 2]> = ball.iter().map(|(_, x)| [x[0] / r, x[1] / r]).collect();
        let vals: Vec<f64> = ball.iter().map(|(v, _)| ctx.u[*v]).collect();
        let z = localize(&pts, &vals);
        let mut c = position;
        for k in 0..3 {
            c[k] += r * (z[0] * frame.e1[k] + z[1] * frame.e2[k]);
        }
        if mesh.dim() == 3 {
            let (r0, r1) = (dot(&position, &position).sqrt(), dot(&c, &c).sqrt());
            c = c.map(|x| x * r0 / r1);
        }
        frame = ctx.frame(start, c);
    }
    let ball = ctx.ball(start, &frame, r);
    if ball.len() < 12 {
        return undetermined(frame.center);
    }
    let pts: Vec<[f64; 2]> = ball.iter().map(|(_, x)| [x[0] / r, x[1] / r]).collect();
    let vals: Vec<f64> = ball.iter().map(|(v, _)| ctx.u[*v]).collect();
    let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return undetermined(frame.center);
    }
    let mut residuals = Vec::with_capacity(options.n_max);
    for n in 1..=options.n_max {
        let cols = vec![
            pts.iter().map(|&z| cpow(z, n)[0]).collect::<Vec<_>>(),
            pts.iter().map(|&z| cpow(z, n)[1]).collect(),
        ];
        let res = match lstsq(&cols, &vals) {
            Some(c) => {
                let e: f64 = (0..vals.len()).map(|i| (vals[i] - c[0] * cols[0][i] - c[1] * cols[1][i]).powi(2)).sum();
                e.sqrt() / norm
            }
            None => f64::INFINITY,
        };
        residuals.push(res);
    }
    let (best, residual) = residuals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &r)| if r < acc.1 { (i, r) } else { acc });
    let segments = ctx.local_segments(&ball, &frame);
    let branch_angles = circle_crossings(&segments, 2.0 / 3.0 * r);
    OrderFit {
        location: frame.center,
        order: residual.is_finite().then_some(best + 1),
        residual,
        residuals,
        branch_angles,
    }
}

/// Vanishing order at `point` (near vertex `vertex`) by harmonic least squares.
pub fn fit_vanishing_order(
    mesh: &TriMesh,
    u: &[f64],
    analysis: &NodalAnalysis,
    vertex: usize,
    point: Point,
    options: &NodalOptions,
) -> OrderFit {
    let ctx = Context::new(mesh, u, &analysis.graph);
    fit(&ctx, vertex, point, false, options)
}

/// Candidates: zero-set nodes where three or more segments meet, and vertices whose
/// surrounding circle (radius 1.5 mean edges) meets the zero set four or more times.
pub fn detect_singular_points(mesh: &TriMesh, u: &[f64], analysis: &NodalAnalysis, options: &NodalOptions) -> Vec<SingularPoint> {
    let g = &analysis.graph;
    if g.edges.is_empty() {
        return Vec::new();
    }
    let ctx = Context::new(mesh, u, g);
    let h = mesh.mean_edge_length();
    let r_fit = options.r_fit * h;

    // (start vertex, position, exact node?)
    let mut candidates: Vec<(usize, Point, bool)> = Vec::new();
    for (key, d) in g.degree() {
        if d >= 3 {
            let v = match key {
                NodeKey::Vertex(v) | NodeKey::Edge(v, _) => v,
            };
            candidates.push((v, g.positions[&key], matches!(key, NodeKey::Vertex(_))));
        }
    }
    let mut by_circle: Vec<(usize, f64, usize)> = Vec::new();
    for &v in g.by_vertex.keys() {
        let p = mesh.vertices()[v];
        let frame = ctx.frame(v, p);
        let near = ctx.ball(v, &frame, 2.0 * h);
        let count = circle_crossings(&ctx.local_segments(&near, &frame), 1.5 * h).len();
        if count >= 4 {
            by_circle.push((count, u[v].abs(), v));
        }
    }
    by_circle.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    candidates.extend(by_circle.into_iter().map(|(_, _, v)| (v, mesh.vertices()[v], false)));

    let mut kept: Vec<Point> = Vec::new();
    let mut out = Vec::new();
    for (v, p, exact) in candidates {
        let d = |q: &Point| {
            let x = mesh.displacement(q, &p);
            dot(&x, &x).sqrt()
        };
        if kept.iter().any(|q| d(q) < 2.0 * h) {
            continue;
        }
        kept.push(p);
        let frame = ctx.frame(v, p);
        if ctx.touches_boundary(&ctx.ball(v, &frame, r_fit)) {
            continue;
        }
        let f = fit(&ctx, v, p, !exact, options);
        let confident = f.order.is_some_and(|n| f.residual <= options.fit_threshold && f.branch_angles.len() == 2 * n);
        out.push(SingularPoint {
            location: f.location[..mesh.dim()].to_vec(),
            vertex: v,
            order: f.order,
            branch_angles: f.branch_angles,
            fit_residual: f.residual,
            residuals: f.residuals,
            confident,
        });
    }
    out
}
