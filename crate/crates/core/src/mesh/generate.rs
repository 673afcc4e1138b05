//! Deterministic generators for the canonical test domains.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{cross, dot, norm, sub, Point, TriMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Disk { radius: f64 },
    Rectangle { width: f64, height: f64 },
    Annulus { r_in: f64, r_out: f64 },
    FlatTorus { lx: f64, ly: f64 },
    Sphere { radius: f64 },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Disk { .. } => "disk",
            Shape::Rectangle { .. } => "rectangle",
            Shape::Annulus { .. } => "annulus",
            Shape::FlatTorus { .. } => "flat_torus",
            Shape::Sphere { .. } => "sphere",
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidShape(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            Shape::Disk { radius } | Shape::Sphere { radius } => positive("radius", radius),
            Shape::Rectangle { width, height } => {
                positive("width", width)?;
                positive("height", height)
            }
            Shape::FlatTorus { lx, ly } => {
                positive("lx", lx)?;
                positive("ly", ly)
            }
            Shape::Annulus { r_in, r_out } => {
                positive("r_in", r_in)?;
                positive("r_out", r_out)?;
                if r_in >= r_out {
                    return Err(Error::InvalidShape(format!("annulus needs r_in < r_out, got {r_in} >= {r_out}")));
                }
                Ok(())
            }
        }
    }
}

/// Number of intervals of size at most `h` covering `len` (ignoring roundoff just above an integer).
fn intervals(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

/// Generates a mesh of `shape` with mean edge length close to `target_h`.
pub fn generate(shape: &Shape, target_h: f64) -> Result<TriMesh> {
    shape.validate()?;
    if !(target_h.is_finite() && target_h > 0.0) {
        return Err(Error::InvalidShape(format!("target_h must be positive, got {target_h}")));
    }
    let mesh = match *shape {
        Shape::Rectangle { width, height } => {
            rectangle_grid(width, height, intervals(width, target_h), intervals(height, target_h))?
        }
        Shape::FlatTorus { lx, ly } => {
            let even = |n: usize| n.max(2).div_ceil(2) * 2;
            torus_grid(lx, ly, even(intervals(lx, target_h)), even(intervals(ly, target_h)))?
        }
        Shape::Disk { radius } => disk_rings(radius, intervals(radius, target_h))?,
        Shape::Annulus { r_in, r_out } => annulus_rings(r_in, r_out, intervals(r_out - r_in, target_h))?,
        Shape::Sphere { radius } => {
            // Level-0 icosahedron edge is about 1.0515 r; each level halves it.
            let ratio = 1.0515 * radius / target_h;
            let level = if ratio <= 1.0 { 0 } else { ratio.log2().round() as u32 };
            if level > 9 {
                return Err(Error::InvalidShape(format!("target_h {target_h} needs icosphere level {level} (> 9)")));
            }
            icosphere(radius, level)?
        }
    };
    let mean = mesh.mean_edge_length();
    if mesh.num_triangles() < 16 || mean > 2.0 * target_h || mean < 0.5 * target_h {
        return Err(Error::TooCoarse {
            shape: shape.name().into(),
            target_h,
        });
    }
    Ok(mesh)
}

fn grid_triangles(nx: usize, ny: usize) -> Vec<[usize; 3]> {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // Alternate the diagonal so the pattern is symmetric under the grid reflections.
            if (i + j) % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    tris
}

fn grid_vertices(w: f64, h: f64, nx: usize, ny: usize) -> Vec<Point> {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push([w * i as f64 / nx as f64, h * j as f64 / ny as f64, 0.0]);
        }
    }
    v
}

/// `[0,w] x [0,h]` split into `nx * ny` cells, two triangles each, with alternating diagonals.
pub fn rectangle_grid(w: f64, h: f64, nx: usize, ny: usize) -> Result<TriMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidShape("grid needs at least one cell per direction".into()));
    }
    TriMesh::new(2, grid_vertices(w, h, nx, ny), grid_triangles(nx, ny), None, None)
}

/// Flat torus `[0,lx) x [0,ly)` on an `nx * ny` periodic grid (`nx`, `ny` even).
pub fn torus_grid(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<TriMesh> {
    if nx < 2 || ny < 2 || !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
        return Err(Error::InvalidShape(format!("periodic grid needs even cell counts >= 2, got {nx} x {ny}")));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut pairs = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if i == nx || j == ny {
                pairs.push([id(i % nx, j % ny), id(i, j)]);
            }
        }
    }
    TriMesh::new(2, grid_vertices(lx, ly, nx, ny), grid_triangles(nx, ny), Some(pairs), Some(1))
}

/// Triangulates the strip between two concentric rings (both listed counterclockwise,
/// starting near angle 0), always adding the shorter diagonal.
fn zip_rings(inner: &[usize], outer: &[usize], verts: &[Point], tris: &mut Vec<[usize; 3]>) {
    let (ma, mb) = (inner.len(), outer.len());
    let (mut i, mut j) = (0, 0);
    while i < ma || j < mb {
        let a = inner[i % ma];
        let b = outer[j % mb];
        let advance_inner = if i == ma {
            false
        } else if j == mb {
            true
        } else {
            let a_next = verts[inner[(i + 1) % ma]];
            let b_next = verts[outer[(j + 1) % mb]];
            norm(&sub(&a_next, &verts[b])) <= norm(&sub(&b_next, &verts[a]))
        };
        if advance_inner {
            tris.push([a, b, inner[(i + 1) % ma]]);
            i += 1;
        } else {
            tris.push([a, b, outer[(j + 1) % mb]]);
            j += 1;
        }
    }
}

/// Disk of radius `radius` built from `rings` concentric rings with `6j` vertices on ring `j`.
pub fn disk_rings(radius: f64, rings: usize) -> Result<TriMesh> {
    if rings == 0 || !(radius > 0.0) {
        return Err(Error::InvalidShape("disk needs a positive radius and at least one ring".into()));
    }
    let mut verts = vec![[0.0, 0.0, 0.0]];
    let mut ring_ids: Vec<Vec<usize>> = vec![vec![0]];
    for j in 1..=rings {
        let r = radius * j as f64 / rings as f64;
        let m = 6 * j;
        let ids: Vec<usize> = (0..m)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / m as f64;
                verts.push([r * th.cos(), r * th.sin(), 0.0]);
                verts.len() - 1
            })
            .collect();
        ring_ids.push(ids);
    }
    let mut tris = Vec::new();
    for i in 0..6 {
        tris.push([0, ring_ids[1][i], ring_ids[1][(i + 1) % 6]]);
    }
    for j in 2..=rings {
        zip_rings(&ring_ids[j - 1], &ring_ids[j], &verts, &mut tris);
    }
    TriMesh::new(2, verts, tris, None, None)
}

fn annulus_rings(r_in: f64, r_out: f64, rings: usize) -> Result<TriMesh> {
    let dr = (r_out - r_in) / rings as f64;
    let mut verts = Vec::new();
    let mut ring_ids = Vec::new();
    for j in 0..=rings {
        let r = r_in + dr * j as f64;
        let m = ((2.0 * PI * r / dr).round() as usize).max(6);
        let offset = if j % 2 == 1 { PI / m as f64 } else { 0.0 };
        let ids: Vec<usize> = (0..m)
            .map(|i| {
                let th = offset + 2.0 * PI * i as f64 / m as f64;
                verts.push([r * th.cos(), r * th.sin(), 0.0]);
                verts.len() - 1
            })
            .collect();
        ring_ids.push(ids);
    }
    let mut tris = Vec::new();
    for j in 1..=rings {
        zip_rings(&ring_ids[j - 1], &ring_ids[j], &verts, &mut tris);
    }
    TriMesh::new(2, verts, tris, None, None)
}

/// Icosahedron projected to the sphere of `radius`, subdivided `level` times (outward orientation).
pub fn icosphere(radius: f64, level: u32) -> Result<TriMesh> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidShape(format!("radius must be positive, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw: [Point; 12] = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let project = |p: Point| {
        let l = norm(&p);
        [radius * p[0] / l, radius * p[1] / l, radius * p[2] / l]
    };
    let mut verts: Vec<Point> = raw.iter().map(|&p| project(p)).collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for tri in &mut tris {
        let p = tri.map(|i| verts[i]);
        let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
        let c = [p[0][0] + p[1][0] + p[2][0], p[0][1] + p[1][1] + p[2][1], p[0][2] + p[1][2] + p[2][2]];
        if dot(&n, &c) < 0.0 {
            tri.swap(1, 2);
        }
    }
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        for tri in &tris {
            let mut m = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    let (pa, pb) = (verts[a], verts[b]);
                    verts.push(project([pa[0] + pb[0], pa[1] + pb[1], pa[2] + pb[2]]));
                    verts.len() - 1
                });
            }
            let [a, b, c] = *tri;
            next.push([a, m[0], m[2]]);
            next.push([m[0], b, m[1]]);
            next.push([m[2], m[1], c]);
            next.push([m[0], m[1], m[2]]);
        }
        tris = next;
    }
    TriMesh::new(3, verts, tris, None, Some(0))
}
