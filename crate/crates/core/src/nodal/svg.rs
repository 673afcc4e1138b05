use std::collections::BTreeMap;
use std::fmt::Write;

use super::NodalAnalysis;
use crate::mesh::TriMesh;

const SIZE: f64 = 1000.0;
const MARGIN: f64 = 20.0;

struct Chart {
    min: [f64; 2],
    scale: f64,
    offset_x: f64,
}

impl Chart {
    fn map(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.offset_x + MARGIN + (p[0] - self.min[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.min[1]) * self.scale,
        ]
    }
}

fn path(out: &mut String, runs: &[Vec<[f64; 2]>], style: &str) {
    let mut d = String::new();
    for run in runs.iter().filter(|r| r.len() > 1) {
        for (i, p) in run.iter().enumerate() {
            let _ = write!(d, "{}{:.3} {:.3} ", if i == 0 { "M" } else { "L" }, p[0], p[1]);
        }
    }
    if !d.is_empty() {
        let _ = writeln!(out, r#"<path d="{}" {style}/>"#, d.trim_end());
    }
}

/// Splits a chart-space polyline wherever consecutive points jump by more than `max_jump`.
fn split_runs(points: &[[f64; 2]], max_jump: f64) -> Vec<Vec<[f64; 2]>> {
    let mut runs: Vec<Vec<[f64; 2]>> = vec![Vec::new()];
    for p in points {
        if let Some(q) = runs.last().and_then(|r| r.last()) {
            if (p[0] - q[0]).hypot(p[1] - q[1]) > max_jump {
                runs.push(Vec::new());
            }
        }
        runs.last_mut().expect("nonempty").push(*p);
    }
    runs
}

fn boundary_edges(mesh: &TriMesh) -> Vec<[usize; 2]> {
    let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for tri in mesh.triangles() {
        for k in 0..3 {
            let (a, b) = (mesh.canonical(tri[k]), mesh.canonical(tri[(k + 1) % 3]));
            *count.entry([a.min(b), a.max(b)]).or_insert(0) += 1;
        }
    }
    count.into_iter().filter(|(_, c)| *c == 1).map(|(e, _)| e).collect()
}

/// Nodal polylines over the domain outline. Planar and periodic meshes use one chart;
/// surfaces in space use two orthographic hemisphere charts (z ≥ 0 left, z < 0 right, mirrored).
pub fn render_svg(mesh: &TriMesh, analysis: &NodalAnalysis) -> String {
    let mut out = String::new();
    let line = r##"fill="none" stroke="#c0392b" stroke-width="2""##;
    let outline = r##"fill="none" stroke="#555555" stroke-width="1""##;
    if mesh.dim() == 2 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.vertices() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let chart = Chart {
            min: lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
            offset_x: 0.0,
        };
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SIZE} {SIZE}">"#);
        let edges: Vec<Vec<[f64; 2]>> = if mesh.is_periodic() {
            vec![vec![chart.map(lo), chart.map([hi[0], lo[1]]), chart.map(hi), chart.map([lo[0], hi[1]]), chart.map(lo)]]
        } else {
            boundary_edges(mesh)
                .into_iter()
                .map(|[a, b]| {
                    let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
                    vec![chart.map([p[0], p[1]]), chart.map([q[0], q[1]])]
                })
                .collect()
        };
        path(&mut out, &edges, outline);
        let mut runs = Vec::new();
        for pl in &analysis.segments {
            let wrap = |x: f64, k: usize| if mesh.is_periodic() { lo[k] + (x - lo[k]).rem_euclid(hi[k] - lo[k]) } else { x };
            let pts: Vec<[f64; 2]> = pl.points.iter().map(|p| chart.map([wrap(p[0], 0), wrap(p[1], 1)])).collect();
            runs.extend(split_runs(&pts, 0.5 * (SIZE - 2.0 * MARGIN)));
        }
        path(&mut out, &runs, line);
    } else {
        let r = mesh.vertices().iter().map(|p| p[0].hypot(p[1]).hypot(p[2])).fold(0.0, f64::max);
        let charts = [0.0, SIZE].map(|offset_x| Chart {
            min: [-r, -r],
            scale: (SIZE - 2.0 * MARGIN) / (2.0 * r),
            offset_x,
        });
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {} {SIZE}">"#, 2.0 * SIZE);
        for c in &charts {
            let circle: Vec<[f64; 2]> = (0..=128)
                .map(|i| {
                    let t = i as f64 * std::f64::consts::TAU / 128.0;
                    c.map([r * t.cos(), r * t.sin()])
                })
                .collect();
            path(&mut out, &[circle], outline);
        }
        let mut runs: Vec<Vec<[f64; 2]>> = Vec::new();
        for pl in &analysis.segments {
            let mut last_side = None;
            for p in &pl.points {
                let side = usize::from(p[2] < 0.0);
                let xy = if side == 0 { [p[0], p[1]] } else { [-p[0], p[1]] };
                let q = charts[side].map(xy);
                if last_side != Some(side) {
                    runs.push(Vec::new());
                    last_side = Some(side);
                }
                runs.last_mut().expect("nonempty").push(q);
            }
        }
        path(&mut out, &runs, line);
    }
    for sp in analysis.singular_points.iter().filter(|s| s.confident) {
        let _ = writeln!(out, "<!-- singular point order {} -->", sp.order.unwrap_or(0));
    }
    out.push_str("</svg>\n");
    out
}
