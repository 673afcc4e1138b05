//! Closed-form spectra of the unweighted Laplacian on the canonical shapes.

use std::f64::consts::PI;

use crate::mesh::Shape;

/// Bessel function of the first kind by its power series. Accurate to ~1e-12 for `x` ≤ 20.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = (1..=n).fold(1.0, |t, k| t * half / f64::from(k));
    let mut sum = term;
    let q = -half * half;
    for m in 1..200u32 {
        term *= q / (f64::from(m) * f64::from(m + n));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && m > 4 {
            break;
        }
    }
    sum
}

/// The m-th positive zero (1-based) of J_n, bracketed on a 0.05 grid and bisected.
pub fn bessel_zero(n: u32, m: usize) -> f64 {
    assert!(m >= 1, "zeros are numbered from 1");
    let step = 0.05;
    let mut a = 0.5 * step + if n == 0 { 0.0 } else { f64::from(n) };
    let mut fa = bessel_j(n, a);
    let mut found = 0;
    loop {
        let b = a + step;
        let fb = bessel_j(n, b);
        if fa * fb <= 0.0 {
            found += 1;
            if found == m {
                let (mut lo, mut hi, mut flo) = (a, b, fa);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let fm = bessel_j(n, mid);
                    if (fm < 0.0) == (flo < 0.0) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
        }
        a = b;
        fa = fb;
    }
}

fn smallest_sorted(mut v: Vec<f64>, count: usize) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.truncate(count);
    v
}

/// Dirichlet eigenvalues of the `w × h` rectangle, with multiplicity.
pub fn rectangle_dirichlet(w: f64, h: f64, count: usize) -> Vec<f64> {
    let n = count + 1;
    let mut v = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            v.push(PI * PI * ((i * i) as f64 / (w * w) + (j * j) as f64 / (h * h)));
        }
    }
    smallest_sorted(v, count)
}

/// Dirichlet eigenvalues of the disk, j_{n,m}²/R² with multiplicity 2 for n ≥ 1.
pub fn disk_dirichlet(radius: f64, count: usize) -> Vec<f64> {
    let mut v = Vec::new();
    for n in 0..=count as u32 {
        for m in 1..=count.div_ceil(2).max(1) {
            let z = bessel_zero(n, m) / radius;
            v.push(z * z);
            if n > 0 {
                v.push(z * z);
            }
        }
    }
    smallest_sorted(v, count)
}

/// l(l+1)/R² with multiplicity 2l+1.
pub fn sphere_closed(radius: f64, count: usize) -> Vec<f64> {
    let mut v = Vec::new();
    let mut l = 0usize;
    while v.len() < count {
        let lam = (l * (l + 1)) as f64 / (radius * radius);
        v.extend(std::iter::repeat_n(lam, 2 * l + 1));
        l += 1;
    }
    v.truncate(count);
    v
}

/// (2πm/lx)² + (2πn/ly)² over all integer pairs.
pub fn flat_torus_closed(lx: f64, ly: f64, count: usize) -> Vec<f64> {
    let r = count as i64 + 1;
    let mut v = Vec::new();
    for m in -r..=r {
        for n in -r..=r {
            let a = 2.0 * PI * m as f64 / lx;
            let b = 2.0 * PI * n as f64 / ly;
            v.push(a * a + b * b);
        }
    }
    smallest_sorted(v, count)
}

/// First `count` exact eigenvalues for shapes with a separable spectrum (φ ≡ const, h ≡ 0).
/// Dirichlet for shapes with boundary, closed otherwise. The annulus has none.
pub fn spectrum(shape: &Shape, count: usize) -> Option<Vec<f64>> {
    match *shape {
        Shape::Rectangle { width, height } => Some(rectangle_dirichlet(width, height, count)),
        Shape::Disk { radius } => Some(disk_dirichlet(radius, count)),
        Shape::Sphere { radius } => Some(sphere_closed(radius, count)),
        Shape::FlatTorus { lx, ly } => Some(flat_torus_closed(lx, ly, count)),
        Shape::Annulus { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_values_match_tables() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-12);
    }

    #[test]
    fn bessel_zeros_match_tables() {
        let table = [
            (0, 1, 2.404_825_557_695_773),
            (0, 2, 5.520_078_110_286_311),
            (1, 1, 3.831_705_970_207_512),
            (1, 2, 7.015_586_669_815_619),
            (2, 1, 5.135_622_301_840_683),
            (3, 1, 6.380_161_895_923_983),
        ];
        for (n, m, z) in table {
            assert!((bessel_zero(n, m) - z).abs() < 1e-11, "j_{n},{m}");
        }
    }

    #[test]
    fn separable_spectra() {
        let s = rectangle_dirichlet(1.0, 1.0, 4);
        let p2 = PI * PI;
        assert_eq!(s, vec![2.0 * p2, 5.0 * p2, 5.0 * p2, 8.0 * p2]);
        assert_eq!(sphere_closed(1.0, 9), vec![0.0, 2.0, 2.0, 2.0, 6.0, 6.0, 6.0, 6.0, 6.0]);
        assert_eq!(flat_torus_closed(2.0 * PI, 2.0 * PI, 10), vec![0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 4.0]);
        let d = disk_dirichlet(1.0, 6);
        assert!((d[0] - 5.783_185_962_946_784).abs() < 1e-10);
        assert!((d[1] - d[2]).abs() < 1e-14 && (d[1] - 14.681_970_642_123_893).abs() < 1e-9);
        assert!((d[3] - 26.374_616_427_163_4).abs() < 1e-8);
        assert!((d[5] - 30.471_262_343_662_1).abs() < 1e-8);
        assert!(spectrum(&Shape::Annulus { r_in: 0.5, r_out: 1.0 }, 3).is_none());
    }
}
