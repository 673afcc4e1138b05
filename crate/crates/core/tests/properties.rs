use std::f64::consts::PI;

use driftspec::assembly::assemble;
use driftspec::eigensolve::{relative_residual, smallest};
use driftspec::field::{parse, FieldSpec, ParamValue, ScalarField};
use driftspec::mesh::{disk_rings, edge_components, extract_submesh, generate, rectangle_grid, refine, Shape, TriMesh};
use driftspec::nodal::{analyze, max_angle_deviation, NodalOptions};
use driftspec::verify::loglog_slope;
use driftspec::ProblemKind;
use proptest::prelude::*;

const EXPRESSIONS_2D: [&str; 22] = [
    "x",
    "x*y",
    "x^2 + y^2",
    "(x^2 + y^2)/2",
    "exp(-x*y)",
    "sin(x)*cos(y)",
    "sqrt(x^2 + y^2 + 1)",
    "log(1 + x^2)",
    "x^3 - 3*x*y^2",
    "1/(1 + x^2 + y^2)",
    "exp(sin(x))",
    "-2*exp(-((x-0.5)^2 + (y-0.5)^2)/0.25)",
    "cos(x*y)^2",
    "x^2.5",
    "2 - cos(x) - cos(y)",
    "pi*x - y/pi",
    "(x - y)^4",
    "sin(x + y)/(2 + cos(x - y))",
    "log(x*y)",
    "sqrt(x)*y",
    "x^(-1.5) + y",
    "exp(-x)*sin(3*y)",
];

const EXPRESSIONS_3D: [&str; 4] = ["x*y*z", "-2*exp(-(x^2 + y^2 + (z-1)^2)/0.25)", "x^2 + y^2 + z^2", "sin(x)*cos(z) + y"];

fn fd_check(f: &ScalarField, p: &[f64]) -> std::result::Result<(), TestCaseError> {
    let g = f.grad(p).unwrap();
    let step = 1e-6;
    for i in 0..p.len() {
        let (mut a, mut b) = (p.to_vec(), p.to_vec());
        a[i] += step;
        b[i] -= step;
        let fd = (f.eval(&a).unwrap() - f.eval(&b).unwrap()) / (2.0 * step);
        prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{f} at {p:?}: d/dx{i} = {} vs fd {fd}", g[i]);
    }
    Ok(())
}

fn builtins(a: f64, b: f64, c: f64, sigma: f64, center: Vec<f64>) -> Vec<FieldSpec> {
    vec![
        FieldSpec::constant(c),
        FieldSpec::builtin("linear", &[("a", ParamValue::Scalar(a)), ("b", ParamValue::Scalar(b))]),
        FieldSpec::builtin("radial_quadratic", &[("c", ParamValue::Scalar(c))]),
        FieldSpec::builtin(
            "gaussian_well",
            &[("amplitude", ParamValue::Scalar(a)), ("sigma", ParamValue::Scalar(sigma)), ("center", ParamValue::Vector(center))],
        ),
    ]
}

/// Random expression source over x, y.
fn expr_source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|n| format!("{}", f64::from(n) / 100.0)),
        Just("x".to_string()),
        Just("y".to_string()),
        Just("pi".to_string()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof![Just("+"), Just("-"), Just("*"), Just("/")])
                .prop_map(|(a, b, op)| format!("({a}) {op} {b}")),
            inner.clone().prop_map(|a| format!("-{a}")),
            (inner.clone(), -3i32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            (inner, prop_oneof![Just("exp"), Just("sin"), Just("cos"), Just("sqrt"), Just("log")]).prop_map(|(a, f)| format!("{f}({a})")),
        ]
    })
}

fn euler_ok(m: &TriMesh) -> bool {
    match (m.is_closed(), m.genus()) {
        (true, Some(g)) => m.euler_characteristic() == 2 - 2 * i64::from(g),
        (false, _) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn builtin_gradients_match_finite_differences(
        x in -1.5f64..1.5, y in -1.5f64..1.5,
        a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, sigma in 0.3f64..2.0,
        cx in -1.0f64..1.0, cy in -1.0f64..1.0,
    ) {
        for spec in builtins(a, b, c, sigma, vec![cx, cy]) {
            fd_check(&spec.build(2).unwrap(), &[x, y])?;
        }
    }

    #[test]
    fn expression_gradients_match_finite_differences(x in 0.2f64..1.5, y in 0.2f64..1.5, z in -1.0f64..1.0) {
        for src in EXPRESSIONS_2D {
            fd_check(&ScalarField::expression(src, 2).unwrap(), &[x, y])?;
        }
        for src in EXPRESSIONS_3D {
            fd_check(&ScalarField::expression(src, 3).unwrap(), &[x, y, z])?;
        }
    }

    #[test]
    fn print_parse_round_trip(src in expr_source()) {
        let ast = parse(&src, 2).unwrap();
        let printed = ast.to_string();
        let again = parse(&printed, 2).unwrap();
        prop_assert_eq!(&again, &ast);
        prop_assert_eq!(again.to_string(), printed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_meshes_satisfy_invariants(shape_id in 0usize..5, h in 0.08f64..0.4) {
        let shape = match shape_id {
            0 => Shape::Rectangle { width: 1.0, height: 0.7 },
            1 => Shape::Disk { radius: 1.0 },
            2 => Shape::Annulus { r_in: 0.4, r_out: 1.0 },
            3 => Shape::FlatTorus { lx: 2.0 * PI, ly: 2.0 * PI },
            _ => Shape::Sphere { radius: 1.0 },
        };
        let h = if shape_id == 3 { 4.0 * h } else { h };
        let m = match generate(&shape, h) {
            Err(driftspec::Error::TooCoarse { .. }) => return Err(TestCaseError::reject("below the generator's minimum size")),
            other => other.unwrap(),
        };
        prop_assert!(euler_ok(&m));
        prop_assert!(m.min_angle_degrees() >= 10.0);
        prop_assert!((0..m.num_triangles()).all(|t| m.triangle_area(t) > 0.0));
        let r = refine(&m).unwrap();
        prop_assert_eq!(r.num_triangles(), 4 * m.num_triangles());
        prop_assert!(euler_ok(&r));
        prop_assert_eq!(r.genus(), m.genus());
        let back = TriMesh::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &m);
    }

    #[test]
    fn submesh_area_is_exact_sum(n in 3usize..9, cut in 0.2f64..0.8) {
        let m = rectangle_grid(1.0, 1.0, n, n).unwrap();
        let sel: Vec<usize> = (0..m.num_triangles()).filter(|&t| m.triangle_points(t).iter().map(|p| p[0]).sum::<f64>() / 3.0 < cut).collect();
        prop_assume!(!sel.is_empty());
        let mut covered = 0;
        for mut comp in edge_components(&m, &sel) {
            comp.sort_unstable();
            let ex = extract_submesh(&m, &comp, None).unwrap();
            let expected: f64 = comp.iter().map(|&t| m.triangle_area(t)).sum();
            prop_assert_eq!(ex.submesh.total_area(), expected);
            prop_assert_eq!(ex.submesh.num_triangles(), comp.len());
            covered += comp.len();
        }
        prop_assert_eq!(covered, sel.len());
    }

    #[test]
    fn assembly_is_symmetric_and_scales_with_shift(
        n in 3usize..10, amp in -3.0f64..3.0, sigma in 0.2f64..1.0, c in -40.0f64..40.0, closed in any::<bool>(),
    ) {
        let (m, kind) = if closed {
            (generate(&Shape::FlatTorus { lx: 1.0, ly: 1.0 }, 1.0 / n as f64).unwrap(), ProblemKind::Closed)
        } else {
            (rectangle_grid(1.0, 1.0, n, n).unwrap(), ProblemKind::Dirichlet)
        };
        let phi = FieldSpec::builtin("gaussian_well", &[
            ("amplitude", ParamValue::Scalar(amp)), ("sigma", ParamValue::Scalar(sigma)), ("center", ParamValue::Vector(vec![0.5, 0.5])),
        ]).build(2).unwrap();
        let pot = ScalarField::expression("1 + x*y", 2).unwrap();
        let op = assemble(&m, &phi, Some(&pot), kind).unwrap();
        prop_assert!(op.stiffness.is_symmetric());
        prop_assert!(op.mass.is_symmetric());
        prop_assert!(op.potential.as_ref().unwrap().is_symmetric());
        let shifted = assemble(&m, &phi.clone().offset(c), Some(&pot), kind).unwrap();
        let ratio = shifted.weight_scale() / op.weight_scale();
        prop_assert!((ratio / (-c).exp() - 1.0).abs() < 1e-12);
        prop_assert!((shifted.weighted_volume() / op.weighted_volume() / (-c).exp() - 1.0).abs() < 1e-12);
        for (a, b) in op.stiffness.triplets().iter().zip(shifted.stiffness.triplets()) {
            prop_assert_eq!((a.0, a.1), (b.0, b.1));
            prop_assert!((a.2 - b.2).abs() <= 1e-12 * a.2.abs().max(1e-300));
        }
    }

    #[test]
    fn bilinear_form_localizes_to_domain_triangles(n in 6usize..14, kx in 1.0f64..3.0, ky in 0.5f64..3.0, s in 0.0f64..1.0, seed in 0u64..1000) {
        let m = rectangle_grid(1.0, 1.0, n, n).unwrap();
        let phi = ScalarField::expression("(x^2 + y^2)/2", 2).unwrap();
        let u: Vec<f64> = m.vertices().iter().map(|p| (kx * PI * p[0] + ky * PI * p[1] + s).sin()).collect();
        let a = analyze(&m, &u, None, &NodalOptions::default()).unwrap();
        let tris = a.domain_triangles(&m, &u).into_iter().max_by_key(Vec::len).unwrap();
        let comp = edge_components(&m, &tris).into_iter().max_by_key(Vec::len).unwrap();
        let ex = extract_submesh(&m, &comp, Some(0)).unwrap();
        let sub = &ex.submesh;
        let inner: Vec<usize> = (0..sub.num_vertices()).filter(|&v| !sub.is_boundary(v)).collect();
        prop_assume!(!inner.is_empty());
        let parent = assemble(&m, &phi, None, ProblemKind::Dirichlet).unwrap();
        let local = assemble(sub, &phi, None, ProblemKind::Dirichlet).unwrap();
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
        let (mut x_sub, mut y_sub) = (vec![0.0; sub.num_vertices()], vec![0.0; sub.num_vertices()]);
        let (mut x_par, mut y_par) = (vec![0.0; m.num_vertices()], vec![0.0; m.num_vertices()]);
        for &v in &inner {
            let (p, q) = (next(), next());
            x_sub[v] = p; y_sub[v] = q;
            x_par[ex.vertex_lift[v]] = p; y_par[ex.vertex_lift[v]] = q;
        }
        let whole = parent.weight_scale() * parent.stiffness.bilinear(&parent.restrict(&x_par), &parent.restrict(&y_par));
        let part = local.weight_scale() * local.stiffness.bilinear(&local.restrict(&x_sub), &local.restrict(&y_sub));
        prop_assert!((whole - part).abs() <= 1e-12 * whole.abs().max(part.abs()).max(1e-300), "{whole} vs {part}");
    }

    #[test]
    fn domain_count_invariant_under_scaling(n in 6usize..16, kx in 0.5f64..4.0, ky in 0.5f64..4.0, s in -1.0f64..1.0, c in prop_oneof![-1e6f64..-1e-6, 1e-6f64..1e6]) {
        let m = rectangle_grid(1.0, 1.0, n, n).unwrap();
        let u: Vec<f64> = m.vertices().iter().map(|p| (kx * PI * p[0]).sin() * (ky * PI * p[1] + s).cos()).collect();
        let opts = NodalOptions::default();
        let a = analyze(&m, &u, None, &opts).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| c * v).collect();
        let b = analyze(&m, &scaled, None, &opts).unwrap();
        prop_assert_eq!(a.domain_count, b.domain_count);
        let flipped: Vec<i8> = a.sign_labels.iter().map(|s| if c < 0.0 { -s } else { *s }).collect();
        prop_assert_eq!(flipped, b.sign_labels);
    }

    #[test]
    fn harmonic_crossings_are_equiangular(order in 1usize..5, theta in 0.0f64..PI) {
        // Re(e^{-iNθ} z^N) centred on a grid vertex: 2N rays at spacing π/N.
        let m = rectangle_grid(2.0, 2.0, 40, 40).unwrap();
        let u: Vec<f64> = m.vertices().iter().map(|p| {
            let (x, y) = (p[0] - 1.0, p[1] - 1.0);
            (x.hypot(y)).powi(order as i32) * (order as f64 * (y.atan2(x) - theta)).cos()
        }).collect();
        let a = analyze(&m, &u, None, &NodalOptions::default()).unwrap();
        prop_assert_eq!(a.domain_count, 2 * order);
        let conf: Vec<_> = a.confident_points().collect();
        if order == 1 {
            prop_assert!(conf.iter().all(|p| p.order == Some(1)));
        } else {
            prop_assert_eq!(conf.len(), 1);
            let p = conf[0];
            prop_assert_eq!(p.order, Some(order));
            prop_assert_eq!(p.branch_angles.len(), 2 * order);
            prop_assert!(max_angle_deviation(&p.branch_angles, order) <= 10.0);
            prop_assert!((p.location[0] - 1.0).hypot(p.location[1] - 1.0) < 0.1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solves_are_orthonormal_deterministic_and_shift_invariant(n in 8usize..30, amp in -2.0f64..2.0, c in -30.0f64..30.0, seed in 0u64..50) {
        let m = rectangle_grid(1.0, 1.0, n, n).unwrap();
        let phi = ScalarField::expression(&format!("{amp}*x*y"), 2).unwrap();
        let op = assemble(&m, &phi, None, ProblemKind::Dirichlet).unwrap();
        let k = 6.min(op.num_dofs() - 1);
        let s = smallest(&op, k, 1e-10, seed).unwrap();
        let a = op.operator_matrix();
        for (i, x) in s.eigenvectors.iter().enumerate() {
            prop_assert!(relative_residual(&a, &op.mass, s.eigenvalues[i], x) <= 1e-10);
            for (j, y) in s.eigenvectors.iter().enumerate() {
                let g = op.mass.bilinear(x, y);
                let expected = f64::from(u8::from(i == j));
                prop_assert!((g - expected).abs() <= 1e-8);
            }
        }
        let again = smallest(&op, k, 1e-10, seed).unwrap();
        prop_assert_eq!(&again.eigenvalues, &s.eigenvalues);
        prop_assert_eq!(&again.eigenvectors, &s.eigenvectors);
        let constant = smallest(&assemble(&m, &ScalarField::constant(c, 2).unwrap(), None, ProblemKind::Dirichlet).unwrap(), k, 1e-10, seed).unwrap();
        let plain = smallest(&assemble(&m, &ScalarField::zero(2), None, ProblemKind::Dirichlet).unwrap(), k, 1e-10, seed).unwrap();
        for (x, y) in constant.eigenvalues.iter().zip(&plain.eigenvalues) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn dirichlet_eigenvalues_decrease_under_refinement(amp in -2.0f64..2.0, sigma in 0.3f64..1.0) {
        let phi = FieldSpec::builtin("gaussian_well", &[
            ("amplitude", ParamValue::Scalar(amp)), ("sigma", ParamValue::Scalar(sigma)), ("center", ParamValue::Vector(vec![0.5, 0.5])),
        ]).build(2).unwrap();
        let mut m = rectangle_grid(1.0, 1.0, 6, 6).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for _ in 0..4 {
            let s = smallest(&assemble(&m, &phi, None, ProblemKind::Dirichlet).unwrap(), 4, 1e-10, 0).unwrap();
            if let Some(p) = &prev {
                for (old, new) in p.iter().zip(&s.eigenvalues) {
                    prop_assert!(*new <= old + 1e-10 * old.abs(), "{old} -> {new}");
                }
            }
            prev = Some(s.eigenvalues);
            m = refine(&m).unwrap();
        }
    }

    #[test]
    fn separable_domain_counts_stable_under_refinement(p in 1usize..4, q in 1usize..4) {
        let mut m = rectangle_grid(1.0, 1.0, 12, 12).unwrap();
        for _ in 0..4 {
            let u: Vec<f64> = m.vertices().iter().map(|v| (p as f64 * PI * v[0]).sin() * (q as f64 * PI * v[1]).sin()).collect();
            let a = analyze(&m, &u, None, &NodalOptions::default()).unwrap();
            prop_assert_eq!(a.domain_count, p * q);
            m = refine(&m).unwrap();
        }
    }
}

#[test]
fn rayleigh_quotient_of_interpolant_converges_quadratically() {
    let mut m = rectangle_grid(1.0, 1.0, 8, 8).unwrap();
    let zero = ScalarField::zero(2);
    let (mut hs, mut errs) = (Vec::new(), Vec::new());
    for _ in 0..4 {
        let op = assemble(&m, &zero, None, ProblemKind::Dirichlet).unwrap();
        let u: Vec<f64> = m.vertices().iter().map(|p| (PI * p[0]).sin() * (PI * p[1]).sin()).collect();
        let r = op.rayleigh(&op.restrict(&u)).unwrap();
        hs.push(m.mean_edge_length());
        errs.push((r - 2.0 * PI * PI).abs());
        m = refine(&m).unwrap();
    }
    let slope = loglog_slope(&hs, &errs);
    assert!((slope - 2.0).abs() <= 0.3, "slope {slope}, errors {errs:?}");
}

#[test]
fn disk_eigenvalues_decrease_under_refinement() {
    let mut m = disk_rings(1.0, 4).unwrap();
    let mut prev = f64::INFINITY;
    for _ in 0..4 {
        let l = smallest(&assemble(&m, &ScalarField::zero(2), None, ProblemKind::Dirichlet).unwrap(), 2, 1e-10, 0).unwrap().eigenvalues[0];
        assert!(l <= prev + 1e-10 * prev.abs(), "{prev} -> {l}");
        prev = l;
        m = refine(&m).unwrap();
    }
}
