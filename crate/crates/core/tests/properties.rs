use std::sync::Arc;

use proptest::prelude::*;

use nematiq::config::parse_config;
use nematiq::diagnostics::{convergence_table, director};
use nematiq::field::{inner_product_h, Field, FieldKind, Ghost};
use nematiq::grid::{Boundary, Grid, GridSpec};
use nematiq::ops::{div_c, forward_grad_sq, grad_c, laplace5};
use nematiq::stepper::SchemeState;
use nematiq::tensor::{
    bulk_energy_density, bulk_force, s_term, sigma_term, stabilized_force, Mat, ModelParams, SymTraceless,
    VelocityGradient,
};

fn sym(dim: usize) -> impl Strategy<Value = SymTraceless> {
    prop::array::uniform5(-2.0..2.0f64).prop_map(move |c| SymTraceless::from_components(dim, &c))
}

fn mat(dim: usize) -> impl Strategy<Value = Mat> {
    prop::array::uniform9(-2.0..2.0f64).prop_map(move |c| Mat::from_fn(dim, |i, j| c[3 * i + j]))
}

fn params() -> impl Strategy<Value = ModelParams> {
    (-1.0..1.0f64, -1.0..1.0f64, 0.1..2.0f64, -1.0..1.0f64).prop_map(|(alpha, beta, gamma, a)| ModelParams {
        alpha,
        beta,
        gamma,
        a,
        ..ModelParams::default()
    })
}

fn symmetric_traceless(m: &Mat, tol: f64) -> bool {
    let d = m.dim;
    m.trace().abs() <= tol && (0..d).all(|i| (0..d).all(|j| (m.a[i][j] - m.a[j][i]).abs() <= tol))
}

fn rotation(angles: [f64; 3]) -> Mat {
    let (a, b, c) = (angles[0], angles[1], angles[2]);
    let rz = Mat::from_fn(3, |i, j| match (i, j) {
        (0, 0) | (1, 1) => a.cos(),
        (0, 1) => -a.sin(),
        (1, 0) => a.sin(),
        (2, 2) => 1.0,
        _ => 0.0,
    });
    let ry = Mat::from_fn(3, |i, j| match (i, j) {
        (0, 0) | (2, 2) => b.cos(),
        (0, 2) => b.sin(),
        (2, 0) => -b.sin(),
        (1, 1) => 1.0,
        _ => 0.0,
    });
    let rx = Mat::from_fn(3, |i, j| match (i, j) {
        (1, 1) | (2, 2) => c.cos(),
        (1, 2) => -c.sin(),
        (2, 1) => c.sin(),
        (0, 0) => 1.0,
        _ => 0.0,
    });
    rz.matmul(&ry).matmul(&rx)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn stretching_and_stress_cancel(dim in 2usize..=3, q in sym(3), g in sym(3), m in mat(3), p in params()) {
        let q = SymTraceless::from_components(dim, q.components());
        let g = SymTraceless::from_components(dim, g.components());
        let mut gu = Mat::from_fn(dim, |i, j| m.a[i][j]);
        let t = gu.trace() / dim as f64;
        for i in 0..dim {
            gu.a[i][i] -= t;
        }
        let gu = VelocityGradient(gu);
        let s = s_term(&gu, &q, &p).to_mat();
        let sig = sigma_term(&q, &g, &p);
        let lhs = s.ddot(&g.to_mat()) + sig.ddot(&gu.0);
        let scale = s.frobenius() * g.to_mat().frobenius() + sig.frobenius() * gu.0.frobenius() + 1e-300;
        prop_assert!(lhs.abs() / scale <= 1e-12);
    }

    #[test]
    fn forces_are_symmetric_traceless(dim in 2usize..=3, q in sym(3), m in mat(3), p in params()) {
        let q = SymTraceless::from_components(dim, q.components());
        let gu = VelocityGradient(Mat::from_fn(dim, |i, j| m.a[i][j]));
        prop_assert!(symmetric_traceless(&bulk_force(&q, &p).to_mat(), 1e-14));
        prop_assert!(symmetric_traceless(&stabilized_force(&q, &p).to_mat(), 1e-14));
        prop_assert!(symmetric_traceless(&s_term(&gu, &q, &p).to_mat(), 1e-14));
    }

    #[test]
    fn bulk_energy_is_rotation_invariant(q in sym(3), angles in prop::array::uniform3(-3.2..3.2f64), p in params()) {
        let r = rotation(angles);
        let rq = SymTraceless::from_mat(&r.matmul(&q.to_mat()).matmul(&r.transpose()));
        let (a, b) = (bulk_energy_density(&q, &p), bulk_energy_density(&rq, &p));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn director_inverts_uniaxial_construction(theta in 0.0..std::f64::consts::TAU, phi in 0.0..std::f64::consts::PI, s0 in 0.01..3.0f64, three in any::<bool>()) {
        let dim = if three { 3 } else { 2 };
        let n = if three { [phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()] } else { [theta.cos(), theta.sin(), 0.0] };
        let m = Mat::from_fn(dim, |i, j| s0 * (n[i] * n[j] - if i == j { 1.0 / dim as f64 } else { 0.0 }));
        let d = director(&SymTraceless::from_mat(&m));
        prop_assert!(!d.isotropic);
        prop_assert!((d.s - s0).abs() <= 1e-10 * s0.max(1.0));
        let dot: f64 = (0..dim).map(|k| d.n[k] * n[k]).sum();
        prop_assert!((dot.abs() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn summation_by_parts_on_random_fields(
        seed in prop::collection::vec(-1.0..1.0f64, 3 * 144),
        len in 0.5..3.0f64,
    ) {
        let g = Grid::new(GridSpec::uniform(2, 12, len, Boundary::Periodic)).unwrap();
        let n = g.ncells();
        let f = Field::from_data(&g, FieldKind::Scalar, seed[..n].to_vec()).unwrap();
        let v = Field::from_data(&g, FieldKind::Vector, seed[n..].to_vec()).unwrap();
        let a = inner_product_h(&div_c(&v, Ghost::Odd), &f).unwrap();
        let b = inner_product_h(&v, &grad_c(&f, Ghost::Odd)).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * (a.abs() + b.abs() + 1e-300));
        let lap = inner_product_h(&laplace5(&f, Ghost::Odd), &f).unwrap();
        let e = forward_grad_sq(&f, Ghost::Odd);
        prop_assert!((lap + e).abs() <= 1e-12 * e);
    }

    #[test]
    fn synthetic_orders_are_recovered(p in 1u32..=2, c in 0.1..10.0f64, base in 1e-3..1e-1f64) {
        let g: Arc<Grid> = Grid::new(GridSpec::uniform(2, 4, 1.0, Boundary::Periodic)).unwrap();
        let runs: Vec<(f64, SchemeState)> = (0..4)
            .map(|k| {
                let dt = base / f64::powi(2.0, k);
                let e = c * dt.powi(p as i32);
                let q = Field::from_fn(&g, FieldKind::Tensor, |x, o| { o[0] = x[0] + e; o[1] = e; });
                let u = Field::from_fn(&g, FieldKind::Vector, |_, o| { o[0] = e; o[1] = -e; });
                (dt, SchemeState { q, u, p: Field::zeros(&g, FieldKind::Scalar), r: 1.0 + e, t: 0.0, step: 0, warm: None })
            })
            .collect();
        let table = convergence_table(&runs).unwrap();
        for o in table.all_orders() {
            prop_assert!((o - p as f64).abs() <= 1e-6, "order {o}");
        }
    }

    #[test]
    fn config_values_round_trip(n in 4usize..512, dt in 1e-6..1.0f64, k in 1e-5..1.0f64, tol in 1e-14..1e-4f64) {
        let text = format!("experiment = custom\nn = {n}\ndt = {dt}\nK = {k}\ntol = {tol}\nt_end = {}\n", dt * 10.0);
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(cfg.n, n);
        prop_assert_eq!(cfg.dt, dt);
        prop_assert_eq!(cfg.params.k, k);
        prop_assert_eq!(cfg.krylov.tol, tol);
    }
}
