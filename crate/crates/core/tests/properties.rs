use funcgp::hyperopt::lml_from_matrix;
use funcgp::linalg::{min_eigenvalue, Cholesky, Mat};
use funcgp::problem::solve_adjoints;
use funcgp::{solve_dirichlet, CovOperator, FeSpace, Field};
use proptest::prelude::*;

fn det(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    if n == 1 {
        return a[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = Mat::from_fn(n - 1, n - 1, |r, c| a[(r + 1, if c < j { c } else { c + 1 })]);
            (if j % 2 == 0 { 1.0 } else { -1.0 }) * a[(0, j)] * det(&minor)
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn log_det_matches_determinant(entries in prop::collection::vec(-1.0f64..1.0, 25)) {
        let b = Mat::from_fn(5, 5, |i, j| entries[5 * i + j]);
        let mut a = b.transpose().matmul(&b);
        a.add_to_diagonal(0.3);
        let d = det(&a);
        let ld = Cholesky::factor(&a).unwrap().log_det();
        prop_assert!((ld.exp() - d).abs() <= 1e-10 * d);
        // the likelihood at y = 0 is -½ log det - (n/2) log 2π
        let l = lml_from_matrix(&a, &[0.0; 5]);
        let expect = -0.5 * d.ln() - 2.5 * (2.0 * std::f64::consts::PI).ln();
        prop_assert!((l - expect).abs() <= 1e-10 * expect.abs());
    }

    #[test]
    fn covariance_bilinear_and_psd(
        t1 in 0.0f64..2.0,
        t2 in 0.0f64..2.0,
        u in prop::collection::vec(-1.0f64..1.0, 11),
        v in prop::collection::vec(-1.0f64..1.0, 11),
        a in -3.0f64..3.0,
    ) {
        prop_assume!(t1 + t2 > 1e-3);
        let space = FeSpace::<f64>::uniform(10, &[]).unwrap();
        let op = CovOperator::new(space.clone(), [t1, t2]).unwrap();
        let f = |c: &[f64]| Field::new(space.clone(), c.to_vec()).unwrap();
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
        let lhs = op.k_apply(&f(&w), &f(&v)).unwrap();
        let rhs = a * op.k_apply(&f(&u), &f(&v)).unwrap() + op.k_apply(&f(&v), &f(&v)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert!((op.k_apply(&f(&u), &f(&v)).unwrap() - op.k_apply(&f(&v), &f(&u)).unwrap()).abs() < 1e-12);
        prop_assert!(op.k_apply(&f(&u), &f(&u)).unwrap() >= -1e-14);
    }

    #[test]
    fn adjoint_identity(
        raw in prop::collection::vec(-0.95f64..0.95, 1..6),
        r in prop::collection::vec(-1.0f64..1.0, 80),
        bl in -1.0f64..1.0,
        br in -1.0f64..1.0,
    ) {
        let mut pts = raw;
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let space = FeSpace::<f64>::uniform(64, &pts).unwrap();
        let n = space.n_dof();
        let r = &r[..n];
        let load = space.mass().matvec(&space.interpolate(|x| (3.0 * x).cos()));
        let u = solve_dirichlet(&space, &load, bl, br).unwrap();
        let shifted: Vec<f64> = load.iter().zip(r).map(|(l, g)| l - g).collect();
        let us = solve_dirichlet(&space, &shifted, bl, br).unwrap();
        let adj = solve_adjoints(&space, &pts).unwrap();
        let diffs: Vec<f64> = adj.nodes().iter().map(|&k| us.coeffs()[k] - u.coeffs()[k]).collect();
        let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        for (phi, d) in adj.fields().iter().zip(&diffs) {
            let g: f64 = phi.coeffs().iter().zip(r).map(|(p, g)| p * g).sum();
            prop_assert!((g - d).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn gram_matrix_psd_on_benchmark_adjoints() {
    let space = FeSpace::<f64>::uniform(80, &[-0.7, -0.1, 0.4, 0.9]).unwrap();
    let adj = solve_adjoints(&space, &[-0.7, -0.1, 0.4, 0.9]).unwrap();
    for theta in [[1.0, 0.0], [0.0, 1.0], [0.2, 0.5]] {
        let g = CovOperator::new(space.clone(), theta).unwrap().gram(&adj).unwrap();
        let k = &g.k_phi_phi;
        assert!(min_eigenvalue(k).unwrap() >= -1e-10 * k.trace() / 4.0);
    }
}
