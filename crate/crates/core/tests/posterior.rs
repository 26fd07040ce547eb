use funcgp::fgp::{output_diagnostic, predicted_outputs};
use funcgp::linalg::min_eigenvalue;
use funcgp::pipeline::{run_functional, run_functional_at};
use funcgp::problem::chebyshev_points;
use funcgp::{Scenario, SearchSpec};

#[test]
fn exact_interpolation_without_noise() {
    for m in [4, 8, 12] {
        let sc = Scenario::<f64>::heat_benchmark(m, 500, 0.0, 0).unwrap();
        let run = run_functional(&sc, &SearchSpec::default(), false).unwrap();
        let d = sc.observations.data();
        let pred = predicted_outputs(&run.posterior, sc.observations.points()).unwrap();
        let dmax = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (p, di) in pred.iter().zip(d) {
            assert!((p - di).abs() <= 1e-9 * dmax, "M={m}: {p} vs {di}");
        }
    }
}

#[test]
fn noisy_outputs_shifted_by_noise_term() {
    let sc = Scenario::<f64>::heat_benchmark(9, 300, 1e-2, 4).unwrap();
    let run = run_functional(&sc, &SearchSpec::default(), false).unwrap();
    let diag = output_diagnostic(
        &run.posterior,
        &run.fit,
        sc.observations.interior_points(),
        sc.observations.interior_data(),
    )
    .unwrap();
    for (m, n) in diag.misfit.iter().zip(&diag.noise_term) {
        assert!((m - n).abs() < 1e-10);
    }
}

#[test]
fn no_variance_at_observations() {
    let sc = Scenario::<f64>::heat_benchmark(8, 400, 0.0, 0).unwrap();
    let (_, _, post) = run_functional_at(&sc, [0.17, 0.0], false).unwrap();
    let smax = post.std.iter().fold(0.0f64, |a, b| a.max(*b));
    for &x in sc.observations.points() {
        let k = sc.space.mesh().node_index(x).unwrap();
        assert!(post.std[k] <= 1e-8 * smax, "std {} at {x}", post.std[k]);
    }
}

#[test]
fn covariance_does_not_depend_on_data() {
    let sc = Scenario::<f64>::heat_benchmark(6, 120, 0.0, 0).unwrap();
    let other = sc.clone().with_bk_data().unwrap();
    let (_, _, a) = run_functional_at(&sc, [0.3, 0.02], true).unwrap();
    let (_, _, b) = run_functional_at(&other, [0.3, 0.02], true).unwrap();
    let (ca, cb) = (a.cov.unwrap(), b.cov.unwrap());
    assert!(ca.max_abs_diff(&cb) <= 1e-12 * ca.max_abs());
    assert!(a.mean != b.mean);
}

#[test]
fn covariances_positive_semidefinite() {
    let sc = Scenario::<f64>::heat_benchmark(7, 60, 0.0, 0).unwrap();
    let (_, fit, post) = run_functional_at(&sc, [0.2, 0.03], true).unwrap();
    let cov = post.cov.unwrap();
    let floor = -1e-10 * cov.trace() / cov.nrows() as f64;
    assert!(min_eigenvalue(&cov).unwrap() >= floor);
    let k = &fit.gram.k_phi_phi;
    assert!(min_eigenvalue(k).unwrap() >= -1e-10 * k.trace() / k.nrows() as f64);
}

#[test]
fn data_antisymmetric_like_truth() {
    let pts: Vec<f64> = chebyshev_points(11).unwrap();
    let sc = Scenario::<f64>::heat_benchmark(11, 100, 0.0, 0).unwrap();
    let d = sc.observations.data();
    for i in 0..pts.len() {
        assert_eq!(pts[i], -pts[pts.len() - 1 - i]);
        assert!((d[i] + d[d.len() - 1 - i]).abs() < 1e-15);
    }
}
