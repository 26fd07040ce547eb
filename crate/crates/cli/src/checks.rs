//! Oracle comparisons behind the `verify` command. Each function returns the
//! measured discrepancies; callers decide what passes.

use funcgp::fgp::{self, posterior_functional};
use funcgp::hyperopt::lml_from_matrix;
use funcgp::linalg::{dot, max_abs, Cholesky, Mat};
use funcgp::oracles::{eigenbasis, kkt_objective, kkt_solve, weight_space_predict};
use funcgp::pipeline::run_functional;
use funcgp::problem::{benchmark_source, solve_adjoints};
use funcgp::{solve_dirichlet, CovOperator, FeSpace, Field, Scenario, SearchSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CheckResult<T> = funcgp::Result<T>;

pub const KERNEL_TRICK_REL: f64 = 1e-8;
pub const TRUNCATION_SLACK: f64 = 1e-10;
pub const KKT_L2: f64 = 1e-9;
pub const KKT_BETA_REL: f64 = 1e-9;
pub const ADJOINT_REL: f64 = 1e-10;
pub const FEM_RATIO: (f64, f64) = (3.6, 4.4);
pub const LML_ABS: f64 = 1e-12;
pub const LOGDET_REL: f64 = 1e-10;
pub const PSD_FLOOR_REL: f64 = 1e-10;

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, Copy)]
pub struct KernelTrickReport {
    pub mean_rel: f64,
    pub var_rel: f64,
    /// Largest amount by which a truncated-basis variance exceeds the
    /// full-basis one.
    pub truncation_excess: f64,
    pub n_tests: usize,
}

/// Weight-space prediction in the full eigenbasis against the kernel
/// posterior, on every interior hat function of the benchmark mesh.
pub fn kernel_trick(
    n_elements: usize,
    m: usize,
    theta: [f64; 2],
    sigma: f64,
) -> CheckResult<KernelTrickReport> {
    let sc = Scenario::heat_benchmark(m, n_elements, sigma, 0)?;
    let op = CovOperator::new(sc.space.clone(), theta)?;
    let fit = fgp::fit(&op, &sc.adjoints, &sc.residual(), sigma)?;
    let post = posterior_functional(&fit);

    let space = &sc.space;
    let n = space.n_dof();
    let dofs: Vec<usize> = space.interior_dofs().collect();
    let hats = dofs
        .iter()
        .map(|&j| {
            let mut c = vec![0.0; n];
            c[j] = 1.0;
            Field::new(space.clone(), c)
        })
        .collect::<funcgp::Result<Vec<_>>>()?;

    let full = eigenbasis(&op, space.n_interior())?;
    let ws = weight_space_predict(&full, &sc.adjoints, &sc.residual(), sigma, &hats)?;
    let kmean: Vec<f64> = dofs.iter().map(|&j| post.gbar[j]).collect();
    let kvar: Vec<f64> = dofs.iter().map(|&j| post.cov_g[(j, j)]).collect();

    let half = eigenbasis(&op, space.n_interior() / 2)?;
    let trunc = weight_space_predict(&half, &sc.adjoints, &sc.residual(), sigma, &hats)?;
    let truncation_excess = trunc
        .variances
        .iter()
        .zip(&ws.variances)
        .fold(f64::NEG_INFINITY, |m, (t, f)| m.max(t - f));

    Ok(KernelTrickReport {
        mean_rel: rel(max_diff(&ws.means, &kmean), max_abs(&kmean)),
        var_rel: rel(max_diff(&ws.variances, &kvar), max_abs(&kvar)),
        truncation_excess,
        n_tests: hats.len(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub theta: [f64; 2],
    /// `‖u° - ū*‖` in L².
    pub u_l2: f64,
    pub beta_rel: f64,
    /// `max |q° - Σ β_i φ_i|` relative to `max |q°|`.
    pub q_rel: f64,
    pub max_residual: f64,
    /// Smallest relative objective change over random feasible
    /// perturbations; negative values mean a better feasible point exists.
    pub min_objective_change: f64,
}

/// Constrained least-squares solution against the kernel posterior for the
/// benchmark with learned hyperparameters.
pub fn kkt_equivalence(
    m: usize,
    sigma: f64,
    n_elements: usize,
    n_perturbations: usize,
    seed: u64,
) -> CheckResult<KktReport> {
    let sc = Scenario::heat_benchmark(m, n_elements, sigma, seed)?;
    let run = run_functional(&sc, &SearchSpec::default(), false)?;
    let pts = sc.observations.interior_points();
    let data = sc.observations.interior_data();
    let kkt = kkt_solve(&sc.model, &run.op, pts, data, sigma)?;

    let space = &sc.space;
    let du: Vec<f64> = kkt
        .u_o
        .coeffs()
        .iter()
        .zip(&run.posterior.mean_nodal)
        .map(|(a, b)| a - b)
        .collect();
    let q_sum = sc.adjoints.combine(&run.fit.beta);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j0 = kkt_objective(&run.op, kkt.q_o.coeffs(), &kkt.beta_o, sigma);
    let mut min_change = f64::INFINITY;
    for _ in 0..n_perturbations {
        let (dq, db) = feasible_direction(&sc, &run.op, sigma, &mut rng);
        let q: Vec<f64> = kkt.q_o.coeffs().iter().zip(&dq).map(|(a, b)| a + b).collect();
        let b: Vec<f64> = kkt.beta_o.iter().zip(&db).map(|(a, b)| a + b).collect();
        let j = kkt_objective(&run.op, &q, &b, sigma);
        min_change = min_change.min(rel(j - j0, j0.abs()));
    }

    Ok(KktReport {
        theta: run.op.theta(),
        u_l2: space.l2_norm(&du),
        beta_rel: rel(max_diff(&kkt.beta_o, &run.fit.beta), max_abs(&run.fit.beta)),
        q_rel: rel(max_diff(kkt.q_o.coeffs(), &q_sum), max_abs(kkt.q_o.coeffs())),
        max_residual: kkt.residuals.iter().fold(0.0, |m: f64, &r| m.max(r)),
        min_objective_change: min_change,
    })
}

/// Random `(δq, δβ)` of norm `10⁻³` (together with the induced `δu`) that
/// keeps both constraints satisfied: `δu = -A⁻¹ K δq` and
/// `δu(x_i) + σ² δβ_i = 0`. For `σ = 0`, `δq` is projected so that the
/// observed values of `δu` vanish.
fn feasible_direction(
    sc: &Scenario<f64>,
    op: &CovOperator<f64>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let space = &sc.space;
    let n = space.n_dof();
    let k = op.matrix().principal(1, n - 1);
    let obs: Vec<usize> = sc.adjoints.nodes().iter().map(|&i| i - 1).collect();
    let mut dq: Vec<f64> = (0..n - 2).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let du_of = |dq: &[f64]| {
        let mut v = k.matvec(dq);
        space.solve_interior_in_place(&mut v);
        v.iter_mut().for_each(|x| *x = -*x);
        v
    };

    let s2 = sigma * sigma;
    if s2 == 0.0 {
        // rows of G = C A⁻¹ K are K A⁻¹ e_i
        let g: Vec<Vec<f64>> = obs
            .iter()
            .map(|&i| {
                let mut e = vec![0.0; n - 2];
                e[i] = 1.0;
                space.solve_interior_in_place(&mut e);
                k.matvec(&e)
            })
            .collect();
        let ggt = Mat::from_fn(g.len(), g.len(), |a, b| dot(&g[a], &g[b]));
        let gdq: Vec<f64> = g.iter().map(|r| dot(r, &dq)).collect();
        let y = Cholesky::factor(&ggt).map(|c| c.solve(&gdq)).unwrap_or(gdq);
        for (row, &c) in g.iter().zip(&y) {
            dq.iter_mut().zip(row).for_each(|(a, &b)| *a -= c * b);
        }
    }
    let du = du_of(&dq);
    let db: Vec<f64> = if s2 > 0.0 {
        obs.iter().map(|&i| -du[i] / s2).collect()
    } else {
        vec![0.0; obs.len()]
    };
    let norm = (dot(&dq, &dq) + dot(&du, &du) + dot(&db, &db)).sqrt();
    let scale = if norm > 0.0 { 1e-3 / norm } else { 0.0 };
    let mut full = vec![0.0; n];
    full[1..n - 1]
        .iter_mut()
        .zip(&dq)
        .for_each(|(a, &b)| *a = b * scale);
    (full, db.iter().map(|b| b * scale).collect())
}

/// Largest relative mismatch between `ĝ(φ_i)` and the output change
/// `s*_i - s_i` caused by subtracting a random functional `ĝ` from the load.
pub fn adjoint_identity(n_elements: usize, n_points: usize, seed: u64) -> CheckResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<f64> = (0..n_points).map(|_| rng.gen_range(-0.95..0.95)).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let space = FeSpace::uniform(n_elements, &pts)?;
    let n = space.n_dof();
    let f = space.interpolate(benchmark_source);
    let load = space.mass().matvec(&f);
    let (bl, br) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let u = solve_dirichlet(&space, &load, bl, br)?;
    let shifted: Vec<f64> = load.iter().zip(&r).map(|(a, b)| a - b).collect();
    let u_star = solve_dirichlet(&space, &shifted, bl, br)?;
    let adj = solve_adjoints(&space, &pts)?;

    let lhs: Vec<f64> = adj.fields().iter().map(|phi| dot(&r, phi.coeffs())).collect();
    let rhs: Vec<f64> = adj
        .nodes()
        .iter()
        .map(|&k| u_star.coeffs()[k] - u.coeffs()[k])
        .collect();
    Ok(rel(max_diff(&lhs, &rhs), max_abs(&rhs)))
}

/// L² errors of the P1 solution of `-u'' = π² sin(πx)`, `u(±1) = 0`,
/// measured against `sin(πx)` with 3-point Gauss quadrature per element.
pub fn fem_errors(sizes: &[usize]) -> CheckResult<Vec<f64>> {
    use std::f64::consts::PI;
    let exact = |x: f64| (PI * x).sin();
    let gauss = [
        (-(0.6f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6f64).sqrt(), 5.0 / 9.0),
    ];
    sizes
        .iter()
        .map(|&ne| {
            let space = FeSpace::<f64>::uniform(ne, &[])?;
            let f = space.interpolate(|x: f64| PI * PI * (PI * x).sin());
            let load = space.mass().matvec(&f);
            let u = solve_dirichlet(&space, &load, 0.0, 0.0)?;
            let (x, c) = (space.nodes(), u.coeffs());
            let mut err2 = 0.0;
            for e in 0..x.len() - 1 {
                let h = x[e + 1] - x[e];
                for &(t, w) in &gauss {
                    let s = 0.5 * (t + 1.0);
                    let uh = c[e] * (1.0 - s) + c[e + 1] * s;
                    let d = uh - exact(x[e] + s * h);
                    err2 += 0.5 * h * w * d * d;
                }
            }
            Ok(err2.sqrt())
        })
        .collect()
}

/// Absolute errors of the three closed-form likelihood values.
pub fn lml_unit_errors() -> [f64; 3] {
    use std::f64::consts::PI;
    let l2pi = (2.0 * PI).ln();
    let one = Mat::from_rows(&[vec![1.0]]);
    let two = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
    [
        (lml_from_matrix(&one, &[0.0]) - (-0.5 * l2pi)).abs(),
        (lml_from_matrix(&one, &[1.0]) - (-0.5 - 0.5 * l2pi)).abs(),
        (lml_from_matrix(&two, &[0.0, 0.0]) - (-(2.0f64).ln() - l2pi)).abs(),
    ]
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    if n == 1 {
        return a[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = Mat::from_fn(n - 1, n - 1, |r, c| a[(r + 1, if c < j { c } else { c + 1 })]);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * a[(0, j)] * cofactor_det(&minor)
        })
        .sum()
}

/// Largest relative gap between `exp(log det)` from Cholesky and the
/// cofactor determinant over random SPD matrices.
pub fn logdet_errors(n: usize, trials: usize, seed: u64) -> CheckResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let b = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut a = b.transpose().matmul(&b);
        a.add_to_diagonal(0.5);
        let det = cofactor_det(&a);
        let ld = Cholesky::factor(&a)?.log_det();
        worst = worst.max(rel((ld.exp() - det).abs(), det.abs()));
    }
    Ok(worst)
}

/// Whether `a + τ I` admits a Cholesky factorization with
/// `τ = PSD_FLOOR_REL · trace(a) / n`, i.e. whether every eigenvalue exceeds
/// `-τ`.
pub fn passes_psd_floor(a: &Mat<f64>) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let tau = PSD_FLOOR_REL * a.trace() / n as f64;
    if !(tau > 0.0) {
        return a.max_abs() == 0.0;
    }
    let mut shifted = a.clone();
    shifted.symmetrize();
    shifted.add_to_diagonal(tau);
    Cholesky::factor(&shifted).is_ok()
}

/// One line of `verify` output.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<34} {}", self.name, self.detail)
    }
}

fn line(name: impl Into<String>, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed,
        detail,
    }
}

fn failed(name: impl Into<String>, e: funcgp::Error) -> CheckLine {
    line(name, false, format!("error: {e}"))
}

/// All oracle checks at their default sizes.
pub fn verify_all() -> Vec<CheckLine> {
    let mut out = Vec::new();

    for theta in [[0.3, 0.05], [1.0, 0.0], [0.0, 1.0]] {
        let name = format!("kernel trick θ=({}, {})", theta[0], theta[1]);
        out.push(match kernel_trick(32, 6, theta, 0.0) {
            Ok(r) => line(
                name,
                r.mean_rel <= KERNEL_TRICK_REL
                    && r.var_rel <= KERNEL_TRICK_REL
                    && r.truncation_excess <= TRUNCATION_SLACK,
                format!(
                    "mean {:.2e}, var {:.2e}, truncation excess {:.2e} on {} functionals",
                    r.mean_rel, r.var_rel, r.truncation_excess, r.n_tests
                ),
            ),
            Err(e) => failed(name, e),
        });
    }

    for m in [4, 8, 12] {
        for sigma in [0.0, 1e-3] {
            let name = format!("optimality system M={m} σ={sigma}");
            out.push(match kkt_equivalence(m, sigma, 256, 20, 7) {
                Ok(r) => line(
                    name,
                    r.u_l2 <= KKT_L2
                        && r.beta_rel <= KKT_BETA_REL
                        && r.q_rel <= KKT_BETA_REL
                        && r.min_objective_change >= -1e-12,
                    format!(
                        "‖u°-ū*‖ {:.2e}, β {:.2e}, q {:.2e}, min ΔJ/J {:.2e}",
                        r.u_l2, r.beta_rel, r.q_rel, r.min_objective_change
                    ),
                ),
                Err(e) => failed(name, e),
            });
        }
    }

    out.push(match adjoint_identity(64, 7, 11) {
        Ok(e) => line("adjoint identity", e <= ADJOINT_REL, format!("max rel {e:.2e}")),
        Err(e) => failed("adjoint identity", e),
    });

    out.push(match fem_errors(&[64, 128, 256]) {
        Ok(e) => {
            let r1 = e[0] / e[1];
            let r2 = e[1] / e[2];
            let ok = |r: f64| r >= FEM_RATIO.0 && r <= FEM_RATIO.1;
            line(
                "FEM L² convergence",
                ok(r1) && ok(r2),
                format!("ratios {r1:.3}, {r2:.3}"),
            )
        }
        Err(e) => failed("FEM L² convergence", e),
    });

    let u = lml_unit_errors();
    let worst = u.iter().fold(0.0f64, |m, &v| m.max(v));
    out.push(line(
        "likelihood closed forms",
        worst <= LML_ABS,
        format!("max abs {worst:.2e}"),
    ));
    out.push(match logdet_errors(5, 20, 3) {
        Ok(e) => line("Cholesky log det", e <= LOGDET_REL, format!("max rel {e:.2e}")),
        Err(e) => failed("Cholesky log det", e),
    });
    out
}
