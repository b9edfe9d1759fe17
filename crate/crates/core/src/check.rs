//! Numerical self-checks exposed on the command line: gradient
//! verification against central finite differences, and Riccati gain
//! verification against a closed form and finite-horizon dynamic
//! programming.

use crate::control::{dare_solve, lqr_gain, LqrProblem};
use crate::linalg::Matrix;
use crate::net::{init_params, loss_and_grad, mse, Batch, ParamVector, PolicySpec};
use crate::rng::Xoshiro256StarStar;
use crate::Scalar;

pub const GRAD_REL_TOL: f64 = 1e-5;
pub const GRAD_ABS_TOL: f64 = 1e-8;
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCase {
    pub layer_dims: Vec<usize>,
    pub batch_len: usize,
    pub max_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub cases: Vec<GradCase>,
}

impl GradCheckReport {
    pub fn ok(&self) -> bool {
        self.cases.iter().all(|c| c.max_err <= GRAD_REL_TOL)
    }

    pub fn worst(&self) -> f64 {
        self.cases.iter().map(|c| c.max_err).fold(0.0, f64::max)
    }
}

/// Central finite differences of the batch MSE; independent of the
/// reverse-mode path, it only evaluates the loss at perturbed parameters.
pub fn numerical_gradient(
    spec: &PolicySpec<Scalar>,
    w: &ParamVector<Scalar>,
    batch: &Batch<Scalar>,
) -> Vec<f64> {
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let mut wp = w.clone();
        wp.data[i] += FD_STEP;
        let mut wm = w.clone();
        wm.data[i] -= FD_STEP;
        let lp = mse(spec, &wp, batch).expect("validated");
        let lm = mse(spec, &wm, batch).expect("validated");
        grad.push((lp - lm) / (2.0 * FD_STEP));
    }
    grad
}

/// Worst per-entry deviation: relative for sizable entries, absolute
/// (scaled to the relative tolerance) below `GRAD_ABS_TOL`.
pub fn gradient_deviation(analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        let err = if a.abs() < GRAD_ABS_TOL && n.abs() < GRAD_ABS_TOL {
            (a - n).abs() / GRAD_ABS_TOL * GRAD_REL_TOL
        } else {
            (a - n).abs() / a.abs().max(n.abs())
        };
        worst = worst.max(err);
    }
    worst
}

/// Runs `cases` randomized gradient checks over assorted architectures.
pub fn gradient_check(cases: usize, seed: u64) -> GradCheckReport {
    let shapes: [&[usize]; 6] = [
        &[1, 1],
        &[2, 3, 1],
        &[3, 5, 4, 2],
        &[4, 8, 2],
        &[4, 16, 16, 2],
        &[2, 7, 7, 3],
    ];
    let mut rng = Xoshiro256StarStar::new(seed);
    let mut report = GradCheckReport {
        cases: Vec::with_capacity(cases),
    };
    for case in 0..cases {
        let dims = shapes[case % shapes.len()].to_vec();
        let spec = PolicySpec::new(dims.clone(), None);
        let mut w = init_params(&spec, rng.next_u64());
        for v in w.data.iter_mut() {
            *v += 0.1 * rng.normal();
        }
        let batch_len = 1 + rng.next_below(4);
        let inputs: Vec<Vec<f64>> = (0..batch_len)
            .map(|_| {
                (0..spec.input_dim())
                    .map(|_| rng.uniform(-1.0, 1.0))
                    .collect()
            })
            .collect();
        let targets: Vec<Vec<f64>> = (0..batch_len)
            .map(|_| {
                (0..spec.output_dim())
                    .map(|_| rng.uniform(-1.0, 1.0))
                    .collect()
            })
            .collect();
        let batch = Batch { inputs, targets };
        let (_, grad) = loss_and_grad(&spec, &w, &batch).expect("validated");
        let numeric = numerical_gradient(&spec, &w, &batch);
        let max_err = gradient_deviation(&grad.data, &numeric);
        report.cases.push(GradCase {
            layer_dims: dims,
            batch_len,
            max_err,
        });
    }
    report
}

pub const RICCATI_SCALAR_TOL: f64 = 1e-8;
pub const RICCATI_DP_TOL: f64 = 1e-6;
pub const RICCATI_DP_HORIZON: usize = 500;

#[derive(Clone, Debug)]
pub struct RiccatiReport {
    /// |P - (1+sqrt(5))/2| for the unit scalar system.
    pub scalar_p_err: f64,
    /// |K - P/(1+P)| for the unit scalar system.
    pub scalar_k_err: f64,
    /// Max-abs gain deviation from finite-horizon DP per random system.
    pub dp_errs: Vec<f64>,
}

impl RiccatiReport {
    pub fn ok(&self) -> bool {
        self.scalar_p_err <= RICCATI_SCALAR_TOL
            && self.scalar_k_err <= RICCATI_SCALAR_TOL
            && self.dp_errs.iter().all(|e| *e <= RICCATI_DP_TOL)
    }
}

/// Independent route to the stationary gain: finite-horizon value
/// recursion in Joseph form, P = Q + K'RK + (A-BK)' P (A-BK).
pub fn finite_horizon_gain(prob: &LqrProblem<Scalar>, horizon: usize) -> Matrix<Scalar> {
    let mut p = prob.q.clone();
    let mut k = Matrix::zeros(prob.b.cols, prob.a.rows);
    let bt = prob.b.transpose();
    for _ in 0..horizon {
        let s = prob.r.add(&bt.matmul(&p.matmul(&prob.b)));
        k = s
            .inverse()
            .expect("R + B'PB invertible for checked systems")
            .matmul(&bt.matmul(&p.matmul(&prob.a)));
        let acl = prob.a.sub(&prob.b.matmul(&k));
        let ktrk = k.transpose().matmul(&prob.r.matmul(&k));
        p = prob
            .q
            .add(&ktrk)
            .add(&acl.transpose().matmul(&p.matmul(&acl)));
    }
    k
}

/// Random 2x2 system with spectral radius scaled into [0.3, 0.9].
pub fn random_stable_2x2(rng: &mut Xoshiro256StarStar) -> LqrProblem<Scalar> {
    loop {
        let e: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let tr = e[0] + e[3];
        let det = e[0] * e[3] - e[1] * e[2];
        let disc = tr * tr - 4.0 * det;
        let rho = if disc >= 0.0 {
            let r1 = (tr + disc.sqrt()) / 2.0;
            let r2 = (tr - disc.sqrt()) / 2.0;
            r1.abs().max(r2.abs())
        } else {
            det.abs().sqrt()
        };
        if rho < 1e-3 {
            continue;
        }
        let s = rng.uniform(0.3, 0.9) / rho;
        let a = Matrix::from_rows(&[&[e[0] * s, e[1] * s], &[e[2] * s, e[3] * s]]);
        let b = Matrix::from_rows(&[&[rng.uniform(-1.0, 1.0)], &[rng.uniform(-1.0, 1.0)]]);
        if b.max_abs() < 0.1 {
            continue;
        }
        return LqrProblem {
            a,
            b,
            q: Matrix::identity(2),
            r: Matrix::from_rows(&[&[rng.uniform(0.5, 2.0)]]),
        };
    }
}

/// Scalar closed form plus `n_random` DP comparisons.
pub fn riccati_check(n_random: usize, seed: u64) -> RiccatiReport {
    let scalar = LqrProblem {
        a: Matrix::from_rows(&[&[1.0]]),
        b: Matrix::from_rows(&[&[1.0]]),
        q: Matrix::from_rows(&[&[1.0]]),
        r: Matrix::from_rows(&[&[1.0]]),
    };
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    let p = dare_solve(&scalar, 1e-12, 200_000).expect("scalar system converges");
    let k = lqr_gain(&scalar, 1e-12, 200_000).expect("scalar system converges");
    let scalar_p_err = (p[(0, 0)] - golden).abs();
    let scalar_k_err = (k[(0, 0)] - golden / (1.0 + golden)).abs();

    let mut rng = Xoshiro256StarStar::new(seed);
    let dp_errs = (0..n_random)
        .map(|_| {
            let prob = random_stable_2x2(&mut rng);
            let k = lqr_gain(&prob, 1e-12, 200_000).expect("stable system converges");
            let k_dp = finite_horizon_gain(&prob, RICCATI_DP_HORIZON);
            k.max_abs_diff(&k_dp)
        })
        .collect();
    RiccatiReport {
        scalar_p_err,
        scalar_k_err,
        dp_errs,
    }
}
