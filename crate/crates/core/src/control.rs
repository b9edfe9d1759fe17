//! Classical controllers serving as ground-truth action oracles.
//!
//! Two families: PD-plus-feedforward laws on goal error, and LQR gains
//! from a fixed-point iteration of the discrete algebraic Riccati
//! equation. The oracle used for dataset generation is a pure map from
//! state to action; the stateful three-term PID step is kept for
//! closed-loop baselines.

use serde::{Deserialize, Serialize};

use crate::env::{EnvAction, EnvKind, EnvParams, EnvState};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Three-term controller gains with output clamping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidGains<T> {
    pub kp: T,
    pub ki: T,
    pub kd: T,
    pub lo: T,
    pub hi: T,
}

/// Integrator and previous-error memory; reset to zeros at episode start.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PidState<T> {
    pub integral: T,
    pub prev_error: T,
}

/// One PID update: integrates the error, differentiates against the
/// previous error, clamps the output. Returns the action and the advanced
/// controller state.
pub fn pid_step<T: Real>(
    gains: &PidGains<T>,
    st: &PidState<T>,
    error: T,
    dt: T,
) -> (T, PidState<T>) {
    assert!(dt > T::zero(), "pid_step requires dt > 0");
    let integral = st.integral + error * dt;
    let derivative = (error - st.prev_error) / dt;
    let raw = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let action = if raw < gains.lo {
        gains.lo
    } else if raw > gains.hi {
        gains.hi
    } else {
        raw
    };
    (
        action,
        PidState {
            integral,
            prev_error: error,
        },
    )
}

/// Discrete-time LQR problem data.
#[derive(Clone, Debug)]
pub struct LqrProblem<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub q: Matrix<T>,
    pub r: Matrix<T>,
}

impl<T: Real> LqrProblem<T> {
    pub fn validate(&self) -> Result<()> {
        let d = self.a.rows;
        if !self.a.is_square() || self.b.rows != d {
            return Err(Error::InvalidConfig("A must be d x d, B d x k".into()));
        }
        let k = self.b.cols;
        if self.q.rows != d || self.q.cols != d || self.r.rows != k || self.r.cols != k {
            return Err(Error::InvalidConfig("Q must be d x d, R k x k".into()));
        }
        Ok(())
    }
}

pub const RICCATI_TOL: f64 = 1e-10;
pub const RICCATI_MAX_ITER: usize = 100_000;

/// Fixed-point iteration of the discrete algebraic Riccati equation
/// starting from P = Q, until the max-abs change is at most `tol`.
pub fn dare_solve<T: Real>(prob: &LqrProblem<T>, tol: T, max_iter: usize) -> Result<Matrix<T>> {
    prob.validate()?;
    let at = prob.a.transpose();
    let bt = prob.b.transpose();
    let mut p = prob.q.clone();
    for _ in 0..max_iter {
        let pa = p.matmul(&prob.a);
        let pb = p.matmul(&prob.b);
        let s = prob.r.add(&bt.matmul(&pb));
        if !s.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
        let gain = s.inverse()?.matmul(&bt.matmul(&pa));
        let next = prob
            .q
            .add(&at.matmul(&pa))
            .sub(&at.matmul(&pb).matmul(&gain));
        let delta = next.max_abs_diff(&p);
        p = next;
        if delta <= tol {
            return Ok(p);
        }
    }
    Err(Error::RiccatiNoConvergence { max_iter })
}

/// Stationary LQR gain K = (R + B'PB)^-1 B'PA; control law a = -K (s - goal).
pub fn lqr_gain<T: Real>(prob: &LqrProblem<T>, tol: T, max_iter: usize) -> Result<Matrix<T>> {
    let p = dare_solve(prob, tol, max_iter)?;
    let bt = prob.b.transpose();
    let s = prob.r.add(&bt.matmul(&p.matmul(&prob.b)));
    if !s.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(s.inverse()?.matmul(&bt.matmul(&p.matmul(&prob.a))))
}

/// The oracle law, evaluated as a pure function of the full state.
#[derive(Clone, Debug)]
pub enum ControlLaw<T> {
    /// Per-axis action = kp * (goal_pos - pos) - kd * vel, plus the
    /// environment's gravity as feedforward where requested.
    PdGoal {
        kp: T,
        kd: T,
        gravity_feedforward: bool,
    },
    /// action = -gain * (state - goal_state).
    Lqr { gain: Matrix<T> },
}

/// A control law bound to the environment it regulates.
#[derive(Clone, Debug)]
pub struct ControllerSpec<T> {
    pub law: ControlLaw<T>,
    pub env: EnvParams<T>,
}

impl<T: Real> ControllerSpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        match (&self.law, &self.env.kind) {
            (ControlLaw::PdGoal { .. }, EnvKind::Cartpole { .. }) => Err(Error::InvalidConfig(
                "cartpole is regulated by an LQR law".into(),
            )),
            (ControlLaw::Lqr { gain }, _) => {
                if gain.rows != self.env.action_dim() || gain.cols != self.env.state_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "lqr gain",
                        expected: self.env.action_dim() * self.env.state_dim(),
                        got: gain.rows * gain.cols,
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// The ground-truth mapping P(s): pure, stateless, clipped to the
/// environment's action bounds.
pub fn controller_action<T: Real>(
    spec: &ControllerSpec<T>,
    state: &EnvState<T>,
) -> Result<EnvAction<T>> {
    if state.values.len() != spec.env.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "controller state",
            expected: spec.env.state_dim(),
            got: state.values.len(),
        });
    }
    let raw = match (&spec.law, &spec.env.kind) {
        (ControlLaw::PdGoal { kp, kd, .. }, EnvKind::PointMass2d { goal, .. }) => {
            let s = &state.values;
            vec![
                *kp * (goal[0] - s[0]) - *kd * s[2],
                *kp * (goal[1] - s[1]) - *kd * s[3],
            ]
        }
        (
            ControlLaw::PdGoal {
                kp,
                kd,
                gravity_feedforward,
            },
            EnvKind::Lander1d {
                gravity,
                target_altitude,
                ..
            },
        ) => {
            let ff = if *gravity_feedforward {
                *gravity
            } else {
                T::zero()
            };
            vec![*kp * (*target_altitude - state.values[0]) - *kd * state.values[1] + ff]
        }
        (ControlLaw::Lqr { gain }, _) => {
            let goal = spec.env.goal_state();
            let mut out = Vec::with_capacity(gain.rows);
            for row in 0..gain.rows {
                let mut acc = T::zero();
                for col in 0..gain.cols {
                    acc = acc + gain[(row, col)] * (state.values[col] - goal[col]);
                }
                out.push(-acc);
            }
            out
        }
        _ => {
            return Err(Error::InvalidConfig(
                "control law not defined for this environment".into(),
            ))
        }
    };
    Ok(spec.env.clip_action(&EnvAction { values: raw }))
}

/// Discrete linearization (A, B) of an environment about its goal state,
/// consistent with the semi-implicit Euler integrator. The lander's affine
/// gravity term has no linear form; it keeps the PD-plus-feedforward law.
pub fn linearize<T: Real>(env: &EnvParams<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let dt = env.dt;
    match &env.kind {
        EnvKind::PointMass2d { .. } => {
            let one = T::one();
            let z = T::zero();
            let dt2 = dt * dt;
            let a = Matrix::from_rows(&[
                &[one, z, dt, z],
                &[z, one, z, dt],
                &[z, z, one, z],
                &[z, z, z, one],
            ]);
            let b = Matrix::from_rows(&[&[dt2, z], &[z, dt2], &[dt, z], &[z, dt]]);
            Ok((a, b))
        }
        EnvKind::Cartpole {
            gravity,
            cart_mass,
            pole_mass,
            pole_half_length,
            ..
        } => {
            let total = *cart_mass + *pole_mass;
            let denom = *pole_half_length * (T::lit(4.0 / 3.0) - *pole_mass / total);
            let a_th = *gravity / denom;
            let b_th = -(T::one() / (total * denom));
            let c_th = -(*pole_mass * *pole_half_length * a_th / total);
            let d_f = T::one() / total - *pole_mass * *pole_half_length * b_th / total;
            let one = T::one();
            let z = T::zero();
            let dt2 = dt * dt;
            // State [theta, omega, x, v]; velocity rows update first, the
            // position rows see the updated velocities.
            let a = Matrix::from_rows(&[
                &[one + dt2 * a_th, dt, z, z],
                &[dt * a_th, one, z, z],
                &[dt2 * c_th, z, one, dt],
                &[dt * c_th, z, z, one],
            ]);
            let b = Matrix::from_rows(&[&[dt2 * b_th], &[dt * b_th], &[dt2 * d_f], &[dt * d_f]]);
            Ok((a, b))
        }
        EnvKind::Lander1d { .. } => Err(Error::InvalidConfig(
            "lander_1d has an affine gravity term; use the PD oracle".into(),
        )),
    }
}

/// Builds an LQR controller for an environment from diagonal cost weights.
pub fn lqr_for_env<T: Real>(
    env: &EnvParams<T>,
    q_diag: &[T],
    r_diag: &[T],
) -> Result<ControllerSpec<T>> {
    if q_diag.len() != env.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "q_diag",
            expected: env.state_dim(),
            got: q_diag.len(),
        });
    }
    if r_diag.len() != env.action_dim() {
        return Err(Error::DimensionMismatch {
            context: "r_diag",
            expected: env.action_dim(),
            got: r_diag.len(),
        });
    }
    let (a, b) = linearize(env)?;
    let prob = LqrProblem {
        a,
        b,
        q: Matrix::diag(q_diag),
        r: Matrix::diag(r_diag),
    };
    let gain = lqr_gain(&prob, T::lit(RICCATI_TOL), RICCATI_MAX_ITER)?;
    Ok(ControllerSpec {
        law: ControlLaw::Lqr { gain },
        env: env.clone(),
    })
}
