//! Deterministic, seedable control environments.
//!
//! Three environments share one integrator (semi-implicit Euler: velocity
//! first, then position) and one episode driver. All dynamics are pure
//! functions of (params, state, action); randomness enters only through
//! explicit seeds at reset.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;
use crate::scalar::Real;

/// Any state entry beyond this magnitude marks the rollout as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    PointMass2d,
    Lander1d,
    Cartpole,
}

impl EnvId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::PointMass2d => "point_mass_2d",
            EnvId::Lander1d => "lander_1d",
            EnvId::Cartpole => "cartpole",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "point_mass_2d" => Ok(EnvId::PointMass2d),
            "lander_1d" => Ok(EnvId::Lander1d),
            "cartpole" => Ok(EnvId::Cartpole),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }

    pub fn all() -> [EnvId; 3] {
        [EnvId::PointMass2d, EnvId::Lander1d, EnvId::Cartpole]
    }
}

/// Per-environment constants and task parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum EnvKind<T> {
    /// State `[x, y, vx, vy]`; action `[ax, ay]` clipped to +-accel_max.
    PointMass2d { accel_max: T, goal: [T; 2] },
    /// State `[z, v]`; action `[u]` clipped to `[0, thrust_max]`; constant gravity.
    Lander1d {
        gravity: T,
        thrust_max: T,
        target_altitude: T,
    },
    /// State `[theta, theta_dot, x, x_dot]`; action `[force]` clipped to
    /// +-force_max; regulated about the upright origin.
    Cartpole {
        gravity: T,
        cart_mass: T,
        pole_mass: T,
        pole_half_length: T,
        force_max: T,
    },
}

/// Full environment description: dynamics constants, integration step,
/// the operating box used for state sampling and input scaling, and the
/// initial-state box used by [`EnvParams::reset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvParams<T> {
    pub dt: T,
    pub kind: EnvKind<T>,
    pub state_box: Vec<(T, T)>,
    pub init_box: Vec<(T, T)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState<T> {
    pub values: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvAction<T> {
    pub values: Vec<T>,
}

/// Episode termination rule: success requires the goal error to stay at or
/// below `tolerance` for `hold_steps` consecutive steps before `max_steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationSpec<T> {
    pub tolerance: T,
    pub hold_steps: usize,
    pub max_steps: usize,
}

impl<T: Real> TerminationSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance < T::zero() || !self.tolerance.is_finite() {
            return Err(Error::InvalidConfig("tolerance must be >= 0".into()));
        }
        if self.hold_steps == 0 || self.max_steps == 0 {
            return Err(Error::InvalidConfig(
                "hold_steps and max_steps must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Timeout,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajStep<T> {
    pub t: usize,
    pub state: EnvState<T>,
    pub action: EnvAction<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub steps: Vec<TrajStep<T>>,
    pub final_state: EnvState<T>,
    pub outcome: Outcome,
}

impl<T: Real> EnvParams<T> {
    /// Planar double integrator driving toward `goal`, at rest.
    pub fn point_mass_2d(goal: [T; 2]) -> Self {
        Self {
            dt: T::lit(0.05),
            kind: EnvKind::PointMass2d {
                accel_max: T::lit(1.0),
                goal,
            },
            state_box: vec![
                (T::lit(-3.0), T::lit(3.0)),
                (T::lit(-3.0), T::lit(3.0)),
                (T::lit(-2.5), T::lit(2.5)),
                (T::lit(-2.5), T::lit(2.5)),
            ],
            init_box: vec![
                (T::lit(-2.0), T::lit(2.0)),
                (T::lit(-2.0), T::lit(2.0)),
                (T::zero(), T::zero()),
                (T::zero(), T::zero()),
            ],
        }
    }

    /// Vertical thruster under constant gravity, tracking `target_altitude`.
    pub fn lander_1d(target_altitude: T) -> Self {
        Self {
            dt: T::lit(0.05),
            kind: EnvKind::Lander1d {
                gravity: T::lit(0.5),
                thrust_max: T::lit(1.5),
                target_altitude,
            },
            state_box: vec![(T::lit(-2.0), T::lit(14.0)), (T::lit(-4.0), T::lit(4.0))],
            init_box: vec![(T::lit(8.0), T::lit(12.0)), (T::zero(), T::zero())],
        }
    }

    /// Cart-pole with continuous force input, standard constants.
    pub fn cartpole() -> Self {
        Self {
            dt: T::lit(0.02),
            kind: EnvKind::Cartpole {
                gravity: T::lit(9.8),
                cart_mass: T::lit(1.0),
                pole_mass: T::lit(0.1),
                pole_half_length: T::lit(0.5),
                force_max: T::lit(10.0),
            },
            state_box: vec![
                (T::lit(-0.2), T::lit(0.2)),
                (T::lit(-1.0), T::lit(1.0)),
                (T::lit(-0.5), T::lit(0.5)),
                (T::lit(-1.0), T::lit(1.0)),
            ],
            init_box: vec![
                (T::lit(-0.05), T::lit(0.05)),
                (T::zero(), T::zero()),
                (T::zero(), T::zero()),
                (T::zero(), T::zero()),
            ],
        }
    }

    pub fn from_id(id: EnvId) -> Self {
        match id {
            EnvId::PointMass2d => Self::point_mass_2d([T::zero(), T::zero()]),
            EnvId::Lander1d => Self::lander_1d(T::lit(10.0)),
            EnvId::Cartpole => Self::cartpole(),
        }
    }

    pub fn env_id(&self) -> EnvId {
        match self.kind {
            EnvKind::PointMass2d { .. } => EnvId::PointMass2d,
            EnvKind::Lander1d { .. } => EnvId::Lander1d,
            EnvKind::Cartpole { .. } => EnvId::Cartpole,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointMass2d { .. } => 4,
            EnvKind::Lander1d { .. } => 2,
            EnvKind::Cartpole { .. } => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointMass2d { .. } => 2,
            EnvKind::Lander1d { .. } => 1,
            EnvKind::Cartpole { .. } => 1,
        }
    }

    pub fn action_bounds(&self) -> Vec<(T, T)> {
        match &self.kind {
            EnvKind::PointMass2d { accel_max, .. } => {
                vec![(-*accel_max, *accel_max), (-*accel_max, *accel_max)]
            }
            EnvKind::Lander1d { thrust_max, .. } => vec![(T::zero(), *thrust_max)],
            EnvKind::Cartpole { force_max, .. } => vec![(-*force_max, *force_max)],
        }
    }

    /// Goal state in full state coordinates (positions at target, rest).
    pub fn goal_state(&self) -> Vec<T> {
        match &self.kind {
            EnvKind::PointMass2d { goal, .. } => vec![goal[0], goal[1], T::zero(), T::zero()],
            EnvKind::Lander1d {
                target_altitude, ..
            } => vec![*target_altitude, T::zero()],
            EnvKind::Cartpole { .. } => vec![T::zero(); 4],
        }
    }

    /// Euclidean distance between the state and the goal state.
    pub fn goal_error(&self, state: &EnvState<T>) -> T {
        let goal = self.goal_state();
        let mut acc = T::zero();
        for (s, g) in state.values.iter().zip(&goal) {
            let d = *s - *g;
            acc = acc + d * d;
        }
        acc.sqrt()
    }

    /// Replaces the task parameters (goal position / target altitude).
    pub fn with_goal(&self, goal: &[T]) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.kind {
            EnvKind::PointMass2d { goal: g, .. } => {
                if goal.len() != 2 {
                    return Err(Error::DimensionMismatch {
                        context: "point_mass_2d goal",
                        expected: 2,
                        got: goal.len(),
                    });
                }
                g[0] = goal[0];
                g[1] = goal[1];
            }
            EnvKind::Lander1d {
                target_altitude, ..
            } => {
                if goal.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "lander_1d goal",
                        expected: 1,
                        got: goal.len(),
                    });
                }
                *target_altitude = goal[0];
            }
            EnvKind::Cartpole { .. } => {
                if !goal.is_empty() {
                    return Err(Error::InvalidConfig(
                        "cartpole regulates the origin; no goal parameters".into(),
                    ));
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidConfig("dt must be > 0".into()));
        }
        if self.state_box.len() != self.state_dim() || self.init_box.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "state boxes",
                expected: self.state_dim(),
                got: self.state_box.len().min(self.init_box.len()),
            });
        }
        for (lo, hi) in self.state_box.iter() {
            if !(*lo < *hi) {
                return Err(Error::InvalidConfig("state_box needs lo < hi".into()));
            }
        }
        for (lo, hi) in self.init_box.iter() {
            if !(*lo <= *hi) {
                return Err(Error::InvalidConfig("init_box needs lo <= hi".into()));
            }
        }
        for (lo, hi) in self.action_bounds() {
            if !(lo < hi) {
                return Err(Error::InvalidConfig("action bounds need lo < hi".into()));
            }
        }
        Ok(())
    }

    /// Deterministic initial state: one uniform draw per state entry from
    /// the init box, in entry order, from xoshiro256** seeded with `seed`.
    pub fn reset(&self, seed: u64) -> EnvState<T> {
        let mut rng = Xoshiro256StarStar::new(seed);
        let values = self
            .init_box
            .iter()
            .map(|(lo, hi)| {
                let u = rng.next_f64();
                *lo + T::lit(u) * (*hi - *lo)
            })
            .collect();
        EnvState { values }
    }

    pub fn clip_action(&self, action: &EnvAction<T>) -> EnvAction<T> {
        let bounds = self.action_bounds();
        let values = action
            .values
            .iter()
            .zip(&bounds)
            .map(|(a, (lo, hi))| {
                if *a < *lo {
                    *lo
                } else if *a > *hi {
                    *hi
                } else {
                    *a
                }
            })
            .collect();
        EnvAction { values }
    }

    pub fn is_diverged(&self, state: &EnvState<T>) -> bool {
        state
            .values
            .iter()
            .any(|v| !v.is_finite() || v.abs() > T::lit(DIVERGENCE_LIMIT))
    }

    /// One semi-implicit Euler step with the clipped action.
    pub fn step(&self, state: &EnvState<T>, action: &EnvAction<T>) -> Result<EnvState<T>> {
        if state.values.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "step state",
                expected: self.state_dim(),
                got: state.values.len(),
            });
        }
        if action.values.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                context: "step action",
                expected: self.action_dim(),
                got: action.values.len(),
            });
        }
        if state.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite input state".into()));
        }
        let a = self.clip_action(action);
        let dt = self.dt;
        let s = &state.values;
        let values = match &self.kind {
            EnvKind::PointMass2d { .. } => {
                let vx = s[2] + a.values[0] * dt;
                let vy = s[3] + a.values[1] * dt;
                vec![s[0] + vx * dt, s[1] + vy * dt, vx, vy]
            }
            EnvKind::Lander1d { gravity, .. } => {
                let v = s[1] + (a.values[0] - *gravity) * dt;
                vec![s[0] + v * dt, v]
            }
            EnvKind::Cartpole {
                gravity,
                cart_mass,
                pole_mass,
                pole_half_length,
                ..
            } => {
                let (theta, omega, x, v) = (s[0], s[1], s[2], s[3]);
                let force = a.values[0];
                let total_mass = *cart_mass + *pole_mass;
                let (sin_t, cos_t) = (theta.sin(), theta.cos());
                let temp =
                    (force + *pole_mass * *pole_half_length * omega * omega * sin_t) / total_mass;
                let theta_acc = (*gravity * sin_t - cos_t * temp)
                    / (*pole_half_length
                        * (T::lit(4.0 / 3.0) - *pole_mass * cos_t * cos_t / total_mass));
                let x_acc = temp - *pole_mass * *pole_half_length * theta_acc * cos_t / total_mass;
                let omega2 = omega + theta_acc * dt;
                let theta2 = theta + omega2 * dt;
                let v2 = v + x_acc * dt;
                let x2 = x + v2 * dt;
                vec![theta2, omega2, x2, v2]
            }
        };
        Ok(EnvState { values })
    }

    /// Scales the state into the operating box ((s - mid) / half-width per
    /// entry) and zero-pads to `width` entries. This is the policy-input
    /// embedding shared by training and execution.
    pub fn embed_state(&self, state: &EnvState<T>, width: usize) -> Result<Vec<T>> {
        if width < self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "embed width",
                expected: self.state_dim(),
                got: width,
            });
        }
        let two = T::lit(2.0);
        let mut out = Vec::with_capacity(width);
        for (s, (lo, hi)) in state.values.iter().zip(&self.state_box) {
            let mid = (*lo + *hi) / two;
            let half = (*hi - *lo) / two;
            out.push((*s - mid) / half);
        }
        out.resize(width, T::zero());
        Ok(out)
    }

    /// Reads the first `action_dim` entries of a policy output and clips
    /// them to the environment's action bounds.
    pub fn extract_action(&self, output: &[T]) -> Result<EnvAction<T>> {
        if output.len() < self.action_dim() {
            return Err(Error::DimensionMismatch {
                context: "extract action",
                expected: self.action_dim(),
                got: output.len(),
            });
        }
        Ok(self.clip_action(&EnvAction {
            values: output[..self.action_dim()].to_vec(),
        }))
    }
}

/// Iterates [`EnvParams::step`] under `act_fn` until Success, Timeout, or
/// Diverged. Deterministic given the initial state and the policy.
pub fn rollout<T: Real>(
    params: &EnvParams<T>,
    act_fn: impl Fn(&EnvState<T>) -> EnvAction<T>,
    init: EnvState<T>,
    term: &TerminationSpec<T>,
) -> Trajectory<T> {
    if params.is_diverged(&init) {
        return Trajectory {
            steps: Vec::new(),
            final_state: init,
            outcome: Outcome::Diverged,
        };
    }
    let mut steps = Vec::new();
    let mut state = init;
    let mut hold = 0usize;
    let mut outcome = Outcome::Timeout;
    for t in 0..term.max_steps {
        let action = params.clip_action(&act_fn(&state));
        let next = match params.step(&state, &action) {
            Ok(s) => s,
            Err(_) => {
                outcome = Outcome::Diverged;
                steps.push(TrajStep {
                    t,
                    state: state.clone(),
                    action,
                });
                break;
            }
        };
        steps.push(TrajStep { t, state, action });
        state = next;
        if params.is_diverged(&state) {
            outcome = Outcome::Diverged;
            break;
        }
        if params.goal_error(&state) <= term.tolerance {
            hold += 1;
            if hold >= term.hold_steps {
                outcome = Outcome::Success;
                break;
            }
        } else {
            hold = 0;
        }
    }
    Trajectory {
        steps,
        final_state: state,
        outcome,
    }
}

/// Emits the trajectory as CSV: header `t,s0..s{d-1},a0..a{k-1}`, one row
/// per step with 17-significant-digit floats, and a final
/// `# outcome=<...>` comment line.
pub fn write_trajectory_csv<T: Real, W: Write>(
    traj: &Trajectory<T>,
    state_dim: usize,
    action_dim: usize,
    out: &mut W,
) -> std::io::Result<()> {
    write!(out, "t")?;
    for i in 0..state_dim {
        write!(out, ",s{i}")?;
    }
    for i in 0..action_dim {
        write!(out, ",a{i}")?;
    }
    writeln!(out)?;
    for step in &traj.steps {
        write!(out, "{}", step.t)?;
        for v in &step.state.values {
            write!(out, ",{:.16e}", v.to_f64().unwrap())?;
        }
        for v in &step.action.values {
            write!(out, ",{:.16e}", v.to_f64().unwrap())?;
        }
        writeln!(out)?;
    }
    let outcome = match traj.outcome {
        Outcome::Success => "Success",
        Outcome::Timeout => "Timeout",
        Outcome::Diverged => "Diverged",
    };
    writeln!(out, "# outcome={outcome}")
}
