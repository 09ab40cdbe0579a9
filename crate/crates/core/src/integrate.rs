//! Fixed-step classical Runge–Kutta propagation.

use nalgebra::DVector;

use crate::chain::ChainState;
use crate::dynamics::ChainModel;
use crate::error::{Error, Result};
use crate::forces::ExternalForceModel;

/// Default truth-integrator step, s.
pub const DEFAULT_DT: f64 = 1e-3;

/// One RK4 step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(mut f: F, t: f64, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let half = 0.5 * dt;
    let k1 = f(t, x)?;
    let k2 = f(t + half, &(x + &k1 * half))?;
    let k3 = f(t + half, &(x + &k2 * half))?;
    let k4 = f(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

/// Advances the chain by `dt` with the thrust held at `u` over the step.
pub fn step_chain(
    model: &ChainModel,
    state: &ChainState,
    u: &DVector<f64>,
    forces: &dyn ExternalForceModel,
    t: f64,
    dt: f64,
) -> Result<ChainState> {
    let x = state.to_vector();
    let next = rk4_step(
        |tau, x| {
            let s = ChainState::from_vector(x)?;
            let ext = forces.evaluate(tau, model, &s)?;
            Ok(model.rhs(&s, u, &ext)?.to_vector())
        },
        t,
        &x,
        dt,
    )?;
    ChainState::from_vector(&next)
}

/// Sampled trajectory; `commands[k]` is the thrust held over
/// `[times[k], times[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ChainState>,
    pub commands: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &ChainState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Number of steps of size `dt` covering `span`, treating a remainder below
/// `1e-9·dt` as rounding.
pub fn step_count(span: f64, dt: f64) -> usize {
    ((span / dt) - 1e-9).ceil().max(0.0) as usize
}

/// Integrates from `t0` to `t1` with zero-order-hold thrust sampled at the
/// start of each step. The final step is shortened if `dt` does not divide
/// the interval.
pub fn integrate(
    model: &ChainModel,
    initial: &ChainState,
    schedule: &dyn Fn(f64) -> DVector<f64>,
    forces: &dyn ExternalForceModel,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(t1 > t0) {
        return Err(Error::invalid("t1", format!("must exceed t0 = {t0}, got {t1}")));
    }
    let steps = step_count(t1 - t0, dt);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        commands: Vec::with_capacity(steps),
    };
    traj.times.push(t0);
    traj.states.push(initial.clone());
    let mut state = initial.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let t_next = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * dt };
        let u = schedule(t);
        // M_θ is positive definite for any finite angles, so a failed solve
        // inside the step means a stage went non-finite.
        state = match step_chain(model, &state, &u, forces, t, t_next - t) {
            Ok(s) => s,
            Err(Error::Numerical(_)) => return Err(Error::NonFinite { step: k + 1, time: t_next }),
            Err(e) => return Err(e.at_step(k)),
        };
        if !state.is_finite() {
            return Err(Error::NonFinite { step: k + 1, time: t_next });
        }
        traj.times.push(t_next);
        traj.states.push(state.clone());
        traj.commands.push(u);
    }
    Ok(traj)
}
