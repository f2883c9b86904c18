use serde::{Deserialize, Serialize};

use super::ForceLaw;
use crate::ensemble::PhaseSpacePoint;
use crate::error::{Error, Result};
use crate::wavefunction::WaveFunctionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with a fixed step.
    Rk4,
    /// Dormand–Prince 5(4) with adaptive steps.
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub method: Method,
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub min_dt: f64,
    /// Store every `stride`-th step in a [`Trajectory`].
    pub stride: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-3,
            rtol: 1e-9,
            atol: 1e-12,
            min_dt: 1e-12,
            stride: 1,
        }
    }
}

impl IntegratorSpec {
    pub fn rk4(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self {
            method: Method::Rk45,
            dt: 1e-2,
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        if !(self.min_dt > 0.0 && self.min_dt <= self.dt) {
            return Err(Error::InvalidParameter("min_dt must be in (0, dt]".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sampled phase-space path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseSpacePoint>,
    pub law: ForceLaw,
    /// Local error estimate of the step ending at each stored time (zero for
    /// fixed-step RK4 and for the initial point).
    pub diagnostics: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> PhaseSpacePoint {
        *self
            .states
            .last()
            .expect("trajectories hold at least the initial point")
    }
}

type State = [f64; 2];

struct Rhs<'a> {
    model: &'a WaveFunctionModel,
    law: ForceLaw,
    inv_mass: f64,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, y: State) -> Result<State> {
        let [x, p] = y;
        if !(x.is_finite() && p.is_finite()) {
            return Err(Error::NodeRegionEntered { t });
        }
        let node = |e: Error| match e {
            Error::NodeRegion { .. } | Error::InvalidField => Error::NodeRegionEntered { t },
            other => other,
        };
        if self.law.is_first_order() {
            let f = self.model.eval_valid(x, t).map_err(node)?;
            return Ok([f.grad_s * self.inv_mass, 0.0]);
        }
        let force = self.law.force(self.model, x, p, t).map_err(node)?;
        Ok([p * self.inv_mass, force])
    }

    /// For first-order motion, `p` is slaved to `m ẋ = ∇S`.
    fn sync(&self, t: f64, y: &mut State) -> Result<()> {
        if self.law.is_first_order() {
            y[1] = self
                .model
                .eval_valid(y[0], t)
                .map_err(|_| Error::NodeRegionEntered { t })?
                .grad_s;
        }
        Ok(())
    }
}

fn axpy(y: State, h: f64, k: State) -> State {
    [y[0] + h * k[0], y[1] + h * k[1]]
}

fn rk4_step(rhs: &Rhs<'_>, t: f64, y: State, h: f64) -> Result<State> {
    let k1 = rhs.eval(t, y)?;
    let k2 = rhs.eval(t + 0.5 * h, axpy(y, 0.5 * h, k1))?;
    let k3 = rhs.eval(t + 0.5 * h, axpy(y, 0.5 * h, k2))?;
    let k4 = rhs.eval(t + h, axpy(y, h, k3))?;
    Ok([
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince trial step: `(y5, error vector)`.
fn dopri_step(rhs: &Rhs<'_>, t: f64, y: State, h: f64) -> Result<(State, State)> {
    let mut k = [[0.0; 2]; 7];
    for stage in 0..7 {
        let mut yi = y;
        for (j, kj) in k.iter().enumerate().take(stage) {
            yi = axpy(yi, h * A[stage][j], *kj);
        }
        k[stage] = rhs.eval(t + C[stage] * h, yi)?;
    }
    let mut y5 = y;
    let mut err = [0.0; 2];
    for s in 0..7 {
        y5 = axpy(y5, h * B5[s], k[s]);
        err[0] += h * (B5[s] - B4[s]) * k[s][0];
        err[1] += h * (B5[s] - B4[s]) * k[s][1];
    }
    Ok((y5, err))
}

/// Drives the integration from `t0` to `t1`, calling `record` after every
/// accepted step with `(t, state, error estimate, step index)`.
fn drive<F: FnMut(f64, State, f64, usize)>(
    rhs: &Rhs<'_>,
    mut y: State,
    t0: f64,
    t1: f64,
    integ: &IntegratorSpec,
    mut record: F,
) -> Result<State> {
    rhs.sync(t0, &mut y)?;
    let span = t1 - t0;
    match integ.method {
        Method::Rk4 => {
            let steps = ((span / integ.dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for i in 1..=steps {
                let t = t0 + (i - 1) as f64 * h;
                y = rk4_step(rhs, t, y, h)?;
                let t_new = if i == steps { t1 } else { t0 + i as f64 * h };
                rhs.sync(t_new, &mut y)?;
                record(t_new, y, 0.0, i);
            }
        }
        Method::Rk45 => {
            let mut t = t0;
            let mut h = integ.dt.min(span);
            let mut index = 0;
            while t < t1 {
                let last = t + h >= t1 - 1e-14 * (1.0 + t1.abs());
                if last {
                    h = t1 - t;
                }
                let trial = dopri_step(rhs, t, y, h);
                let (y_new, err) = match trial {
                    Ok(v) => v,
                    Err(Error::NodeRegionEntered { .. }) => {
                        h *= 0.25;
                        if h < integ.min_dt {
                            return Err(Error::NodeRegionEntered { t });
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let norm = (0..2)
                    .map(|i| err[i].abs() / (integ.atol + integ.rtol * y[i].abs().max(y_new[i].abs())))
                    .fold(0.0, f64::max);
                if norm <= 1.0 {
                    t = if last { t1 } else { t + h };
                    y = y_new;
                    rhs.sync(t, &mut y)?;
                    index += 1;
                    record(t, y, norm * integ.rtol, index);
                }
                let factor = if norm == 0.0 {
                    5.0
                } else {
                    (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                h *= factor;
                if h < integ.min_dt && t < t1 {
                    return Err(Error::StepUnderflow { t, dt: h });
                }
            }
        }
    }
    Ok(y)
}

/// Advances a single phase-space point from `t0` to `t1` without storing
/// the path.
pub fn propagate(
    model: &WaveFunctionModel,
    law: &ForceLaw,
    start: PhaseSpacePoint,
    t0: f64,
    t1: f64,
    integ: &IntegratorSpec,
) -> Result<PhaseSpacePoint> {
    if t1 == t0 {
        return Ok(start);
    }
    let rhs = Rhs {
        model,
        law: *law,
        inv_mass: 1.0 / model.params().mass,
    };
    let [x, p] = drive(&rhs, [start.x, start.p], t0, t1, integ, |_, _, _, _| {})?;
    Ok(PhaseSpacePoint { x, p })
}

/// Integrates `(x0, p0)` from `t0` to `t1`. Second-order laws integrate
/// `ẋ = p/m, ṗ = F`; the de Broglie law integrates `ẋ = ∇S/m` and records
/// `p = m ẋ` (the supplied `p0` is ignored).
pub fn integrate_trajectory(
    model: &WaveFunctionModel,
    law: &ForceLaw,
    x0: f64,
    p0: f64,
    t0: f64,
    t1: f64,
    integ: &IntegratorSpec,
) -> Result<Trajectory> {
    law.validate()?;
    integ.validate()?;
    if t1 < t0 {
        return Err(Error::InvalidParameter(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let rhs = Rhs {
        model,
        law: *law,
        inv_mass: 1.0 / model.params().mass,
    };
    let mut start = [x0, p0];
    if law.needs_fields() {
        model
            .eval_valid(x0, t0)
            .map_err(|_| Error::NodeRegionEntered { t: t0 })?;
    }
    rhs.sync(t0, &mut start)?;
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![PhaseSpacePoint {
            x: start[0],
            p: start[1],
        }],
        law: *law,
        diagnostics: vec![0.0],
    };
    if t1 == t0 {
        return Ok(traj);
    }
    let stride = integ.stride;
    let mut pending = None;
    drive(&rhs, start, t0, t1, integ, |t, y, err, i| {
        if i % stride == 0 {
            traj.times.push(t);
            traj.states.push(PhaseSpacePoint { x: y[0], p: y[1] });
            traj.diagnostics.push(err);
            pending = None;
        } else {
            pending = Some((t, y, err));
        }
    })?;
    // always keep the end point
    if let Some((t, y, err)) = pending {
        traj.times.push(t);
        traj.states.push(PhaseSpacePoint { x: y[0], p: y[1] });
        traj.diagnostics.push(err);
    }
    Ok(traj)
}
