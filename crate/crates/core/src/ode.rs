//! The continuum limit of the linearized recurrence, integrated with an
//! adaptive Dormand–Prince 5(4) pair.
//!
//! The integrated state carries a sixth coordinate, the running integral of
//! `b̂`, so the area under `b̂` shares the step-size control of the trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrence::{
    check_degree, initial_state, iterate, KineticState, StepMode, Trajectory, TrajectoryMode,
};

/// Right-hand side of the five kinetic equations.
pub fn derivative(state: &KineticState, r: usize) -> Result<KineticState> {
    let KineticState { w, b, q, s, t } = *state;
    if !(w > 0.0) || !(b > 0.0) {
        return Err(Error::DegenerateState(format!("w = {w}, b = {b}")));
    }
    let rf = r as f64;
    Ok(KineticState {
        w: -rf * s,
        b: -b - rf * t + rf * s,
        q: -(2.0 * rf - 2.0) * q * s / w,
        s: -s + (rf - 1.0) * q * s / w
            - (rf - 1.0) * s * s / w
            - rf * (rf - 2.0) * s * t / ((rf - 1.0) * b),
        t: -2.0 * t + 2.0 * (rf - 1.0) * s * s / w
            - 2.0 * rf * (rf - 2.0) * t * t / ((rf - 1.0) * b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Target for the neglected tail of `∫ b̂` and of `ŵ`.
    pub tail_tol: f64,
    /// Hard ceiling on `x`.
    pub x_max: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            tail_tol: 1e-9,
            x_max: 500.0,
        }
    }
}

impl IntegrationOptions {
    pub fn halved(&self) -> Self {
        IntegrationOptions {
            rel_tol: self.rel_tol / 2.0,
            abs_tol: self.abs_tol / 2.0,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        let ok =
            self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.tail_tol > 0.0 && self.x_max > 0.0;
        if !ok {
            return Err(Error::invalid(format!(
                "tolerances and x_max must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdePoint {
    pub x: f64,
    pub state: KineticState,
    /// `∫_0^x b̂`.
    pub b_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSolution {
    pub r: usize,
    pub p0: f64,
    pub grid: Vec<OdePoint>,
    pub b_integral: f64,
    pub w_limit: f64,
    /// `(r - 1) q̂ / ŵ` at the stopping point.
    pub ratio_limit: f64,
    pub x_stop: f64,
    /// False if `ŝ > b̂` was seen, in which case the early-stopping
    /// certificate was abandoned and the run went to `x_max`.
    pub tail_certified: bool,
    pub options: IntegrationOptions,
}

impl OdeSolution {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            mode: TrajectoryMode::Ode,
            points: self.grid.iter().map(|p| (p.x, p.state)).collect(),
        }
    }

    pub fn initial(&self) -> &OdePoint {
        &self.grid[0]
    }
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes c_i are not needed.
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

type Vec6 = [f64; 6];

fn rhs6(y: &Vec6, r: usize) -> Result<Vec6> {
    let d = derivative(&KineticState::from_array([y[0], y[1], y[2], y[3], y[4]]), r)?;
    Ok([d.w, d.b, d.q, d.s, d.t, y[1]])
}

fn to_point(x: f64, y: &Vec6) -> OdePoint {
    OdePoint {
        x,
        state: KineticState::from_array([y[0], y[1], y[2], y[3], y[4]]),
        b_integral: y[5],
    }
}

enum Trial {
    Accepted {
        y: Vec6,
        dy: Vec6,
        err: f64,
    },
    /// A stage or the result left the positive orthant.
    LostPositivity,
}

/// One Dormand–Prince attempt from `(y, dy)` with step `h` (FSAL).
fn try_step(y: &Vec6, dy: &Vec6, h: f64, r: usize, opts: &IntegrationOptions) -> Trial {
    let mut k = [[0.0; 6]; 7];
    k[0] = *dy;
    for stage in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(stage) {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..6 {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        match rhs6(&ys, r) {
            Ok(d) => k[stage] = d,
            Err(_) => return Trial::LostPositivity,
        }
    }
    let mut y5 = *y;
    let mut err_sq = 0.0;
    for i in 0..6 {
        let mut inc5 = 0.0;
        let mut inc4 = 0.0;
        for s in 0..7 {
            inc5 += B5[s] * k[s][i];
            inc4 += B4[s] * k[s][i];
        }
        y5[i] += h * inc5;
        let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
        err_sq += (h * (inc5 - inc4) / scale).powi(2);
    }
    if y5[..5].iter().any(|&v| !(v > 0.0)) {
        return Trial::LostPositivity;
    }
    // FSAL: stage 7 was evaluated at the 5th-order solution.
    Trial::Accepted {
        y: y5,
        dy: k[6],
        err: (err_sq / 6.0).sqrt(),
    }
}

const MIN_STEP: f64 = 1e-13;
const MAX_STEP: f64 = 2.0;

enum Stop<'a> {
    /// Stop once the tail certificate is met (or at `x_max`).
    Converged,
    /// Land exactly on every listed abscissa and stop at the last one.
    Grid(&'a [f64]),
}

struct RawSolution {
    grid: Vec<OdePoint>,
    certified: bool,
    converged: bool,
}

fn solve(r: usize, p0: f64, opts: &IntegrationOptions, stop: Stop<'_>) -> Result<RawSolution> {
    check_degree(r)?;
    opts.validate()?;
    let s0 = initial_state(r, p0)?;
    let mut y: Vec6 = [s0.w, s0.b, s0.q, s0.s, s0.t, 0.0];
    let mut dy = rhs6(&y, r)?;
    let mut x = 0.0;
    let mut h: f64 = 1e-3;
    let mut grid = vec![to_point(0.0, &y)];
    let mut certified = true;
    let b_floor = opts.tail_tol / (10.0 * r as f64);

    let targets: &[f64] = match stop {
        Stop::Converged => &[],
        Stop::Grid(xs) => xs,
    };
    let mut next_target = targets
        .iter()
        .position(|&t| t > 0.0)
        .unwrap_or(targets.len());
    let x_end = match stop {
        Stop::Converged => opts.x_max,
        Stop::Grid(xs) => xs.last().copied().unwrap_or(0.0),
    };
    if x_end <= 0.0 {
        return Ok(RawSolution {
            grid,
            certified,
            converged: true,
        });
    }

    loop {
        let limit = match stop {
            Stop::Converged => x_end,
            Stop::Grid(_) => targets[next_target],
        };
        let landing = x + h >= limit;
        let step = if landing { limit - x } else { h };
        match try_step(&y, &dy, step, r, opts) {
            Trial::LostPositivity => {
                h = step * 0.25;
                if h < MIN_STEP {
                    return Err(Error::IntegrationFailure {
                        x,
                        reason: format!("positivity lost; state {:?}", to_point(x, &y).state),
                    });
                }
                continue;
            }
            Trial::Accepted {
                y: y_new,
                dy: dy_new,
                err,
            } => {
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if err > 1.0 {
                    h = step * factor.min(1.0);
                    if h < MIN_STEP {
                        return Err(Error::IntegrationFailure {
                            x,
                            reason: "step size underflow".into(),
                        });
                    }
                    continue;
                }
                x = if landing { limit } else { x + step };
                y = y_new;
                dy = dy_new;
                grid.push(to_point(x, &y));
                // A landing step may be short; grow from the unclipped size.
                h = (if landing { h.max(step) } else { step } * factor).min(MAX_STEP);

                if y[3] > y[1] {
                    certified = false;
                }
                match stop {
                    Stop::Converged => {
                        if certified && y[1] < b_floor && dy[1] < 0.0 {
                            return Ok(RawSolution {
                                grid,
                                certified,
                                converged: true,
                            });
                        }
                        if x >= x_end {
                            let converged = y[1] < b_floor;
                            return Ok(RawSolution {
                                grid,
                                certified,
                                converged,
                            });
                        }
                    }
                    Stop::Grid(_) => {
                        if landing {
                            next_target += 1;
                            if next_target == targets.len() {
                                return Ok(RawSolution {
                                    grid,
                                    certified,
                                    converged: true,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Integrates from the root-step state until the tail of `∫ b̂` and the
/// remaining drop of `ŵ` are both below `tail_tol`.
///
/// Since `dŵ/dx = -r ŝ` and `ŝ <= b̂`, the drop of `ŵ` after `x` is at most
/// `r` times the tail of `∫ b̂`; integration stops once `b̂` is decaying and
/// below `tail_tol / (10 r)`.
pub fn integrate(r: usize, p0: f64, opts: &IntegrationOptions) -> Result<OdeSolution> {
    let raw = solve(r, p0, opts, Stop::Converged)?;
    if !raw.converged {
        return Err(Error::HorizonExceeded { x_max: opts.x_max });
    }
    let last = *raw.grid.last().expect("grid holds the initial point");
    Ok(OdeSolution {
        r,
        p0,
        b_integral: last.b_integral,
        w_limit: last.state.w,
        ratio_limit: (r as f64 - 1.0) * last.state.q / last.state.w,
        x_stop: last.x,
        tail_certified: raw.certified,
        options: *opts,
        grid: raw.grid,
    })
}

/// Solution values at exactly the abscissae `xs` (ascending, non-negative).
pub fn integrate_at(
    r: usize,
    p0: f64,
    xs: &[f64],
    opts: &IntegrationOptions,
) -> Result<Vec<OdePoint>> {
    if xs.windows(2).any(|w| w[1] <= w[0]) || xs.first().is_some_and(|&x| x < 0.0) {
        return Err(Error::invalid(
            "abscissae must be non-negative and strictly increasing",
        ));
    }
    let raw = solve(r, p0, opts, Stop::Grid(xs))?;
    let mut out = Vec::with_capacity(xs.len());
    let mut it = raw.grid.iter();
    for &x in xs {
        // every target is an exact landing point of the solver
        let p = it.find(|p| p.x == x).expect("solver lands on every target");
        out.push(*p);
    }
    Ok(out)
}

/// Supremum over the shared grid of `|recurrence_i - ODE(εi)|`, per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub per_coordinate: [f64; 5],
    pub steps: usize,
}

impl Deviation {
    pub fn max(&self) -> f64 {
        self.per_coordinate.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the recurrence run with `p = ε` for `⌈k0/ε⌉` steps against the
/// ODE solution sampled at `x = εi`.
pub fn ode_vs_recurrence(
    r: usize,
    p0: f64,
    eps: f64,
    k0: f64,
    mode: StepMode,
    opts: &IntegrationOptions,
) -> Result<Deviation> {
    if !(eps > 0.0 && eps < 1.0) || !(k0 > 0.0) {
        return Err(Error::invalid(format!(
            "need 0 < ε < 1 and k0 > 0, got ε = {eps}, k0 = {k0}"
        )));
    }
    // Guard against k0/ε landing a hair above an integer.
    let steps = ((k0 / eps) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let recurrence = iterate(r, p0, eps, steps, mode)?;
    let xs: Vec<f64> = (0..=steps).map(|i| eps * i as f64).collect();
    let ode = integrate_at(r, p0, &xs, opts)?;
    let mut per_coordinate = [0.0; 5];
    for ((_, rec), exact) in recurrence.points.iter().zip(&ode) {
        for (k, (a, b)) in rec
            .as_array()
            .iter()
            .zip(exact.state.as_array())
            .enumerate()
        {
            per_coordinate[k] = f64::max(per_coordinate[k], (a - b).abs());
        }
    }
    Ok(Deviation {
        per_coordinate,
        steps,
    })
}
