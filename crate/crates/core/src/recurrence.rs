//! Step-by-step evolution of the kinetic state `(w, b, q, s, t)`.
//!
//! `w` and `b` are the probabilities that a vertex is white or blue; `q`, `s`
//! and `t` that the endpoints of an edge are white–white, blue–white and
//! blue–blue. The exact update holds on graphs of large girth; the
//! linearized update drops the `O(p^2)` terms and is the Euler scheme of the
//! limiting ODE system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticState {
    pub w: f64,
    pub b: f64,
    pub q: f64,
    pub s: f64,
    pub t: f64,
}

impl KineticState {
    pub fn as_array(&self) -> [f64; 5] {
        [self.w, self.b, self.q, self.s, self.t]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        KineticState {
            w: a[0],
            b: a[1],
            q: a[2],
            s: a[3],
            t: a[4],
        }
    }

    /// Largest coordinate-wise absolute difference.
    pub fn max_abs_diff(&self, other: &KineticState) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Edge-pair bounds `q + s <= w` and `s + t <= b`, with slack `tol`.
    pub fn pair_bounds_hold(&self, tol: f64) -> bool {
        self.q + self.s <= self.w + tol && self.s + self.t <= self.b + tol
    }

    fn check_denominators(&self) -> Result<()> {
        if !(self.w > 0.0) || !(self.b > 0.0) {
            return Err(Error::DegenerateState(format!(
                "w = {}, b = {}",
                self.w, self.b
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_degree(r: usize) -> Result<()> {
    if r < 3 {
        return Err(Error::invalid(format!(
            "degree r must be at least 3, got {r}"
        )));
    }
    Ok(())
}

pub(crate) fn check_root_probability(p0: f64) -> Result<()> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::invalid(format!("p0 must lie in (0, 1), got {p0}")));
    }
    Ok(())
}

fn check_step_probability(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("p must lie in [0, 1), got {p}")));
    }
    Ok(())
}

/// State after the root step, before any growth.
pub fn initial_state(r: usize, p0: f64) -> Result<KineticState> {
    check_degree(r)?;
    check_root_probability(p0)?;
    let rf = r as f64;
    let r = r as i32;
    let keep = 1.0 - p0;
    Ok(KineticState {
        w: keep.powi(r + 1),
        b: rf * p0 * keep.powi(r),
        q: keep.powi(2 * r),
        s: (rf - 1.0) * p0 * keep.powi(2 * r - 1),
        t: (rf - 1.0) * (rf - 1.0) * p0 * p0 * keep.powi(2 * r - 2),
    })
}

/// One exact step of the kinetic recurrence with growth probability `p`.
pub fn step_exact(state: &KineticState, r: usize, p: f64) -> Result<KineticState> {
    check_degree(r)?;
    check_step_probability(p)?;
    state.check_denominators()?;
    let KineticState { w, b, q, s, t } = *state;
    let rf = r as f64;
    let r = r as i32;

    // a white vertex's neighbour fires / a blue vertex's other neighbour fires
    let white_hit = p * s / w;
    let blue_hit = rf * p * t / ((rf - 1.0) * b);
    let stay_white = 1.0 - white_hit;
    let stay_blue = 1.0 - blue_hit;

    Ok(KineticState {
        w: w * stay_white.powi(r),
        b: b * (1.0 - p) * stay_blue.powi(r - 1) + rf * p * s * stay_white.powi(r - 1),
        q: q * stay_white.powi(2 * r - 2),
        s: s * (1.0 - p) * stay_white.powi(r - 1) * stay_blue.powi(r - 2)
            + (rf - 1.0) * p * q * s / w * stay_white.powi(2 * r - 3),
        t: t * (1.0 - p).powi(2) * stay_blue.powi(2 * r - 4)
            + 2.0 * s * (1.0 - p) * stay_blue.powi(r - 2) * (rf - 1.0) * p * s / w
                * stay_white.powi(r - 2)
            + q * (rf - 1.0).powi(2) * p * p * s * s / (w * w) * stay_white.powi(2 * r - 4),
    })
}

/// One step of the first-order (linearized) system.
pub fn step_linearized(state: &KineticState, r: usize, p: f64) -> Result<KineticState> {
    check_degree(r)?;
    check_step_probability(p)?;
    state.check_denominators()?;
    let KineticState { w, b, q, s, t } = *state;
    let rf = r as f64;
    Ok(KineticState {
        w: w - p * rf * s,
        b: b + p * (-b - rf * t + rf * s),
        q: q - p * (2.0 * rf - 2.0) * q * s / w,
        s: s + p
            * (-s + (rf - 1.0) * q * s / w
                - (rf - 1.0) * s * s / w
                - rf * (rf - 2.0) * s * t / ((rf - 1.0) * b)),
        t: t + p
            * (-2.0 * t + 2.0 * (rf - 1.0) * s * s / w
                - 2.0 * rf * (rf - 2.0) * t * t / ((rf - 1.0) * b)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Exact,
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryMode {
    Exact,
    Linearized,
    Ode,
}

impl From<StepMode> for TrajectoryMode {
    fn from(m: StepMode) -> Self {
        match m {
            StepMode::Exact => TrajectoryMode::Exact,
            StepMode::Linearized => TrajectoryMode::Linearized,
        }
    }
}

/// States indexed by step (recurrences) or by `x` (ODE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: TrajectoryMode,
    pub points: Vec<(f64, KineticState)>,
}

impl Trajectory {
    pub fn states(&self) -> impl Iterator<Item = &KineticState> {
        self.points.iter().map(|(_, s)| s)
    }

    pub fn last(&self) -> &KineticState {
        &self.points.last().expect("trajectory is never empty").1
    }
}

/// Applies `steps` updates from the initial state; entry `i` is the state
/// after step `i`.
pub fn iterate(r: usize, p0: f64, p: f64, steps: usize, mode: StepMode) -> Result<Trajectory> {
    let step = match mode {
        StepMode::Exact => step_exact,
        StepMode::Linearized => step_linearized,
    };
    let mut state = initial_state(r, p0)?;
    let mut points = Vec::with_capacity(steps + 1);
    points.push((0.0, state));
    for i in 1..=steps {
        state = step(&state, r, p)?;
        points.push((i as f64, state));
    }
    Ok(Trajectory {
        mode: mode.into(),
        points,
    })
}

/// Lower bound on `E|P̄| / n`: the surviving roots plus, for each growth
/// step, the blue vertices that fire with no neighbour firing alongside.
pub fn expected_pbar_fraction(traj: &Trajectory, r: usize, p0: f64, p: f64) -> f64 {
    let r = r as i32;
    let roots = p0 * (1.0 - p0).powi(r);
    let isolated = p * (1.0 - p).powi(r);
    let n = traj.points.len();
    roots
        + traj.points[..n - 1]
            .iter()
            .map(|(_, s)| isolated * s.b)
            .sum::<f64>()
}
