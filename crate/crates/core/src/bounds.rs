//! Induced-forest fraction `ξ(p0)` and its maximisation over `p0`.
//!
//! `ξ(p0)` adds three contributions: the roots that keep no rooted
//! neighbour, `p0 (1 - p0)^r`; the vertices grown from blue ones, `∫ b̂`;
//! and, only when the white subgraph is subcritical in the limit, the
//! white vertices `lim ŵ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, IntegrationOptions, OdeSolution};
use crate::recurrence::{check_degree, check_root_probability};

/// `lim (r-1) q̂/ŵ` must sit at least this far below 1.
pub const SUBCRITICAL_MARGIN: f64 = 1e-6;

/// Smallest `p0` the optimizer looks at. `ξ` keeps rising as `p0 → 0`, so
/// the reported optimum sits on this floor.
pub const P0_FLOOR: f64 = 1e-4;
pub const P0_CEILING: f64 = 0.6;
/// Golden-section refinement stops once the bracket is narrower than this.
pub const P0_RESOLUTION: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub integration: IntegrationOptions,
    pub margin: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            integration: IntegrationOptions::default(),
            margin: SUBCRITICAL_MARGIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub r: usize,
    pub p0: f64,
    pub root_term: f64,
    pub integral_term: f64,
    /// `lim ŵ` when subcritical, otherwise 0.
    pub white_term: f64,
    pub w_limit: f64,
    pub ratio_limit: f64,
    pub subcritical: bool,
    pub xi: f64,
    /// Decycling-fraction bound `1 - ξ`.
    #[serde(rename = "Xi")]
    pub xi_complement: f64,
    pub x_stop: f64,
}

impl BoundReport {
    pub fn from_solution(sol: &OdeSolution, margin: f64) -> Self {
        let r = sol.r;
        let root_term = sol.p0 * (1.0 - sol.p0).powi(r as i32);
        let subcritical = is_subcritical(sol.ratio_limit, margin);
        let white_term = if subcritical { sol.w_limit } else { 0.0 };
        let xi = root_term + sol.b_integral + white_term;
        BoundReport {
            r,
            p0: sol.p0,
            root_term,
            integral_term: sol.b_integral,
            white_term,
            w_limit: sol.w_limit,
            ratio_limit: sol.ratio_limit,
            subcritical,
            xi,
            xi_complement: 1.0 - xi,
            x_stop: sol.x_stop,
        }
    }
}

fn is_subcritical(ratio_limit: f64, margin: f64) -> bool {
    ratio_limit < 1.0 - margin
}

/// Whether the limiting white branching ratio is below one.
pub fn subcritical(sol: &OdeSolution) -> bool {
    is_subcritical(sol.ratio_limit, SUBCRITICAL_MARGIN)
}

pub fn xi_of_p0(r: usize, p0: f64, opts: &BoundOptions) -> Result<BoundReport> {
    check_degree(r)?;
    check_root_probability(p0)?;
    let sol = integrate(r, p0, &opts.integration)?;
    Ok(BoundReport::from_solution(&sol, opts.margin))
}

/// One objective evaluation made by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub p0: f64,
    /// `None` if integration failed at this `p0`.
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub p0: f64,
    pub report: BoundReport,
    /// Grid `p0` values that are local maxima of `ξ` on the coarse grid.
    pub grid_local_maxima: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

/// Coarse grid: a log-spaced run from `P0_FLOOR` up to 0.005, then
/// 0.005, 0.010, …, 0.600.
pub fn coarse_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = [1e-4, 2e-4, 5e-4, 1e-3, 2e-3].to_vec();
    grid.extend((1..=120).map(|k| k as f64 * 0.005));
    grid
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximises `ξ(p0)`: evaluates the coarse grid, then golden-section refines
/// (in `ln p0`) around every grid local maximum and keeps the best.
pub fn optimize_p0(r: usize, opts: &BoundOptions) -> Result<Optimum> {
    check_degree(r)?;
    let grid = coarse_grid();
    let mut trace = Vec::new();
    let values: Vec<Option<BoundReport>> = grid
        .iter()
        .map(|&p0| {
            let rep = xi_of_p0(r, p0, opts).ok();
            trace.push(TracePoint {
                p0,
                xi: rep.map(|b| b.xi),
            });
            rep
        })
        .collect();
    if values.iter().all(Option::is_none) {
        return Err(Error::OptimizationFailure(format!(
            "every grid point failed to integrate for r = {r}"
        )));
    }

    let xi_at = |k: usize| values[k].map(|b| b.xi).unwrap_or(f64::NEG_INFINITY);
    let local_maxima: Vec<usize> = (0..grid.len())
        .filter(|&k| values[k].is_some())
        .filter(|&k| {
            (k == 0 || xi_at(k) >= xi_at(k - 1))
                && (k + 1 == grid.len() || xi_at(k) >= xi_at(k + 1))
        })
        .collect();

    let mut best: Option<BoundReport> = None;
    for &k in &local_maxima {
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(grid.len() - 1)];
        let refined = golden_section(
            r,
            lo,
            hi,
            values[k].expect("maxima are evaluated"),
            opts,
            &mut trace,
        );
        if best.is_none_or(|b| refined.xi > b.xi) {
            best = Some(refined);
        }
    }
    let report = best.expect("at least one local maximum exists");
    Ok(Optimum {
        p0: report.p0,
        report,
        grid_local_maxima: local_maxima.iter().map(|&k| grid[k]).collect(),
        trace,
    })
}

fn golden_section(
    r: usize,
    lo: f64,
    hi: f64,
    seed: BoundReport,
    opts: &BoundOptions,
    trace: &mut Vec<TracePoint>,
) -> BoundReport {
    let mut best = seed;
    let mut eval = |p0: f64| -> f64 {
        let rep = xi_of_p0(r, p0, opts).ok();
        trace.push(TracePoint {
            p0,
            xi: rep.map(|b| b.xi),
        });
        match rep {
            Some(rep) => {
                if rep.xi > best.xi {
                    best = rep;
                }
                rep.xi
            }
            None => f64::NEG_INFINITY,
        }
    };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (eval(c.exp()), eval(d.exp()));
    while b.exp() - a.exp() > P0_RESOLUTION {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d.exp());
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub r: usize,
    pub p0: f64,
    pub xi: f64,
    #[serde(rename = "Xi")]
    pub xi_complement: f64,
    pub subcritical: bool,
}

pub fn table(r_min: usize, r_max: usize, opts: &BoundOptions) -> Result<Vec<TableRow>> {
    check_degree(r_min)?;
    if r_max < r_min {
        return Err(Error::invalid(format!(
            "r_max = {r_max} is below r_min = {r_min}"
        )));
    }
    (r_min..=r_max)
        .map(|r| {
            let opt = optimize_p0(r, opts)?;
            Ok(TableRow {
                r,
                p0: opt.p0,
                xi: opt.report.xi,
                xi_complement: opt.report.xi_complement,
                subcritical: opt.report.subcritical,
            })
        })
        .collect()
}
