use std::fs;

use forest_core::bounds::{optimize_p0, table, xi_of_p0, BoundOptions, BoundReport};
use forest_core::forest::{
    empirical_forest_fraction, AlgorithmParams, EmpiricalStats, GraphSource,
};
use forest_core::graph::{fixture, Graph};
use forest_core::ode::{integrate, integrate_at, IntegrationOptions, OdePoint};
use forest_core::oracle::{
    check_cor42, check_cor43, check_cor44, check_independence, check_initial, check_step,
    factorization_check_cor41, CheckReport, SamplingOptions,
};
use forest_core::recurrence::{iterate, KineticState, StepMode};
use forest_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::args::{
    BoundArgs, Check, Format, OracleArgs, SimulateArgs, TableArgs, TraceArgs, TraceMode,
};
use crate::output::{aligned, csv, json, num};
use crate::CliError;

pub struct Ctx {
    pub format: Format,
    pub precision: u32,
}

impl Ctx {
    fn num(&self, x: f64) -> String {
        num(x, self.precision)
    }
}

#[derive(Serialize)]
struct BoundJson {
    r: usize,
    p0: f64,
    xi: f64,
    #[serde(rename = "Xi")]
    xi_complement: f64,
    subcritical: bool,
    terms: Terms,
    w_limit: f64,
    ratio_limit: f64,
    x_stop: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_local_maxima: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct Terms {
    root: f64,
    integral: f64,
    white: f64,
}

impl BoundJson {
    fn new(b: &BoundReport, grid_local_maxima: Option<Vec<f64>>) -> Self {
        BoundJson {
            r: b.r,
            p0: b.p0,
            xi: b.xi,
            xi_complement: b.xi_complement,
            subcritical: b.subcritical,
            terms: Terms {
                root: b.root_term,
                integral: b.integral_term,
                white: b.white_term,
            },
            w_limit: b.w_limit,
            ratio_limit: b.ratio_limit,
            x_stop: b.x_stop,
            grid_local_maxima,
        }
    }
}

pub fn bound(ctx: &Ctx, args: &BoundArgs) -> Result<String, CliError> {
    let opts = BoundOptions::default();
    let out = match args.p0 {
        Some(p0) => BoundJson::new(&xi_of_p0(args.r, p0, &opts)?, None),
        None => {
            let opt = optimize_p0(args.r, &opts)?;
            BoundJson::new(&opt.report, Some(opt.grid_local_maxima))
        }
    };
    Ok(match ctx.format {
        Format::Json => json(&out, ctx.precision),
        Format::Csv => csv(
            &[
                "r",
                "p0",
                "xi",
                "Xi",
                "subcritical",
                "root_term",
                "integral_term",
                "white_term",
            ],
            [vec![
                out.r.to_string(),
                ctx.num(out.p0),
                ctx.num(out.xi),
                ctx.num(out.xi_complement),
                out.subcritical.to_string(),
                ctx.num(out.terms.root),
                ctx.num(out.terms.integral),
                ctx.num(out.terms.white),
            ]],
        ),
        Format::Text => {
            let mut s = format!(
                "r = {}\np0 = {}\nxi = {}\nXi = {}\n",
                out.r,
                ctx.num(out.p0),
                ctx.num(out.xi),
                ctx.num(out.xi_complement)
            );
            s += &format!(
                "subcritical = {} (limit ratio {})\nterms: root = {}, integral = {}, white = {}\n",
                out.subcritical,
                ctx.num(out.ratio_limit),
                ctx.num(out.terms.root),
                ctx.num(out.terms.integral),
                ctx.num(out.terms.white)
            );
            s
        }
    })
}

pub fn table_cmd(ctx: &Ctx, args: &TableArgs) -> Result<String, CliError> {
    let rows = table(args.r_min, args.r_max, &BoundOptions::default())?;
    let header = ["r", "p0", "xi", "Xi", "subcritical"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            vec![
                row.r.to_string(),
                ctx.num(row.p0),
                ctx.num(row.xi),
                ctx.num(row.xi_complement),
                row.subcritical.to_string(),
            ]
        })
        .collect();
    Ok(match ctx.format {
        Format::Json => json(&rows, ctx.precision),
        Format::Csv => csv(&header, cells),
        Format::Text => aligned(&header, &cells),
    })
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    #[serde(flatten)]
    state: KineticState,
}

#[derive(Serialize)]
struct OdeRow {
    x: f64,
    #[serde(flatten)]
    state: KineticState,
    b_integral_so_far: f64,
}

pub fn trace(ctx: &Ctx, args: &TraceArgs) -> Result<String, CliError> {
    let state_cells =
        |s: &KineticState| s.as_array().iter().map(|&v| ctx.num(v)).collect::<Vec<_>>();
    match args.mode {
        TraceMode::Exact | TraceMode::Linearized => {
            let p = args
                .p
                .ok_or_else(|| CliError::Usage("--p is required for recurrence traces".into()))?;
            let steps = match args.steps {
                Some(n) => n,
                None if p > 0.0 => (5.0 / p).ceil() as usize,
                None => return Err(CliError::Usage("--steps is required when p = 0".into())),
            };
            let mode = if args.mode == TraceMode::Exact {
                StepMode::Exact
            } else {
                StepMode::Linearized
            };
            let traj = iterate(args.r, args.p0, p, steps, mode)?;
            let rows: Vec<StepRow> = traj
                .states()
                .enumerate()
                .map(|(step, s)| StepRow { step, state: *s })
                .collect();
            Ok(match ctx.format {
                Format::Json => json(&rows, ctx.precision),
                _ => csv(
                    &["step", "w", "b", "q", "s", "t"],
                    rows.iter()
                        .map(|r| [vec![r.step.to_string()], state_cells(&r.state)].concat()),
                ),
            })
        }
        TraceMode::Ode => {
            let opts = IntegrationOptions::default();
            let points: Vec<OdePoint> = match args.dx {
                None => integrate(args.r, args.p0, &opts)?.grid,
                Some(dx) if dx > 0.0 && dx.is_finite() => {
                    let x_stop = integrate(args.r, args.p0, &opts)?.x_stop;
                    let count = (x_stop / dx).ceil() as usize;
                    let xs: Vec<f64> = (0..=count).map(|k| k as f64 * dx).collect();
                    integrate_at(args.r, args.p0, &xs, &opts)?
                }
                Some(dx) => {
                    return Err(CliError::Usage(format!("--dx must be positive, got {dx}")))
                }
            };
            let rows: Vec<OdeRow> = points
                .iter()
                .map(|pt| OdeRow {
                    x: pt.x,
                    state: pt.state,
                    b_integral_so_far: pt.b_integral,
                })
                .collect();
            Ok(match ctx.format {
                Format::Json => json(&rows, ctx.precision),
                _ => csv(
                    &["x", "w", "b", "q", "s", "t", "b_integral_so_far"],
                    rows.iter().map(|r| {
                        [
                            vec![ctx.num(r.x)],
                            state_cells(&r.state),
                            vec![ctx.num(r.b_integral_so_far)],
                        ]
                        .concat()
                    }),
                ),
            })
        }
    }
}

fn load_graph(args: &SimulateArgs) -> Result<Option<Graph>, CliError> {
    if let Some(path) = &args.graph {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        return Ok(Some(Graph::parse_text(&text)?));
    }
    if let Some(name) = &args.fixture {
        return Ok(Some(fixture(name)?));
    }
    Ok(None)
}

pub fn simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<String, CliError> {
    let steps = match args.steps {
        Some(n) => n,
        None if args.p > 0.0 => (5.0 / args.p).ceil() as u32,
        None => 0,
    };
    let params = AlgorithmParams {
        steps,
        p0: args.p0,
        p: args.p,
        seed: args.seed,
    };
    let (source, n, r) = match load_graph(args)? {
        Some(g) => {
            let (n, r) = (g.n(), g.regular_degree());
            (GraphSource::Fixed(g), n, r)
        }
        None => {
            let (n, r) = (
                args.n.expect("clap requires n"),
                args.r.expect("clap requires r"),
            );
            (GraphSource::RandomRegular { n, r }, n, Some(r))
        }
    };
    let stats = empirical_forest_fraction(&source, &params, args.runs)?;
    let out = simulate_json(n, r, &params, &stats);
    Ok(match ctx.format {
        Format::Json => json(&out, ctx.precision),
        Format::Csv => csv(
            &[
                "run",
                "forest_size",
                "pbar_size",
                "wbar_size",
                "repairs",
                "fraction",
            ],
            stats.per_run.iter().enumerate().map(|(k, c)| {
                vec![
                    k.to_string(),
                    c.forest_size.to_string(),
                    c.pbar_size.to_string(),
                    c.wbar_size.to_string(),
                    c.repairs.to_string(),
                    ctx.num(c.fraction),
                ]
            }),
        ),
        Format::Text => {
            let r_text = r.map_or("irregular".to_string(), |r| r.to_string());
            let mut s = format!(
                "n = {n}, r = {r_text}, N = {}, p0 = {}, p = {}, seed = {}\n",
                steps,
                ctx.num(args.p0),
                ctx.num(args.p),
                args.seed
            );
            if stats.runs == 1 {
                let c = &stats.per_run[0];
                s += &format!(
                    "forest = {} ({} of n)\npbar = {}, wbar = {}, repairs = {}\n",
                    c.forest_size,
                    ctx.num(c.fraction),
                    c.pbar_size,
                    c.wbar_size,
                    c.repairs
                );
            } else {
                for (name, st) in [
                    ("forest", &stats.forest_fraction),
                    ("pbar", &stats.pbar_fraction),
                    ("wbar", &stats.wbar_fraction),
                    ("repairs", &stats.repairs_fraction),
                ] {
                    s += &format!(
                        "{name}/n: mean {} std {} min {} max {}\n",
                        ctx.num(st.mean),
                        ctx.num(st.std),
                        ctx.num(st.min),
                        ctx.num(st.max)
                    );
                }
            }
            s
        }
    })
}

fn simulate_json(
    n: usize,
    r: Option<usize>,
    params: &AlgorithmParams,
    stats: &EmpiricalStats,
) -> serde_json::Value {
    let params =
        json!({"steps": params.steps, "p0": params.p0, "p": params.p, "seed": params.seed});
    if stats.runs == 1 {
        let c = &stats.per_run[0];
        json!({
            "n": n, "r": r, "params": params,
            "forest_size": c.forest_size, "pbar_size": c.pbar_size, "wbar_size": c.wbar_size,
            "repairs": c.repairs, "fraction": c.fraction,
        })
    } else {
        json!({
            "n": n, "r": r, "params": params, "runs": stats.runs,
            "forest_fraction": stats.forest_fraction, "pbar_fraction": stats.pbar_fraction,
            "wbar_fraction": stats.wbar_fraction, "repairs_fraction": stats.repairs_fraction,
            "per_run": stats.per_run,
        })
    }
}

pub fn oracle(ctx: &Ctx, args: &OracleArgs) -> Result<String, CliError> {
    let sampling = SamplingOptions {
        samples: args.samples,
        seed: args.seed,
        force: args.monte_carlo,
    };
    let (r, i, p0, p) = (args.r, args.i, args.p0, args.p);
    let report: CheckReport = match args.check {
        Check::Initial => check_initial(r, p0)?,
        Check::Step => check_step(r, i, p0, p, &sampling)?,
        Check::Independence => check_independence(r, i, p0, p)?,
        Check::Cor41 => factorization_check_cor41(r, i, p0, p, &sampling)?,
        Check::Cor42 => check_cor42(r, i, p0, p, &sampling)?,
        Check::Cor43 => check_cor43(r, i, p0, p, &sampling)?,
        Check::Cor44 => check_cor44(r, i, p0, p, &sampling)?,
    };
    Ok(match ctx.format {
        Format::Json => json(&report, ctx.precision),
        Format::Csv => csv(
            &[
                "check",
                "item",
                "measured",
                "expected",
                "error",
                "std_error",
                "passed",
            ],
            report.items.iter().map(|it| {
                vec![
                    report.check.clone(),
                    it.name.clone(),
                    ctx.num(it.measured),
                    ctx.num(it.expected),
                    ctx.num(it.error),
                    it.std_error.map_or(String::new(), |se| ctx.num(se)),
                    it.passed.to_string(),
                ]
            }),
        ),
        Format::Text => {
            let verdict = if report.skipped {
                "SKIPPED (conditioning event has probability zero)"
            } else if report.passed {
                "PASS"
            } else {
                "FAIL"
            };
            let method = match (report.samples, report.fallback) {
                (0, _) => format!("exact, {} assignments", report.assignments),
                (n, fallback) => format!(
                    "monte-carlo, {n} samples, seed {}{}",
                    report.seed,
                    if fallback {
                        ", over the exact budget"
                    } else {
                        ""
                    }
                ),
            };
            let mut s = format!(
                "{} r={} i={} p0={} p={}: {verdict} (max error {}; {method})\n",
                report.check,
                r,
                report.i,
                ctx.num(p0),
                ctx.num(p),
                ctx.num(report.max_error)
            );
            for it in &report.items {
                s += &format!(
                    "  {:<28} measured {} expected {} error {}{}\n",
                    it.name,
                    ctx.num(it.measured),
                    ctx.num(it.expected),
                    ctx.num(it.error),
                    it.std_error
                        .map_or(String::new(), |se| format!(" se {}", ctx.num(se)))
                );
            }
            s
        }
    })
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
