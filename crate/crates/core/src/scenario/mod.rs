//! Scenario files, the build-evolve-verify pipeline and its artifacts.

mod config;

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

pub use config::{
    load_config, Expression, FlowConfig, GridConfig, InterpConfig, MetricConfig, OffsetConfig, OutputConfig,
    ReportConfig, ScenarioConfig, ScenarioMeta, Setup, Shape, ShapesConfig, HYPOTHESIS_UNMET_TAG,
};

use crate::avoidance::{avoidance_report, AvoidanceReport, Verdict};
use crate::distance::{eikonal_distance, offset_region, set_distance};
use crate::error::{Error, Result};
use crate::flow::{evolve, offset_flow, Trajectory};
use crate::grid::{MetricKind, MetricSpec};
use crate::interpolation::{extract_midsurface, harmonic_interpolant, select_regular_value};
use crate::oracle::{euclid_circle_radius, hyperbolic_circle_radius};
use crate::svg::render_svg;

pub const CSV_HEADER: &str = "t,d_XY,d_XM,d_MY,weighted_XY,status";

/// Relative tolerance of the closed-form distance cross-check.
pub const ORACLE_REL_TOL: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Violation,
    HypothesisUnmet,
    /// One of the flows has vanished; distances are `inf`.
    Extinct,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Violation => "violation",
            RowStatus::HypothesisUnmet => "hypothesis_unmet",
            RowStatus::Extinct => "extinct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub t: f64,
    pub d_xy: f64,
    pub d_xm: Option<f64>,
    pub d_my: Option<f64>,
    pub weighted_xy: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Closed-form `D(t)` next to the measured one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub times: Vec<f64>,
    pub expected: Vec<f64>,
    pub measured: Vec<f64>,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub spacing: f64,
    pub dt: f64,
    pub initial_distance: f64,
    pub report: AvoidanceReport,
    pub rows: Vec<CsvRow>,
    pub oracle: Option<OracleComparison>,
    /// Smallest `d_XY - d_XM - d_MY` over recorded times, with a midsurface.
    pub triangle_slack: Option<f64>,
    /// Midsurface level, when one was built.
    pub midsurface_level: Option<f64>,
    pub checks: Vec<Check>,
}

impl ScenarioOutcome {
    /// All enabled checks passed.
    pub fn success(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn csv(&self) -> String {
        format_csv(&self.rows)
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        format!(
            "{}: {} (verdict {}, D(0) = {:.6}, worst violation {:.3e}, tolerance {:.3e}){}",
            self.name,
            if self.success() { "ok" } else { "FAILED" },
            self.report.verdict.as_str(),
            self.initial_distance,
            self.report.worst_violation,
            self.report.tolerance,
            if failed.is_empty() { String::new() } else { format!(" failed: {}", failed.join(", ")) }
        )
    }
}

/// Nine significant digits; `inf` and `nan` literally.
pub fn fmt9(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.8e}")
    }
}

pub fn format_csv(rows: &[CsvRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt9(r.t),
            fmt9(r.d_xy),
            fmt9(r.d_xm.unwrap_or(f64::NAN)),
            fmt9(r.d_my.unwrap_or(f64::NAN)),
            fmt9(r.weighted_xy),
            r.status.as_str()
        );
    }
    s
}

fn single_shape(entries: &[String]) -> Option<Shape> {
    match entries {
        [one] => Shape::parse("", one).ok(),
        _ => None,
    }
}

enum Radius {
    Euclid,
    Hyperbolic { max_step: f64 },
}

impl Radius {
    /// Intrinsic radius of a circle about the chart origin.
    fn intrinsic(&self, r: f64) -> f64 {
        match self {
            Radius::Euclid => r,
            Radius::Hyperbolic { .. } => 2.0 * r.atanh(),
        }
    }

    fn at(&self, r0: f64, t: f64) -> Option<f64> {
        match self {
            Radius::Euclid => euclid_circle_radius(r0, t),
            Radius::Hyperbolic { max_step } => hyperbolic_circle_radius(r0, t, *max_step),
        }
    }
}

/// `D(t)` in closed form for the configurations that have one: two disks,
/// a disk inside a round hole, and a disk beside a half-plane.
fn oracle_distance(config: &ScenarioConfig, metric: &MetricSpec, dt: f64) -> Option<impl Fn(f64) -> Option<f64>> {
    if config.offset.is_some() {
        return None;
    }
    let x = single_shape(&config.shapes.x)?;
    let y = single_shape(&config.shapes.y)?;
    let law = match metric.kind {
        MetricKind::Euclidean => Radius::Euclid,
        MetricKind::PoincareDisk => Radius::Hyperbolic {
            max_step: (dt / 10.0).max(1e-6),
        },
        MetricKind::CustomConformal => return None,
    };
    let euclid = metric.kind == MetricKind::Euclidean;
    enum Case {
        Apart { gap: f64, r1: f64, r2: f64 },
        Nested { inner: f64, outer: f64 },
        Line { gap: f64, r: f64 },
    }
    let case = match (&x, &y) {
        (Shape::Circle { center: a, r: r1 }, Shape::Circle { center: b, r: r2 }) if euclid => {
            let gap = (a[0] - b[0]).hypot(a[1] - b[1]);
            (gap > r1 + r2).then_some(Case::Apart { gap, r1: *r1, r2: *r2 })?
        }
        (Shape::Circle { center: a, r: r1 }, Shape::Not(o)) | (Shape::Not(o), Shape::Circle { center: a, r: r1 }) => {
            let Shape::Circle { center: b, r: r2 } = **o else { return None };
            let centred = if euclid { *a == b } else { *a == [0.0, 0.0] && b == [0.0, 0.0] };
            (centred && *r1 < r2).then_some(Case::Nested {
                inner: law.intrinsic(*r1),
                outer: law.intrinsic(r2),
            })?
        }
        (Shape::Circle { center, r }, Shape::HalfPlane { a, b, c }) | (Shape::HalfPlane { a, b, c }, Shape::Circle { center, r })
            if euclid =>
        {
            let gap = (a * center[0] + b * center[1] - c) / a.hypot(*b);
            (gap > *r).then_some(Case::Line { gap, r: *r })?
        }
        _ => return None,
    };
    Some(move |t: f64| match case {
        Case::Apart { gap, r1, r2 } => Some(gap - law.at(r1, t)? - law.at(r2, t)?),
        Case::Nested { inner, outer } => Some(law.at(outer, t)? - law.at(inner, t)?),
        Case::Line { gap, r } => Some(gap - law.at(r, t)?),
    })
}

fn with_context<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Scenario {
        scenario: name.to_string(),
        source: Box::new(e),
    })
}

/// Runs the whole pipeline. With `out_dir`, writes the CSV, SVG snapshots
/// and `report.json` there.
pub fn run_scenario(config: &ScenarioConfig, out_dir: Option<&Path>) -> Result<ScenarioOutcome> {
    let name = config.scenario.name.clone();
    let outcome = with_context(&name, run_inner(config))?;
    if let Some(dir) = out_dir {
        with_context(&name, write_artifacts(config, &outcome.0, &outcome.1, dir))?;
    }
    Ok(outcome.0)
}

struct Flows {
    x: Trajectory,
    y: Trajectory,
    m: Option<Trajectory>,
}

fn run_inner(config: &ScenarioConfig) -> Result<(ScenarioOutcome, Flows)> {
    let setup = config.setup()?;
    let Setup {
        grid,
        metric,
        x,
        y,
        params,
        records,
        initial_distance,
    } = &setup;
    let h = grid.h;
    let mut checks = Vec::new();

    let midsurface = if config.interp.enable {
        let dx = eikonal_distance(x, metric)?;
        let dy = eikonal_distance(y, metric)?;
        let rho = 0.5 * initial_distance - config.interp.k * h;
        let k = offset_region(&dx, &dy, rho)?;
        let hf = harmonic_interpolant(&k, metric)?;
        let c = select_regular_value(&hf)?;
        Some(extract_midsurface(&hf, c, metric)?)
    } else {
        None
    };

    let ((xt, yt), mt) = rayon::join(
        || {
            rayon::join(
                || evolve(x, metric, params, records),
                || evolve(y, metric, params, records),
            )
        },
        || midsurface.as_ref().map(|ms| evolve(&ms.sigma, metric, params, records)),
    );
    let (base_x, yt) = (xt?, yt?);
    let mt = mt.transpose()?;
    let xt = match &config.offset {
        Some(o) => offset_flow(&base_x, o.c, o.lambda, metric)?,
        None => base_x.clone(),
    };

    let report = avoidance_report(&xt, &yt, metric, config.report.tolerance)?;
    let dt = xt.dt.max(yt.dt);
    let n = report.times.len();
    let unmet = report.verdict == Verdict::HypothesisUnmet;
    let expect_unmet = config.expects_unmet_hypothesis();
    checks.push(Check::new(
        "avoidance",
        if expect_unmet { unmet } else { report.verdict == Verdict::Pass },
        format!(
            "verdict {}, worst violation {:e} against tolerance {:e}",
            report.verdict.as_str(),
            report.worst_violation,
            report.tolerance
        ),
    ));

    // the midsurface splits the distance: d_XY >= d_XM + d_MY - 4h
    let mut split = Vec::new();
    let mut triangle_slack = None;
    if let Some(mt) = &mt {
        let m = n.min(mt.times.len());
        for k in 0..m {
            let d_xm = set_distance(&xt.states[k], &mt.states[k].complement(), metric)?;
            let d_my = set_distance(&mt.states[k], &yt.states[k], metric)?;
            split.push((d_xm, d_my));
        }
        let slack = split
            .iter()
            .zip(&report.distances)
            .map(|((a, b), d)| d - a - b)
            .fold(f64::INFINITY, f64::min);
        triangle_slack = Some(slack);
        checks.push(Check::new(
            "triangle_split",
            slack >= -4.0 * h,
            format!("min d_XY - d_XM - d_MY = {slack:e}, allowed -4h = {:e}", -4.0 * h),
        ));
    }

    if let Some(o) = &config.offset {
        // outside the tube the distance drops by exactly its half-width
        let tol = report.tolerance;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            if report.distances[k] > 0.0 {
                let d_base = set_distance(&base_x.states[k], &yt.states[k], metric)?;
                let w = o.c * (o.lambda * report.times[k]).exp();
                worst = worst.max((d_base - report.distances[k] - w).abs());
            }
        }
        checks.push(Check::new(
            "offset_split",
            worst <= tol,
            format!("max |d(X,Y) - d(tube,Y) - c e^(lambda t)| = {worst:e}, tolerance {tol:e}"),
        ));
    }

    let oracle = match oracle_distance(config, metric, dt) {
        Some(f) => {
            let mut cmp = OracleComparison {
                times: Vec::new(),
                expected: Vec::new(),
                measured: Vec::new(),
                max_rel_error: 0.0,
            };
            for k in 0..n {
                let t = report.times[k];
                if let Some(want) = f(t) {
                    let got = report.distances[k];
                    cmp.times.push(t);
                    cmp.expected.push(want);
                    cmp.measured.push(got);
                    cmp.max_rel_error = cmp.max_rel_error.max((got - want).abs() / want);
                }
            }
            checks.push(Check::new(
                "oracle",
                cmp.max_rel_error <= ORACLE_REL_TOL,
                format!("max relative D(t) error {:e}", cmp.max_rel_error),
            ));
            Some(cmp)
        }
        None => None,
    };

    let rows = records
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            if k >= n {
                return CsvRow {
                    t,
                    d_xy: f64::INFINITY,
                    d_xm: mt.as_ref().map(|_| f64::INFINITY),
                    d_my: mt.as_ref().map(|_| f64::INFINITY),
                    weighted_xy: f64::INFINITY,
                    status: RowStatus::Extinct,
                };
            }
            let drop = if k > 0 { report.weighted[k - 1] - report.weighted[k] } else { 0.0 };
            let status = if unmet {
                RowStatus::HypothesisUnmet
            } else if drop > report.tolerance {
                RowStatus::Violation
            } else {
                RowStatus::Ok
            };
            let pair = split.get(k).copied();
            CsvRow {
                t,
                d_xy: report.distances[k],
                d_xm: mt.as_ref().map(|_| pair.map_or(f64::INFINITY, |p| p.0)),
                d_my: mt.as_ref().map(|_| pair.map_or(f64::INFINITY, |p| p.1)),
                weighted_xy: report.weighted[k],
                status,
            }
        })
        .collect();

    let outcome = ScenarioOutcome {
        name: config.scenario.name.clone(),
        spacing: h,
        dt,
        initial_distance: report.distances[0],
        report,
        rows,
        oracle,
        triangle_slack,
        midsurface_level: midsurface.as_ref().map(|m| m.c),
        checks,
    };
    Ok((outcome, Flows { x: xt, y: yt, m: mt }))
}

#[derive(Serialize)]
struct ReportFile<'a> {
    success: bool,
    #[serde(flatten)]
    outcome: &'a ScenarioOutcome,
}

fn write_artifacts(config: &ScenarioConfig, outcome: &ScenarioOutcome, flows: &Flows, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(&config.output.csv);
    std::fs::write(&csv, outcome.csv()).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("report.json");
    let body = serde_json::to_string_pretty(&ReportFile {
        success: outcome.success(),
        outcome,
    })
    .expect("report serializes");
    std::fs::write(&json, body).map_err(|e| Error::io(&json, e))?;
    let every = config.output.svg_every;
    if every > 0 {
        let grid = flows.x.states[0].grid();
        for (k, t) in config.flow.records.iter().enumerate().step_by(every) {
            let path = dir.join(format!("snapshot_{k:03}.svg"));
            let m = flows.m.as_ref().and_then(|m| m.state_at(*t));
            render_svg(grid, [flows.x.state_at(*t), flows.y.state_at(*t), m], &path)?;
        }
    }
    Ok(())
}

/// Loads a scenario file.
pub fn read_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_config(&text)
}
