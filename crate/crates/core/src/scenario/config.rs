use std::path::PathBuf;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use crate::distance::{set_distance, RegionSet};
use crate::error::{Error, Result};
use crate::flow::{FlowParams, DEFAULT_CFL, DEFAULT_EPS};
use crate::grid::{make_metric, Grid, MetricKind, MetricSpec};

/// Tag allowing X and Y to start closer than the grid resolves.
pub const HYPOTHESIS_UNMET_TAG: &str = "hypothesis_unmet_expected";

const DEFAULT_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioMeta,
    pub grid: GridConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    pub flow: FlowConfig,
    pub shapes: ShapesConfig,
    #[serde(default)]
    pub interp: InterpConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetConfig>,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub name: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes along x; y gets the count that keeps the spacing square.
    pub n: usize,
    /// `[xmin, xmax, ymin, ymax]`.
    pub bounds: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKind,
    /// Conformal exponent in `x` and `y`, only for `custom_conformal`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            kind: MetricKind::Euclidean,
            phi: None,
        }
    }
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

fn default_reinit() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_reinit")]
    pub reinit_every: usize,
    /// Recorded times; empty means eleven evenly spaced ones.
    #[serde(default)]
    pub records: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapesConfig {
    pub x: Vec<String>,
    pub y: Vec<String>,
}

fn default_k() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpConfig {
    #[serde(default)]
    pub enable: bool,
    /// The offset region uses `rho = R - k h`.
    #[serde(default = "default_k")]
    pub k: f64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self { enable: false, k: 3.0 }
    }
}

/// Replaces X by the tube `{d(., X(t)) <= c e^{lambda t}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetConfig {
    pub c: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Monotonicity tolerance; absent means `2h + dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn default_csv() -> PathBuf {
    PathBuf::from("results.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative to the scenario's output directory.
    #[serde(default = "default_csv")]
    pub csv: PathBuf,
    /// Snapshot every this many recorded times; 0 disables.
    #[serde(default)]
    pub svg_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: default_csv(),
            svg_every: 0,
        }
    }
}

/// One entry of `shapes.x` or `shapes.y`; several entries are united.
#[derive(Debug, Clone)]
pub enum Shape {
    Circle { center: [f64; 2], r: f64 },
    /// `a x + b y <= c`.
    HalfPlane { a: f64, b: f64, c: f64 },
    /// `|y| <= A / (1 + x^2)`.
    GraphBand { amplitude: f64 },
    /// `f(x, y) <= 0`.
    Expr(Expression),
    Not(Box<Shape>),
}

impl Shape {
    pub fn parse(key: &str, text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("not ") {
            return Ok(Shape::Not(Box::new(Shape::parse(key, rest)?)));
        }
        let (head, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        if head == "expr" {
            return Ok(Shape::Expr(Expression::compile(key, rest)?));
        }
        let nums = rest
            .split_whitespace()
            .map(|w| w.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::validation(key, format!("bad number in `{text}`")))?;
        let arity = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::validation(key, format!("`{head}` takes {n} numbers, got {}", nums.len())))
            }
        };
        match head {
            "circle" => {
                arity(3)?;
                if nums[2] <= 0.0 {
                    return Err(Error::validation(key, "circle radius must be positive"));
                }
                Ok(Shape::Circle {
                    center: [nums[0], nums[1]],
                    r: nums[2],
                })
            }
            "halfplane" => {
                arity(3)?;
                if nums[0] == 0.0 && nums[1] == 0.0 {
                    return Err(Error::validation(key, "half-plane normal is zero"));
                }
                Ok(Shape::HalfPlane {
                    a: nums[0],
                    b: nums[1],
                    c: nums[2],
                })
            }
            "graph_band" => {
                arity(1)?;
                Ok(Shape::GraphBand { amplitude: nums[0] })
            }
            other => Err(Error::validation(key, format!("unknown shape `{other}`"))),
        }
    }

    /// Level function, negative inside.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        match self {
            Shape::Circle { center, r } => (x - center[0]).hypot(y - center[1]) - r,
            Shape::HalfPlane { a, b, c } => (a * x + b * y - c) / a.hypot(*b),
            Shape::GraphBand { amplitude } => y.abs() - amplitude / (1.0 + x * x),
            Shape::Expr(e) => e.eval(x, y),
            Shape::Not(s) => -s.level(x, y),
        }
    }
}

/// Compiled expression in `x` and `y`, with the `math::` functions of evalexpr.
#[derive(Debug, Clone)]
pub struct Expression {
    text: String,
    tree: Node<DefaultNumericTypes>,
}

impl Expression {
    pub fn compile(key: &str, text: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(text)
            .map_err(|e| Error::validation(key, format!("expression `{text}`: {e}")))?;
        let e = Self {
            text: text.to_string(),
            tree,
        };
        e.try_eval(0.0, 0.0).map_err(|m| Error::validation(key, m))?;
        Ok(e)
    }

    fn try_eval(&self, x: f64, y: f64) -> std::result::Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("x".into(), Value::Float(x)).map_err(|e| e.to_string())?;
        ctx.set_value("y".into(), Value::Float(y)).map_err(|e| e.to_string())?;
        self.tree
            .eval_number_with_context(&ctx)
            .map_err(|e| format!("expression `{}`: {e}", self.text))
    }

    /// NaN when evaluation fails; callers check finiteness.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.try_eval(x, y).unwrap_or(f64::NAN)
    }
}

fn union_of(key: &str, entries: &[String], grid: Grid) -> Result<RegionSet> {
    if entries.is_empty() {
        return Err(Error::validation(key, "needs at least one shape"));
    }
    let shapes = entries
        .iter()
        .enumerate()
        .map(|(i, s)| Shape::parse(&format!("{key}[{i}]"), s))
        .collect::<Result<Vec<_>>>()?;
    let region = RegionSet::from_fn(grid, |x, y| shapes.iter().map(|s| s.level(x, y)).fold(f64::INFINITY, f64::min));
    if !region.u.is_finite() {
        return Err(Error::validation(key, "level function is not finite on the grid"));
    }
    if region.is_empty() {
        return Err(Error::validation(key, "set has no grid nodes"));
    }
    if region.is_everything() {
        return Err(Error::validation(key, "set covers the whole grid"));
    }
    Ok(region)
}

/// Everything a run needs that follows from the config alone.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub metric: MetricSpec,
    pub x: RegionSet,
    pub y: RegionSet,
    pub params: FlowParams,
    pub records: Vec<f64>,
    /// `d(X(0), Y(0))`.
    pub initial_distance: f64,
}

impl ScenarioConfig {
    pub fn expects_unmet_hypothesis(&self) -> bool {
        self.scenario.tags.iter().any(|t| t == HYPOTHESIS_UNMET_TAG)
    }

    pub fn grid(&self) -> Result<Grid> {
        let [x0, x1, y0, y1] = self.grid.bounds;
        if !self.grid.bounds.iter().all(|v| v.is_finite()) || x0 >= x1 || y0 >= y1 {
            return Err(Error::validation("grid.bounds", "need finite xmin < xmax and ymin < ymax"));
        }
        if self.grid.n < 16 {
            return Err(Error::validation("grid.n", "at least 16 nodes"));
        }
        let h = (x1 - x0) / (self.grid.n - 1) as f64;
        let ny = ((y1 - y0) / h).round() as usize + 1;
        Grid::new(self.grid.n, ny, [x0, x1], [y0, y1])
            .map_err(|e| Error::validation("grid.bounds", format!("{e}; the y extent must be a whole number of x cells")))
    }

    pub fn metric(&self, grid: Grid) -> Result<MetricSpec> {
        let phi = match (self.metric.kind, &self.metric.phi) {
            (MetricKind::CustomConformal, Some(text)) => Some(Expression::compile("metric.phi", text)?),
            (MetricKind::CustomConformal, None) => return Err(Error::validation("metric.phi", "required for custom_conformal")),
            (_, Some(_)) => return Err(Error::validation("metric.phi", "only used with custom_conformal")),
            (_, None) => None,
        };
        let f = phi.as_ref().map(|e| move |x: f64, y: f64| e.eval(x, y));
        let f_ref = f.as_ref().map(|f| f as &dyn Fn(f64, f64) -> f64);
        make_metric(self.metric.kind, grid, f_ref).map_err(|e| match e {
            Error::DomainOutsideChart { .. } => Error::validation("grid.bounds", e.to_string()),
            other => Error::validation("metric.phi", other.to_string()),
        })
    }

    pub fn flow_params(&self) -> Result<FlowParams> {
        let f = &self.flow;
        if !(f.t_end > 0.0 && f.t_end.is_finite()) {
            return Err(Error::validation("flow.t_end", "must be positive"));
        }
        if !(f.cfl > 0.0 && f.cfl <= 0.5) {
            return Err(Error::validation("flow.cfl", "must lie in (0, 0.5]"));
        }
        if f.dt.is_some_and(|dt| !(dt > 0.0 && dt.is_finite())) {
            return Err(Error::validation("flow.dt", "must be positive"));
        }
        if f.reinit_every == 0 {
            return Err(Error::validation("flow.reinit_every", "must be at least 1"));
        }
        Ok(FlowParams {
            dt: f.dt,
            t_end: f.t_end,
            cfl: f.cfl,
            reinit_every: f.reinit_every,
            eps_reg: DEFAULT_EPS,
        })
    }

    /// Fills defaults that depend on other keys.
    fn fill_defaults(&mut self) {
        if self.flow.records.is_empty() && self.flow.t_end > 0.0 {
            self.flow.records = (0..=DEFAULT_RECORDS)
                // the fraction first, so the last record is t_end exactly
                .map(|k| (k as f64 / DEFAULT_RECORDS as f64) * self.flow.t_end)
                .collect();
        }
    }

    /// Builds grid, metric and sets, checking every key on the way.
    pub fn setup(&self) -> Result<Setup> {
        let grid = self.grid()?;
        let metric = self.metric(grid)?;
        let params = self.flow_params()?;
        let records = self.flow.records.clone();
        let ordered = records.windows(2).all(|w| w[0] < w[1]);
        if records.is_empty() || records[0] != 0.0 || !ordered || records.last().is_some_and(|&t| t > params.t_end) {
            return Err(Error::validation(
                "flow.records",
                "must start at 0, increase strictly and end by flow.t_end",
            ));
        }
        if !(self.interp.k > 0.0 && self.interp.k.is_finite()) {
            return Err(Error::validation("interp.k", "must be positive"));
        }
        if let Some(o) = &self.offset {
            if !(o.c >= 0.0 && o.c.is_finite()) {
                return Err(Error::validation("offset.c", "must be nonnegative"));
            }
            if !(o.lambda < metric.lambda_lower) {
                return Err(Error::validation(
                    "offset.lambda",
                    format!("must be below the curvature bound {}", metric.lambda_lower),
                ));
            }
        }
        if self.report.tolerance.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::validation("report.tolerance", "must be nonnegative"));
        }
        let x = union_of("shapes.x", &self.shapes.x, grid)?;
        let y = union_of("shapes.y", &self.shapes.y, grid)?;
        let overlap = (0..grid.len()).any(|k| x.is_inside(k) && y.is_inside(k));
        let initial_distance = if overlap { 0.0 } else { set_distance(&x, &y, &metric)? };
        if !(initial_distance > 0.0) && !self.expects_unmet_hypothesis() {
            return Err(Error::validation(
                "shapes.y",
                format!("X and Y overlap; tag the scenario `{HYPOTHESIS_UNMET_TAG}` to allow it"),
            ));
        }
        Ok(Setup {
            grid,
            metric,
            x,
            y,
            params,
            records,
            initial_distance,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a scenario; unknown keys are parse errors.
pub fn load_config(text: &str) -> Result<ScenarioConfig> {
    let mut config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    config.fill_defaults();
    config.setup()?;
    Ok(config)
}
