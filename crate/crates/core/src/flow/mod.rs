//! Level-set curvature flow of regions under a conformal metric, with
//! narrow-band stepping, reinitialization and exponential offset tubes.

mod stencil;

use rayon::prelude::*;

use crate::distance::sweep::{edge_slowness, sweep, Spans};
use crate::distance::{eikonal_distance, foot_distance, interface_seed, reinit_full, RegionSet, SeedRule};
use crate::error::{Error, Result};
use crate::grid::{gradient_at, Grid, MetricSpec, ScalarField};

use stencil::Stencil;

pub const DEFAULT_CFL: f64 = 0.4;
pub const DEFAULT_EPS: f64 = 1e-8;
/// Interfaces may not come closer than this many nodes to the box edge unless
/// they started there.
pub const BOUNDARY_LAYERS: usize = 10;
const KEEP_LAYERS: f64 = 7.0;
const PARALLEL_BAND: usize = 50_000;
const KEEP_SLOPE_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Fixed timestep; `None` picks the largest stable one.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub cfl: f64,
    pub reinit_every: usize,
    pub eps_reg: f64,
}

impl FlowParams {
    pub fn new(t_end: f64) -> Self {
        Self {
            dt: None,
            t_end,
            cfl: DEFAULT_CFL,
            reinit_every: 5,
            eps_reg: DEFAULT_EPS,
        }
    }

    /// Timestep actually used as the upper bound for steps.
    pub fn step_bound(&self, metric: &MetricSpec) -> Result<f64> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end = {}", self.t_end)));
        }
        if !(self.cfl > 0.0) || self.reinit_every == 0 || !(self.eps_reg > 0.0) {
            return Err(Error::InvalidParameter(
                "cfl and eps_reg must be positive, reinit_every at least 1".into(),
            ));
        }
        let bound = stable_dt(metric, self.cfl);
        match self.dt {
            None => Ok(bound),
            Some(dt) if dt > 0.0 && dt <= bound => Ok(dt),
            Some(dt) => Err(Error::CflViolated { dt, bound }),
        }
    }
}

/// `cfl h^2 / (4 max e^{-2 phi})`.
pub fn stable_dt(metric: &MetricSpec, cfl: f64) -> f64 {
    let h = metric.grid().h;
    cfl * h * h / (4.0 * metric.max_inv_scale_sq())
}

fn check_cfl(metric: &MetricSpec, dt: f64) -> Result<()> {
    let bound = stable_dt(metric, DEFAULT_CFL);
    if dt > 0.0 && dt <= bound {
        Ok(())
    } else {
        Err(Error::CflViolated { dt, bound })
    }
}

fn apply_step(st: &Stencil, u: &[f64], next: &mut [f64], dt: f64) {
    let g = st.grid;
    next.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
        let base = j * g.nx;
        if j == 0 || j + 1 == g.ny {
            row.copy_from_slice(&u[base..base + g.nx]);
            return;
        }
        row[0] = u[base];
        row[g.nx - 1] = u[base + g.nx - 1];
        st.advance(u, j, 1, g.nx - 1, dt, row);
    });
}

/// One explicit Euler step on the whole grid. Box-boundary nodes are held.
pub fn mcf_step(region: &RegionSet, metric: &MetricSpec, dt: f64) -> Result<RegionSet> {
    check_cfl(metric, dt)?;
    let st = Stencil::new(metric, DEFAULT_EPS);
    let mut next = vec![0.0; region.grid().len()];
    apply_step(&st, &region.u.values, &mut next, dt);
    Ok(RegionSet::new(ScalarField::new(*region.grid(), next)))
}

/// `n` explicit steps without reinitialization, either on the whole grid or
/// restricted to a narrow band of `band` layers.
pub fn mcf_steps(region: &RegionSet, metric: &MetricSpec, dt: f64, n: usize, band: Option<usize>) -> Result<RegionSet> {
    check_cfl(metric, dt)?;
    match band {
        None => {
            let st = Stencil::new(metric, DEFAULT_EPS);
            let mut u = region.u.values.clone();
            let mut next = u.clone();
            for _ in 0..n {
                apply_step(&st, &u, &mut next, dt);
                std::mem::swap(&mut u, &mut next);
            }
            Ok(RegionSet::new(ScalarField::new(*region.grid(), u)))
        }
        Some(layers) => {
            let mut flow = LevelSetFlow::with_layers(region, metric, DEFAULT_EPS, layers)?;
            for _ in 0..n {
                flow.step(dt);
            }
            Ok(flow.region())
        }
    }
}

/// Largest movement of the zero level along grid edges between two fields on
/// the same grid, over edges crossed in `a`. Infinite if a crossing vanished.
pub fn max_crossing_shift(a: &RegionSet, b: &RegionSet) -> f64 {
    let h = a.grid().h;
    let vb = &b.u.values;
    a.crossings()
        .iter()
        .map(|c| {
            if (vb[c.a] <= 0.0) == (vb[c.b] <= 0.0) {
                return f64::INFINITY;
            }
            let t = vb[c.a] / (vb[c.a] - vb[c.b]);
            (t - c.t).abs() * h
        })
        .fold(0.0, f64::max)
}

/// Signed metric distance from the current zero level; signs are kept.
pub fn reinitialize(region: &RegionSet, metric: &MetricSpec) -> Result<RegionSet> {
    let out = reinit_full(region, metric, SeedRule::PreserveNearUnit)?;
    debug_assert!(max_crossing_shift(region, &out) <= 0.5 * region.grid().h);
    Ok(out)
}

/// Narrow-band level-set evolution. Nodes further than `layers` metric cells
/// from the zero level are clamped to `+-layers h e^{phi}` and never stepped.
pub struct LevelSetFlow<'m> {
    metric: &'m MetricSpec,
    st: Stencil,
    u: Vec<f64>,
    next: Vec<f64>,
    clamp: Vec<f64>,
    // stepped nodes grouped by row, box boundary excluded
    rows: Vec<Vec<(usize, usize)>>,
    band_nodes: usize,
    fh: Vec<f64>,
    dist: Vec<f64>,
    fixed: Vec<bool>,
       // unclamped nodes, frame included
    band: Spans,
    anchored: Vec<bool>,
    time: f64,
}

impl<'m> LevelSetFlow<'m> {
    /// Band width that survives `reinit_every` steps between rebuilds: the
    /// clamp can influence at most one more node per step, and must stay
    /// clear of the kept layers around the zero level.
    pub fn layers_for(reinit_every: usize) -> usize {
        9.max(reinit_every + 4)
    }

    pub fn new(region: &RegionSet, metric: &'m MetricSpec, params: &FlowParams) -> Result<Self> {
        Self::with_layers(region, metric, params.eps_reg, Self::layers_for(params.reinit_every))
    }

    pub fn with_layers(region: &RegionSet, metric: &'m MetricSpec, eps_reg: f64, layers: usize) -> Result<Self> {
        let grid = *metric.grid();
        if *region.grid() != grid {
            return Err(Error::InvalidGrid("region and metric grids differ".into()));
        }
        let clamp: Vec<f64> = metric.scales().iter().map(|s| layers as f64 * grid.h * s).collect();
        let mut u = region.u.values.clone();
        for (v, c) in u.iter_mut().zip(&clamp) {
            if v.abs() >= *c {
                *v = if *v <= 0.0 { -c } else { *c };
            }
        }
        // interfaces already touching the frame are allowed to stay there
        let mut anchored = vec![false; grid.len()];
        for idx in region.interface_nodes() {
            let (i, j) = grid.ij(idx);
            if grid.layers_to_boundary(i, j) < BOUNDARY_LAYERS {
                for jj in j.saturating_sub(2)..(j + 3).min(grid.ny) {
                    for ii in i.saturating_sub(2)..(i + 3).min(grid.nx) {
                        anchored[grid.idx(ii, jj)] = true;
                    }
                }
            }
        }
        let mut flow = Self {
            metric,
            st: Stencil::new(metric, eps_reg),
            next: u.clone(),
            u,
            clamp,
            rows: vec![Vec::new(); grid.ny],
            band_nodes: 0,
            fh: edge_slowness(metric),
            dist: vec![f64::INFINITY; grid.len()],
            fixed: vec![false; grid.len()],
            band: Spans::default(),
            anchored,
            time: 0.0,
        };
        flow.band = Spans::from_predicate(&grid, |k| flow.u[k].abs() < flow.clamp[k]);
        flow.rebuild_rows();
        Ok(flow)
    }

    pub fn grid(&self) -> &Grid {
        &self.st.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn region(&self) -> RegionSet {
        RegionSet::new(ScalarField::new(*self.grid(), self.u.clone()))
    }

    pub fn band_size(&self) -> usize {
        self.band_nodes
    }

    fn rebuild_rows(&mut self) {
        let g = *self.grid();
        for r in &mut self.rows {
            r.clear();
        }
        for &(j, a, b) in self.band.rows() {
            let (a, b) = (a.max(1), b.min(g.nx - 1));
            if j > 0 && j + 1 < g.ny && a < b {
                self.rows[j].push((a, b));
            }
        }
        self.band_nodes = self.rows.iter().flatten().map(|(a, b)| b - a).sum();
    }

    /// One explicit step of the band; callers keep `dt` within the bound.
    pub fn step(&mut self, dt: f64) {
        let g = *self.grid();
        let st = &self.st;
        let u = &self.u;
        let rows = &self.rows;
        let advance = |(j, row): (usize, &mut [f64])| {
            for &(a, b) in &rows[j] {
                st.advance(u, j, a, b, dt, row);
            }
        };
        // a narrow band is too little work to share out
        if rayon::current_num_threads() > 1 && self.band_nodes > PARALLEL_BAND {
            self.next.par_chunks_mut(g.nx).enumerate().for_each(advance);
        } else {
            self.next.chunks_mut(g.nx).enumerate().for_each(advance);
        }
        // only band nodes differ between the buffers
        std::mem::swap(&mut self.u, &mut self.next);
        for (j, r) in self.rows.iter().enumerate() {
            for &(a, b) in r {
                let s = j * g.nx;
                self.next[s + a..s + b].copy_from_slice(&self.u[s + a..s + b]);
            }
        }
        self.time += dt;
    }

    /// Rebuilds the band as a signed distance from the current zero level.
    /// `EmptyRegion` means the zero level has vanished.
    pub fn reinit(&mut self) -> Result<()> {
        let g = *self.grid();
        // the zero level moves far less than two nodes between rebuilds
        let scan = self.band.dilate(&g, 2);

        let mut seeds = Vec::new();
        let mut near_frame: Option<usize> = None;
        for &(j, a, b) in scan.rows() {
            for i in a..b {
                let k = j * g.nx + i;
                let inside = self.u[k] <= 0.0;
                let crosses = g.neighbors4(k).into_iter().flatten().any(|q| (self.u[q] <= 0.0) != inside);
                if crosses {
                    let layers = g.layers_to_boundary(i, j);
                    if layers < BOUNDARY_LAYERS && !self.anchored[k] {
                        near_frame = Some(near_frame.map_or(layers, |l| l.min(layers)));
                    }
                    seeds.push((k, interface_seed(&g, &self.u, self.metric, k, SeedRule::PreserveNearUnit)));
                }
            }
        }
        if let Some(layers) = near_frame {
            return Err(Error::InterfaceNearBoundary { time: self.time, layers });
        }
        if seeds.is_empty() {
            return Err(Error::EmptyRegion);
        }
        for &(k, s) in &seeds {
            self.dist[k] = s;
            self.fixed[k] = true;
        }
        // Nodes next to the zero level get their distance to the zero level of
        // the bicubic interpolant of u. The first-order sweep alone leaves
        // O(h^2) value errors one cell out, hence an O(1) curvature error and
        // a drift that never converges. With only three or four such layers the
        // swept values beyond them still reach the zero level between rebuilds
        // and leave a bias that does not shrink with h. Where the foot point
        // cannot be found the evolved value is kept if its slope is plausible.
        let h = g.h;
        let (lo, hi) = KEEP_SLOPE_RANGE;
        scan.for_each(&g, |k| {
            let s = self.metric.scale(k);
            if self.u[k].abs() < KEEP_LAYERS * h * s {
                if let Some(d) = foot_distance(&g, &self.u, self.metric, k, (KEEP_LAYERS + 1.0) * h) {
                    self.dist[k] = d;
                    self.fixed[k] = true;
                } else {
                    let [gx, gy] = gradient_at(&g, &self.u, k);
                    if (lo..=hi).contains(&(gx.hypot(gy) / s)) {
                        self.dist[k] = self.u[k].abs();
                        self.fixed[k] = true;
                    }
                }
            }
        });
        sweep(&g, &mut self.dist, &self.fixed, &self.fh, &scan);
        scan.for_each(&g, |k| {
            let d = self.dist[k].min(self.clamp[k]);
            self.u[k] = if self.u[k] <= 0.0 { -d } else { d };
            self.next[k] = self.u[k];
            self.dist[k] = f64::INFINITY;
            self.fixed[k] = false;
        });
        self.band = scan.filter(&g, |k| self.u[k].abs() < self.clamp[k]);
        self.rebuild_rows();
        Ok(())
    }
}



/// Recorded evolution of one region.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<RegionSet>,
    pub metric: MetricSpec,
    /// Largest step used.
    pub dt: f64,
    /// Time at which the zero level vanished, if it did.
    pub extinction: Option<f64>,
    pub steps: usize,
}

impl Trajectory {
    /// A region that does not move.
    pub fn stationary(region: &RegionSet, metric: &MetricSpec, times: &[f64]) -> Result<Self> {
        check_times(times, f64::INFINITY)?;
        let state = reinitialize(region, metric)?;
        Ok(Self {
            times: times.to_vec(),
            states: vec![state; times.len()],
            metric: metric.clone(),
            dt: 0.0,
            extinction: None,
            steps: 0,
        })
    }

    /// State recorded at time `t`, if any.
    pub fn state_at(&self, t: f64) -> Option<&RegionSet> {
        let k = self.times.iter().position(|&s| (s - t).abs() <= 1e-12)?;
        self.states.get(k)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_times(times: &[f64], t_end: f64) -> Result<()> {
    if times.first() != Some(&0.0) {
        return Err(Error::InvalidParameter("record times must start at 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("record times must be strictly increasing".into()));
    }
    if times.iter().any(|&t| !(t <= t_end)) {
        return Err(Error::InvalidParameter(format!("record times must lie in [0, {t_end}]")));
    }
    Ok(())
}

/// Evolves `initial` up to `params.t_end`, recording reinitialized states at
/// `record_times` (0 is added when missing). Stops at extinction.
pub fn evolve(initial: &RegionSet, metric: &MetricSpec, params: &FlowParams, record_times: &[f64]) -> Result<Trajectory> {
    let dt_max = params.step_bound(metric)?;
    let mut times: Vec<f64> = record_times.to_vec();
    if times.first() != Some(&0.0) {
        times.insert(0, 0.0);
    }
    check_times(&times, params.t_end)?;

    let start = reinitialize(initial, metric)?;
    let mut flow = LevelSetFlow::new(&start, metric, params)?;
    let mut out = Trajectory {
        times: vec![0.0],
        states: vec![start],
        metric: metric.clone(),
        dt: 0.0,
        extinction: None,
        steps: 0,
    };
    let mut targets = times[1..].to_vec();
    if targets.last().map_or(true, |&t| t < params.t_end) && params.t_end > 0.0 {
        targets.push(params.t_end);
    }
    let mut t = 0.0;
    'outer: for &target in &targets {
        let n = ((target - t) / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = (target - t) / n as f64;
        out.dt = out.dt.max(dt);
        for s in 0..n {
            flow.step(dt);
            out.steps += 1;
            if out.steps % params.reinit_every == 0 || s + 1 == n {
                match flow.reinit() {
                    Ok(()) => {}
                    Err(Error::EmptyRegion) => {
                        out.extinction = Some(t + (s + 1) as f64 * dt);
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        t = target;
        if times.iter().any(|&r| r == target) {
            match reinitialize(&flow.region(), metric) {
                Ok(state) => {
                    out.times.push(target);
                    out.states.push(state);
                }
                Err(Error::EmptyRegion) => {
                    out.extinction = Some(target);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// The tube `{p : d(p, X(t)) <= c e^{lambda t}}` at every recorded time of
/// `base`, each from a fresh distance solve.
pub fn offset_flow(base: &Trajectory, c: f64, lambda: f64, metric: &MetricSpec) -> Result<Trajectory> {
    if !(lambda < metric.lambda_lower) {
        return Err(Error::LambdaNotBelowRicciBound {
            lambda,
            bound: metric.lambda_lower,
        });
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("offset c = {c}")));
    }
    let mut out = base.clone();
    if c == 0.0 {
        return Ok(out);
    }
    for (t, state) in base.times.iter().zip(out.states.iter_mut()) {
        let rho = c * (lambda * t).exp();
        let d = eikonal_distance(state, metric)?;
        let level = RegionSet::new(ScalarField::new(
            *d.grid(),
            d.d.values.iter().map(|v| v - rho).collect(),
        ));
        *state = reinitialize(&level, metric)?;
    }
    Ok(out)
}
