//! Checks on recorded trajectories: weighted distance monotonicity, finite
//! approach speed, escape time and the pairwise approach rate.

use serde::Serialize;

use crate::distance::{distance_to_region, eikonal_distance, set_distance, RegionSet};
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::grid::MetricSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The sets start closer than the grid can resolve; nothing is claimed.
    HypothesisUnmet,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::HypothesisUnmet => "hypothesis_unmet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvoidanceReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// `e^{-lambda t} D(t)`.
    pub weighted: Vec<f64>,
    pub lambda: f64,
    pub tolerance: f64,
    /// Largest drop `weighted[k] - weighted[k+1]`, zero if none.
    pub worst_violation: f64,
    pub verdict: Verdict,
    /// `weighted[k] >= weighted[0] - tolerance` for every k.
    pub integrated: bool,
    /// Time of the first extinction when the series was cut there.
    pub truncated_at: Option<f64>,
    pub spacing: f64,
}

impl AvoidanceReport {
    fn build(times: Vec<f64>, distances: Vec<f64>, lambda: f64, tolerance: f64, spacing: f64, truncated_at: Option<f64>) -> Self {
        let weighted: Vec<f64> = times
            .iter()
            .zip(&distances)
            .map(|(t, d)| (-lambda * t).exp() * d)
            .collect();
        let worst_violation = weighted
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max);
        let integrated = weighted.iter().all(|&w| w >= weighted[0] - tolerance);
        let verdict = if distances[0] < 2.0 * spacing {
            Verdict::HypothesisUnmet
        } else if worst_violation <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            times,
            distances,
            weighted,
            lambda,
            tolerance,
            worst_violation,
            verdict,
            integrated,
            truncated_at,
            spacing,
        }
    }

    /// Same distances weighted by `e^{-lambda t}` for another `lambda`; the
    /// weaker weights `lambda <= Lambda` must pass whenever `Lambda` does.
    pub fn reweighted(&self, lambda: f64) -> Self {
        Self::build(
            self.times.clone(),
            self.distances.clone(),
            lambda,
            self.tolerance,
            self.spacing,
            self.truncated_at,
        )
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// Common recorded prefix of two trajectories.
fn shared_times(a: &Trajectory, b: &Trajectory) -> Result<(usize, Option<f64>)> {
    let n = a.times.len().min(b.times.len());
    if n == 0 || a.times[..n] != b.times[..n] {
        return Err(Error::TimeGridMismatch);
    }
    let cut = match (a.extinction, b.extinction) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    };
    Ok((n, cut))
}

/// Default tolerance `2h + dt`.
pub fn default_tolerance(metric: &MetricSpec, a: &Trajectory, b: &Trajectory) -> f64 {
    2.0 * metric.grid().h + a.dt.max(b.dt)
}

/// `D(t) = d(X(t), Y(t))` at every shared recorded time, weighted by
/// `e^{-Lambda t}` with `Lambda` the metric's curvature lower bound.
pub fn avoidance_report(x: &Trajectory, y: &Trajectory, metric: &MetricSpec, tolerance: Option<f64>) -> Result<AvoidanceReport> {
    let (n, cut) = shared_times(x, y)?;
    let tolerance = tolerance.unwrap_or_else(|| default_tolerance(metric, x, y));
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance}")));
    }
    let distances = (0..n)
        .map(|k| set_distance(&x.states[k], &y.states[k], metric))
        .collect::<Result<Vec<_>>>()?;
    Ok(AvoidanceReport::build(
        x.times[..n].to_vec(),
        distances,
        metric.lambda_lower,
        tolerance,
        metric.grid().h,
        cut,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Initial distance `R`.
    pub initial: f64,
    /// `max_{t>0} (R - d(t)) / t`, at least 0.
    pub fitted_speed: f64,
    pub user_speed: Option<f64>,
    /// Whether `d(t) >= R - h_user t - tolerance` at every sample.
    pub within_user_bound: Option<bool>,
    pub tolerance: f64,
}

/// Distance from each recorded state of `x` to a fixed reference set.
pub fn finite_speed_check(x: &Trajectory, reference: &RegionSet, metric: &MetricSpec, user_speed: Option<f64>) -> Result<SpeedReport> {
    let field = eikonal_distance(reference, metric)?;
    let distances = x
        .states
        .iter()
        .map(|s| distance_to_region(&field, s))
        .collect::<Result<Vec<_>>>()?;
    let initial = distances[0];
    if !(initial > 0.0) {
        return Err(Error::ZeroInitialDistance);
    }
    let fitted_speed = x
        .times
        .iter()
        .zip(&distances)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, d)| (initial - d) / t)
        .fold(0.0, f64::max);
    let tolerance = 2.0 * metric.grid().h;
    let within_user_bound = user_speed.map(|h| {
        x.times
            .iter()
            .zip(&distances)
            .all(|(t, d)| *d >= initial - h * t - tolerance)
    });
    Ok(SpeedReport {
        times: x.times.clone(),
        distances,
        initial,
        fitted_speed,
        user_speed,
        within_user_bound,
        tolerance,
    })
}

/// Largest recorded `delta` such that every state up to `delta` stays within
/// `epsilon` of the initial set.
pub fn escape_bound_check(traj: &Trajectory, epsilon: f64, metric: &MetricSpec) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let d0 = eikonal_distance(&traj.states[0], metric)?;
    let v = &d0.d.values;
    let mut delta = 0.0;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut reach: f64 = 0.0;
        for (k, &u) in s.u.values.iter().enumerate() {
            if u <= 0.0 {
                reach = reach.max(v[k]);
            }
        }
        for c in s.crossings() {
            reach = reach.max(v[c.a] + c.t * (v[c.b] - v[c.a]));
        }
        if reach > epsilon {
            break;
        }
        delta = *t;
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproachReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Smallest `h2 >= 0` with `D(t) >= D(0) - 2 h2 t` at every sample.
    pub rate: f64,
    pub finite: bool,
}

pub fn approach_rate_check(x: &Trajectory, y: &Trajectory, metric: &MetricSpec) -> Result<ApproachReport> {
    let (n, _) = shared_times(x, y)?;
    let distances = (0..n)
        .map(|k| set_distance(&x.states[k], &y.states[k], metric))
        .collect::<Result<Vec<_>>>()?;
    let d0 = distances[0];
    if !(d0 > 0.0) {
        return Err(Error::ZeroInitialDistance);
    }
    let times = x.times[..n].to_vec();
    let rate = times
        .iter()
        .zip(&distances)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, d)| (d0 - d) / (2.0 * t))
        .fold(0.0, f64::max);
    Ok(ApproachReport {
        times,
        distances,
        rate,
        finite: rate.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve, offset_flow, FlowParams};
    use crate::grid::{make_metric, Grid, MetricKind};

    fn flat(n: usize) -> (Grid, MetricSpec) {
        let g = Grid::square(n, -1.0, 1.0).unwrap();
        (g, make_metric(MetricKind::Euclidean, g, None).unwrap())
    }

    #[test]
    fn parallel_lines_pass_with_zero_violation() {
        let (g, m) = flat(64);
        let times = [0.0, 0.1, 0.2];
        let a = Trajectory::stationary(&RegionSet::half_plane(g, 0.0, 1.0, -0.3), &m, &times).unwrap();
        let b = Trajectory::stationary(&RegionSet::half_plane(g, 0.0, -1.0, -0.3), &m, &times).unwrap();
        let rep = avoidance_report(&a, &b, &m, None).unwrap();
        assert_eq!(rep.worst_violation, 0.0);
        assert_eq!(rep.verdict, Verdict::Pass);
        assert!(rep.integrated);
        assert!((rep.distances[0] - 0.6).abs() < 1e-9);
        let ap = approach_rate_check(&a, &b, &m).unwrap();
        assert_eq!(ap.rate, 0.0);
        let sp = finite_speed_check(&a, &b.states[0], &m, None).unwrap();
        assert_eq!(sp.fitted_speed, 0.0);
        assert_eq!(escape_bound_check(&a, 0.01, &m).unwrap(), 0.2);
    }

    #[test]
    fn mismatched_times_are_rejected() {
        let (g, m) = flat(32);
        let a = Trajectory::stationary(&RegionSet::half_plane(g, 0.0, 1.0, -0.3), &m, &[0.0, 0.1]).unwrap();
        let b = Trajectory::stationary(&RegionSet::half_plane(g, 0.0, -1.0, -0.3), &m, &[0.0, 0.2]).unwrap();
        assert!(matches!(avoidance_report(&a, &b, &m, None), Err(Error::TimeGridMismatch)));
    }

    #[test]
    fn weaker_weights_pass_when_the_bound_does() {
        let rep = AvoidanceReport::build(vec![0.0, 0.1, 0.2], vec![0.5, 0.49, 0.48], -1.0, 0.0, 0.01, None);
        assert_eq!(rep.verdict, Verdict::Pass);
        for l in [-1.5, -2.0] {
            assert_eq!(rep.reweighted(l).verdict, Verdict::Pass);
        }
        assert_eq!(rep.reweighted(0.0).verdict, Verdict::Fail);
        let unmet = AvoidanceReport::build(vec![0.0, 0.1], vec![0.01, 0.0], 0.0, 0.0, 0.01, None);
        assert_eq!(unmet.verdict, Verdict::HypothesisUnmet);
    }

    #[test]
    fn shrinking_circle_speed_and_escape() {
        // odd node count puts a node on the centre
        let (g, m) = flat(129);
        // the outside of the circle, so the centre stays at positive distance
        let outside = RegionSet::disk(g, [0.0, 0.0], 0.5).complement();
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.005).collect();
        let traj = evolve(&outside, &m, &FlowParams::new(0.05), &times).unwrap();
        let centre = RegionSet::from_fn(g, |x, y| x.hypot(y) - 0.25 * g.h);
        let sp = finite_speed_check(&traj, &centre, &m, Some(3.0)).unwrap();
        assert!((sp.initial - 0.5).abs() < 2.0 * g.h);
        assert!((sp.fitted_speed - 2.254).abs() < 0.15, "{}", sp.fitted_speed);
        assert_eq!(sp.within_user_bound, Some(true));
        // radius drops by 0.05 at t = (0.25 - 0.45^2) / 2 = 0.02375
        let delta = escape_bound_check(&traj, 0.05, &m).unwrap();
        assert!((delta - 0.02375).abs() <= 0.005 + 1e-12, "{delta}");
    }

    #[test]
    fn shrinking_tube_complement_escape_time() {
        let g = Grid::square(129, -1.0, 1.0).unwrap();
        let m = make_metric(MetricKind::Euclidean, g, None).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.02).collect();
        let base = Trajectory::stationary(&RegionSet::half_plane(g, 0.0, 1.0, 0.0), &m, &times).unwrap();
        let mut tube = offset_flow(&base, 0.5, -1.0, &m).unwrap();
        for s in &mut tube.states {
            *s = s.complement();
        }
        let delta = escape_bound_check(&tube, 0.1, &m).unwrap();
        assert!((delta - 1.25f64.ln()).abs() <= 0.02 + g.h, "{delta}");
    }

    #[test]
    fn separated_circles_do_not_approach() {
        let (g, m) = flat(128);
        let p = FlowParams::new(0.02);
        let times = [0.0, 0.01, 0.02];
        let a = evolve(&RegionSet::disk(g, [-0.45, 0.0], 0.3), &m, &p, &times).unwrap();
        let b = evolve(&RegionSet::disk(g, [0.45, 0.0], 0.3), &m, &p, &times).unwrap();
        let ap = approach_rate_check(&a, &b, &m).unwrap();
        assert!(ap.finite);
        assert!(ap.rate <= g.h, "{}", ap.rate);
        assert!(ap.distances[2] > ap.distances[0]);
    }
}
