use crate::grid::{gradient_at, Grid, MetricSpec};

/// Pointwise rate of the level-set curvature flow under `e^{2phi}` times the
/// flat metric. Only interior nodes may be evaluated.
pub(crate) struct Stencil {
    pub grid: Grid,
    // e^{-2 phi}, absent for the flat metric
    coef: Option<Vec<f64>>,
    dphi: Option<Vec<[f64; 2]>>,
    eps2: f64,
    inv_h: f64,
    inv_h2: f64,
}

impl Stencil {
    pub fn new(metric: &MetricSpec, eps_reg: f64) -> Self {
        let grid = *metric.grid();
        let (coef, dphi) = if metric.is_euclidean() {
            (None, None)
        } else {
            let phi = &metric.phi.values;
            (
                Some(phi.iter().map(|p| (-2.0 * p).exp()).collect()),
                Some((0..grid.len()).map(|k| gradient_at(&grid, phi, k)).collect()),
            )
        };
        Self {
            grid,
            coef,
            dphi,
            eps2: eps_reg * eps_reg,
            inv_h: 1.0 / grid.h,
            inv_h2: 1.0 / (grid.h * grid.h),
        }
    }

    /// Writes `u + dt * rate` into `out[a..b]` for row `j`, an interior row,
    /// with `1 <= a` and `b < nx`.
    pub fn advance(&self, u: &[f64], j: usize, a: usize, b: usize, dt: f64, out: &mut [f64]) {
        let nx = self.grid.nx;
        let base = j * nx;
        let s = &u[base - nx..base];
        let c = &u[base..base + nx];
        let n = &u[base + nx..base + 2 * nx];
        assert!(a >= 1 && b < nx && out.len() == nx);
        for i in a..b {
            out[i] = c[i] + dt * self.rate(s, c, n, i, base + i);
        }
    }

    #[inline(always)]
    fn rate(&self, s: &[f64], c: &[f64], n: &[f64], i: usize, k: usize) -> f64 {
        let (w, o, e) = (c[i - 1], c[i], c[i + 1]);
        let (sc, nc) = (s[i], n[i]);
        let ux = (e - w) * 0.5 * self.inv_h;
        let uy = (nc - sc) * 0.5 * self.inv_h;
        let uxx = (e - 2.0 * o + w) * self.inv_h2;
        let uyy = (nc - 2.0 * o + sc) * self.inv_h2;
        // grouped so that mirroring either axis flips the sign exactly
        let uxy = ((n[i + 1] - n[i - 1]) - (s[i + 1] - s[i - 1])) * 0.25 * self.inv_h2;
        let g2 = ux * ux + uy * uy;
        let ge2 = g2 + self.eps2;
        let num = uxx * (uy * uy + self.eps2) - 2.0 * ux * uy * uxy + uyy * (ux * ux + self.eps2);
        let grad = g2.sqrt();
        let ge = ge2.sqrt();
        let mut r = grad * num / (ge2 * ge);
        if let (Some(coef), Some(dphi)) = (&self.coef, &self.dphi) {
            // transport along grad(phi), upwinded
            let q = grad / ge;
            let ax = q * dphi[k][0];
            let ay = q * dphi[k][1];
            let dx = (if ax > 0.0 { e - o } else { o - w }) * self.inv_h;
            let dy = (if ay > 0.0 { nc - o } else { o - sc }) * self.inv_h;
            r += ax * dx + ay * dy;
            r *= coef[k];
        }
        r
    }
}
