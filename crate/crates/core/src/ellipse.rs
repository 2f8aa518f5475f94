//! Lissajous cloud construction and ellipse fitting.
//!
//! For two normalized frames `cos φ` and `cos(φ + δ)` the points
//! `(x, y) = (n1 + n2, n1 − n2)` lie on the axis-aligned ellipse
//! `θ1·x² + θ2·y² = 1` with `θ1 = 1/(2 cos(δ/2))²` and
//! `θ2 = 1/(2 sin(δ/2))²`. Only two coefficients are unknown once the
//! cloud is centered, and the least-squares problem reduces to a 2×2
//! system in the fourth-order moments of the cloud.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::field::compensated_sum;
use crate::{Error, Result, ScalarField};

/// Minimum number of points for any fit.
pub const MIN_POINTS: usize = 8;

/// Normal matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LissajousCloud {
    x: Vec<f64>,
    y: Vec<f64>,
    mean: [f64; 2],
}

impl LissajousCloud {
    /// Center arbitrary points on their mean.
    pub fn from_points(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Size(format!(
                "cloud coordinates differ in length: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < MIN_POINTS {
            return Err(Error::InsufficientData {
                needed: MIN_POINTS,
                got: x.len(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Invariant("cloud contains non-finite points".into()));
        }
        let (x, mx) = center(x);
        let (y, my) = center(y);
        Ok(Self {
            x,
            y,
            mean: [mx, my],
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Mean removed from the raw points, `[x̄, ȳ]`.
    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn center(mut v: Vec<f64>) -> (Vec<f64>, f64) {
    let mean = compensated_sum(v.iter().copied()) / v.len() as f64;
    v.iter_mut().for_each(|s| *s -= mean);
    (v, mean)
}

/// Sum/difference cloud over every `stride`-th pixel in each axis.
pub fn build_cloud(n1: &ScalarField, n2: &ScalarField, stride: usize) -> Result<LissajousCloud> {
    build_cloud_region(n1, n2, stride, 0)
}

/// Like [`build_cloud`], skipping `border` pixels on every side.
pub fn build_cloud_region(
    n1: &ScalarField,
    n2: &ScalarField,
    stride: usize,
    border: usize,
) -> Result<LissajousCloud> {
    n1.ensure_same_shape(n2)?;
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let (w, h) = (n1.width(), n1.height());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    if 2 * border < w && 2 * border < h {
        for r in (border..h - border).step_by(stride) {
            for c in (border..w - border).step_by(stride) {
                let (a, b) = (n1.get(r, c), n2.get(r, c));
                x.push(a + b);
                y.push(a - b);
            }
        }
    }
    LissajousCloud::from_points(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit2 {
    /// `[θ1, θ2]`.
    pub theta: [f64; 2],
    pub residual_rms: f64,
    /// Solves performed; 1 for plain least squares.
    pub iterations: usize,
    /// Max relative change of θ over the last IRLS update, if any.
    pub last_change: Option<f64>,
    /// Set when θ1 or θ2 is not positive; such a fit has no phase step.
    #[serde(rename = "degenerate_flag")]
    pub degenerate: bool,
}

impl EllipseFit2 {
    pub fn theta1(&self) -> f64 {
        self.theta[0]
    }

    pub fn theta2(&self) -> f64 {
        self.theta[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit5 {
    /// `[θ1, θ2, θ3, θ4, θ5]` with `θ5 = −1`.
    pub theta: [f64; 5],
    pub center: [f64; 2],
    /// Semi-axes along x and y; zero when the fit is degenerate.
    pub axes: [f64; 2],
    pub residual_rms: f64,
    pub iterations: usize,
    #[serde(rename = "degenerate_flag")]
    pub degenerate: bool,
}

/// 2×2 symmetric solve with a condition-number guard.
fn solve_sym2(a: f64, b: f64, c: f64, r0: f64, r1: f64) -> Option<[f64; 2]> {
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (hi, lo) = (mid + rad, mid - rad);
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return None;
    }
    let det = a * c - b * b;
    Some([(c * r0 - b * r1) / det, (a * r1 - b * r0) / det])
}

fn residual(theta: [f64; 2], x: f64, y: f64) -> f64 {
    theta[0] * x * x + theta[1] * y * y - 1.0
}

/// Weighted two-term solve; `weights = None` means unit weights.
fn solve_two_term(cloud: &LissajousCloud, weights: Option<&[f64]>) -> Option<[f64; 2]> {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let n = cloud.len();
    let (x, y) = (cloud.x(), cloud.y());
    let sq = |v: f64| v * v;
    let a = compensated_sum((0..n).map(|i| w(i) * sq(x[i] * x[i])));
    let b = compensated_sum((0..n).map(|i| w(i) * sq(x[i] * y[i])));
    let c = compensated_sum((0..n).map(|i| w(i) * sq(y[i] * y[i])));
    let r0 = compensated_sum((0..n).map(|i| w(i) * x[i] * x[i]));
    let r1 = compensated_sum((0..n).map(|i| w(i) * y[i] * y[i]));
    solve_sym2(a, b, c, r0, r1)
}

fn rms2(cloud: &LissajousCloud, theta: [f64; 2]) -> f64 {
    let ss = compensated_sum(
        cloud
            .x()
            .iter()
            .zip(cloud.y())
            .map(|(&x, &y)| residual(theta, x, y).powi(2)),
    );
    (ss / cloud.len() as f64).sqrt()
}

fn make_fit2(
    cloud: &LissajousCloud,
    theta: [f64; 2],
    iterations: usize,
    last_change: Option<f64>,
) -> EllipseFit2 {
    EllipseFit2 {
        theta,
        residual_rms: rms2(cloud, theta),
        iterations,
        last_change,
        degenerate: !(theta[0] > 0.0 && theta[1] > 0.0),
    }
}

/// Least-squares fit of `θ1·x² + θ2·y² = 1`.
pub fn fit_ls2(cloud: &LissajousCloud) -> Result<EllipseFit2> {
    let theta = solve_two_term(cloud, None).ok_or_else(|| {
        Error::DegenerateCloud("two-term normal matrix is singular (step near 0 or π?)".into())
    })?;
    Ok(make_fit2(cloud, theta, 1, None))
}

/// Least-squares fit of `θ1·x² + θ2·y² + θ3·x + θ4·y − 1 = 0` to raw
/// (not necessarily centered) points.
///
/// Fixing the constant at −1 assumes the origin lies inside the ellipse;
/// otherwise the quadratic coefficients come out negative and the fit is
/// flagged degenerate.
pub fn fit_ls5_points(x: &[f64], y: &[f64]) -> Result<EllipseFit5> {
    if x.len() != y.len() {
        return Err(Error::Size("point coordinate lengths differ".into()));
    }
    if x.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: x.len(),
        });
    }
    let n = x.len();
    let row = |i: usize| Vector4::new(x[i] * x[i], y[i] * y[i], x[i], y[i]);
    let mut normal = Matrix4::<f64>::zeros();
    let mut rhs = Vector4::<f64>::zeros();
    for j in 0..4 {
        for k in j..4 {
            let v = compensated_sum((0..n).map(|i| {
                let r = row(i);
                r[j] * r[k]
            }));
            normal[(j, k)] = v;
            normal[(k, j)] = v;
        }
        rhs[j] = compensated_sum((0..n).map(|i| row(i)[j]));
    }
    let svd = normal.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(Error::DegenerateCloud(
            "five-term normal matrix is singular".into(),
        ));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::DegenerateCloud(e.to_string()))?;
    let theta = [sol[0], sol[1], sol[2], sol[3], -1.0];
    let degenerate = !(theta[0] > 0.0 && theta[1] > 0.0);
    let (center, axes) = if degenerate {
        ([0.0, 0.0], [0.0, 0.0])
    } else {
        let cx = -theta[2] / (2.0 * theta[0]);
        let cy = -theta[3] / (2.0 * theta[1]);
        let s = 1.0 + theta[0] * cx * cx + theta[1] * cy * cy;
        ([cx, cy], [(s / theta[0]).sqrt(), (s / theta[1]).sqrt()])
    };
    let ss = compensated_sum((0..n).map(|i| {
        (theta[0] * x[i] * x[i] + theta[1] * y[i] * y[i] + theta[2] * x[i] + theta[3] * y[i] - 1.0)
            .powi(2)
    }));
    Ok(EllipseFit5 {
        theta,
        center,
        axes,
        residual_rms: (ss / n as f64).sqrt(),
        iterations: 1,
        degenerate,
    })
}

pub fn fit_ls5(cloud: &LissajousCloud) -> Result<EllipseFit5> {
    fit_ls5_points(cloud.x(), cloud.y())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    /// Outlier sensitivity κ of the Leclerc potential.
    pub kappa: f64,
    /// Reweighted solves after the unit-weight initialization.
    pub max_iterations: usize,
    /// Stop once the max relative θ change falls below this.
    pub convergence_tol: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            max_iterations: 3,
            convergence_tol: 1e-4,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// IRLS weight `exp(−2κ·r²)` for residual `r`.
    pub fn weight(&self, r: f64) -> f64 {
        (-2.0 * self.kappa * r * r).exp()
    }

    /// Objective minimized by the iteration: the weights above are the
    /// half-quadratic weights of the Leclerc potential at scale `2κ`.
    pub fn objective(&self, cloud: &LissajousCloud, theta: [f64; 2]) -> f64 {
        let s = 2.0 * self.kappa;
        compensated_sum(
            cloud
                .x()
                .iter()
                .zip(cloud.y())
                .map(|(&x, &y)| leclerc(residual(theta, x, y), s)),
        )
    }
}

/// Leclerc potential `ρ(z; κ) = 1 − exp(−κ z²)/κ`.
pub fn leclerc(z: f64, kappa: f64) -> f64 {
    1.0 - (-kappa * z * z).exp() / kappa
}

/// Every θ iterate of the reweighting, starting with the unit-weight
/// least-squares solution.
pub fn robust_iterates(cloud: &LissajousCloud, cfg: &RobustConfig) -> Result<Vec<[f64; 2]>> {
    cfg.validate()?;
    let mut theta = fit_ls2(cloud)?.theta;
    let mut iterates = vec![theta];
    let mut weights = vec![0.0; cloud.len()];
    for iteration in 1..=cfg.max_iterations {
        for (w, (&x, &y)) in weights.iter_mut().zip(cloud.x().iter().zip(cloud.y())) {
            *w = cfg.weight(residual(theta, x, y));
        }
        let next =
            solve_two_term(cloud, Some(&weights)).ok_or(Error::RobustCollapse { iteration })?;
        let change = relative_change(theta, next);
        theta = next;
        iterates.push(theta);
        if change < cfg.convergence_tol {
            break;
        }
    }
    Ok(iterates)
}

fn relative_change(old: [f64; 2], new: [f64; 2]) -> f64 {
    old.iter()
        .zip(&new)
        .map(|(a, b)| (b - a).abs() / a.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Robust two-term fit by iteratively reweighted least squares under the
/// Leclerc potential.
pub fn fit_robust(cloud: &LissajousCloud, cfg: &RobustConfig) -> Result<EllipseFit2> {
    let iterates = robust_iterates(cloud, cfg)?;
    let n = iterates.len();
    let last_change = (n > 1).then(|| relative_change(iterates[n - 2], iterates[n - 1]));
    Ok(make_fit2(cloud, iterates[n - 1], n, last_change))
}
