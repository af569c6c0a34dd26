//! Parallel transport around circles, holonomy per radius, and limit-holonomy
//! extrapolation on a punctured disk.
//!
//! Transport solves dg/dtheta + A_theta g = 0, g(theta0) = id by fixed-step
//! RK4 and re-orthogonalizes the result by polar projection.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GaugeError, Result};
use crate::skew::{conjugacy_invariants, ConjugacyInvariant, SkewMatrix};

/// Default tolerance on the trailing successive-invariant distances used to
/// flag non-Cauchy radius sequences (distances in turn units).
pub const CAUCHY_TOL: f64 = 1e-3;
const MIN_TRANSPORT_STEPS: usize = 8;

/// A connection coefficient on the circle: theta -> a(theta) in so(K).
#[derive(Clone)]
pub enum CircleConnection {
    /// a(theta) = alpha constant.
    Flat(SkewMatrix),
    /// Closed-form coefficient.
    Callable {
        dim: usize,
        a: Arc<dyn Fn(f64) -> SkewMatrix + Send + Sync>,
    },
    /// Samples on the uniform grid theta_j = j * 2 pi / n, interpolated
    /// linearly (periodic) between nodes.
    Sampled { dim: usize, values: Vec<SkewMatrix> },
}

impl CircleConnection {
    pub fn dim(&self) -> usize {
        match self {
            CircleConnection::Flat(a) => a.dim(),
            CircleConnection::Callable { dim, .. } => *dim,
            CircleConnection::Sampled { dim, .. } => *dim,
        }
    }

    pub fn flat_from_angles(dim: usize, angles: &[f64]) -> Self {
        CircleConnection::Flat(SkewMatrix::from_block_angles(dim, angles))
    }

    pub fn sampled(values: Vec<SkewMatrix>) -> Result<Self> {
        if values.is_empty() {
            return Err(GaugeError::validation("sampled connection needs samples"));
        }
        let dim = values[0].dim();
        if values.iter().any(|v| v.dim() != dim) {
            return Err(GaugeError::validation("inconsistent sample dimensions"));
        }
        Ok(CircleConnection::Sampled { dim, values })
    }

    /// Evaluate the coefficient matrix at an angle.
    pub fn at(&self, theta: f64) -> DMatrix<f64> {
        match self {
            CircleConnection::Flat(a) => a.as_matrix().clone(),
            CircleConnection::Callable { a, .. } => a(theta).as_matrix().clone(),
            CircleConnection::Sampled { values, .. } => {
                let n = values.len() as f64;
                let mut x = theta.rem_euclid(TAU) / TAU * n;
                if x >= n {
                    x -= n;
                }
                let j = x.floor() as usize % values.len();
                let jn = (j + 1) % values.len();
                let w = x - x.floor();
                values[j].as_matrix() * (1.0 - w) + values[jn].as_matrix() * w
            }
        }
    }

    /// Read samples from CSV rows `theta, m11, m12, ..., mKK` (row-major
    /// entries). Rows must cover [0, 2 pi) on a uniform ascending grid.
    pub fn from_csv(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("theta") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 1 + dim * dim {
                return Err(GaugeError::Parse(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    1 + dim * dim,
                    fields.len()
                )));
            }
            let mut entries = Vec::with_capacity(dim * dim);
            for f in &fields[1..] {
                entries.push(
                    f.parse::<f64>()
                        .map_err(|e| GaugeError::Parse(format!("line {}: {e}", lineno + 1)))?,
                );
            }
            values.push(SkewMatrix::from_matrix(DMatrix::from_row_slice(
                dim, dim, &entries,
            ))?);
        }
        CircleConnection::sampled(values)
    }
}

/// A connection on the punctured disk in polar components.
#[derive(Clone)]
pub struct DiskConnection {
    pub dim: usize,
    pub a_r: Arc<dyn Fn(f64, f64) -> SkewMatrix + Send + Sync>,
    pub a_theta: Arc<dyn Fn(f64, f64) -> SkewMatrix + Send + Sync>,
}

impl DiskConnection {
    pub fn new(
        dim: usize,
        a_r: Arc<dyn Fn(f64, f64) -> SkewMatrix + Send + Sync>,
        a_theta: Arc<dyn Fn(f64, f64) -> SkewMatrix + Send + Sync>,
    ) -> Self {
        Self { dim, a_r, a_theta }
    }

    /// Angular-only connection a_theta(r, theta) with a_r = 0.
    pub fn angular(dim: usize, a_theta: Arc<dyn Fn(f64, f64) -> SkewMatrix + Send + Sync>) -> Self {
        Self {
            dim,
            a_r: Arc::new(move |_, _| SkewMatrix::zero(dim)),
            a_theta,
        }
    }

    pub fn circle_at(&self, r: f64) -> CircleConnection {
        let a = self.a_theta.clone();
        CircleConnection::Callable {
            dim: self.dim,
            a: Arc::new(move |theta| a(r, theta)),
        }
    }
}

/// Closest orthogonal matrix (polar factor via SVD).
pub fn polar_project(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = g
        .clone()
        .try_svd(true, true, 1e-14, 10_000)
        .ok_or_else(|| GaugeError::Numerical("SVD failed in polar projection".into()))?;
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    Ok(u * vt)
}

/// Transport matrix g(theta1) solving dg/dtheta = -a(theta) g from
/// g(theta0) = id, by `steps` RK4 steps, then polar-projected onto SO(K).
pub fn parallel_transport(
    c: &CircleConnection,
    theta0: f64,
    theta1: f64,
    steps: usize,
) -> Result<DMatrix<f64>> {
    if steps < MIN_TRANSPORT_STEPS {
        return Err(GaugeError::validation(format!(
            "transport needs at least {MIN_TRANSPORT_STEPS} steps, got {steps}"
        )));
    }
    if !(theta0 < theta1) {
        return Err(GaugeError::validation("transport needs theta0 < theta1"));
    }
    let k = c.dim();
    let h = (theta1 - theta0) / steps as f64;
    let mut g = DMatrix::<f64>::identity(k, k);
    let rhs = |theta: f64, g: &DMatrix<f64>| -> DMatrix<f64> { -(c.at(theta) * g) };
    for s in 0..steps {
        let t = theta0 + s as f64 * h;
        let k1 = rhs(t, &g);
        let k2 = rhs(t + 0.5 * h, &(&g + 0.5 * h * &k1));
        let k3 = rhs(t + 0.5 * h, &(&g + 0.5 * h * &k2));
        let k4 = rhs(t + h, &(&g + h * &k3));
        g += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    polar_project(&g)
}

/// Holonomy invariant of the circle of radius r.
pub fn holonomy_at_radius(d: &DiskConnection, r: f64, steps: usize) -> Result<ConjugacyInvariant> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(GaugeError::validation(format!(
            "radius must lie in (0, 1], got {r}"
        )));
    }
    let g = parallel_transport(&d.circle_at(r), 0.0, TAU, steps)?;
    conjugacy_invariants(&g)
}

/// Convergence diagnostics of holonomy invariants along shrinking radii.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CauchyReport {
    /// Successive invariant distances, in turn units.
    pub distances: Vec<f64>,
    /// Tolerance applied to the trailing distances.
    pub tolerance: f64,
    /// True when the last two successive distances exceed the tolerance.
    pub non_cauchy: bool,
}

/// Invariant at the smallest radius plus the Cauchy diagnostics of the
/// invariant sequence along `radii`.
pub fn limit_holonomy(
    d: &DiskConnection,
    radii: &[f64],
    steps: usize,
) -> Result<(ConjugacyInvariant, CauchyReport)> {
    if radii.len() < 3 {
        return Err(GaugeError::validation("need at least 3 radii"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GaugeError::validation("radii must be strictly decreasing"));
    }
    let invariants: Vec<ConjugacyInvariant> = radii
        .iter()
        .map(|&r| holonomy_at_radius(d, r, steps))
        .collect::<Result<_>>()?;
    let distances: Vec<f64> = invariants
        .windows(2)
        .map(|w| w[0].distance(&w[1]))
        .collect();
    let tail = &distances[distances.len().saturating_sub(2)..];
    let non_cauchy = tail.iter().copied().fold(0.0_f64, f64::max) > CAUCHY_TOL;
    let report = CauchyReport {
        distances,
        tolerance: CAUCHY_TOL,
        non_cauchy,
    };
    Ok((invariants.last().unwrap().clone(), report))
}

/// Pull back a connection by a circle gauge transformation s:
/// (s*a)(theta) = s^-1 s' + s^-1 a s, with s and s' given in closed form.
pub fn gauge_transform(
    c: &CircleConnection,
    s: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    s_prime: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
) -> CircleConnection {
    let dim = c.dim();
    let base = c.clone();
    CircleConnection::Callable {
        dim,
        a: Arc::new(move |theta| {
            let st = s(theta);
            let sp = s_prime(theta);
            let m = st.transpose() * (sp + base.at(theta) * &st);
            let skew = 0.5 * (&m - m.transpose());
            SkewMatrix::from_matrix(skew).expect("gauge transform preserves skewness")
        }),
    }
}
