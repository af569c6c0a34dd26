//! Relaxation solver for twisted harmonic maps into the unit sphere on a
//! cylinder strip, with optional exponentially bounded forcing, plus the
//! decay-rate, differential-inequality, and Pohozaev-balance verifiers.
//!
//! The discrete equation is the tangential part of
//!   u_tt + (d_theta + alpha)^2 u = f
//! at every interior node; projected damped Jacobi sweeps drive the residual
//! below tolerance while explicit normalization keeps |u| = 1 exactly.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::cylinder::{energy_profile, CylinderField, CylinderGrid, EnergyProfile};
use crate::error::{GaugeError, Result};
use crate::poincare::poincare_constant;
use crate::skew::{standard_form, SkewMatrix};

/// Default energy threshold below which decay claims are made.
pub const DEFAULT_EPSILON0: f64 = 0.5;
/// Forcing exponents below 4/3 only warn; the decay machinery wants kappa >= 4/3.
pub const KAPPA_THRESHOLD: f64 = 4.0 / 3.0;
/// Rows excluded at each end of the strip by the pointwise inequality check.
pub const ODI_BOUNDARY_LAYER: usize = 2;
const MAX_DIM: usize = 16;
const ENERGY_CHECK_EVERY: usize = 256;

/// Top boundary condition of the strip.
#[derive(Clone)]
pub enum TopBoundary {
    /// Pinned loop at t_max.
    Dirichlet(Vec<DVector<f64>>),
    /// Discrete Neumann: the top row copies the row below it.
    Neumann,
}

/// Forcing term with its declared decay exponent.
#[derive(Clone)]
pub struct Forcing {
    pub f: Arc<dyn Fn(f64, f64) -> DVector<f64> + Send + Sync>,
    pub kappa: f64,
}

/// A relaxation problem on a cylinder strip.
#[derive(Clone)]
pub struct FlowProblem {
    pub grid: CylinderGrid,
    pub dim: usize,
    pub alpha: SkewMatrix,
    pub bc_low: Vec<DVector<f64>>,
    pub bc_high: TopBoundary,
    pub forcing: Option<Forcing>,
    pub tol: f64,
    pub max_iters: usize,
    pub epsilon0: f64,
}

impl FlowProblem {
    pub fn new(
        grid: CylinderGrid,
        alpha: SkewMatrix,
        bc_low: Vec<DVector<f64>>,
        bc_high: TopBoundary,
    ) -> Result<Self> {
        let dim = alpha.dim();
        if dim > MAX_DIM {
            return Err(GaugeError::validation(format!(
                "dim > {MAX_DIM} unsupported"
            )));
        }
        let check_loop = |name: &str, v: &Vec<DVector<f64>>| -> Result<()> {
            if v.len() != grid.n_theta {
                return Err(GaugeError::validation(format!(
                    "{name} has {} nodes, grid wants {}",
                    v.len(),
                    grid.n_theta
                )));
            }
            for x in v {
                if x.len() != dim {
                    return Err(GaugeError::validation(format!("{name} dimension mismatch")));
                }
                if (x.norm() - 1.0).abs() > 1e-10 {
                    return Err(GaugeError::validation(format!(
                        "{name} must be unit loops, |v| = {}",
                        x.norm()
                    )));
                }
            }
            Ok(())
        };
        check_loop("bc_low", &bc_low)?;
        if let TopBoundary::Dirichlet(hi) = &bc_high {
            check_loop("bc_high", hi)?;
        }
        let h_alpha = grid.h_theta() * alpha.operator_norm();
        if h_alpha >= 0.5 {
            return Err(GaugeError::validation(format!(
                "grid too coarse for this connection: h_theta * |alpha| = {h_alpha:.3}"
            )));
        }
        Ok(Self {
            grid,
            dim,
            alpha,
            bc_low,
            bc_high,
            forcing: None,
            tol: 1e-8,
            max_iters: 2_000_000,
            epsilon0: DEFAULT_EPSILON0,
        })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn with_tolerance(mut self, tol: f64, max_iters: usize) -> Self {
        self.tol = tol;
        self.max_iters = max_iters;
        self
    }

    /// Problem whose boundary loops are latitude circles of the rotational
    /// closed form f(t) = 2 arctan(l e^{-(1+alpha) t}) in R^3, pinned at both
    /// ends when `dirichlet_top` is set.
    pub fn latitude_benchmark(
        grid: CylinderGrid,
        alpha_value: f64,
        l: f64,
        dirichlet_top: bool,
    ) -> Result<Self> {
        let jz = SkewMatrix::rotation_generator(3, 0, 1);
        let c = 1.0 + alpha_value;
        let loop_at = |t: f64, grid: &CylinderGrid| -> Vec<DVector<f64>> {
            let f = 2.0 * (l * (-c * t).exp()).atan();
            let (sf, cf) = f.sin_cos();
            (0..grid.n_theta)
                .map(|j| {
                    let th = grid.theta_at(j);
                    DVector::from_column_slice(&[th.cos() * sf, th.sin() * sf, cf])
                })
                .collect()
        };
        let low = loop_at(grid.t_min, &grid);
        let high = if dirichlet_top {
            TopBoundary::Dirichlet(loop_at(grid.t_max, &grid))
        } else {
            TopBoundary::Neumann
        };
        FlowProblem::new(grid, jz.scale(alpha_value), low, high)
    }

    /// Exact rotational solution of the flat problem, for oracle comparisons.
    pub fn latitude_closed_form(&self, alpha_value: f64, l: f64) -> CylinderField {
        let jz = SkewMatrix::rotation_generator(3, 0, 1);
        let c = 1.0 + alpha_value;
        CylinderField::from_fn(self.grid.clone(), 3, jz.scale(alpha_value), |t, th| {
            let f = 2.0 * (l * (-c * t).exp()).atan();
            let (sf, cf) = f.sin_cos();
            DVector::from_column_slice(&[th.cos() * sf, th.sin() * sf, cf])
        })
        .expect("closed form is unit")
    }
}

/// Converged relaxation output.
pub struct FlowSolution {
    pub field: CylinderField,
    pub residual_sup: f64,
    pub iterations: usize,
    /// Discrete energy sum (|u_t|^2 + |D_theta,alpha u|^2) h_t h_theta.
    pub energy: f64,
    pub profile: EnergyProfile,
    pub epsilon0: f64,
    pub forcing_kappa: Option<f64>,
    pub warnings: Vec<String>,
}

struct SolverScratch {
    n_t: usize,
    n_theta: usize,
    dim: usize,
    h_t: f64,
    tau: f64,
    /// Dense spectral covariant operator L_theta = -(D + alpha)^2 acting on a
    /// row, (n_theta * dim)^2 row-major.
    l_theta: Vec<f64>,
    forcing: Option<Vec<f64>>,
}

fn dense_matvec(m: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &m[r * n..(r + 1) * n];
        let mut acc = 0.0;
        for c in 0..n {
            acc += row[c] * x[c];
        }
        *yr = acc;
    }
}

impl SolverScratch {
    /// One projected Jacobi sweep into `out`; returns the sup residual norm.
    fn sweep(&self, u: &[f64], out: &mut [f64], apply: bool) -> f64 {
        let k = self.dim;
        let n_theta = self.n_theta;
        let row_len = n_theta * k;
        let ht2 = self.h_t * self.h_t;
        let tau = self.tau;
        // Rows 1 .. n_t - 2 are swept; boundary rows are copied.
        let interior = &mut out[row_len..(self.n_t - 1) * row_len];
        let sup = interior
            .par_chunks_mut(row_len)
            .enumerate()
            .map(|(row_idx, out_row)| {
                let i = row_idx + 1;
                let up_row = &u[(i + 1) * row_len..(i + 2) * row_len];
                let lo_row = &u[(i - 1) * row_len..i * row_len];
                let cur_row = &u[i * row_len..(i + 1) * row_len];
                let mut lth = vec![0.0; row_len];
                dense_matvec(&self.l_theta, cur_row, &mut lth);
                let mut local_sup = 0.0_f64;
                let mut r = [0.0_f64; MAX_DIM];
                for j in 0..n_theta {
                    let p = j * k;
                    // Residual r = u_tt - L_theta u - f.
                    for c in 0..k {
                        let uc = cur_row[p + c];
                        let lap_t = (up_row[p + c] + lo_row[p + c] - 2.0 * uc) / ht2;
                        r[c] = lap_t - lth[p + c];
                    }
                    if let Some(f) = &self.forcing {
                        let base = (i * n_theta + j) * k;
                        for c in 0..k {
                            r[c] -= f[base + c];
                        }
                    }
                    let mut dot = 0.0;
                    for c in 0..k {
                        dot += r[c] * cur_row[p + c];
                    }
                    let mut rn2 = 0.0;
                    for c in 0..k {
                        let tang = r[c] - dot * cur_row[p + c];
                        r[c] = tang;
                        rn2 += tang * tang;
                    }
                    local_sup = local_sup.max(rn2);
                    if apply {
                        let mut nrm2 = 0.0;
                        for c in 0..k {
                            let v = cur_row[p + c] + tau * r[c];
                            out_row[p + c] = v;
                            nrm2 += v * v;
                        }
                        let inv = 1.0 / nrm2.sqrt();
                        for c in 0..k {
                            out_row[p + c] *= inv;
                        }
                    }
                }
                local_sup
            })
            .reduce(|| 0.0_f64, f64::max);
        sup.sqrt()
    }

    /// The Lyapunov functional the sweep descends: forward t-differences plus
    /// the quadratic form of the same theta-operator, minus the forcing work
    /// term. Matching the operator matters; other discrete energies are not
    /// monotone along this iteration.
    fn lyapunov(&self, u: &[f64]) -> f64 {
        let k = self.dim;
        let n_theta = self.n_theta;
        let row_len = n_theta * k;
        let mut e = 0.0;
        let mut lth = vec![0.0; row_len];
        for i in 0..self.n_t {
            let row = &u[i * row_len..(i + 1) * row_len];
            if i + 1 < self.n_t {
                let nxt = &u[(i + 1) * row_len..(i + 2) * row_len];
                for p in 0..row_len {
                    let d = nxt[p] - row[p];
                    e += d * d / self.h_t;
                }
            }
            // <u, L_theta u> over the row, end rows at half weight.
            let w = if i == 0 || i + 1 == self.n_t {
                0.5
            } else {
                1.0
            };
            dense_matvec(&self.l_theta, row, &mut lth);
            for p in 0..row_len {
                e += w * row[p] * lth[p] * self.h_t;
            }
            if let Some(f) = &self.forcing {
                let base = i * row_len;
                for p in 0..row_len {
                    e += 2.0 * w * f[base + p] * row[p] * self.h_t;
                }
            }
        }
        e
    }
}

/// Relax the problem to its twisted-harmonic solution.
pub fn relax(p: &FlowProblem) -> Result<FlowSolution> {
    let k = p.dim;
    let n_t = p.grid.n_t;
    let n_theta = p.grid.n_theta;
    let row_len = n_theta * k;
    let mut warnings = Vec::new();
    if let Some(f) = &p.forcing {
        if f.kappa < KAPPA_THRESHOLD {
            warnings.push(format!(
                "forcing exponent kappa = {} below {KAPPA_THRESHOLD}; sharp decay not guaranteed",
                f.kappa
            ));
        }
    }

    // Geodesic-in-R^K interpolation of the boundary loops, then normalize.
    let mut u = vec![0.0; n_t * row_len];
    for j in 0..n_theta {
        let low = &p.bc_low[j];
        let high = match &p.bc_high {
            TopBoundary::Dirichlet(h) => h[j].clone(),
            TopBoundary::Neumann => low.clone(),
        };
        for i in 0..n_t {
            let s = i as f64 / (n_t - 1) as f64;
            let mut v = low * (1.0 - s) + &high * s;
            let n = v.norm();
            if n < 1e-8 {
                return Err(GaugeError::validation(
                    "boundary loops are antipodal; geodesic initialization degenerates",
                ));
            }
            v /= n;
            u[(i * n_theta + j) * k..(i * n_theta + j) * k + k].copy_from_slice(v.as_slice());
        }
    }

    let h_t = p.grid.h_t();
    let conn = crate::holonomy::CircleConnection::Flat(p.alpha.clone());
    let l_theta_m = crate::poincare::covariant_operator(&conn, n_theta);
    // Largest theta eigenvalue by power iteration; with the t-direction bound
    // 4/h_t^2 this caps the stable step.
    let lambda_theta = {
        let mut v = nalgebra::DVector::from_element(row_len, 1.0 / (row_len as f64).sqrt());
        for i in 0..row_len {
            v[i] += (i as f64 * 0.7).sin() * 0.1;
        }
        let mut lam = 0.0;
        for _ in 0..60 {
            let w = &l_theta_m * &v;
            lam = w.norm();
            if lam == 0.0 {
                break;
            }
            v = w / lam;
        }
        lam
    };
    let lambda_max = 4.0 / (h_t * h_t) + lambda_theta * 1.01;
    let tau = 0.8 * 2.0 / lambda_max;

    let forcing = p.forcing.as_ref().map(|f| {
        let mut field = vec![0.0; n_t * row_len];
        for i in 0..n_t {
            for j in 0..n_theta {
                let v = (f.f)(p.grid.t_at(i), p.grid.theta_at(j));
                field[(i * n_theta + j) * k..(i * n_theta + j) * k + k]
                    .copy_from_slice(v.as_slice());
            }
        }
        field
    });

    // nalgebra stores column-major; the operator is symmetric, so the flat
    // slice doubles as row-major.
    let scratch = SolverScratch {
        n_t,
        n_theta,
        dim: k,
        h_t,
        tau,
        l_theta: l_theta_m.as_slice().to_vec(),
        forcing,
    };

    let mut buf = u.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut last_energy = f64::INFINITY;
    for it in 0..=p.max_iters {
        let apply = {
            let r = scratch.sweep(&u, &mut buf, true);
            residual = r;
            true
        };
        let _ = apply;
        if residual <= p.tol {
            iterations = it;
            break;
        }
        if it == p.max_iters {
            return Err(GaugeError::NonConvergence {
                iterations: it,
                residual,
                tol: p.tol,
            });
        }
        // Boundary rows: keep Dirichlet rows, copy for Neumann.
        buf[..row_len].copy_from_slice(&u[..row_len]);
        match &p.bc_high {
            TopBoundary::Dirichlet(_) => {
                buf[(n_t - 1) * row_len..].copy_from_slice(&u[(n_t - 1) * row_len..]);
            }
            TopBoundary::Neumann => {
                let (head, tail) = buf.split_at_mut((n_t - 1) * row_len);
                tail.copy_from_slice(&head[(n_t - 2) * row_len..]);
            }
        }
        std::mem::swap(&mut u, &mut buf);
        if (it + 1) % ENERGY_CHECK_EVERY == 0 {
            let e = scratch.lyapunov(&u);
            if e > last_energy + 1e-9 * (1.0 + last_energy.abs()) {
                return Err(GaugeError::Accuracy(format!(
                    "discrete energy increased ({last_energy} -> {e}); step unstable"
                )));
            }
            last_energy = e;
        }
    }

    let field = CylinderField::new(p.grid.clone(), k, u, p.alpha.clone(), None)?;
    let profile = energy_profile(&field)?;
    let energy = interior_energy(&field);
    Ok(FlowSolution {
        field,
        residual_sup: residual,
        iterations,
        energy,
        profile,
        epsilon0: p.epsilon0,
        forcing_kappa: p.forcing.as_ref().map(|f| f.kappa),
        warnings,
    })
}

/// Gauged Dirichlet energy of the field, interior central differences.
pub fn interior_energy(fld: &CylinderField) -> f64 {
    let g = &fld.grid;
    let mut e = 0.0;
    for i in 1..g.n_t - 1 {
        let theta = crate::cylinder::angular_energy(fld, i).unwrap_or(0.0);
        let h = crate::cylinder::radial_balance(fld, i).unwrap_or(0.0);
        // |u_t|^2 + |D u|^2 integrated over the circle = 2 H + 2 Theta.
        e += (2.0 * h + 2.0 * theta) * g.h_t();
    }
    e
}

/// Decay-rate report of a converged solution.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub fit: Option<crate::decay::DecayFit>,
    /// sqrt(C(alpha)) of the problem's flat connection.
    pub reference_rate: f64,
    /// Set when gamma is numerically zero and no rate is defined.
    pub degenerate: bool,
}

/// Fit the gamma profile on a window (defaults to the middle half of the
/// strip) and compare with sqrt(C(alpha)).
pub fn decay_profile(s: &FlowSolution, window: Option<(f64, f64)>) -> Result<DecayReport> {
    let g = &s.field.grid;
    let len = g.t_max - g.t_min;
    if len < 12.0 {
        return Err(GaugeError::validation(format!(
            "strip length {len} too short for a rate fit (need >= 12)"
        )));
    }
    if s.energy > s.epsilon0 * s.epsilon0 {
        return Err(GaugeError::validation(format!(
            "energy {} above the small-energy threshold {}",
            s.energy,
            s.epsilon0 * s.epsilon0
        )));
    }
    let window = window.unwrap_or((g.t_min + 0.25 * len, g.t_max - 0.25 * len));
    let reference_rate = poincare_constant(&standard_form(&s.field.alpha))
        .value
        .sqrt();
    let gmax = s.profile.gamma.iter().copied().fold(0.0_f64, f64::max);
    if gmax < 1e-13 {
        return Ok(DecayReport {
            fit: None,
            reference_rate,
            degenerate: true,
        });
    }
    let fit = crate::decay::fit_exponential(&s.profile.t, &s.profile.gamma, window)?;
    Ok(DecayReport {
        fit: Some(fit),
        reference_rate,
        degenerate: false,
    })
}

/// Pointwise report of the second-order differential inequality
/// gamma'' >= (C(alpha) - c_sup * sup |grad_A u|^2) gamma - sup|f|(t).
#[derive(Debug, Clone, Serialize)]
pub struct OdiReport {
    pub violations: Vec<usize>,
    pub checked_rows: usize,
    pub slack: f64,
    pub c_sup: f64,
}

/// Rowwise sup of |grad_A u|^2 on the interior rows (matching the profile).
fn sup_grad_squared(fld: &CylinderField) -> Vec<f64> {
    let g = &fld.grid;
    let ht = g.h_t();
    let hth = g.h_theta();
    let n = g.n_theta;
    let alpha = fld.alpha.as_matrix().clone();
    (1..g.n_t - 1)
        .map(|i| {
            let mut sup: f64 = 0.0;
            for j in 0..n {
                let jp = (j + 1) % n;
                let jm = (j + n - 1) % n;
                let ut = (fld.value(i + 1, j) - fld.value(i - 1, j)) / (2.0 * ht);
                let dth =
                    (fld.value(i, jp) - fld.value(i, jm)) / (2.0 * hth) + &alpha * fld.value(i, j);
                sup = sup.max(ut.norm_squared() + dth.norm_squared());
            }
            sup
        })
        .collect()
}

/// Check the differential inequality on the gamma samples of a solution.
pub fn verify_odi(s: &FlowSolution, c_sup: f64) -> Result<OdiReport> {
    let c_alpha = poincare_constant(&standard_form(&s.field.alpha)).value;
    let forcing_sup: Option<Vec<f64>> = None;
    odi_from_samples(
        &s.profile.t,
        &s.profile.gamma,
        &sup_grad_squared(&s.field),
        c_alpha,
        c_sup,
        s.field.grid.h_t(),
        forcing_sup.as_deref(),
    )
}

/// Core inequality check on raw samples (exposed for negative controls).
pub fn odi_from_samples(
    t: &[f64],
    gamma: &[f64],
    sup_grad2: &[f64],
    c_alpha: f64,
    c_sup: f64,
    h_t: f64,
    forcing_sup: Option<&[f64]>,
) -> Result<OdiReport> {
    if gamma.len() < 5 {
        return Err(GaugeError::validation("need at least 5 gamma samples"));
    }
    if gamma.len() != sup_grad2.len() || gamma.len() != t.len() {
        return Err(GaugeError::validation("sample length mismatch"));
    }
    let slack = 10.0 * h_t * h_t;
    let mut violations = Vec::new();
    let lo = 1 + ODI_BOUNDARY_LAYER;
    let hi = gamma.len() - 1 - ODI_BOUNDARY_LAYER;
    let mut checked = 0;
    for i in lo..hi {
        let gpp = (gamma[i + 1] - 2.0 * gamma[i] + gamma[i - 1]) / (h_t * h_t);
        let mut rhs = (c_alpha - c_sup * sup_grad2[i]) * gamma[i];
        if let Some(f) = forcing_sup {
            rhs -= f[i];
        }
        checked += 1;
        if gpp < rhs - slack {
            violations.push(i);
        }
    }
    Ok(OdiReport {
        violations,
        checked_rows: checked,
        slack,
        c_sup,
    })
}

/// Pohozaev-balance report: row constancy of H and, for forced runs, the
/// decay rate of the drift |H(t) - H_tail|.
#[derive(Debug, Clone, Serialize)]
pub struct HReport {
    pub max_variation: f64,
    pub slack: f64,
    pub mean: f64,
    /// Fit of |H - H_tail| when a window is supplied; measures the forced
    /// drift rate on finite strips where H converges to a constant.
    pub drift_fit: Option<crate::decay::DecayFit>,
}

pub fn verify_h(s: &FlowSolution, fit_window: Option<(f64, f64)>) -> Result<HReport> {
    let h = &s.profile.h;
    if h.is_empty() {
        return Err(GaugeError::validation("profile has no interior rows"));
    }
    let ht = s.field.grid.h_t();
    let max_variation = h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - h.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    let drift_fit = match fit_window {
        None => None,
        Some(w) => {
            let tail_n = 5.min(h.len());
            let tail = h[h.len() - tail_n..].iter().sum::<f64>() / tail_n as f64;
            let drift: Vec<f64> = h.iter().map(|v| (v - tail).abs()).collect();
            Some(crate::decay::fit_exponential(&s.profile.t, &drift, w)?)
        }
    };
    Ok(HReport {
        max_variation,
        slack: 10.0 * ht * ht,
        mean,
        drift_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    fn north_pole_problem(n_t: usize, n_theta: usize) -> FlowProblem {
        let grid = CylinderGrid::new(0.0, 4.0, n_t, n_theta).unwrap();
        let jz = SkewMatrix::rotation_generator(3, 0, 1);
        let pole = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let low: Vec<DVector<f64>> = (0..n_theta).map(|_| pole.clone()).collect();
        FlowProblem::new(
            grid,
            jz.scale(-0.7),
            low.clone(),
            TopBoundary::Dirichlet(low),
        )
        .unwrap()
    }

    #[test]
    fn fixed_point_boundary_converges_immediately() {
        let p = north_pole_problem(16, 16);
        let s = relax(&p).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.residual_sup <= p.tol);
        assert!(s.energy < 1e-20);
    }

    #[test]
    fn closed_form_oracle_self_convergence() {
        let alpha = -0.7;
        let l = 0.1;
        let mut errs = Vec::new();
        for &(n_t, n_th) in &[(41usize, 16usize), (81, 32)] {
            let grid = CylinderGrid::new(0.0, 4.0, n_t, n_th).unwrap();
            let p = FlowProblem::latitude_benchmark(grid, alpha, l, true)
                .unwrap()
                .with_tolerance(1e-10, 2_000_000);
            let s = relax(&p).unwrap();
            let exact = p.latitude_closed_form(alpha, l);
            let mut sup = 0.0_f64;
            for i in 1..p.grid.n_t - 1 {
                for j in 0..p.grid.n_theta {
                    sup = sup.max((s.field.value(i, j) - exact.value(i, j)).amax());
                }
            }
            errs.push(sup);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (3.0..5.6).contains(&ratio),
            "self-convergence ratio {ratio} ({errs:?})"
        );
    }

    #[test]
    fn forcing_perturbs_linearly() {
        let alpha = -0.7;
        let grid = CylinderGrid::new(0.0, 6.0, 31, 16).unwrap();
        let base = FlowProblem::latitude_benchmark(grid.clone(), alpha, 0.1, true)
            .unwrap()
            .with_tolerance(1e-10, 2_000_000);
        let s0 = relax(&base).unwrap();
        let run = |c: f64| {
            let f = Forcing {
                f: Arc::new(move |t: f64, th: f64| {
                    DVector::from_column_slice(&[
                        -th.sin() * c * (-2.0 * t).exp(),
                        th.cos() * c * (-2.0 * t).exp(),
                        0.0,
                    ])
                }),
                kappa: 2.0,
            };
            relax(&base.clone().with_forcing(f)).unwrap()
        };
        let s1 = run(2e-3);
        let s2 = run(1e-3);
        let dev = |a: &FlowSolution, b: &FlowSolution| {
            let mut sup = 0.0_f64;
            for i in 0..grid.n_t {
                for j in 0..grid.n_theta {
                    sup = sup.max((a.field.value(i, j) - b.field.value(i, j)).amax());
                }
            }
            sup
        };
        let d1 = dev(&s1, &s0);
        let d2 = dev(&s2, &s0);
        assert!(d1 < 0.1, "perturbation {d1} too large");
        let ratio = d1 / d2;
        assert!((1.7..2.3).contains(&ratio), "linearity ratio {ratio}");
    }

    #[test]
    fn unreachable_tolerance_is_nonconvergence() {
        let grid = CylinderGrid::new(0.0, 4.0, 21, 16).unwrap();
        let p = FlowProblem::latitude_benchmark(grid, -0.7, 0.1, true)
            .unwrap()
            .with_tolerance(1e-16, 40);
        match relax(&p) {
            Err(GaugeError::NonConvergence { iterations, .. }) => assert_eq!(iterations, 40),
            other => panic!("expected non-convergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn kappa_below_threshold_warns() {
        let grid = CylinderGrid::new(0.0, 4.0, 16, 16).unwrap();
        let p = FlowProblem::latitude_benchmark(grid, -0.7, 0.05, true).unwrap();
        let f = Forcing {
            f: Arc::new(|_t, _th| DVector::from_column_slice(&[0.0, 0.0, 0.0])),
            kappa: 1.0,
        };
        let s = relax(&p.with_forcing(f)).unwrap();
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn coarse_grid_for_large_alpha_rejected() {
        let grid = CylinderGrid::new(0.0, 4.0, 16, 8).unwrap();
        let jz = SkewMatrix::rotation_generator(3, 0, 1);
        let pole = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let low: Vec<DVector<f64>> = (0..8).map(|_| pole.clone()).collect();
        // h_theta = 2 pi / 8, |alpha| = 0.7: product 0.55 >= 0.5.
        assert!(FlowProblem::new(
            grid,
            jz.scale(0.7),
            low.clone(),
            TopBoundary::Dirichlet(low)
        )
        .is_err());
    }

    #[test]
    fn constant_solution_rate_is_degenerate() {
        let grid = CylinderGrid::new(0.0, 13.0, 27, 16).unwrap();
        let jz = SkewMatrix::rotation_generator(3, 0, 1);
        let pole = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let low: Vec<DVector<f64>> = (0..16).map(|_| pole.clone()).collect();
        let p = FlowProblem::new(
            grid,
            jz.scale(-0.7),
            low.clone(),
            TopBoundary::Dirichlet(low),
        )
        .unwrap();
        let s = relax(&p).unwrap();
        let rep = decay_profile(&s, None).unwrap();
        assert!(rep.degenerate);
        assert!(rep.fit.is_none());
        assert!((rep.reference_rate - 0.3).abs() < 1e-12);
    }

    #[test]
    fn odi_negative_control_detects_bump() {
        // gamma = cosh(delta (t - 10)) solves gamma'' = delta^2 gamma exactly;
        // a bump must be flagged, the clean series must not.
        let n = 101;
        let h = 0.1;
        let delta = 0.3_f64;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mut gamma: Vec<f64> = t.iter().map(|&t| (delta * (t - 5.0)).cosh()).collect();
        let sup = vec![0.0; n];
        let clean = odi_from_samples(&t, &gamma, &sup, delta * delta, 1.0, h, None).unwrap();
        assert!(clean.violations.is_empty(), "{:?}", clean.violations);
        gamma[50] += 0.5;
        let bumped = odi_from_samples(&t, &gamma, &sup, delta * delta, 1.0, h, None).unwrap();
        // The spike makes the second difference at the bump dip sharply.
        assert!(bumped.violations.contains(&50), "{:?}", bumped.violations);
    }

    #[test]
    fn rotation_invariant_field_has_constant_h() {
        // u fixed in t: H = -Theta/2 on every row.
        let grid = CylinderGrid::new(0.0, 3.0, 31, 32).unwrap();
        let jz = SkewMatrix::rotation_generator(3, 0, 1);
        let fld = CylinderField::from_fn(grid, 3, jz.scale(-0.4), |_t, th| {
            let f = 0.8_f64;
            DVector::from_column_slice(&[th.cos() * f.sin(), th.sin() * f.sin(), f.cos()])
        })
        .unwrap();
        let profile = energy_profile(&fld).unwrap();
        for (h, th) in profile.h.iter().zip(&profile.theta) {
            assert!((h + 0.5 * th).abs() < 1e-12);
        }
    }
}
