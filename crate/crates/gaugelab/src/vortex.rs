//! The reduced abelian vortex system on the half-cylinder:
//!   f' = -(1 + a) sin f,   a' = e^{-2t} cos f,
//! its closed-form first integral, the connection limit with a certified
//! bracket, and the gradient/curvature decay diagnostics.

use serde::Serialize;

use crate::error::{GaugeError, Result};

/// Minimal horizon for a certified limit: the tail bound e^{-2T}/2 is then
/// below 1e-13.
pub const MIN_LIMIT_HORIZON: f64 = 15.0;

/// RK4 samples of the reduced system, one per step.
#[derive(Debug, Clone)]
pub struct VortexTrajectory {
    pub a0: f64,
    pub f0: f64,
    pub dt: f64,
    pub t: Vec<f64>,
    pub f: Vec<f64>,
    pub a: Vec<f64>,
}

fn rhs(t: f64, f: f64, a: f64) -> (f64, f64) {
    (-(1.0 + a) * f.sin(), (-2.0 * t).exp() * f.cos())
}

/// Integrate the reduced system on [0, T] by fixed-step RK4.
///
/// The integrator is cross-checked pointwise: a 4th-order difference of the
/// f samples must reproduce -(1 + a) sin f, which fails loudly when the step
/// is too large for the requested horizon.
pub fn integrate_vortex(a0: f64, f0: f64, big_t: f64, dt: f64) -> Result<VortexTrajectory> {
    if !(f0 > 0.0 && f0 < std::f64::consts::PI) {
        return Err(GaugeError::validation(format!(
            "f0 must lie in (0, pi), got {f0}"
        )));
    }
    if !(big_t > 0.0 && dt > 0.0) {
        return Err(GaugeError::validation("need T > 0 and dt > 0"));
    }
    let n = (big_t / dt).round() as usize;
    if n < 8 {
        return Err(GaugeError::validation("fewer than 8 steps"));
    }
    let mut t = Vec::with_capacity(n + 1);
    let mut f = Vec::with_capacity(n + 1);
    let mut a = Vec::with_capacity(n + 1);
    let (mut fc, mut ac) = (f0, a0);
    t.push(0.0);
    f.push(fc);
    a.push(ac);
    for k in 0..n {
        let tk = k as f64 * dt;
        let (k1f, k1a) = rhs(tk, fc, ac);
        let (k2f, k2a) = rhs(tk + 0.5 * dt, fc + 0.5 * dt * k1f, ac + 0.5 * dt * k1a);
        let (k3f, k3a) = rhs(tk + 0.5 * dt, fc + 0.5 * dt * k2f, ac + 0.5 * dt * k2a);
        let (k4f, k4a) = rhs(tk + dt, fc + dt * k3f, ac + dt * k3a);
        fc += dt / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f);
        ac += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        t.push((k + 1) as f64 * dt);
        f.push(fc);
        a.push(ac);
    }
    let traj = VortexTrajectory {
        a0,
        f0,
        dt,
        t,
        f,
        a,
    };
    let resid = traj.first_equation_residual();
    let tol = (1e-8_f64).max(2e-4 * dt * dt);
    if resid > tol {
        return Err(GaugeError::Accuracy(format!(
            "integrator residual {resid:.3e} exceeds {tol:.3e}; reduce dt"
        )));
    }
    Ok(traj)
}

/// Trajectory of the flat case a = alpha constant, with f from the exact
/// closed form f = 2 arctan(tan(f0/2) e^{-(1+alpha) t}).
pub fn flat_trajectory(alpha: f64, f0: f64, big_t: f64, dt: f64) -> Result<VortexTrajectory> {
    if !(f0 > 0.0 && f0 < std::f64::consts::PI) {
        return Err(GaugeError::validation(format!(
            "f0 must lie in (0, pi), got {f0}"
        )));
    }
    let n = (big_t / dt).round() as usize;
    let l = (f0 / 2.0).tan();
    let c = 1.0 + alpha;
    let mut t = Vec::with_capacity(n + 1);
    let mut f = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let tk = k as f64 * dt;
        t.push(tk);
        f.push(2.0 * (l * (-c * tk).exp()).atan());
    }
    Ok(VortexTrajectory {
        a0: alpha,
        f0,
        dt,
        t,
        f,
        a: vec![alpha; n + 1],
    })
}

impl VortexTrajectory {
    /// Max interior residual |f'(t) + (1 + a) sin f| with a 4th-order stencil.
    pub fn first_equation_residual(&self) -> f64 {
        let n = self.t.len();
        let dt = self.dt;
        let mut worst = 0.0_f64;
        for k in 2..n - 2 {
            let fp = (-self.f[k + 2] + 8.0 * self.f[k + 1] - 8.0 * self.f[k - 1] + self.f[k - 2])
                / (12.0 * dt);
            worst = worst.max((fp + (1.0 + self.a[k]) * self.f[k].sin()).abs());
        }
        worst
    }

    /// Cumulative trapezoid of (1 + a), the phase in the closed form.
    pub fn phase(&self) -> Vec<f64> {
        let mut phi = Vec::with_capacity(self.t.len());
        let mut acc = 0.0;
        phi.push(0.0);
        for k in 1..self.t.len() {
            acc += 0.5 * (2.0 + self.a[k] + self.a[k - 1]) * (self.t[k] - self.t[k - 1]);
            phi.push(acc);
        }
        phi
    }
}

/// Closed-form latitude f_hat(t) = 2 arctan(l e^{-int (1+a)}) evaluated along
/// the trajectory's own connection samples.
pub fn closed_form_f(traj: &VortexTrajectory, l: f64) -> Vec<f64> {
    traj.phase()
        .iter()
        .map(|phi| 2.0 * (l * (-phi).exp()).atan())
        .collect()
}

/// Connection limit with a certified bracket.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaEstimate {
    /// a(T) plus the midpoint tail correction e^{-2T} cos f(T) / 2.
    pub value: f64,
    /// Rigorous bracket (a(T), a(T) + e^{-2T}/2) from |a'| <= e^{-2t}.
    pub bracket: (f64, f64),
}

/// Estimate lim a(t) from the trajectory tail.
pub fn limit_alpha(traj: &VortexTrajectory) -> Result<AlphaEstimate> {
    let big_t = *traj.t.last().unwrap();
    if big_t < MIN_LIMIT_HORIZON {
        return Err(GaugeError::Accuracy(format!(
            "horizon T = {big_t} too short for a certified limit (need >= {MIN_LIMIT_HORIZON})"
        )));
    }
    let a_end = *traj.a.last().unwrap();
    let f_end = *traj.f.last().unwrap();
    let half_tail = 0.5 * (-2.0 * big_t).exp();
    Ok(AlphaEstimate {
        value: a_end + half_tail * f_end.cos(),
        bracket: (a_end, a_end + half_tail),
    })
}

/// |grad_A u| along the trajectory:
/// 2 sqrt(2) |1+a| e^{-phi} / (1 + e^{-2 phi}).
pub fn grad_norm(traj: &VortexTrajectory) -> Vec<f64> {
    let phi = traj.phase();
    traj.a
        .iter()
        .zip(&phi)
        .map(|(a, p)| {
            2.0 * std::f64::consts::SQRT_2 * (1.0 + a).abs() * (-p).exp() / (1.0 + (-2.0 * p).exp())
        })
        .collect()
}

/// |F_A| = |a'(t)| = e^{-2t} |cos f(t)| along the trajectory.
pub fn curvature_norm(traj: &VortexTrajectory) -> Vec<f64> {
    traj.t
        .iter()
        .zip(&traj.f)
        .map(|(t, f)| (-2.0 * t).exp() * f.cos().abs())
        .collect()
}

/// Renormalized curvature e^{2t} a'(t) = cos f(t).
pub fn renormalized_curvature(traj: &VortexTrajectory) -> Vec<f64> {
    traj.f.iter().map(|f| f.cos()).collect()
}

/// Derived diagnostics bundle.
#[derive(Debug, Clone)]
pub struct VortexDiagnostics {
    pub alpha: AlphaEstimate,
    /// Limit of the renormalized curvature, read at the horizon.
    pub alpha1: f64,
    pub grad: Vec<f64>,
    pub curv: Vec<f64>,
    pub renorm_curv: Vec<f64>,
}

pub fn diagnostics(traj: &VortexTrajectory) -> Result<VortexDiagnostics> {
    let alpha = limit_alpha(traj)?;
    let renorm = renormalized_curvature(traj);
    Ok(VortexDiagnostics {
        alpha,
        alpha1: *renorm.last().unwrap(),
        grad: grad_norm(traj),
        curv: curvature_norm(traj),
        renorm_curv: renorm,
    })
}

/// CSV export: t, f, a, grad_norm, curv_norm, renorm_curv.
pub fn trajectory_csv(traj: &VortexTrajectory) -> String {
    let grad = grad_norm(traj);
    let curv = curvature_norm(traj);
    let renorm = renormalized_curvature(traj);
    let mut s = String::from("t,f,a,grad_norm,curv_norm,renorm_curv\n");
    for k in 0..traj.t.len() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            traj.t[k], traj.f[k], traj.a[k], grad[k], curv[k], renorm[k]
        ));
    }
    s
}
