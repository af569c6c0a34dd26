//! Conformal disk/cylinder transform, discretized unit-sphere fields on the
//! half-cylinder, rowwise energy diagnostics, and the reduced forcing term of
//! the nearly-flat comparison.

use nalgebra::{DMatrix, DVector};

use crate::error::{GaugeError, Result};
use crate::skew::SkewMatrix;
use crate::vortex::VortexTrajectory;

const MIN_GRID: usize = 8;

/// t = -log r; the angle passes through unchanged.
pub fn disk_to_cylinder(r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(GaugeError::validation(format!(
            "radius must be positive, got {r}"
        )));
    }
    Ok(-r.ln())
}

/// r = e^{-t}, inverse of [`disk_to_cylinder`].
pub fn cylinder_to_disk(t: f64) -> f64 {
    (-t).exp()
}

/// Uniform grid on [t_min, t_max] x circle.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub n_theta: usize,
}

impl CylinderGrid {
    pub fn new(t_min: f64, t_max: f64, n_t: usize, n_theta: usize) -> Result<Self> {
        if !(t_min < t_max) {
            return Err(GaugeError::validation("t_min must be below t_max"));
        }
        if n_t < MIN_GRID || n_theta < MIN_GRID {
            return Err(GaugeError::validation(format!(
                "grid needs at least {MIN_GRID} nodes per direction, got {n_t} x {n_theta}"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            n_t,
            n_theta,
        })
    }

    pub fn h_t(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n_t - 1) as f64
    }

    pub fn h_theta(&self) -> f64 {
        std::f64::consts::TAU / self.n_theta as f64
    }

    pub fn t_at(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.h_t()
    }

    pub fn theta_at(&self, j: usize) -> f64 {
        j as f64 * self.h_theta()
    }

    /// Row index of the grid line at t, requiring near-exact alignment.
    pub fn row_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t_min) / self.h_t();
        let i = x.round();
        if (x - i).abs() > 1e-9 || i < 0.0 || i as usize >= self.n_t {
            return Err(GaugeError::validation(format!(
                "t = {t} does not lie on the grid"
            )));
        }
        Ok(i as usize)
    }
}

/// Discretized map into the unit sphere of R^K with a flat reference
/// connection `alpha` and optionally a non-flat coefficient per node.
#[derive(Clone)]
pub struct CylinderField {
    pub grid: CylinderGrid,
    pub dim: usize,
    /// Row-major storage: u[(i * n_theta + j) * dim + c].
    pub u: Vec<f64>,
    pub alpha: SkewMatrix,
    /// Non-flat connection coefficient a(t_i, theta_j), row-major, when present.
    pub a: Option<Vec<SkewMatrix>>,
}

impl CylinderField {
    pub fn new(
        grid: CylinderGrid,
        dim: usize,
        u: Vec<f64>,
        alpha: SkewMatrix,
        a: Option<Vec<SkewMatrix>>,
    ) -> Result<Self> {
        if u.len() != grid.n_t * grid.n_theta * dim {
            return Err(GaugeError::validation("field storage size mismatch"));
        }
        if alpha.dim() != dim {
            return Err(GaugeError::validation("alpha dimension mismatch"));
        }
        if let Some(a) = &a {
            if a.len() != grid.n_t * grid.n_theta {
                return Err(GaugeError::validation("connection storage size mismatch"));
            }
        }
        let fld = Self {
            grid,
            dim,
            u,
            alpha,
            a,
        };
        let worst = (0..fld.grid.n_t * fld.grid.n_theta)
            .map(|p| {
                let v = &fld.u[p * fld.dim..(p + 1) * fld.dim];
                (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()
            })
            .fold(0.0_f64, f64::max);
        if worst > 1e-10 {
            return Err(GaugeError::validation(format!(
                "field values must be unit vectors, worst deviation {worst:.3e}"
            )));
        }
        Ok(fld)
    }

    /// Build a field from closures without the unit-norm check being violated
    /// (values are normalized).
    pub fn from_fn(
        grid: CylinderGrid,
        dim: usize,
        alpha: SkewMatrix,
        mut f: impl FnMut(f64, f64) -> DVector<f64>,
    ) -> Result<Self> {
        let mut u = vec![0.0; grid.n_t * grid.n_theta * dim];
        for i in 0..grid.n_t {
            for j in 0..grid.n_theta {
                let mut v = f(grid.t_at(i), grid.theta_at(j));
                let n = v.norm();
                if n == 0.0 {
                    return Err(GaugeError::validation("field value is zero"));
                }
                v /= n;
                let p = (i * grid.n_theta + j) * dim;
                u[p..p + dim].copy_from_slice(v.as_slice());
            }
        }
        CylinderField::new(grid, dim, u, alpha, None)
    }

    /// Materialize the rotationally symmetric sphere field of a reduced
    /// trajectory: u = (cos th sin f, sin th sin f, cos f), a = a(t) J_z,
    /// alpha = alpha_hat J_z, on a grid subsampling every `stride` samples.
    pub fn from_rotational_ansatz(
        traj: &VortexTrajectory,
        alpha_value: f64,
        stride: usize,
        n_theta: usize,
    ) -> Result<Self> {
        if stride == 0 || (traj.t.len() - 1) % stride != 0 {
            return Err(GaugeError::validation(
                "stride must divide the trajectory length",
            ));
        }
        let n_t = (traj.t.len() - 1) / stride + 1;
        let grid = CylinderGrid::new(traj.t[0], *traj.t.last().unwrap(), n_t, n_theta)?;
        let jz = SkewMatrix::rotation_generator(3, 0, 1);
        let mut u = vec![0.0; n_t * n_theta * 3];
        let mut a = Vec::with_capacity(n_t * n_theta);
        for i in 0..n_t {
            let f = traj.f[i * stride];
            let at = traj.a[i * stride];
            let (sf, cf) = f.sin_cos();
            for j in 0..n_theta {
                let th = grid.theta_at(j);
                let p = (i * n_theta + j) * 3;
                u[p] = th.cos() * sf;
                u[p + 1] = th.sin() * sf;
                u[p + 2] = cf;
                a.push(jz.scale(at));
            }
        }
        CylinderField::new(grid, 3, u, jz.scale(alpha_value), Some(a))
    }

    /// CSV export of the raw field samples: t, theta, u1..uK.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,theta");
        for c in 0..self.dim {
            s.push_str(&format!(",u{}", c + 1));
        }
        s.push('\n');
        for i in 0..self.grid.n_t {
            for j in 0..self.grid.n_theta {
                s.push_str(&format!("{},{}", self.grid.t_at(i), self.grid.theta_at(j)));
                let p = (i * self.grid.n_theta + j) * self.dim;
                for c in 0..self.dim {
                    s.push_str(&format!(",{}", self.u[p + c]));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn value(&self, i: usize, j: usize) -> DVector<f64> {
        let p = (i * self.grid.n_theta + j) * self.dim;
        DVector::from_column_slice(&self.u[p..p + self.dim])
    }

    fn row(&self, i: usize) -> Vec<DVector<f64>> {
        (0..self.grid.n_theta).map(|j| self.value(i, j)).collect()
    }

    fn a_at(&self, i: usize, j: usize) -> &SkewMatrix {
        match &self.a {
            Some(a) => &a[i * self.grid.n_theta + j],
            None => &self.alpha,
        }
    }
}

/// Covariant central theta-difference of row i with the given connection
/// matrix per node.
fn row_covariant_diff(
    fld: &CylinderField,
    i: usize,
    conn: impl Fn(usize) -> DMatrix<f64>,
) -> Vec<DVector<f64>> {
    let n = fld.grid.n_theta;
    let h = fld.grid.h_theta();
    let row = fld.row(i);
    crate::poincare::covariant_central_diff(&row, conn, h)
        .into_iter()
        .take(n)
        .collect()
}

/// Angular energy Theta(t_i) = sum_j |d_{theta,alpha} u|^2 h_theta, always
/// taken with the flat reference connection.
pub fn angular_energy(fld: &CylinderField, i: usize) -> Result<f64> {
    if i >= fld.grid.n_t {
        return Err(GaugeError::validation("row out of range"));
    }
    let d = row_covariant_diff(fld, i, |_| fld.alpha.as_matrix().clone());
    Ok(d.iter().map(|v| v.norm_squared()).sum::<f64>() * fld.grid.h_theta())
}

/// Pohozaev balance H(t_i) = 1/2 sum_j (|u_t|^2 - |d_{theta,alpha} u|^2) h_theta.
/// Needs an interior row for the central t-difference.
pub fn radial_balance(fld: &CylinderField, i: usize) -> Result<f64> {
    if i == 0 || i + 1 >= fld.grid.n_t {
        return Err(GaugeError::validation(
            "radial balance needs an interior row",
        ));
    }
    let ht = fld.grid.h_t();
    let n = fld.grid.n_theta;
    let mut ut2 = 0.0;
    for j in 0..n {
        let up = fld.value(i + 1, j);
        let um = fld.value(i - 1, j);
        ut2 += ((up - um) / (2.0 * ht)).norm_squared();
    }
    let theta = angular_energy(fld, i)?;
    Ok(0.5 * (ut2 * fld.grid.h_theta() - theta))
}

/// Rowwise energy diagnostics on interior rows.
#[derive(Debug, Clone)]
pub struct EnergyProfile {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    pub h: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Band energy over [t-1, t+1] where the band fits the grid, else NaN.
    pub band_energy: Vec<f64>,
}

impl EnergyProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,Theta,H,gamma,band_energy\n");
        for i in 0..self.t.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.t[i], self.theta[i], self.h[i], self.gamma[i], self.band_energy[i]
            ));
        }
        s
    }
}

/// Compute the profile over all interior rows.
pub fn energy_profile(fld: &CylinderField) -> Result<EnergyProfile> {
    let mut t = Vec::new();
    let mut theta = Vec::new();
    let mut h = Vec::new();
    let mut gamma = Vec::new();
    let mut band = Vec::new();
    for i in 1..fld.grid.n_t - 1 {
        let ti = fld.grid.t_at(i);
        let th = angular_energy(fld, i)?;
        t.push(ti);
        theta.push(th);
        h.push(radial_balance(fld, i)?);
        gamma.push(th.sqrt());
        band.push(band_energy(fld, ti, 1.0, false).unwrap_or(f64::NAN));
    }
    Ok(EnergyProfile {
        t,
        theta,
        h,
        gamma,
        band_energy: band,
    })
}

/// Energy of the band [center - half_width, center + half_width] x circle by
/// trapezoid quadrature of |grad_A u|^2, using the actual connection when one
/// is present. With `weight_curvature` the conformally weighted curvature
/// term e^{2t} |da/dt|^2 is added (non-flat fields only).
pub fn band_energy(
    fld: &CylinderField,
    center: f64,
    half_width: f64,
    weight_curvature: bool,
) -> Result<f64> {
    let lo = fld.grid.row_of(center - half_width)?;
    let hi = fld.grid.row_of(center + half_width)?;
    if lo == 0 || hi + 1 >= fld.grid.n_t {
        return Err(GaugeError::validation(
            "band must leave one interior row on each side",
        ));
    }
    let ht = fld.grid.h_t();
    let hth = fld.grid.h_theta();
    let n = fld.grid.n_theta;
    let mut total = 0.0;
    for i in lo..=hi {
        let d = row_covariant_diff(fld, i, |j| fld.a_at(i, j).as_matrix().clone());
        let mut row_sum = 0.0;
        for j in 0..n {
            let up = fld.value(i + 1, j);
            let um = fld.value(i - 1, j);
            let ut = (up - um) / (2.0 * ht);
            row_sum += ut.norm_squared() + d[j].norm_squared();
        }
        if weight_curvature {
            if fld.a.is_some() {
                let t = fld.grid.t_at(i);
                for j in 0..n {
                    let ap = fld.a_at(i + 1, j).as_matrix();
                    let am = fld.a_at(i - 1, j).as_matrix();
                    let da = (ap - am) / (2.0 * ht);
                    row_sum += (2.0 * t).exp() * da.norm_squared();
                }
            }
        }
        let w = if i == lo || i == hi { 0.5 } else { 1.0 };
        total += w * row_sum * hth * ht;
    }
    Ok(total)
}

/// Sup norms of the reduced forcing f = (a - alpha)^2 u
/// + 2 (a - alpha) d_{theta,alpha} u + (d_{theta,alpha} a) u and of its
/// covariant theta-derivative, on row i.
pub fn reduced_forcing(fld: &CylinderField, i: usize) -> Result<(f64, f64)> {
    let a = fld
        .a
        .as_ref()
        .ok_or_else(|| GaugeError::validation("reduced forcing needs a non-flat connection"))?;
    if i >= fld.grid.n_t {
        return Err(GaugeError::validation("row out of range"));
    }
    let n = fld.grid.n_theta;
    let h = fld.grid.h_theta();
    let alpha_m = fld.alpha.as_matrix();
    let du = row_covariant_diff(fld, i, |_| alpha_m.clone());
    let mut f_row: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let jp = (j + 1) % n;
        let jm = (j + n - 1) % n;
        let aj = a[i * n + j].as_matrix();
        let diff = aj - alpha_m;
        // Covariant derivative of the connection coefficient uses the
        // adjoint action: d_theta a + [alpha, a].
        let da = (a[i * n + jp].as_matrix() - a[i * n + jm].as_matrix()) / (2.0 * h) + alpha_m * aj
            - aj * alpha_m;
        let u = fld.value(i, j);
        let f = &diff * (&diff * &u) + 2.0 * (&diff * &du[j]) + &da * &u;
        f_row.push(f);
    }
    let sup_f = f_row.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    let df = crate::poincare::covariant_central_diff(&f_row, |_| alpha_m.clone(), h);
    let sup_df = df.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    Ok((sup_f, sup_df))
}
