//! Subcommand implementations: wire configs to the library and emit
//! deterministic CSV/JSON artifacts.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use gaugelab::cylinder::CylinderGrid;
use gaugelab::decay::{fit_exponential, DecayFit};
use gaugelab::flow::{decay_profile, relax, verify_h, verify_odi, FlowProblem, Forcing};
use gaugelab::holonomy::{limit_holonomy, CircleConnection, DiskConnection};
use gaugelab::poincare::{covariant_spectrum, poincare_constant, Witness};
use gaugelab::skew::{standard_form, SkewMatrix};
use gaugelab::vortex::{diagnostics, integrate_vortex, trajectory_csv};

use crate::config::Config;

/// Tolerance for the closed-form vs spectral agreement gate.
const POINCARE_GATE: f64 = 1e-6;

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

pub fn schema(name: &str) -> String {
    match name {
        "poincare" => "\
config keys: angles (comma list in [0,1)), dim (default 2*len(angles)), n_modes (even, default 256)
poincare.json: {angles, dim, n_modes, closed_form, witness, spectral, kernel_dim, gap, agree}
exit 4 when |closed_form - spectral| > 1e-6
"
        .to_string(),
        "vortex" => "\
config keys: a0, f0 (default pi/2), T (default 25), dt (default 1e-3),
             curv_window (default 10,20), grad_window (default 15,25)
vortex.csv columns: t, f, a, grad_norm, curv_norm, renorm_curv
vortex.json: {a0, f0, T, dt, alpha_hat, alpha_bracket, alpha1,
              curv_rate, grad_rate, renorm_dev_rate}
"
        .to_string(),
        "flow" => "\
config keys: t_min (default 0), t_max, n_t, n_theta, alpha (z-rotation scalar),
             l (default 0.1), bc (closed_form | north_pole, default closed_form),
             top (dirichlet | neumann, default dirichlet), tol (default 1e-8),
             max_iters (default 2000000), fit_window (default middle half),
             c_sup (default 1.0), forcing_amp (default 0), forcing_kappa (default 2)
flow_profile.csv columns: t, Theta, H, gamma, band_energy
flow_solution.csv columns: t, theta, u1, u2, u3
flow.json: {residual, iterations, energy, gamma_rate, reference_rate, rate_rel_error,
            odi_violations, odi_checked, h_max_variation, h_slack, h_mean, warnings}
exit 3 when the relaxation does not reach tol within max_iters
"
        .to_string(),
        "holonomy" => "\
config keys: kind (flat | perturbed | vortex | log_slow), dim (default 2),
             angles (flat/perturbed), radii (default 0.5,0.25,0.125),
             steps (default 2048); vortex kind also reads a0, f0, dt
holonomy.json: {kind, radii, invariant_turns, distances, tolerance, non_cauchy}
invariant_turns are rotation angles of the smallest-radius holonomy over 2 pi
"
        .to_string(),
        "fit" => "\
config keys: input (CSV path), t_column (header name, default t),
             y_column (header name), window (t_lo,t_hi)
fit.json: {rate, log_amplitude, r_squared, window, n_points, rate_spread}
"
        .to_string(),
        _ => unreachable!(),
    }
}

#[derive(Serialize)]
struct PoincareArtifact {
    angles: Vec<f64>,
    dim: usize,
    n_modes: usize,
    closed_form: f64,
    witness: Witness,
    spectral: f64,
    kernel_dim: usize,
    gap: f64,
    agree: bool,
}

pub fn cmd_poincare(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let angles = cfg.list_f64("angles")?;
    let dim = cfg.usize_or("dim", 2 * angles.len().max(1))?;
    let n_modes = cfg.usize_or("n_modes", 256)?;
    if 2 * angles.len() > dim {
        bail!("dim = {dim} too small for {} blocks", angles.len());
    }
    let alpha = SkewMatrix::from_block_angles(dim, &angles);
    let closed = poincare_constant(&standard_form(&alpha));
    let c = CircleConnection::Flat(alpha);
    let rep = covariant_spectrum(&c, n_modes)?;
    let gap = (closed.value - rep.first_positive).abs();
    let agree = gap <= POINCARE_GATE;
    let artifact = PoincareArtifact {
        angles,
        dim,
        n_modes,
        closed_form: closed.value,
        witness: closed.witness,
        spectral: rep.first_positive,
        kernel_dim: rep.kernel_dim,
        gap,
        agree,
    };
    write_json(out, "poincare.json", &artifact)?;
    Ok(if agree {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    })
}

#[derive(Serialize)]
struct VortexArtifact {
    a0: f64,
    f0: f64,
    t_end: f64,
    dt: f64,
    alpha_hat: f64,
    alpha_bracket: (f64, f64),
    alpha1: f64,
    curv_rate: DecayFit,
    grad_rate: DecayFit,
    renorm_dev_rate: DecayFit,
}

pub fn cmd_vortex(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let a0 = cfg.require_f64("a0")?;
    let f0 = cfg.f64_or("f0", std::f64::consts::FRAC_PI_2)?;
    let t_end = cfg.f64_or("T", 25.0)?;
    let dt = cfg.f64_or("dt", 1e-3)?;
    let curv_window = cfg.pair_f64("curv_window")?.unwrap_or((10.0, 20.0));
    let grad_window = cfg.pair_f64("grad_window")?.unwrap_or((15.0, 25.0));
    let traj = integrate_vortex(a0, f0, t_end, dt)?;
    let diag = diagnostics(&traj)?;
    let renorm_dev: Vec<f64> = diag.renorm_curv.iter().map(|r| (r - 1.0).abs()).collect();
    let artifact = VortexArtifact {
        a0,
        f0,
        t_end,
        dt,
        alpha_hat: diag.alpha.value,
        alpha_bracket: diag.alpha.bracket,
        alpha1: diag.alpha1,
        curv_rate: fit_exponential(&traj.t, &diag.curv, curv_window)?,
        grad_rate: fit_exponential(&traj.t, &diag.grad, grad_window)?,
        renorm_dev_rate: fit_exponential(&traj.t, &renorm_dev, curv_window)?,
    };
    write_text(out, "vortex.csv", &trajectory_csv(&traj))?;
    write_json(out, "vortex.json", &artifact)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct FlowArtifact {
    residual: f64,
    iterations: usize,
    energy: f64,
    gamma_rate: Option<f64>,
    reference_rate: f64,
    rate_rel_error: Option<f64>,
    odi_violations: usize,
    odi_checked: usize,
    h_max_variation: f64,
    h_slack: f64,
    h_mean: f64,
    warnings: Vec<String>,
}

pub fn cmd_flow(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let t_min = cfg.f64_or("t_min", 0.0)?;
    let t_max = cfg.require_f64("t_max")?;
    let n_t = cfg.usize_or("n_t", 161)?;
    let n_theta = cfg.usize_or("n_theta", 64)?;
    let alpha = cfg.require_f64("alpha")?;
    let l = cfg.f64_or("l", 0.1)?;
    let bc = cfg.string("bc", "closed_form");
    let top = cfg.string("top", "dirichlet");
    let tol = cfg.f64_or("tol", 1e-8)?;
    let max_iters = cfg.usize_or("max_iters", 2_000_000)?;
    let c_sup = cfg.f64_or("c_sup", 1.0)?;
    let forcing_amp = cfg.f64_or("forcing_amp", 0.0)?;
    let forcing_kappa = cfg.f64_or("forcing_kappa", 2.0)?;

    let grid = CylinderGrid::new(t_min, t_max, n_t, n_theta)?;
    let mut problem = match bc.as_str() {
        "closed_form" => FlowProblem::latitude_benchmark(grid, alpha, l, top == "dirichlet")?,
        "north_pole" => {
            let jz = SkewMatrix::rotation_generator(3, 0, 1);
            let pole = nalgebra::DVector::from_column_slice(&[0.0, 0.0, 1.0]);
            let low = vec![pole; n_theta];
            let high = if top == "dirichlet" {
                gaugelab::flow::TopBoundary::Dirichlet(low.clone())
            } else {
                gaugelab::flow::TopBoundary::Neumann
            };
            FlowProblem::new(
                CylinderGrid::new(t_min, t_max, n_t, n_theta)?,
                jz.scale(alpha),
                low,
                high,
            )?
        }
        other => bail!("unknown bc '{other}'"),
    }
    .with_tolerance(tol, max_iters);
    if forcing_amp != 0.0 {
        problem = problem.with_forcing(Forcing {
            f: Arc::new(move |t: f64, th: f64| {
                nalgebra::DVector::from_column_slice(&[
                    -th.sin() * forcing_amp * (-forcing_kappa * t).exp(),
                    th.cos() * forcing_amp * (-forcing_kappa * t).exp(),
                    0.0,
                ])
            }),
            kappa: forcing_kappa,
        });
    }

    let sol = relax(&problem)?;
    let fit_window = cfg.pair_f64("fit_window")?;
    // Rate fits need a long enough strip and small energy; short diagnostic
    // runs still emit the profile with a null rate.
    let fittable = (t_max - t_min) >= 12.0 && sol.energy <= sol.epsilon0 * sol.epsilon0;
    let (fit, reference_rate) = if fittable {
        let decay = decay_profile(&sol, fit_window)?;
        (decay.fit, decay.reference_rate)
    } else {
        let c = gaugelab::poincare::poincare_constant(&standard_form(&problem.alpha));
        (None, c.value.sqrt())
    };
    let odi = verify_odi(&sol, c_sup)?;
    let h = verify_h(&sol, None)?;
    let artifact = FlowArtifact {
        residual: sol.residual_sup,
        iterations: sol.iterations,
        energy: sol.energy,
        gamma_rate: fit.as_ref().map(|f| f.rate),
        reference_rate,
        rate_rel_error: fit
            .as_ref()
            .map(|f| (f.rate - reference_rate).abs() / reference_rate),
        odi_violations: odi.violations.len(),
        odi_checked: odi.checked_rows,
        h_max_variation: h.max_variation,
        h_slack: h.slack,
        h_mean: h.mean,
        warnings: sol.warnings.clone(),
    };
    write_text(out, "flow_profile.csv", &sol.profile.to_csv())?;
    write_text(out, "flow_solution.csv", &sol.field.to_csv())?;
    write_json(out, "flow.json", &artifact)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct HolonomyArtifact {
    kind: String,
    radii: Vec<f64>,
    invariant_turns: Vec<f64>,
    distances: Vec<f64>,
    tolerance: f64,
    non_cauchy: bool,
}

pub fn cmd_holonomy(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let kind = cfg.string("kind", "flat");
    let dim = cfg.usize_or("dim", 2)?;
    let radii = cfg
        .raw("radii")
        .map(|_| cfg.list_f64("radii"))
        .transpose()?
        .unwrap_or_else(|| vec![0.5, 0.25, 0.125]);
    let steps = cfg.usize_or("steps", 2048)?;

    let conn: DiskConnection = match kind.as_str() {
        "flat" => {
            let angles = cfg.list_f64("angles")?;
            let alpha = SkewMatrix::from_block_angles(dim, &angles);
            DiskConnection::angular(dim, Arc::new(move |_r, _t| alpha.clone()))
        }
        "perturbed" => {
            let angles = cfg.list_f64("angles")?;
            let alpha = SkewMatrix::from_block_angles(dim, &angles);
            let beta = SkewMatrix::rotation_generator(dim, 0, 1);
            DiskConnection::angular(
                dim,
                Arc::new(move |r, t| alpha.add(&beta.scale(r * r * (0.2 + 0.1 * t.cos())))),
            )
        }
        "vortex" => {
            let a0 = cfg.require_f64("a0")?;
            let f0 = cfg.f64_or("f0", std::f64::consts::FRAC_PI_2)?;
            let dt = cfg.f64_or("dt", 1e-3)?;
            let t_deep = radii
                .iter()
                .fold(0.0_f64, |acc, &r| acc.max(-r.ln()))
                .max(1.0)
                + 1.0;
            let traj = integrate_vortex(a0, f0, t_deep, dt)?;
            let j = SkewMatrix::rotation_generator(2, 0, 1);
            DiskConnection::angular(
                2,
                Arc::new(move |r: f64, _t| {
                    let t = -r.ln();
                    let idx = ((t / traj.dt).round() as usize).min(traj.a.len() - 1);
                    j.scale(traj.a[idx])
                }),
            )
        }
        "log_slow" => {
            let j = SkewMatrix::rotation_generator(dim.max(2), 0, 1);
            DiskConnection::angular(
                dim.max(2),
                Arc::new(move |r: f64, _t| j.scale(1.0 / (-r.ln()))),
            )
        }
        other => bail!("unknown connection kind '{other}'"),
    };
    let (inv, report) = limit_holonomy(&conn, &radii, steps)?;
    let artifact = HolonomyArtifact {
        kind,
        radii,
        invariant_turns: inv
            .rotation_angles
            .iter()
            .map(|a| a / std::f64::consts::TAU)
            .collect(),
        distances: report.distances,
        tolerance: report.tolerance,
        non_cauchy: report.non_cauchy,
    };
    write_json(out, "holonomy.json", &artifact)?;
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_fit(cfg: &Config, out: &Path) -> Result<ExitCode> {
    let input = cfg
        .raw("input")
        .ok_or_else(|| anyhow::anyhow!("missing required key 'input'"))?;
    let t_col = cfg.string("t_column", "t");
    let y_col = cfg
        .raw("y_column")
        .ok_or_else(|| anyhow::anyhow!("missing required key 'y_column'"))?;
    let window = cfg
        .pair_f64("window")?
        .ok_or_else(|| anyhow::anyhow!("missing required key 'window'"))?;

    let text = std::fs::read_to_string(input).with_context(|| format!("reading {input}"))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| anyhow::anyhow!("empty CSV"))?
        .split(',')
        .map(str::trim)
        .collect();
    let ti = header
        .iter()
        .position(|h| *h == t_col)
        .ok_or_else(|| anyhow::anyhow!("no column '{t_col}'"))?;
    let yi = header
        .iter()
        .position(|h| *h == y_col)
        .ok_or_else(|| anyhow::anyhow!("no column '{y_col}'"))?;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        ts.push(fields[ti].parse::<f64>()?);
        ys.push(fields[yi].parse::<f64>()?);
    }
    let fit = fit_exponential(&ts, &ys, window)?;
    write_json(out, "fit.json", &fit)?;
    Ok(ExitCode::SUCCESS)
}
