//! Time integration of the regularized equation
//! `∂ₜf = ∇·(∫ a_n(v−w)(f(w)∇f(v) − f(v)∇f(w)) dw) + ν Δf`
//! and the truncate–mollify–floor construction of initial data.
//!
//! Each step freezes `A = a_n ⋆ fᵏ` and solves
//!
//! ```text
//! (I − dt (∇·A∇ + νΔ)) fᵏ⁺¹ = fᵏ + dt ∇·(Jᵏ − A∇fᵏ)
//! ```
//!
//! where `J = f (A∇ln f − a_n ⋆ (f∇ln f))` is the collision flux in log
//! form. The implicit operator is symmetric negative semidefinite (the
//! centered gradient and divergence are negative adjoints), so the solve is
//! conjugate gradients. At a steady state the right-hand side reduces to
//! `∇·J`, which vanishes exactly on discrete Maxwellians.

use crate::collision::{centered_divergence, centered_gradient, CollisionOperator, MatrixField};
use crate::config::{InitialData, RunConfig};
use crate::diagnostics::{moments_and_entropy, EntropyReport};
use crate::error::{Error, Result};
use crate::fields::{DistributionField, Trajectory, VelocityGrid};
use crate::kernel::{cutoff, mat_vec, Variant};
use crate::par::map_range;
use std::f64::consts::PI;

/// Allowed deviation of the mass renormalization factor from one.
pub const RENORM_BAND: f64 = 1e-6;
const CG_MAX_ITER: usize = 500;

/// One row of the step log.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StepLog {
    pub t: f64,
    pub mass: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub energy: f64,
    pub entropy: f64,
    pub renorm_factor: f64,
    pub clipped_mass: f64,
}

impl StepLog {
    pub const HEADER: [&'static str; 9] = ["t", "mass", "px", "py", "pz", "energy", "entropy", "renorm_factor", "clipped_mass"];

    fn new(t: f64, r: &EntropyReport, renorm_factor: f64, clipped_mass: f64) -> Self {
        Self {
            t,
            mass: r.mass,
            px: r.momentum[0],
            py: r.momentum[1],
            pz: r.momentum[2],
            energy: r.energy,
            entropy: r.entropy,
            renorm_factor,
            clipped_mass,
        }
    }
}

/// Per-step numbers that are not part of the CSV log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub renorm_factor: f64,
    pub clipped_mass: f64,
    pub cg_iterations: usize,
    /// `dt · max λ(A) / h²`.
    pub cfl: f64,
}

/// `ζ_n ⋆ (ξ_n f_in) + (1/n)(2π)^{−3/2} e^{−|v|²/2}` on the grid.
///
/// `ξ(v) = 1 − X(|v|/2)` equals one on `B₁` and vanishes off `B₂`; `ξ_n = ξ(·/n)`
/// and `ζ_n ∝ ξ(n·)` is normalized to unit discrete mass, so the mollification
/// conserves the discrete mass of `ξ_n f_in` exactly.
pub fn build_initial_data(f_in: &DistributionField, n: f64) -> Result<DistributionField> {
    let grid = f_in.grid;
    if !(n >= 1.0) {
        return Err(Error::Validation(format!("initial-data index n = {n} must be >= 1")));
    }
    if let Some(i) = f_in.values.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation(format!("initial value {} at node {i} is negative or not finite", f_in.values[i])));
    }
    let xi = |r: f64| 1.0 - cutoff(r / 2.0);
    let truncated: Vec<f64> = (0..grid.len())
        .map(|i| f_in.values[i] * xi(crate::kernel::norm(grid.position(i)) / n))
        .collect();
    // mollifier stencil on the grid offsets within radius 2/n
    let h = grid.h();
    let reach = ((2.0 / n) / h).floor() as isize;
    let mut stencil = Vec::new();
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let r = h * ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                let w = xi(n * r);
                if w > 0.0 {
                    stencil.push(([dx, dy, dz], w));
                }
            }
        }
    }
    let total: f64 = stencil.iter().map(|s| s.1).sum();
    let nn = grid.n as isize;
    let mollified = map_range(grid.len(), |i| {
        let (ix, iy, iz) = grid.unindex(i);
        let mut acc = 0.0;
        for (d, w) in &stencil {
            let (jx, jy, jz) = (ix as isize - d[0], iy as isize - d[1], iz as isize - d[2]);
            if jx < 0 || jy < 0 || jz < 0 || jx >= nn || jy >= nn || jz >= nn {
                continue;
            }
            acc += w * truncated[grid.index(jx as usize, jy as usize, jz as usize)];
        }
        acc / total
    });
    let c = (2.0 * PI).powf(-1.5) / n;
    let values = (0..grid.len())
        .map(|i| {
            let v = grid.position(i);
            mollified[i] + c * (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp()
        })
        .collect();
    DistributionField::new(grid, f_in.time, values)
}

/// `u ↦ ∇·(A∇u) + νΔu` with zero extension outside the grid.
fn implicit_operator(grid: &VelocityGrid, a: &MatrixField, nu: f64, u: &[f64]) -> Vec<f64> {
    let g = centered_gradient(grid, u);
    let flux: Vec<[f64; 3]> = (0..grid.len()).map(|i| mat_vec(&a.at(i), g[i])).collect();
    let mut out = centered_divergence(grid, &flux);
    if nu > 0.0 {
        let lap = laplacian(grid, u);
        out.iter_mut().zip(lap).for_each(|(o, l)| *o += nu * l);
    }
    out
}

/// Seven-point Laplacian with zero extension.
pub fn laplacian(grid: &VelocityGrid, u: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let h2 = grid.h() * grid.h();
    let stride = [1, n, n * n];
    (0..grid.len())
        .map(|i| {
            let (ix, iy, iz) = grid.unindex(i);
            let p = [ix, iy, iz];
            let mut s = -6.0 * u[i];
            for d in 0..3 {
                if p[d] + 1 < n {
                    s += u[i + stride[d]];
                }
                if p[d] > 0 {
                    s += u[i - stride[d]];
                }
            }
            s / h2
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for `(I − dt·L) x = b`, starting from `x0`.
fn solve(grid: &VelocityGrid, a: &MatrixField, nu: f64, dt: f64, b: &[f64], x0: &[f64], tol: f64) -> Option<(Vec<f64>, usize)> {
    let apply = |u: &[f64]| -> Vec<f64> {
        let l = implicit_operator(grid, a, nu, u);
        u.iter().zip(l).map(|(x, y)| x - dt * y).collect()
    };
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    for it in 0..CG_MAX_ITER {
        if rr.sqrt() <= tol * bnorm {
            return Some((x, it));
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
    }
    if rr.sqrt() <= tol * bnorm {
        Some((x, CG_MAX_ITER))
    } else {
        None
    }
}

/// Integrator state: the operator with cached kernel spectra plus the knobs.
#[derive(Debug)]
pub struct Stepper {
    pub op: CollisionOperator,
    pub viscosity: f64,
    pub dt: f64,
    pub cg_tol: f64,
}

impl Stepper {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let op = CollisionOperator::new(cfg.grid()?, cfg.model()?, Variant::Mollified, cfg.conv)?;
        Ok(Self { op, viscosity: cfg.viscosity, dt: cfg.dt, cg_tol: cfg.cg_tol })
    }

    /// Advance by `dt`; `step_index` only labels errors.
    pub fn step(&self, f: &DistributionField, dt: f64, step_index: usize) -> Result<(DistributionField, StepInfo)> {
        let grid = self.op.grid;
        if dt == 0.0 {
            return Ok((f.clone(), StepInfo { renorm_factor: 1.0, clipped_mass: 0.0, cg_iterations: 0, cfl: 0.0 }));
        }
        let (flux, a) = self.op.entropic_flux(f);
        let g = centered_gradient(&grid, &f.values);
        let explicit: Vec<[f64; 3]> = (0..grid.len())
            .map(|i| {
                let ag = mat_vec(&a.at(i), g[i]);
                [flux[i][0] - ag[0], flux[i][1] - ag[1], flux[i][2] - ag[2]]
            })
            .collect();
        let div = centered_divergence(&grid, &explicit);
        let rhs: Vec<f64> = f.values.iter().zip(&div).map(|(x, d)| x + dt * d).collect();
        let (mut x, iters) = solve(&grid, &a, self.viscosity, dt, &rhs, &f.values, self.cg_tol).ok_or_else(|| Error::Numeric {
            step: step_index,
            reason: format!("conjugate gradients did not converge in {CG_MAX_ITER} iterations"),
        })?;
        let h3 = grid.cell_volume();
        let mut clipped = 0.0;
        for v in x.iter_mut() {
            if *v < 0.0 {
                clipped -= *v;
                *v = 0.0;
            }
        }
        let clipped_mass = clipped * h3;
        let before = f.mass();
        let after = x.iter().sum::<f64>() * h3;
        let factor = if after > 0.0 { before / after } else { 1.0 };
        if !factor.is_finite() || (factor - 1.0).abs() > RENORM_BAND {
            return Err(Error::Numeric {
                step: step_index,
                reason: format!("mass renormalization factor {factor} outside 1 ± {RENORM_BAND}"),
            });
        }
        x.iter_mut().for_each(|v| *v *= factor);
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric { step: step_index, reason: format!("non-finite value at node {i}") });
        }
        let cfl = dt * a.max_eigenvalue() / (grid.h() * grid.h());
        let out = DistributionField { grid, time: f.time + dt, values: x };
        Ok((out, StepInfo { renorm_factor: factor, clipped_mass, cg_iterations: iters, cfl }))
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub log: Vec<StepLog>,
    pub max_cfl: f64,
    pub max_cg_iterations: usize,
}

impl RunOutput {
    /// Largest entropy increase between consecutive saved snapshots.
    pub fn max_entropy_increase(&self) -> f64 {
        let saved: Vec<f64> = self.trajectory.frames().iter().map(|f| moments_and_entropy(f).entropy).collect();
        saved.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Initial data of a configuration, after the optional truncate–mollify–floor scheme.
pub fn initial_field(cfg: &RunConfig) -> Result<DistributionField> {
    let data = InitialData::from_spec(&cfg.init)?;
    let f = data.sample(cfg.grid()?)?;
    match cfg.init.n_index {
        Some(n) => build_initial_data(&f, n),
        None => Ok(f),
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let stepper = Stepper::new(cfg)?;
    let mut f = initial_field(cfg)?;
    run_from(&stepper, &mut f, cfg.n_steps(), cfg.save_stride)
}

/// Integrate `steps` steps from `f`, saving every `stride` steps.
pub fn run_from(stepper: &Stepper, f: &mut DistributionField, steps: usize, stride: usize) -> Result<RunOutput> {
    let mut frames = vec![f.clone()];
    let mut log = vec![StepLog::new(f.time, &moments_and_entropy(f), 1.0, 0.0)];
    let mut max_cfl: f64 = 0.0;
    let mut max_cg = 0;
    let t_start = f.time;
    for k in 1..=steps {
        let (next, info) = stepper.step(f, stepper.dt, k)?;
        *f = next;
        // Saved times stay on the lattice `t_start + k·dt`.
        f.time = t_start + k as f64 * stepper.dt;
        max_cfl = max_cfl.max(info.cfl);
        max_cg = max_cg.max(info.cg_iterations);
        log.push(StepLog::new(f.time, &moments_and_entropy(f), info.renorm_factor, info.clipped_mass));
        if (k % stride == 0 || k == steps) && frames.last().map(|l: &DistributionField| l.time < f.time).unwrap_or(true) {
            frames.push(f.clone());
        }
    }
    Ok(RunOutput { trajectory: Trajectory::new(frames)?, log, max_cfl, max_cg_iterations: max_cg })
}
