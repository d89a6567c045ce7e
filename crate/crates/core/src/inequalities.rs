//! Executable forms of the functional inequalities used as lemmas:
//! interpolation, short-range control, nonlinearization and the iteration
//! sum. Constants the analysis leaves implicit are reported as measured
//! ratios; explicit constants are asserted.

use crate::conv::{convolve, ConvPath, OffsetKernel};
use crate::error::{Error, Result};
use crate::fields::{gradient, hat_weights, time_sup, DistributionField, Trajectory};
use crate::kernel::{norm, Vec3};
use serde::Serialize;
use std::f64::consts::PI;

/// A space-time window `[t_start, t_end] × B_radius(center)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
    pub center: Vec3,
    pub radius: f64,
}

/// Both sides of an inequality `lhs ≤ C·rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sides {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs/rhs`, zero when both vanish.
    pub ratio: f64,
    /// `rhs − lhs`.
    pub margin: f64,
}

impl Sides {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        Self { lhs, rhs, ratio, margin: rhs - lhs }
    }
}

/// Per-frame spatial values aggregated in time over a window.
struct Frames<'a> {
    traj: &'a Trajectory,
    times: Vec<f64>,
    weights: Vec<f64>,
    a: f64,
    b: f64,
}

impl<'a> Frames<'a> {
    fn new(traj: &'a Trajectory, w: &Window) -> Result<Self> {
        if !(w.radius > 0.0) || !(w.t_end > w.t_start) {
            return Err(Error::Validation(format!(
                "window needs t_end > t_start and a positive radius, got [{}, {}] and r = {}",
                w.t_start, w.t_end, w.radius
            )));
        }
        traj.check_window(w.t_start, w.t_end)?;
        let times = traj.times();
        let weights = hat_weights(&times, w.t_start, w.t_end);
        Ok(Self { traj, times, weights, a: w.t_start, b: w.t_end })
    }

    /// Frames that can carry weight, with their index.
    fn active(&self) -> impl Iterator<Item = (usize, &'a DistributionField)> + '_ {
        let first = self.times.partition_point(|&t| t <= self.a).saturating_sub(1);
        let last = self.times.partition_point(|&t| t < self.b).min(self.times.len() - 1);
        (first..=last).map(move |k| (k, &self.traj.frames()[k]))
    }

    fn values(&self, per_frame: impl Fn(&DistributionField) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.times.len()];
        for (k, f) in self.active() {
            out[k] = per_frame(f);
        }
        out
    }

    fn l1(&self, s: &[f64]) -> f64 {
        self.weights.iter().zip(s).map(|(w, x)| w * x).sum()
    }

    fn lq(&self, s: &[f64], q: f64) -> f64 {
        self.weights.iter().zip(s).map(|(w, x)| w * x.powf(q)).sum::<f64>().powf(1.0 / q)
    }

    fn sup(&self, s: &[f64]) -> f64 {
        time_sup(&self.times, s, self.a, self.b)
    }
}

fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p >= 1.0 && q >= 1.0) || 1.0 / p + 2.0 / (3.0 * q) < 1.0 - 1e-12 {
        return Err(Error::Domain(format!("exponents p = {p}, q = {q} violate p, q >= 1 and 1/p + 2/(3q) >= 1")));
    }
    Ok(())
}

fn ball_lp(f: &DistributionField, values: &[f64], nodes: &[usize], p: f64) -> f64 {
    let h3 = f.grid.cell_volume();
    (nodes.iter().map(|&i| values[i].abs().powf(p)).sum::<f64>() * h3).powf(1.0 / p)
}

fn grad_sq_sum(f: &DistributionField, u: &[f64], nodes: &[usize]) -> f64 {
    let g = gradient(&f.grid, u);
    nodes.iter().map(|&i| g[i][0] * g[i][0] + g[i][1] * g[i][1] + g[i][2] * g[i][2]).sum::<f64>() * f.grid.cell_volume()
}

/// `‖f‖_{L^q_t L^p_v}` against `‖f‖_{L^∞_t L¹_v} + ‖∇√f‖²_{L²}` on the window.
pub fn interpolation_check(traj: &Trajectory, w: &Window, p: f64, q: f64) -> Result<Sides> {
    check_exponents(p, q)?;
    let fr = Frames::new(traj, w)?;
    let nodes = traj.grid().ball_nodes(w.center, w.radius);
    let lp = fr.values(|f| ball_lp(f, &f.values, &nodes, p));
    let l1 = fr.values(|f| ball_lp(f, &f.values, &nodes, 1.0));
    let grad = fr.values(|f| {
        let root: Vec<f64> = f.values.iter().map(|x| x.max(0.0).sqrt()).collect();
        grad_sq_sum(f, &root, &nodes)
    });
    Ok(Sides::new(fr.lq(&lp, q), fr.sup(&l1) + fr.l1(&grad)))
}

/// `(8π/(3(2−ρ)))^{2/3} δ^{2−ρ}`.
pub fn short_range_constant(delta: f64, rho: f64) -> f64 {
    (8.0 * PI / (3.0 * (2.0 - rho))).powf(2.0 / 3.0) * delta.powf(2.0 - rho)
}

/// `∫_{[−h/2,h/2]³} |z|^{−ρ} 𝟙{|z| < δ} dz`: exact on the inscribed ball,
/// a 32³ midpoint rule on the rest of the cell.
fn self_cell_integral(h: f64, delta: f64, rho: f64) -> f64 {
    let r_in = (h / 2.0).min(delta);
    4.0 * PI * r_in.powf(3.0 - rho) / (3.0 - rho) + cell_integral([0.0; 3], h, delta, rho, 32, h / 2.0)
}

/// Midpoint rule with `m³` points for `∫_{c+[−h/2,h/2]³} |z|^{−ρ} 𝟙{r_min ≤ |z| < δ} dz`.
fn cell_integral(c: Vec3, h: f64, delta: f64, rho: f64, m: usize, r_min: f64) -> f64 {
    let s = h / m as f64;
    let at = |a: usize| (a as f64 + 0.5) * s - h / 2.0;
    let mut total = 0.0;
    for a in 0..m {
        for b in 0..m {
            for k in 0..m {
                let r = norm([c[0] + at(a), c[1] + at(b), c[2] + at(k)]);
                if r >= r_min && r < delta {
                    total += r.powf(-rho);
                }
            }
        }
    }
    total * s * s * s
}

/// Cell average of `|z|^{−ρ} 𝟙{|z| < δ}` over the cell centred at offset `z`.
/// Sub-sampling is finer on cells cut by the sphere or close to the origin.
fn cell_average(z: Vec3, h: f64, delta: f64, rho: f64) -> f64 {
    let r = norm(z);
    let half_diag = 0.5 * 3f64.sqrt() * h;
    if r == 0.0 {
        return self_cell_integral(h, delta, rho) / (h * h * h);
    }
    if r - half_diag >= delta {
        return 0.0;
    }
    let m = if r + half_diag > delta || r < 2.5 * h { 16 } else { 4 };
    cell_integral(z, h, delta, rho, m, 0.0) / (h * h * h)
}

/// `‖f ⋆ 𝟙_{B_δ}/|·|^ρ‖_{L¹_t L^∞_v(I×B)}` against
/// `(8π/(3(2−ρ)))^{2/3} δ^{2−ρ} ‖f‖_{L¹_t L³_v(I×(B+B_δ))}`.
///
/// The kernel enters through its cell averages, so the left side is the
/// convolution of the piecewise-constant interpolant of `f`; by Jensen the
/// discrete `ℓ^{3/2}` norm of the averaged kernel stays below the continuum
/// constant. The right-hand ball is widened by the cell half-diagonal to
/// hold every cell the averaged kernel reaches.
pub fn short_range_check(traj: &Trajectory, w: &Window, delta: f64, rho: f64) -> Result<Sides> {
    if !(rho > 0.0 && rho < 2.0) || !(delta > 0.0) {
        return Err(Error::Domain(format!("need 0 < rho < 2 and delta > 0, got rho = {rho}, delta = {delta}")));
    }
    let fr = Frames::new(traj, w)?;
    let grid = traj.grid();
    let h = grid.h();
    let kernel = OffsetKernel::sample(&grid, |z| cell_average(z, h, delta, rho));
    let inner = grid.ball_nodes(w.center, w.radius);
    let outer = grid.ball_nodes(w.center, w.radius + delta + 0.5 * 3f64.sqrt() * h);
    let sup = fr.values(|f| {
        let u = convolve(&grid, &kernel, &f.values, ConvPath::Auto);
        inner.iter().map(|&i| u[i]).fold(0.0, f64::max)
    });
    let l3 = fr.values(|f| ball_lp(f, &f.values, &outer, 3.0));
    Ok(Sides::new(fr.l1(&sup), short_range_constant(delta, rho) * fr.l1(&l3)))
}

fn check_levels(kappa: f64, kappa_bar: f64) -> Result<()> {
    if !(kappa >= 1.0 && kappa < kappa_bar && kappa_bar < kappa + 1.0) {
        return Err(Error::Domain(format!("levels need 1 <= kappa < kappa_bar < kappa + 1, got {kappa}, {kappa_bar}")));
    }
    Ok(())
}

/// `G = min(r, r²)` at `r = (√g − √κ)₊`.
pub fn g_plus(g: f64, kappa: f64) -> f64 {
    let r = (g.max(0.0).sqrt() - kappa.sqrt()).max(0.0);
    r.min(r * r)
}

/// `((g − κ̄)₊, 6κ̄/(√κ̄ − √κ)⁴ · G²)`.
pub fn nonlinearization_pointwise(g: f64, kappa: f64, kappa_bar: f64) -> Result<(f64, f64)> {
    check_levels(kappa, kappa_bar)?;
    let d = kappa_bar.sqrt() - kappa.sqrt();
    Ok(((g - kappa_bar).max(0.0), 6.0 * kappa_bar / d.powi(4) * g_plus(g, kappa).powi(2)))
}

/// `(G², (g − κ)₊)`.
pub fn g_plus_upper(g: f64, kappa: f64) -> (f64, f64) {
    (g_plus(g, kappa).powi(2), (g - kappa).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonlinearizationReport {
    pub nodes_checked: usize,
    pub pointwise_violations: usize,
    pub upper_violations: usize,
    /// `‖(g − κ̄)₊‖_{L^q_t L^p_v}` against
    /// `κ̄/(√κ̄ − √κ)⁴ (‖(g − κ)₊‖_{L^∞_t L¹_v} + ‖∇(√g − √κ)₊‖²_{L²})`.
    pub norms: Sides,
}

pub fn nonlinearization_check(traj: &Trajectory, w: &Window, kappa: f64, kappa_bar: f64, p: f64, q: f64) -> Result<NonlinearizationReport> {
    check_levels(kappa, kappa_bar)?;
    check_exponents(p, q)?;
    let fr = Frames::new(traj, w)?;
    let nodes = traj.grid().ball_nodes(w.center, w.radius);
    let (mut checked, mut pointwise, mut upper) = (0, 0, 0);
    for (_, f) in fr.active() {
        for &i in &nodes {
            let g = f.values[i];
            let (l, r) = nonlinearization_pointwise(g, kappa, kappa_bar)?;
            pointwise += usize::from(l > r * (1.0 + 1e-12));
            let (l, r) = g_plus_upper(g, kappa);
            upper += usize::from(l > r * (1.0 + 1e-12));
            checked += 1;
        }
    }
    let lhs_s = fr.values(|f| {
        let x: Vec<f64> = f.values.iter().map(|g| (g - kappa_bar).max(0.0)).collect();
        ball_lp(f, &x, &nodes, p)
    });
    let mass_s = fr.values(|f| {
        let x: Vec<f64> = f.values.iter().map(|g| (g - kappa).max(0.0)).collect();
        ball_lp(f, &x, &nodes, 1.0)
    });
    let grad_s = fr.values(|f| {
        let x: Vec<f64> = f.values.iter().map(|g| (g.max(0.0).sqrt() - kappa.sqrt()).max(0.0)).collect();
        grad_sq_sum(f, &x, &nodes)
    });
    let d = kappa_bar.sqrt() - kappa.sqrt();
    let rhs = kappa_bar / d.powi(4) * (fr.sup(&mass_s) + fr.l1(&grad_s));
    Ok(NonlinearizationReport {
        nodes_checked: checked,
        pointwise_violations: pointwise,
        upper_violations: upper,
        norms: Sides::new(fr.lq(&lhs_s, q), rhs),
    })
}

/// `Σ_{i<n} (n−i)β^i` summed directly and in closed form
/// `(β−1)⁻²(β^{n+1} − (n+1)(β−1) − 1)`.
pub fn iteration_sum(beta: f64, n: u32) -> Result<(f64, f64)> {
    if !(beta > 1.0) || n < 1 {
        return Err(Error::Domain(format!("need beta > 1 and n >= 1, got beta = {beta}, n = {n}")));
    }
    let direct = (0..n).map(|i| (n - i) as f64 * beta.powi(i as i32)).sum();
    let b1 = beta - 1.0;
    let closed = (beta.powi(n as i32 + 1) - (n as f64 + 1.0) * b1 - 1.0) / (b1 * b1);
    Ok((direct, closed))
}
