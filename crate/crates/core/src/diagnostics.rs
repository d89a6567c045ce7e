//! Moments, entropies, dissipations and the local inequalities evaluated on
//! rescaled solutions `f_ε(t,v) = ε² f(t₀ + ε²t, v₀ + εv)`.
//!
//! Rescaled quantities are computed on the original grid through exact changes
//! of variables: values are multiplied by `ε²`, gradients by `ε`, volume
//! elements by `ε⁻³` and time elements by `ε⁻²`. With `ε = 1` every factor is
//! exactly one, so rescaled and plain diagnostics agree bit for bit.
//!
//! Constants the analysis only proves to exist are never hard-coded. Each
//! inequality evaluator reports the smallest constant that makes it hold on
//! the data (`implied_c0`, `implied_c1`, the measured ellipticity constant).

use crate::collision::{CollisionOperator, LOG_FLOOR};
use crate::conv::{convolve, ConvPath, OffsetKernel};
use crate::error::{Error, Result};
use crate::fields::{gradient, hat_weights, time_sup, DistributionField, ParabolicCylinder, Trajectory, VelocityGrid};
use crate::kernel::{cutoff_prime, norm, sym_eigenvalues, KernelModel, Variant, Vec3, CUTOFF_MAX_SLOPE};
use serde::Serialize;
use std::f64::consts::PI;

/// `∫_{[−½,½]³} |z|⁻¹ dz`, the self-cell contribution of `1/|z|` on a unit cell.
pub const CUBE_INV_R: f64 = 2.380077363979553;

/// Moments and entropies of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EntropyReport {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
    /// `∫ f ln f`.
    pub entropy: f64,
    /// `∫ f ln₊ f`.
    pub entropy_plus: f64,
}

impl EntropyReport {
    /// `H̄ = H + E + 3 ln(2π) M + 1`.
    pub fn h_bar(&self) -> f64 {
        self.entropy + self.energy + 3.0 * (2.0 * PI).ln() * self.mass + 1.0
    }
}

pub fn moments_and_entropy(f: &DistributionField) -> EntropyReport {
    let grid = f.grid;
    let h3 = grid.cell_volume();
    let mut r = EntropyReport::default();
    for (i, &x) in f.values.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let v = grid.position(i);
        r.mass += x;
        for d in 0..3 {
            r.momentum[d] += x * v[d];
        }
        r.energy += x * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        let l = x.ln();
        r.entropy += x * l;
        r.entropy_plus += x * l.max(0.0);
    }
    r.mass *= h3;
    r.momentum.iter_mut().for_each(|p| *p *= h3);
    r.energy *= h3;
    r.entropy *= h3;
    r.entropy_plus *= h3;
    r
}

pub fn ln_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// `h₊^κ(r) = r ln₊(r/κ) − (r − κ)₊`.
pub fn h_plus(r: f64, kappa: f64) -> f64 {
    if r <= kappa {
        0.0
    } else {
        r * (r / kappa).ln() - (r - kappa)
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("kappa = {kappa} must be >= 1")));
    }
    Ok(())
}

/// `∫ h₊^κ(f)`.
pub fn truncated_entropy(f: &DistributionField, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(f.values.iter().map(|&x| h_plus(x, kappa)).sum::<f64>() * f.grid.cell_volume())
}

/// `∇ ln₊(f/κ)`, zero where `f ≤ κ`.
pub fn truncated_log_gradient(f: &DistributionField, kappa: f64) -> Vec<Vec3> {
    f.gradient_of(|x| ln_plus(x / kappa))
}

/// `½ ∬ |F₊^κ|²` by explicit pairs (`stride` subsamples both nodes).
pub fn truncated_dissipation(op: &CollisionOperator, f: &DistributionField, kappa: f64, stride: usize) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(op.dissipation_pairs_with(f, &truncated_log_gradient(f, kappa), stride)?.total)
}

/// Same quantity as [`truncated_dissipation`] through the convolution identity.
pub fn truncated_dissipation_conv(op: &CollisionOperator, f: &DistributionField, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let (e, _) = op.dissipation_density_with(f, &truncated_log_gradient(f, kappa))?;
    Ok(0.5 * e.iter().sum::<f64>() * f.grid.cell_volume())
}

/// `max_{v ∈ B} (f_ε ⋆ k(ε|·|)𝟙_{|·|≥1}/|·|)(v)` for a field already on the rescaled grid.
pub fn z_functional(f_eps: &DistributionField, eps: f64, model: &KernelModel, domain: &ParabolicCylinder) -> f64 {
    let grid = f_eps.grid;
    let kernel = OffsetKernel::sample(&grid, |z| {
        let r = norm(z);
        if r >= 1.0 {
            model.k(eps * r) / r
        } else {
            0.0
        }
    });
    let z = convolve(&grid, &kernel, &f_eps.values, ConvPath::Auto);
    grid.ball_nodes(domain.v0, domain.r).into_iter().map(|i| z[i]).fold(0.0, f64::max)
}

/// `M ε^{−γ*}`, the bound on `Z[f_ε]` for a solution of total mass `M`.
pub fn z_global_bound(mass: f64, eps: f64, model: &KernelModel) -> f64 {
    mass * eps.powf(-model.gamma_star())
}

/// `Z[f_ε](v̄) = ∫ f(w) k(|v−w|)/|v−w| 𝟙_{|v−w|≥ε} dw` on the original grid.
pub fn z_unscaled(f: &DistributionField, eps: f64, model: &KernelModel) -> Vec<f64> {
    let kernel = OffsetKernel::sample(&f.grid, |z| {
        let r = norm(z);
        if r >= eps && r > 0.0 {
            model.k(r) / r
        } else {
            0.0
        }
    });
    convolve(&f.grid, &kernel, &f.values, ConvPath::Auto)
}

/// `(f_ε ⋆ 𝟙_{B₁}/|·|)(v̄) = ∫ f(w) 𝟙_{|v−w|<ε}/|v−w| dw` on the original grid.
///
/// The singular self cell contributes `f(v)·min(2πε², CUBE_INV_R·h²)`: exact
/// when `B_ε` fits in the cell or covers it, an upper value in between.
pub fn short_range_unscaled(f: &DistributionField, eps: f64) -> Vec<f64> {
    let h = f.grid.h();
    let kernel = OffsetKernel::sample(&f.grid, |z| {
        let r = norm(z);
        if r > 0.0 && r < eps {
            1.0 / r
        } else {
            0.0
        }
    });
    let self_cell = (2.0 * PI * eps * eps).min(CUBE_INV_R * h * h);
    let mut out = convolve(&f.grid, &kernel, &f.values, ConvPath::Auto);
    out.iter_mut().zip(&f.values).for_each(|(o, x)| *o += x * self_cell);
    out
}

/// The rescaled view `f_ε` of a trajectory around `(t₀, v₀)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledView<'a> {
    pub traj: &'a Trajectory,
    pub t0: f64,
    pub v0: Vec3,
    pub eps: f64,
}

impl<'a> ScaledView<'a> {
    pub fn new(traj: &'a Trajectory, t0: f64, v0: Vec3, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Domain(format!("eps = {eps} outside (0, 1]")));
        }
        Ok(Self { traj, t0, v0, eps })
    }

    /// Fails unless `Q_r(0,0)` maps inside the saved times and the grid.
    pub fn check(&self, r: f64) -> Result<()> {
        let e = self.eps;
        self.traj.check_window(self.t0 - e * e * r * r, self.t0)?;
        let (lo, hi) = self.traj.grid().node_range();
        for d in 0..3 {
            if self.v0[d] - e * r < lo || self.v0[d] + e * r > hi {
                return Err(Error::Window(format!(
                    "ball of radius {} around v0 leaves the grid on axis {d}",
                    e * r
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> VelocityGrid {
        self.traj.grid()
    }

    /// `f_ε` at the nodes of one saved frame.
    pub fn values(&self, frame: &DistributionField) -> Vec<f64> {
        let s = self.eps * self.eps;
        frame.values.iter().map(|x| s * x).collect()
    }

    /// `∇_v̄ u` for `u` given on the original nodes.
    pub fn gradient(&self, u: &[f64]) -> Vec<Vec3> {
        let e = self.eps;
        gradient(&self.grid(), u).into_iter().map(|g| [e * g[0], e * g[1], e * g[2]]).collect()
    }

    /// For a rescaled density `G`, returns `(sup_t ∫_{B_r} G, ∫_{Q_r} G)`.
    /// `density(k, frame)` gives `G` at every node of frame `k`.
    pub fn integrate(&self, r: f64, mut density: impl FnMut(usize, &DistributionField) -> Vec<f64>) -> (f64, f64) {
        let e = self.eps;
        let grid = self.grid();
        let times = self.traj.times();
        let a = self.t0 - e * e * r * r;
        let b = self.t0;
        let nodes = grid.ball_nodes(self.v0, e * r);
        let dv = grid.cell_volume() / (e * e * e);
        let weights = hat_weights(&times, a, b);
        let first = times.partition_point(|&t| t <= a).saturating_sub(1);
        let last = times.partition_point(|&t| t < b).min(times.len() - 1);
        let mut spatial = vec![0.0; times.len()];
        for k in first..=last {
            let g = density(k, &self.traj.frames()[k]);
            spatial[k] = nodes.iter().map(|&i| g[i]).sum::<f64>() * dv;
        }
        let integral = weights.iter().zip(&spatial).map(|(w, s)| w * s).sum::<f64>() / (e * e);
        (time_sup(&times, &spatial, a, b), integral)
    }
}

/// Terms of the rescaled suitable entropy inequality, without the constant `C₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledEntropyTerms {
    pub lhs_sup: f64,
    pub lhs_diss: f64,
    pub rhs_t1: f64,
    pub rhs_t2: f64,
    pub rhs_t3: f64,
    /// `(lhs_sup + lhs_diss)/(rhs_t1 + rhs_t2 + rhs_t3)`; zero when both sides vanish.
    pub implied_c0: f64,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// `f(ln₊(f/κ) + ln₊²(f/κ))`.
fn log_weight(x: f64, kappa: f64) -> f64 {
    let l = ln_plus(x / kappa);
    x * (l + l * l)
}

/// Evaluate
///
/// ```text
/// sup_t ∫_{B_r} h₊^κ(f_ε) + ∬_{Q_r} |∇(f_ε − κ)₊|²/f_ε
///   ≤ C₀ (κ + δ⁻²) ∬_{Q_{r+δ}} I + C₀ δ⁻² ∬ Z[f_ε] I + C₀ δ⁻² ∬ (f_ε ⋆ 𝟙_{B₁}/|·|) I
/// ```
///
/// with `I = f_ε(ln₊(f_ε/κ) + ln₊²(f_ε/κ))`, and report the implied `C₀`.
#[allow(clippy::too_many_arguments)]
pub fn scaled_entropy_inequality(
    traj: &Trajectory,
    t0: f64,
    v0: Vec3,
    eps: f64,
    kappa: f64,
    r: f64,
    delta: f64,
    model: &KernelModel,
) -> Result<ScaledEntropyTerms> {
    if !(1.0..=2.0).contains(&kappa) {
        return Err(Error::Domain(format!("kappa_eps = {kappa} outside [1, 2]")));
    }
    if !(r > 0.0 && r <= 2.0) {
        return Err(Error::Domain(format!("r_eps = {r} outside (0, 2]")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta_eps = {delta} outside (0, 1]")));
    }
    let view = ScaledView::new(traj, t0, v0, eps)?;
    view.check(r + delta)?;

    let (lhs_sup, _) = view.integrate(r, |_, f| view.values(f).iter().map(|&x| h_plus(x, kappa)).collect());
    let (_, lhs_diss) = view.integrate(r, |_, f| {
        let fe = view.values(f);
        let excess: Vec<f64> = fe.iter().map(|&x| (x - kappa).max(0.0)).collect();
        let floor = LOG_FLOOR * fe.iter().cloned().fold(0.0, f64::max);
        view.gradient(&excess)
            .iter()
            .zip(&fe)
            .map(|(g, &x)| if x > floor { (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) / x } else { 0.0 })
            .collect()
    });
    let weight = |f: &DistributionField| -> Vec<f64> { view.values(f).iter().map(|&x| log_weight(x, kappa)).collect() };
    let big = r + delta;
    let (_, plain) = view.integrate(big, |_, f| weight(f));
    let (_, with_z) = view.integrate(big, |_, f| {
        let z = z_unscaled(f, eps, model);
        weight(f).iter().zip(z).map(|(w, z)| w * z).collect()
    });
    let (_, with_short) = view.integrate(big, |_, f| {
        let s = short_range_unscaled(f, eps);
        weight(f).iter().zip(s).map(|(w, s)| w * s).collect()
    });
    let d2 = delta * delta;
    let rhs_t1 = (kappa + 1.0 / d2) * plain;
    let rhs_t2 = with_z / d2;
    let rhs_t3 = with_short / d2;
    Ok(ScaledEntropyTerms {
        lhs_sup,
        lhs_diss,
        rhs_t1,
        rhs_t2,
        rhs_t3,
        implied_c0: ratio(lhs_sup + lhs_diss, rhs_t1 + rhs_t2 + rhs_t3),
    })
}

/// `M(t,v) = (λ² − t)^{−3/2} exp(−|v|²/(4(λ² − t)))`, a backward heat kernel.
pub fn heat_kernel(t: f64, v: Vec3, lambda: f64) -> Result<f64> {
    let s = lambda * lambda - t;
    if !(s > 0.0) {
        return Err(Error::Domain(format!("lambda^2 - t = {s} must be positive")));
    }
    let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    Ok(s.powf(-1.5) * (-r2 / (4.0 * s)).exp())
}

/// `(5λ²)^{−3/2} e^{−1}`, a lower bound for the heat kernel on `Q_{2λ}`.
pub fn heat_kernel_floor(lambda: f64) -> f64 {
    (5.0 * lambda * lambda).powf(-1.5) / std::f64::consts::E
}

/// Terms of the local mass estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalMassTerms {
    pub lambda: f64,
    /// `‖f_ε‖_{L^∞_t L¹_v(Q_{2λ})}`.
    pub mass_inner: f64,
    /// `mass_inner / λ³`; the estimate bounds this by `C₁` times the sum of the terms.
    pub lhs: f64,
    /// `‖f_ε‖_{L^∞_t L¹_v(Q₂)}`.
    pub mass_outer: f64,
    /// `‖F_ε‖_{L²(Q₂ × ℝ³)}`.
    pub f_norm: f64,
    /// `‖∇√f_ε‖²_{L²(Q₂)}`.
    pub grad_sqrt: f64,
    /// `(1 + λ⁻⁴‖F_ε‖) ‖f_ε‖_{L^∞L¹(Q₂)}`.
    pub term_mass: f64,
    /// `λ⁻⁸ (‖F_ε‖² + 1) ‖∇√f_ε‖²`.
    pub term_grad: f64,
    /// `λ⁻⁸ (k(ε)/ε) ‖F_ε‖²`.
    pub term_k: f64,
    pub implied_c1: f64,
}

/// Evaluate the local mass estimate for `f_ε` around `(t₀, v₀)`.
///
/// `F_ε` uses the kernel of `op`; pass the full kernel for the unregularized
/// quantity or the mollified one to match a regularized run.
pub fn local_mass_estimate(traj: &Trajectory, t0: f64, v0: Vec3, eps: f64, lambda: f64, op: &CollisionOperator) -> Result<LocalMassTerms> {
    if !(lambda > 0.0 && lambda < 0.25) {
        return Err(Error::Domain(format!("lambda = {lambda} outside (0, 1/4)")));
    }
    let view = ScaledView::new(traj, t0, v0, eps)?;
    view.check(2.0)?;
    let (mass_inner, _) = view.integrate(2.0 * lambda, |_, f| view.values(f));
    let (mass_outer, _) = view.integrate(2.0, |_, f| view.values(f));
    let e4 = eps.powi(4);
    let mut failure = None;
    let (_, f_sq) = view.integrate(2.0, |_, f| match op.dissipation_density(f) {
        Ok((e, _)) => e.into_iter().map(|x| e4 * x).collect(),
        Err(err) => {
            failure = Some(err);
            vec![0.0; f.values.len()]
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    let (_, grad_sqrt) = view.integrate(2.0, |_, f| {
        let root: Vec<f64> = view.values(f).iter().map(|x| x.sqrt()).collect();
        view.gradient(&root).iter().map(|g| g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).collect()
    });
    let f_norm = f_sq.sqrt();
    let l4 = lambda.powi(4);
    let l8 = l4 * l4;
    let term_mass = (1.0 + f_norm / l4) * mass_outer;
    let term_grad = (f_sq + 1.0) * grad_sqrt / l8;
    let term_k = op.model.k(eps) / eps * f_sq / l8;
    let lhs = mass_inner / lambda.powi(3);
    Ok(LocalMassTerms {
        lambda,
        mass_inner,
        lhs,
        mass_outer,
        f_norm,
        grad_sqrt,
        term_mass,
        term_grad,
        term_k,
        implied_c1: ratio(lhs, term_mass + term_grad + term_k),
    })
}

/// `Ψ(v) = amplitude · (1 − X(|v − center|/radius))`: one on `B_{radius/2}`, zero off `B_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Bump {
    pub center: Vec3,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn value(&self, v: Vec3) -> f64 {
        let r = crate::fields::dist(v, self.center) / self.radius;
        self.amplitude * (1.0 - crate::kernel::cutoff(r))
    }

    pub fn grad_norm(&self, v: Vec3) -> f64 {
        let r = crate::fields::dist(v, self.center) / self.radius;
        self.amplitude.abs() * cutoff_prime(r) / self.radius
    }

    /// Bound on `|∇Ψ|`.
    pub fn grad_bound(&self) -> f64 {
        self.amplitude.abs() * CUTOFF_MAX_SLOPE / self.radius
    }
}

/// Both sides of the local entropy dissipation estimate with `F = f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationLowerBound {
    /// `½ ∬ f(v)f(w) a_out(v−w) : (Ψ∇ln f(v) − Ψ∇ln f(w))^{⊗2}`.
    pub lhs: f64,
    /// `∫ |∇f|²/f · k(|v|+R₀)(1+|v|)⁻³ Ψ²`.
    pub weighted_gradient: f64,
    /// `40 k(δ)/δ³ (∫ f (Ψ + δ|∇Ψ|))²`.
    pub penalty: f64,
    /// `min λ_min(A_out(v)) (1+|v|)³ / k(|v|+R₀)` over the support of `Ψ`.
    pub c0_measured: f64,
    /// `c0_measured · weighted_gradient − penalty`.
    pub rhs: f64,
}

pub fn entropy_dissipation_lower_bound(
    f: &DistributionField,
    delta: f64,
    psi: &Bump,
    r0: f64,
    model: &KernelModel,
) -> Result<DissipationLowerBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta = {delta} outside (0, 1)")));
    }
    let grid = f.grid;
    let model = KernelModel::new(model.gamma, delta, model.n_reg)?;
    let op = CollisionOperator::new(grid, model, Variant::OutPart, ConvPath::Auto)?;
    let h3 = grid.cell_volume();
    let psi_v: Vec<f64> = (0..grid.len()).map(|i| psi.value(grid.position(i))).collect();
    let g: Vec<Vec3> = crate::collision::log_gradient(f)
        .into_iter()
        .zip(&psi_v)
        .map(|(g, p)| [p * g[0], p * g[1], p * g[2]])
        .collect();
    let (e, _) = op.dissipation_density_with(f, &g)?;
    let lhs = 0.5 * e.iter().sum::<f64>() * h3;

    let a = op.diffusion_matrix(f)?;
    let grad = gradient(&grid, &f.values);
    let floor = LOG_FLOOR * f.max();
    let mut weighted = 0.0;
    let mut c0 = f64::INFINITY;
    let mut mass_term = 0.0;
    for i in 0..grid.len() {
        let v = grid.position(i);
        let x = f.values[i];
        mass_term += x * (psi_v[i] + delta * psi.grad_norm(v));
        if psi_v[i] == 0.0 || x <= floor {
            continue;
        }
        let s = norm(v);
        let w = model.k(s + r0) / (1.0 + s).powi(3);
        let gi = grad[i];
        weighted += (gi[0] * gi[0] + gi[1] * gi[1] + gi[2] * gi[2]) / x * w * psi_v[i] * psi_v[i];
        c0 = c0.min(sym_eigenvalues(&a.at(i))[0] / w);
    }
    weighted *= h3;
    mass_term *= h3;
    if !c0.is_finite() {
        c0 = 0.0;
    }
    let penalty = 40.0 * model.k(delta) / delta.powi(3) * mass_term * mass_term;
    Ok(DissipationLowerBound { lhs, weighted_gradient: weighted, penalty, c0_measured: c0, rhs: c0 * weighted - penalty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::maxwellian;

    fn gaussian(n: usize, l: f64) -> DistributionField {
        let grid = VelocityGrid::new(n, l).unwrap();
        DistributionField::from_fn(grid, 0.0, |v| maxwellian(v, 1.0, [0.0; 3], 1.0))
    }

    #[test]
    fn gaussian_moments() {
        let r = moments_and_entropy(&gaussian(32, 6.0));
        assert!((r.mass - 1.0).abs() < 1e-6);
        assert!(r.momentum.iter().all(|p| p.abs() < 1e-6));
        assert!((r.energy - 3.0).abs() < 1e-6);
        let exact = -1.5 * (2.0 * PI).ln() - 1.5;
        assert!((r.entropy - exact).abs() < 1e-4);
        assert_eq!(r.entropy_plus, 0.0);
    }

    #[test]
    fn zero_field_moments() {
        let grid = VelocityGrid::new(8, 1.0).unwrap();
        assert_eq!(moments_and_entropy(&DistributionField::zeros(grid, 0.0)), EntropyReport::default());
    }

    #[test]
    fn h_plus_values() {
        assert_eq!(h_plus(std::f64::consts::E, 1.0), 1.0);
        assert_eq!(h_plus(2.0, 2.0), 0.0);
        assert_eq!(h_plus(0.3, 1.5), 0.0);
        let grid = VelocityGrid::new(8, 1.0).unwrap();
        let f = DistributionField::from_fn(grid, 0.0, |_| 1.7);
        assert_eq!(truncated_entropy(&f, 1.7).unwrap(), 0.0);
        assert!(matches!(truncated_entropy(&f, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn cube_constant() {
        // midpoint rule on a refined cube, symmetric so the singular centre is never sampled
        let m = 200;
        let s = 1.0 / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let x = -0.5 + (i as f64 + 0.5) * s;
                    let y = -0.5 + (j as f64 + 0.5) * s;
                    let z = -0.5 + (k as f64 + 0.5) * s;
                    acc += 1.0 / (x * x + y * y + z * z).sqrt();
                }
            }
        }
        assert!((acc * s * s * s - CUBE_INV_R).abs() < 2e-3);
    }

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(0.0, [0.0; 3], 0.5).unwrap() - 8.0).abs() < 1e-12);
        assert!(heat_kernel(0.3, [0.0; 3], 0.5).is_err());
    }

    #[test]
    fn z_point_mass() {
        let grid = VelocityGrid::new(16, 4.0).unwrap();
        let mut f = DistributionField::zeros(grid, 0.0);
        let j = grid.index(12, 8, 8);
        f.values[j] = 3.0;
        let model = KernelModel::coulomb(1.0);
        let eps: f64 = 0.25;
        let dom = ParabolicCylinder::new(0.0, grid.position(grid.index(4, 8, 8)), 0.1).unwrap();
        let d = 8.0 * grid.h();
        let expect = 3.0 * eps.powf(model.gamma + 3.0) * d.powf(model.gamma + 2.0) * grid.cell_volume();
        assert!((z_functional(&f, eps, &model, &dom) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn z_vanishes_for_close_support() {
        let grid = VelocityGrid::new(8, 0.4).unwrap();
        let f = DistributionField::from_fn(grid, 0.0, |_| 1.0);
        let model = KernelModel::coulomb(1.0);
        let dom = ParabolicCylinder::new(0.0, [0.0; 3], 0.2).unwrap();
        assert_eq!(z_functional(&f, 0.5, &model, &dom), 0.0);
    }

    #[test]
    fn bump_gradient_bound() {
        let b = Bump { center: [0.0; 3], radius: 2.0, amplitude: 1.0 };
        for k in 0..200 {
            let v = [k as f64 / 100.0, 0.0, 0.0];
            assert!(b.grad_norm(v) <= b.grad_bound());
        }
        assert_eq!(b.value([0.5, 0.0, 0.0]), 1.0);
        assert_eq!(b.value([2.5, 0.0, 0.0]), 0.0);
    }
}
