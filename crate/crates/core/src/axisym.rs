//! Axisymmetric reduction and the off-axis boundedness pipeline.
//!
//! A field symmetric about the axis `v̄ + ℝω` is stored as a profile
//! `𝓕(ρ, v₃)` on a 2-D grid with `ρ = |(v − v̄)×ω|` and `v₃ = (v − v̄)·ω`.
//! The long-range potential bound, the cylindrical-shell bound on
//! `∫_{Q₃} f_ε²` and the ε ladder of the De Giorgi criterion away from the
//! axis are evaluated on saved trajectories.

use crate::diagnostics::{ln_plus, moments_and_entropy, short_range_unscaled, ScaledView};
use crate::error::{Error, Result};
use crate::fields::{hat_weights, DistributionField, Trajectory, VelocityGrid};
use crate::kernel::{norm, KernelModel, Vec3};
use crate::regularity::{degiorgi_certify, z_sup, Certification};
use serde::Serialize;
use std::f64::consts::{LN_2, PI, SQRT_2};

/// `C* = 8√2π²`.
pub const C_STAR: f64 = 8.0 * SQRT_2 * PI * PI;

/// Number of equispaced angles in each circle average.
pub const ANGLES: usize = 64;

pub const AXISYM_MAGIC: [u8; 4] = *b"LNDA";
pub const AXISYM_VERSION: u32 = 1;
pub const AXISYM_HEADER: usize = 4 + 4 + 4 + 4 + 4 * 8 + 6 * 8;

/// The line `base + ℝ·direction`, with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub base: Vec3,
    pub direction: Vec3,
}

impl Axis {
    pub fn new(base: Vec3, direction: Vec3) -> Result<Self> {
        let n = norm(direction);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Validation("axis direction must be a nonzero finite vector".into()));
        }
        Ok(Self { base, direction: [direction[0] / n, direction[1] / n, direction[2] / n] })
    }

    /// `(ρ, v₃)` of a point.
    pub fn coords(&self, v: Vec3) -> (f64, f64) {
        let d = [v[0] - self.base[0], v[1] - self.base[1], v[2] - self.base[2]];
        let w = self.direction;
        let along = d[0] * w[0] + d[1] * w[1] + d[2] * w[2];
        let c = [d[1] * w[2] - d[2] * w[1], d[2] * w[0] - d[0] * w[2], d[0] * w[1] - d[1] * w[0]];
        (norm(c), along)
    }

    /// Two unit vectors completing `ω` to an orthonormal frame.
    pub fn frame(&self) -> (Vec3, Vec3) {
        let w = self.direction;
        let seed = if w[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let dot = seed[0] * w[0] + seed[1] * w[1] + seed[2] * w[2];
        let e1 = [seed[0] - dot * w[0], seed[1] - dot * w[1], seed[2] - dot * w[2]];
        let n1 = norm(e1);
        let e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
        let e2 = [w[1] * e1[2] - w[2] * e1[1], w[2] * e1[0] - w[0] * e1[2], w[0] * e1[1] - w[1] * e1[0]];
        (e1, e2)
    }

    /// The point with cylindrical coordinates `(ρ, θ, v₃)`.
    pub fn point(&self, rho: f64, theta: f64, along: f64) -> Vec3 {
        let (e1, e2) = self.frame();
        let (s, c) = theta.sin_cos();
        let mut p = self.base;
        for d in 0..3 {
            p[d] += along * self.direction[d] + rho * (c * e1[d] + s * e2[d]);
        }
        p
    }
}

/// Nodes `ρ_i = i·d_rho` for `i < n_rho` and `v₃_k = z0 + k·dz` for `k < n_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisGrid {
    pub n_rho: usize,
    pub d_rho: f64,
    pub n_z: usize,
    pub z0: f64,
    pub dz: f64,
}

impl AxisGrid {
    pub fn new(n_rho: usize, d_rho: f64, n_z: usize, z0: f64, dz: f64) -> Result<Self> {
        if n_rho < 2 || n_z < 2 || !(d_rho > 0.0) || !(dz > 0.0) || !z0.is_finite() {
            return Err(Error::Validation(format!(
                "axis grid needs at least 2x2 nodes and positive spacings, got {n_rho}x{n_z}, d_rho = {d_rho}, dz = {dz}"
            )));
        }
        Ok(Self { n_rho, d_rho, n_z, z0, dz })
    }

    /// Spacing `h/refine`, wide enough to hold every node of `grid`.
    pub fn covering(grid: &VelocityGrid, axis: &Axis, refine: usize) -> Self {
        let d = grid.h() / refine.max(1) as f64;
        let l = grid.half_extent;
        let reach = (3.0f64).sqrt() * l + norm(axis.base);
        let n_rho = (reach / d).ceil() as usize + 2;
        Self { n_rho, d_rho: d, n_z: 2 * n_rho - 1, z0: -(n_rho as f64 - 1.0) * d, dz: d }
    }

    pub fn len(&self) -> usize {
        self.n_rho * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rho(&self, i: usize) -> f64 {
        i as f64 * self.d_rho
    }

    pub fn z(&self, k: usize) -> f64 {
        self.z0 + k as f64 * self.dz
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.n_z + k
    }
}

/// An axisymmetric snapshot `𝓕(t, ρ, v₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisymField {
    pub axis: Axis,
    pub grid: AxisGrid,
    pub time: f64,
    pub values: Vec<f64>,
}

impl AxisymField {
    pub fn new(axis: Axis, grid: AxisGrid, time: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Validation(format!("expected {} values, found {}", grid.len(), values.len())));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("non-finite value {x}")));
        }
        Ok(Self { axis, grid, time, values })
    }

    pub fn from_fn(axis: Axis, grid: AxisGrid, time: f64, profile: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_rho {
            for k in 0..grid.n_z {
                values.push(profile(grid.rho(i), grid.z(k)));
            }
        }
        Self { axis, grid, time, values }
    }

    /// Bilinear interpolation in `(ρ, v₃)`; zero outside the grid.
    pub fn value_at(&self, rho: f64, z: f64) -> f64 {
        let g = &self.grid;
        // Points within rounding of the outer nodes snap onto them.
        const SNAP: f64 = 1e-9;
        let (top_s, top_u) = ((g.n_rho - 1) as f64, (g.n_z - 1) as f64);
        let s = rho / g.d_rho;
        let u = (z - g.z0) / g.dz;
        if s < -SNAP || u < -SNAP || s > top_s + SNAP || u > top_u + SNAP {
            return 0.0;
        }
        let (s, u) = (s.clamp(0.0, top_s), u.clamp(0.0, top_u));
        let i = (s.floor() as usize).min(g.n_rho - 2);
        let k = (u.floor() as usize).min(g.n_z - 2);
        let a = s - i as f64;
        let b = u - k as f64;
        let v = |di: usize, dk: usize| self.values[g.index(i + di, k + dk)];
        (1.0 - a) * ((1.0 - b) * v(0, 0) + b * v(0, 1)) + a * ((1.0 - b) * v(1, 0) + b * v(1, 1))
    }

    /// `f(v) = 𝓕(|(v−v̄)×ω|, (v−v̄)·ω)`.
    pub fn eval(&self, v: Vec3) -> f64 {
        let (rho, z) = self.axis.coords(v);
        self.value_at(rho, z)
    }
}

/// Circle averages of `f` over [`ANGLES`] equispaced angles with trilinear sampling.
///
/// The residual is `max over circles of (max − min)` divided by the largest
/// sample, zero for a vanishing field.
pub fn cylindrical_reduce(f: &DistributionField, axis: &Axis, grid: AxisGrid) -> (AxisymField, f64) {
    cylindrical_reduce_with(|v| f.interpolate(v), f.time, axis, grid)
}

pub fn cylindrical_reduce_with(sample: impl Fn(Vec3) -> f64, time: f64, axis: &Axis, grid: AxisGrid) -> (AxisymField, f64) {
    let (e1, e2) = axis.frame();
    let w = axis.direction;
    let trig: Vec<(f64, f64)> = (0..ANGLES).map(|j| (2.0 * PI * j as f64 / ANGLES as f64).sin_cos()).collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut spread: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..grid.n_rho {
        let rho = grid.rho(i);
        for k in 0..grid.n_z {
            let z = grid.z(k);
            let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
            for &(s, c) in &trig {
                let mut p = axis.base;
                for d in 0..3 {
                    p[d] += z * w[d] + rho * (c * e1[d] + s * e2[d]);
                }
                let x = sample(p);
                sum += x;
                lo = lo.min(x);
                hi = hi.max(x);
            }
            values.push(sum / ANGLES as f64);
            spread = spread.max(hi - lo);
            scale = scale.max(hi.abs()).max(lo.abs());
        }
    }
    let residual = if scale > 0.0 { spread / scale } else { 0.0 };
    (AxisymField { axis: *axis, grid, time, values }, residual)
}

/// The 3-D field `v ↦ 𝓕(ρ(v), v₃(v))` on `grid`.
pub fn reconstruct(axi: &AxisymField, grid: VelocityGrid) -> DistributionField {
    DistributionField::from_fn(grid, axi.time, |v| axi.eval(v))
}

pub fn write_axisym(field: &AxisymField) -> Vec<u8> {
    let g = &field.grid;
    let mut out = Vec::with_capacity(AXISYM_HEADER + 8 * field.values.len());
    out.extend_from_slice(&AXISYM_MAGIC);
    out.extend_from_slice(&AXISYM_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n_rho as u32).to_le_bytes());
    out.extend_from_slice(&(g.n_z as u32).to_le_bytes());
    for x in [g.d_rho, g.z0, g.dz, field.time] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in field.axis.base.iter().chain(&field.axis.direction) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_axisym(bytes: &[u8]) -> Result<AxisymField> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: AXISYM_HEADER, found: bytes.len() });
    }
    let found: [u8; 4] = bytes[0..4].try_into().unwrap();
    if found != AXISYM_MAGIC {
        return Err(Error::BadMagic { expected: AXISYM_MAGIC, found });
    }
    if bytes.len() < AXISYM_HEADER {
        return Err(Error::Truncated { expected: AXISYM_HEADER, found: bytes.len() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != AXISYM_VERSION {
        return Err(Error::BadVersion(version));
    }
    let (n_rho, n_z) = (u32_at(8) as usize, u32_at(12) as usize);
    let (d_rho, z0, dz, time) = (f64_at(16), f64_at(24), f64_at(32), f64_at(40));
    let base = [f64_at(48), f64_at(56), f64_at(64)];
    let direction = [f64_at(72), f64_at(80), f64_at(88)];
    let grid = AxisGrid::new(n_rho, d_rho, n_z, z0, dz)?;
    let expected = AXISYM_HEADER + 8 * grid.len();
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    let values = bytes[AXISYM_HEADER..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    AxisymField::new(Axis::new(base, direction)?, grid, time, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularMode {
    ExactQuadrature,
    ArsinhBound,
}

/// `∫₀^π 𝟙{A² + 2B²(1−cos θ) ≤ σ₀²} / √(A² + 2B²(1−cos θ)) dθ`, or its bound
/// `π/(2B)·(ln 2 + ln₊(σ₀/A))`.
pub fn angular_interaction_integral(a: f64, b: f64, sigma0: f64, mode: AngularMode) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("B = {b} must be positive")));
    }
    if !(a >= 0.0) || !(sigma0 > 0.0) {
        return Err(Error::Domain(format!("need A >= 0 and sigma0 > 0, got A = {a}, sigma0 = {sigma0}")));
    }
    match mode {
        AngularMode::ArsinhBound => {
            if a == 0.0 {
                return Err(Error::Domain("the bound needs A > 0".into()));
            }
            Ok(PI / (2.0 * b) * (LN_2 + ln_plus(sigma0 / a)))
        }
        AngularMode::ExactQuadrature => {
            if a >= sigma0 {
                return Ok(0.0);
            }
            if a == 0.0 {
                return Ok(f64::INFINITY);
            }
            // A² + 4B² sin²(θ/2) = σ₀² at θ*.
            let s = ((sigma0 * sigma0 - a * a) / (4.0 * b * b)).sqrt();
            let theta_star = if s >= 1.0 { PI } else { 2.0 * s.asin() };
            let g = |t: f64| {
                let h = (t / 2.0).sin();
                1.0 / (a * a + 4.0 * b * b * h * h).sqrt()
            };
            Ok(adaptive_simpson(&g, 0.0, theta_star, 1e-13))
        }
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `σ₀ = ρ₀/(2√2π)`.
pub fn sigma0(rho0: f64) -> f64 {
    rho0 / (2.0 * SQRT_2 * PI)
}

/// Whether `(ρ_v, ρ)` lies in `[ρ₀/2, 3ρ₀/2] × [ρ₀/4, 2ρ₀]`.
pub fn rho_window(rho0: f64, rho_v: f64, rho: f64) -> bool {
    (0.5 * rho0..=1.5 * rho0).contains(&rho_v) && (0.25 * rho0..=2.0 * rho0).contains(&rho)
}

/// `p ln₊p + e^q − pq`, non-negative for `p, q > 0`.
pub fn fenchel_margin(p: f64, q: f64) -> f64 {
    p * ln_plus(p) + q.exp() - p * q
}

/// `(π/2)y − arcsin y`, non-negative on `[0, 1]`.
pub fn arcsin_margin(y: f64) -> f64 {
    PI / 2.0 * y - y.asin()
}

fn off_axis_distance(axis: &Axis, v0: Vec3) -> Result<f64> {
    let (rho0, _) = axis.coords(v0);
    if !(rho0 > 1e-12 * (1.0 + norm(v0))) {
        return Err(Error::OnAxis(format!("point {v0:?} is at distance {rho0} from the axis")));
    }
    Ok(rho0)
}

/// `(f ⋆ 1/|·|)` on the nodes, the singular self cell included.
fn coulomb_potential(f: &DistributionField) -> Vec<f64> {
    short_range_unscaled(f, f64::INFINITY)
}

/// `sup_t ∫ f(1 + ln₊f)` over the saved frames.
pub fn sup_mass_entropy_plus(traj: &Trajectory) -> f64 {
    traj.frames()
        .iter()
        .map(|f| {
            let r = moments_and_entropy(f);
            r.mass + r.entropy_plus
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LongRangeReport {
    pub rho0: f64,
    pub eps: f64,
    pub sigma0: f64,
    /// Grid maximum of `f_ε ⋆ 1/|·|` over `Q₁`.
    pub measured_sup: f64,
    /// `(C*/ρ₀) sup_t ∫ f(1 + ln₊f) + C*ρ₀²`.
    pub analytic_bound: f64,
    pub margin: f64,
    pub holds: bool,
    /// Spacing of the saved frames the time supremum runs over.
    pub save_interval: f64,
}

/// Long-range potential away from the axis against its explicit bound.
pub fn long_range_bound(traj: &Trajectory, axis: &Axis, t0: f64, v0: Vec3, eps: f64) -> Result<LongRangeReport> {
    let rho0 = off_axis_distance(axis, v0)?;
    if !(eps > 0.0 && eps < (rho0 / 2.0).min(t0.max(0.0).sqrt())) {
        return Err(Error::Domain(format!("eps = {eps} outside (0, rho0/2 ∧ √t0) with rho0 = {rho0}, t0 = {t0}")));
    }
    let view = ScaledView::new(traj, t0, v0, eps)?;
    view.check(1.0)?;
    let nodes = traj.grid().ball_nodes(v0, eps);
    let a = t0 - eps * eps;
    let mut measured_sup: f64 = 0.0;
    for f in traj.frames() {
        if f.time < a || f.time > t0 + 1e-9 * (1.0 + t0.abs()) {
            continue;
        }
        // `f_ε ⋆ 1/|·|(v̄) = ∫ f(w)/|v − w| dw` with `v = v₀ + εv̄`.
        let u = coulomb_potential(f);
        measured_sup = nodes.iter().map(|&i| u[i]).fold(measured_sup, f64::max);
    }
    let analytic_bound = C_STAR / rho0 * sup_mass_entropy_plus(traj) + C_STAR * rho0 * rho0;
    Ok(LongRangeReport {
        rho0,
        eps,
        sigma0: sigma0(rho0),
        measured_sup,
        analytic_bound,
        margin: analytic_bound - measured_sup,
        holds: measured_sup <= analytic_bound,
        save_interval: traj.save_interval(),
    })
}

/// A 2-D parabolic cylinder `(t₀ − r², t₀] × {|V − V₀| < r}` in the `(ρ, v₃)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cylinder2d {
    pub t0: f64,
    pub center: (f64, f64),
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    /// `‖𝓕‖_{L²(𝒬_r)}`.
    pub l2_norm: f64,
    /// `‖𝓕‖²_{L²_t L¹_V(𝒬_r)}`.
    pub l1_sq: f64,
    /// `(2πρ₀)⁻² ∫ ‖f(t)‖²_{L¹(B_{r₁}(0, V₂⁰))} dt`.
    pub l1_sq_bound: f64,
    /// `‖∇_V 𝓕‖²_{L²_t L¹_V(𝒬_r)}`.
    pub grad_l1_sq: f64,
    /// `(2πρ₀)⁻² ∫ ‖∇_v f(t)‖²_{L¹(B_{r₁}(0, V₂⁰))} dt`.
    pub grad_l1_sq_bound: f64,
}

fn check_series(series: &[AxisymField]) -> Result<()> {
    let first = series.first().ok_or_else(|| Error::Validation("empty axisymmetric series".into()))?;
    for w in series.windows(2) {
        if !(w[1].time > w[0].time) {
            return Err(Error::Validation("axisymmetric frame times must increase".into()));
        }
        if w[1].grid != first.grid || w[1].axis != first.axis {
            return Err(Error::Validation("axisymmetric frames must share grid and axis".into()));
        }
    }
    Ok(())
}

/// Norms of `𝓕` on a 2-D cylinder kept at distance `ρ₀` from the axis.
///
/// The comparison norms of the 3-D field are computed from the same profile
/// with the cylindrical volume element `2πρ dρ dv₃`.
pub fn improved_integrability(series: &[AxisymField], cyl: Cylinder2d, rho0: f64) -> Result<IntegrabilityReport> {
    check_series(series)?;
    let (v1, v2) = cyl.center;
    if !(rho0 > 0.0) || !(cyl.r > 0.0) || !(v1 > cyl.r + rho0) {
        return Err(Error::Validation(format!(
            "cylinder must stay at distance rho0 = {rho0} from the axis: need V1 > r + rho0, got V1 = {v1}, r = {}",
            cyl.r
        )));
    }
    let times: Vec<f64> = series.iter().map(|a| a.time).collect();
    let (a, b) = (cyl.t0 - cyl.r * cyl.r, cyl.t0);
    if a < times[0] - 1e-12 || b > times[times.len() - 1] + 1e-12 {
        return Err(Error::Window(format!("time window [{a}, {b}] outside saved frames")));
    }
    let g = series[0].grid;
    let cell = g.d_rho * g.dz;
    let r1 = ((v1 + cyl.r).powi(2) + cyl.r * cyl.r).sqrt();
    let weights = hat_weights(&times, a, b);
    let mut rep = IntegrabilityReport { l2_norm: 0.0, l1_sq: 0.0, l1_sq_bound: 0.0, grad_l1_sq: 0.0, grad_l1_sq_bound: 0.0 };
    for (field, &w) in series.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let (mut sq, mut l1, mut gl1, mut big, mut gbig) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..g.n_rho {
            let rho = g.rho(i);
            for k in 0..g.n_z {
                let z = g.z(k);
                let x = field.values[g.index(i, k)];
                let grad = profile_gradient(field, i, k);
                if (rho - v1).powi(2) + (z - v2).powi(2) < cyl.r * cyl.r {
                    sq += x * x * cell;
                    l1 += x.abs() * cell;
                    gl1 += grad * cell;
                }
                if rho * rho + (z - v2).powi(2) <= r1 * r1 {
                    let jac = 2.0 * PI * rho * cell;
                    big += x.abs() * jac;
                    gbig += grad * jac;
                }
            }
        }
        let k = (2.0 * PI * rho0).powi(-2);
        rep.l2_norm += w * sq;
        rep.l1_sq += w * l1 * l1;
        rep.grad_l1_sq += w * gl1 * gl1;
        rep.l1_sq_bound += w * k * big * big;
        rep.grad_l1_sq_bound += w * k * gbig * gbig;
    }
    rep.l2_norm = rep.l2_norm.sqrt();
    Ok(rep)
}

/// `|∇_V 𝓕|` at a node, centered inside and one-sided on the edges.
fn profile_gradient(field: &AxisymField, i: usize, k: usize) -> f64 {
    let g = &field.grid;
    let v = |i: usize, k: usize| field.values[g.index(i, k)];
    let diff = |lo: f64, hi: f64, span: f64| (hi - lo) / span;
    let dr = match i {
        0 => 0.0,
        _ if i + 1 == g.n_rho => diff(v(i - 1, k), v(i, k), g.d_rho),
        _ => diff(v(i - 1, k), v(i + 1, k), 2.0 * g.d_rho),
    };
    let dz = match k {
        0 => diff(v(i, 0), v(i, 1), g.dz),
        _ if k + 1 == g.n_z => diff(v(i, k - 1), v(i, k), g.dz),
        _ => diff(v(i, k - 1), v(i, k + 1), 2.0 * g.dz),
    };
    (dr * dr + dz * dz).sqrt()
}

/// `∫_{t₀−9ε²}^{t₀} ∫_{ρ₀−3ε}^{ρ₀+3ε} ∫_{v₃⁰−3ε}^{v₃⁰+3ε} 𝓕² ds dρ dw₃` by an
/// `m × m` midpoint rule in `(ρ, w₃)` and hat weights in time.
pub fn shell_integral(series: &[AxisymField], t0: f64, rho0: f64, z0: f64, eps: f64, m: usize) -> Result<f64> {
    check_series(series)?;
    let times: Vec<f64> = series.iter().map(|a| a.time).collect();
    let a = t0 - 9.0 * eps * eps;
    if a < times[0] - 1e-12 || t0 > times[times.len() - 1] + 1e-12 {
        return Err(Error::Window(format!("time window [{a}, {t0}] outside saved frames")));
    }
    let weights = hat_weights(&times, a, t0);
    let side = 6.0 * eps;
    let cell = (side / m as f64).powi(2);
    let mut total = 0.0;
    for (field, &w) in series.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let mut s = 0.0;
        for p in 0..m {
            let rho = rho0 - 3.0 * eps + (p as f64 + 0.5) * side / m as f64;
            for q in 0..m {
                let z = z0 - 3.0 * eps + (q as f64 + 0.5) * side / m as f64;
                s += field.value_at(rho, z).powi(2);
            }
        }
        total += w * s * cell;
    }
    Ok(total)
}

/// `Z₀ = 1 + 2(1−γ*)M₀ + (C*γ*/ρ₀)(2M₀ + H̄₀) + C*γ*ρ₀²`.
pub fn z0_constant(model: &KernelModel, rho0: f64, m0: f64, h_bar0: f64) -> f64 {
    let gs = model.gamma_star();
    1.0 + 2.0 * (1.0 - gs) * m0 + C_STAR * gs / rho0 * (2.0 * m0 + h_bar0) + C_STAR * gs * rho0 * rho0
}

/// Knobs of [`off_axis_criterion`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffAxisOptions {
    /// `η_DG` in the threshold `η_DG Z₀^{−3/2}`.
    pub eta: f64,
    /// Number of ladder rungs `ε_k = ρ₀/8 · 2^{−k}`.
    pub ladder: usize,
    /// Allowed excess of `f_ε` over 2 before a resolution alert.
    pub slack: f64,
    /// Circle-average residual above which the field counts as non-axisymmetric.
    pub residual_tol: f64,
    /// Midpoint nodes per side of the shell square.
    pub shell_nodes: usize,
}

impl Default for OffAxisOptions {
    fn default() -> Self {
        Self { eta: 0.5, ladder: 4, slack: 0.05, residual_tol: 0.05, shell_nodes: 24 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RungStatus {
    Evaluated,
    /// `ε ≥ √t₀/3`.
    TooEarly,
    /// Grid spacing above `ε`.
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderStep {
    pub eps: f64,
    pub status: RungStatus,
    /// `∫_{Q₃} f_ε²` on the 3-D grid.
    pub direct_q3: f64,
    pub shell_integral: f64,
    /// `3π(ρ₀+3)/ρ₀ ×` the shell integral.
    pub shell_bound: f64,
    pub shell_holds: bool,
    /// `max(1, sup_{Q₁} Z[f_ε])`, to compare with `Z₀`.
    pub z_measured: f64,
    pub certification: Option<Certification>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffAxisVerdict {
    pub point: Vec3,
    pub t0: f64,
    pub rho0: f64,
    pub z0: f64,
    pub m0: f64,
    pub h_bar0: f64,
    pub long_range: Option<LongRangeReport>,
    pub residual: f64,
    pub axisymmetric: bool,
    pub steps: Vec<LadderStep>,
    /// First rung that certifies boundedness near the point.
    pub certified_eps: Option<f64>,
}

impl OffAxisVerdict {
    pub fn certified(&self) -> bool {
        self.certified_eps.is_some()
    }

    pub fn shell_violations(&self) -> usize {
        self.steps.iter().filter(|s| s.status == RungStatus::Evaluated && !s.shell_holds).count()
    }
}

/// The off-axis boundedness criterion along the ladder `ε_k = ρ₀/8 · 2^{−k}`.
///
/// `Z₀` uses the measured `sup_t ∫f` for `M₀` and `sup_t ∫ f ln₊f` for `H̄₀`.
/// Fails with an on-axis error for points on the axis and with a window
/// error when the grid cannot resolve the first rung.
pub fn off_axis_criterion(
    traj: &Trajectory,
    axis: &Axis,
    t0: f64,
    v0: Vec3,
    model: &KernelModel,
    opts: &OffAxisOptions,
) -> Result<OffAxisVerdict> {
    let rho0 = off_axis_distance(axis, v0)?;
    let (_, along0) = axis.coords(v0);
    let mut m0: f64 = 0.0;
    let mut h_bar0: f64 = 0.0;
    for f in traj.frames() {
        let r = moments_and_entropy(f);
        m0 = m0.max(r.mass);
        h_bar0 = h_bar0.max(r.entropy_plus);
    }
    let z0 = z0_constant(model, rho0, m0, h_bar0);
    let threshold_eta = opts.eta;
    let grid = traj.grid();
    let h = grid.h();
    let axis_grid = AxisGrid::covering(&grid, axis, 2);

    let mut steps = Vec::new();
    let mut residual: f64 = 0.0;
    let mut certified_eps = None;
    for k in 0..opts.ladder {
        let eps = rho0 / 8.0 * 0.5f64.powi(k as i32);
        let mut step = LadderStep {
            eps,
            status: RungStatus::Evaluated,
            direct_q3: 0.0,
            shell_integral: 0.0,
            shell_bound: 0.0,
            shell_holds: true,
            z_measured: 0.0,
            certification: None,
        };
        if eps >= t0.max(0.0).sqrt() / 3.0 {
            step.status = RungStatus::TooEarly;
            steps.push(step);
            continue;
        }
        if h > eps {
            step.status = RungStatus::Unresolved;
            steps.push(step);
            break;
        }
        let view = ScaledView::new(traj, t0, v0, eps)?;
        view.check(3.0)?;
        let (_, direct) = view.integrate(3.0, |_, f| view.values(f).iter().map(|x| x * x).collect());
        let a = t0 - 9.0 * eps * eps;
        let series: Vec<AxisymField> = window_frames(traj, a, t0)
            .map(|f| {
                let (axi, res) = cylindrical_reduce(f, axis, axis_grid);
                residual = residual.max(res);
                axi
            })
            .collect();
        let shell = shell_integral(&series, t0, rho0, along0, eps, opts.shell_nodes)?;
        step.direct_q3 = direct;
        step.shell_integral = shell;
        step.shell_bound = 3.0 * PI * (rho0 + 3.0) / rho0 * shell;
        step.shell_holds = direct <= step.shell_bound;
        step.z_measured = z_sup(&view, model)?;
        let cert = degiorgi_certify(&view, z0, threshold_eta, opts.slack)?;
        if cert.certified() && certified_eps.is_none() {
            certified_eps = Some(eps);
        }
        step.certification = Some(cert);
        steps.push(step);
    }
    if !steps.iter().any(|s| s.status == RungStatus::Evaluated) {
        if let Some(s) = steps.iter().find(|s| s.status == RungStatus::Unresolved) {
            return Err(Error::Window(format!("grid spacing {h} cannot resolve eps = {} at rho0 = {rho0}", s.eps)));
        }
    }
    let long_range = {
        let eps = rho0 / 8.0;
        if eps < t0.max(0.0).sqrt() {
            long_range_bound(traj, axis, t0, v0, eps).ok()
        } else {
            None
        }
    };
    Ok(OffAxisVerdict {
        point: v0,
        t0,
        rho0,
        z0,
        m0,
        h_bar0,
        long_range,
        residual,
        axisymmetric: residual <= opts.residual_tol,
        steps,
        certified_eps,
    })
}

/// Frames whose hat weight on `[a, b]` can be nonzero.
fn window_frames(traj: &Trajectory, a: f64, b: f64) -> impl Iterator<Item = &DistributionField> {
    let times = traj.times();
    let first = times.partition_point(|&t| t <= a).saturating_sub(1);
    let last = times.partition_point(|&t| t < b).min(times.len() - 1);
    traj.frames()[first..=last].iter()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ring_profile;

    fn z_axis() -> Axis {
        Axis::new([0.0; 3], [0.0, 0.0, 1.0]).unwrap()
    }

    fn tilted() -> Axis {
        Axis::new([0.1, -0.2, 0.05], [1.0, 2.0, 2.0]).unwrap()
    }

    #[test]
    fn c_star_value() {
        assert!((C_STAR - 111.66).abs() < 5e-3);
    }

    #[test]
    fn frame_is_orthonormal() {
        let ax = tilted();
        let (e1, e2) = ax.frame();
        let dot = |a: Vec3, b: Vec3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        for (a, b, want) in [(e1, e1, 1.0), (e2, e2, 1.0), (e1, e2, 0.0), (e1, ax.direction, 0.0), (e2, ax.direction, 0.0)] {
            assert!((dot(a, b) - want).abs() < 1e-14);
        }
        let p = ax.point(0.7, 1.3, -0.4);
        let (rho, z) = ax.coords(p);
        assert!((rho - 0.7).abs() < 1e-14 && (z + 0.4).abs() < 1e-14);
    }

    #[test]
    fn axisymmetric_input_has_small_residual() {
        let g = VelocityGrid::new(32, 4.0).unwrap();
        let ax = tilted();
        let f = DistributionField::from_fn(g, 0.0, |v| {
            let (rho, z) = ax.coords(v);
            ring_profile(rho, z, 1.5, 0.6)
        });
        let (_, res) = cylindrical_reduce(&f, &ax, AxisGrid::covering(&g, &ax, 1));
        assert!(res < 5e-2, "residual {res}");
        let radial = DistributionField::from_fn(g, 0.0, |v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp());
        for ax in [z_axis(), Axis::new([0.0; 3], [1.0, 1.0, 0.0]).unwrap()] {
            let (_, res) = cylindrical_reduce(&radial, &ax, AxisGrid::covering(&g, &ax, 1));
            assert!(res < 0.05, "radial residual {res}");
        }
    }

    #[test]
    fn residual_decays_at_second_order() {
        let ax = Axis::new([0.0; 3], [0.0, 1.0, 1.0]).unwrap();
        let res = |n: usize| {
            let g = VelocityGrid::new(n, 4.0).unwrap();
            let f = DistributionField::from_fn(g, 0.0, |v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp());
            cylindrical_reduce(&f, &ax, AxisGrid::covering(&g, &ax, 1)).1
        };
        let (coarse, fine) = (res(16), res(32));
        assert!(coarse / fine > 3.0, "{coarse} -> {fine}");
    }

    #[test]
    fn exact_profile_round_trip() {
        let ax = tilted();
        let grid = AxisGrid::new(40, 0.1, 61, -3.0, 0.1).unwrap();
        let axi = AxisymField::from_fn(ax, grid, 0.5, |rho, z| ring_profile(rho, z, 1.5, 0.4));
        let (once, res) = cylindrical_reduce_with(|v| axi.eval(v), axi.time, &ax, grid);
        assert!(res < 1e-12, "residual {res}");
        for (a, b) in once.values.iter().zip(&axi.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let (twice, _) = cylindrical_reduce_with(|v| once.eval(v), once.time, &ax, grid);
        for (a, b) in twice.values.iter().zip(&once.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruction_matches_axisymmetric_field() {
        let g = VelocityGrid::new(32, 4.0).unwrap();
        let ax = z_axis();
        let f = DistributionField::from_fn(g, 0.0, |v| {
            let (rho, z) = ax.coords(v);
            ring_profile(rho, z, 2.0, 0.7)
        });
        let (axi, _) = cylindrical_reduce(&f, &ax, AxisGrid::covering(&g, &ax, 2));
        let back = reconstruct(&axi, g);
        let scale = f.max();
        let err = back.values.iter().zip(&f.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.05 * scale, "max error {err} vs scale {scale}");
    }

    #[test]
    fn lnda_round_trip_and_errors() {
        let ax = tilted();
        let grid = AxisGrid::new(5, 0.2, 7, -0.6, 0.2).unwrap();
        let axi = AxisymField::from_fn(ax, grid, 1.25, |rho, z| rho + 2.0 * z);
        let bytes = write_axisym(&axi);
        assert_eq!(bytes.len(), AXISYM_HEADER + 35 * 8);
        assert_eq!(read_axisym(&bytes).unwrap(), axi);
        let mut bad = bytes.clone();
        bad[3] = b'F';
        assert!(matches!(read_axisym(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_axisym(&bad), Err(Error::BadVersion(9))));
        assert!(matches!(read_axisym(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn angular_empty_and_bound() {
        let e = angular_interaction_integral(0.3, 1.0, 0.2, AngularMode::ExactQuadrature).unwrap();
        assert_eq!(e, 0.0);
        let e = angular_interaction_integral(0.1, 1.0, 0.2, AngularMode::ExactQuadrature).unwrap();
        let b = angular_interaction_integral(0.1, 1.0, 0.2, AngularMode::ArsinhBound).unwrap();
        assert!(e > 0.0 && e <= b, "{e} vs {b}");
        assert!(matches!(angular_interaction_integral(0.1, 0.0, 0.2, AngularMode::ExactQuadrature), Err(Error::Domain(_))));
    }

    #[test]
    fn angular_quadrature_matches_closed_form_when_b_small() {
        // Full circle inside the indicator: ∫₀^π dθ/√(A² + 4B² sin²(θ/2)) = (2/√(A²+4B²)) K(4B²/(A²+4B²)).
        let (a, b) = (1.0, 0.3);
        let exact = angular_interaction_integral(a, b, 10.0, AngularMode::ExactQuadrature).unwrap();
        let m = 4.0 * b * b / (a * a + 4.0 * b * b);
        // Arithmetic-geometric mean: K(m) = π / (2 agm(1, √(1−m))).
        let (mut x, mut y) = (1.0f64, (1.0 - m).sqrt());
        for _ in 0..30 {
            (x, y) = ((x + y) / 2.0, (x * y).sqrt());
        }
        let k = PI / (2.0 * x);
        let want = 2.0 / (a * a + 4.0 * b * b).sqrt() * k;
        assert!((exact - want).abs() < 1e-10, "{exact} vs {want}");
    }

    #[test]
    fn off_axis_rejects_axis_points() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let traj = Trajectory::new(vec![DistributionField::zeros(g, 0.0), DistributionField::zeros(g, 1.0)]).unwrap();
        let model = KernelModel::coulomb(2.0);
        let err = off_axis_criterion(&traj, &z_axis(), 1.0, [0.0, 0.0, 0.5], &model, &OffAxisOptions::default());
        assert!(matches!(err, Err(Error::OnAxis(_))));
        assert!(matches!(long_range_bound(&traj, &z_axis(), 1.0, [0.0; 3], 0.1), Err(Error::OnAxis(_))));
    }

    #[test]
    fn long_range_zero_field() {
        let g = VelocityGrid::new(16, 3.0).unwrap();
        let traj = Trajectory::new(vec![DistributionField::zeros(g, 0.0), DistributionField::zeros(g, 1.0)]).unwrap();
        let r = long_range_bound(&traj, &z_axis(), 1.0, [1.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(r.measured_sup, 0.0);
        assert!((r.analytic_bound - C_STAR).abs() < 1e-12);
    }

    fn constant_series(c: f64, refine: usize) -> Vec<AxisymField> {
        let ax = z_axis();
        let d = 0.1 / refine as f64;
        let n = 40 * refine + 1;
        let grid = AxisGrid::new(n, d, n, -2.0, d).unwrap();
        (0..3).map(|k| AxisymField::from_fn(ax, grid, 0.5 * k as f64, |_, _| c)).collect()
    }

    #[test]
    fn integrability_constant_and_homogeneity() {
        let cyl = Cylinder2d { t0: 1.0, center: (2.0, 0.0), r: 0.5 };
        let one = improved_integrability(&constant_series(3.0, 4), cyl, 1.0).unwrap();
        let want = 3.0 * (PI * 0.25 * 0.25).sqrt();
        assert!((one.l2_norm - want).abs() < 0.02 * want, "{} vs {want}", one.l2_norm);
        let two = improved_integrability(&constant_series(6.0, 4), cyl, 1.0).unwrap();
        assert!((two.l2_norm - 2.0 * one.l2_norm).abs() < 1e-12 * one.l2_norm);
        assert!(one.l1_sq <= one.l1_sq_bound);
        let bad = Cylinder2d { t0: 1.0, center: (1.2, 0.0), r: 0.5 };
        assert!(matches!(improved_integrability(&constant_series(1.0, 1), bad, 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn integrability_refinement_stable() {
        let ax = z_axis();
        let series = |refine: usize| -> Vec<AxisymField> {
            let d = 0.1 / refine as f64;
            let n = 40 * refine + 1;
            let grid = AxisGrid::new(n, d, n, -2.0, d).unwrap();
            (0..3).map(|k| AxisymField::from_fn(ax, grid, 0.5 * k as f64, |rho, z| ring_profile(rho, z, 2.0, 0.4))).collect()
        };
        let cyl = Cylinder2d { t0: 1.0, center: (2.0, 0.1), r: 0.6 };
        let a = improved_integrability(&series(2), cyl, 1.0).unwrap().l2_norm;
        let b = improved_integrability(&series(4), cyl, 1.0).unwrap().l2_norm;
        assert!(a > 0.0 && ((a - b) / b).abs() < 0.05, "{a} vs {b}");
    }

    #[test]
    fn shell_integral_decreases_along_ladder() {
        let series = constant_series(1.0, 2);
        let mut last = f64::INFINITY;
        for k in 0..4 {
            let eps = 0.125 * 0.5f64.powi(k);
            let s = shell_integral(&series, 1.0, 1.0, 0.0, eps, 16).unwrap();
            let want = 9.0 * eps * eps * 36.0 * eps * eps;
            assert!((s - want).abs() < 1e-10 * want);
            assert!(s < last);
            last = s;
        }
    }
}
