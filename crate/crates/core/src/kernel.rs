//! The collision kernel `a(z) = k(|z|)/|z| Π(z)` with `k(r) = r^(γ+3)`,
//! its mollified and near/far split variants, and the closed-form
//! derivatives used by the assembly and diagnostics code.
//!
//! Every variant has the form `a_var(z) = k̃(|z|)/|z| Π(z)` where `k̃` is `k`
//! multiplied by cutoff factors, so divergence and Hessian trace share one
//! formula:
//!
//! ```text
//! ∇·a_var(z)  = −2 k̃(|z|) z/|z|³
//! ∇²:a_var(z) = −2 k̃′(|z|)/|z|²      (z ≠ 0)
//! ```
//!
//! For the Coulomb case the full kernel also carries `−8π k(0) δ₀`, which is
//! exposed separately through [`KernelModel::dirac_weight`].

use crate::error::{Error, Result};
use std::f64::consts::PI;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Largest slope of [`cutoff`] (attained at `s = 2r − 1` with `u = s(1−s) = 2/9`).
pub const CUTOFF_MAX_SLOPE: f64 = 2.0 * 84.0 * (4.0 / 81.0) * (1.0 - 6.0 / 9.0);

/// Smooth transition `X` with `X = 0` on `[0, ½]`, `X = 1` on `[1, ∞)`.
///
/// On `[½, 1]`, `X(r) = p(2r − 1)` with
/// `p(s) = 28s³ − 105s⁴ + 168s⁵ − 126s⁶ + 36s⁷`. Its derivative is
/// `p′(s) = 84u²(1 − 3u)` with `u = s(1 − s)`, nonnegative with double zeros
/// at both ends, so `X` is C² with `0 ≤ X′ ≤ 2.77`.
pub fn cutoff(r: f64) -> f64 {
    if r <= 0.5 {
        0.0
    } else if r >= 1.0 {
        1.0
    } else {
        let s = 2.0 * r - 1.0;
        let s3 = s * s * s;
        s3 * (28.0 + s * (-105.0 + s * (168.0 + s * (-126.0 + 36.0 * s))))
    }
}

/// Derivative of [`cutoff`].
pub fn cutoff_prime(r: f64) -> f64 {
    if r <= 0.5 || r >= 1.0 {
        0.0
    } else {
        let s = 2.0 * r - 1.0;
        let u = s * (1.0 - s);
        2.0 * 84.0 * u * u * (1.0 - 3.0 * u)
    }
}

/// Which piece of the kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `a`
    Full,
    /// `a_n = X(n|z|) a`
    Mollified,
    /// `a^in_δ = (1 − X(|z|/δ)) a`
    InPart,
    /// `a^out_δ = X(|z|/δ) a`
    OutPart,
    /// `a^in_n = X(n|z|) a^in_δ`
    InPartMollified,
    /// `a^out_n = X(n|z|) a^out_δ`
    OutPartMollified,
}

impl Variant {
    /// Variants whose value at `z = 0` is the zero matrix.
    pub fn vanishes_at_origin(self) -> bool {
        !matches!(self, Variant::Full | Variant::InPart)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelModel {
    pub gamma: f64,
    /// Split radius δ of the near/far decomposition.
    pub delta: f64,
    /// Mollification index: `a_n` vanishes for `|z| ≤ 1/(2n)`.
    pub n_reg: f64,
}

impl KernelModel {
    pub fn new(gamma: f64, delta: f64, n_reg: f64) -> Result<Self> {
        if !(-3.0..-2.0).contains(&gamma) {
            return Err(Error::Domain(format!("gamma = {gamma} outside [-3, -2)")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("delta = {delta} outside (0, 1)")));
        }
        if !(n_reg >= 1.0 && n_reg.is_finite()) {
            return Err(Error::Domain(format!("n_reg = {n_reg} must be >= 1")));
        }
        Ok(Self { gamma, delta, n_reg })
    }

    /// Coulomb model (`γ = −3`) with split radius ½.
    pub fn coulomb(n_reg: f64) -> Self {
        Self { gamma: -3.0, delta: 0.5, n_reg }
    }

    /// `γ* = −(γ + 2)`.
    pub fn gamma_star(&self) -> f64 {
        -(self.gamma + 2.0)
    }

    pub fn k(&self, r: f64) -> f64 {
        r.powf(self.gamma + 3.0)
    }

    pub fn k_prime(&self, r: f64) -> f64 {
        let p = self.gamma + 3.0;
        if p == 0.0 {
            0.0
        } else {
            p * r.powf(self.gamma + 2.0)
        }
    }

    /// `k(0) = lim r^(γ+3)`: one for Coulomb, zero otherwise.
    pub fn k0(&self) -> f64 {
        if self.gamma == -3.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Weight `8π k(0)` of the Dirac mass in `∇²:a`.
    pub fn dirac_weight(&self) -> f64 {
        8.0 * PI * self.k0()
    }

    /// Cutoff factor `c(r)` and its derivative for a variant, so that `k̃ = k c`.
    fn cutoff_factor(&self, r: f64, variant: Variant) -> (f64, f64) {
        let n = self.n_reg;
        let d = self.delta;
        let moll = || (cutoff(n * r), n * cutoff_prime(n * r));
        let out = || (cutoff(r / d), cutoff_prime(r / d) / d);
        match variant {
            Variant::Full => (1.0, 0.0),
            Variant::Mollified => moll(),
            Variant::OutPart => out(),
            Variant::InPart => {
                let (o, op) = out();
                (1.0 - o, -op)
            }
            Variant::InPartMollified => {
                let (m, mp) = moll();
                let (o, op) = out();
                (m * (1.0 - o), mp * (1.0 - o) - m * op)
            }
            Variant::OutPartMollified => {
                let (m, mp) = moll();
                let (o, op) = out();
                (m * o, mp * o + m * op)
            }
        }
    }

    /// Radial profile `(k̃(r), k̃′(r))` of a variant.
    pub fn profile(&self, r: f64, variant: Variant) -> (f64, f64) {
        let (c, cp) = self.cutoff_factor(r, variant);
        let k = self.k(r);
        (k * c, self.k_prime(r) * c + k * cp)
    }

    /// Scalar prefactor `k̃(|z|)/|z|`, the nonzero eigenvalue of `a_var(z)`.
    pub fn prefactor(&self, r: f64, variant: Variant) -> f64 {
        self.profile(r, variant).0 / r
    }
}

pub fn norm(z: Vec3) -> f64 {
    (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt()
}

fn nonzero(z: Vec3) -> Result<f64> {
    let r = norm(z);
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Domain(format!("kernel evaluated at z = {z:?}")))
    }
}

/// `Π(z) = I − ẑ⊗ẑ`.
pub fn projection_matrix(z: Vec3) -> Result<Mat3> {
    let r = nonzero(z)?;
    Ok(projection_unchecked(z, r))
}

fn projection_unchecked(z: Vec3, r: f64) -> Mat3 {
    let u = [z[0] / r, z[1] / r, z[2] / r];
    let mut p = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] = if i == j { 1.0 } else { 0.0 } - u[i] * u[j];
        }
    }
    p
}

fn scale(m: Mat3, s: f64) -> Mat3 {
    let mut out = m;
    for row in out.iter_mut() {
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    out
}

fn origin_value<T: Default>(variant: Variant, z: Vec3) -> Result<T> {
    if variant.vanishes_at_origin() {
        Ok(T::default())
    } else {
        Err(Error::Domain(format!("{variant:?} kernel is singular at z = {z:?}")))
    }
}

/// `a_var(z)`. Mollified and out-part variants are extended by zero at the origin.
pub fn kernel_matrix(z: Vec3, model: &KernelModel, variant: Variant) -> Result<Mat3> {
    let r = norm(z);
    if r == 0.0 {
        return origin_value(variant, z);
    }
    let r = nonzero(z)?;
    Ok(scale(projection_unchecked(z, r), model.prefactor(r, variant)))
}

/// `√a(z) = √(k(|z|)/|z|) Π(z)`.
pub fn kernel_sqrt(z: Vec3, model: &KernelModel) -> Result<Mat3> {
    kernel_sqrt_variant(z, model, Variant::Full)
}

/// Square root of any variant; `Π` is a projection so only the prefactor changes.
pub fn kernel_sqrt_variant(z: Vec3, model: &KernelModel, variant: Variant) -> Result<Mat3> {
    let r = norm(z);
    if r == 0.0 {
        return origin_value(variant, z);
    }
    let r = nonzero(z)?;
    Ok(scale(projection_unchecked(z, r), model.prefactor(r, variant).max(0.0).sqrt()))
}

/// Column divergence `∇·a_var(z) = −2 k̃(|z|) z/|z|³`.
pub fn kernel_divergence(z: Vec3, model: &KernelModel, variant: Variant) -> Result<Vec3> {
    let r = nonzero(z)?;
    let s = -2.0 * model.profile(r, variant).0 / (r * r * r);
    Ok([s * z[0], s * z[1], s * z[2]])
}

/// Absolutely continuous part `−2 k̃′(|z|)/|z|²` of `∇²:a_var(z)`.
pub fn kernel_hessian_trace(z: Vec3, model: &KernelModel, variant: Variant) -> Result<f64> {
    let r = nonzero(z)?;
    Ok(-2.0 * model.profile(r, variant).1 / (r * r))
}

/// Bound `8 k(δ/2)/δ²` on `|∇·a^out_δ|`.
pub fn div_out_bound(model: &KernelModel) -> f64 {
    let d = model.delta;
    8.0 * model.k(d / 2.0) / (d * d)
}

/// Bound `40 k(δ/2)/δ³` on `|∇²:a^out_δ|` for `|z| ≥ δ/2`.
pub fn hess_out_bound(model: &KernelModel) -> f64 {
    let d = model.delta;
    40.0 * model.k(d / 2.0) / (d * d * d)
}

pub fn mat_vec(m: &Mat3, x: Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Eigenvalues of a symmetric 3×3 matrix in ascending order (trigonometric method).
pub fn sym_eigenvalues(m: &Mat3) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(f64::total_cmp);
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = *m;
    for (i, row) in b.iter_mut().enumerate() {
        row[i] -= q;
        for x in row.iter_mut() {
            *x /= p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut e = [e1, e2, e3];
    e.sort_by(f64::total_cmp);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model() -> KernelModel {
        KernelModel::new(-2.5, 0.5, 4.0).unwrap()
    }

    #[test]
    fn axis_projections() {
        let p = projection_matrix([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let p = projection_matrix([0.0, 0.0, 2.0]).unwrap();
        assert_eq!(p, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);
        let z = [1.0, 2.0, 3.0];
        let pz = mat_vec(&projection_matrix(z).unwrap(), z);
        for c in pz {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-14);
        }
        assert!(projection_matrix([0.0; 3]).is_err());
    }

    #[test]
    fn coulomb_full_at_two() {
        let m = KernelModel::coulomb(1.0);
        let a = kernel_matrix([2.0, 0.0, 0.0], &m, Variant::Full).unwrap();
        assert_eq!(a, [[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]]);
        assert!(kernel_matrix([0.0; 3], &m, Variant::Full).is_err());
    }

    #[test]
    fn mollified_vanishes_inside_shell() {
        let m = KernelModel::new(-3.0, 0.5, 4.0).unwrap();
        let a = kernel_matrix([1.0 / 16.0, 0.0, 0.0], &m, Variant::Mollified).unwrap();
        assert_eq!(a, [[0.0; 3]; 3]);
        assert_eq!(kernel_matrix([0.0; 3], &m, Variant::Mollified).unwrap(), [[0.0; 3]; 3]);
    }

    #[test]
    fn split_at_unit_distance() {
        let m = model();
        let z = [0.0, 1.0, 0.0];
        let full = kernel_matrix(z, &m, Variant::Full).unwrap();
        assert_eq!(kernel_matrix(z, &m, Variant::InPart).unwrap(), [[0.0; 3]; 3]);
        assert_eq!(kernel_matrix(z, &m, Variant::OutPart).unwrap(), full);
    }

    #[test]
    fn sqrt_prefactors() {
        let m = KernelModel::coulomb(1.0);
        let s = kernel_sqrt([1.0, 0.0, 0.0], &m).unwrap();
        assert_eq!(s, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let s = kernel_sqrt([0.0, 4.0, 0.0], &m).unwrap();
        assert_abs_diff_eq!(s[0][0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn coulomb_divergence_at_unit() {
        let m = KernelModel::coulomb(1.0);
        let d = kernel_divergence([1.0, 0.0, 0.0], &m, Variant::Full).unwrap();
        assert_eq!(d, [-2.0, 0.0, 0.0]);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5), 0.0);
        assert_eq!(cutoff(1.0), 1.0);
        assert_abs_diff_eq!(cutoff(0.75), 0.5, epsilon = 1e-14);
        let mut max = 0.0f64;
        for i in 0..=100_000 {
            let r = 0.5 + 0.5 * i as f64 / 100_000.0;
            let d = cutoff_prime(r);
            assert!(d >= 0.0);
            max = max.max(d);
        }
        assert!(max <= 3.0);
        assert_abs_diff_eq!(max, CUTOFF_MAX_SLOPE, epsilon = 1e-8);
    }

    #[test]
    fn cutoff_prime_matches_difference() {
        let h = 1e-6;
        for i in 1..50 {
            let r = 0.5 + i as f64 / 100.0;
            let fd = (cutoff(r + h) - cutoff(r - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, cutoff_prime(r), epsilon = 1e-7);
        }
    }

    #[test]
    fn coulomb_in_part_mollified_hessian_vanishes_between_shells() {
        let m = KernelModel::new(-3.0, 0.5, 8.0).unwrap();
        // 1/n = 0.125 < |z| < δ/2 = 0.25
        let h = kernel_hessian_trace([0.2, 0.0, 0.0], &m, Variant::InPartMollified).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn eigenvalues_of_kernel() {
        let m = model();
        let z = [0.3, -1.2, 0.7];
        let e = sym_eigenvalues(&kernel_matrix(z, &m, Variant::Full).unwrap());
        let pre = m.prefactor(norm(z), Variant::Full);
        assert_abs_diff_eq!(e[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], pre, epsilon = 1e-13);
        assert_abs_diff_eq!(e[2], pre, epsilon = 1e-13);
    }
}
