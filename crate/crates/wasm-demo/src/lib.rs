//! Browser bindings for three small evaluations: the interaction kernel at a
//! point, the De Giorgi recurrence, and the angular interaction integral.
//!
//! The plain functions are testable natively; the `#[wasm_bindgen]` wrappers
//! only convert errors.

use landau_core::axisym::{angular_interaction_integral, AngularMode};
use landau_core::kernel::{kernel_divergence, kernel_matrix, sym_eigenvalues, KernelModel, Variant};
use landau_core::regularity::{degiorgi_recurrence, eta_dg};
use wasm_bindgen::prelude::*;

pub fn parse_variant(name: &str) -> Result<Variant, String> {
    Ok(match name {
        "full" => Variant::Full,
        "mollified" => Variant::Mollified,
        "in" => Variant::InPart,
        "out" => Variant::OutPart,
        "in_mollified" => Variant::InPartMollified,
        "out_mollified" => Variant::OutPartMollified,
        other => return Err(format!("unknown variant {other:?}")),
    })
}

/// Row-major `a(z)` (9 entries), its eigenvalues (3) and `∇·a(z)` (3).
pub fn kernel_at(gamma: f64, delta: f64, n_reg: f64, z: [f64; 3], variant: &str) -> Result<Vec<f64>, String> {
    let model = KernelModel::new(gamma, delta, n_reg).map_err(|e| e.to_string())?;
    let v = parse_variant(variant)?;
    let a = kernel_matrix(z, &model, v).map_err(|e| e.to_string())?;
    let div = kernel_divergence(z, &model, v).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = a.iter().flatten().copied().collect();
    out.extend(sym_eigenvalues(&a));
    out.extend(div);
    Ok(out)
}

/// JSON with `ln V_j`, the bounds `(4/3)^j ln ½`, the threshold and the violations,
/// starting from `U₀ = fraction · η_DG Z^{−3/2}`.
pub fn recurrence_json(fraction: f64, z: f64, c2: f64, j_max: usize) -> Result<String, String> {
    let u0 = fraction * eta_dg(c2) * z.powf(-1.5);
    let trace = degiorgi_recurrence(u0, z, c2, j_max).map_err(|e| e.to_string())?;
    let bound: Vec<f64> = (0..=j_max).map(|j| (4.0f64 / 3.0).powi(j as i32) * 0.5f64.ln()).collect();
    let log_v: Vec<Option<f64>> = trace.log_v(z).into_iter().map(|x| x.is_finite().then_some(x)).collect();
    let value = serde_json::json!({
        "u0": u0,
        "eta_dg": trace.eta_dg,
        "threshold": trace.threshold,
        "vanishes": trace.vanishes,
        "log_v": log_v,
        "bound": bound,
        "violations": trace.violations,
    });
    Ok(value.to_string())
}

/// `[exact, bound]` for the angular integral.
pub fn angular_pair(a: f64, b: f64, sigma0: f64) -> Result<Vec<f64>, String> {
    let exact = angular_interaction_integral(a, b, sigma0, AngularMode::ExactQuadrature).map_err(|e| e.to_string())?;
    let bound = angular_interaction_integral(a, b, sigma0, AngularMode::ArsinhBound).map_err(|e| e.to_string())?;
    Ok(vec![exact, bound])
}

#[wasm_bindgen]
pub fn kernel(gamma: f64, delta: f64, n_reg: f64, zx: f64, zy: f64, zz: f64, variant: &str) -> Result<Vec<f64>, JsError> {
    kernel_at(gamma, delta, n_reg, [zx, zy, zz], variant).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn recurrence(fraction: f64, z: f64, c2: f64, j_max: usize) -> Result<String, JsError> {
    recurrence_json(fraction, z, c2, j_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn angular(a: f64, b: f64, sigma0: f64) -> Result<Vec<f64>, JsError> {
    angular_pair(a, b, sigma0).map_err(|e| JsError::new(&e))
}
