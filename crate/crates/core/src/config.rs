//! Run configuration, read from a TOML file.
//!
//! ```toml
//! gamma = -3.0
//! n_reg = 1.0
//! viscosity = 0.0
//! dt = 1e-3
//! t_end = 0.5
//! save_stride = 50
//!
//! [grid]
//! n = 32
//! L = 6.0
//!
//! [init]
//! kind = "bimodal"
//! params = { separation = 2.0, theta = 0.5 }
//! ```
//!
//! Optional keys: `delta` (split radius, default 0.5), `conv` (`auto`, `direct`,
//! `fft`), `cg_tol`, `seed`, `init.n_index` (apply the truncate-mollify-floor
//! scheme with that index).

use crate::conv::ConvPath;
use crate::error::{Error, Result};
use crate::fields::{DistributionField, VelocityGrid};
use crate::kernel::{KernelModel, Vec3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "L")]
    pub half_extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub kind: String,
    #[serde(default)]
    pub params: toml::Table,
    #[serde(default)]
    pub n_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub gamma: f64,
    pub n_reg: f64,
    pub viscosity: f64,
    pub dt: f64,
    pub t_end: f64,
    pub save_stride: usize,
    pub init: InitSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_conv")]
    pub conv: ConvPath,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    0.5
}
fn default_conv() -> ConvPath {
    ConvPath::Auto
}
fn default_cg_tol() -> f64 {
    1e-12
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        if self.grid.n < 8 {
            return bad("grid.n", format!("{} must be >= 8", self.grid.n));
        }
        if !(self.grid.half_extent > 0.0) {
            return bad("grid.L", format!("{} must be positive", self.grid.half_extent));
        }
        if !(-3.0..-2.0).contains(&self.gamma) {
            return bad("gamma", format!("{} outside [-3, -2)", self.gamma));
        }
        if !(self.n_reg >= 1.0) {
            return bad("n_reg", format!("{} must be >= 1", self.n_reg));
        }
        if !(self.viscosity >= 0.0) {
            return bad("viscosity", format!("{} must be >= 0", self.viscosity));
        }
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("{} must be finite and >= 0", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("{} must be finite and >= 0", self.t_end));
        }
        if self.save_stride == 0 {
            return bad("save_stride", "must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", format!("{} outside (0, 1)", self.delta));
        }
        if let Some(n) = self.init.n_index {
            if !(n >= 1.0) {
                return bad("init.n_index", format!("{n} must be >= 1"));
            }
        }
        InitialData::from_spec(&self.init)?;
        crate::collision::check_resolution(&self.grid()?, &self.model()?)
    }

    pub fn grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.grid.n, self.grid.half_extent)
    }

    pub fn model(&self) -> Result<KernelModel> {
        KernelModel::new(self.gamma, self.delta, self.n_reg)
    }

    pub fn n_steps(&self) -> usize {
        if self.dt == 0.0 {
            0
        } else {
            (self.t_end / self.dt).round() as usize
        }
    }
}

/// Analytic initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    /// `ρ (2πθ)^{−3/2} exp(−|v−u|²/(2θ))`
    Maxwellian { rho: f64, u: Vec3, theta: f64 },
    /// Two Maxwellians of mass `ρ/2` at `±separation/2` along the first axis.
    Bimodal { rho: f64, separation: f64, theta: f64 },
    /// Ring around an axis: `∝ exp(−((ρ_⊥ − radius)² + (v·ω)²)/(2σ²))`, total mass `mass`.
    Ring { mass: f64, radius: f64, sigma: f64, axis: Vec3 },
    /// Snapshot file in the binary field format.
    Snapshot { path: String },
}

fn param(t: &toml::Table, key: &str, default: f64) -> Result<f64> {
    match t.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::Config(format!("init.params.{key}: expected a number"))),
    }
}

fn vec_param(t: &toml::Table, key: &str, default: Vec3) -> Result<Vec3> {
    match t.get(key) {
        None => Ok(default),
        Some(v) => {
            let arr = v.as_array().ok_or_else(|| Error::Config(format!("init.params.{key}: expected an array")))?;
            if arr.len() != 3 {
                return Err(Error::Config(format!("init.params.{key}: expected 3 entries")));
            }
            let mut out = [0.0; 3];
            for (o, x) in out.iter_mut().zip(arr) {
                *o = x
                    .as_float()
                    .or_else(|| x.as_integer().map(|i| i as f64))
                    .ok_or_else(|| Error::Config(format!("init.params.{key}: expected numbers")))?;
            }
            Ok(out)
        }
    }
}

impl InitialData {
    pub fn from_spec(spec: &InitSpec) -> Result<Self> {
        let p = &spec.params;
        let positive = |key: &str, x: f64| {
            if x > 0.0 {
                Ok(x)
            } else {
                Err(Error::Config(format!("init.params.{key}: {x} must be positive")))
            }
        };
        Ok(match spec.kind.as_str() {
            "zero" => InitialData::Zero,
            "maxwellian" => InitialData::Maxwellian {
                rho: positive("rho", param(p, "rho", 1.0)?)?,
                u: vec_param(p, "u", [0.0; 3])?,
                theta: positive("theta", param(p, "theta", 1.0)?)?,
            },
            "bimodal" => InitialData::Bimodal {
                rho: positive("rho", param(p, "rho", 1.0)?)?,
                separation: param(p, "separation", 2.0)?,
                theta: positive("theta", param(p, "theta", 0.5)?)?,
            },
            "ring" => InitialData::Ring {
                mass: positive("mass", param(p, "mass", 1.0)?)?,
                radius: positive("radius", param(p, "radius", 1.0)?)?,
                sigma: positive("sigma", param(p, "sigma", 0.3)?)?,
                axis: vec_param(p, "axis", [0.0, 0.0, 1.0])?,
            },
            "snapshot" => InitialData::Snapshot {
                path: p
                    .get("path")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| Error::Config("init.params.path: required for kind = \"snapshot\"".into()))?
                    .to_string(),
            },
            other => return Err(Error::Config(format!("init.kind: unknown kind {other:?}"))),
        })
    }

    /// Pointwise value; `None` for snapshot data.
    pub fn value(&self, v: Vec3) -> Option<f64> {
        Some(match self {
            InitialData::Zero => 0.0,
            InitialData::Maxwellian { rho, u, theta } => maxwellian(v, *rho, *u, *theta),
            InitialData::Bimodal { rho, separation, theta } => {
                let s = separation / 2.0;
                maxwellian(v, rho / 2.0, [s, 0.0, 0.0], *theta) + maxwellian(v, rho / 2.0, [-s, 0.0, 0.0], *theta)
            }
            InitialData::Ring { mass, radius, sigma, axis } => {
                let an = crate::kernel::norm(*axis);
                let w = [axis[0] / an, axis[1] / an, axis[2] / an];
                let along = v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
                let perp = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - along * along).max(0.0).sqrt();
                mass * ring_profile(perp, along, *radius, *sigma)
            }
            InitialData::Snapshot { .. } => return None,
        })
    }

    /// Sample on a grid (or load the snapshot).
    pub fn sample(&self, grid: VelocityGrid) -> Result<DistributionField> {
        if let InitialData::Snapshot { path } = self {
            let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("init.params.path: {path}: {e}")))?;
            let f = crate::fields::read_snapshot(&bytes)?;
            if f.grid != grid {
                return Err(Error::Config(format!("init.params.path: snapshot grid {:?} differs from grid {:?}", f.grid, grid)));
            }
            return Ok(f);
        }
        Ok(DistributionField::from_fn(grid, 0.0, |v| self.value(v).unwrap()))
    }
}

/// Mass-normalized Maxwellian `ρ (2πθ)^{−3/2} exp(−|v−u|²/(2θ))`.
pub fn maxwellian(v: Vec3, rho: f64, u: Vec3, theta: f64) -> f64 {
    let d2 = (v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2) + (v[2] - u[2]).powi(2);
    rho * (2.0 * PI * theta).powf(-1.5) * (-d2 / (2.0 * theta)).exp()
}

/// Unit-mass ring profile in cylindrical coordinates `(ρ, v₃)`, for `radius ≥ 3σ`
/// normalized by `(2πσ²)·2π·radius` (exact up to the Gaussian tail through the axis).
pub fn ring_profile(rho: f64, v3: f64, radius: f64, sigma: f64) -> f64 {
    let norm = 2.0 * PI * sigma * sigma * 2.0 * PI * radius;
    (-((rho - radius).powi(2) + v3 * v3) / (2.0 * sigma * sigma)).exp() / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
gamma = -3.0
n_reg = 1.0
viscosity = 0.0
dt = 1e-3
t_end = 0.01
save_stride = 5

[grid]
n = 8
L = 4.0

[init]
kind = "maxwellian"
params = { theta = 1.5 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = RunConfig::from_toml(GOOD).unwrap();
        assert_eq!(c.grid.n, 8);
        assert_eq!(c.n_steps(), 10);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(InitialData::from_spec(&c.init).unwrap(), InitialData::Maxwellian { rho: 1.0, u: [0.0; 3], theta: 1.5 });
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::from_toml(&GOOD.replace("dt = 1e-3", "dt = -1.0")).unwrap_err();
        assert!(e.to_string().contains("dt"));
        let e = RunConfig::from_toml(&GOOD.replace("gamma = -3.0\n", "")).unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
        let e = RunConfig::from_toml(&GOOD.replace("maxwellian", "plasma")).unwrap_err();
        assert!(e.to_string().contains("init.kind"));
        assert_eq!(e.exit_code(), 2);
    }
}
