use crate::rundir::{self, LoadedRun};
use crate::{AxisymArgs, DiagnoseArgs, ScanArgs, SimulateArgs};
use landau_core::axisym::{cylindrical_reduce, off_axis_criterion, write_axisym, Axis, AxisGrid, OffAxisOptions, OffAxisVerdict};
use landau_core::collision::CollisionOperator;
use landau_core::config::RunConfig;
use landau_core::diagnostics::{
    local_mass_estimate, moments_and_entropy, scaled_entropy_inequality, LocalMassTerms, ScaledEntropyTerms,
};
use landau_core::fields::DistributionField;
use landau_core::kernel::{Variant, Vec3};
use landau_core::regularity::{dissipation_scan, hausdorff_upper_bound, m_star, HausdorffReport, ScanResult};
use landau_core::stepper::run;
use landau_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

// Defaults for every threshold the commands expose.
pub const DEFAULT_KAPPA: f64 = 1.5;
pub const DEFAULT_RADIUS: f64 = 1.0;
pub const DEFAULT_WIDTH: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 0.2;
pub const DEFAULT_J_MAX: usize = 4;

pub fn parse_list<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got {}", parts.len()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(out)
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => rundir::write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Error::Io(format!("{}: {e}", a.config.display())))?;
    let cfg = RunConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", a.config.display())),
        other => other,
    })?;
    let dir = a.out.clone().unwrap_or_else(|| a.config.with_extension(""));
    let start = Instant::now();
    let out = run(&cfg)?;
    let manifest = rundir::save(&dir, &cfg, &out, start.elapsed().as_secs_f64())?;
    eprintln!(
        "landau: {} steps, {} frames in {} ({:.1}s)",
        manifest.summary.steps,
        manifest.frames.len(),
        dir.display(),
        manifest.timings.wall_seconds
    );
    Ok(())
}

#[derive(Serialize)]
struct MomentRow {
    time: f64,
    mass: f64,
    momentum: Vec3,
    energy: f64,
    entropy: f64,
    entropy_plus: f64,
    h_bar: f64,
}

fn moment_row(f: &DistributionField) -> MomentRow {
    let r = moments_and_entropy(f);
    MomentRow {
        time: f.time,
        mass: r.mass,
        momentum: r.momentum,
        energy: r.energy,
        entropy: r.entropy,
        entropy_plus: r.entropy_plus,
        h_bar: r.h_bar(),
    }
}

#[derive(Serialize)]
struct CylinderReport {
    t0: f64,
    v0: Vec3,
    eps: f64,
    kappa: f64,
    radius: f64,
    width: f64,
    lambda: f64,
    scaled_entropy: ScaledEntropyTerms,
    local_mass: LocalMassTerms,
}

#[derive(Serialize)]
struct DiagnoseReport {
    run: PathBuf,
    config_sha256: String,
    moments: Vec<MomentRow>,
    cylinder: Option<CylinderReport>,
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    let loaded = LoadedRun::load(&a.run)?;
    let moments = match (a.at, loaded.frames.is_empty()) {
        (_, true) => Vec::new(),
        (Some(t), false) => vec![moment_row(&loaded.trajectory()?.at_time(t)?)],
        (None, false) => loaded.frames.iter().map(moment_row).collect(),
    };
    let cylinder = match a.cylinder {
        None => None,
        Some([t0, vx, vy, vz, eps]) => {
            let traj = loaded.trajectory()?;
            let cfg = &loaded.manifest.config;
            let model = cfg.model()?;
            let v0 = [vx, vy, vz];
            let scaled_entropy = scaled_entropy_inequality(&traj, t0, v0, eps, a.kappa, a.radius, a.width, &model)?;
            let op = CollisionOperator::new(cfg.grid()?, model, Variant::Mollified, cfg.conv)?;
            let local_mass = local_mass_estimate(&traj, t0, v0, eps, a.lambda, &op)?;
            Some(CylinderReport {
                t0,
                v0,
                eps,
                kappa: a.kappa,
                radius: a.radius,
                width: a.width,
                lambda: a.lambda,
                scaled_entropy,
                local_mass,
            })
        }
    };
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let rows = std::iter::once(["time", "mass", "px", "py", "pz", "energy", "entropy", "entropy_plus", "h_bar"].map(String::from))
            .chain(moments.iter().map(|m| {
                [m.time, m.mass, m.momentum[0], m.momentum[1], m.momentum[2], m.energy, m.entropy, m.entropy_plus, m.h_bar]
                    .map(|x| format!("{x:e}"))
            }));
        for row in rows {
            w.write_record(&row).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        w.flush()?;
    }
    let report = DiagnoseReport {
        run: loaded.dir.clone(),
        config_sha256: loaded.manifest.config_sha256.clone(),
        moments,
        cylinder,
    };
    emit(a.out.as_deref(), &report)
}

/// Seeds as `(t0, v0)`, one per non-empty line.
pub fn read_seeds(path: &Path) -> Result<Vec<(f64, Vec3)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("seeds file {}: {e}", path.display())))?;
    let mut seeds = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: std::result::Result<Vec<f64>, _> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
        match nums {
            Ok(v) if v.len() == 4 => seeds.push((v[0], [v[1], v[2], v[3]])),
            _ => {
                return Err(Error::Config(format!(
                    "seeds file {} line {}: expected `t0 vx vy vz`",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    Ok(seeds)
}

#[derive(Serialize)]
struct ScanReport {
    run: PathBuf,
    config_sha256: String,
    lambda: f64,
    j_max: usize,
    scans: Vec<ScanResult>,
    reports: Vec<HausdorffReport>,
}

pub fn scan_singular(a: &ScanArgs) -> Result<()> {
    let seeds = read_seeds(&a.seeds)?;
    let loaded = LoadedRun::load(&a.run)?;
    let traj = loaded.trajectory()?;
    let cfg = &loaded.manifest.config;
    let op = CollisionOperator::new(cfg.grid()?, cfg.model()?, Variant::Mollified, cfg.conv)?;
    let scans = seeds
        .iter()
        .map(|&(t0, v0)| dissipation_scan(&traj, t0, v0, a.lambda, a.j_max, &op))
        .collect::<Result<Vec<_>>>()?;
    let m = m_star(cfg.gamma)?;
    let reports = a.eta.iter().map(|&eta| hausdorff_upper_bound(&scans, eta, m)).collect::<Result<Vec<_>>>()?;
    let report = ScanReport {
        run: loaded.dir.clone(),
        config_sha256: loaded.manifest.config_sha256.clone(),
        lambda: a.lambda,
        j_max: a.j_max,
        scans,
        reports,
    };
    emit(a.out.as_deref(), &report)
}

#[derive(Serialize)]
struct AxisymReport {
    run: PathBuf,
    config_sha256: String,
    axis: Axis,
    options: OffAxisOptions,
    verdict: OffAxisVerdict,
}

pub fn axisym(a: &AxisymArgs) -> Result<()> {
    let loaded = LoadedRun::load(&a.run)?;
    let traj = loaded.trajectory()?;
    let [bx, by, bz, dx, dy, dz] = a.axis;
    let axis = Axis::new([bx, by, bz], [dx, dy, dz])?;
    let t0 = a.t0.unwrap_or(traj.t_last());
    let mut options = OffAxisOptions::default();
    if let Some(eta) = a.eta {
        options.eta = eta;
    }
    if let Some(ladder) = a.ladder {
        options.ladder = ladder;
    }
    let model = loaded.manifest.config.model()?;
    let verdict = off_axis_criterion(&traj, &axis, t0, a.point, &model, &options)?;
    if let Some(path) = &a.profile {
        let nearest = traj
            .frames()
            .iter()
            .min_by(|x, y| (x.time - t0).abs().total_cmp(&(y.time - t0).abs()))
            .expect("trajectory is non-empty");
        let (axi, _) = cylindrical_reduce(nearest, &axis, AxisGrid::covering(&traj.grid(), &axis, 2));
        std::fs::write(path, write_axisym(&axi)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let report = AxisymReport {
        run: loaded.dir.clone(),
        config_sha256: loaded.manifest.config_sha256.clone(),
        axis,
        options,
        verdict,
    };
    emit(a.out.as_deref(), &report)
}
