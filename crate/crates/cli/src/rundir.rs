//! On-disk layout of a run directory:
//!
//! ```text
//! <dir>/manifest.json     config, config hash, grid, frame index, summary, timings
//! <dir>/log.csv           one row per step
//! <dir>/frames/NNNNN.lndf snapshots
//! ```

use landau_core::config::RunConfig;
use landau_core::fields::{read_snapshot, write_snapshot, DistributionField, Trajectory};
use landau_core::stepper::{RunOutput, StepLog};
use landau_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const LOG: &str = "log.csv";
pub const FRAMES: &str = "frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub n: usize,
    #[serde(rename = "L")]
    pub half_extent: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub max_cfl: f64,
    pub max_cg_iterations: usize,
    pub max_entropy_increase: f64,
    pub max_renorm_deviation: f64,
}

/// Wall-clock data, kept apart so the rest of the manifest is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_seconds: f64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub grid: GridInfo,
    pub frames: Vec<FrameEntry>,
    pub summary: Summary,
    pub timings: Timings,
}

/// SHA-256 of the canonical TOML rendering of a configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_log(path: &Path, log: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(StepLog::HEADER).map_err(|e| io(path, e))?;
    for row in log {
        let cells = [row.t, row.mass, row.px, row.py, row.pz, row.energy, row.entropy, row.renorm_factor, row.clipped_mass];
        w.write_record(cells.iter().map(|x| format!("{x:e}"))).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn save(dir: &Path, cfg: &RunConfig, out: &RunOutput, wall_seconds: f64) -> Result<Manifest> {
    let frames_dir = dir.join(FRAMES);
    std::fs::create_dir_all(&frames_dir).map_err(|e| io(&frames_dir, e))?;
    let mut frames = Vec::new();
    for (k, f) in out.trajectory.frames().iter().enumerate() {
        let file = format!("{FRAMES}/{k:05}.lndf");
        let path = dir.join(&file);
        std::fs::write(&path, write_snapshot(f)).map_err(|e| io(&path, e))?;
        frames.push(FrameEntry { file, time: f.time });
    }
    write_log(&dir.join(LOG), &out.log)?;
    let grid = cfg.grid()?;
    let manifest = Manifest {
        config: cfg.clone(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        grid: GridInfo { n: grid.n, half_extent: grid.half_extent, h: grid.h() },
        frames,
        summary: Summary {
            steps: out.log.len().saturating_sub(1),
            max_cfl: out.max_cfl,
            max_cg_iterations: out.max_cg_iterations,
            max_entropy_increase: out.max_entropy_increase(),
            max_renorm_deviation: out.log.iter().map(|l| (l.renorm_factor - 1.0).abs()).fold(0.0, f64::max),
        },
        timings: Timings {
            wall_seconds,
            finished_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io(path, e))
}

/// A run directory read back from disk.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub frames: Vec<DistributionField>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut frames = Vec::new();
        for entry in &manifest.frames {
            let p = dir.join(&entry.file);
            let bytes = std::fs::read(&p).map_err(|e| io(&p, format!("missing snapshot ({e})")))?;
            frames.push(read_snapshot(&bytes)?);
        }
        Ok(Self { dir: dir.to_path_buf(), manifest, frames })
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        if self.frames.is_empty() {
            return Err(Error::Validation(format!("run {} has no snapshots", self.dir.display())));
        }
        Trajectory::new(self.frames.clone())
    }
}
