//! Velocity grids, distribution snapshots, parabolic cylinders, the scaling
//! transform `f_ε(t,v) = ε² f(t₀ + ε²t, v₀ + εv)` and the binary snapshot format.

use crate::error::{Error, Result};
use crate::kernel::Vec3;

/// Uniform grid on `[−L, L)³` with `n` nodes per axis, spacing `h = 2L/n`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VelocityGrid {
    pub n: usize,
    pub half_extent: f64,
}

impl VelocityGrid {
    pub fn new(n: usize, half_extent: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::Validation(format!("grid.n = {n} must be >= 8")));
        }
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::Validation(format!("grid.L = {half_extent} must be positive")));
        }
        Ok(Self { n, half_extent })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_extent / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.h()
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n * (iy + self.n * iz)
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx % n, (idx / n) % n, idx / (n * n))
    }

    pub fn position(&self, idx: usize) -> Vec3 {
        let (ix, iy, iz) = self.unindex(idx);
        [self.coord(ix), self.coord(iy), self.coord(iz)]
    }

    /// Smallest and largest node coordinate.
    pub fn node_range(&self) -> (f64, f64) {
        (-self.half_extent, self.half_extent - self.h())
    }

    /// Indices of nodes inside the open ball `B_r(c)`.
    pub fn ball_nodes(&self, c: Vec3, r: f64) -> Vec<usize> {
        let h = self.h();
        let lo = |x: f64| (((x - r + self.half_extent) / h).floor().max(0.0)) as usize;
        let hi = |x: f64| ((((x + r + self.half_extent) / h).ceil()) as isize).clamp(-1, self.n as isize - 1);
        let mut out = Vec::new();
        let (hx, hy, hz) = (hi(c[0]), hi(c[1]), hi(c[2]));
        if hx < 0 || hy < 0 || hz < 0 {
            return out;
        }
        for iz in lo(c[2])..=hz as usize {
            for iy in lo(c[1])..=hy as usize {
                for ix in lo(c[0])..=hx as usize {
                    let p = [self.coord(ix), self.coord(iy), self.coord(iz)];
                    let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
                    if d2 < r * r {
                        out.push(self.index(ix, iy, iz));
                    }
                }
            }
        }
        out
    }
}

/// Nonnegative values of `f` at one time on a [`VelocityGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub grid: VelocityGrid,
    pub time: f64,
    pub values: Vec<f64>,
}

impl DistributionField {
    pub fn new(grid: VelocityGrid, time: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Validation(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation(format!("value {} at node {i} is not a finite nonnegative number", values[i])));
        }
        Ok(Self { grid, time, values })
    }

    pub fn zeros(grid: VelocityGrid, time: f64) -> Self {
        Self { grid, time, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: VelocityGrid, time: f64, f: impl Fn(Vec3) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i)).max(0.0)).collect();
        Self { grid, time, values }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Trilinear interpolation; nodes outside the grid count as zero.
    pub fn interpolate(&self, v: Vec3) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let s = (v[d] + g.half_extent) / h;
            let fl = s.floor();
            base[d] = fl as isize;
            frac[d] = s - fl;
        }
        let n = g.n as isize;
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            let mut idx = [0isize; 3];
            for d in 0..3 {
                idx[d] = base[d] + o[d] as isize;
                w *= if o[d] == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if w == 0.0 || idx.iter().any(|&i| i < 0 || i >= n) {
                continue;
            }
            acc += w * self.values[g.index(idx[0] as usize, idx[1] as usize, idx[2] as usize)];
        }
        acc
    }

    /// Centered-difference gradient of `φ(f)`, one-sided on the boundary faces.
    pub fn gradient_of(&self, phi: impl Fn(f64) -> f64) -> Vec<Vec3> {
        let w: Vec<f64> = self.values.iter().map(|&x| phi(x)).collect();
        gradient(&self.grid, &w)
    }
}

/// Centered-difference gradient of a scalar grid function, one-sided on the boundary.
pub fn gradient(grid: &VelocityGrid, w: &[f64]) -> Vec<Vec3> {
    let n = grid.n;
    let h = grid.h();
    let stride = [1, n, n * n];
    (0..grid.len())
        .map(|idx| {
            let (ix, iy, iz) = grid.unindex(idx);
            let pos = [ix, iy, iz];
            let mut g = [0.0; 3];
            for d in 0..3 {
                let i = pos[d];
                g[d] = if i == 0 {
                    (w[idx + stride[d]] - w[idx]) / h
                } else if i == n - 1 {
                    (w[idx] - w[idx - stride[d]]) / h
                } else {
                    (w[idx + stride[d]] - w[idx - stride[d]]) / (2.0 * h)
                };
            }
            g
        })
        .collect()
}

/// `Q_r(t₀,v₀) = (t₀ − r², t₀] × B_r(v₀)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParabolicCylinder {
    pub t0: f64,
    pub v0: Vec3,
    pub r: f64,
}

impl ParabolicCylinder {
    pub fn new(t0: f64, v0: Vec3, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Validation(format!("cylinder radius {r} must be positive")));
        }
        Ok(Self { t0, v0, r })
    }

    pub fn t_start(&self) -> f64 {
        self.t0 - self.r * self.r
    }

    pub fn contains(&self, t: f64, v: Vec3) -> bool {
        t > self.t_start() && t <= self.t0 && dist(v, self.v0) < self.r
    }

    /// The concentric cylinder `k·Q_r = Q_{kr}` with the same top.
    pub fn expanded(&self, k: f64) -> Self {
        Self { r: self.r * k, ..*self }
    }
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Snapshots on a shared grid with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Vec<DistributionField>,
}

impl Trajectory {
    pub fn new(frames: Vec<DistributionField>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Validation("trajectory has no snapshots".into()));
        }
        let grid = frames[0].grid;
        for w in frames.windows(2) {
            if w[1].grid != grid {
                return Err(Error::Validation("snapshots do not share a grid".into()));
            }
            if !(w[1].time > w[0].time) {
                return Err(Error::Validation(format!(
                    "snapshot times not increasing: {} then {}",
                    w[0].time, w[1].time
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[DistributionField] {
        &self.frames
    }

    pub fn grid(&self) -> VelocityGrid {
        self.frames[0].grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn t_first(&self) -> f64 {
        self.frames[0].time
    }

    pub fn t_last(&self) -> f64 {
        self.frames[self.frames.len() - 1].time
    }

    /// Largest gap between saved times; bounds the resolution of every sup-in-time surrogate.
    pub fn save_interval(&self) -> f64 {
        self.frames.windows(2).map(|w| w[1].time - w[0].time).fold(0.0, f64::max)
    }

    pub fn check_window(&self, a: f64, b: f64) -> Result<()> {
        let tol = 1e-9 * (1.0 + self.t_last().abs());
        if a < self.t_first() - tol || b > self.t_last() + tol {
            return Err(Error::Window(format!(
                "time window [{a}, {b}] outside saved range [{}, {}]",
                self.t_first(),
                self.t_last()
            )));
        }
        Ok(())
    }

    /// Linear interpolation in time.
    pub fn at_time(&self, t: f64) -> Result<DistributionField> {
        self.check_window(t, t)?;
        let times = self.times();
        let k = times.partition_point(|&s| s < t);
        if k == 0 {
            return Ok(DistributionField { time: t, ..self.frames[0].clone() });
        }
        if k == times.len() {
            return Ok(DistributionField { time: t, ..self.frames[k - 1].clone() });
        }
        let (a, b) = (&self.frames[k - 1], &self.frames[k]);
        let w = (t - a.time) / (b.time - a.time);
        let values = a.values.iter().zip(&b.values).map(|(x, y)| (1.0 - w) * x + w * y).collect();
        Ok(DistributionField { grid: a.grid, time: t, values })
    }

    /// Quadrature weights `∫_a^b φ_k(t) dt` of the piecewise-linear hat functions on the saved times.
    pub fn time_weights(&self, a: f64, b: f64) -> Vec<f64> {
        hat_weights(&self.times(), a, b)
    }
}

/// Exact integrals of the piecewise-linear hat basis over `[a, b] ∩ [t₀, t_last]`.
pub fn hat_weights(times: &[f64], a: f64, b: f64) -> Vec<f64> {
    let m = times.len();
    let mut w = vec![0.0; m];
    if m == 1 {
        return w;
    }
    for k in 0..m - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        let lo = a.max(t0);
        let hi = b.min(t1);
        if hi <= lo {
            continue;
        }
        let len = t1 - t0;
        // ∫_lo^hi (t1 − t)/len and ∫_lo^hi (t − t0)/len
        let i1 = ((t1 - lo).powi(2) - (t1 - hi).powi(2)) / (2.0 * len);
        let i0 = ((hi - t0).powi(2) - (lo - t0).powi(2)) / (2.0 * len);
        w[k] += i1;
        w[k + 1] += i0;
    }
    w
}

/// Integral of the piecewise-linear interpolant of `values` over `[a, b]`.
pub fn time_integral(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    hat_weights(times, a, b).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Max of the piecewise-linear interpolant of `values` over `(a, b]`.
pub fn time_sup(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let interp = |t: f64| -> f64 {
        let k = times.partition_point(|&s| s < t);
        if k == 0 {
            values[0]
        } else if k == times.len() {
            values[k - 1]
        } else {
            let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
            (1.0 - w) * values[k - 1] + w * values[k]
        }
    };
    let mut best = interp(b);
    for (t, v) in times.iter().zip(values) {
        if *t > a && *t <= b {
            best = best.max(*v);
        }
    }
    if times.len() > 1 {
        best = best.max(interp(a));
    }
    best
}

/// Target of a scaling transform: the grid for `f_ε` and the scaled times `t ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledWindow {
    pub grid: VelocityGrid,
    pub times: Vec<f64>,
}

impl ScaledWindow {
    /// Scaled times covering `[−t_window, 0]`: the saved times mapped through
    /// `t = (s − t₀)/ε²` plus the two window ends.
    pub fn covering(traj: &Trajectory, t0: f64, eps: f64, grid: VelocityGrid, t_window: f64) -> Result<Self> {
        let start = t0 - eps * eps * t_window;
        traj.check_window(start, t0)?;
        let mut times = vec![-t_window];
        for s in traj.times() {
            let t = (s - t0) / (eps * eps);
            if t > -t_window + 1e-12 && t < -1e-12 {
                times.push(t);
            }
        }
        times.push(0.0);
        Ok(Self { grid, times })
    }
}

fn check_spatial_window(src: &VelocityGrid, v0: Vec3, eps: f64, dst: &VelocityGrid) -> Result<()> {
    let (lo, hi) = src.node_range();
    let (dlo, dhi) = dst.node_range();
    let tol = 1e-9 * src.h();
    for d in 0..3 {
        let a = v0[d] + eps * dlo;
        let b = v0[d] + eps * dhi;
        if a < lo - tol {
            return Err(Error::Window(format!("axis {d}: scaled window starts at {a} < grid start {lo}")));
        }
        if b > hi + tol {
            return Err(Error::Window(format!("axis {d}: scaled window ends at {b} > last node {hi}")));
        }
    }
    Ok(())
}

/// `ε^p · u(v₀ + εv)` on the nodes of `grid`, with `u` trilinearly interpolated.
pub fn pullback(field: &DistributionField, v0: Vec3, eps: f64, power: i32, grid: VelocityGrid) -> Result<DistributionField> {
    check_spatial_window(&field.grid, v0, eps, &grid)?;
    let s = eps.powi(power);
    let values = (0..grid.len())
        .map(|i| {
            let p = grid.position(i);
            s * field.interpolate([v0[0] + eps * p[0], v0[1] + eps * p[1], v0[2] + eps * p[2]])
        })
        .collect();
    Ok(DistributionField { grid, time: field.time, values })
}

/// `f_ε(t,v) = ε² f(t₀ + ε²t, v₀ + εv)` sampled on the window.
pub fn scaled_solution(traj: &Trajectory, t0: f64, v0: Vec3, eps: f64, window: &ScaledWindow) -> Result<Trajectory> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain(format!("eps = {eps} outside (0, 1]")));
    }
    check_spatial_window(&traj.grid(), v0, eps, &window.grid)?;
    let mut frames = Vec::with_capacity(window.times.len());
    for &t in &window.times {
        let src = traj.at_time(t0 + eps * eps * t)?;
        let mut f = pullback(&src, v0, eps, 2, window.grid)?;
        f.time = t;
        frames.push(f);
    }
    Trajectory::new(frames)
}

/// Nodes of a field inside a cylinder's ball, with weights `h³`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CylinderMask {
    /// `(frame, node, weight)`; the frame is 0 for single fields.
    pub entries: Vec<(usize, usize, f64)>,
}

impl CylinderMask {
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Restrict a single snapshot to the ball of the cylinder (time is ignored).
pub fn cylinder_restrict(field: &DistributionField, cyl: &ParabolicCylinder) -> CylinderMask {
    let w = field.grid.cell_volume();
    CylinderMask { entries: field.grid.ball_nodes(cyl.v0, cyl.r).into_iter().map(|i| (0, i, w * 1.0)).collect() }
}

/// Restrict a trajectory to a cylinder; weights are `h³` times the hat-function time weights.
pub fn cylinder_restrict_traj(traj: &Trajectory, cyl: &ParabolicCylinder) -> CylinderMask {
    let tw = traj.time_weights(cyl.t_start(), cyl.t0);
    let nodes = traj.grid().ball_nodes(cyl.v0, cyl.r);
    let h3 = traj.grid().cell_volume();
    let mut entries = Vec::new();
    for (k, &w) in tw.iter().enumerate() {
        if w > 0.0 {
            entries.extend(nodes.iter().map(|&i| (k, i, w * h3)));
        }
    }
    CylinderMask { entries }
}

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"LNDF";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER: usize = 4 + 4 + 4 + 8 + 8;

pub fn write_snapshot(field: &DistributionField) -> Vec<u8> {
    let mut out = Vec::with_capacity(SNAPSHOT_HEADER + 8 * field.values.len());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(field.grid.n as u32).to_le_bytes());
    out.extend_from_slice(&field.grid.half_extent.to_le_bytes());
    out.extend_from_slice(&field.time.to_le_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn read_header(bytes: &[u8], magic: [u8; 4]) -> Result<(u32, f64, f64)> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: SNAPSHOT_HEADER, found: bytes.len() });
    }
    let found: [u8; 4] = bytes[0..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    if bytes.len() < SNAPSHOT_HEADER {
        return Err(Error::Truncated { expected: SNAPSHOT_HEADER, found: bytes.len() });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(Error::BadVersion(version));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let l = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let t = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    Ok((n, l, t))
}

pub(crate) fn read_payload(bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    let expected = SNAPSHOT_HEADER + 8 * count;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    Ok(bytes[SNAPSHOT_HEADER..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_snapshot(bytes: &[u8]) -> Result<DistributionField> {
    let (n, l, t) = read_header(bytes, SNAPSHOT_MAGIC)?;
    let grid = VelocityGrid::new(n as usize, l)?;
    let values = read_payload(bytes, grid.len())?;
    DistributionField::new(grid, t, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid8() -> VelocityGrid {
        VelocityGrid::new(8, 2.0).unwrap()
    }

    fn bump(grid: VelocityGrid, t: f64) -> DistributionField {
        DistributionField::from_fn(grid, t, |v| (1.0 + t) * (-(v[0] * v[0] + 2.0 * v[1] * v[1] + v[2] * v[2])).exp())
    }

    #[test]
    fn snapshot_round_trip_and_size() {
        let f = bump(grid8(), 0.25);
        let bytes = write_snapshot(&f);
        assert_eq!(bytes.len(), SNAPSHOT_HEADER + 512 * 8);
        assert_eq!(read_snapshot(&bytes).unwrap(), f);
    }

    #[test]
    fn snapshot_errors_are_distinct() {
        let f = bump(grid8(), 0.0);
        let mut bytes = write_snapshot(&f);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(read_snapshot(&bad), Err(Error::BadVersion(2))));
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(read_snapshot(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn interpolation_exact_on_nodes() {
        let f = bump(grid8(), 0.0);
        for i in 0..f.grid.len() {
            assert_eq!(f.interpolate(f.grid.position(i)), f.values[i]);
        }
    }

    #[test]
    fn tiny_cylinder_between_nodes_is_empty() {
        let f = bump(grid8(), 0.0);
        let h = f.grid.h();
        let c = ParabolicCylinder::new(0.0, [h / 2.0 - 2.0, h / 2.0 - 2.0, h / 2.0 - 2.0], h / 2.0 * 0.99).unwrap();
        assert!(cylinder_restrict(&f, &c).is_empty());
    }

    #[test]
    fn full_cover_weights() {
        let g = grid8();
        let traj = Trajectory::new(vec![bump(g, 0.0), bump(g, 0.5), bump(g, 1.0)]).unwrap();
        let c = ParabolicCylinder::new(1.0, [0.0; 3], 10.0).unwrap();
        let m = cylinder_restrict_traj(&traj, &c);
        let expect = 4.0f64.powi(3) * 1.0;
        assert!((m.total_weight() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn ball_volume_converges() {
        let r = 1.0;
        let g = VelocityGrid::new(40, 1.25).unwrap(); // h = r/16
        let f = DistributionField::zeros(g, 0.0);
        let c = ParabolicCylinder::new(0.0, [0.0; 3], r).unwrap();
        let vol = cylinder_restrict(&f, &c).total_weight();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((vol - exact).abs() < 0.05 * exact);
        // oracle: direct count over all nodes
        let count = (0..g.len()).filter(|&i| dist(g.position(i), [0.0; 3]) < r).count();
        assert_eq!(count as f64 * g.cell_volume(), vol);
    }

    #[test]
    fn hat_weights_integrate_linear_exactly() {
        let times = [0.0, 0.3, 1.0, 1.2];
        let vals: Vec<f64> = times.iter().map(|t| 2.0 * t + 1.0).collect();
        let i = time_integral(&times, &vals, 0.1, 1.1);
        let exact = (1.1f64 * 1.1 + 1.1) - (0.01 + 0.1);
        assert!((i - exact).abs() < 1e-14);
    }

    #[test]
    fn unit_scale_is_identity() {
        let g = grid8();
        let traj = Trajectory::new(vec![bump(g, 0.0), bump(g, 1.0)]).unwrap();
        let win = ScaledWindow { grid: g, times: vec![0.0] };
        let s = scaled_solution(&traj, 1.0, [0.0; 3], 1.0, &win).unwrap();
        let a = &s.frames()[0].values;
        let b = &traj.frames()[1].values;
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn window_outside_source_is_rejected() {
        let g = grid8();
        let traj = Trajectory::new(vec![bump(g, 0.0), bump(g, 1.0)]).unwrap();
        let win = ScaledWindow { grid: g, times: vec![0.0] };
        let err = scaled_solution(&traj, 1.0, [1.0, 0.0, 0.0], 1.0, &win).unwrap_err();
        assert!(matches!(err, Error::Window(_)));
    }
}
