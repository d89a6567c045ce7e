//! De Giorgi iteration, multiscale dissipation scans and the covering
//! estimate for the parabolic Hausdorff pre-measure of the singular set.

use crate::collision::CollisionOperator;
use crate::diagnostics::{z_unscaled, ScaledView};
use crate::error::{Error, Result};
use crate::fields::{dist, ParabolicCylinder, Trajectory};
use crate::kernel::{KernelModel, Vec3};
use serde::{Deserialize, Serialize};

/// `m* = 1 + (5/2)|2 + γ|`.
pub fn m_star(gamma: f64) -> Result<f64> {
    if !(-3.0..-2.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma = {gamma} outside [-3, -2)")));
    }
    Ok(m_star_formula(gamma))
}

/// The formula without the range check, continuous up to `γ = −2`.
pub fn m_star_formula(gamma: f64) -> f64 {
    1.0 + 2.5 * (2.0 + gamma).abs()
}

/// `r_j = ½(1 + 2^{−j})`.
pub fn radius_schedule(j: u32) -> f64 {
    0.5 * (1.0 + 0.5f64.powi(j as i32))
}

/// `κ_j = 2 − 2^{−j}`.
pub fn level_schedule(j: u32) -> f64 {
    2.0 - 0.5f64.powi(j as i32)
}

/// `κ_{j+½} = ½(κ_j + κ_{j+1})`.
pub fn half_level(j: u32) -> f64 {
    0.5 * (level_schedule(j) + level_schedule(j + 1))
}

/// `η_DG = min(½, (2C₂)^{−12}/2)`.
pub fn eta_dg(c2: f64) -> f64 {
    0.5f64.min((2.0 * c2).powi(-12) / 2.0)
}

/// `sup_{(−r²,0]} ∫_{B_r} (f_ε − κ)₊ + ∬_{Q_r} |∇√f_ε|² 𝟙{f_ε ≥ κ}`.
pub fn level_energy(view: &ScaledView, r: f64, kappa: f64) -> Result<f64> {
    view.check(r)?;
    let (sup, _) = view.integrate(r, |_, f| view.values(f).iter().map(|&x| (x - kappa).max(0.0)).collect());
    let (_, grad) = view.integrate(r, |_, f| {
        let fe = view.values(f);
        let root: Vec<f64> = fe.iter().map(|x| x.sqrt()).collect();
        view.gradient(&root)
            .iter()
            .zip(&fe)
            .map(|(g, &x)| if x >= kappa { g[0] * g[0] + g[1] * g[1] + g[2] * g[2] } else { 0.0 })
            .collect()
    });
    Ok(sup + grad)
}

/// `U_j`: the level energy on `Q_{r_j}` at level `κ_j`.
pub fn degiorgi_functional(view: &ScaledView, j: u32) -> Result<f64> {
    level_energy(view, radius_schedule(j), level_schedule(j))
}

/// Iterates of `U_{j+1} = C₂^{j+1}(U_j^{4/3} + Z U_j^{5/3})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceTrace {
    /// `ln U_j`; `−∞` once the sequence is exactly zero.
    pub log_u: Vec<f64>,
    pub eta_dg: f64,
    pub threshold: f64,
    /// `U₀ ≤ η_DG Z^{−3/2}`.
    pub vanishes: bool,
    /// Indices `j` where `V_j = Z^{3/2}U_j` exceeds `(½)^{(4/3)^j}` (checked only when `vanishes`).
    pub violations: Vec<usize>,
}

impl RecurrenceTrace {
    pub fn u(&self) -> Vec<f64> {
        self.log_u.iter().map(|l| l.exp()).collect()
    }

    /// `ln V_j`.
    pub fn log_v(&self, z: f64) -> Vec<f64> {
        self.log_u.iter().map(|l| l + 1.5 * z.ln()).collect()
    }
}

/// Runs the recurrence at equality in log space, so neither decay nor blow-up under/overflows.
pub fn degiorgi_recurrence(u0: f64, z: f64, c2: f64, j_max: usize) -> Result<RecurrenceTrace> {
    if !(u0 >= 0.0) || !(z >= 1.0) || !(c2 >= 1.0) {
        return Err(Error::Domain(format!("need U0 >= 0, Z >= 1, C2 >= 1 (got {u0}, {z}, {c2})")));
    }
    let eta = eta_dg(c2);
    let threshold = eta * z.powf(-1.5);
    let (lc, lz) = (c2.ln(), z.ln());
    let mut log_u = vec![u0.ln()];
    for j in 0..j_max {
        let l = log_u[j];
        let next = if l == f64::NEG_INFINITY {
            l
        } else {
            // ln(U^{4/3} + Z U^{5/3}) = (4/3) l + ln(1 + exp(ln Z + l/3))
            let s = lz + l / 3.0;
            let tail = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            (j as f64 + 1.0) * lc + 4.0 / 3.0 * l + tail
        };
        log_u.push(next);
    }
    let vanishes = u0 <= threshold;
    let mut violations = Vec::new();
    if vanishes {
        for (j, l) in log_u.iter().enumerate() {
            let log_v = l + 1.5 * lz;
            let bound = (4.0f64 / 3.0).powi(j as i32) * 0.5f64.ln();
            if log_v > bound + 1e-12 * bound.abs() {
                violations.push(j);
            }
        }
    }
    Ok(RecurrenceTrace { log_u, eta_dg: eta, threshold, vanishes, violations })
}

/// `max(1, sup_{Q₁} Z[f_ε])`.
pub fn z_sup(view: &ScaledView, model: &KernelModel) -> Result<f64> {
    view.check(1.0)?;
    let nodes = view.grid().ball_nodes(view.v0, view.eps);
    let a = view.t0 - view.eps * view.eps;
    let mut best: f64 = 1.0;
    for f in view.traj.frames() {
        if f.time < a || f.time > view.t0 + 1e-9 * (1.0 + view.t0.abs()) {
            continue;
        }
        let z = z_unscaled(f, view.eps, model);
        best = nodes.iter().map(|&i| z[i]).fold(best, f64::max);
    }
    Ok(best)
}

/// Outcome of a De Giorgi certification at one point and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certification {
    /// `sup_{(−4,0]} ∫_{B₂}(f_ε − 1)₊ + ∬_{Q₂} |∇√f_ε|² 𝟙{f_ε ≥ 1}`.
    pub hypothesis: f64,
    /// `η_DG Z^{−3/2}`.
    pub threshold: f64,
    /// Largest grid value of `f_ε` on `Q_{1/2}`.
    pub max_inner: f64,
    pub hypothesis_holds: bool,
    pub conclusion_holds: bool,
    /// Hypothesis met but `f_ε > 2 + slack` on the grid: a resolution problem, not a counterexample.
    pub discretization_alert: bool,
}

impl Certification {
    pub fn certified(&self) -> bool {
        self.hypothesis_holds && self.conclusion_holds
    }
}

pub fn degiorgi_certify(view: &ScaledView, z_eps: f64, eta: f64, slack: f64) -> Result<Certification> {
    let hypothesis = level_energy(view, 2.0, 1.0)?;
    let threshold = eta * z_eps.powf(-1.5);
    let max_inner = max_on_cylinder(view, 0.5)?;
    let hypothesis_holds = hypothesis <= threshold;
    let conclusion_holds = max_inner <= 2.0 + slack;
    Ok(Certification {
        hypothesis,
        threshold,
        max_inner,
        hypothesis_holds,
        conclusion_holds,
        discretization_alert: hypothesis_holds && !conclusion_holds,
    })
}

/// Largest value of `f_ε` on `Q_r`, over saved frames and the interpolated bottom time.
pub fn max_on_cylinder(view: &ScaledView, r: f64) -> Result<f64> {
    view.check(r)?;
    let e2 = view.eps * view.eps;
    let a = view.t0 - e2 * r * r;
    let nodes = view.grid().ball_nodes(view.v0, view.eps * r);
    let mut best: f64 = 0.0;
    let mut consider = |values: &[f64]| {
        for &i in &nodes {
            best = best.max(e2 * values[i]);
        }
    };
    consider(&view.traj.at_time(a)?.values);
    for f in view.traj.frames() {
        if f.time > a && f.time <= view.t0 + 1e-9 * (1.0 + view.t0.abs()) {
            consider(&f.values);
        }
    }
    Ok(best)
}

/// Per-scale dissipation at one seed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub seed: (f64, Vec3),
    pub lambda: f64,
    pub m_star: f64,
    /// `D_j = ε_j^{−m*} ∫_{Q_{2ε_j}} (|∇√f|² + ∫|F|² dw)` for `j = 1, 2, …`.
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    /// First scale index that was not resolved (`h > ε_j/4` or `4ε_j² ≥ t₀`), if the scan stopped early.
    pub floor_index: Option<usize>,
    pub flagged: bool,
}

impl ScanResult {
    /// `ε_j` at the finest computed scale.
    pub fn finest_scale(&self) -> Option<f64> {
        if self.d.is_empty() {
            None
        } else {
            Some(self.lambda.powi(self.d.len() as i32))
        }
    }

    /// Flag when the finest computed `D_j` exceeds `2η`.
    pub fn flag(&mut self, eta: f64) -> bool {
        self.flagged = self.d.last().map(|&d| d > 2.0 * eta).unwrap_or(false);
        self.flagged
    }
}

/// Scan scales `ε_j = λ^j`, `j = 1..=j_max`, stopping at the resolution floor.
pub fn dissipation_scan(traj: &Trajectory, t0: f64, v0: Vec3, lambda: f64, j_max: usize, op: &CollisionOperator) -> Result<ScanResult> {
    if !(lambda > 0.0 && lambda < 0.25) {
        return Err(Error::Domain(format!("lambda = {lambda} outside (0, 1/4)")));
    }
    let m = m_star(op.model.gamma)?;
    let h = traj.grid().h();
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; traj.frames().len()];
    let mut d = Vec::new();
    let mut floor_index = None;
    for j in 1..=j_max {
        let eps = lambda.powi(j as i32);
        if h > eps / 4.0 || 4.0 * eps * eps >= t0 {
            floor_index = Some(j);
            break;
        }
        let view = ScaledView::new(traj, t0, v0, 1.0)?;
        view.check(2.0 * eps)?;
        let mut failure = None;
        let (_, diss) = view.integrate(2.0 * eps, |k, f| {
            if cache[k].is_none() {
                match op.dissipation_density(f) {
                    Ok((e, _)) => cache[k] = Some(e),
                    Err(err) => {
                        failure = Some(err);
                        return vec![0.0; f.values.len()];
                    }
                }
            }
            cache[k].clone().unwrap()
        });
        if let Some(err) = failure {
            return Err(err);
        }
        let (_, grad) = view.integrate(2.0 * eps, |_, f| {
            let root: Vec<f64> = f.values.iter().map(|x| x.sqrt()).collect();
            view.gradient(&root).iter().map(|g| g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).collect()
        });
        d.push(eps.powf(-m) * (grad + diss));
    }
    Ok(ScanResult { seed: (t0, v0), lambda, m_star: m, d, floor_index, flagged: false })
}

/// Exact disjointness of `(t−r², t] × B_r(v)` and `(t′−r′², t′] × B_{r′}(v′)`.
pub fn disjoint(a: &ParabolicCylinder, b: &ParabolicCylinder) -> bool {
    let times = a.t0 <= b.t_start() || b.t0 <= a.t_start();
    times || dist(a.v0, b.v0) >= a.r + b.r
}

/// The enlargement of a cylinder that contains every cylinder of no larger radius meeting it:
/// radius `5r` with the top time raised by `r²`.
pub fn five_expansion(c: &ParabolicCylinder) -> ParabolicCylinder {
    ParabolicCylinder { t0: c.t0 + c.r * c.r, v0: c.v0, r: 5.0 * c.r }
}

/// `inner ⊂ outer` for closed-open parabolic cylinders.
pub fn contains(outer: &ParabolicCylinder, inner: &ParabolicCylinder) -> bool {
    inner.t0 <= outer.t0 && inner.t_start() >= outer.t_start() && dist(inner.v0, outer.v0) + inner.r <= outer.r
}

/// Greedy Vitali selection in decreasing-radius order; returns indices into `cyls`.
pub fn vitali_cover(cyls: &[ParabolicCylinder]) -> Result<Vec<usize>> {
    if let Some(c) = cyls.iter().find(|c| !(c.r > 0.0 && c.r < 1.0)) {
        return Err(Error::Validation(format!("cylinder radius {} outside (0, 1)", c.r)));
    }
    let mut order: Vec<usize> = (0..cyls.len()).collect();
    order.sort_by(|&a, &b| cyls[b].r.total_cmp(&cyls[a].r));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if chosen.iter().all(|&s| disjoint(&cyls[s], &cyls[i])) {
            chosen.push(i);
        }
    }
    Ok(chosen)
}

/// Default flag threshold for scans. The theoretical value chains
/// non-constructive constants; this one keeps smooth equilibria with unit
/// mass and temperature down to 0.04 unflagged at the first resolved scale.
pub const ETA_DG_PLUS_DEFAULT: f64 = 250.0;

/// Covering estimate over a set of scans.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HausdorffReport {
    pub eta_dg_plus: f64,
    pub m_star: f64,
    pub flagged: Vec<usize>,
    pub selected: Vec<ParabolicCylinder>,
    /// `Σ (5r)^{m*}` over the selected cylinders.
    pub bound: f64,
}

pub fn hausdorff_upper_bound(scans: &[ScanResult], eta_dg_plus: f64, m_star: f64) -> Result<HausdorffReport> {
    if let Some(first) = scans.first() {
        if let Some(s) = scans.iter().find(|s| s.lambda != first.lambda) {
            return Err(Error::Validation(format!("inconsistent lambda across scans: {} vs {}", first.lambda, s.lambda)));
        }
    }
    let mut flagged = Vec::new();
    let mut cyls = Vec::new();
    for (i, s) in scans.iter().enumerate() {
        let mut s = s.clone();
        if s.flag(eta_dg_plus) {
            flagged.push(i);
            let r = s.finest_scale().expect("flagged scans have a scale");
            cyls.push(ParabolicCylinder { t0: s.seed.0, v0: s.seed.1, r });
        }
    }
    let chosen = vitali_cover(&cyls)?;
    let selected: Vec<ParabolicCylinder> = chosen.iter().map(|&i| cyls[i]).collect();
    let bound = selected.iter().fold(0.0, |acc, c| acc + (5.0 * c.r).powf(m_star));
    Ok(HausdorffReport { eta_dg_plus, m_star, flagged, selected, bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_star_values() {
        assert_eq!(m_star(-3.0).unwrap(), 3.5);
        assert!((m_star(-12.0 / 5.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(m_star_formula(-2.0), 1.0);
        assert!(matches!(m_star(-2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn schedules() {
        assert_eq!(radius_schedule(0), 1.0);
        assert_eq!(level_schedule(0), 1.0);
        for j in 0..40 {
            assert_eq!(radius_schedule(j) - radius_schedule(j + 1), 0.5f64.powi(j as i32 + 2));
            assert_eq!(half_level(j) - level_schedule(j), 0.5f64.powi(j as i32 + 2));
        }
    }

    #[test]
    fn recurrence_zero_and_blowup() {
        let t = degiorgi_recurrence(0.0, 1.0, 1.0, 10).unwrap();
        assert!(t.u().iter().all(|&u| u == 0.0));
        let t = degiorgi_recurrence(10.0, 1.0, 1.0, 20).unwrap();
        assert!(!t.vanishes);
        assert!(t.log_u.windows(2).all(|w| w[1] > w[0]));
        assert!(t.log_u.last().unwrap() > &1e3);
    }

    #[test]
    fn recurrence_at_threshold() {
        for c2 in [1.0, 2.0, 10.0] {
            for z in [1.0, 2.0, 10.0] {
                let u0 = eta_dg(c2) * f64::powf(z, -1.5);
                let t = degiorgi_recurrence(u0, z, c2, 30).unwrap();
                assert!(t.vanishes);
                assert!(t.violations.is_empty(), "{c2} {z}: {:?}", t.violations);
            }
        }
    }

    #[test]
    fn identical_cylinders() {
        let c = ParabolicCylinder { t0: 1.0, v0: [0.0; 3], r: 0.3 };
        let sel = vitali_cover(&[c, c]).unwrap();
        assert_eq!(sel.len(), 1);
        assert!(contains(&five_expansion(&c), &c));
    }

    #[test]
    fn unshifted_expansion_misses_later_cylinders() {
        let big = ParabolicCylinder { t0: 0.0, v0: [0.0; 3], r: 0.5 };
        let late = ParabolicCylinder { t0: 0.1, v0: [0.0; 3], r: 0.5 };
        assert!(!disjoint(&big, &late));
        let plain = ParabolicCylinder { r: 2.5, ..big };
        assert!(!contains(&plain, &late));
        assert!(contains(&five_expansion(&big), &late));
    }

    #[test]
    fn radius_validation() {
        let c = ParabolicCylinder { t0: 1.0, v0: [0.0; 3], r: 1.0 };
        assert!(matches!(vitali_cover(&[c]), Err(Error::Validation(_))));
    }

    #[test]
    fn single_flag_bound() {
        let s = ScanResult { seed: (1.0, [0.0; 3]), lambda: 0.125, m_star: 3.5, d: vec![0.0, 5.0], floor_index: Some(3), flagged: false };
        let r = hausdorff_upper_bound(&[s], 1.0, 3.5).unwrap();
        assert_eq!(r.flagged, vec![0]);
        assert_eq!(r.bound, (5.0 * 0.125f64.powi(2)).powf(3.5));
        let none = hausdorff_upper_bound(&[], 1.0, 3.5).unwrap();
        assert_eq!(none.bound, 0.0);
    }
}
