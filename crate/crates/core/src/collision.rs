//! Assembly of `A = a_n ⋆ f`, the drift `∇·A`, the collision right-hand side
//! and the pair dissipation field
//! `F(v,w) = √a(v−w) √(f(v)f(w)) (∇ln f(v) − ∇ln f(w))`.

use crate::conv::{ConvPath, Fft3, OffsetKernel};
use crate::error::{Error, Result};
use crate::fields::{DistributionField, VelocityGrid};
use crate::kernel::{
    kernel_divergence, kernel_hessian_trace, kernel_matrix, kernel_sqrt_variant, mat_vec, sym_eigenvalues, KernelModel, Mat3,
    Variant, Vec3,
};
use crate::par::map_range;
use rustfft::num_complex::Complex;

/// Relative floor under `f` inside logarithms.
pub const LOG_FLOOR: f64 = 1e-30;

/// Upper-triangle order of the six independent matrix entries.
const SYM: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn sym_slot(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    SYM.iter().position(|&p| p == (i, j)).unwrap()
}

/// One symmetric matrix per node, stored as its six upper-triangle entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub grid: VelocityGrid,
    pub entries: Vec<[f64; 6]>,
}

impl MatrixField {
    pub fn at(&self, idx: usize) -> Mat3 {
        let e = &self.entries[idx];
        [[e[0], e[1], e[2]], [e[1], e[3], e[4]], [e[2], e[4], e[5]]]
    }

    /// Smallest eigenvalue over all nodes and the largest absolute entry (the scale).
    pub fn eigen_floor(&self) -> (f64, f64) {
        let scale = self.entries.iter().flat_map(|e| e.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        let min = (0..self.entries.len()).map(|i| sym_eigenvalues(&self.at(i))[0]).fold(f64::INFINITY, f64::min);
        (min, scale)
    }

    pub fn is_psd(&self) -> bool {
        let (min, scale) = self.eigen_floor();
        min >= -1e-12 * scale
    }

    /// Largest eigenvalue over the grid.
    pub fn max_eigenvalue(&self) -> f64 {
        (0..self.entries.len()).map(|i| sym_eigenvalues(&self.at(i))[2]).fold(0.0, f64::max)
    }
}

/// Which form of the collision operator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// `∇·(A∇f − (∇·A) f)` with centered differences.
    Divergence,
    /// `Tr[A∇²f] + f (ϱ ⋆ f)`, where `ϱ = −∇²:a_n` is the smeared `8πδ₀` (Coulomb only).
    NonDivergence,
    /// `∇·J` with `J = f (A ∇ln f − a ⋆ (f ∇ln f))`; Maxwellians are exact discrete equilibria.
    Entropic,
}

/// A single `F(v,w)` sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationSample {
    pub v: usize,
    pub w: usize,
    pub value: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub samples: Vec<DissipationSample>,
    /// `½ ΣΣ |F|² h⁶`, scaled up by the subsampling factor.
    pub total: f64,
    /// Nodes whose value sits below the log floor; pairs touching them are skipped.
    pub masked_nodes: usize,
}

const N_KERNELS: usize = 10;
const K_DIV: usize = 6;
const K_RHO: usize = 9;

/// Kernel samples (and their spectra on the FFT path) for one grid and model.
pub struct CollisionOperator {
    pub grid: VelocityGrid,
    pub model: KernelModel,
    pub variant: Variant,
    path: ConvPath,
    kernels: Vec<OffsetKernel>,
    fft: Option<(Fft3, Vec<Vec<Complex<f64>>>)>,
}

impl std::fmt::Debug for CollisionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CollisionOperator")
            .field("grid", &self.grid)
            .field("model", &self.model)
            .field("variant", &self.variant)
            .field("path", &self.path)
            .finish()
    }
}

/// Fails when the mollification shell `1/(2n)` is below half a grid step.
pub fn check_resolution(grid: &VelocityGrid, model: &KernelModel) -> Result<()> {
    if 1.0 / (2.0 * model.n_reg) < grid.h() / 2.0 {
        return Err(Error::Config(format!(
            "n_reg = {} unresolved on grid spacing h = {}: need 1/(2n) >= h/2",
            model.n_reg,
            grid.h()
        )));
    }
    Ok(())
}

impl CollisionOperator {
    pub fn new(grid: VelocityGrid, model: KernelModel, variant: Variant, path: ConvPath) -> Result<Self> {
        if matches!(variant, Variant::Mollified | Variant::InPartMollified | Variant::OutPartMollified) {
            check_resolution(&grid, &model)?;
        }
        let path = path.resolve(grid.n);
        let mut kernels = Vec::with_capacity(N_KERNELS);
        for &(i, j) in &SYM {
            kernels.push(OffsetKernel::sample(&grid, |z| kernel_matrix(z, &model, variant).map(|m| m[i][j]).unwrap_or(0.0)));
        }
        for d in 0..3 {
            kernels.push(OffsetKernel::sample(&grid, |z| kernel_divergence(z, &model, variant).map(|v| v[d]).unwrap_or(0.0)));
        }
        kernels.push(OffsetKernel::sample(&grid, |z| kernel_hessian_trace(z, &model, variant).map(|x| -x).unwrap_or(0.0)));
        let fft = if path == ConvPath::Fft {
            let fft = Fft3::new(grid.n);
            let spectra = kernels.iter().map(|k| fft.forward_kernel(k)).collect();
            Some((fft, spectra))
        } else {
            None
        };
        Ok(Self { grid, model, variant, path, kernels, fft })
    }

    pub fn path(&self) -> ConvPath {
        self.path
    }

    /// Each output is `Σ (kernel ⋆ input)` over its list of `(kernel, input)` pairs.
    fn conv_many(&self, inputs: &[&[f64]], outputs: &[Vec<(usize, usize)>]) -> Vec<Vec<f64>> {
        let h3 = self.grid.cell_volume();
        match &self.fft {
            Some((fft, spectra)) => {
                let specs: Vec<Vec<Complex<f64>>> = inputs.iter().map(|f| fft.forward_field(f)).collect();
                outputs
                    .iter()
                    .map(|terms| {
                        let pairs: Vec<_> =
                            terms.iter().map(|&(k, i)| (spectra[k].as_slice(), specs[i].as_slice())).collect();
                        fft.inverse_to_grid(crate::conv::spectral_sum(&pairs), h3)
                    })
                    .collect()
            }
            None => outputs
                .iter()
                .map(|terms| {
                    let mut acc = vec![0.0; self.grid.len()];
                    for &(k, i) in terms {
                        let c = crate::conv::convolve_direct(&self.grid, &self.kernels[k], inputs[i]);
                        acc.iter_mut().zip(c).for_each(|(a, x)| *a += x);
                    }
                    acc
                })
                .collect(),
        }
    }

    fn check(&self, f: &DistributionField) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::Validation("field grid differs from operator grid".into()));
        }
        Ok(())
    }

    /// `A = a_var ⋆ f`.
    pub fn diffusion_matrix(&self, f: &DistributionField) -> Result<MatrixField> {
        self.check(f)?;
        let outs: Vec<Vec<(usize, usize)>> = (0..6).map(|k| vec![(k, 0)]).collect();
        let c = self.conv_many(&[&f.values], &outs);
        Ok(to_matrix_field(self.grid, &c))
    }

    /// `b = (∇·a_var) ⋆ f`.
    pub fn drift_field(&self, f: &DistributionField) -> Result<Vec<Vec3>> {
        self.check(f)?;
        let outs: Vec<Vec<(usize, usize)>> = (0..3).map(|d| vec![(K_DIV + d, 0)]).collect();
        let c = self.conv_many(&[&f.values], &outs);
        Ok(zip3(&c))
    }

    /// `A`, and `(a ⋆ g)ᵢ = Σⱼ aᵢⱼ ⋆ gⱼ` for a vector field `g`.
    pub fn matrix_and_vector_conv(&self, f: &[f64], g: &[Vec3]) -> (MatrixField, Vec<Vec3>) {
        let gs: Vec<Vec<f64>> = (0..3).map(|d| g.iter().map(|x| x[d]).collect()).collect();
        let inputs: Vec<&[f64]> = vec![f, &gs[0], &gs[1], &gs[2]];
        let mut outs: Vec<Vec<(usize, usize)>> = (0..6).map(|k| vec![(k, 0)]).collect();
        for i in 0..3 {
            outs.push((0..3).map(|j| (sym_slot(i, j), 1 + j)).collect());
        }
        let c = self.conv_many(&inputs, &outs);
        (to_matrix_field(self.grid, &c[..6]), zip3(&c[6..]))
    }

    /// `ϱ ⋆ f` with `ϱ = −∇²:a_var` (absolutely continuous part).
    pub fn smeared_dirac(&self, f: &DistributionField) -> Vec<f64> {
        self.conv_many(&[&f.values], &[vec![(K_RHO, 0)]]).remove(0)
    }

    /// Discrete mass of `ϱ` divided by `8π`: how much of the Coulomb Dirac the grid retains.
    pub fn dirac_mass_fraction(&self) -> f64 {
        let h3 = self.grid.cell_volume();
        self.kernels[K_RHO].values.iter().sum::<f64>() * h3 / (8.0 * std::f64::consts::PI)
    }

    pub fn collision_rhs(&self, f: &DistributionField, form: Form) -> Result<Vec<f64>> {
        self.check(f)?;
        match form {
            Form::Divergence => {
                let a = self.diffusion_matrix(f)?;
                let b = self.drift_field(f)?;
                let g = centered_gradient(&self.grid, &f.values);
                let flux: Vec<Vec3> = (0..self.grid.len())
                    .map(|i| {
                        let ag = mat_vec(&a.at(i), g[i]);
                        [ag[0] - b[i][0] * f.values[i], ag[1] - b[i][1] * f.values[i], ag[2] - b[i][2] * f.values[i]]
                    })
                    .collect();
                Ok(centered_divergence(&self.grid, &flux))
            }
            Form::NonDivergence => {
                if self.model.gamma != -3.0 {
                    return Err(Error::Unsupported(format!(
                        "non-divergence form needs gamma = -3, got {}",
                        self.model.gamma
                    )));
                }
                let a = self.diffusion_matrix(f)?;
                let rho = self.smeared_dirac(f);
                let hess = centered_hessian(&self.grid, &f.values);
                Ok((0..self.grid.len())
                    .map(|i| {
                        let m = a.at(i);
                        let tr: f64 = (0..3).flat_map(|p| (0..3).map(move |q| (p, q))).map(|(p, q)| m[p][q] * hess[i][p][q]).sum();
                        tr + f.values[i] * rho[i]
                    })
                    .collect())
            }
            Form::Entropic => {
                let (flux, _) = self.entropic_flux(f);
                Ok(centered_divergence(&self.grid, &flux))
            }
        }
    }

    /// `J = f (A g − a ⋆ (f g))` with `g = ∇ln f`, together with `A`.
    pub fn entropic_flux(&self, f: &DistributionField) -> (Vec<Vec3>, MatrixField) {
        let g = log_gradient(f);
        let fg: Vec<Vec3> = g.iter().zip(&f.values).map(|(g, &x)| [x * g[0], x * g[1], x * g[2]]).collect();
        let (a, c) = self.matrix_and_vector_conv(&f.values, &fg);
        let flux = map_range(self.grid.len(), |i| {
            let ag = mat_vec(&a.at(i), g[i]);
            let x = f.values[i];
            [x * (ag[0] - c[i][0]), x * (ag[1] - c[i][1]), x * (ag[2] - c[i][2])]
        });
        (flux, a)
    }

    /// Pointwise dissipation density `e(v) = Σ_w |F(v,w)|² h³`, computed by convolution.
    ///
    /// Expanding the square gives
    /// `e = f [gᵀAg − 2 g·(a ⋆ fg) + Σᵢⱼ aᵢⱼ ⋆ (f gᵢ gⱼ)]`.
    pub fn dissipation_density(&self, f: &DistributionField) -> Result<(Vec<f64>, usize)> {
        self.dissipation_density_with(f, &log_gradient(f))
    }

    /// Dissipation density with `∇ln f` replaced by an arbitrary vector field `g`.
    pub fn dissipation_density_with(&self, f: &DistributionField, g: &[Vec3]) -> Result<(Vec<f64>, usize)> {
        self.check(f)?;
        let (vals, masked) = masked_values(f);
        let mut inputs: Vec<Vec<f64>> = vec![vals.clone()];
        for d in 0..3 {
            inputs.push(vals.iter().zip(g).map(|(x, g)| x * g[d]).collect());
        }
        for &(i, j) in &SYM {
            inputs.push(vals.iter().zip(g).map(|(x, g)| x * g[i] * g[j]).collect());
        }
        let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let mut outs: Vec<Vec<(usize, usize)>> = (0..6).map(|k| vec![(k, 0)]).collect();
        for i in 0..3 {
            outs.push((0..3).map(|j| (sym_slot(i, j), 1 + j)).collect());
        }
        // Σᵢⱼ aᵢⱼ ⋆ (f gᵢ gⱼ): off-diagonal slots appear twice
        outs.push((0..6).flat_map(|s| {
            let (i, j) = SYM[s];
            let times = if i == j { 1 } else { 2 };
            std::iter::repeat_n((s, 4 + s), times)
        }).collect());
        let c = self.conv_many(&refs, &outs);
        let a = to_matrix_field(self.grid, &c[..6]);
        let ag = zip3(&c[6..9]);
        let quad = &c[9];
        let e = map_range(self.grid.len(), |i| {
            let x = vals[i];
            if x == 0.0 {
                return 0.0;
            }
            let gi = g[i];
            let m = a.at(i);
            let agi = mat_vec(&m, gi);
            let gag = gi[0] * agi[0] + gi[1] * agi[1] + gi[2] * agi[2];
            let cross = gi[0] * ag[i][0] + gi[1] * ag[i][1] + gi[2] * ag[i][2];
            (x * (gag - 2.0 * cross + quad[i])).max(0.0)
        });
        Ok((e, masked))
    }

    /// `½ ΣΣ |F|² h⁶` via the convolution identity.
    pub fn total_dissipation(&self, f: &DistributionField) -> Result<f64> {
        let (e, _) = self.dissipation_density(f)?;
        Ok(0.5 * e.iter().sum::<f64>() * self.grid.cell_volume())
    }

    /// Explicit pair samples; `stride` subsamples both nodes of a pair.
    pub fn dissipation_pairs(&self, f: &DistributionField, stride: usize) -> Result<DissipationReport> {
        self.dissipation_pairs_with(f, &log_gradient(f), stride)
    }

    /// Pair samples with `∇ln f` replaced by `g`.
    pub fn dissipation_pairs_with(&self, f: &DistributionField, g: &[Vec3], stride: usize) -> Result<DissipationReport> {
        self.check(f)?;
        let stride = stride.max(1);
        let (vals, masked) = masked_values(f);
        let h3 = self.grid.cell_volume();
        let nodes: Vec<usize> = (0..self.grid.len()).step_by(stride).collect();
        let rows = map_range(nodes.len(), |a| {
            let v = nodes[a];
            let mut out = Vec::new();
            let mut sum = 0.0;
            for &w in &nodes {
                if v == w {
                    continue;
                }
                let value = pair_value(&self.grid, &self.model, self.variant, &vals, g, v, w);
                sum += value[0] * value[0] + value[1] * value[1] + value[2] * value[2];
                out.push(DissipationSample { v, w, value });
            }
            (out, sum)
        });
        let mut samples = Vec::new();
        let mut total = 0.0;
        for (s, t) in rows {
            samples.extend(s);
            total += t;
        }
        let factor = (stride * stride) as f64;
        Ok(DissipationReport { samples, total: 0.5 * total * h3 * h3 * factor, masked_nodes: masked })
    }
}

fn pair_value(grid: &VelocityGrid, model: &KernelModel, variant: Variant, f: &[f64], g: &[Vec3], v: usize, w: usize) -> Vec3 {
    let (fv, fw) = (f[v], f[w]);
    if fv == 0.0 || fw == 0.0 {
        return [0.0; 3];
    }
    let pv = grid.position(v);
    let pw = grid.position(w);
    let z = [pv[0] - pw[0], pv[1] - pw[1], pv[2] - pw[2]];
    let s = match kernel_sqrt_variant(z, model, variant) {
        Ok(s) => s,
        Err(_) => return [0.0; 3],
    };
    let d = [g[v][0] - g[w][0], g[v][1] - g[w][1], g[v][2] - g[w][2]];
    let sd = mat_vec(&s, d);
    let c = (fv * fw).sqrt();
    [c * sd[0], c * sd[1], c * sd[2]]
}

/// Values with nodes under the log floor set to zero, and their count.
fn masked_values(f: &DistributionField) -> (Vec<f64>, usize) {
    let floor = LOG_FLOOR * f.max();
    let mut masked = 0;
    let vals = f
        .values
        .iter()
        .map(|&x| {
            if x <= floor {
                masked += 1;
                0.0
            } else {
                x
            }
        })
        .collect();
    (vals, masked)
}

/// `∇ ln max(f, 10⁻³⁰ max f)`.
pub fn log_gradient(f: &DistributionField) -> Vec<Vec3> {
    let floor = (LOG_FLOOR * f.max()).max(f64::MIN_POSITIVE);
    f.gradient_of(|x| x.max(floor).ln())
}

fn to_matrix_field(grid: VelocityGrid, c: &[Vec<f64>]) -> MatrixField {
    let entries = (0..grid.len()).map(|i| [c[0][i], c[1][i], c[2][i], c[3][i], c[4][i], c[5][i]]).collect();
    MatrixField { grid, entries }
}

fn zip3(c: &[Vec<f64>]) -> Vec<Vec3> {
    (0..c[0].len()).map(|i| [c[0][i], c[1][i], c[2][i]]).collect()
}

fn shifted(grid: &VelocityGrid, w: &[f64], idx: usize, d: usize, s: isize) -> f64 {
    let (ix, iy, iz) = grid.unindex(idx);
    let mut p = [ix as isize, iy as isize, iz as isize];
    p[d] += s;
    if p[d] < 0 || p[d] >= grid.n as isize {
        return 0.0;
    }
    w[grid.index(p[0] as usize, p[1] as usize, p[2] as usize)]
}

/// Centered gradient with zero extension outside the grid.
pub fn centered_gradient(grid: &VelocityGrid, w: &[f64]) -> Vec<Vec3> {
    let h2 = 2.0 * grid.h();
    (0..grid.len())
        .map(|i| {
            let mut g = [0.0; 3];
            for (d, gd) in g.iter_mut().enumerate() {
                *gd = (shifted(grid, w, i, d, 1) - shifted(grid, w, i, d, -1)) / h2;
            }
            g
        })
        .collect()
}

/// Centered divergence with zero extension; the negative adjoint of [`centered_gradient`].
pub fn centered_divergence(grid: &VelocityGrid, j: &[Vec3]) -> Vec<f64> {
    let comps: Vec<Vec<f64>> = (0..3).map(|d| j.iter().map(|x| x[d]).collect()).collect();
    let h2 = 2.0 * grid.h();
    (0..grid.len())
        .map(|i| (0..3).map(|d| (shifted(grid, &comps[d], i, d, 1) - shifted(grid, &comps[d], i, d, -1)) / h2).sum())
        .collect()
}

/// Second differences: compact on the diagonal, four-point on mixed entries.
pub fn centered_hessian(grid: &VelocityGrid, w: &[f64]) -> Vec<Mat3> {
    let h = grid.h();
    let n = grid.n as isize;
    let at = |ix: isize, iy: isize, iz: isize| -> f64 {
        if ix < 0 || iy < 0 || iz < 0 || ix >= n || iy >= n || iz >= n {
            0.0
        } else {
            w[grid.index(ix as usize, iy as usize, iz as usize)]
        }
    };
    (0..grid.len())
        .map(|i| {
            let (x, y, z) = grid.unindex(i);
            let p = [x as isize, y as isize, z as isize];
            let get = |o: [isize; 3]| at(p[0] + o[0], p[1] + o[1], p[2] + o[2]);
            let mut m = [[0.0; 3]; 3];
            for a in 0..3 {
                let mut e = [0isize; 3];
                e[a] = 1;
                let plus = get(e);
                e[a] = -1;
                let minus = get(e);
                m[a][a] = (plus - 2.0 * w[i] + minus) / (h * h);
                for b in a + 1..3 {
                    let corner = |sa: isize, sb: isize| {
                        let mut o = [0isize; 3];
                        o[a] = sa;
                        o[b] = sb;
                        get(o)
                    };
                    let v = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4.0 * h * h);
                    m[a][b] = v;
                    m[b][a] = v;
                }
            }
            m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::norm;

    fn gaussian(grid: VelocityGrid) -> DistributionField {
        let c = (2.0 * std::f64::consts::PI).powf(-1.5);
        DistributionField::from_fn(grid, 0.0, |v| c * (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp())
    }

    #[test]
    fn point_mass_gives_scaled_kernel() {
        let grid = VelocityGrid::new(8, 4.0).unwrap();
        let model = KernelModel::new(-2.5, 0.5, 1.0).unwrap();
        let op = CollisionOperator::new(grid, model, Variant::Mollified, ConvPath::Fft).unwrap();
        let mut f = DistributionField::zeros(grid, 0.0);
        let w0 = grid.index(2, 5, 4);
        f.values[w0] = 3.0;
        let a = op.diffusion_matrix(&f).unwrap();
        let b = op.drift_field(&f).unwrap();
        let h3 = grid.cell_volume();
        for i in 0..grid.len() {
            let p = grid.position(i);
            let q = grid.position(w0);
            let z = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            let expect = kernel_matrix(z, &model, Variant::Mollified).unwrap();
            let got = a.at(i);
            for r in 0..3 {
                for c in 0..3 {
                    assert!((got[r][c] - 3.0 * expect[r][c] * h3).abs() < 1e-12);
                }
            }
            if norm(z) > 0.0 {
                let d = kernel_divergence(z, &model, Variant::Mollified).unwrap();
                for r in 0..3 {
                    assert!((b[i][r] - 3.0 * d[r] * h3).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unresolved_mollifier_is_config_error() {
        let grid = VelocityGrid::new(8, 4.0).unwrap(); // h = 1
        let model = KernelModel::coulomb(2.0); // 1/(2n) = 0.25 < 0.5
        let err = CollisionOperator::new(grid, model, Variant::Mollified, ConvPath::Auto).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_field_zero_rhs() {
        let grid = VelocityGrid::new(8, 4.0).unwrap();
        let op = CollisionOperator::new(grid, KernelModel::coulomb(1.0), Variant::Mollified, ConvPath::Auto).unwrap();
        let f = DistributionField::zeros(grid, 0.0);
        for form in [Form::Divergence, Form::NonDivergence, Form::Entropic] {
            assert!(op.collision_rhs(&f, form).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn nondivergence_needs_coulomb() {
        let grid = VelocityGrid::new(8, 4.0).unwrap();
        let op = CollisionOperator::new(grid, KernelModel::new(-2.5, 0.5, 1.0).unwrap(), Variant::Mollified, ConvPath::Auto).unwrap();
        let f = gaussian(grid);
        assert!(matches!(op.collision_rhs(&f, Form::NonDivergence), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gaussian_diffusion_matrix_is_isotropic_at_origin() {
        let grid = VelocityGrid::new(16, 6.0).unwrap();
        let op = CollisionOperator::new(grid, KernelModel::coulomb(1.0), Variant::Mollified, ConvPath::Fft).unwrap();
        let f = DistributionField::from_fn(grid, 0.0, |v| {
            let c = (2.0 * std::f64::consts::PI).powf(-1.5);
            c * (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp()
        });
        let a = op.diffusion_matrix(&f).unwrap();
        let m = a.at(grid.index(8, 8, 8));
        for r in 0..3 {
            for c in 0..3 {
                if r != c {
                    assert!(m[r][c].abs() < 1e-3 * m[0][0]);
                }
            }
        }
        assert!(a.is_psd());
    }

    #[test]
    fn antisymmetric_pairs() {
        let grid = VelocityGrid::new(8, 3.0).unwrap();
        let op = CollisionOperator::new(grid, KernelModel::coulomb(1.0), Variant::Mollified, ConvPath::Direct).unwrap();
        let f = DistributionField::from_fn(grid, 0.0, |v| (-(v[0] - 0.5).powi(2) - v[1] * v[1] - 2.0 * v[2] * v[2]).exp());
        let rep = op.dissipation_pairs(&f, 37).unwrap();
        for s in &rep.samples {
            let back = rep.samples.iter().find(|t| t.v == s.w && t.w == s.v).unwrap();
            for d in 0..3 {
                assert_eq!(s.value[d], -back.value[d]);
            }
        }
    }
}
