//! Discrete convolution `(K ⋆ f)(vᵢ) = Σⱼ K(vᵢ − vⱼ) f(vⱼ) h³` on a grid.
//!
//! Two paths: a direct double sum and a zero-padded FFT on a `(2n)³` torus.
//! Offsets `vᵢ − vⱼ` range over `(−n, n)` grid steps per axis, so the
//! circular convolution on the padded torus equals the linear one.

use crate::fields::VelocityGrid;
use crate::kernel::Vec3;
use crate::par::{for_each_chunk, map_range};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

type C64 = Complex<f64>;

/// Convolution path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvPath {
    Direct,
    Fft,
    /// Direct up to 16 nodes per axis, FFT above.
    Auto,
}

impl ConvPath {
    pub fn resolve(self, n: usize) -> ConvPath {
        match self {
            ConvPath::Auto if n <= 16 => ConvPath::Direct,
            ConvPath::Auto => ConvPath::Fft,
            p => p,
        }
    }
}

/// A kernel sampled on all grid offsets, stored on the padded `(2n)³` torus.
#[derive(Debug, Clone)]
pub struct OffsetKernel {
    pub m: usize,
    pub values: Vec<f64>,
}

impl OffsetKernel {
    pub fn sample(grid: &VelocityGrid, k: impl Fn(Vec3) -> f64 + Sync + Send) -> Self {
        let n = grid.n as isize;
        let m = 2 * grid.n;
        let h = grid.h();
        let values = map_range(m * m * m, |idx| {
            let a = [idx % m, (idx / m) % m, idx / (m * m)];
            let mut z = [0.0; 3];
            for d in 0..3 {
                let o = a[d] as isize;
                let off = if o < n { o } else if o > n { o - 2 * n } else { return 0.0 };
                z[d] = off as f64 * h;
            }
            k(z)
        });
        Self { m, values }
    }

    fn at_offset(&self, d: [isize; 3]) -> f64 {
        let m = self.m as isize;
        let w = |x: isize| x.rem_euclid(m) as usize;
        self.values[w(d[0]) + self.m * (w(d[1]) + self.m * w(d[2]))]
    }
}

/// Direct `O(N⁶)` convolution; the oracle for the FFT path.
pub fn convolve_direct(grid: &VelocityGrid, kernel: &OffsetKernel, f: &[f64]) -> Vec<f64> {
    let h3 = grid.cell_volume();
    let support: Vec<(usize, f64)> = f.iter().cloned().enumerate().filter(|(_, x)| *x != 0.0).collect();
    map_range(grid.len(), |i| {
        let (ix, iy, iz) = grid.unindex(i);
        let mut acc = 0.0;
        for &(j, fj) in &support {
            let (jx, jy, jz) = grid.unindex(j);
            let d = [ix as isize - jx as isize, iy as isize - jy as isize, iz as isize - jz as isize];
            acc += kernel.at_offset(d) * fj;
        }
        acc * h3
    })
}

/// 3-D FFT on the `(2n)³` torus with cached plans.
pub struct Fft3 {
    pub n: usize,
    pub m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft3 {{ n: {}, m: {} }}", self.n, self.m)
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        Self { n, m, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        let m = self.m;
        let plan = if inverse { &self.inv } else { &self.fwd };
        // x lines are contiguous
        for_each_chunk(data, m, |_, line| plan.process(line));
        // y lines: within each z plane
        for_each_chunk(data, m * m, |_, plane| {
            let mut col = vec![C64::default(); m];
            for x in 0..m {
                for y in 0..m {
                    col[y] = plane[x + m * y];
                }
                plan.process(&mut col);
                for y in 0..m {
                    plane[x + m * y] = col[y];
                }
            }
        });
        // z lines: gather, transform, scatter
        let cols = map_range(m * m, |xy| {
            let mut col: Vec<C64> = (0..m).map(|z| data[xy + m * m * z]).collect();
            plan.process(&mut col);
            col
        });
        for (xy, col) in cols.into_iter().enumerate() {
            for (z, c) in col.into_iter().enumerate() {
                data[xy + m * m * z] = c;
            }
        }
    }

    /// Spectrum of a grid function zero-padded onto the torus.
    pub fn forward_field(&self, f: &[f64]) -> Vec<C64> {
        let (n, m) = (self.n, self.m);
        let mut data = vec![C64::default(); m * m * m];
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    data[ix + m * (iy + m * iz)] = C64::new(f[ix + n * (iy + n * iz)], 0.0);
                }
            }
        }
        self.transform(&mut data, false);
        data
    }

    pub fn forward_kernel(&self, k: &OffsetKernel) -> Vec<C64> {
        let mut data: Vec<C64> = k.values.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform restricted to the original grid, scaled by `h³/m³`.
    pub fn inverse_to_grid(&self, mut spec: Vec<C64>, h3: f64) -> Vec<f64> {
        self.transform(&mut spec, true);
        let (n, m) = (self.n, self.m);
        let s = h3 / (m * m * m) as f64;
        let mut out = vec![0.0; n * n * n];
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    out[ix + n * (iy + n * iz)] = spec[ix + m * (iy + m * iz)].re * s;
                }
            }
        }
        out
    }
}

/// Accumulate `Σ kernelₖ · fieldₖ` in spectral space.
pub fn spectral_sum(terms: &[(&[C64], &[C64])]) -> Vec<C64> {
    let len = terms[0].0.len();
    let mut out = vec![C64::default(); len];
    for (a, b) in terms {
        for ((o, x), y) in out.iter_mut().zip(a.iter()).zip(b.iter()) {
            *o += x * y;
        }
    }
    out
}

/// One-shot convolution using the requested path.
pub fn convolve(grid: &VelocityGrid, kernel: &OffsetKernel, f: &[f64], path: ConvPath) -> Vec<f64> {
    match path.resolve(grid.n) {
        ConvPath::Direct => convolve_direct(grid, kernel, f),
        _ => {
            let fft = Fft3::new(grid.n);
            let ks = fft.forward_kernel(kernel);
            let fs = fft.forward_field(f);
            fft.inverse_to_grid(spectral_sum(&[(&ks, &fs)]), grid.cell_volume())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fft_matches_direct() {
        let grid = VelocityGrid::new(8, 3.0).unwrap();
        let k = OffsetKernel::sample(&grid, |z| {
            let r = crate::kernel::norm(z);
            if r == 0.0 { 0.0 } else { (z[0] + 0.3 * z[1] * z[2]) / (r * r * r) }
        });
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
        let a = convolve(&grid, &k, &f, ConvPath::Direct);
        let b = convolve(&grid, &k, &f, ConvPath::Fft);
        let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn delta_input_reproduces_kernel() {
        let grid = VelocityGrid::new(8, 2.0).unwrap();
        let k = OffsetKernel::sample(&grid, |z| 1.0 + z[0] - 2.0 * z[2]);
        let mut f = vec![0.0; grid.len()];
        let j = grid.index(3, 4, 5);
        f[j] = 1.0;
        let out = convolve(&grid, &k, &f, ConvPath::Fft);
        let h3 = grid.cell_volume();
        for i in 0..grid.len() {
            let p = grid.position(i);
            let q = grid.position(j);
            let expect = (1.0 + (p[0] - q[0]) - 2.0 * (p[2] - q[2])) * h3;
            assert!((out[i] - expect).abs() < 1e-12);
        }
    }
}
