//! Synthetic inputs: uniform noise, Gaussian random fields, and separable
//! Gaussian smoothing.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`. Voxel `i` always reads the same words of the
//! keystream: word `i` for uniform noise, words `4i..4i + 4` (two `u64`) for
//! Gaussian noise. Slabs can therefore be generated independently and in
//! parallel with identical output.
//!
//! * uniform f32: `(word >> 8) * 2^-24`, in `[0, 1)`; uniform u8: `word >> 24`.
//! * Gaussian: Box-Muller on `u1 = ((a >> 11) + 1) * 2^-53` and
//!   `u2 = (b >> 11) * 2^-53`, giving `sqrt(-2 ln u1) * cos(2π u2)`.

use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::grid::{Dims, Image, ValueKind, Values};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenKind {
    Uniform,
    Grf,
}

impl FromStr for GenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "noise" => Ok(GenKind::Uniform),
            "grf" | "gaussian" => Ok(GenKind::Grf),
            other => Err(Error::BadGenSpec(format!(
                "unknown kind `{other}` (expected uniform or grf)"
            ))),
        }
    }
}

pub const DEFAULT_LEVELS: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub dims: Dims,
    pub seed: u64,
    pub kind: GenKind,
    /// Smoothing σ in voxels (GRF only); 0 skips smoothing.
    pub sigma: f64,
    /// Quantization levels (GRF only).
    pub levels: usize,
    pub value_kind: ValueKind,
}

impl GenSpec {
    pub fn uniform(dims: Dims, seed: u64) -> Self {
        GenSpec {
            dims,
            seed,
            kind: GenKind::Uniform,
            sigma: 0.0,
            levels: DEFAULT_LEVELS,
            value_kind: ValueKind::F32,
        }
    }

    pub fn grf(dims: Dims, seed: u64, sigma: f64) -> Self {
        GenSpec {
            kind: GenKind::Grf,
            sigma,
            ..GenSpec::uniform(dims, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == GenKind::Grf {
            if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                return Err(Error::BadGenSpec(format!("sigma must be >= 0, got {}", self.sigma)));
            }
            if self.levels < 2 {
                return Err(Error::BadGenSpec(format!("levels must be >= 2, got {}", self.levels)));
            }
            if self.value_kind == ValueKind::U8 && self.levels > 256 {
                return Err(Error::BadGenSpec(format!(
                    "{} levels do not fit in u8",
                    self.levels
                )));
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &GenSpec) -> Result<Image> {
    match spec.kind {
        GenKind::Uniform => uniform_noise(spec),
        GenKind::Grf => generate_grf(spec),
    }
}

/// Fills `out` (voxels `first..first + out.len()`) from a keystream
/// positioned per voxel.
fn fill_words<T: Send>(seed: u64, out: &mut [T], words_per_voxel: u128, f: impl Fn(&mut ChaCha8Rng) -> T + Sync) {
    const BLOCK: usize = 1 << 16;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let fill = |(b, block): (usize, &mut [T])| {
        let mut rng = base.clone();
        rng.set_word_pos((b * BLOCK) as u128 * words_per_voxel);
        for slot in block {
            *slot = f(&mut rng);
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(BLOCK).enumerate().for_each(fill);
    }
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(BLOCK).enumerate().for_each(fill);
}

pub fn uniform_noise(spec: &GenSpec) -> Result<Image> {
    spec.validate()?;
    let n = spec.dims.voxel_count();
    let values = match spec.value_kind {
        ValueKind::F32 => {
            let mut v = vec![0f32; n];
            fill_words(spec.seed, &mut v, 1, |rng| (rng.next_u32() >> 8) as f32 * (1.0 / 16_777_216.0));
            Values::F32(v)
        }
        ValueKind::U8 => {
            let mut v = vec![0u8; n];
            fill_words(spec.seed, &mut v, 1, |rng| (rng.next_u32() >> 24) as u8);
            Values::U8(v)
        }
    };
    Image::new(spec.dims, values)
}

/// Standard normal white noise, deterministic per seed.
pub fn gaussian_noise(dims: Dims, seed: u64) -> Vec<f32> {
    let mut v = vec![0f32; dims.voxel_count()];
    fill_words(seed, &mut v, 4, |rng| {
        let a = rng.next_u64();
        let b = rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
    });
    v
}

/// Normalized sampled Gaussian of odd `width`.
pub fn gaussian_kernel(sigma: f64, width: usize) -> Result<Vec<f32>> {
    if width.is_multiple_of(2) {
        return Err(Error::BadKernelWidth(width));
    }
    let r = (width / 2) as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| {
            if sigma > 0.0 {
                (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()
            } else if k == 0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.iter().map(|w| (w / sum) as f32).collect())
}

/// Smallest odd width covering ±3σ.
pub fn width_for_sigma(sigma: f64) -> usize {
    2 * (3.0 * sigma).ceil() as usize + 1
}

/// One 1D convolution pass along `axis` with edge clamping.
fn convolve_axis(input: &[f32], dims: Dims, axis: usize, weights: &[f32]) -> Vec<f32> {
    let [w0, w1, w2] = dims.extents();
    let r = (weights.len() / 2) as isize;
    let slab = w1 * w2;
    let mut out = vec![0f32; input.len()];
    let clamp = |x: isize, w: usize| x.clamp(0, w as isize - 1) as usize;

    let plane = |(x0, dst): (usize, &mut [f32])| match axis {
        0 => {
            for (k, &wk) in weights.iter().enumerate() {
                let src = clamp(x0 as isize + k as isize - r, w0) * slab;
                for (d, &s) in dst.iter_mut().zip(&input[src..src + slab]) {
                    *d += wk * s;
                }
            }
        }
        1 => {
            let base = x0 * slab;
            for x1 in 0..w1 {
                let row = &mut dst[x1 * w2..(x1 + 1) * w2];
                for (k, &wk) in weights.iter().enumerate() {
                    let src = base + clamp(x1 as isize + k as isize - r, w1) * w2;
                    for (d, &s) in row.iter_mut().zip(&input[src..src + w2]) {
                        *d += wk * s;
                    }
                }
            }
        }
        _ => {
            let base = x0 * slab;
            for (line_no, line) in dst.chunks_exact_mut(w2).enumerate() {
                let src = &input[base + line_no * w2..base + (line_no + 1) * w2];
                for (x2, d) in line.iter_mut().enumerate() {
                    let mut acc = 0f32;
                    for (k, &wk) in weights.iter().enumerate() {
                        acc += wk * src[clamp(x2 as isize + k as isize - r, w2)];
                    }
                    *d = acc;
                }
            }
        }
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(slab).enumerate().for_each(plane);
    }
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(slab).enumerate().for_each(plane);
    out
}

/// Separable Gaussian smoothing with edge clamping; always returns F32.
pub fn gaussian_smooth(image: &Image, sigma: f64, width: usize) -> Result<Image> {
    let weights = gaussian_kernel(sigma, width)?;
    let dims = image.dims();
    let mut values = image.to_f32_vec();
    if width > 1 && sigma > 0.0 {
        for axis in 0..3 {
            if dims.extents()[axis] > 1 {
                values = convolve_axis(&values, dims, axis, &weights);
            }
        }
    }
    Image::from_f32(dims, values)
}

/// Smoothed white noise quantized to `levels` equal-width bins over its
/// realized range. Values are bin numbers `0..levels`.
pub fn generate_grf(spec: &GenSpec) -> Result<Image> {
    spec.validate()?;
    let noise = Image::from_f32(spec.dims, gaussian_noise(spec.dims, spec.seed))?;
    let field = if spec.sigma > 0.0 {
        gaussian_smooth(&noise, spec.sigma, width_for_sigma(spec.sigma))?
    } else {
        noise
    };
    let Values::F32(v) = field.into_values() else {
        unreachable!("smoothing yields f32")
    };
    let (lo, hi) = v
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let levels = spec.levels;
    let scale = if hi > lo { levels as f64 / (hi - lo) as f64 } else { 0.0 };
    let bin = |x: f32| (((x - lo) as f64 * scale) as usize).min(levels - 1);
    let values = match spec.value_kind {
        ValueKind::F32 => Values::F32(v.iter().map(|&x| bin(x) as f32).collect()),
        ValueKind::U8 => Values::U8(v.iter().map(|&x| bin(x) as u8).collect()),
    };
    Image::new(spec.dims, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_deterministic_and_in_range() {
        let spec = GenSpec::uniform(Dims::new(2, 2, 1).unwrap(), 42);
        let a = uniform_noise(&spec).unwrap();
        assert_eq!(a, uniform_noise(&spec).unwrap());
        assert!(a.to_f32_vec().iter().all(|&v| (0.0..1.0).contains(&v)));
        let other = uniform_noise(&GenSpec::uniform(spec.dims, 43)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn voxels_do_not_depend_on_block_layout() {
        // Voxel i of a large image equals voxel i of a smaller one.
        let big = uniform_noise(&GenSpec::uniform(Dims::new(300, 300, 1).unwrap(), 9)).unwrap();
        let small = uniform_noise(&GenSpec::uniform(Dims::new(7, 1, 1).unwrap(), 9)).unwrap();
        assert_eq!(&big.to_f32_vec()[..7], small.to_f32_vec().as_slice());
        let g_big = gaussian_noise(Dims::new(70_000, 1, 1).unwrap(), 3);
        let g_small = gaussian_noise(Dims::new(5, 1, 1).unwrap(), 3);
        assert_eq!(&g_big[..5], g_small.as_slice());
    }

    #[test]
    fn uniform_mean_is_one_half() {
        let img = uniform_noise(&GenSpec::uniform(Dims::new(1000, 1000, 1).unwrap(), 1)).unwrap();
        let mean = img.to_f32_vec().iter().map(|&v| v as f64).sum::<f64>() / 1e6;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gaussian_noise_moments() {
        let v = gaussian_noise(Dims::new(400_000, 1, 1).unwrap(), 8);
        let n = v.len() as f64;
        let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn kernel_is_normalized() {
        for (sigma, width) in [(2.0, 13), (0.7, 5), (8.0, 49), (1.0, 1)] {
            let w = gaussian_kernel(sigma, width).unwrap();
            assert_eq!(w.len(), width);
            let s: f64 = w.iter().map(|&x| x as f64).sum();
            assert!((s - 1.0).abs() < 1e-6, "{sigma} {width}: {s}");
            assert_eq!(w[0], w[width - 1]);
        }
        assert!(matches!(gaussian_kernel(1.0, 4), Err(Error::BadKernelWidth(4))));
    }

    #[test]
    fn smoothing_preserves_constants_and_width_one_is_identity() {
        let dims = Dims::new(6, 5, 4).unwrap();
        let flat = Image::from_f32(dims, vec![0.75; 120]).unwrap();
        let s = gaussian_smooth(&flat, 2.0, 13).unwrap();
        assert!(s.to_f32_vec().iter().all(|&v| (v - 0.75).abs() < 1e-6));

        let noise = uniform_noise(&GenSpec::uniform(dims, 4)).unwrap();
        assert_eq!(gaussian_smooth(&noise, 2.0, 1).unwrap(), noise);
    }

    #[test]
    fn grf_quantization() {
        let dims = Dims::new(32, 32, 16).unwrap();
        let img = generate_grf(&GenSpec::grf(dims, 2, 2.0)).unwrap();
        let mut v = img.to_f32_vec();
        v.sort_by(f32::total_cmp);
        v.dedup();
        assert!(v.len() <= DEFAULT_LEVELS);
        assert_eq!(v[0], 0.0);
        assert_eq!(*v.last().unwrap(), (DEFAULT_LEVELS - 1) as f32);
        assert_eq!(img, generate_grf(&GenSpec::grf(dims, 2, 2.0)).unwrap());

        let mut spec = GenSpec::grf(dims, 2, 0.0);
        spec.levels = 16;
        let raw = generate_grf(&spec).unwrap();
        assert!(raw.to_f32_vec().iter().all(|&x| x < 16.0 && x.fract() == 0.0));
    }

    #[test]
    fn invalid_specs() {
        let dims = Dims::new(2, 2, 1).unwrap();
        let mut spec = GenSpec::grf(dims, 1, -1.0);
        assert!(generate_grf(&spec).is_err());
        spec.sigma = 1.0;
        spec.levels = 1;
        assert!(generate_grf(&spec).is_err());
        spec.levels = 1024;
        spec.value_kind = ValueKind::U8;
        assert!(generate_grf(&spec).is_err());
        spec.levels = 256;
        assert_eq!(generate_grf(&spec).unwrap().kind(), ValueKind::U8);
    }
}
