//! Synthetic ground truth, noise and the TV functional.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{pixel_norm, Image, VectorSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Disk,
    Blocks,
    SheppLogan,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" => Ok(PhantomKind::Disk),
            "blocks" => Ok(PhantomKind::Blocks),
            "shepp_logan" | "shepp-logan" => Ok(PhantomKind::SheppLogan),
            other => Err(Error::Unknown {
                what: "phantom kind",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, rows: usize, cols: usize, seed: u64) -> Self {
        PhantomSpec {
            kind,
            rows,
            cols,
            seed,
        }
    }

    pub fn square(kind: PhantomKind, size: usize, seed: u64) -> Self {
        Self::new(kind, size, size, seed)
    }
}

/// Piecewise-constant image with values in `[0, 1]`.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Image> {
    if spec.rows < 8 || spec.cols < 8 {
        return Err(Error::invalid(format!(
            "phantom must be at least 8x8, got {}x{}",
            spec.rows, spec.cols
        )));
    }
    let img = match spec.kind {
        PhantomKind::Disk => disk(spec.rows, spec.cols),
        PhantomKind::Blocks => blocks(spec.rows, spec.cols, spec.seed),
        PhantomKind::SheppLogan => shepp_logan(spec.rows, spec.cols),
    };
    Ok(img)
}

fn disk(rows: usize, cols: usize) -> Image {
    let ci = (rows as f64 - 1.0) / 2.0;
    let cj = (cols as f64 - 1.0) / 2.0;
    let r = 0.35 * rows.min(cols) as f64;
    Image::from_fn(rows, cols, |i, j| {
        let (di, dj) = (i as f64 - ci, j as f64 - cj);
        if di * di + dj * dj <= r * r {
            1.0
        } else {
            0.0
        }
    })
}

const BLOCK_LEVELS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

fn blocks(rows: usize, cols: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::zeros(rows, cols);
    let count = rng.random_range(4..=7);
    for _ in 0..count {
        let h = rng.random_range(rows / 6..=rows / 2).max(2);
        let w = rng.random_range(cols / 6..=cols / 2).max(2);
        let top = rng.random_range(1..rows - h);
        let left = rng.random_range(1..cols - w);
        let value = BLOCK_LEVELS[rng.random_range(0..BLOCK_LEVELS.len())];
        for i in top..top + h {
            for j in left..left + w {
                img.set(i, j, value);
            }
        }
    }
    img
}

// (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Modified (high-contrast) Shepp–Logan head.
fn shepp_logan(rows: usize, cols: usize) -> Image {
    Image::from_fn(rows, cols, |i, j| {
        let x = 2.0 * (j as f64 + 0.5) / cols as f64 - 1.0;
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / rows as f64;
        let mut value = 0.0;
        for &(amp, a, b, x0, y0, deg) in &SHEPP_LOGAN {
            let (s, c) = deg.to_radians().sin_cos();
            let xr = (x - x0) * c + (y - y0) * s;
            let yr = -(x - x0) * s + (y - y0) * c;
            if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                value += amp;
            }
        }
        value.clamp(0.0, 1.0)
    })
}

/// Additive white Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec { sigma, seed }
    }
}

/// `x + sigma * N(0, 1)` with a seeded ChaCha8 stream.
pub fn add_noise<V: VectorSpace>(x: &V, spec: &NoiseSpec) -> V {
    let mut out = x.clone();
    if spec.sigma == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += spec.sigma * z;
    }
    out
}

/// Isotropic total variation `sum_p |grad u|_2` with forward differences
/// and a Neumann boundary.
pub fn tv_value(u: &Image) -> f64 {
    let (rows, cols) = u.shape();
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let here = u.get(i, j);
            let gx = if j + 1 < cols { u.get(i, j + 1) - here } else { 0.0 };
            let gy = if i + 1 < rows { u.get(i + 1, j) - here } else { 0.0 };
            total += pixel_norm(gx, gy);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::grad2d;

    #[test]
    fn phantoms_are_deterministic_and_bounded() {
        for kind in [PhantomKind::Disk, PhantomKind::Blocks, PhantomKind::SheppLogan] {
            let spec = PhantomSpec::square(kind, 16, 0);
            let a = make_phantom(&spec).unwrap();
            assert_eq!(a, make_phantom(&spec).unwrap());
            assert!(a.min() >= 0.0 && a.max() <= 1.0, "{kind:?}");
            assert!(a.max() > 0.0);
        }
        let disk = make_phantom(&PhantomSpec::square(PhantomKind::Disk, 32, 0)).unwrap();
        assert!(disk.as_slice().iter().all(|&x| x == 0.0 || x == 1.0));
        let b1 = make_phantom(&PhantomSpec::square(PhantomKind::Blocks, 32, 1)).unwrap();
        let b2 = make_phantom(&PhantomSpec::square(PhantomKind::Blocks, 32, 2)).unwrap();
        assert_ne!(b1, b2);
    }

    #[test]
    fn phantom_errors() {
        assert!("star".parse::<PhantomKind>().is_err());
        assert!(make_phantom(&PhantomSpec::square(PhantomKind::Disk, 4, 0)).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_value(&Image::filled(6, 5, 2.0)), 0.0);
        let u = Image::from_rows(&[&[0.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(tv_value(&u), 2.0);
        let b = make_phantom(&PhantomSpec::square(PhantomKind::Blocks, 16, 0)).unwrap();
        let tv = tv_value(&b);
        assert!(tv > 0.0);
        assert!((tv_value(&b.scaled(2.5)) - 2.5 * tv).abs() <= 1e-12 * tv);
        let via_grad: f64 = grad2d(&b).pointwise_norm().as_slice().iter().sum();
        assert!((via_grad - tv).abs() <= 1e-12 * tv);
    }

    #[test]
    fn noise_properties() {
        let x = Image::zeros(1000, 1000);
        assert_eq!(add_noise(&x, &NoiseSpec::gaussian(0.0, 4)), x);
        let spec = NoiseSpec::gaussian(0.5, 11);
        let n = add_noise(&x, &spec);
        assert_eq!(n, add_noise(&x, &spec));
        let mean = n.as_slice().iter().sum::<f64>() / 1e6;
        assert!(mean.abs() <= 3.0 * 0.5 / 1e3);
    }
}
