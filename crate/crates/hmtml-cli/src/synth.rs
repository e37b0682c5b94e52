//! Seeded synthetic heterogeneous-domain generator.
//!
//! One latent Gaussian mean per class; each domain observes the latent
//! points through its own nonnegative linear map into its own dimension,
//! plus Gaussian noise. Domains therefore share class structure while
//! living in different feature spaces.
//!
//! About a third of each domain's coordinates are distractors: their map
//! row is zero and their noise is amplified. A plain Euclidean distance
//! pays for those coordinates in full, while a learned metric can suppress
//! them — the gap a metric learner is supposed to close.

use anyhow::{bail, Result};
use hmtml::DomainData;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub latent_dim: usize,
    /// Ambient dimension of each domain; length = number of domains.
    pub dims: Vec<usize>,
    pub classes: usize,
    pub per_class: usize,
    /// Noise standard deviation per ambient coordinate.
    pub noise: f64,
    pub seed: u64,
}

pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > 1e-300 {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

fn latent_means(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
    (0..spec.classes)
        .map(|_| Array1::from_shape_fn(spec.latent_dim, |_| standard_normal(rng)))
        .collect()
}

/// Amplification of the noise on distractor coordinates.
const DISTRACTOR_NOISE_SCALE: f64 = 3.0;

/// Nonnegative map with entries uniform on `[0, 1/sqrt(latent))`, so mapped
/// coordinates keep unit-order scale regardless of the latent dimension.
/// Every third coordinate is a distractor with a zeroed map row; the
/// returned vector holds the per-coordinate noise scale.
fn domain_map(latent: usize, dim: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<f64>) {
    let hi = 1.0 / (latent as f64).sqrt();
    let mut map = Array2::from_shape_fn((dim, latent), |_| rng.gen_range(0.0..hi));
    let mut scales = vec![1.0; dim];
    for j in (2..dim).step_by(3) {
        map.row_mut(j).fill(0.0);
        scales[j] = DISTRACTOR_NOISE_SCALE;
    }
    (map, scales)
}

/// Generates all domains with internally drawn maps. Deterministic in the seed.
pub fn generate(spec: &SynthSpec) -> Result<Vec<DomainData>> {
    if spec.dims.is_empty() {
        bail!("synth: at least one domain dimension required");
    }
    if spec.latent_dim == 0 || spec.classes == 0 || spec.per_class == 0 {
        bail!("synth: latent_dim, classes, per_class must be positive");
    }
    if spec.noise < 0.0 {
        bail!("synth: noise must be >= 0");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = latent_means(spec, &mut rng);
    let (maps, scales): (Vec<Array2<f64>>, Vec<Vec<f64>>) = spec
        .dims
        .iter()
        .map(|&d| domain_map(spec.latent_dim, d, &mut rng))
        .unzip();
    generate_scaled(spec, &means, &maps, Some(&scales))
}

/// Same sampling with caller-provided class means and domain maps (uniform
/// noise scale); used for controlled fixtures (e.g. identity map, zero noise).
pub fn generate_with_maps(
    spec: &SynthSpec,
    means: &[Array1<f64>],
    maps: &[Array2<f64>],
) -> Result<Vec<DomainData>> {
    generate_scaled(spec, means, maps, None)
}

fn generate_scaled(
    spec: &SynthSpec,
    means: &[Array1<f64>],
    maps: &[Array2<f64>],
    noise_scales: Option<&[Vec<f64>]>,
) -> Result<Vec<DomainData>> {
    if means.len() != spec.classes {
        bail!("synth: need one latent mean per class");
    }
    if maps.len() != spec.dims.len() {
        bail!("synth: need one map per domain");
    }
    let mut domains = Vec::with_capacity(maps.len());
    for (m, map) in maps.iter().enumerate() {
        if map.ncols() != spec.latent_dim || map.nrows() != spec.dims[m] {
            bail!("synth: map {} has shape {:?}", m, map.dim());
        }
        let d = spec.dims[m];
        let n = spec.classes * spec.per_class;
        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.seed ^ (m as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
        );
        let uniform = vec![1.0; d];
        let scales = noise_scales.map(|s| s[m].as_slice()).unwrap_or(&uniform);
        let mut samples = Array2::<f64>::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for (c, mean) in means.iter().enumerate() {
            let clean = map.dot(mean);
            for _ in 0..spec.per_class {
                for j in 0..d {
                    samples[[row, j]] =
                        clean[j] + spec.noise * scales[j] * standard_normal(&mut rng);
                }
                labels.push(c + 1);
                row += 1;
            }
        }
        domains.push(DomainData::new(samples, labels, m)?);
    }
    Ok(domains)
}
