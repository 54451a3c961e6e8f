//! Seeded simulation of clean low-rank cubes, the three noise regimes, and
//! stripe masks.
//!
//! Every operation is a pure function of its inputs and a master seed;
//! per-band noise comes from per-band substreams of the master seed (see
//! [`crate::rng`]), so band generation order never matters.

use ndarray::Array2;

use crate::cube::{HsiCube, ObservationMask};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::CounterRng;
use crate::subspace::NoiseModel;

/// Substream index for parameter draws that are not tied to a band.
const PARAM_STREAM: u64 = u64::MAX;

/// One of the three simulated noise regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseCase {
    /// Gaussian, identical variance everywhere.
    Case1 { sigma: f64 },
    /// Gaussian with per-band standard deviations drawn from U(0, 1).
    Case2,
    /// Poisson counts at a mean scaled to the requested SNR.
    Case3 { snr_db: f64 },
}

impl NoiseCase {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseCase::Case1 { sigma } if !(sigma > &0.0 && sigma.is_finite()) => Err(
                Error::InvalidArg(format!("case 1 sigma must be positive, got {sigma}")),
            ),
            NoiseCase::Case3 { snr_db } if !snr_db.is_finite() => Err(Error::InvalidArg(format!(
                "case 3 snr must be finite, got {snr_db}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Outcome of applying a [`NoiseCase`].
#[derive(Debug, Clone)]
pub struct SimulatedNoise {
    pub noisy: HsiCube,
    /// Ground-truth noise model, where one exists (cases 1 and 2).
    pub model: Option<NoiseModel>,
    /// Poisson scaling (case 3 only).
    pub alpha: Option<f64>,
}

impl NoiseCase {
    pub fn apply(&self, clean: &HsiCube, seed: u64) -> Result<SimulatedNoise> {
        self.validate()?;
        match *self {
            NoiseCase::Case1 { sigma } => Ok(SimulatedNoise {
                noisy: add_case1(clean, sigma, seed)?,
                model: Some(NoiseModel::iid(sigma)?),
                alpha: None,
            }),
            NoiseCase::Case2 => {
                let (noisy, model) = add_case2(clean, seed)?;
                Ok(SimulatedNoise {
                    noisy,
                    model: Some(model),
                    alpha: None,
                })
            }
            NoiseCase::Case3 { snr_db } => {
                let (noisy, alpha) = add_case3(clean, snr_db, seed)?;
                Ok(SimulatedNoise {
                    noisy,
                    model: None,
                    alpha: Some(alpha),
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle partition of the grid, built by recursively
/// splitting the largest cell. Shared by every coefficient image of one
/// cube, the way scene structure is shared by real bands.
fn partition_cells(
    width: usize,
    height: usize,
    n_cells: usize,
    rng: &mut CounterRng,
) -> Vec<(usize, usize, usize, usize)> {
    let mut cells = vec![(0usize, 0usize, height, width)]; // (r0, c0, h, w)
    while cells.len() < n_cells {
        let (idx, _) = cells
            .iter()
            .enumerate()
            .max_by_key(|(_, &(_, _, h, w))| h * w)
            .expect("nonempty");
        let (r0, c0, h, w) = cells.swap_remove(idx);
        let frac = 0.35 + 0.3 * rng.uniform();
        if h >= w && h >= 8 {
            let cut = ((h as f64 * frac) as usize).clamp(4, h - 4);
            cells.push((r0, c0, cut, w));
            cells.push((r0 + cut, c0, h - cut, w));
        } else if w >= 8 {
            let cut = ((w as f64 * frac) as usize).clamp(4, w - 4);
            cells.push((r0, c0, h, cut));
            cells.push((r0, c0 + cut, h, w - cut));
        } else {
            cells.push((r0, c0, h, w));
            break;
        }
    }
    cells
}

/// Self-similar coefficient image for one row: per-cell levels on the shared
/// partition, with an axis-aligned sinusoid mixed into every third row.
/// Zero-centered and scaled to a common rms so no direction dominates by
/// construction.
fn coefficient_image(
    width: usize,
    height: usize,
    cells: &[(usize, usize, usize, usize)],
    row: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = CounterRng::substream(seed, row as u64);
    let mut img = vec![0.0; width * height];
    for &(r0, c0, h, w) in cells {
        let level = rng.uniform() - 0.5;
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                img[r * width + c] = level;
            }
        }
    }
    if row % 3 == 2 {
        let periods = [4usize, 6, 8];
        let period = periods[(rng.next_u64() as usize) % periods.len()];
        let along_rows = rng.next_u64().is_multiple_of(2);
        let phase = rng.uniform() * std::f64::consts::TAU;
        for r in 0..height {
            for c in 0..width {
                let t = if along_rows { r } else { c };
                img[r * width + c] +=
                    0.12 * (std::f64::consts::TAU * t as f64 / period as f64 + phase).sin();
            }
        }
    }
    let mean = img.iter().sum::<f64>() / img.len() as f64;
    let mut rms = 0.0;
    for v in &mut img {
        *v -= mean;
        rms += *v * *v;
    }
    let rms = (rms / img.len() as f64).sqrt().max(1e-9);
    for v in &mut img {
        *v *= 0.5 / rms;
    }
    img
}

/// Synthetic clean cube of exactly the requested rank: a random semi-unitary
/// mixing of self-similar coefficient images (one of them constant, so the
/// per-band normalization to `[0, 1]` stays inside the span), bands exactly
/// in `[0, 1]`.
pub fn make_ground_truth(
    width: usize,
    height: usize,
    n_bands: usize,
    rank: usize,
    seed: u64,
) -> Result<HsiCube> {
    if rank == 0 || rank > n_bands {
        return Err(Error::InvalidArg(format!(
            "rank {rank} out of range [1, {n_bands}]"
        )));
    }
    if width < 4 || height < 4 {
        return Err(Error::InvalidArg("grid must be at least 4x4".into()));
    }
    let n = width * height;

    let mut partition_rng = CounterRng::substream(seed, PARAM_STREAM ^ 0x5EED);
    let n_cells = (2 * rank + 4).max(12);
    let cells = partition_cells(width, height, n_cells, &mut partition_rng);

    if rank == 1 {
        // Every band equal to one self-similar image stretched onto [0, 1].
        let img = coefficient_image(width, height, &cells, 2, seed);
        let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut values = Vec::with_capacity(n * n_bands);
        for _ in 0..n_bands {
            values.extend(img.iter().map(|v| (v - lo) / (hi - lo)));
        }
        return HsiCube::new(width, height, n_bands, values);
    }

    // Coefficient rows: constant first, then self-similar images.
    let mut coeffs = Array2::<f64>::zeros((rank, n));
    for p in 0..n {
        coeffs[[0, p]] = 1.0;
    }
    for row in 1..rank {
        let img = coefficient_image(width, height, &cells, row + 1, seed);
        for (p, v) in img.iter().enumerate() {
            coeffs[[row, p]] = *v;
        }
    }

    // Spectral mixing profiles: smooth low-frequency random curves over the
    // band index, the way real reflectance loadings vary, then
    // orthonormalized. Smooth profiles also spread energy evenly across
    // bands, which keeps masked-band recovery well conditioned.
    let mut rng = CounterRng::substream(seed, PARAM_STREAM);
    let n_freq = rank + 2;
    let mut mixing = Array2::<f64>::zeros((n_bands, rank));
    for j in 0..rank {
        let coeffs_f: Vec<(f64, f64)> = (0..n_freq)
            .map(|_| (rng.gaussian(), rng.uniform() * std::f64::consts::TAU))
            .collect();
        for b in 0..n_bands {
            let t = b as f64 / n_bands as f64;
            let mut v = 0.0;
            for (f, &(a, phase)) in coeffs_f.iter().enumerate() {
                let weight = 1.0 / (1.0 + f as f64);
                v += weight * a * (std::f64::consts::PI * (f as f64 + 0.5) * t + phase).cos();
            }
            mixing[[b, j]] = v;
        }
        // Pattern profiles change sign across bands; otherwise the per-band
        // normalization would fold every band onto one image.
        if j > 0 {
            let mean = (0..n_bands).map(|b| mixing[[b, j]]).sum::<f64>() / n_bands as f64;
            for b in 0..n_bands {
                mixing[[b, j]] -= mean;
            }
        }
    }
    linalg::orthonormalize_columns(&mut mixing)?;
    let raw = mixing.dot(&coeffs);
    let raw_cube = HsiCube::from_matrix(width, height, &raw)?;
    let (cube, _) = crate::cube::normalize_bands(&raw_cube)?;

    // The result must still be exactly rank `rank`: the normalization shift
    // lies along the constant coefficient row, so the residual outside the
    // leading subspace is pure rounding.
    let basis = crate::subspace::learn_subspace(&cube, rank)?;
    let y = cube.matrix();
    let z = basis.matrix().t().dot(&y);
    let back = basis.matrix().dot(&z);
    let resid: f64 = (&back - &y).iter().map(|v| v * v).sum::<f64>().sqrt();
    let (vals, _) = crate::subspace::gram_spectrum(y);
    let s1 = (vals[0] * n as f64).sqrt();
    if resid > 1e-10 * s1 {
        return Err(Error::Data(format!(
            "ground truth rank verification failed: residual {resid:.3e} vs s1 {s1:.3e}"
        )));
    }
    Ok(cube)
}

// ---------------------------------------------------------------------------
// Noise cases
// ---------------------------------------------------------------------------

/// Add zero-mean Gaussian noise of standard deviation `sigma` everywhere.
pub fn add_case1(cube: &HsiCube, sigma: f64, seed: u64) -> Result<HsiCube> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let n = cube.n_pixels();
    let mut values = cube.values().to_vec();
    for b in 0..cube.n_bands() {
        let mut rng = CounterRng::substream(seed, b as u64);
        for v in &mut values[b * n..(b + 1) * n] {
            *v += sigma * rng.gaussian();
        }
    }
    HsiCube::new(cube.width(), cube.height(), cube.n_bands(), values)
}

/// Add bandwise-independent Gaussian noise with per-band standard deviations
/// drawn from U(0, 1); returns the true diagonal model alongside.
pub fn add_case2(cube: &HsiCube, seed: u64) -> Result<(HsiCube, NoiseModel)> {
    let nb = cube.n_bands();
    let n = cube.n_pixels();
    let mut param_rng = CounterRng::substream(seed, PARAM_STREAM);
    let stds: Vec<f64> = (0..nb).map(|_| param_rng.uniform_open()).collect();
    let mut values = cube.values().to_vec();
    for (b, &sigma) in stds.iter().enumerate() {
        let mut rng = CounterRng::substream(seed, b as u64);
        for v in &mut values[b * n..(b + 1) * n] {
            *v += sigma * rng.gaussian();
        }
    }
    let noisy = HsiCube::new(cube.width(), cube.height(), nb, values)?;
    let model = NoiseModel::diagonal(stds.iter().map(|s| s * s).collect())?;
    Ok((noisy, model))
}

/// Poisson scaling that realizes `snr_db` under the definition
/// `SNR = alpha * sum(a^2) / sum(a)`.
pub fn case3_alpha(cube: &HsiCube, snr_db: f64) -> Result<f64> {
    let sum: f64 = cube.values().iter().sum();
    let sum_sq: f64 = cube.values().iter().map(|v| v * v).sum();
    if sum_sq == 0.0 {
        return Err(Error::InvalidArg(
            "case 3 scaling is undefined for an all-zero cube".into(),
        ));
    }
    Ok(10f64.powf(snr_db / 10.0) * sum / sum_sq)
}

/// Replace every value `a` with a Poisson draw of mean `alpha * a`; output
/// stays in count units. Returns the cube and the computed `alpha`.
pub fn add_case3(cube: &HsiCube, snr_db: f64, seed: u64) -> Result<(HsiCube, f64)> {
    if let Some(pos) = cube.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Data(format!(
            "case 3 needs nonnegative values; found {} at flat index {pos}",
            cube.values()[pos]
        )));
    }
    let alpha = case3_alpha(cube, snr_db)?;
    let n = cube.n_pixels();
    let mut values = vec![0.0; cube.values().len()];
    for b in 0..cube.n_bands() {
        let mut rng = CounterRng::substream(seed, b as u64);
        for (v, &a) in values[b * n..(b + 1) * n]
            .iter_mut()
            .zip(&cube.values()[b * n..(b + 1) * n])
        {
            *v = rng.poisson(alpha * a) as f64;
        }
    }
    Ok((
        HsiCube::new(cube.width(), cube.height(), cube.n_bands(), values)?,
        alpha,
    ))
}

// ---------------------------------------------------------------------------
// Stripe masks
// ---------------------------------------------------------------------------

/// All-observed mask except full-height stripes: every (band, column) pair
/// from the cross product of `bands` and `columns` is marked missing.
pub fn make_stripe_mask(
    width: usize,
    height: usize,
    n_bands: usize,
    bands: &[usize],
    columns: &[usize],
) -> Result<ObservationMask> {
    let mut mask = ObservationMask::all_observed(width, height, n_bands);
    for &b in bands {
        if b >= n_bands {
            return Err(Error::InvalidArg(format!("stripe band {b} out of range")));
        }
        for &c in columns {
            if c >= width {
                return Err(Error::InvalidArg(format!("stripe column {c} out of range")));
            }
            for r in 0..height {
                mask.set(r * width + c, b, false);
            }
        }
    }
    Ok(mask)
}
