//! Inpainting pipelines: recover the subspace coefficients of each
//! incompletely observed pixel from its observed bands by (weighted) least
//! squares, substitute the reconstructed spectra, then denoise with the
//! subspace pipeline.
//!
//! The basis used for recovery is always learned from completely observed
//! pixels only. With an all-observed mask there is nothing to recover and
//! every pipeline reduces to its denoising counterpart.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::cube::{HsiCube, ObservationMask};
use crate::denoiser::DenoiserSpec;
use crate::error::{Error, Result};
use crate::fasthyde::{
    denoise_eigen_images, DenoiseResult, DimensionSpec, NoiseSpec, StageTimings,
};
use crate::linalg;
use crate::subspace::{
    self, estimate_noise_matrix, learn_subspace_matrix, select_dimension_matrix, NoiseModel,
    SubspaceBasis,
};
use crate::transforms;

/// Condition-number ceiling for the per-pixel recovery systems.
const RECOVERY_COND_LIMIT: f64 = 1e10;

/// Ridge added to the normal-matrix diagonal by the fallback, per unknown.
const RIDGE_PER_UNKNOWN: f64 = 1e-6;

/// What to do with pixels whose recovery system is underdetermined or
/// ill-conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnderdeterminedPolicy {
    /// Fail the run, naming the pixel.
    Error,
    /// Solve a ridge-stabilized system and flag the pixel in the result.
    Ridge,
}

#[derive(Debug, Clone)]
pub struct InpaintRequest {
    pub cube: HsiCube,
    pub mask: ObservationMask,
    pub noise: NoiseSpec,
    pub subspace_dim: DimensionSpec,
    pub denoiser: DenoiserSpec,
    pub policy: UnderdeterminedPolicy,
}

impl InpaintRequest {
    pub fn new(
        cube: HsiCube,
        mask: ObservationMask,
        noise: NoiseSpec,
        subspace_dim: DimensionSpec,
        denoiser: DenoiserSpec,
        policy: UnderdeterminedPolicy,
    ) -> Result<Self> {
        if !mask.matches_cube(&cube) {
            return Err(Error::DimMismatch(format!(
                "mask {}x{}x{} does not match cube {}x{}x{}",
                mask.width(),
                mask.height(),
                mask.n_bands(),
                cube.width(),
                cube.height(),
                cube.n_bands()
            )));
        }
        if let DimensionSpec::Fixed(k) = subspace_dim {
            if k == 0 || k > cube.n_bands() {
                return Err(Error::InvalidArg(format!(
                    "subspace dimension {k} out of range [1, {}]",
                    cube.n_bands()
                )));
            }
        }
        Ok(InpaintRequest {
            cube,
            mask,
            noise,
            subspace_dim,
            denoiser,
            policy,
        })
    }
}

// ---------------------------------------------------------------------------
// Per-pixel recovery
// ---------------------------------------------------------------------------

/// Least-squares subspace coefficients of one partially observed pixel:
/// solve the observed-rows system `(M_i E) z = y_obs` by QR.
pub fn recover_pixel_ls(
    y_obs: &[f64],
    observed_bands: &[usize],
    basis: &SubspaceBasis,
) -> Result<Vec<f64>> {
    let k = basis.dimension();
    if y_obs.len() != observed_bands.len() {
        return Err(Error::DimMismatch("observed values vs band indices".into()));
    }
    if y_obs.len() < k {
        return Err(Error::Underdetermined(format!(
            "{} observed bands for {k} coefficients",
            y_obs.len()
        )));
    }
    let e_obs = basis.observed_rows(observed_bands);
    let (z, cond) = linalg::lstsq(e_obs.view(), y_obs)?;
    if cond > RECOVERY_COND_LIMIT {
        return Err(Error::Underdetermined(format!(
            "recovery system condition number {cond:.3e}"
        )));
    }
    Ok(z)
}

/// Maximum-likelihood coefficients under band-correlated noise: whiten the
/// observed subsystem with the symmetric inverse square root of the observed
/// covariance block, then solve least squares. Bandwise-independent models
/// skip the dense factorization and divide by per-band standard deviations.
pub fn recover_pixel_wls(
    y_obs: &[f64],
    observed_bands: &[usize],
    basis: &SubspaceBasis,
    noise: &NoiseModel,
) -> Result<Vec<f64>> {
    let k = basis.dimension();
    if y_obs.len() != observed_bands.len() {
        return Err(Error::DimMismatch("observed values vs band indices".into()));
    }
    if y_obs.len() < k {
        return Err(Error::Underdetermined(format!(
            "{} observed bands for {k} coefficients",
            y_obs.len()
        )));
    }
    let (e_white, y_white) = whiten_subsystem(y_obs, observed_bands, basis, noise)?;
    let (z, cond) = linalg::lstsq(e_white.view(), &y_white)?;
    if cond > RECOVERY_COND_LIMIT {
        return Err(Error::Underdetermined(format!(
            "recovery system condition number {cond:.3e}"
        )));
    }
    Ok(z)
}

/// Whitened observed rows of the basis and whitened observed values.
fn whiten_subsystem(
    y_obs: &[f64],
    observed_bands: &[usize],
    basis: &SubspaceBasis,
    noise: &NoiseModel,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let k = basis.dimension();
    let ni = observed_bands.len();
    let e_obs = basis.observed_rows(observed_bands);
    match noise {
        NoiseModel::Iid { .. } | NoiseModel::Diagonal { .. } => {
            let y_white = transforms::whiten_masked_pixel(y_obs, observed_bands, noise)?;
            let mut e_white = e_obs;
            for (r, &b) in observed_bands.iter().enumerate() {
                let s = noise.band_std(b);
                for j in 0..k {
                    e_white[[r, j]] /= s;
                }
            }
            Ok((e_white, y_white))
        }
        NoiseModel::Full { covariance } => {
            let nb = covariance.nrows();
            for &b in observed_bands {
                if b >= nb {
                    return Err(Error::DimMismatch(format!(
                        "band index {b} out of range for {nb} bands"
                    )));
                }
            }
            let mut c_obs = Array2::<f64>::zeros((ni, ni));
            for (r, &br) in observed_bands.iter().enumerate() {
                for (s, &bs) in observed_bands.iter().enumerate() {
                    c_obs[[r, s]] = covariance[[br, bs]];
                }
            }
            let (vals, vecs) = linalg::symmetric_eigen(c_obs.view());
            if vals[ni - 1] <= 1e-12 * vals[0] {
                return Err(Error::Conditioning(format!(
                    "observed covariance block eigenvalue {:.3e} below tolerance",
                    vals[ni - 1]
                )));
            }
            let mut w = Array2::<f64>::zeros((ni, ni));
            for a in 0..ni {
                for b in 0..ni {
                    let mut s = 0.0;
                    for t in 0..ni {
                        s += vecs[[a, t]] * vecs[[b, t]] / vals[t].sqrt();
                    }
                    w[[a, b]] = s;
                }
            }
            let e_white = w.dot(&e_obs);
            let y_white: Vec<f64> = (0..ni)
                .map(|a| (0..ni).map(|b| w[[a, b]] * y_obs[b]).sum())
                .collect();
            Ok((e_white, y_white))
        }
    }
}

/// Ridge fallback: normal equations of the (whitened) observed subsystem
/// with `1e-6 * k` added to the diagonal.
fn recover_pixel_ridge(
    y_obs: &[f64],
    observed_bands: &[usize],
    basis: &SubspaceBasis,
    noise: Option<&NoiseModel>,
) -> Result<Vec<f64>> {
    let k = basis.dimension();
    let (e, y) = match noise {
        Some(model) => whiten_subsystem(y_obs, observed_bands, basis, model)?,
        None => (basis.observed_rows(observed_bands), y_obs.to_vec()),
    };
    let mut normal = e.t().dot(&e);
    let delta = RIDGE_PER_UNKNOWN * k as f64;
    for i in 0..k {
        normal[[i, i]] += delta;
    }
    let rhs: Vec<f64> = (0..k)
        .map(|j| (0..y.len()).map(|i| e[[i, j]] * y[i]).sum())
        .collect();
    linalg::solve_spd(normal.view(), &rhs)
}

// ---------------------------------------------------------------------------
// Shared pipeline plumbing
// ---------------------------------------------------------------------------

/// Spectra of the given pixels as an `n_bands x m` matrix.
fn gather_columns(cube: &HsiCube, pixels: &[usize]) -> Array2<f64> {
    let nb = cube.n_bands();
    let n = cube.n_pixels();
    let mut out = Array2::<f64>::zeros((nb, pixels.len()));
    for (col, &p) in pixels.iter().enumerate() {
        for b in 0..nb {
            out[[b, col]] = cube.values()[b * n + p];
        }
    }
    out
}

struct RecoveryOutcome {
    completed: HsiCube,
    ridge_pixels: Vec<usize>,
}

/// Learn the recovery basis from complete pixels and substitute every
/// incomplete pixel's spectrum with its subspace reconstruction. `noise`
/// selects plain or whitened least squares; when present, the basis is
/// identified in the whitened domain (where the signal directions are not
/// drowned out by band-varying noise) and mapped back to the raw domain for
/// the per-pixel systems.
fn recover_incomplete_pixels(
    cube: &HsiCube,
    mask: &ObservationMask,
    k: usize,
    noise: Option<&NoiseModel>,
    policy: UnderdeterminedPolicy,
) -> Result<RecoveryOutcome> {
    let nb = cube.n_bands();
    let complete = mask.complete_pixels();
    let needed = (4 * k).max(nb);
    if complete.len() < needed {
        return Err(Error::Rank(format!(
            "basis learning needs at least {needed} complete pixels, found {}",
            complete.len()
        )));
    }
    let y_complete = if complete.len() == cube.n_pixels() {
        cube.matrix().to_owned()
    } else {
        gather_columns(cube, &complete)
    };
    let recovery_basis = match noise {
        None => learn_subspace_matrix(y_complete.view(), k)?,
        Some(model) => {
            let whitener = transforms::build_whitener(model, nb)?;
            let white_basis = learn_subspace_matrix(whitener.matrix().dot(&y_complete).view(), k)?;
            let mut raw = whitener.inverse().dot(white_basis.matrix());
            linalg::orthonormalize_columns(&mut raw)?;
            SubspaceBasis::new(raw)?
        }
    };

    let incomplete = mask.incomplete_pixels();
    let recovered: Vec<(usize, Vec<f64>, bool)> = incomplete
        .par_iter()
        .map(|&pixel| -> Result<(usize, Vec<f64>, bool)> {
            let bands = mask.observed_bands(pixel);
            let spectrum = cube.spectrum(pixel);
            let y_obs: Vec<f64> = bands.iter().map(|&b| spectrum[b]).collect();
            let direct = match noise {
                Some(model) => recover_pixel_wls(&y_obs, &bands, &recovery_basis, model),
                None => recover_pixel_ls(&y_obs, &bands, &recovery_basis),
            };
            let (z, ridge_flagged) = match direct {
                Ok(z) => (z, false),
                Err(Error::Underdetermined(reason)) => match policy {
                    UnderdeterminedPolicy::Error => {
                        return Err(Error::Underdetermined(format!("pixel {pixel}: {reason}")))
                    }
                    UnderdeterminedPolicy::Ridge => (
                        recover_pixel_ridge(&y_obs, &bands, &recovery_basis, noise)?,
                        true,
                    ),
                },
                Err(other) => return Err(other),
            };
            // Reconstructed spectrum E z replaces the pixel.
            let e = recovery_basis.matrix();
            let mut rebuilt = vec![0.0; nb];
            for b in 0..nb {
                let mut s = 0.0;
                for j in 0..z.len() {
                    s += e[[b, j]] * z[j];
                }
                rebuilt[b] = s;
            }
            Ok((pixel, rebuilt, ridge_flagged))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut completed = cube.clone();
    let mut ridge_pixels = Vec::new();
    for (pixel, spectrum, flagged) in recovered {
        completed.set_spectrum(pixel, &spectrum);
        if flagged {
            ridge_pixels.push(pixel);
        }
    }
    ridge_pixels.sort_unstable();
    completed.validate()?;
    Ok(RecoveryOutcome {
        completed,
        ridge_pixels,
    })
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

/// Inpainting under i.i.d. Gaussian noise: plain least-squares recovery,
/// then the subspace denoising core on the completed cube.
pub fn fasthyin_iid(req: &InpaintRequest) -> Result<DenoiseResult> {
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let cube = &req.cube;
    let mask = &req.mask;

    let complete = mask.complete_pixels();
    let y_complete = if complete.len() == cube.n_pixels() {
        None
    } else {
        Some(gather_columns(cube, &complete))
    };
    let complete_view = y_complete
        .as_ref()
        .map(|m| m.view())
        .unwrap_or_else(|| cube.matrix());

    let t = Instant::now();
    let noise = match &req.noise {
        NoiseSpec::Known(NoiseModel::Iid { sigma }) => NoiseModel::iid(*sigma)?,
        NoiseSpec::Known(other) => {
            return Err(Error::Unsupported(format!(
                "i.i.d. inpainting needs an isotropic model, got {other:?}"
            )))
        }
        NoiseSpec::Auto => estimate_noise_matrix(complete_view)?.iid_view()?,
    };
    timings.noise_estimate = t.elapsed().as_secs_f64();
    let NoiseModel::Iid { sigma } = noise else {
        unreachable!()
    };

    let k = match req.subspace_dim {
        DimensionSpec::Fixed(k) => k,
        DimensionSpec::Auto => select_dimension_matrix(complete_view, &noise)?,
    };
    drop(y_complete);

    let t = Instant::now();
    let outcome = recover_incomplete_pixels(cube, mask, k, None, req.policy)?;
    timings.recover = t.elapsed().as_secs_f64();

    // Denoising core on the completed cube (basis relearned from it).
    let t = Instant::now();
    let basis = learn_subspace_matrix(outcome.completed.matrix(), k)?;
    timings.subspace = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut eigen = subspace::project(&basis, &outcome.completed)?;
    timings.project = t.elapsed().as_secs_f64();

    let sigmas = vec![sigma; k];
    let t = Instant::now();
    denoise_eigen_images(&mut eigen, &sigmas, &req.denoiser)?;
    timings.denoise = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let restored = subspace::reconstruct(&basis, &eigen)?;
    timings.reconstruct = t.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();

    Ok(DenoiseResult {
        restored,
        basis,
        noise,
        eigen_sigmas: sigmas,
        timings,
        whitener: None,
        ridge_pixels: outcome.ridge_pixels,
        clamped: 0,
    })
}

/// Shared non-i.i.d. pipeline; `noise` is the resolved model in its natural
/// representation (diagonal models keep their cheap arithmetic throughout).
fn fasthyin_whitened(req: &InpaintRequest, noise: NoiseModel) -> Result<DenoiseResult> {
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let cube = &req.cube;
    let mask = &req.mask;
    let nb = cube.n_bands();

    let t = Instant::now();
    let whitener = transforms::build_whitener(&noise, nb)?;
    timings.transform = t.elapsed().as_secs_f64();

    let unit = NoiseModel::iid(1.0)?;
    let k = match req.subspace_dim {
        DimensionSpec::Fixed(k) => k,
        DimensionSpec::Auto => {
            let complete = mask.complete_pixels();
            let y_complete = if complete.len() == cube.n_pixels() {
                cube.matrix().to_owned()
            } else {
                gather_columns(cube, &complete)
            };
            let white = whitener.matrix().dot(&y_complete);
            select_dimension_matrix(white.view(), &unit)?
        }
    };

    let t = Instant::now();
    let outcome = recover_incomplete_pixels(cube, mask, k, Some(&noise), req.policy)?;
    timings.recover = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let white = transforms::whiten(&outcome.completed, &whitener)?;
    timings.transform += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let basis = learn_subspace_matrix(white.matrix(), k)?;
    timings.subspace = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut eigen = subspace::project(&basis, &white)?;
    timings.project = t.elapsed().as_secs_f64();

    let sigmas = vec![1.0; k];
    let t = Instant::now();
    denoise_eigen_images(&mut eigen, &sigmas, &req.denoiser)?;
    timings.denoise = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let restored_white = subspace::reconstruct(&basis, &eigen)?;
    timings.reconstruct = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let restored = transforms::unwhiten(&restored_white, &whitener)?;
    timings.inverse_transform = t.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();

    Ok(DenoiseResult {
        restored,
        basis,
        noise,
        eigen_sigmas: sigmas,
        timings,
        whitener: Some(whitener),
        ridge_pixels: outcome.ridge_pixels,
        clamped: 0,
    })
}

/// Inpainting under band-correlated Gaussian noise: weighted least-squares
/// recovery, whitening, basis relearned from the whitened completed data.
pub fn fasthyin_noniid(req: &InpaintRequest) -> Result<DenoiseResult> {
    let noise = match &req.noise {
        NoiseSpec::Known(model) => NoiseModel::full(model.to_covariance(req.cube.n_bands())?)?,
        NoiseSpec::Auto => {
            let complete = req.mask.complete_pixels();
            if complete.len() == req.cube.n_pixels() {
                estimate_noise_matrix(req.cube.matrix())?
            } else {
                let y_complete = gather_columns(&req.cube, &complete);
                estimate_noise_matrix(y_complete.view())?
            }
        }
    };
    fasthyin_whitened(req, noise)
}

/// Inpainting under bandwise-independent noise: the same route as
/// [`fasthyin_noniid`], with every whitening step done by per-band division
/// instead of dense covariance factorizations.
pub fn fasthyin_diag(req: &InpaintRequest) -> Result<DenoiseResult> {
    let nb = req.cube.n_bands();
    let noise = match &req.noise {
        NoiseSpec::Known(NoiseModel::Full { .. }) => {
            return Err(Error::Unsupported(
                "diagonal shortcut needs an iid or diagonal model; use the non-i.i.d. pipeline"
                    .into(),
            ))
        }
        NoiseSpec::Known(model) => model.diagonal_view(nb)?,
        NoiseSpec::Auto => {
            let complete = req.mask.complete_pixels();
            let est = if complete.len() == req.cube.n_pixels() {
                estimate_noise_matrix(req.cube.matrix())?
            } else {
                let y_complete = gather_columns(&req.cube, &complete);
                estimate_noise_matrix(y_complete.view())?
            };
            est.diagonal_view(nb)?
        }
    };
    fasthyin_whitened(req, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fasthyde::{fasthyde_iid, fasthyde_noniid, DenoiseRequest};
    use crate::metrics::report;
    use crate::rng::CounterRng;
    use crate::simulate::{add_case1, add_case2, make_ground_truth, make_stripe_mask};

    fn rel_diff(a: &HsiCube, b: &HsiCube) -> f64 {
        let num: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let den: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    fn random_basis(nb: usize, k: usize, seed: u64) -> SubspaceBasis {
        let mut rng = CounterRng::new(seed);
        let mut e = Array2::from_shape_fn((nb, k), |_| rng.gaussian());
        linalg::orthonormalize_columns(&mut e).unwrap();
        SubspaceBasis::new(e).unwrap()
    }

    #[test]
    fn full_observation_recovery_is_projection() {
        let basis = random_basis(8, 3, 1);
        let mut rng = CounterRng::new(2);
        let y: Vec<f64> = (0..8).map(|_| rng.gaussian()).collect();
        let bands: Vec<usize> = (0..8).collect();
        let z = recover_pixel_ls(&y, &bands, &basis).unwrap();
        // With every band observed the estimator collapses to E^T y.
        let e = basis.matrix();
        for j in 0..3 {
            let want: f64 = (0..8).map(|b| e[[b, j]] * y[b]).sum();
            assert!((z[j] - want).abs() <= 1e-12, "{} vs {want}", z[j]);
        }
    }

    #[test]
    fn noiseless_masked_pixel_recovers_exactly() {
        let basis = random_basis(8, 3, 3);
        let mut rng = CounterRng::new(4);
        let z_true: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
        let e = basis.matrix();
        let x: Vec<f64> = (0..8)
            .map(|b| (0..3).map(|j| e[[b, j]] * z_true[j]).sum())
            .collect();
        let bands = vec![0usize, 2, 4, 5, 7];
        let y_obs: Vec<f64> = bands.iter().map(|&b| x[b]).collect();
        let z = recover_pixel_ls(&y_obs, &bands, &basis).unwrap();
        for (a, b) in z.iter().zip(&z_true) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        // Weighted variant with any positive-definite covariance agrees.
        let mut c = Array2::<f64>::eye(8);
        c[[0, 1]] = 0.3;
        c[[1, 0]] = 0.3;
        c[[3, 3]] = 2.0;
        let zw = recover_pixel_wls(&y_obs, &bands, &basis, &NoiseModel::full(c).unwrap()).unwrap();
        for (a, b) in zw.iter().zip(&z_true) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn ls_matches_normal_equations_oracle() {
        let basis = random_basis(8, 3, 5);
        let mut rng = CounterRng::new(6);
        let bands = vec![1usize, 2, 4, 6, 7];
        let y_obs: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
        let z = recover_pixel_ls(&y_obs, &bands, &basis).unwrap();

        // Oracle: explicitly form and invert the 3x3 normal matrix.
        let e_obs = basis.observed_rows(&bands);
        let normal = e_obs.t().dot(&e_obs);
        let rhs: Vec<f64> = (0..3)
            .map(|j| (0..5).map(|i| e_obs[[i, j]] * y_obs[i]).sum())
            .collect();
        let inv = invert3(&normal);
        for j in 0..3 {
            let want: f64 = (0..3).map(|i| inv[j][i] * rhs[i]).sum();
            assert!((z[j] - want).abs() <= 1e-8, "{} vs {want}", z[j]);
        }
    }

    fn invert3(m: &Array2<f64>) -> [[f64; 3]; 3] {
        let a = m[[0, 0]];
        let b = m[[0, 1]];
        let c = m[[0, 2]];
        let d = m[[1, 0]];
        let e = m[[1, 1]];
        let f = m[[1, 2]];
        let g = m[[2, 0]];
        let h = m[[2, 1]];
        let i = m[[2, 2]];
        let det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
        [
            [
                (e * i - f * h) / det,
                (c * h - b * i) / det,
                (b * f - c * e) / det,
            ],
            [
                (f * g - d * i) / det,
                (a * i - c * g) / det,
                (c * d - a * f) / det,
            ],
            [
                (d * h - e * g) / det,
                (b * g - a * h) / det,
                (a * e - b * d) / det,
            ],
        ]
    }

    #[test]
    fn wls_isotropic_reduces_to_ls() {
        let basis = random_basis(8, 3, 7);
        let mut rng = CounterRng::new(8);
        let bands = vec![0usize, 3, 4, 6];
        let y_obs: Vec<f64> = (0..4).map(|_| rng.gaussian()).collect();
        let z_ls = recover_pixel_ls(&y_obs, &bands, &basis).unwrap();
        let iso = NoiseModel::full(Array2::<f64>::eye(8) * 0.04).unwrap();
        let z_wls = recover_pixel_wls(&y_obs, &bands, &basis, &iso).unwrap();
        for (a, b) in z_ls.iter().zip(&z_wls) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn wls_matches_verbatim_formula_oracle() {
        let basis = random_basis(8, 3, 9);
        let mut rng = CounterRng::new(10);
        let bands = vec![0usize, 1, 3, 5, 6];
        let y_obs: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
        let a = Array2::from_shape_fn((8, 8), |_| rng.gaussian());
        let mut cov = a.dot(&a.t());
        for i in 0..8 {
            cov[[i, i]] += 2.0;
        }
        let model = NoiseModel::full(cov.clone()).unwrap();
        let z = recover_pixel_wls(&y_obs, &bands, &basis, &model).unwrap();

        // Oracle: z = (E^T M^T Cobs^-1 M E)^-1 E^T M^T Cobs^-1 y with
        // explicit inverses.
        let e_obs = basis.observed_rows(&bands);
        let mut c_obs = Array2::<f64>::zeros((5, 5));
        for (r, &br) in bands.iter().enumerate() {
            for (s, &bs) in bands.iter().enumerate() {
                c_obs[[r, s]] = cov[[br, bs]];
            }
        }
        let c_inv = invert_dense(&c_obs);
        let et_cinv = e_obs.t().dot(&c_inv);
        let normal = et_cinv.dot(&e_obs);
        let n_inv = invert_dense(&normal);
        let rhs: Vec<f64> = (0..3)
            .map(|j| (0..5).map(|i| et_cinv[[j, i]] * y_obs[i]).sum())
            .collect();
        for j in 0..3 {
            let want: f64 = (0..3).map(|i| n_inv[[j, i]] * rhs[i]).sum();
            assert!((z[j] - want).abs() <= 1e-8, "{} vs {want}", z[j]);
        }
    }

    /// Gauss-Jordan inverse for small test matrices.
    fn invert_dense(m: &Array2<f64>) -> Array2<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        let mut inv = Array2::<f64>::eye(n);
        for col in 0..n {
            let mut pivot = col;
            for r in (col + 1)..n {
                if a[[r, col]].abs() > a[[pivot, col]].abs() {
                    pivot = r;
                }
            }
            for j in 0..n {
                a.swap([col, j], [pivot, j]);
                inv.swap([col, j], [pivot, j]);
            }
            let p = a[[col, col]];
            for j in 0..n {
                a[[col, j]] /= p;
                inv[[col, j]] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = a[[r, col]];
                    for j in 0..n {
                        let acj = a[[col, j]];
                        let icj = inv[[col, j]];
                        a[[r, j]] -= f * acj;
                        inv[[r, j]] -= f * icj;
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn underdetermined_pixel_errors_or_ridges() {
        let basis = random_basis(8, 4, 11);
        let y_obs = [1.0, 2.0];
        let bands = [0usize, 5];
        assert!(matches!(
            recover_pixel_ls(&y_obs, &bands, &basis),
            Err(Error::Underdetermined(_))
        ));
        let z = recover_pixel_ridge(&y_obs, &bands, &basis, None).unwrap();
        assert_eq!(z.len(), 4);
        assert!(z.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn all_true_mask_reduces_to_fasthyde() {
        let clean = make_ground_truth(16, 16, 12, 4, 12).unwrap();
        let noisy = add_case1(&clean, 0.1, 13).unwrap();
        let mask = ObservationMask::all_observed(16, 16, 12);

        let inp = InpaintRequest::new(
            noisy.clone(),
            mask,
            NoiseSpec::Known(NoiseModel::iid(0.1).unwrap()),
            DimensionSpec::Fixed(5),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let den = DenoiseRequest::new(
            noisy,
            NoiseSpec::Known(NoiseModel::iid(0.1).unwrap()),
            DimensionSpec::Fixed(5),
            DenoiserSpec::bm3d_like(),
        )
        .unwrap();
        let a = fasthyin_iid(&inp).unwrap();
        let b = fasthyde_iid(&den).unwrap();
        assert!(rel_diff(&a.restored, &b.restored) <= 1e-12);
        assert!(a.ridge_pixels.is_empty());
    }

    #[test]
    fn noiseless_stripes_recover_exactly() {
        let clean = make_ground_truth(32, 32, 16, 4, 14).unwrap();
        let cols: Vec<usize> = (10..16).collect();
        let mask = make_stripe_mask(32, 32, 16, &[6, 7, 8, 9], &cols).unwrap();
        // Zero out the masked values so recovery cannot peek at them.
        let mut damaged = clean.clone();
        for p in mask.incomplete_pixels() {
            let mut spec = damaged.spectrum(p);
            for (b, v) in spec.iter_mut().enumerate() {
                if !mask.is_observed(p, b) {
                    *v = 0.0;
                }
            }
            damaged.set_spectrum(p, &spec);
        }
        let req = InpaintRequest::new(
            damaged,
            mask,
            NoiseSpec::Known(NoiseModel::iid(1e-6).unwrap()),
            DimensionSpec::Fixed(4),
            DenoiserSpec::identity(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let out = fasthyin_iid(&req).unwrap();
        assert!(rel_diff(&clean, &out.restored) <= 1e-8);
    }

    #[test]
    fn complete_pixels_unchanged_by_recovery_stage() {
        let clean = make_ground_truth(16, 16, 8, 3, 15).unwrap();
        let noisy = add_case1(&clean, 0.1, 16).unwrap();
        let mask = make_stripe_mask(16, 16, 8, &[3, 4], &[5, 6]).unwrap();
        let outcome =
            recover_incomplete_pixels(&noisy, &mask, 3, None, UnderdeterminedPolicy::Error)
                .unwrap();
        for p in mask.complete_pixels() {
            for b in 0..8 {
                let n = 16 * 16;
                assert_eq!(
                    outcome.completed.values()[b * n + p].to_bits(),
                    noisy.values()[b * n + p].to_bits(),
                    "complete pixel {p} band {b} altered"
                );
            }
        }
    }

    #[test]
    fn stripe_inpainting_matches_denoising_quality() {
        let clean = make_ground_truth(64, 64, 32, 8, 17).unwrap();
        let noisy = add_case1(&clean, 0.10, 18).unwrap();
        // Scattered dead columns, the usual stripe pattern.
        let cols = [5usize, 13, 22, 30, 39, 47, 52, 58];
        let stripe_bands = [14usize, 15, 16, 17];
        let mask = make_stripe_mask(64, 64, 32, &stripe_bands, &cols).unwrap();
        let req = InpaintRequest::new(
            noisy,
            mask.clone(),
            NoiseSpec::Known(NoiseModel::iid(0.10).unwrap()),
            DimensionSpec::Fixed(10),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let out = fasthyin_iid(&req).unwrap();

        // Compare the damaged region (stripe pixels, all bands) against the
        // intact region: inpainting quality should match denoising quality.
        let (psnr_masked, psnr_rest) = region_psnr(&clean, &out.restored, &mask);
        assert!(
            (psnr_masked - psnr_rest).abs() <= 1.0,
            "masked region {psnr_masked:.2} dB vs unmasked {psnr_rest:.2} dB"
        );
    }

    /// PSNR over incomplete pixels (all bands) and complete pixels.
    fn region_psnr(clean: &HsiCube, restored: &HsiCube, mask: &ObservationMask) -> (f64, f64) {
        let n = clean.n_pixels();
        let damaged: std::collections::HashSet<usize> =
            mask.incomplete_pixels().into_iter().collect();
        let (mut mse_masked, mut cnt_masked) = (0.0, 0usize);
        let (mut mse_rest, mut cnt_rest) = (0.0, 0usize);
        for b in 0..clean.n_bands() {
            for p in 0..n {
                let d = restored.values()[b * n + p] - clean.values()[b * n + p];
                if damaged.contains(&p) {
                    mse_masked += d * d;
                    cnt_masked += 1;
                } else {
                    mse_rest += d * d;
                    cnt_rest += 1;
                }
            }
        }
        (
            10.0 * (1.0 / (mse_masked / cnt_masked as f64)).log10(),
            10.0 * (1.0 / (mse_rest / cnt_rest as f64)).log10(),
        )
    }

    #[test]
    fn noniid_isotropic_reduces_to_iid_inpainting() {
        let clean = make_ground_truth(32, 32, 16, 4, 19).unwrap();
        let noisy = add_case1(&clean, 0.1, 20).unwrap();
        let mask = make_stripe_mask(32, 32, 16, &[7, 8], &[5, 6, 7]).unwrap();
        let iid = InpaintRequest::new(
            noisy.clone(),
            mask.clone(),
            NoiseSpec::Known(NoiseModel::iid(0.1).unwrap()),
            DimensionSpec::Fixed(4),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let iso = InpaintRequest::new(
            noisy,
            mask,
            NoiseSpec::Known(NoiseModel::full(Array2::<f64>::eye(16) * 0.01).unwrap()),
            DimensionSpec::Fixed(4),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let a = fasthyin_iid(&iid).unwrap();
        let b = fasthyin_noniid(&iso).unwrap();
        assert!(rel_diff(&a.restored, &b.restored) <= 1e-9);
    }

    #[test]
    fn noniid_all_true_mask_reduces_to_fasthyde_noniid() {
        let clean = make_ground_truth(16, 16, 10, 3, 21).unwrap();
        let (noisy, model) = add_case2(&clean, 22).unwrap();
        let full = NoiseModel::full(model.to_covariance(10).unwrap()).unwrap();
        let mask = ObservationMask::all_observed(16, 16, 10);
        let inp = InpaintRequest::new(
            noisy.clone(),
            mask,
            NoiseSpec::Known(full.clone()),
            DimensionSpec::Fixed(4),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let den = DenoiseRequest::new(
            noisy,
            NoiseSpec::Known(full),
            DimensionSpec::Fixed(4),
            DenoiserSpec::bm3d_like(),
        )
        .unwrap();
        let a = fasthyin_noniid(&inp).unwrap();
        let b = fasthyde_noniid(&den).unwrap();
        assert!(rel_diff(&a.restored, &b.restored) <= 1e-12);
    }

    #[test]
    fn case2_stripe_benchmark_gains_and_masks_match() {
        let clean = make_ground_truth(64, 64, 32, 8, 23).unwrap();
        let (noisy, model) = add_case2(&clean, 24).unwrap();
        let cols = [6usize, 15, 21, 33, 42, 50, 57];
        let mask = make_stripe_mask(64, 64, 32, &[14, 15, 16, 17], &cols).unwrap();
        let input = report(&clean, &noisy).unwrap();
        let req = InpaintRequest::new(
            noisy,
            mask.clone(),
            NoiseSpec::Known(NoiseModel::full(model.to_covariance(32).unwrap()).unwrap()),
            DimensionSpec::Fixed(10),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let out = fasthyin_noniid(&req).unwrap();
        let restored = report(&clean, &out.restored).unwrap();
        assert!(
            restored.mpsnr >= input.mpsnr + 10.0,
            "gain {:.2}",
            restored.mpsnr - input.mpsnr
        );

        let (psnr_masked, psnr_rest) = region_psnr(&clean, &out.restored, &mask);
        assert!(
            (psnr_masked - psnr_rest).abs() <= 1.5,
            "masked region {psnr_masked:.2} vs unmasked {psnr_rest:.2}"
        );
    }

    #[test]
    fn diag_route_agrees_with_full_route() {
        let clean = make_ground_truth(32, 32, 16, 4, 25).unwrap();
        let (noisy, model) = add_case2(&clean, 26).unwrap();
        let mask = make_stripe_mask(32, 32, 16, &[6, 7], &[10, 11, 12]).unwrap();
        let diag_req = InpaintRequest::new(
            noisy.clone(),
            mask.clone(),
            NoiseSpec::Known(model.clone()),
            DimensionSpec::Fixed(5),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let full_req = InpaintRequest::new(
            noisy,
            mask,
            NoiseSpec::Known(NoiseModel::full(model.to_covariance(16).unwrap()).unwrap()),
            DimensionSpec::Fixed(5),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let a = fasthyin_diag(&diag_req).unwrap();
        let b = fasthyin_noniid(&full_req).unwrap();
        assert!(rel_diff(&a.restored, &b.restored) <= 1e-6);
    }

    #[test]
    fn diag_all_true_isotropic_equals_fasthyde_iid() {
        let clean = make_ground_truth(16, 16, 10, 3, 27).unwrap();
        let noisy = add_case1(&clean, 0.1, 28).unwrap();
        let mask = ObservationMask::all_observed(16, 16, 10);
        let diag_req = InpaintRequest::new(
            noisy.clone(),
            mask,
            NoiseSpec::Known(NoiseModel::diagonal(vec![0.01; 10]).unwrap()),
            DimensionSpec::Fixed(3),
            DenoiserSpec::bm3d_like(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        let iid_req = DenoiseRequest::new(
            noisy,
            NoiseSpec::Known(NoiseModel::iid(0.1).unwrap()),
            DimensionSpec::Fixed(3),
            DenoiserSpec::bm3d_like(),
        )
        .unwrap();
        let a = fasthyin_diag(&diag_req).unwrap();
        let b = fasthyde_iid(&iid_req).unwrap();
        assert!(rel_diff(&a.restored, &b.restored) <= 1e-9);
    }

    #[test]
    fn diag_per_pixel_coefficients_match_wls() {
        let basis = random_basis(12, 4, 29);
        let mut rng = CounterRng::new(30);
        for _ in 0..20 {
            let variances: Vec<f64> = (0..12).map(|_| 0.02 + rng.uniform()).collect();
            let diag = NoiseModel::diagonal(variances.clone()).unwrap();
            let full = NoiseModel::full(diag.to_covariance(12).unwrap()).unwrap();
            let n_obs = 5 + (rng.next_u64() as usize) % 7;
            let mut bands: Vec<usize> = (0..12).collect();
            for i in (1..12).rev() {
                let j = (rng.next_u64() as usize) % (i + 1);
                bands.swap(i, j);
            }
            let mut bands: Vec<usize> = bands[..n_obs].to_vec();
            bands.sort_unstable();
            let y_obs: Vec<f64> = (0..n_obs).map(|_| rng.gaussian()).collect();
            let a = recover_pixel_wls(&y_obs, &bands, &basis, &diag).unwrap();
            let b = recover_pixel_wls(&y_obs, &bands, &basis, &full).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn diag_rejects_full_model() {
        let clean = make_ground_truth(16, 16, 8, 3, 31).unwrap();
        let mask = ObservationMask::all_observed(16, 16, 8);
        let req = InpaintRequest::new(
            clean,
            mask,
            NoiseSpec::Known(NoiseModel::full(Array2::<f64>::eye(8)).unwrap()),
            DimensionSpec::Fixed(3),
            DenoiserSpec::identity(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        assert!(matches!(fasthyin_diag(&req), Err(Error::Unsupported(_))));
    }

    #[test]
    fn mask_monotonicity_at_zero_noise() {
        let clean = make_ground_truth(32, 32, 16, 4, 32).unwrap();
        let cols_small: Vec<usize> = (8..12).collect();
        let cols_large: Vec<usize> = (8..16).collect();
        // The larger mask (more columns missing) is a subset in observations.
        let mask_more_missing = make_stripe_mask(32, 32, 16, &[5, 6, 7], &cols_large).unwrap();
        let mask_less_missing = make_stripe_mask(32, 32, 16, &[5, 6, 7], &cols_small).unwrap();
        let mk = |mask: ObservationMask| {
            InpaintRequest::new(
                clean.clone(),
                mask,
                NoiseSpec::Known(NoiseModel::iid(1e-9).unwrap()),
                DimensionSpec::Fixed(4),
                DenoiserSpec::identity(),
                UnderdeterminedPolicy::Error,
            )
            .unwrap()
        };
        let a = fasthyin_iid(&mk(mask_more_missing)).unwrap();
        let b = fasthyin_iid(&mk(mask_less_missing)).unwrap();
        // Both recover the clean cube exactly; adding observations cannot
        // change the unique solution.
        assert!(rel_diff(&a.restored, &clean) <= 1e-8);
        assert!(rel_diff(&b.restored, &clean) <= 1e-8);
        assert!(rel_diff(&a.restored, &b.restored) <= 1e-8);
    }

    #[test]
    fn pixel_permutation_equivariance_with_identity_denoiser() {
        let clean = make_ground_truth(16, 16, 8, 3, 33).unwrap();
        let noisy = add_case1(&clean, 0.05, 34).unwrap();
        let mask = make_stripe_mask(16, 16, 8, &[3, 4], &[7, 8]).unwrap();

        // A seeded pixel permutation.
        let n = 16 * 16;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = CounterRng::new(35);
        for i in (1..n).rev() {
            let j = (rng.next_u64() as usize) % (i + 1);
            perm.swap(i, j);
        }
        let permute_cube = |c: &HsiCube| {
            let mut values = vec![0.0; c.values().len()];
            for b in 0..8 {
                for (p, &dst) in perm.iter().enumerate() {
                    values[b * n + dst] = c.values()[b * n + p];
                }
            }
            HsiCube::new(16, 16, 8, values).unwrap()
        };
        let mut mask_perm = ObservationMask::all_observed(16, 16, 8);
        for b in 0..8 {
            for (p, &dst) in perm.iter().enumerate() {
                mask_perm.set(dst, b, mask.is_observed(p, b));
            }
        }

        let mk = |cube: HsiCube, mask: ObservationMask| {
            InpaintRequest::new(
                cube,
                mask,
                NoiseSpec::Known(NoiseModel::iid(0.05).unwrap()),
                DimensionSpec::Fixed(3),
                DenoiserSpec::identity(),
                UnderdeterminedPolicy::Error,
            )
            .unwrap()
        };
        let base = fasthyin_iid(&mk(noisy.clone(), mask)).unwrap();
        let permuted = fasthyin_iid(&mk(permute_cube(&noisy), mask_perm)).unwrap();
        let expected = permute_cube(&base.restored);
        assert!(rel_diff(&permuted.restored, &expected) <= 1e-9);
    }

    #[test]
    fn too_few_complete_pixels_is_a_rank_error() {
        let clean = make_ground_truth(8, 8, 8, 2, 36).unwrap();
        // Leave only 12 complete pixels (need max(4k, nb) = 16).
        let mut mask = ObservationMask::all_observed(8, 8, 8);
        for p in 0..52 {
            mask.set(p, 3, false);
        }
        let req = InpaintRequest::new(
            clean,
            mask,
            NoiseSpec::Known(NoiseModel::iid(0.1).unwrap()),
            DimensionSpec::Fixed(4),
            DenoiserSpec::identity(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        assert!(matches!(fasthyin_iid(&req), Err(Error::Rank(_))));
    }

    #[test]
    fn ridge_policy_flags_pixels() {
        let clean = make_ground_truth(16, 16, 8, 4, 37).unwrap();
        let noisy = add_case1(&clean, 0.05, 38).unwrap();
        // Pixel 5 keeps only two observed bands: underdetermined for k = 4.
        let mut mask = ObservationMask::all_observed(16, 16, 8);
        for b in 0..6 {
            mask.set(5, b, false);
        }
        let mut req = InpaintRequest::new(
            noisy,
            mask,
            NoiseSpec::Known(NoiseModel::iid(0.05).unwrap()),
            DimensionSpec::Fixed(4),
            DenoiserSpec::identity(),
            UnderdeterminedPolicy::Error,
        )
        .unwrap();
        match fasthyin_iid(&req) {
            Err(Error::Underdetermined(msg)) => assert!(msg.contains("pixel 5")),
            other => panic!("expected underdetermined error, got {other:?}"),
        }
        req.policy = UnderdeterminedPolicy::Ridge;
        let out = fasthyin_iid(&req).unwrap();
        assert_eq!(out.ridge_pixels, vec![5]);
    }
}
