//! Noise-shape conversions: whitening of band-correlated Gaussian noise and
//! Anscombe variance stabilization of Poissonian counts.

use ndarray::Array2;

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::linalg;
use crate::subspace::NoiseModel;

/// Covariances whose eigenvalue spread exceeds this are rejected: whitening
/// would amplify rounding noise without bound.
const PD_REL_TOLERANCE: f64 = 1e-12;

/// Symmetric whitening operator `W = C^(-1/2)` and its inverse `C^(1/2)`.
#[derive(Debug, Clone)]
pub struct WhiteningOperator {
    w: Array2<f64>,
    w_inv: Array2<f64>,
    /// The covariance the operator was built from.
    source: NoiseModel,
}

impl WhiteningOperator {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.w
    }
    pub fn inverse(&self) -> &Array2<f64> {
        &self.w_inv
    }
    pub fn source(&self) -> &NoiseModel {
        &self.source
    }
    pub fn n_bands(&self) -> usize {
        self.w.nrows()
    }
}

/// Build the symmetric square-root whitener for a noise model.
///
/// Isotropic and diagonal models whiten band-by-band; a full covariance goes
/// through its symmetric eigendecomposition `C = U L U^T`, giving
/// `W = U L^(-1/2) U^T`. The symmetric root is unique and self-adjoint, so
/// unwhitening is just the matching `U L^(1/2) U^T`.
pub fn build_whitener(noise: &NoiseModel, n_bands: usize) -> Result<WhiteningOperator> {
    match noise {
        NoiseModel::Iid { sigma } => {
            let w = Array2::eye(n_bands) / *sigma;
            let w_inv = Array2::eye(n_bands) * *sigma;
            Ok(WhiteningOperator {
                w,
                w_inv,
                source: noise.clone(),
            })
        }
        NoiseModel::Diagonal { variances } => {
            if variances.len() != n_bands {
                return Err(Error::DimMismatch(format!(
                    "diagonal model has {} bands, expected {n_bands}",
                    variances.len()
                )));
            }
            let max_v = variances.iter().cloned().fold(0.0, f64::max);
            let mut w = Array2::<f64>::zeros((n_bands, n_bands));
            let mut w_inv = Array2::<f64>::zeros((n_bands, n_bands));
            for (b, &v) in variances.iter().enumerate() {
                if v <= PD_REL_TOLERANCE * max_v {
                    return Err(Error::Conditioning(format!(
                        "band {b} variance {v:.3e} below tolerance ({:.3e})",
                        PD_REL_TOLERANCE * max_v
                    )));
                }
                let s = v.sqrt();
                w[[b, b]] = 1.0 / s;
                w_inv[[b, b]] = s;
            }
            Ok(WhiteningOperator {
                w,
                w_inv,
                source: noise.clone(),
            })
        }
        NoiseModel::Full { covariance } => {
            if covariance.nrows() != n_bands {
                return Err(Error::DimMismatch(format!(
                    "full model has {} bands, expected {n_bands}",
                    covariance.nrows()
                )));
            }
            let (vals, vecs) = linalg::symmetric_eigen(covariance.view());
            let max_v = vals[0];
            let min_v = vals[n_bands - 1];
            if min_v <= PD_REL_TOLERANCE * max_v {
                return Err(Error::Conditioning(format!(
                    "covariance eigenvalue {min_v:.3e} below tolerance ({:.3e})",
                    PD_REL_TOLERANCE * max_v
                )));
            }
            let mut w = Array2::<f64>::zeros((n_bands, n_bands));
            let mut w_inv = Array2::<f64>::zeros((n_bands, n_bands));
            for a in 0..n_bands {
                for b in 0..n_bands {
                    let mut s = 0.0;
                    let mut si = 0.0;
                    for k in 0..n_bands {
                        let f = vecs[[a, k]] * vecs[[b, k]];
                        s += f / vals[k].sqrt();
                        si += f * vals[k].sqrt();
                    }
                    w[[a, b]] = s;
                    w_inv[[a, b]] = si;
                }
            }
            // Exact symmetry by construction up to rounding; enforce it.
            for a in 0..n_bands {
                for b in 0..a {
                    let s = 0.5 * (w[[a, b]] + w[[b, a]]);
                    w[[a, b]] = s;
                    w[[b, a]] = s;
                    let si = 0.5 * (w_inv[[a, b]] + w_inv[[b, a]]);
                    w_inv[[a, b]] = si;
                    w_inv[[b, a]] = si;
                }
            }
            Ok(WhiteningOperator {
                w,
                w_inv,
                source: noise.clone(),
            })
        }
    }
}

/// Left-multiply every spectrum by `W`, making the noise covariance identity.
pub fn whiten(cube: &HsiCube, op: &WhiteningOperator) -> Result<HsiCube> {
    apply_band_matrix(cube, &op.w)
}

/// Invert [`whiten`] with `C^(1/2)`.
pub fn unwhiten(cube: &HsiCube, op: &WhiteningOperator) -> Result<HsiCube> {
    apply_band_matrix(cube, &op.w_inv)
}

fn apply_band_matrix(cube: &HsiCube, m: &Array2<f64>) -> Result<HsiCube> {
    if m.ncols() != cube.n_bands() {
        return Err(Error::DimMismatch(format!(
            "operator has {} bands, cube has {}",
            m.ncols(),
            cube.n_bands()
        )));
    }
    let out = m.dot(&cube.matrix());
    HsiCube::from_matrix(cube.width(), cube.height(), &out)
}

/// Anscombe transform `y -> 2 sqrt(y + 3/8)`, stabilizing Poisson variance
/// near one for means of a few counts and above.
pub fn anscombe(cube: &HsiCube) -> Result<HsiCube> {
    if let Some(pos) = cube.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Data(format!(
            "anscombe input must be nonnegative; value {} at flat index {pos}",
            cube.values()[pos]
        )));
    }
    let values = cube
        .values()
        .iter()
        .map(|&v| 2.0 * (v + 0.375).sqrt())
        .collect();
    let mut out = HsiCube::new(cube.width(), cube.height(), cube.n_bands(), values)?;
    out.dtype = cube.dtype;
    Ok(out)
}

/// Algebraic inverse of [`anscombe`]: `(y/2)^2 - 3/8`, clamped at zero.
/// Returns the restored cube and the number of clamped samples.
pub fn inverse_anscombe(cube: &HsiCube) -> Result<(HsiCube, usize)> {
    let mut clamped = 0usize;
    let values = cube
        .values()
        .iter()
        .map(|&v| {
            let x = (v / 2.0) * (v / 2.0) - 0.375;
            if x < 0.0 {
                clamped += 1;
                0.0
            } else {
                x
            }
        })
        .collect();
    let mut out = HsiCube::new(cube.width(), cube.height(), cube.n_bands(), values)?;
    out.dtype = cube.dtype;
    Ok((out, clamped))
}

/// Whiten the observed components of one pixel under a bandwise-independent
/// model: each observed value is divided by its band's noise standard
/// deviation. This is the diagonal-covariance shortcut; correlated models
/// must go through the full per-pixel covariance instead.
pub fn whiten_masked_pixel(
    y_obs: &[f64],
    observed_bands: &[usize],
    noise: &NoiseModel,
) -> Result<Vec<f64>> {
    if y_obs.len() != observed_bands.len() {
        return Err(Error::DimMismatch(format!(
            "{} observed values but {} band indices",
            y_obs.len(),
            observed_bands.len()
        )));
    }
    match noise {
        NoiseModel::Iid { sigma } => Ok(y_obs.iter().map(|v| v / sigma).collect()),
        NoiseModel::Diagonal { variances } => {
            let mut out = Vec::with_capacity(y_obs.len());
            for (&v, &b) in y_obs.iter().zip(observed_bands) {
                if b >= variances.len() {
                    return Err(Error::DimMismatch(format!(
                        "band index {b} out of range for {} bands",
                        variances.len()
                    )));
                }
                out.push(v / variances[b].sqrt());
            }
            Ok(out)
        }
        NoiseModel::Full { .. } => Err(Error::Unsupported(
            "per-pixel whitening shortcut requires an iid or diagonal noise model".into(),
        )),
    }
}
