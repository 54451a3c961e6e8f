//! Signal-subspace identification and noise statistics.
//!
//! Spectral vectors of a hyperspectral cube concentrate near a k-dimensional
//! subspace with k far below the band count. This module learns a
//! semi-unitary basis for that subspace from the eigenvectors of the band
//! Gram matrix, estimates the band noise covariance by regressing each band
//! on the others, and picks a working subspace dimension by comparing signal
//! and noise power along each eigen-direction.

use ndarray::{Array1, Array2, ArrayView2};

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::linalg;

/// Ridge weight for the band-regression noise estimator, as a fraction of
/// the mean Gram diagonal. Guards near-collinear bands.
const NOISE_RIDGE_REL: f64 = 1e-6;

/// Signal-to-noise power factor a direction must exceed to count toward the
/// selected subspace dimension. Overestimation is cheap, underestimation is
/// not, so the factor errs low.
const DIMENSION_POWER_FACTOR: f64 = 2.0;

/// Directions below this fraction of the leading eigenvalue are treated as
/// numerically rank-deficient regardless of the noise model.
const DIMENSION_RANK_FLOOR: f64 = 1e-12;

/// Semi-unitary basis of the signal subspace: an `n_bands x k` matrix with
/// orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    e: Array2<f64>,
}

impl SubspaceBasis {
    /// Validates `E^T E = I_k` to 1e-10 in the max norm.
    pub fn new(e: Array2<f64>) -> Result<Self> {
        let (nb, k) = (e.nrows(), e.ncols());
        if k == 0 || k > nb {
            return Err(Error::InvalidArg(format!(
                "subspace dimension {k} out of range [1, {nb}]"
            )));
        }
        let gram = e.t().dot(&e);
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[[i, j]] - want).abs());
            }
        }
        if worst > 1e-10 {
            return Err(Error::Conditioning(format!(
                "basis is not semi-unitary (max |E^T E - I| = {worst:.3e})"
            )));
        }
        Ok(SubspaceBasis { e })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.e
    }

    pub fn n_bands(&self) -> usize {
        self.e.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.e.ncols()
    }

    /// The rows of `E` selected by `bands`, as an `n_obs x k` matrix.
    pub fn observed_rows(&self, bands: &[usize]) -> Array2<f64> {
        let k = self.dimension();
        let mut out = Array2::<f64>::zeros((bands.len(), k));
        for (r, &b) in bands.iter().enumerate() {
            for j in 0..k {
                out[[r, j]] = self.e[[b, j]];
            }
        }
        out
    }
}

/// Band-noise description: isotropic, per-band independent, or fully
/// correlated across bands (always pixelwise independent).
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Iid { sigma: f64 },
    Diagonal { variances: Vec<f64> },
    Full { covariance: Array2<f64> },
}

impl NoiseModel {
    pub fn iid(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "iid sigma must be positive, got {sigma}"
            )));
        }
        Ok(NoiseModel::Iid { sigma })
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::InvalidArg("empty variance vector".into()));
        }
        for (b, &v) in variances.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArg(format!(
                    "band {b} variance must be positive, got {v}"
                )));
            }
        }
        Ok(NoiseModel::Diagonal { variances })
    }

    /// Validates symmetry to 1e-10 and positive definiteness (via Cholesky,
    /// which succeeds exactly when the minimum eigenvalue is positive).
    pub fn full(covariance: Array2<f64>) -> Result<Self> {
        let nb = covariance.nrows();
        if nb == 0 || covariance.ncols() != nb {
            return Err(Error::InvalidArg(
                "covariance must be square and nonempty".into(),
            ));
        }
        let mut asym = 0.0f64;
        for i in 0..nb {
            for j in 0..i {
                asym = asym.max((covariance[[i, j]] - covariance[[j, i]]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(Error::InvalidArg(format!(
                "covariance asymmetric (max |C - C^T| = {asym:.3e})"
            )));
        }
        let zero = vec![0.0; nb];
        linalg::solve_spd(covariance.view(), &zero)
            .map_err(|_| Error::Conditioning("covariance is not positive definite".into()))?;
        Ok(NoiseModel::Full { covariance })
    }

    /// Band count the model is tied to; `None` for the isotropic model.
    pub fn n_bands(&self) -> Option<usize> {
        match self {
            NoiseModel::Iid { .. } => None,
            NoiseModel::Diagonal { variances } => Some(variances.len()),
            NoiseModel::Full { covariance } => Some(covariance.nrows()),
        }
    }

    /// Full covariance matrix for `n_bands` bands.
    pub fn to_covariance(&self, n_bands: usize) -> Result<Array2<f64>> {
        match self {
            NoiseModel::Iid { sigma } => Ok(Array2::eye(n_bands) * (sigma * sigma)),
            NoiseModel::Diagonal { variances } => {
                if variances.len() != n_bands {
                    return Err(Error::DimMismatch(format!(
                        "diagonal model has {} bands, cube has {n_bands}",
                        variances.len()
                    )));
                }
                Ok(Array2::from_diag(&Array1::from_vec(variances.clone())))
            }
            NoiseModel::Full { covariance } => {
                if covariance.nrows() != n_bands {
                    return Err(Error::DimMismatch(format!(
                        "full model has {} bands, cube has {n_bands}",
                        covariance.nrows()
                    )));
                }
                Ok(covariance.clone())
            }
        }
    }

    /// Diagonal view: off-diagonal correlations dropped.
    pub fn diagonal_view(&self, n_bands: usize) -> Result<NoiseModel> {
        match self {
            NoiseModel::Iid { sigma } => NoiseModel::diagonal(vec![sigma * sigma; n_bands]),
            NoiseModel::Diagonal { .. } => Ok(self.clone()),
            NoiseModel::Full { covariance } => NoiseModel::diagonal(
                (0..covariance.nrows())
                    .map(|i| covariance[[i, i]])
                    .collect(),
            ),
        }
    }

    /// Isotropic view: sigma is the root mean band variance.
    pub fn iid_view(&self) -> Result<NoiseModel> {
        match self {
            NoiseModel::Iid { .. } => Ok(self.clone()),
            NoiseModel::Diagonal { variances } => {
                let mean = variances.iter().sum::<f64>() / variances.len() as f64;
                NoiseModel::iid(mean.sqrt())
            }
            NoiseModel::Full { covariance } => {
                let nb = covariance.nrows();
                let mean = (0..nb).map(|i| covariance[[i, i]]).sum::<f64>() / nb as f64;
                NoiseModel::iid(mean.sqrt())
            }
        }
    }

    /// Noise standard deviation of a single band.
    pub fn band_std(&self, band: usize) -> f64 {
        match self {
            NoiseModel::Iid { sigma } => *sigma,
            NoiseModel::Diagonal { variances } => variances[band].sqrt(),
            NoiseModel::Full { covariance } => covariance[[band, band]].sqrt(),
        }
    }
}

/// Subspace coefficient images: row `i` of the `k x n` coefficient matrix,
/// rendered over the pixel grid, is the `i`-th eigen-image.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenImages {
    coeffs: Array2<f64>,
    width: usize,
    height: usize,
}

impl EigenImages {
    pub fn new(coeffs: Array2<f64>, width: usize, height: usize) -> Result<Self> {
        if coeffs.ncols() != width * height {
            return Err(Error::DimMismatch(format!(
                "coefficients have {} columns, grid has {} pixels",
                coeffs.ncols(),
                width * height
            )));
        }
        Ok(EigenImages {
            coeffs,
            width,
            height,
        })
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array2<f64> {
        &mut self.coeffs
    }

    pub fn dimension(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Eigen-image `i` as a `height x width` array.
    pub fn image(&self, i: usize) -> Array2<f64> {
        let row = self.coeffs.row(i);
        Array2::from_shape_vec((self.height, self.width), row.to_vec()).expect("length invariant")
    }

    pub fn set_image(&mut self, i: usize, img: &Array2<f64>) {
        let mut row = self.coeffs.row_mut(i);
        for (dst, src) in row.iter_mut().zip(img.iter()) {
            *dst = *src;
        }
    }
}

/// Eigenvalues (non-increasing) and eigenvectors of `Y Y^T / n`.
pub fn gram_spectrum(y: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = y.ncols() as f64;
    let gram = y.dot(&y.t());
    let (mut vals, vecs) = linalg::symmetric_eigen(gram.view());
    vals.mapv_inplace(|v| v / n);
    (vals, vecs)
}

/// Learn the top-`k` subspace basis from an `n_bands x n` spectra matrix.
pub fn learn_subspace_matrix(y: ArrayView2<f64>, k: usize) -> Result<SubspaceBasis> {
    let nb = y.nrows();
    if k == 0 || k > nb {
        return Err(Error::InvalidArg(format!(
            "subspace dimension {k} out of range [1, {nb}]"
        )));
    }
    let (_, vecs) = gram_spectrum(y);
    let mut e = Array2::<f64>::zeros((nb, k));
    for j in 0..k {
        e.column_mut(j).assign(&vecs.column(j));
    }
    SubspaceBasis::new(e)
}

/// Learn the top-`k` subspace basis from every pixel of a cube.
pub fn learn_subspace(cube: &HsiCube, k: usize) -> Result<SubspaceBasis> {
    learn_subspace_matrix(cube.matrix(), k)
}

/// Estimate the band noise covariance of an `n_bands x n` spectra matrix.
///
/// Each band is regressed on all other bands by ridge-stabilized ordinary
/// least squares; the per-band regression residuals are the noise estimates,
/// and their (symmetrized) sample covariance is returned as a full model. A
/// relative diagonal floor keeps the result positive definite even when the
/// residuals vanish.
pub fn estimate_noise_matrix(y: ArrayView2<f64>) -> Result<NoiseModel> {
    let (nb, n) = (y.nrows(), y.ncols());
    if nb < 2 {
        return Err(Error::Rank(format!(
            "noise estimation needs >= 2 bands, got {nb}"
        )));
    }
    if n < nb + 1 {
        return Err(Error::Rank(format!(
            "noise estimation needs more pixels ({n}) than bands + 1 ({})",
            nb + 1
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "non-finite value in noise estimation input".into(),
        ));
    }

    let gram = y.dot(&y.t());
    let trace: f64 = (0..nb).map(|i| gram[[i, i]]).sum();
    let ridge = NOISE_RIDGE_REL * trace / nb as f64;

    let mut residuals = Array2::<f64>::zeros((nb, n));
    let mut reduced = Array2::<f64>::zeros((nb - 1, nb - 1));
    let mut rhs = vec![0.0; nb - 1];
    for b in 0..nb {
        let others: Vec<usize> = (0..nb).filter(|&i| i != b).collect();
        for (i, &oi) in others.iter().enumerate() {
            for (j, &oj) in others.iter().enumerate() {
                reduced[[i, j]] = gram[[oi, oj]];
            }
            reduced[[i, i]] += ridge;
            rhs[i] = gram[[oi, b]];
        }
        let beta = linalg::solve_spd(reduced.view(), &rhs)?;
        for p in 0..n {
            let mut pred = 0.0;
            for (i, &oi) in others.iter().enumerate() {
                pred += beta[i] * y[[oi, p]];
            }
            residuals[[b, p]] = y[[b, p]] - pred;
        }
    }

    let mut cov = residuals.dot(&residuals.t());
    cov.mapv_inplace(|v| v / n as f64);
    for i in 0..nb {
        for j in 0..i {
            let s = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = s;
            cov[[j, i]] = s;
        }
    }
    let mean_diag: f64 = (0..nb).map(|i| cov[[i, i]]).sum::<f64>() / nb as f64;
    let floor = (1e-12 * mean_diag).max(1e-30);
    for i in 0..nb {
        cov[[i, i]] += floor;
    }
    NoiseModel::full(cov)
}

/// Estimate the band noise covariance from every pixel of a cube.
pub fn estimate_noise(cube: &HsiCube) -> Result<NoiseModel> {
    estimate_noise_matrix(cube.matrix())
}

/// Count the eigen-directions of `Y Y^T / n` whose signal power exceeds the
/// noise power in that direction by a factor of two, with a minimum of one.
pub fn select_dimension(cube: &HsiCube, noise: &NoiseModel) -> Result<usize> {
    select_dimension_matrix(cube.matrix(), noise)
}

/// [`select_dimension`] on an `n_bands x n` spectra matrix.
pub fn select_dimension_matrix(y: ArrayView2<f64>, noise: &NoiseModel) -> Result<usize> {
    let nb = y.nrows();
    let (vals, vecs) = gram_spectrum(y);
    let rank_floor = DIMENSION_RANK_FLOOR * vals[0].max(f64::MIN_POSITIVE);

    let cov = match noise {
        NoiseModel::Iid { .. } => None,
        _ => Some(noise.to_covariance(nb)?),
    };
    let mut count = 0usize;
    for i in 0..nb {
        let signal = vals[i];
        let noise_power = match (noise, &cov) {
            (NoiseModel::Iid { sigma }, _) => sigma * sigma,
            (_, Some(c)) => {
                let e = vecs.column(i);
                let mut s = 0.0;
                for a in 0..nb {
                    let mut row = 0.0;
                    for b in 0..nb {
                        row += c[[a, b]] * e[b];
                    }
                    s += e[a] * row;
                }
                s
            }
            _ => unreachable!(),
        };
        if signal >= DIMENSION_POWER_FACTOR * noise_power && signal >= rank_floor {
            count += 1;
        }
    }
    Ok(count.max(1))
}

/// Project a cube onto the basis: `Z = E^T Y`.
pub fn project(basis: &SubspaceBasis, cube: &HsiCube) -> Result<EigenImages> {
    if basis.n_bands() != cube.n_bands() {
        return Err(Error::DimMismatch(format!(
            "basis has {} bands, cube has {}",
            basis.n_bands(),
            cube.n_bands()
        )));
    }
    let z = basis.matrix().t().dot(&cube.matrix());
    EigenImages::new(z, cube.width(), cube.height())
}

/// Reconstruct a cube from subspace coefficients: `X = E Z`.
pub fn reconstruct(basis: &SubspaceBasis, eigen: &EigenImages) -> Result<HsiCube> {
    if basis.dimension() != eigen.dimension() {
        return Err(Error::DimMismatch(format!(
            "basis dimension {} does not match {} coefficient rows",
            basis.dimension(),
            eigen.dimension()
        )));
    }
    let x = basis.matrix().dot(eigen.coeffs());
    HsiCube::from_matrix(eigen.width(), eigen.height(), &x)
}
