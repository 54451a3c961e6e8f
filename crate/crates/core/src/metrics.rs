//! Band-wise image quality metrics and their CSV report format.
//!
//! PSNR uses `10 log10(peak^2 / MSE)` and reports an exact match (zero MSE)
//! as positive infinity. SSIM is the mean local structural similarity under
//! an 11x11 Gaussian window of standard deviation 1.5 with the usual
//! `C1 = (0.01 peak)^2`, `C2 = (0.03 peak)^2` constants; windows are clipped
//! at the image border and their weights renormalized.

use ndarray::{Array2, ArrayView2};

use crate::cube::HsiCube;
use crate::error::{Error, Result};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Per-band quality plus the band means.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub band_psnr: Vec<f64>,
    pub band_ssim: Vec<f64>,
    pub mpsnr: f64,
    pub mssim: f64,
}

/// Peak signal-to-noise ratio in dB; infinite when the images agree exactly.
pub fn psnr_band(reference: &ArrayView2<f64>, test: &ArrayView2<f64>, peak: f64) -> Result<f64> {
    if reference.dim() != test.dim() {
        return Err(Error::DimMismatch(format!(
            "psnr shapes {:?} vs {:?}",
            reference.dim(),
            test.dim()
        )));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "psnr peak must be positive, got {peak}"
        )));
    }
    let mse = reference
        .iter()
        .zip(test.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as isize - half;
        *t = (-(d * d) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    taps
}

/// Separable Gaussian blur with border-clipped, renormalized windows. The
/// row and column renormalizations factor exactly into the 2D one because
/// the clipped window stays rectangular.
fn blur(img: &ArrayView2<f64>) -> Array2<f64> {
    let taps = gaussian_taps();
    let half = (SSIM_WINDOW / 2) as isize;
    let (h, w) = (img.nrows() as isize, img.ncols() as isize);
    let mut rows = Array2::<f64>::zeros((h as usize, w as usize));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let cc = c + i as isize - half;
                if cc < 0 || cc >= w {
                    continue;
                }
                acc += t * img[[r as usize, cc as usize]];
                wsum += t;
            }
            rows[[r as usize, c as usize]] = acc / wsum;
        }
    }
    let mut out = Array2::<f64>::zeros((h as usize, w as usize));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let rr = r + i as isize - half;
                if rr < 0 || rr >= h {
                    continue;
                }
                acc += t * rows[[rr as usize, c as usize]];
                wsum += t;
            }
            out[[r as usize, c as usize]] = acc / wsum;
        }
    }
    out
}

/// Mean local SSIM over the image, in `[-1, 1]`.
pub fn ssim_band(reference: &ArrayView2<f64>, test: &ArrayView2<f64>, peak: f64) -> Result<f64> {
    if reference.dim() != test.dim() {
        return Err(Error::DimMismatch(format!(
            "ssim shapes {:?} vs {:?}",
            reference.dim(),
            test.dim()
        )));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "ssim peak must be positive, got {peak}"
        )));
    }
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);

    let mu_x = blur(reference);
    let mu_y = blur(test);
    let xx = blur(&(reference.to_owned() * reference).view());
    let yy = blur(&(test.to_owned() * test).view());
    let xy = blur(&(reference.to_owned() * test).view());

    let mut acc = 0.0;
    for r in 0..reference.nrows() {
        for c in 0..reference.ncols() {
            let mx = mu_x[[r, c]];
            let my = mu_y[[r, c]];
            let vx = xx[[r, c]] - mx * mx;
            let vy = yy[[r, c]] - my * my;
            let cov = xy[[r, c]] - mx * my;
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(acc / reference.len() as f64)
}

/// Per-band PSNR/SSIM against a reference cube, with the peak taken as each
/// reference band's dynamic range (one, for a normalized reference).
pub fn report(reference: &HsiCube, test: &HsiCube) -> Result<QualityReport> {
    if !reference.same_shape(test) {
        return Err(Error::DimMismatch(format!(
            "reference {}x{}x{} vs test {}x{}x{}",
            reference.width(),
            reference.height(),
            reference.n_bands(),
            test.width(),
            test.height(),
            test.n_bands()
        )));
    }
    let mut band_psnr = Vec::with_capacity(reference.n_bands());
    let mut band_ssim = Vec::with_capacity(reference.n_bands());
    for b in 0..reference.n_bands() {
        let ref_band = reference.band(b);
        let lo = ref_band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ref_band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Err(Error::DegenerateBand { band: b, value: lo });
        }
        let peak = hi - lo;
        let test_band = test.band(b);
        band_psnr.push(psnr_band(&ref_band, &test_band, peak)?);
        band_ssim.push(ssim_band(&ref_band, &test_band, peak)?);
    }
    let mpsnr = band_psnr.iter().sum::<f64>() / band_psnr.len() as f64;
    let mssim = band_ssim.iter().sum::<f64>() / band_ssim.len() as f64;
    Ok(QualityReport {
        band_psnr,
        band_ssim,
        mpsnr,
        mssim,
    })
}

impl QualityReport {
    /// CSV rendering: a `band,psnr_db,ssim` header, one row per band, then
    /// `mpsnr` and `mssim` footer rows; six fixed decimals throughout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,psnr_db,ssim\n");
        for (b, (p, s)) in self.band_psnr.iter().zip(&self.band_ssim).enumerate() {
            out.push_str(&format!("{b},{p:.6},{s:.6}\n"));
        }
        out.push_str(&format!("mpsnr,{:.6}\n", self.mpsnr));
        out.push_str(&format!("mssim,{:.6}\n", self.mssim));
        out
    }

    pub fn from_csv(text: &str) -> Result<QualityReport> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "band,psnr_db,ssim" {
            return Err(Error::Data(format!("unexpected report header {header:?}")));
        }
        let mut band_psnr = Vec::new();
        let mut band_ssim = Vec::new();
        let mut mpsnr = None;
        let mut mssim = None;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Data(format!("bad number {s:?}: {e}")))
            };
            match fields.as_slice() {
                [b, p, s] => {
                    let idx: usize = b
                        .parse()
                        .map_err(|e| Error::Data(format!("bad band index {b:?}: {e}")))?;
                    if idx != band_psnr.len() {
                        return Err(Error::Data(format!("band rows out of order at {idx}")));
                    }
                    band_psnr.push(parse(p)?);
                    band_ssim.push(parse(s)?);
                }
                ["mpsnr", v] => mpsnr = Some(parse(v)?),
                ["mssim", v] => mssim = Some(parse(v)?),
                _ => return Err(Error::Data(format!("unexpected report row {line:?}"))),
            }
        }
        let (Some(mpsnr), Some(mssim)) = (mpsnr, mssim) else {
            return Err(Error::Data("report missing mpsnr/mssim footer".into()));
        };
        if band_psnr.is_empty() {
            return Err(Error::Data("report has no band rows".into()));
        }
        Ok(QualityReport {
            band_psnr,
            band_ssim,
            mpsnr,
            mssim,
        })
    }
}
