//! Plug-in 2D denoisers for self-similar single-band images.
//!
//! The restoration pipelines treat denoising of a coefficient image as a
//! black box: hand in a noisy image and its noise standard deviation (in the
//! image's own scale), get back an estimate. Three interchangeable kinds are
//! provided: a pass-through, a non-local means filter, and a
//! collaborative-filtering denoiser in the BM3D family (grouping of similar
//! patches, separable orthonormal transform, hard thresholding, weighted
//! aggregation; single stage, no Wiener refinement).

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Hard-threshold multiple of sigma for the collaborative filter.
pub const HARD_THRESHOLD_FACTOR: f64 = 2.7;

/// Non-local means bandwidth factor: `h = NLM_H_FACTOR * sigma * patch_size`.
pub const NLM_H_FACTOR: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    /// Pass-through; useful for isolating the subspace stages.
    Identity,
    NlMeans,
    Bm3dLike,
}

/// Parameters of the plug-in denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserSpec {
    pub kind: DenoiserKind,
    /// Patch side length N1.
    pub patch_size: usize,
    /// Reference-patch grid step.
    pub step: usize,
    /// Search window side length Ns, centered on the reference patch.
    pub search_window: usize,
    /// Largest group of matched patches; must be a power of two.
    pub max_group_size: usize,
    /// Per-kind strength: the hard-threshold multiple of sigma for
    /// `Bm3dLike`, the bandwidth factor for `NlMeans`. Ignored by `Identity`.
    pub strength: f64,
}

impl DenoiserSpec {
    pub fn identity() -> Self {
        DenoiserSpec {
            kind: DenoiserKind::Identity,
            patch_size: 4,
            step: 3,
            search_window: 11,
            max_group_size: 16,
            strength: 0.0,
        }
    }

    /// Collaborative-filtering defaults: patch 4, step 3, search window 11,
    /// groups of 16, threshold 2.7 sigma.
    pub fn bm3d_like() -> Self {
        DenoiserSpec {
            kind: DenoiserKind::Bm3dLike,
            patch_size: 4,
            step: 3,
            search_window: 11,
            max_group_size: 16,
            strength: HARD_THRESHOLD_FACTOR,
        }
    }

    /// Non-local means defaults: patch 5, every pixel, search window 11.
    pub fn nl_means() -> Self {
        DenoiserSpec {
            kind: DenoiserKind::NlMeans,
            patch_size: 5,
            step: 1,
            search_window: 11,
            max_group_size: 16,
            strength: NLM_H_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::InvalidArg("patch size must be >= 2".into()));
        }
        if self.step < 1 {
            return Err(Error::InvalidArg("step must be >= 1".into()));
        }
        if self.search_window < self.patch_size {
            return Err(Error::InvalidArg(format!(
                "search window {} smaller than patch {}",
                self.search_window, self.patch_size
            )));
        }
        if self.max_group_size == 0 || !self.max_group_size.is_power_of_two() {
            return Err(Error::InvalidArg(format!(
                "max group size {} is not a power of two",
                self.max_group_size
            )));
        }
        if !matches!(self.kind, DenoiserKind::Identity)
            && !(self.strength.is_finite() && self.strength > 0.0)
        {
            return Err(Error::InvalidArg(format!(
                "strength must be positive, got {}",
                self.strength
            )));
        }
        Ok(())
    }
}

/// A filtered patch group ready for aggregation.
#[derive(Debug, Clone)]
pub struct FilteredGroup {
    /// Top-left (row, col) of each patch.
    pub positions: Vec<(usize, usize)>,
    pub patches: Vec<Array2<f64>>,
    /// Nonzero transform coefficients after thresholding.
    pub retained: usize,
}

// ---------------------------------------------------------------------------
// Block matching
// ---------------------------------------------------------------------------

/// Valid top-left positions of the search window around `r0` clamped to the
/// image, spanning at most `window` positions.
fn window_range(r0: usize, window: usize, last_valid: usize) -> (usize, usize) {
    let lo = (window - 1) / 2;
    let hi = window / 2;
    let start = r0.saturating_sub(lo);
    let end = (r0 + hi).min(last_valid);
    (start, end)
}

/// Mean squared distance between two patches of side `n1`.
fn patch_distance(image: &ArrayView2<f64>, a: (usize, usize), b: (usize, usize), n1: usize) -> f64 {
    let mut acc = 0.0;
    for dr in 0..n1 {
        for dc in 0..n1 {
            let d = image[[a.0 + dr, a.1 + dc]] - image[[b.0 + dr, b.1 + dc]];
            acc += d * d;
        }
    }
    acc / (n1 * n1) as f64
}

/// Positions of the patches most similar to the reference, ordered by
/// ascending mean squared distance. The reference is always first; remaining
/// ties break in row-major position order. At most `max_group_size`
/// positions are returned.
pub fn block_match(
    image: &ArrayView2<f64>,
    ref_pos: (usize, usize),
    spec: &DenoiserSpec,
) -> Vec<(usize, usize)> {
    let n1 = spec.patch_size;
    let (h, w) = (image.nrows(), image.ncols());
    debug_assert!(
        ref_pos.0 + n1 <= h && ref_pos.1 + n1 <= w,
        "reference patch out of bounds"
    );
    let (r_start, r_end) = window_range(ref_pos.0, spec.search_window, h - n1);
    let (c_start, c_end) = window_range(ref_pos.1, spec.search_window, w - n1);

    let mut scored: Vec<(f64, (usize, usize))> = Vec::new();
    for r in r_start..=r_end {
        for c in c_start..=c_end {
            if (r, c) == ref_pos {
                continue;
            }
            scored.push((patch_distance(image, ref_pos, (r, c), n1), (r, c)));
        }
    }
    // Row-major enumeration above makes an equal-key stable sort implement
    // the tie rule.
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut out = Vec::with_capacity(spec.max_group_size);
    out.push(ref_pos);
    for (_, pos) in scored {
        if out.len() >= spec.max_group_size {
            break;
        }
        out.push(pos);
    }
    out
}

// ---------------------------------------------------------------------------
// Orthonormal transforms
// ---------------------------------------------------------------------------

/// Orthonormal DCT-II matrix of size `n`.
fn dct_matrix(n: usize) -> Array2<f64> {
    let mut d = Array2::<f64>::zeros((n, n));
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for i in 0..n {
        for j in 0..n {
            d[[i, j]] = if i == 0 {
                norm0
            } else {
                norm * (std::f64::consts::PI * i as f64 * (2.0 * j as f64 + 1.0) / (2.0 * n as f64))
                    .cos()
            };
        }
    }
    d
}

/// In-place full orthonormal Haar decomposition; `v.len()` a power of two.
fn haar_forward(v: &mut [f64]) {
    let mut len = v.len();
    let mut tmp = vec![0.0; len];
    let c = std::f64::consts::FRAC_1_SQRT_2;
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            tmp[i] = (v[2 * i] + v[2 * i + 1]) * c;
            tmp[half + i] = (v[2 * i] - v[2 * i + 1]) * c;
        }
        v[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
}

/// Inverse of [`haar_forward`].
fn haar_inverse(v: &mut [f64]) {
    let n = v.len();
    let mut tmp = vec![0.0; n];
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for i in 0..half {
            tmp[2 * i] = (v[i] + v[half + i]) * c;
            tmp[2 * i + 1] = (v[i] - v[half + i]) * c;
        }
        v[..len].copy_from_slice(&tmp[..len]);
        len *= 2;
    }
}

// ---------------------------------------------------------------------------
// Collaborative filtering
// ---------------------------------------------------------------------------

/// Jointly filter a group of similar patches: orthonormal 2D DCT per patch,
/// orthonormal Haar across the group, hard threshold at `2.7 * sigma` (every
/// coefficient except the group DC), inverse transforms. Returns the
/// filtered stack and the retained-coefficient count.
pub fn collaborative_filter_group(
    group: &[Array2<f64>],
    sigma: f64,
) -> Result<(Vec<Array2<f64>>, usize)> {
    collaborative_filter_group_with(group, sigma, HARD_THRESHOLD_FACTOR)
}

pub fn collaborative_filter_group_with(
    group: &[Array2<f64>],
    sigma: f64,
    threshold_factor: f64,
) -> Result<(Vec<Array2<f64>>, usize)> {
    let m = group.len();
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::InvalidArg(format!(
            "group size {m} is not a power of two"
        )));
    }
    let n1 = group[0].nrows();
    for p in group {
        if p.nrows() != n1 || p.ncols() != n1 {
            return Err(Error::DimMismatch("ragged patch group".into()));
        }
    }
    let d = dct_matrix(n1);
    let threshold = threshold_factor * sigma;

    // Per-patch 2D transform.
    let mut spectra: Vec<Array2<f64>> = group.iter().map(|p| d.dot(p).dot(&d.t())).collect();

    // Haar across the group at each 2D position, threshold, inverse Haar.
    let mut retained = 0usize;
    let mut column = vec![0.0; m];
    for u in 0..n1 {
        for v in 0..n1 {
            for (p, spec_p) in spectra.iter().enumerate() {
                column[p] = spec_p[[u, v]];
            }
            haar_forward(&mut column);
            for (idx, c) in column.iter_mut().enumerate() {
                let is_group_dc = u == 0 && v == 0 && idx == 0;
                if !is_group_dc && c.abs() < threshold {
                    *c = 0.0;
                } else {
                    retained += 1;
                }
            }
            haar_inverse(&mut column);
            for (p, spec_p) in spectra.iter_mut().enumerate() {
                spec_p[[u, v]] = column[p];
            }
        }
    }

    let filtered = spectra.into_iter().map(|s| d.t().dot(&s).dot(&d)).collect();
    Ok((filtered, retained))
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Per-pixel weighted average of all patch estimates; each group weighs in
/// at `1 / max(retained, 1)`.
pub fn aggregate(groups: &[FilteredGroup], shape: (usize, usize)) -> Result<Array2<f64>> {
    let (h, w) = shape;
    let mut num = Array2::<f64>::zeros((h, w));
    let mut den = Array2::<f64>::zeros((h, w));
    for g in groups {
        if g.positions.len() != g.patches.len() {
            return Err(Error::DimMismatch(
                "group positions/patches length mismatch".into(),
            ));
        }
        let weight = 1.0 / g.retained.max(1) as f64;
        for (&(r0, c0), patch) in g.positions.iter().zip(&g.patches) {
            for dr in 0..patch.nrows() {
                for dc in 0..patch.ncols() {
                    num[[r0 + dr, c0 + dc]] += weight * patch[[dr, dc]];
                    den[[r0 + dr, c0 + dc]] += weight;
                }
            }
        }
    }
    for r in 0..h {
        for c in 0..w {
            if den[[r, c]] == 0.0 {
                return Err(Error::Data(format!(
                    "aggregation invariant violated: pixel ({r}, {c}) uncovered"
                )));
            }
            num[[r, c]] /= den[[r, c]];
        }
    }
    Ok(num)
}

// ---------------------------------------------------------------------------
// Band denoising
// ---------------------------------------------------------------------------

/// Reference-grid coordinates with step `step`, always including the
/// position flush with the far border so every pixel is covered.
fn coverage_grid(extent: usize, patch: usize, step: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut grid: Vec<usize> = (0..=last).step_by(step).collect();
    if *grid.last().unwrap() != last {
        grid.push(last);
    }
    grid
}

fn largest_pow2_at_most(x: usize) -> usize {
    debug_assert!(x >= 1);
    1usize << (usize::BITS - 1 - x.leading_zeros())
}

/// Denoise a single band image, assuming additive zero-mean noise of
/// standard deviation `sigma` in the image's own scale. With `sigma == 0`
/// every kind returns the input unchanged.
pub fn denoise_band(
    image: &ArrayView2<f64>,
    sigma: f64,
    spec: &DenoiserSpec,
) -> Result<Array2<f64>> {
    spec.validate()?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in denoiser input".into()));
    }
    let (h, w) = (image.nrows(), image.ncols());
    if h < spec.patch_size || w < spec.patch_size {
        return Err(Error::DimMismatch(format!(
            "image {h}x{w} smaller than one {0}x{0} patch",
            spec.patch_size
        )));
    }
    if matches!(spec.kind, DenoiserKind::Identity) || sigma == 0.0 {
        return Ok(image.to_owned());
    }
    match spec.kind {
        DenoiserKind::Identity => unreachable!(),
        DenoiserKind::Bm3dLike => denoise_bm3d_like(image, sigma, spec),
        DenoiserKind::NlMeans => Ok(denoise_nl_means(image, sigma, spec)),
    }
}

fn denoise_bm3d_like(
    image: &ArrayView2<f64>,
    sigma: f64,
    spec: &DenoiserSpec,
) -> Result<Array2<f64>> {
    let n1 = spec.patch_size;
    let (h, w) = (image.nrows(), image.ncols());
    let rows = coverage_grid(h, n1, spec.step);
    let cols = coverage_grid(w, n1, spec.step);

    let mut groups = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            let mut positions = block_match(image, (r, c), spec);
            positions.truncate(largest_pow2_at_most(positions.len()));
            let patches: Vec<Array2<f64>> = positions
                .iter()
                .map(|&(pr, pc)| image.slice(s![pr..pr + n1, pc..pc + n1]).to_owned())
                .collect();
            let (filtered, retained) =
                collaborative_filter_group_with(&patches, sigma, spec.strength)?;
            groups.push(FilteredGroup {
                positions,
                patches: filtered,
                retained,
            });
        }
    }
    aggregate(&groups, (h, w))
}

fn denoise_nl_means(image: &ArrayView2<f64>, sigma: f64, spec: &DenoiserSpec) -> Array2<f64> {
    let (h, w) = (image.nrows(), image.ncols());
    let n1 = spec.patch_size as isize;
    let (patch_lo, patch_hi) = (n1 / 2, (n1 - 1) / 2);
    let ns = spec.search_window as isize;
    let (win_lo, win_hi) = ((ns - 1) / 2, ns / 2);
    let h_bw = spec.strength * sigma * spec.patch_size as f64;
    let inv_h2 = 1.0 / (h_bw * h_bw);
    let noise_bias = 2.0 * sigma * sigma;

    let mut out = Array2::<f64>::zeros((h, w));
    for pr in 0..h as isize {
        for pc in 0..w as isize {
            let mut num = 0.0;
            let mut den = 0.0;
            for qr in (pr - win_lo).max(0)..=(pr + win_hi).min(h as isize - 1) {
                for qc in (pc - win_lo).max(0)..=(pc + win_hi).min(w as isize - 1) {
                    // Patch distance over offsets valid at both centers.
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for dr in -patch_lo..=patch_hi {
                        for dc in -patch_lo..=patch_hi {
                            let (ar, ac) = (pr + dr, pc + dc);
                            let (br, bc) = (qr + dr, qc + dc);
                            if ar < 0 || ac < 0 || br < 0 || bc < 0 {
                                continue;
                            }
                            let (ar, ac, br, bc) =
                                (ar as usize, ac as usize, br as usize, bc as usize);
                            if ar >= h || ac >= w || br >= h || bc >= w {
                                continue;
                            }
                            let d = image[[ar, ac]] - image[[br, bc]];
                            acc += d * d;
                            count += 1;
                        }
                    }
                    let d2 = acc / count as f64;
                    let weight = (-(d2 - noise_bias).max(0.0) * inv_h2).exp();
                    num += weight * image[[qr as usize, qc as usize]];
                    den += weight;
                }
            }
            out[[pr as usize, pc as usize]] = num / den;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn noisy_blocks_image(h: usize, w: usize, sigma: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
        // Piecewise-constant quadrants plus noise.
        let clean = Array2::from_shape_fn((h, w), |(r, c)| match (r >= h / 2, c >= w / 2) {
            (false, false) => 0.2,
            (false, true) => 0.8,
            (true, false) => 0.5,
            (true, true) => 0.35,
        });
        let mut rng = CounterRng::new(seed);
        let noisy = clean.mapv(|v| v) + Array2::from_shape_fn((h, w), |_| sigma * rng.gaussian());
        (clean, noisy)
    }

    fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.len() as f64
    }

    #[test]
    fn identity_kind_returns_input() {
        let (_, noisy) = noisy_blocks_image(16, 16, 0.1, 1);
        let out = denoise_band(&noisy.view(), 0.1, &DenoiserSpec::identity()).unwrap();
        assert_eq!(out, noisy);
    }

    #[test]
    fn zero_sigma_is_identity_for_all_kinds() {
        let (_, image) = noisy_blocks_image(16, 16, 0.1, 2);
        for spec in [
            DenoiserSpec::identity(),
            DenoiserSpec::nl_means(),
            DenoiserSpec::bm3d_like(),
        ] {
            let out = denoise_band(&image.view(), 0.0, &spec).unwrap();
            let err = (&out - &image).iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(err <= 1e-10, "{:?}: {err}", spec.kind);
        }
    }

    #[test]
    fn constant_image_is_a_fixed_point() {
        let image = Array2::from_elem((20, 20), 0.7);
        for spec in [DenoiserSpec::nl_means(), DenoiserSpec::bm3d_like()] {
            let out = denoise_band(&image.view(), 0.25, &spec).unwrap();
            let err = (&out - &image).iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(err <= 1e-8, "{:?}: {err}", spec.kind);
        }
    }

    #[test]
    fn both_kinds_reduce_noise_strongly() {
        let (clean, noisy) = noisy_blocks_image(64, 64, 0.1, 3);
        let input_mse = mse(&clean, &noisy);
        for spec in [DenoiserSpec::nl_means(), DenoiserSpec::bm3d_like()] {
            let out = denoise_band(&noisy.view(), 0.1, &spec).unwrap();
            let output_mse = mse(&clean, &out);
            assert!(
                output_mse <= 0.25 * input_mse,
                "{:?}: output mse {output_mse} vs input {input_mse}",
                spec.kind
            );
        }
    }

    #[test]
    fn noise_reduced_across_sigmas_on_standard_images() {
        // Piecewise-constant quadrants and a high-contrast repeated texture
        // (period-2 checkerboard: exact matches throughout the window).
        let blocks = noisy_blocks_image(48, 48, 0.0, 0).0;
        let checker =
            Array2::from_shape_fn((48, 48), |(r, c)| if (r + c) % 2 == 0 { 0.9 } else { 0.1 });
        for (name, clean) in [("blocks", blocks), ("checker", checker)] {
            for &sigma in &[0.05, 0.1, 0.2] {
                let mut rng = CounterRng::new(900 + (sigma * 100.0) as u64);
                let noisy = &clean + &Array2::from_shape_fn((48, 48), |_| sigma * rng.gaussian());
                let input_mse = mse(&clean, &noisy);
                for spec in [DenoiserSpec::nl_means(), DenoiserSpec::bm3d_like()] {
                    let out = denoise_band(&noisy.view(), sigma, &spec).unwrap();
                    assert!(
                        mse(&clean, &out) < input_mse,
                        "{:?} on {name} at sigma {sigma}: {} vs {input_mse}",
                        spec.kind,
                        mse(&clean, &out)
                    );
                }
            }
        }
    }

    #[test]
    fn denoiser_is_deterministic() {
        let (_, noisy) = noisy_blocks_image(32, 32, 0.1, 4);
        let a = denoise_band(&noisy.view(), 0.1, &DenoiserSpec::bm3d_like()).unwrap();
        let b = denoise_band(&noisy.view(), 0.1, &DenoiserSpec::bm3d_like()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let tiny = Array2::<f64>::zeros((2, 2));
        assert!(denoise_band(&tiny.view(), 0.1, &DenoiserSpec::bm3d_like()).is_err());
        let bad = Array2::from_elem((8, 8), f64::NAN);
        assert!(denoise_band(&bad.view(), 0.1, &DenoiserSpec::bm3d_like()).is_err());
        let img = Array2::<f64>::zeros((8, 8));
        assert!(denoise_band(&img.view(), -1.0, &DenoiserSpec::bm3d_like()).is_err());
        let mut spec = DenoiserSpec::bm3d_like();
        spec.max_group_size = 12;
        assert!(denoise_band(&img.view(), 0.1, &spec).is_err());
        let mut spec = DenoiserSpec::nl_means();
        spec.strength = 0.0;
        assert!(denoise_band(&img.view(), 0.1, &spec).is_err());
    }

    #[test]
    fn block_match_constant_image_row_major_ties() {
        let image = Array2::from_elem((16, 16), 1.0);
        let spec = DenoiserSpec::bm3d_like();
        let got = block_match(&image.view(), (0, 0), &spec);
        // Window clamps to rows 0..=5, cols 0..=5; all distances zero, so the
        // first 16 positions in row-major order win.
        let mut expected = Vec::new();
        'outer: for r in 0..=5 {
            for c in 0..=5 {
                expected.push((r, c));
                if expected.len() == 16 {
                    break 'outer;
                }
            }
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn block_match_exact_duplicate_ranks_second() {
        let mut rng = CounterRng::new(5);
        let mut image = Array2::from_shape_fn((16, 16), |_| rng.uniform());
        // Copy the patch at (6, 6) to (3, 4), inside the search window.
        for dr in 0..4 {
            for dc in 0..4 {
                image[[3 + dr, 4 + dc]] = image[[6 + dr, 6 + dc]];
            }
        }
        let got = block_match(&image.view(), (6, 6), &DenoiserSpec::bm3d_like());
        assert_eq!(got[0], (6, 6));
        assert_eq!(got[1], (3, 4));
    }

    #[test]
    fn block_match_matches_exhaustive_sort_oracle() {
        let mut rng = CounterRng::new(6);
        let image = Array2::from_shape_fn((32, 32), |_| rng.uniform());
        let spec = DenoiserSpec::bm3d_like();
        for &ref_pos in &[(0usize, 0usize), (10, 7), (28, 28), (5, 20)] {
            let got = block_match(&image.view(), ref_pos, &spec);

            // Oracle: double loop over the whole window, full sort.
            let n1 = spec.patch_size;
            let last = 32 - n1;
            let lo = (spec.search_window - 1) / 2;
            let hi = spec.search_window / 2;
            let mut scored = Vec::new();
            for r in ref_pos.0.saturating_sub(lo)..=(ref_pos.0 + hi).min(last) {
                for c in ref_pos.1.saturating_sub(lo)..=(ref_pos.1 + hi).min(last) {
                    let mut acc = 0.0;
                    for dr in 0..n1 {
                        for dc in 0..n1 {
                            let d =
                                image[[ref_pos.0 + dr, ref_pos.1 + dc]] - image[[r + dr, c + dc]];
                            acc += d * d;
                        }
                    }
                    scored.push((acc / (n1 * n1) as f64, (r, c)));
                }
            }
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            // Reference must head the list in the oracle too (distance 0).
            let mut expected: Vec<(usize, usize)> = vec![ref_pos];
            expected.extend(scored.iter().map(|&(_, p)| p).filter(|&p| p != ref_pos));
            expected.truncate(spec.max_group_size);
            assert_eq!(got, expected, "ref {ref_pos:?}");
        }
    }

    #[test]
    fn group_filter_sigma_zero_round_trips() {
        let mut rng = CounterRng::new(7);
        let group: Vec<Array2<f64>> = (0..4)
            .map(|_| Array2::from_shape_fn((4, 4), |_| rng.gaussian()))
            .collect();
        let (filtered, retained) = collaborative_filter_group(&group, 0.0).unwrap();
        assert_eq!(retained, 4 * 16);
        for (f, g) in filtered.iter().zip(&group) {
            let err = (f - g).iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(err <= 1e-10, "round-trip error {err}");
        }
    }

    #[test]
    fn group_filter_constant_group_keeps_only_dc() {
        let group: Vec<Array2<f64>> = (0..8).map(|_| Array2::from_elem((4, 4), 0.6)).collect();
        let (filtered, retained) = collaborative_filter_group(&group, 0.5).unwrap();
        assert_eq!(retained, 1);
        for f in &filtered {
            for v in f.iter() {
                assert!((v - 0.6).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn group_filter_rejects_non_power_of_two() {
        let group: Vec<Array2<f64>> = (0..3).map(|_| Array2::zeros((4, 4))).collect();
        assert!(collaborative_filter_group(&group, 0.1).is_err());
    }

    #[test]
    fn transform_round_trip_matches_dense_oracle() {
        // Dense oracle: the separable transform as one explicit orthonormal
        // matrix acting on the vectorized group.
        let (m, n1) = (4usize, 4usize);
        let mut rng = CounterRng::new(8);
        let group: Vec<Array2<f64>> = (0..m)
            .map(|_| Array2::from_shape_fn((n1, n1), |_| rng.gaussian()))
            .collect();

        let d = dct_matrix(n1);
        let mut haar = Array2::<f64>::zeros((m, m));
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            haar_forward(&mut e);
            for i in 0..m {
                haar[[i, j]] = e[i];
            }
        }
        // T[(p,u,v), (q,a,b)] = haar[p,q] * d[u,a] * d[v,b]
        let dim = m * n1 * n1;
        let mut t = Array2::<f64>::zeros((dim, dim));
        for p in 0..m {
            for u in 0..n1 {
                for v in 0..n1 {
                    for q in 0..m {
                        for a in 0..n1 {
                            for b in 0..n1 {
                                t[[p * n1 * n1 + u * n1 + v, q * n1 * n1 + a * n1 + b]] =
                                    haar[[p, q]] * d[[u, a]] * d[[v, b]];
                            }
                        }
                    }
                }
            }
        }
        let mut x = vec![0.0; dim];
        for (q, patch) in group.iter().enumerate() {
            for a in 0..n1 {
                for b in 0..n1 {
                    x[q * n1 * n1 + a * n1 + b] = patch[[a, b]];
                }
            }
        }
        let forward: Vec<f64> = (0..dim)
            .map(|i| (0..dim).map(|j| t[[i, j]] * x[j]).sum())
            .collect();
        // Orthonormal: inverse is the transpose.
        let back: Vec<f64> = (0..dim)
            .map(|j| (0..dim).map(|i| t[[i, j]] * forward[i]).sum())
            .collect();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-10);
        }

        // The module's round trip (sigma 0 keeps all coefficients) agrees.
        let (filtered, _) = collaborative_filter_group(&group, 0.0).unwrap();
        for (f, g) in filtered.iter().zip(&group) {
            let err = (f - g).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(err <= 1e-10);
        }
    }

    #[test]
    fn aggregate_single_group_is_exact() {
        let patch = Array2::from_shape_fn((4, 4), |(r, c)| (r * 4 + c) as f64);
        let groups = vec![FilteredGroup {
            positions: vec![(0, 0)],
            patches: vec![patch.clone()],
            retained: 5,
        }];
        let out = aggregate(&groups, (4, 4)).unwrap();
        for (a, b) in out.iter().zip(patch.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn aggregate_identical_proposals_are_unchanged() {
        let patch = Array2::from_elem((4, 4), 2.5);
        let groups = vec![
            FilteredGroup {
                positions: vec![(0, 0)],
                patches: vec![patch.clone()],
                retained: 1,
            },
            FilteredGroup {
                positions: vec![(0, 0)],
                patches: vec![patch.clone()],
                retained: 9,
            },
        ];
        let out = aggregate(&groups, (4, 4)).unwrap();
        for v in out.iter() {
            assert!((v - 2.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregate_matches_weighted_sum_recomputation() {
        let mut rng = CounterRng::new(9);
        let mk = |seed: u64| {
            let mut r = CounterRng::new(seed);
            Array2::from_shape_fn((3, 3), |_| r.uniform())
        };
        let groups = vec![
            FilteredGroup {
                positions: vec![(0, 0), (2, 2), (0, 2)],
                patches: vec![mk(1), mk(2), mk(5)],
                retained: 3,
            },
            FilteredGroup {
                positions: vec![(1, 1), (2, 0)],
                patches: vec![mk(3), mk(4)],
                retained: 7,
            },
        ];
        let out = aggregate(&groups, (5, 5)).unwrap();
        let mut num = vec![vec![0.0f64; 5]; 5];
        let mut den = vec![vec![0.0f64; 5]; 5];
        for g in &groups {
            let w = 1.0 / g.retained.max(1) as f64;
            for (pos, patch) in g.positions.iter().zip(&g.patches) {
                for dr in 0..3 {
                    for dc in 0..3 {
                        num[pos.0 + dr][pos.1 + dc] += w * patch[[dr, dc]];
                        den[pos.0 + dr][pos.1 + dc] += w;
                    }
                }
            }
        }
        for r in 0..5 {
            for c in 0..5 {
                if den[r][c] > 0.0 {
                    assert!((out[[r, c]] - num[r][c] / den[r][c]).abs() <= 1e-12);
                }
            }
        }
        let _ = rng.next_u64();
    }

    #[test]
    fn aggregate_detects_uncovered_pixels() {
        let groups = vec![FilteredGroup {
            positions: vec![(0, 0)],
            patches: vec![Array2::zeros((2, 2))],
            retained: 1,
        }];
        assert!(aggregate(&groups, (4, 4)).is_err());
    }

    #[test]
    fn aggregation_convexity_on_seeded_instances() {
        // Denoised output must sit inside the range of the patch estimates
        // covering each pixel; with full coverage the whole output lies in
        // the group-value envelope.
        for seed in 0..10u64 {
            let mut rng = CounterRng::new(1000 + seed);
            let image = Array2::from_shape_fn((24, 24), |_| rng.uniform());
            let spec = DenoiserSpec::bm3d_like();
            let out = denoise_band(&image.view(), 0.05, &spec).unwrap();
            assert!(out.iter().all(|v| v.is_finite()));
            // Recompute the per-pixel envelope from the same groups.
            let n1 = spec.patch_size;
            let rows = coverage_grid(24, n1, spec.step);
            let cols = coverage_grid(24, n1, spec.step);
            let mut lo = Array2::from_elem((24, 24), f64::INFINITY);
            let mut hi = Array2::from_elem((24, 24), f64::NEG_INFINITY);
            for &r in &rows {
                for &c in &cols {
                    let mut positions = block_match(&image.view(), (r, c), &spec);
                    positions.truncate(largest_pow2_at_most(positions.len()));
                    let patches: Vec<Array2<f64>> = positions
                        .iter()
                        .map(|&(pr, pc)| image.slice(s![pr..pr + n1, pc..pc + n1]).to_owned())
                        .collect();
                    let (filtered, _) =
                        collaborative_filter_group_with(&patches, 0.05, spec.strength).unwrap();
                    for (&(pr, pc), patch) in positions.iter().zip(&filtered) {
                        for dr in 0..n1 {
                            for dc in 0..n1 {
                                lo[[pr + dr, pc + dc]] =
                                    lo[[pr + dr, pc + dc]].min(patch[[dr, dc]]);
                                hi[[pr + dr, pc + dc]] =
                                    hi[[pr + dr, pc + dc]].max(patch[[dr, dc]]);
                            }
                        }
                    }
                }
            }
            for r in 0..24 {
                for c in 0..24 {
                    assert!(
                        out[[r, c]] >= lo[[r, c]] - 1e-10 && out[[r, c]] <= hi[[r, c]] + 1e-10,
                        "seed {seed}: pixel ({r},{c}) outside envelope"
                    );
                }
            }
        }
    }

    #[test]
    fn coverage_grid_includes_flush_border() {
        assert_eq!(coverage_grid(10, 4, 3), vec![0, 3, 6]);
        assert_eq!(coverage_grid(11, 4, 3), vec![0, 3, 6, 7]);
        assert_eq!(coverage_grid(4, 4, 3), vec![0]);
    }
}
