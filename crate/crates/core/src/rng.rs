//! Seeded, counter-based random number generation.
//!
//! Reproducibility across runs, platforms, and reimplementations is part of
//! the simulation harness contract, so the generator is pinned here rather
//! than left to a library default:
//!
//! * Base generator: **SplitMix64**. Draw `i` (zero-based) of a stream with
//!   key `s` is `mix64(s + (i + 1) * 0x9E3779B97F4A7C15)` where `mix64` is
//!   the SplitMix64 finalizer (xor-shift 30 / multiply `0xBF58476D1CE4E5B9`,
//!   xor-shift 27 / multiply `0x94D049BB133111EB`, xor-shift 31), all
//!   arithmetic modulo 2^64. This matches the reference SplitMix64 sequence
//!   seeded with `s`.
//! * Substreams: stream `t` of master seed `m` has key
//!   `mix64(m ^ mix64((t + 1) * 0x9E3779B97F4A7C15))`. Per-band noise uses
//!   stream `t` = band index, so bands may be generated in any order.
//! * Uniform doubles: `(u >> 11) as f64 * 2^-53`, in `[0, 1)`; the open
//!   variant adds one before scaling, giving `(0, 1]`.
//! * Gaussians: Box–Muller. Each pair of uniforms `(u1, u2)` (u1 open, u2
//!   half-open, drawn in that order) yields
//!   `r = sqrt(-2 ln u1)` and the pair `(r cos(2π u2), r sin(2π u2))`,
//!   returned in that order.
//! * Poisson: Knuth's product method below mean 10, transformed rejection
//!   (PTRS) at and above; both consume uniforms from the same stream.

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    /// Cached second Box–Muller output.
    spare_gauss: Option<f64>,
}

impl CounterRng {
    /// Stream keyed directly by `seed`.
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: seed,
            counter: 0,
            spare_gauss: None,
        }
    }

    /// Substream `stream` of master seed `seed` (see module docs).
    pub fn substream(seed: u64, stream: u64) -> Self {
        Self::new(mix64(
            seed ^ mix64(stream.wrapping_add(1).wrapping_mul(GOLDEN)),
        ))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)`, 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe to pass to `ln`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare_gauss.take() {
            return g;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_gauss = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Poisson draw with the given mean.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        assert!(mean >= 0.0 && mean.is_finite(), "poisson mean {mean}");
        if mean == 0.0 {
            return 0;
        }
        if mean < 10.0 {
            self.poisson_knuth(mean)
        } else {
            self.poisson_ptrs(mean)
        }
    }

    fn poisson_knuth(&mut self, mean: f64) -> u64 {
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.uniform_open();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }

    /// Transformed rejection with squeeze (Hörmann, 1993).
    fn poisson_ptrs(&mut self, mean: f64) -> u64 {
        let slam = mean.sqrt();
        let loglam = mean.ln();
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let invalpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform_open();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
            if us >= 0.07 && v <= vr && k >= 0.0 {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = v.ln() + invalpha.ln() - (a / (us * us) + b).ln();
            let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
            if lhs <= rhs {
                return k as u64;
            }
        }
    }
}

/// Lanczos approximation of `ln Γ(x)` for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection; not hit by the Poisson path (x >= 1) but kept total.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9_f64;
    for (i, c) in COEF.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (std::f64::consts::TAU).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
