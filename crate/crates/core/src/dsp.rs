//! Small DSP toolbox: radix-2 FFT, Welch periodogram, single-bin DFT and a
//! bilinear one-pole low-pass. Kept dependency-free so the crate stays
//! `no_std`-compatible.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::Error;
use crate::math;
use crate::Result;

/// In-place iterative radix-2 FFT. `x.len()` must be a power of two.
pub fn fft_in_place(x: &mut [Complex64]) {
    let n = x.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            x.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -math::TAU / len as f64;
        let (s, c) = math::sincos(ang);
        let wlen = Complex64::new(c, s);
        let mut i = 0;
        while i < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = x[i + k];
                let v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - math::cos(math::TAU * i as f64 / n as f64)))
        .collect()
}

/// Averaged modified periodogram (Welch): Hann-tapered half-overlapping
/// segments with per-segment mean removal, one-sided scaling.
///
/// Returns `(frequencies, density, n_segments)` with density in units of
/// `x²/Hz`.
pub fn welch_psd(x: &[f64], fs: f64, nperseg: usize) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    if nperseg < 8 || !nperseg.is_power_of_two() {
        return Err(Error::Invalid("welch segment length must be a power of two >= 8"));
    }
    let hop = nperseg / 2;
    if x.len() < nperseg {
        return Err(Error::TraceTooShort {
            needed: nperseg,
            got: x.len(),
        });
    }
    let n_segments = (x.len() - nperseg) / hop + 1;

    let w = hann(nperseg);
    let win_power: f64 = w.iter().map(|v| v * v).sum();
    let scale = 1.0 / (fs * win_power);

    let half = nperseg / 2;
    let mut acc = vec![0.0f64; half + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); nperseg];

    for s in 0..n_segments {
        let seg = &x[s * hop..s * hop + nperseg];
        let mean = seg.iter().sum::<f64>() / nperseg as f64;
        for (i, (&v, &wv)) in seg.iter().zip(w.iter()).enumerate() {
            buf[i] = Complex64::new((v - mean) * wv, 0.0);
        }
        fft_in_place(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = buf[k].norm_sqr() * scale;
            if k != 0 && k != half {
                p *= 2.0; // fold negative frequencies into the one-sided density
            }
            *a += p;
        }
    }

    let inv = 1.0 / n_segments as f64;
    let density: Vec<f64> = acc.into_iter().map(|v| v * inv).collect();
    let freqs: Vec<f64> = (0..=half).map(|k| k as f64 * fs / nperseg as f64).collect();
    Ok((freqs, density, n_segments))
}

/// Integrate a sampled one-sided density over `[f_lo, f_hi]` by trapezoid
/// rule with linear interpolation at the band edges.
pub fn band_integral(freqs: &[f64], density: &[f64], f_lo: f64, f_hi: f64) -> f64 {
    debug_assert_eq!(freqs.len(), density.len());
    if freqs.len() < 2 || f_hi <= f_lo {
        return 0.0;
    }
    let interp = |f: f64| -> f64 {
        match freqs.iter().position(|&v| v >= f) {
            Some(0) => density[0],
            Some(i) => {
                let t = (f - freqs[i - 1]) / (freqs[i] - freqs[i - 1]);
                density[i - 1] + t * (density[i] - density[i - 1])
            }
            None => *density.last().unwrap(),
        }
    };
    let lo = f_lo.max(freqs[0]);
    let hi = f_hi.min(*freqs.last().unwrap());
    if hi <= lo {
        return 0.0;
    }

    let mut total = 0.0;
    let mut prev_f = lo;
    let mut prev_d = interp(lo);
    for (&f, &d) in freqs.iter().zip(density.iter()) {
        if f <= lo {
            continue;
        }
        if f >= hi {
            break;
        }
        total += 0.5 * (prev_d + d) * (f - prev_f);
        prev_f = f;
        prev_d = d;
    }
    total += 0.5 * (prev_d + interp(hi)) * (hi - prev_f);
    total
}

/// Amplitude of the `f_test` component of a uniformly sampled signal:
/// single-bin DFT scaled so a pure sine of amplitude A returns A.
///
/// The caller is responsible for passing a window that spans an integer
/// number of periods; otherwise leakage biases the estimate.
pub fn single_bin_amplitude(x: &[f64], fs: f64, f_test: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let mut re = 0.0;
    let mut im = 0.0;
    let w = math::TAU * f_test / fs;
    for (i, &v) in x.iter().enumerate() {
        let (s, c) = math::sincos(w * i as f64);
        re += v * c;
        im -= v * s;
    }
    2.0 * math::hypot(re, im) / n as f64
}

/// First-order low-pass (bilinear transform, cutoff prewarped so that the
/// −3 dB point lands exactly on `fc`).
#[derive(Debug, Clone)]
pub struct OnePole {
    b0: f64,
    a1: f64,
    x1: f64,
    y1: f64,
}

impl OnePole {
    pub fn new(fc: f64, dt: f64) -> Self {
        let k = math::tan(math::PI * fc * dt);
        Self {
            b0: k / (k + 1.0),
            a1: (k - 1.0) / (k + 1.0),
            x1: 0.0,
            y1: 0.0,
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * (x + self.x1) - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.y1 = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn fft_matches_naive_dft() {
        let n = 64;
        let x: Vec<f64> = (0..n)
            .map(|i| math::sin(0.3 * i as f64) + 0.2 * math::cos(1.1 * i as f64))
            .collect();
        let mut fast: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_in_place(&mut fast);
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let ang = -math::TAU * (k * i) as f64 / n as f64;
                let (s, c) = math::sincos(ang);
                acc += Complex64::new(v * c, v * s);
            }
            assert!((fast[k] - acc).norm() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn single_bin_recovers_sine_amplitude() {
        let fs = 4000.0;
        let f = 10.0;
        let x: Vec<f64> = (0..4000)
            .map(|i| 2.5e-3 * math::sin(math::TAU * f * i as f64 / fs))
            .collect();
        let a = single_bin_amplitude(&x, fs, f);
        assert!((a - 2.5e-3).abs() < 1e-9, "{a}");
    }

    #[test]
    fn one_pole_dc_gain_is_unity() {
        let mut lp = OnePole::new(200.0, 1.0 / 4000.0);
        let mut y = 0.0;
        for _ in 0..10_000 {
            y = lp.step(1.0);
        }
        assert!((y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_pole_is_3db_down_at_cutoff() {
        let fs = 4000.0;
        let fc = 200.0;
        let mut lp = OnePole::new(fc, 1.0 / fs);
        let n = 4000;
        let x: Vec<f64> = (0..n)
            .map(|i| math::sin(math::TAU * fc * i as f64 / fs))
            .collect();
        let y: Vec<f64> = x.iter().map(|&v| lp.step(v)).collect();
        // Skip the transient, measure the settled half.
        let a = single_bin_amplitude(&y[n / 2..], fs, fc);
        let expect = 1.0 / math::sqrt(2.0);
        assert!((a - expect).abs() < 0.01, "{a} vs {expect}");
    }

    #[test]
    fn welch_requires_enough_data() {
        let x = alloc::vec![0.0; 100];
        assert!(welch_psd(&x, 100.0, 256).is_err());
    }

    #[test]
    fn band_integral_of_flat_density() {
        let freqs: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let density = alloc::vec![2.0; 101];
        let v = band_integral(&freqs, &density, 0.5, 99.5);
        assert!((v - 2.0 * 99.0).abs() < 1e-9);
    }
}
