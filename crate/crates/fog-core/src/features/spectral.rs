//! Periodogram estimation and the frequency-domain feature set.
//!
//! Band conventions: locomotor band [0.5, 3) Hz, freeze band [3, 8] Hz, with
//! band membership decided by bin-center frequency. The half-open edge at
//! 3 Hz keeps the shared boundary from being counted twice.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Locomotor band, half-open: `LOCOMOTOR_BAND.0 <= f < LOCOMOTOR_BAND.1`.
pub const LOCOMOTOR_BAND: (f64, f64) = (0.5, 3.0);
/// Freeze band, closed: `FREEZE_BAND.0 <= f <= FREEZE_BAND.1`.
pub const FREEZE_BAND: (f64, f64) = (3.0, 8.0);
/// Denominator floor for the freeze index.
pub const FREEZE_INDEX_EPSILON: f64 = 1e-12;
/// Cap keeping the freeze index finite on pure-freeze-band windows.
pub const FREEZE_INDEX_CAP: f64 = 1e6;

/// One-sided power spectral density of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    /// `P_k = |X_k|^2 / N` for `k = 0 ..= N/2`.
    pub powers: Vec<f64>,
    /// Window length N the spectrum was computed from.
    pub window_samples: usize,
    pub fs: f64,
}

impl Psd {
    /// Frequency resolution in Hz per bin.
    pub fn resolution_hz(&self) -> f64 {
        self.fs / self.window_samples as f64
    }

    /// Center frequency of bin `k`.
    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.resolution_hz()
    }
}

/// Periodogram of the raw (untapered) samples.
pub fn power_spectrum(samples: &[f32], fs: u32) -> Psd {
    let n = samples.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|&x| Complex::new(x as f64, 0.0))
        .collect();
    fft.process(&mut buf);
    let powers = (0..=n / 2)
        .map(|k| buf[k].norm_sqr() / n as f64)
        .collect();
    Psd {
        powers,
        window_samples: n,
        fs: fs as f64,
    }
}

/// The five frequency-domain features of one channel window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqFeatures {
    /// Shannon entropy (natural log) of the normalized one-sided spectrum.
    pub entropy: f64,
    /// Sum of squared DFT magnitudes over all N bins, divided by N.
    pub energy: f64,
    /// Frequency of the maximum-power bin (first bin on ties).
    pub peak_freq: f64,
    /// Freeze-band power over locomotor-band power, floored and capped.
    pub freeze_index: f64,
    /// Freeze-band power plus locomotor-band power.
    pub band_power: f64,
}

/// Compute the frequency features from a one-sided PSD.
///
/// `powers` must hold `N/2 + 1` bins for even `N` (`(N+1)/2` for odd `N`),
/// where `N = window_samples`.
pub fn freq_features(powers: &[f64], window_samples: usize, fs: f64) -> FreqFeatures {
    let n = window_samples;
    let resolution = fs / n as f64;

    // Mirror the one-sided bins back to the full-spectrum sum: interior bins
    // appear twice, DC once, and Nyquist once when N is even.
    let mut energy = 0.0;
    for (k, &p) in powers.iter().enumerate() {
        let mirrored = k == 0 || (n % 2 == 0 && k == n / 2);
        energy += if mirrored { p } else { 2.0 * p };
    }

    let total: f64 = powers.iter().sum();
    let mut entropy = 0.0;
    if total > 0.0 {
        for &p in powers {
            if p > 0.0 {
                let prob = p / total;
                entropy -= prob * prob.ln();
            }
        }
        // Clamp tiny negative rounding residue on one-bin spectra.
        entropy = entropy.max(0.0);
    }

    let mut peak_bin = 0usize;
    let mut peak_power = f64::NEG_INFINITY;
    for (k, &p) in powers.iter().enumerate() {
        if p > peak_power {
            peak_power = p;
            peak_bin = k;
        }
    }

    let mut locomotor = 0.0;
    let mut freeze = 0.0;
    for (k, &p) in powers.iter().enumerate() {
        let f = k as f64 * resolution;
        if f >= LOCOMOTOR_BAND.0 && f < LOCOMOTOR_BAND.1 {
            locomotor += p;
        } else if f >= FREEZE_BAND.0 && f <= FREEZE_BAND.1 {
            freeze += p;
        }
    }
    let freeze_index = if freeze == 0.0 {
        0.0
    } else {
        (freeze / locomotor.max(FREEZE_INDEX_EPSILON)).min(FREEZE_INDEX_CAP)
    };

    FreqFeatures {
        entropy,
        energy,
        peak_freq: peak_bin as f64 * resolution,
        freeze_index,
        band_power: freeze + locomotor,
    }
}
