//! MFCC feature extraction: pre-emphasis, Hamming-windowed framing, radix-2
//! FFT power spectrum, mel filterbank, log, and an orthonormal DCT-II keeping
//! the first 13 coefficients.
//!
//! This path is optional — the default classifier consumes raw fragments — but
//! it is kept exact and fully tested (the FFT against a naive DFT, the DCT
//! against its orthonormality) so feature-based experiments are reproducible.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    /// Analysis frame length in samples (25 ms at 16 kHz).
    pub frame_len: usize,
    /// Frame hop in samples (10 ms at 16 kHz).
    pub hop: usize,
    /// FFT size; power of two, >= frame_len. Frames are zero-padded to it.
    pub fft_len: usize,
    /// Number of triangular mel filters.
    pub n_mels: usize,
    /// Number of cepstral coefficients kept (including the 0th).
    pub n_coeffs: usize,
    /// Pre-emphasis coefficient in [0, 1).
    pub pre_emphasis: f64,
    /// Floor applied before the log so silence stays finite.
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_len: 400,
            hop: 160,
            fft_len: 512,
            n_mels: 26,
            n_coeffs: 13,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.fft_len.is_power_of_two() {
            return Err(format!("fft_len {} is not a power of two", self.fft_len));
        }
        if self.fft_len < self.frame_len {
            return Err(format!(
                "fft_len {} smaller than frame_len {}",
                self.fft_len, self.frame_len
            ));
        }
        if self.frame_len == 0 || self.hop == 0 {
            return Err("frame_len and hop must be positive".into());
        }
        if self.n_coeffs > self.n_mels {
            return Err(format!(
                "n_coeffs {} exceeds n_mels {}",
                self.n_coeffs, self.n_mels
            ));
        }
        if self.n_mels == 0 {
            return Err("n_mels must be positive".into());
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(format!("pre_emphasis {} outside [0, 1)", self.pre_emphasis));
        }
        if self.log_floor <= 0.0 {
            return Err("log_floor must be positive".into());
        }
        Ok(())
    }
}

/// Frame-major coefficient matrix: `frames[i]` holds `n_coeffs` values.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccFrames {
    pub frames: Vec<Vec<f64>>,
}

/// First-difference high-pass: y[0] = x[0], y[t] = x[t] - alpha*x[t-1].
pub fn pre_emphasize(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    for (t, &v) in x.iter().enumerate() {
        y.push(if t == 0 { v } else { v - alpha * x[t - 1] });
    }
    y
}

/// Hamming window value at position n of a length-`len` window.
fn hamming(n: usize, len: usize) -> f64 {
    if len == 1 {
        return 1.0;
    }
    0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (len - 1) as f64).cos()
}

/// Slice the signal into Hamming-windowed frames zero-padded to fft_len.
/// Frame i starts at i*hop; only fully-contained frames are produced.
pub fn frame_and_window(x: &[f64], cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let mut frames = Vec::new();
    if x.len() < cfg.frame_len {
        return frames;
    }
    let mut start = 0;
    while start + cfg.frame_len <= x.len() {
        let mut frame = vec![0.0; cfg.fft_len];
        for n in 0..cfg.frame_len {
            frame[n] = x[start + n] * hamming(n, cfg.frame_len);
        }
        frames.push(frame);
        start += cfg.hop;
    }
    frames
}

/// In-place iterative radix-2 FFT (decimation in time) over split re/im parts.
pub fn fft_radix2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert!(n.is_power_of_two() && n == im.len());
    // Bit-reversal permutation.
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = -std::f64::consts::TAU / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                // Direct twiddle evaluation: slightly slower than a recurrence
                // but keeps per-bin error at rounding level.
                let (wi, wr) = (step * k as f64).sin_cos();
                let (ur, ui) = (re[start + k], im[start + k]);
                let (xr, xi) = (re[start + k + len / 2], im[start + k + len / 2]);
                let (vr, vi) = (xr * wr - xi * wi, xr * wi + xi * wr);
                re[start + k] = ur + vr;
                im[start + k] = ui + vi;
                re[start + k + len / 2] = ur - vr;
                im[start + k + len / 2] = ui - vi;
            }
        }
        len <<= 1;
    }
}

/// Power spectrum |X[p]|^2 for bins 0..=len/2 of a real frame whose length is
/// a power of two.
pub fn power_spectrum(frame: &[f64]) -> Vec<f64> {
    assert!(frame.len().is_power_of_two(), "frame length must be 2^k");
    let mut re = frame.to_vec();
    let mut im = vec![0.0; frame.len()];
    fft_radix2(&mut re, &mut im);
    (0..=frame.len() / 2)
        .map(|p| re[p] * re[p] + im[p] * im[p])
        .collect()
}

/// HTK mel scale.
pub fn mel(f_hz: f64) -> f64 {
    2595.0 * (1.0 + f_hz / 700.0).log10()
}

fn mel_inv(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center (peak) frequency of each mel filter in Hz: n_mels points equally
/// spaced in mel between 0 Hz and Nyquist, excluding both ends.
pub fn mel_filter_peaks(cfg: &MfccConfig, sample_rate_hz: u32) -> Vec<f64> {
    let nyquist_mel = mel(sample_rate_hz as f64 / 2.0);
    (1..=cfg.n_mels)
        .map(|i| mel_inv(nyquist_mel * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Triangular filter matrix, n_mels rows by fft_len/2 + 1 spectrum bins.
/// Each triangle rises linearly (in Hz) from the previous peak to its own and
/// falls to the next, with weight 1 at the peak; the outer edges sit at 0 Hz
/// and Nyquist.
pub fn mel_filterbank(cfg: &MfccConfig, sample_rate_hz: u32) -> Vec<Vec<f64>> {
    let n_bins = cfg.fft_len / 2 + 1;
    let peaks = mel_filter_peaks(cfg, sample_rate_hz);
    let mut edges = Vec::with_capacity(cfg.n_mels + 2);
    edges.push(0.0);
    edges.extend_from_slice(&peaks);
    edges.push(sample_rate_hz as f64 / 2.0);

    let bin_hz = sample_rate_hz as f64 / cfg.fft_len as f64;
    (0..cfg.n_mels)
        .map(|i| {
            let (lo, peak, hi) = (edges[i], edges[i + 1], edges[i + 2]);
            (0..n_bins)
                .map(|p| {
                    let f = p as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= peak {
                        (f - lo) / (peak - lo)
                    } else {
                        (hi - f) / (hi - peak)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II matrix with `n_out` rows and `n_in` columns:
/// row 0 is sqrt(1/N), row k>0 is sqrt(2/N)*cos(pi*(2n+1)*k/(2N)).
pub fn dct_ii_orthonormal(n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    assert!(n_out <= n_in);
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n_in as f64).sqrt()
            } else {
                (2.0 / n_in as f64).sqrt()
            };
            (0..n_in)
                .map(|n| {
                    scale
                        * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * n_in) as f64)
                            .cos()
                })
                .collect()
        })
        .collect()
}

/// Full MFCC pipeline: pre-emphasis, framing/windowing, power spectrum, mel
/// filterbank, natural log with floor, DCT-II, keep the first n_coeffs.
pub fn mfcc(x: &[f64], cfg: &MfccConfig, sample_rate_hz: u32) -> MfccFrames {
    debug_assert!(cfg.validate().is_ok());
    let emphasized = pre_emphasize(x, cfg.pre_emphasis);
    let filterbank = mel_filterbank(cfg, sample_rate_hz);
    let dct = dct_ii_orthonormal(cfg.n_mels, cfg.n_coeffs);
    let frames = frame_and_window(&emphasized, cfg)
        .iter()
        .map(|frame| {
            let power = power_spectrum(frame);
            let log_mel: Vec<f64> = filterbank
                .iter()
                .map(|row| {
                    let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
                    e.max(cfg.log_floor).ln()
                })
                .collect();
            dct.iter()
                .map(|row| row.iter().zip(&log_mel).map(|(c, v)| c * v).sum())
                .collect()
        })
        .collect();
    MfccFrames { frames }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive O(n^2) DFT power spectrum; the independent oracle for the FFT.
    fn dft_power_oracle(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|p| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in frame.iter().enumerate() {
                    let ang = std::f64::consts::TAU * p as f64 * t as f64 / n as f64;
                    re += x * ang.cos();
                    im -= x * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    fn max_norm(xs: &[f64]) -> f64 {
        xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn pre_emphasis_identity_at_zero_alpha() {
        let x = vec![0.3, -0.1, 0.7];
        assert_eq!(pre_emphasize(&x, 0.0), x);
    }

    #[test]
    fn pre_emphasis_constant_signal() {
        let y = pre_emphasize(&[2.0, 2.0, 2.0, 2.0], 0.97);
        assert!((y[0] - 2.0).abs() < 1e-15);
        for &v in &y[1..] {
            assert!((v - 0.06).abs() < 1e-12); // 2 - 0.97*2
        }
    }

    #[test]
    fn pre_emphasis_matches_reference_loop() {
        let x: Vec<f64> = (0..50)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0)
            .collect();
        let alpha = 0.9;
        let y = pre_emphasize(&x, alpha);
        for t in 0..x.len() {
            let expect = if t == 0 {
                x[0]
            } else {
                x[t] - alpha * x[t - 1]
            };
            assert_eq!(y[t], expect);
        }
    }

    #[test]
    fn default_framing_yields_73_frames_for_12000_samples() {
        let cfg = MfccConfig::default();
        let x = vec![0.1; 12_000];
        assert_eq!(frame_and_window(&x, &cfg).len(), 73);
    }

    #[test]
    fn hamming_endpoints_are_008() {
        let cfg = MfccConfig::default();
        let ones = vec![1.0; cfg.frame_len];
        let frames = frame_and_window(&ones, &cfg);
        // All-ones input: the frame is the window itself.
        assert!((frames[0][0] - 0.08).abs() < 1e-12);
        assert!((frames[0][cfg.frame_len - 1] - 0.08).abs() < 1e-12);
        // Zero padding beyond frame_len.
        assert!(frames[0][cfg.frame_len..].iter().all(|&v| v == 0.0));
        // Window midpoint is the maximum, 0.54 + 0.46 ~ 1.
        let mid = frames[0][..cfg.frame_len]
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        assert!(mid > 0.99);
    }

    #[test]
    fn short_signal_produces_no_frames() {
        let cfg = MfccConfig::default();
        assert!(frame_and_window(&vec![1.0; cfg.frame_len - 1], &cfg).is_empty());
    }

    #[test]
    fn power_spectrum_of_zero_is_zero() {
        assert!(power_spectrum(&[0.0; 64]).iter().all(|&p| p == 0.0));
    }

    #[test]
    fn power_spectrum_of_impulse_is_flat() {
        let mut frame = [0.0; 8];
        frame[0] = 1.0;
        for p in power_spectrum(&frame) {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn power_spectrum_of_pure_bin_tone() {
        // cos(2*pi*5 t/64): all energy in bin 5, |X[5]| = n/2.
        let n = 64;
        let frame: Vec<f64> = (0..n)
            .map(|t| (std::f64::consts::TAU * 5.0 * t as f64 / n as f64).cos())
            .collect();
        let ps = power_spectrum(&frame);
        for (p, &v) in ps.iter().enumerate() {
            if p == 5 {
                assert!((v - (n as f64 / 2.0).powi(2)).abs() < 1e-8);
            } else {
                assert!(v < 1e-16, "bin {p} leaked {v}");
            }
        }
    }

    #[test]
    fn fft_matches_naive_dft_across_sizes() {
        for exp in 3..=9 {
            let n = 1usize << exp;
            // Deterministic pseudo-random frame.
            let mut rng = crate::rng::SeededRng::new(exp as u64);
            let frame: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
            let fast = power_spectrum(&frame);
            let naive = dft_power_oracle(&frame);
            let err = fast
                .iter()
                .zip(&naive)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let scale = max_norm(&naive).max(1.0);
            assert!(err / scale < 1e-9, "n={n}: relative error {}", err / scale);
        }
    }

    #[test]
    fn mel_formula_fixed_points() {
        assert_eq!(mel(0.0), 0.0);
        // mel(700) = 2595*log10(2) = 781.172839, evaluated independently.
        assert!((mel(700.0) - 781.1728387480).abs() < 1e-6);
        assert!((mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn filterbank_rows_nonnegative_with_positive_mass() {
        let cfg = MfccConfig::default();
        let fb = mel_filterbank(&cfg, 16_000);
        assert_eq!(fb.len(), cfg.n_mels);
        for (i, row) in fb.iter().enumerate() {
            assert_eq!(row.len(), cfg.fft_len / 2 + 1);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().any(|&w| w > 0.0), "filter {i} is empty");
            assert!(row.iter().cloned().fold(0.0, f64::max) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn filterbank_peaks_are_mel_equally_spaced() {
        let cfg = MfccConfig::default();
        let peaks = mel_filter_peaks(&cfg, 16_000);
        assert_eq!(peaks.len(), cfg.n_mels);
        let step = mel(8000.0) / (cfg.n_mels + 1) as f64;
        for (i, &p) in peaks.iter().enumerate() {
            assert!((mel(p) - step * (i + 1) as f64).abs() < 1e-9);
        }
        assert!(peaks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dct_matrix_is_orthonormal() {
        let n = 26;
        let full = dct_ii_orthonormal(n, n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| full[i][k] * full[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-9, "({i},{j}) -> {dot}");
            }
        }
    }

    #[test]
    fn dct_of_constant_has_zero_higher_coefficients() {
        let dct = dct_ii_orthonormal(26, 13);
        let constant = vec![3.7; 26];
        let coeffs: Vec<f64> = dct
            .iter()
            .map(|row| row.iter().zip(&constant).map(|(c, v)| c * v).sum())
            .collect();
        assert!((coeffs[0] - 3.7 * 26f64.sqrt()).abs() < 1e-9);
        for (k, &c) in coeffs.iter().enumerate().skip(1) {
            assert!(c.abs() < 1e-9, "coefficient {k} = {c}");
        }
    }

    #[test]
    fn mfcc_default_shape_is_73_by_13() {
        let cfg = MfccConfig::default();
        let mut rng = crate::rng::SeededRng::new(1);
        let x: Vec<f64> = (0..12_000).map(|_| rng.next_f64() - 0.5).collect();
        let out = mfcc(&x, &cfg, 16_000);
        assert_eq!(out.frames.len(), 73);
        assert!(out.frames.iter().all(|f| f.len() == 13));
        assert!(out.frames.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn mfcc_of_silence_is_finite() {
        let cfg = MfccConfig::default();
        let out = mfcc(&vec![0.0; 4000], &cfg, 16_000);
        assert!(!out.frames.is_empty());
        assert!(out.frames.iter().flatten().all(|v| v.is_finite()));
        // Every mel energy hits the floor, so the log-mel vector is constant
        // and all coefficients past the 0th vanish.
        for frame in &out.frames {
            for &c in &frame[1..] {
                assert!(c.abs() < 1e-9);
            }
        }
    }

    /// Mel energies of a windowed pure tone, computed entirely through the
    /// naive DFT oracle (never the FFT), for localization checks.
    fn tone_mel_energies_via_oracle(freq: f64, cfg: &MfccConfig, sr: u32) -> Vec<f64> {
        let x: Vec<f64> = (0..cfg.frame_len)
            .map(|t| (std::f64::consts::TAU * freq * t as f64 / sr as f64).sin())
            .collect();
        let frames = frame_and_window(&x, cfg);
        let power = dft_power_oracle(&frames[0]);
        mel_filterbank(cfg, sr)
            .iter()
            .map(|row| row.iter().zip(&power).map(|(w, p)| w * p).sum())
            .collect()
    }

    #[test]
    fn pure_tones_localize_to_nearest_filter_peak() {
        let cfg = MfccConfig::default();
        let sr = 16_000;
        let peaks = mel_filter_peaks(&cfg, sr);
        // 300..3000 Hz in 100 Hz steps. Tones closer than 45 Hz to the
        // midpoint between two peaks are skipped: the 400-sample Hamming
        // window smears a tone by about +-80 Hz (two 40 Hz DFT bins either
        // side), so "nearest peak" is physically ill-defined right at the
        // boundary. Everything else must land exactly.
        let mut checked = 0;
        for f100 in 3..=30 {
            let freq = f100 as f64 * 100.0;
            let mut order: Vec<usize> = (0..peaks.len()).collect();
            order.sort_by(|&a, &b| {
                (peaks[a] - freq)
                    .abs()
                    .partial_cmp(&(peaks[b] - freq).abs())
                    .unwrap()
            });
            let (nearest, second) = (order[0], order[1]);
            let midpoint_margin =
                ((peaks[nearest] - freq).abs() - (peaks[second] - freq).abs()).abs() / 2.0;
            if midpoint_margin < 45.0 {
                continue;
            }
            let energies = tone_mel_energies_via_oracle(freq, &cfg, sr);
            let argmax = energies
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(
                argmax, nearest,
                "{freq} Hz: argmax filter peaks at {:.1} Hz, nearest is {:.1} Hz",
                peaks[argmax], peaks[nearest]
            );
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} unambiguous tones checked");
    }
}
