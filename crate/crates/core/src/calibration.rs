//! Machine-to-machine spectral calibration.
//!
//! Two machines imaging the same medium record spectra that differ only by
//! the ratio of their system responses. This module estimates that ratio from
//! calibration-phantom recordings as a per-depth-bin, per-frequency gain
//! (`compute_gamma`), regularizes it with an SNR-weighted inverse (`wiener`),
//! and applies it to RF data as a zero-phase, depth-varying magnitude filter
//! (`apply_frame` / `apply_signal`).

use std::path::Path;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft_forward, fft_inverse, hann};
use crate::error::{Error, Result};
use crate::rfsim::RFFrame;

/// Default analysis bin length in samples.
pub const DEFAULT_BIN_LEN: usize = 128;
/// Default overlap fraction between depth bins.
pub const DEFAULT_OVERLAP: f64 = 0.5;
/// Default FFT length per bin.
pub const DEFAULT_NFFT: usize = 256;
/// Default Wiener SNR parameter (20 dB).
pub const DEFAULT_SNR: f64 = 100.0;

/// Valid-band threshold relative to each spectrum's per-bin peak (-20 dB).
const BAND_THRESHOLD: f64 = 0.1;
/// Division guard relative to the per-bin peak of the denominator spectrum.
const FLOOR_REL: f64 = 1e-12;

/// One axial analysis window: samples `start .. end` of every A-line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthBin {
    pub start: usize,
    pub end: usize,
}

impl DepthBin {
    pub fn center(&self) -> usize {
        (self.start + self.end) / 2
    }
}

/// Per-depth-bin averaged magnitude spectra of a stack of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSet {
    /// Sampling rate of the analyzed frames, MHz.
    pub fs: f64,
    pub bin_len: usize,
    pub hop: usize,
    pub nfft: usize,
    pub bins: Vec<DepthBin>,
    /// One-sided frequency grid, MHz.
    pub freqs: Vec<f64>,
    /// One averaged magnitude row per depth bin.
    pub mag: Vec<Vec<f64>>,
    /// Number of (line x frame) segments averaged into each row.
    pub n_avg: usize,
}

/// Estimated spectral gain between two machines, per depth bin and frequency.
///
/// `gamma_raw` is the direct spectrum ratio; `gamma_wiener` is its
/// SNR-regularized form and is what `apply_*` uses. The special value built
/// by [`TransferFunction::identity`] passes signals through untouched and is
/// accepted at any sampling rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    /// Pass-through marker; all other fields are empty when set.
    pub identity: bool,
    /// Sampling rate the filter operates at, MHz.
    pub fs: f64,
    pub bin_len: usize,
    pub hop: usize,
    pub nfft: usize,
    pub bins: Vec<DepthBin>,
    /// One-sided frequency grid, MHz.
    pub freqs: Vec<f64>,
    /// Direct spectrum ratio per bin.
    pub gamma_raw: Vec<Vec<f64>>,
    /// Regularized gain per bin; populated by [`wiener`].
    pub gamma_wiener: Option<Vec<Vec<f64>>>,
    /// True where both source spectra were within -20 dB of their bin peaks.
    pub band_mask: Vec<Vec<bool>>,
    /// SNR used for regularization, if applied.
    pub snr: Option<f64>,
}

impl TransferFunction {
    /// A transfer function that leaves every signal unchanged.
    pub fn identity() -> Self {
        TransferFunction {
            identity: true,
            fs: 0.0,
            bin_len: 0,
            hop: 0,
            nfft: 0,
            bins: Vec::new(),
            freqs: Vec::new(),
            gamma_raw: Vec::new(),
            gamma_wiener: None,
            band_mask: Vec::new(),
            snr: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Serialize as a versioned plain-text (JSON) table.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TfFile {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            tf: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::format(path, format!("serialize failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TfFile = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("parse failed: {e}")))?;
        if file.format != FORMAT_TAG {
            return Err(Error::format(path, format!("unknown format '{}'", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", file.version)));
        }
        Ok(file.tf)
    }
}

const FORMAT_TAG: &str = "ustf";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TfFile {
    format: String,
    version: u32,
    tf: TransferFunction,
}

/// Average the magnitude spectrum of every (line, frame) segment per depth bin.
///
/// Bins start at axial sample 0 and advance by `bin_len * (1 - overlap)`;
/// only full-length bins are emitted. Deterministic.
pub fn estimate_spectra(
    frames: &[RFFrame],
    bin_len: usize,
    overlap: f64,
    nfft: usize,
) -> Result<SpectrumSet> {
    let Some(first) = frames.first() else {
        return Err(Error::argument("spectrum estimation needs at least one frame"));
    };
    for f in frames {
        if f.fs != first.fs {
            return Err(Error::argument(format!(
                "mixed sampling rates: {} vs {} MHz",
                f.fs, first.fs
            )));
        }
        if f.n_axial() != first.n_axial() || f.n_lateral() != first.n_lateral() {
            return Err(Error::argument("mixed frame shapes in spectrum estimation"));
        }
    }
    if bin_len == 0 || bin_len > first.n_axial() {
        return Err(Error::argument(format!(
            "bin_len {} exceeds axial length {}",
            bin_len,
            first.n_axial()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::argument(format!("overlap {overlap} outside [0, 1)")));
    }
    if nfft < bin_len {
        return Err(Error::argument(format!("nfft {nfft} smaller than bin_len {bin_len}")));
    }
    let hop = ((bin_len as f64 * (1.0 - overlap)).round() as usize).max(1);

    let bins: Vec<DepthBin> = (0..)
        .map(|i| i * hop)
        .take_while(|s| s + bin_len <= first.n_axial())
        .map(|s| DepthBin { start: s, end: s + bin_len })
        .collect();
    let half = nfft / 2;
    let window = hann(bin_len);
    let n_avg = frames.len() * first.n_lateral();

    let mut mag = vec![vec![0.0f64; half + 1]; bins.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for frame in frames {
        for l in 0..frame.n_lateral() {
            let line = frame.line(l);
            for (b, bin) in bins.iter().enumerate() {
                for v in buf.iter_mut() {
                    *v = Complex::new(0.0, 0.0);
                }
                for i in 0..bin_len {
                    buf[i].re = line[bin.start + i] as f64 * window[i];
                }
                fft_forward(&mut buf);
                for k in 0..=half {
                    mag[b][k] += buf[k].norm();
                }
            }
        }
    }
    for row in mag.iter_mut() {
        for v in row.iter_mut() {
            *v /= n_avg as f64;
        }
    }

    Ok(SpectrumSet {
        fs: first.fs,
        bin_len,
        hop,
        nfft,
        bins,
        freqs: (0..=half).map(|k| k as f64 * first.fs / nfft as f64).collect(),
        mag,
        n_avg,
    })
}

/// Ratio of two machines' spectra: `victim.mag / perp.mag` per bin and
/// frequency, guarded by a floor of 1e-12 x the per-bin peak of the
/// denominator. The band mask marks frequencies where both spectra sit within
/// -20 dB of their own per-bin peaks.
pub fn compute_gamma(victim: &SpectrumSet, perp: &SpectrumSet) -> Result<TransferFunction> {
    if victim.bins != perp.bins {
        return Err(Error::argument(format!(
            "depth bins differ: {} victim vs {} perpetrator",
            victim.bins.len(),
            perp.bins.len()
        )));
    }
    // Reconcile frequency grids: map the finer one onto the coarser by linear
    // interpolation. The standard pipeline resamples frames before estimation,
    // so this path only triggers for deliberately mismatched analyses.
    let same_grid = victim.freqs.len() == perp.freqs.len()
        && victim
            .freqs
            .iter()
            .zip(perp.freqs.iter())
            .all(|(a, b)| (a - b).abs() < 1e-9);
    let (freqs, fs, victim_mag, perp_mag) = if same_grid {
        (victim.freqs.clone(), victim.fs, victim.mag.clone(), perp.mag.clone())
    } else {
        let victim_df = victim.fs / victim.nfft as f64;
        let perp_df = perp.fs / perp.nfft as f64;
        let (target, source, target_is_victim) = if victim_df >= perp_df {
            (victim, perp, true)
        } else {
            (perp, victim, false)
        };
        log::info!(
            "frequency grids differ (df {:.4} vs {:.4} MHz); interpolating the finer onto the coarser",
            victim_df,
            perp_df
        );
        let mapped: Vec<Vec<f64>> = source
            .mag
            .iter()
            .map(|row| interp_row(&source.freqs, row, &target.freqs))
            .collect();
        if target_is_victim {
            (target.freqs.clone(), target.fs, target.mag.clone(), mapped)
        } else {
            (target.freqs.clone(), target.fs, mapped, target.mag.clone())
        }
    };

    let n_bins = victim.bins.len();
    let mut gamma_raw = vec![vec![0.0f64; freqs.len()]; n_bins];
    let mut band_mask = vec![vec![false; freqs.len()]; n_bins];
    for b in 0..n_bins {
        let v_peak = victim_mag[b].iter().cloned().fold(0.0f64, f64::max);
        let p_peak = perp_mag[b].iter().cloned().fold(0.0f64, f64::max);
        let floor = FLOOR_REL * p_peak;
        for k in 0..freqs.len() {
            let denom = perp_mag[b][k].max(floor);
            gamma_raw[b][k] = if denom > 0.0 { victim_mag[b][k] / denom } else { 0.0 };
            band_mask[b][k] = v_peak > 0.0
                && p_peak > 0.0
                && victim_mag[b][k] >= BAND_THRESHOLD * v_peak
                && perp_mag[b][k] >= BAND_THRESHOLD * p_peak;
        }
    }

    Ok(TransferFunction {
        identity: false,
        fs,
        bin_len: victim.bin_len,
        hop: victim.hop,
        nfft: victim.nfft,
        bins: victim.bins.clone(),
        freqs,
        gamma_raw,
        gamma_wiener: None,
        band_mask,
        snr: None,
    })
}

fn interp_row(src_x: &[f64], src_y: &[f64], dst_x: &[f64]) -> Vec<f64> {
    dst_x
        .iter()
        .map(|&x| {
            if x <= src_x[0] {
                return src_y[0];
            }
            if x >= src_x[src_x.len() - 1] {
                return src_y[src_y.len() - 1];
            }
            let j = src_x.partition_point(|&v| v < x).max(1);
            let (x0, x1) = (src_x[j - 1], src_x[j]);
            let t = (x - x0) / (x1 - x0);
            src_y[j - 1] * (1.0 - t) + src_y[j] * t
        })
        .collect()
}

/// Regularize the raw ratio: `gamma_wiener = snr * g / (snr + g^2)`, the
/// SNR-weighted inverse of `1/g`, zeroed outside the band mask. Finite for
/// every input including `g = 0`.
pub fn wiener(tf: &TransferFunction, snr: f64) -> Result<TransferFunction> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::argument(format!("wiener snr must be positive, got {snr}")));
    }
    if tf.is_identity() {
        return Ok(tf.clone());
    }
    let mut out = tf.clone();
    let mut gw = Vec::with_capacity(tf.gamma_raw.len());
    for (row, mask) in tf.gamma_raw.iter().zip(tf.band_mask.iter()) {
        gw.push(
            row.iter()
                .zip(mask.iter())
                .map(|(&g, &m)| {
                    if !m {
                        return 0.0;
                    }
                    let w = snr * g / (snr + g * g);
                    if w.is_finite() {
                        w
                    } else {
                        0.0
                    }
                })
                .collect::<Vec<f64>>(),
        );
    }
    out.gamma_wiener = Some(gw);
    out.snr = Some(snr);
    Ok(out)
}

/// Filter one axial signal with the depth-binned zero-phase gain.
///
/// `axial_offset` is the signal's first sample position in frame coordinates
/// and selects which depth bin's gain each analysis segment uses (nearest bin
/// center). The signal is reflection-padded by one hop on each side so the
/// windowed overlap-add reconstructs the interior exactly.
pub fn apply_signal(tf: &TransferFunction, x: &[f32], axial_offset: usize) -> Result<Vec<f32>> {
    if tf.is_identity() {
        return Ok(x.to_vec());
    }
    let gw = tf
        .gamma_wiener
        .as_ref()
        .ok_or_else(|| Error::argument("transfer function not regularized; run wiener first"))?;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let (bin_len, hop, nfft) = (tf.bin_len, tf.hop, tf.nfft);
    let len = x.len();
    let padded_len = (len + 2 * hop).div_ceil(hop) * hop;
    let mut padded = vec![0.0f64; padded_len];
    for (p, v) in padded.iter_mut().enumerate() {
        *v = x[reflect_index(p as isize - hop as isize, len)] as f64;
    }

    let window = hann(bin_len);
    let half = nfft / 2;
    let mut acc = vec![0.0f64; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut start = 0usize;
    while start + bin_len <= padded_len {
        for v in buf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for i in 0..bin_len {
            buf[i].re = padded[start + i] * window[i];
        }
        fft_forward(&mut buf);

        let abs_center = start as isize - hop as isize + axial_offset as isize + bin_len as isize / 2;
        let row = nearest_bin(&tf.bins, abs_center);
        for k in 0..=half {
            let g = gw[row][k];
            buf[k] *= g;
            if k != 0 && k != half {
                buf[nfft - k] *= g;
            }
        }
        fft_inverse(&mut buf);

        // The kernel is zero-phase: indices past nfft - hop hold negative lags.
        for (n, v) in buf.iter().enumerate() {
            let lag = if n < nfft - hop { n as isize } else { n as isize - nfft as isize };
            let pos = start as isize + lag;
            if (0..padded_len as isize).contains(&pos) {
                acc[pos as usize] += v.re;
            }
        }
        start += hop;
    }

    Ok((0..len).map(|i| acc[hop + i] as f32).collect())
}

/// Filter every A-line of a frame. The frame's sampling rate must match the
/// transfer function's (resample first otherwise).
pub fn apply_frame(tf: &TransferFunction, frame: &RFFrame) -> Result<RFFrame> {
    if tf.is_identity() {
        return Ok(frame.clone());
    }
    if (frame.fs - tf.fs).abs() > 1e-9 * tf.fs.max(frame.fs) {
        return Err(Error::argument(format!(
            "frame sampled at {} MHz but transfer function expects {} MHz",
            frame.fs, tf.fs
        )));
    }
    let mut out = frame.clone();
    for l in 0..frame.n_lateral() {
        let filtered = apply_signal(tf, frame.line(l), 0)?;
        out.line_mut(l).copy_from_slice(&filtered);
    }
    Ok(out)
}

/// Ping-pong reflection of index `q` into `[0, len)`; valid for any overhang.
fn reflect_index(q: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut r = q % period;
    if r < 0 {
        r += period;
    }
    if r >= len as isize {
        r = period - r;
    }
    r as usize
}

fn nearest_bin(bins: &[DepthBin], abs_center: isize) -> usize {
    let mut best = 0usize;
    let mut best_d = isize::MAX;
    for (i, b) in bins.iter().enumerate() {
        let d = (b.center() as isize - abs_center).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfsim::{synthesize_frame, MachineSpec, PhantomSpec, Scale};
    use crate::seeds::SeedPath;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn tone_frame(freq: f64, fs: f64, len: usize, lines: usize) -> RFFrame {
        let mut samples = Vec::with_capacity(len * lines);
        for _ in 0..lines {
            for n in 0..len {
                samples.push((2.0 * std::f64::consts::PI * freq * n as f64 / fs).sin() as f32);
            }
        }
        RFFrame::new(samples, len, lines, fs, 1.0)
    }

    fn noise_frame(seed: u64, len: usize, lines: usize, fs: f64) -> RFFrame {
        let mut rng = SeedPath::new(seed).with_str("cal-test-noise").rng();
        let samples: Vec<f32> = (0..len * lines)
            .map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                g as f32
            })
            .collect();
        RFFrame::new(samples, len, lines, fs, 1.0)
    }

    /// A transfer function with constant gain over every bin of a compact
    /// victim frame and a full band mask.
    fn constant_tf(gain: f64, n_axial: usize, fs: f64) -> TransferFunction {
        let bin_len = DEFAULT_BIN_LEN;
        let hop = bin_len / 2;
        let nfft = DEFAULT_NFFT;
        let bins: Vec<DepthBin> = (0..)
            .map(|i| i * hop)
            .take_while(|s| s + bin_len <= n_axial)
            .map(|s| DepthBin { start: s, end: s + bin_len })
            .collect();
        let n_freq = nfft / 2 + 1;
        TransferFunction {
            identity: false,
            fs,
            bin_len,
            hop,
            nfft,
            freqs: (0..n_freq).map(|k| k as f64 * fs / nfft as f64).collect(),
            gamma_raw: vec![vec![gain; n_freq]; bins.len()],
            gamma_wiener: Some(vec![vec![gain; n_freq]; bins.len()]),
            band_mask: vec![vec![true; n_freq]; bins.len()],
            snr: Some(DEFAULT_SNR),
            bins,
        }
    }

    #[test]
    fn tone_peaks_in_every_bin() {
        // 10 MHz at fs 40 with nfft 256 lands exactly on bin 64.
        let frame = tone_frame(10.0, 40.0, 512, 1);
        let set = estimate_spectra(&[frame], 128, 0.5, 256).unwrap();
        assert_eq!(set.bins.len(), 7);
        for row in &set.mag {
            let peak = crate::dsp::argmax(row);
            assert_eq!(peak, 64);
        }
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        // 16 frames x 128 lines averaged per bin (2048 segments); interior
        // bins flat within 5% of their mean (DC/Nyquist excluded: the
        // magnitude of a real Gaussian differs from a complex one).
        let frames: Vec<RFFrame> = (0..16).map(|i| noise_frame(i, 128, 128, 40.0)).collect();
        let set = estimate_spectra(&frames, 128, 0.5, 256).unwrap();
        assert_eq!(set.bins.len(), 1);
        assert_eq!(set.n_avg, 16 * 128);
        let row = &set.mag[0];
        let interior = &row[1..row.len() - 1];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        for (k, &v) in interior.iter().enumerate() {
            assert!(
                (v / mean - 1.0).abs() < 0.05,
                "bin {}: {v} vs mean {mean}",
                k + 1
            );
        }
    }

    #[test]
    fn averaging_ten_frames_shrinks_standard_error_sqrt_ten() {
        // Fixed signal + per-frame noise: the estimate from 10 frames varies
        // sqrt(10) less across noise draws than the estimate from 1 frame.
        let fs = 40.0;
        let base = tone_frame(8.0, fs, 256, 8);
        let sigma = 0.3f32;
        let replicas = 24;
        let noisy = |replica: u64, j: u64| {
            let mut rng = SeedPath::new(9)
                .with_str("replica")
                .with(replica)
                .with(j)
                .rng();
            let samples: Vec<f32> = base
                .samples()
                .iter()
                .map(|&v| {
                    let g: f64 = rng.sample(StandardNormal);
                    v + sigma * g as f32
                })
                .collect();
            RFFrame::new(samples, 256, 8, fs, 1.0)
        };
        let mut one = Vec::new();
        let mut ten = Vec::new();
        for r in 0..replicas {
            let frames: Vec<RFFrame> = (0..10).map(|j| noisy(r, j)).collect();
            one.push(estimate_spectra(&frames[..1], 128, 0.5, 256).unwrap());
            ten.push(estimate_spectra(&frames, 128, 0.5, 256).unwrap());
        }
        let std_per_bin = |sets: &[SpectrumSet], b: usize, k: usize| {
            let vals: Vec<f64> = sets.iter().map(|s| s.mag[b][k]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let mut ratios = Vec::new();
        for b in 0..one[0].bins.len() {
            for k in 1..one[0].freqs.len() - 1 {
                let s1 = std_per_bin(&one, b, k);
                let s10 = std_per_bin(&ten, b, k);
                if s10 > 0.0 {
                    ratios.push(s1 / s10);
                }
            }
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ratios[ratios.len() / 2];
        assert!(
            (2.6..4.0).contains(&median),
            "std shrink ratio {median}, expected near sqrt(10)"
        );
    }

    #[test]
    fn identical_spectra_give_unit_gamma() {
        let frames: Vec<RFFrame> = (0..2).map(|i| noise_frame(i, 256, 16, 40.0)).collect();
        let set = estimate_spectra(&frames, 128, 0.5, 256).unwrap();
        let tf = compute_gamma(&set, &set).unwrap();
        for (row, mask) in tf.gamma_raw.iter().zip(tf.band_mask.iter()) {
            for (g, m) in row.iter().zip(mask.iter()) {
                if *m {
                    assert_relative_eq!(*g, 1.0, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn doubled_spectrum_gives_gamma_two() {
        let frames = [noise_frame(3, 256, 16, 40.0)];
        let perp = estimate_spectra(&frames, 128, 0.5, 256).unwrap();
        let mut victim = perp.clone();
        for row in victim.mag.iter_mut() {
            for v in row.iter_mut() {
                *v *= 2.0;
            }
        }
        let tf = compute_gamma(&victim, &perp).unwrap();
        for (row, mask) in tf.gamma_raw.iter().zip(tf.band_mask.iter()) {
            for (g, m) in row.iter().zip(mask.iter()) {
                if *m {
                    assert_relative_eq!(*g, 2.0, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn mismatched_bins_are_rejected() {
        let a = estimate_spectra(&[noise_frame(1, 256, 4, 40.0)], 128, 0.5, 256).unwrap();
        let b = estimate_spectra(&[noise_frame(1, 384, 4, 40.0)], 128, 0.5, 256).unwrap();
        assert!(matches!(compute_gamma(&a, &b), Err(Error::Argument(_))));
    }

    #[test]
    fn mixed_rates_and_bad_bins_are_rejected() {
        let a = noise_frame(1, 256, 4, 40.0);
        let b = noise_frame(2, 256, 4, 50.0);
        assert!(estimate_spectra(&[a.clone(), b], 128, 0.5, 256).is_err());
        assert!(estimate_spectra(&[a.clone()], 512, 0.5, 1024).is_err());
        assert!(estimate_spectra(&[a.clone()], 128, 1.0, 256).is_err());
        assert!(estimate_spectra(&[a], 128, 0.5, 64).is_err());
        assert!(estimate_spectra(&[], 128, 0.5, 256).is_err());
    }

    #[test]
    fn wiener_hand_computed_value() {
        let mut tf = constant_tf(2.0, 256, 40.0);
        tf.gamma_wiener = None;
        let out = wiener(&tf, 1.0).unwrap();
        let gw = out.gamma_wiener.as_ref().unwrap();
        // 1/2 / (1/4 + 1) = 0.4
        assert!((gw[0][10] - 0.4).abs() < 1e-12);
        assert_eq!(out.snr, Some(1.0));
    }

    #[test]
    fn wiener_limits() {
        let mut unit = constant_tf(1.0, 256, 40.0);
        unit.gamma_wiener = None;
        let out = wiener(&unit, 1e12).unwrap();
        assert!((out.gamma_wiener.as_ref().unwrap()[0][5] - 1.0).abs() < 1e-9);

        let mut zero = constant_tf(0.0, 256, 40.0);
        zero.gamma_raw = vec![vec![0.0; zero.freqs.len()]; zero.bins.len()];
        zero.gamma_wiener = None;
        let out = wiener(&zero, 100.0).unwrap();
        assert_eq!(out.gamma_wiener.as_ref().unwrap()[0][5], 0.0);

        assert!(wiener(&unit, 0.0).is_err());
        assert!(wiener(&unit, -1.0).is_err());
        assert!(wiener(&unit, f64::NAN).is_err());
    }

    #[test]
    fn wiener_is_monotone_below_sqrt_snr() {
        let snr: f64 = 100.0;
        let mut prev = 0.0;
        let mut g = 0.0;
        while g <= snr.sqrt() {
            let w = snr * g / (snr + g * g);
            assert!(w >= prev, "not monotone at gamma {g}");
            prev = w;
            g += 0.01;
        }
    }

    #[test]
    fn unit_filter_reproduces_input() {
        let mut machine = MachineSpec::victim(Scale::Compact);
        machine.noise_floor = 0.0;
        let frame = synthesize_frame(&PhantomSpec::phantom1(), &machine, 17).unwrap();
        let tf = constant_tf(1.0, frame.n_axial(), machine.fs);
        let out = apply_frame(&tf, &frame).unwrap();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (a, b) in out.samples().iter().zip(frame.samples().iter()) {
            num += (*a as f64 - *b as f64).powi(2);
            den += (*b as f64).powi(2);
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-6, "identity filter error {rel}");
    }

    #[test]
    fn doubling_filter_doubles_amplitude() {
        let frame = tone_frame(9.0, 40.0, 520, 4);
        let tf = constant_tf(2.0, 520, 40.0);
        let out = apply_frame(&tf, &frame).unwrap();
        for i in 10..510 {
            assert!(
                (out.at(i, 2) - 2.0 * frame.at(i, 2)).abs() < 1e-4,
                "sample {i}: {} vs 2x{}",
                out.at(i, 2),
                frame.at(i, 2)
            );
        }
    }

    #[test]
    fn empty_band_mask_zeroes_the_signal() {
        let frame = tone_frame(9.0, 40.0, 520, 2);
        let mut tf = constant_tf(1.0, 520, 40.0);
        tf.band_mask = vec![vec![false; tf.freqs.len()]; tf.bins.len()];
        tf.gamma_wiener = None;
        let tf = wiener(&tf, DEFAULT_SNR).unwrap();
        let out = apply_frame(&tf, &frame).unwrap();
        assert!(out.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn apply_is_linear() {
        let frame = tone_frame(7.0, 40.0, 520, 1);
        let mut scaled = frame.clone();
        for s in scaled.line_mut(0).iter_mut() {
            *s *= 3.5;
        }
        let mut tf = constant_tf(1.0, 520, 40.0);
        // A non-trivial gain profile.
        if let Some(gw) = tf.gamma_wiener.as_mut() {
            for (b, row) in gw.iter_mut().enumerate() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = 0.5 + 0.01 * (k % 7) as f64 + 0.1 * b as f64;
                }
            }
        }
        let a = apply_frame(&tf, &scaled).unwrap();
        let b = apply_frame(&tf, &frame).unwrap();
        for i in 0..520 {
            assert_relative_eq!(a.at(i, 0), 3.5 * b.at(i, 0), epsilon = 1e-4);
        }
    }

    #[test]
    fn identity_variant_passes_any_signal_through() {
        let tf = TransferFunction::identity();
        assert!(tf.is_identity());
        let frame = tone_frame(3.0, 50.0, 137, 3);
        let out = apply_frame(&tf, &frame).unwrap();
        assert_eq!(out.samples(), frame.samples());
        // Works on short patch columns too.
        let col = vec![1.0f32, -2.0, 3.0];
        assert_eq!(apply_signal(&tf, &col, 400).unwrap(), col);
    }

    #[test]
    fn fs_mismatch_is_an_argument_error() {
        let frame = tone_frame(5.0, 50.0, 520, 1);
        let tf = constant_tf(1.0, 520, 40.0);
        assert!(matches!(apply_frame(&tf, &frame), Err(Error::Argument(_))));
    }

    #[test]
    fn unregularized_apply_is_an_argument_error() {
        let frame = tone_frame(5.0, 40.0, 520, 1);
        let mut tf = constant_tf(1.0, 520, 40.0);
        tf.gamma_wiener = None;
        assert!(matches!(apply_frame(&tf, &frame), Err(Error::Argument(_))));
    }

    #[test]
    fn short_signal_reflection_padding_works() {
        // A 50-sample column (shorter than one bin) passes the unit filter.
        let tf = constant_tf(1.0, 520, 40.0);
        let x: Vec<f32> = (0..50)
            .map(|n| (2.0 * std::f64::consts::PI * 6.0 * n as f64 / 40.0).sin() as f32)
            .collect();
        let y = apply_signal(&tf, &x, 135).unwrap();
        assert_eq!(y.len(), 50);
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn serialization_round_trips() {
        let frames: Vec<RFFrame> = (0..2).map(|i| noise_frame(i + 40, 256, 8, 40.0)).collect();
        let set = estimate_spectra(&frames, 128, 0.5, 256).unwrap();
        let tf = wiener(&compute_gamma(&set, &set).unwrap(), 50.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma.ustf");
        tf.save(&path).unwrap();
        let back = TransferFunction::load(&path).unwrap();
        assert_eq!(back, tf);

        let ident = TransferFunction::identity();
        let path2 = dir.path().join("identity.ustf");
        ident.save(&path2).unwrap();
        assert!(TransferFunction::load(&path2).unwrap().is_identity());
    }

    #[test]
    fn malformed_tf_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ustf");
        std::fs::write(&path, "{\"format\": \"other\", \"version\": 1}").unwrap();
        assert!(matches!(
            TransferFunction::load(&path),
            Err(Error::Format { .. })
        ));
        std::fs::write(&path, "not json at all").unwrap();
        assert!(matches!(
            TransferFunction::load(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn reflect_index_ping_pongs() {
        // len 5: pattern 0 1 2 3 4 3 2 1 | 0 1 2 ...
        assert_eq!(reflect_index(0, 5), 0);
        assert_eq!(reflect_index(4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(8, 5), 0);
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-4, 5), 4);
        assert_eq!(reflect_index(-5, 5), 3);
        assert_eq!(reflect_index(7, 1), 0);
    }
}
