//! Rational-rate resampling of RF frames (polyphase windowed-sinc FIR).

use super::RFFrame;
use crate::error::{Error, Result};

/// Half-width of the anti-aliasing filter in input samples.
const HALF_TAPS: usize = 12;
/// Kaiser window shape parameter (~ -100 dB sidelobes).
const KAISER_BETA: f64 = 10.0;

/// Resample every A-line of `frame` by the rational factor `up / down`.
///
/// The anti-aliasing lowpass is a Kaiser-windowed sinc designed at the
/// up-sampled rate with cutoff `0.5 / max(up, down)` cycles per sample, and
/// the filter's group delay is compensated so output sample `m` sits at input
/// position `m * down / up`. `up == down` reproduces the input exactly.
pub fn resample_rate(frame: &RFFrame, up: usize, down: usize) -> Result<RFFrame> {
    if up == 0 || down == 0 {
        return Err(Error::argument("resample factors must be positive"));
    }
    let h = design_lowpass(up, down);
    let delay = (h.len() - 1) / 2;
    let in_len = frame.n_axial();
    let out_len = (in_len * up + down - 1) / down;

    let mut samples = vec![0.0f32; out_len * frame.n_lateral()];
    let mut line_f64 = vec![0.0f64; in_len];
    for l in 0..frame.n_lateral() {
        for (d, &s) in line_f64.iter_mut().zip(frame.line(l).iter()) {
            *d = s as f64;
        }
        let dst = &mut samples[l * out_len..(l + 1) * out_len];
        for (m, out) in dst.iter_mut().enumerate() {
            // Output m taps the up-rate grid at k0 = m*down + delay.
            let k0 = m * down + delay;
            let n_hi = (k0 / up).min(in_len - 1);
            let n_lo = (k0.saturating_sub(h.len() - 1) + up - 1) / up;
            let mut acc = 0.0f64;
            for n in n_lo..=n_hi {
                acc += line_f64[n] * h[k0 - n * up];
            }
            *out = acc as f32;
        }
    }

    let mut out = RFFrame::new(
        samples,
        out_len,
        frame.n_lateral(),
        frame.fs * up as f64 / down as f64,
        frame.axial_extent,
    );
    out.machine_name = frame.machine_name.clone();
    out.phantom_name = frame.phantom_name.clone();
    out.seed = frame.seed;
    Ok(out)
}

/// Kaiser-windowed sinc lowpass at the up-sampled rate, gain `up` in the
/// passband so interpolation preserves signal amplitude.
fn design_lowpass(up: usize, down: usize) -> Vec<f64> {
    let stride = up.max(down);
    let n_taps = 2 * HALF_TAPS * stride + 1;
    let delay = (n_taps - 1) as f64 / 2.0;
    let cutoff = 0.5 / stride as f64;
    let denom = bessel_i0(KAISER_BETA);
    (0..n_taps)
        .map(|k| {
            let t = k as f64 - delay;
            let x = 2.0 * t / (n_taps - 1) as f64;
            let window = bessel_i0(KAISER_BETA * (1.0 - x * x).max(0.0).sqrt()) / denom;
            up as f64 * 2.0 * cutoff * sinc(2.0 * cutoff * t) * window
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Smallest integer pair `(up, down)` with `fs_to / fs_from = up / down`.
///
/// Rates are given in MHz and may carry fractional parts (e.g. 12.5); they
/// are scaled to integers (up to 6 decimal places) and reduced. Pairs whose
/// reduced factors exceed 1024 are rejected — such rates are not usefully
/// related by a small rational factor.
pub fn rate_factors(fs_from: f64, fs_to: f64) -> Result<(usize, usize)> {
    if !(fs_from.is_finite() && fs_from > 0.0 && fs_to.is_finite() && fs_to > 0.0) {
        return Err(Error::argument(format!(
            "sampling rates must be positive, got {fs_from} and {fs_to} MHz"
        )));
    }
    let mut scale = 1.0f64;
    for _ in 0..=6 {
        let a = fs_to * scale;
        let b = fs_from * scale;
        let near = |x: f64| (x - x.round()).abs() < 1e-9 * x.max(1.0);
        if near(a) && near(b) {
            let mut up = a.round() as u64;
            let mut down = b.round() as u64;
            let g = gcd(up, down);
            up /= g;
            down /= g;
            if up > 1024 || down > 1024 {
                break;
            }
            return Ok((up as usize, down as usize));
        }
        scale *= 10.0;
    }
    Err(Error::argument(format!(
        "sampling rates {fs_from} and {fs_to} MHz are not related by a small rational factor"
    )))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Resample a frame to the target rate; a no-op copy when already there.
pub fn resample_to(frame: &RFFrame, fs_to: f64) -> Result<RFFrame> {
    let (up, down) = rate_factors(frame.fs, fs_to)?;
    if up == down {
        return Ok(frame.clone());
    }
    resample_rate(frame, up, down)
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..=30 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}
