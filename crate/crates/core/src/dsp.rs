//! Small shared DSP helpers: FFT wrappers and windows.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::cell::RefCell;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward FFT (unnormalized, like scipy).
pub fn fft_forward(buf: &mut [Complex<f64>]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

/// In-place inverse FFT, normalized by 1/N.
pub fn fft_inverse(buf: &mut [Complex<f64>]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Periodic Hann window; at 50% overlap the shifted copies sum to one.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
        .collect()
}

/// Magnitude spectrum of a real signal, zero-padded to `nfft`,
/// one-sided (`nfft / 2 + 1` bins).
pub fn magnitude_spectrum(signal: &[f64], nfft: usize) -> Vec<f64> {
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for (b, &s) in buf.iter_mut().zip(signal.iter()) {
        b.re = s;
    }
    fft_forward(&mut buf);
    buf[..nfft / 2 + 1].iter().map(|c| c.norm()).collect()
}

/// Index of the largest element; ties resolve to the first.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
