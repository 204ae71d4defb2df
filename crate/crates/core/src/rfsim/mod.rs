//! Synthetic RF data generation for a pair of mismatched ultrasound machines.
//!
//! Each A-line is built block-wise in the frequency domain: a seeded scatterer
//! impulse train (the tissue factor) is shaped by the machine's Gaussian pulse
//! spectrum, depth attenuation and focal weighting (the system factor), then
//! blocks are merged by overlap-add. The factorization is exact by
//! construction, which is what makes the calibration stage testable.

mod resample;
mod synth;
pub mod usrf;

pub use resample::{rate_factors, resample_rate, resample_to};
pub use synth::{acquire_calibration, synthesize_frame, CalibrationMode};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Axial synthesis block length in samples (50% overlap, Hann window).
pub const SYNTH_BLOCK: usize = 128;
/// Hop between synthesis blocks.
pub const SYNTH_HOP: usize = SYNTH_BLOCK / 2;
/// FFT length per synthesis block; the headroom carries convolution tails.
pub const SYNTH_NFFT: usize = 256;
/// Width of the scatterer strip contributing to one A-line, mm.
pub const LINE_STRIP_MM: f64 = 0.3;
/// Width (sigma) of the Gaussian focal weighting, cm.
pub const FOCAL_SIGMA_CM: f64 = 1.0;

/// Class identity seeded into a phantom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedClass {
    Class(u8),
    Calibration,
}

impl SeedClass {
    /// File-format label: class id, or -1 for calibration/unlabeled.
    pub fn label(self) -> i8 {
        match self {
            SeedClass::Class(c) => c as i8,
            SeedClass::Calibration => -1,
        }
    }
}

/// Acoustic description of an imaging phantom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub name: String,
    /// Attenuation coefficient slope, dB/(cm·MHz).
    pub acs: f64,
    /// Speed of sound, m/s.
    pub sos: f64,
    /// Scatterers per mm².
    pub scatterer_density: f64,
    /// Spectral slope of the tissue factor (models bead-size-dependent backscatter).
    pub backscatter_exponent: f64,
    /// Relative spread of scatterer amplitudes.
    pub amplitude_sigma: f64,
    pub seed_class: SeedClass,
}

impl PhantomSpec {
    /// Liver-mimicking classification phantom (class 0).
    pub fn phantom1() -> Self {
        PhantomSpec {
            name: "phantom1".into(),
            acs: 0.4,
            sos: 1540.0,
            scatterer_density: 30.0,
            backscatter_exponent: 0.5,
            amplitude_sigma: 0.2,
            seed_class: SeedClass::Class(0),
        }
    }

    /// Low-attenuation classification phantom (class 1).
    pub fn phantom2() -> Self {
        PhantomSpec {
            name: "phantom2".into(),
            acs: 0.1,
            sos: 1539.0,
            scatterer_density: 30.0,
            backscatter_exponent: 1.5,
            amplitude_sigma: 0.2,
            seed_class: SeedClass::Class(1),
        }
    }

    /// Reference phantom used to estimate the machine-to-machine transfer function.
    pub fn calibration() -> Self {
        PhantomSpec {
            name: "calibration".into(),
            acs: 0.74,
            sos: 1545.0,
            scatterer_density: 30.0,
            backscatter_exponent: 1.0,
            amplitude_sigma: 0.2,
            seed_class: SeedClass::Calibration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.acs < 0.0 {
            return Err(Error::config(format!(
                "phantom {}: acs must be >= 0, got {}",
                self.name, self.acs
            )));
        }
        if self.sos <= 0.0 {
            return Err(Error::config(format!(
                "phantom {}: sos must be > 0, got {}",
                self.name, self.sos
            )));
        }
        if self.scatterer_density <= 0.0 {
            return Err(Error::config(format!(
                "phantom {}: scatterer_density must be > 0, got {}",
                self.name, self.scatterer_density
            )));
        }
        Ok(())
    }
}

/// Frame geometry scale: the paper-sized frame or a cheaper stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// 4 cm depth, 256 lines (2080 x 256 at 40 MHz).
    Full,
    /// 2 cm depth, 128 lines (1040 x 128 at 40 MHz).
    Desk,
    /// 1 cm depth, 64 lines (520 x 64 at 40 MHz); sized for a single core.
    Compact,
}

impl Scale {
    fn depth_cm(self) -> f64 {
        match self {
            Scale::Full => 4.0,
            Scale::Desk => 2.0,
            Scale::Compact => 1.0,
        }
    }

    fn n_lines(self) -> usize {
        match self {
            Scale::Full => 256,
            Scale::Desk => 128,
            Scale::Compact => 64,
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            "compact" => Ok(Scale::Compact),
            other => Err(Error::argument(format!("unknown scale '{other}'"))),
        }
    }
}

/// Acquisition description of an ultrasound machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    /// Transmit pulse centre frequency, MHz.
    pub center_freq: f64,
    /// Fractional bandwidth of the Gaussian pulse envelope (FWHM / centre).
    pub frac_bandwidth: f64,
    /// Sampling rate, MHz.
    pub fs: f64,
    /// Single axial focus, cm.
    pub focal_depth: f64,
    /// Additive noise sigma relative to the clean-frame RMS.
    pub noise_floor: f64,
    /// Lateral line count.
    pub n_lines: usize,
    /// Recorded axial depth, cm.
    pub axial_depth: f64,
}

impl MachineSpec {
    /// The machine hosting the protected model: 9 MHz pulse, 40 MHz sampling.
    ///
    /// Fractional bandwidths are chosen so the two machines' pulse bands
    /// overlap the way real broadband transducers do; with much narrower
    /// pulses the 9 MHz and 5 MHz bands barely intersect and no calibration
    /// can carry the class cues across.
    pub fn victim(scale: Scale) -> Self {
        MachineSpec {
            name: "victim".into(),
            center_freq: 9.0,
            frac_bandwidth: 0.8,
            fs: 40.0,
            focal_depth: 2.0,
            noise_floor: 0.03,
            n_lines: scale.n_lines(),
            axial_depth: scale.depth_cm(),
        }
    }

    /// The machine the functionality is copied onto: 5 MHz pulse, 50 MHz sampling.
    pub fn perpetrator(scale: Scale) -> Self {
        MachineSpec {
            name: "perpetrator".into(),
            center_freq: 5.0,
            frac_bandwidth: 1.0,
            fs: 50.0,
            focal_depth: 2.0,
            noise_floor: 0.03,
            n_lines: scale.n_lines(),
            axial_depth: scale.depth_cm(),
        }
    }

    /// Perpetrator machine fitted with a different transducer
    /// (shifted centre frequency and bandwidth).
    pub fn perpetrator_alt(scale: Scale) -> Self {
        MachineSpec {
            name: "perpetrator-alt".into(),
            center_freq: 7.0,
            frac_bandwidth: 0.5,
            fs: 50.0,
            focal_depth: 2.0,
            noise_floor: 0.03,
            n_lines: scale.n_lines(),
            axial_depth: scale.depth_cm(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_freq > 0.0 && self.center_freq < self.fs / 2.0) {
            return Err(Error::config(format!(
                "machine {}: center_freq {} MHz violates Nyquist for fs {} MHz",
                self.name, self.center_freq, self.fs
            )));
        }
        if self.n_lines == 0 || self.axial_depth <= 0.0 {
            return Err(Error::config(format!(
                "machine {}: frame geometry must be non-empty",
                self.name
            )));
        }
        Ok(())
    }

    /// Gaussian pulse magnitude spectrum at frequency `f` MHz (peak 1 at centre).
    pub fn pulse_spectrum(&self, f: f64) -> f64 {
        let sigma = self.pulse_sigma();
        let d = f - self.center_freq;
        (-d * d / (2.0 * sigma * sigma)).exp()
    }

    /// Pulse spectral sigma in MHz (fractional bandwidth is FWHM / centre).
    pub fn pulse_sigma(&self) -> f64 {
        let fwhm = self.frac_bandwidth * self.center_freq;
        fwhm / (2.0 * (2.0f64.ln() * 2.0).sqrt())
    }

    /// Gaussian focal weighting at depth `z` cm.
    pub fn focal_weight(&self, z: f64) -> f64 {
        let d = z - self.focal_depth;
        (-d * d / (2.0 * FOCAL_SIGMA_CM * FOCAL_SIGMA_CM)).exp()
    }

    /// Number of axial samples recorded for a medium with speed of sound `sos`.
    /// Two-way travel time, padded up to a multiple of 16 samples.
    pub fn axial_samples(&self, sos: f64) -> usize {
        let exact = 2.0 * (self.axial_depth / 100.0) / sos * self.fs * 1e6;
        let n = exact.ceil() as usize;
        n.div_ceil(16) * 16
    }
}

/// Two-way attenuation factor for slope `acs` dB/(cm·MHz) at `f` MHz, depth `z` cm.
pub fn attenuation(acs: f64, f: f64, z: f64) -> f64 {
    10f64.powf(-acs * f * (2.0 * z) / 20.0)
}

/// The machine-and-depth dependent spectral factor of a synthesized frame:
/// pulse spectrum, two-way attenuation and focal weighting combined.
/// The remaining factor is the phantom's scatterer spectrum shaped by
/// `f^backscatter_exponent`.
pub fn system_response(machine: &MachineSpec, phantom: &PhantomSpec, f: f64, z: f64) -> f64 {
    machine.pulse_spectrum(f) * attenuation(phantom.acs, f, z) * machine.focal_weight(z)
}

/// One acquired frame of RF samples, A-lines stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct RFFrame {
    samples: Vec<f32>,
    n_axial: usize,
    n_lateral: usize,
    /// Sampling rate, MHz.
    pub fs: f64,
    /// Recorded axial depth, cm.
    pub axial_extent: f64,
    pub machine_name: String,
    pub phantom_name: String,
    pub seed: u64,
}

impl RFFrame {
    pub fn new(
        samples: Vec<f32>,
        n_axial: usize,
        n_lateral: usize,
        fs: f64,
        axial_extent: f64,
    ) -> Self {
        assert_eq!(samples.len(), n_axial * n_lateral, "sample grid mismatch");
        RFFrame {
            samples,
            n_axial,
            n_lateral,
            fs,
            axial_extent,
            machine_name: String::new(),
            phantom_name: String::new(),
            seed: 0,
        }
    }

    pub fn zeros(n_axial: usize, n_lateral: usize, fs: f64, axial_extent: f64) -> Self {
        Self::new(vec![0.0; n_axial * n_lateral], n_axial, n_lateral, fs, axial_extent)
    }

    pub fn n_axial(&self) -> usize {
        self.n_axial
    }

    pub fn n_lateral(&self) -> usize {
        self.n_lateral
    }

    /// A-line `l` as a contiguous slice of axial samples.
    pub fn line(&self, l: usize) -> &[f32] {
        &self.samples[l * self.n_axial..(l + 1) * self.n_axial]
    }

    pub fn line_mut(&mut self, l: usize) -> &mut [f32] {
        &mut self.samples[l * self.n_axial..(l + 1) * self.n_axial]
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn at(&self, axial: usize, lateral: usize) -> f32 {
        self.samples[lateral * self.n_axial + axial]
    }

    /// Depth in cm of axial sample `i` for the recorded medium's `sos`.
    pub fn depth_cm(&self, i: usize, sos: f64) -> f64 {
        i as f64 * sos / (2e4 * self.fs)
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| s as f64 * s as f64).sum();
        (sum / self.samples.len() as f64).sqrt()
    }
}
