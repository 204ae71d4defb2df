//! Patch extraction, standardization, and the trainable classifier.
//!
//! Frames are cut into a fixed grid of axial-by-lateral patches; each patch
//! is z-scored independently and scored by a small convolutional network
//! ([`net::ClassifierParams`]). Victim and perpetrator use the same code with
//! different channel widths, honoring the premise that the two machines run
//! different architectures.

pub(crate) mod io;
mod net;

pub use net::{
    per_sample_losses, train, train_one_epoch, AdamState, Architecture, ClassifierParams,
    TrainConfig,
};

use serde::{Deserialize, Serialize};

use crate::calibration::{apply_signal, TransferFunction};
use crate::error::{Error, Result};
use crate::rfsim::usrf::RFDataset;
use crate::rfsim::RFFrame;

/// Epsilon guard in the z-score denominator.
const ZSCORE_EPS: f64 = 1e-8;

/// Placement of a fixed patch lattice inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    /// Axial samples skipped before the first patch row.
    pub axial_skip: usize,
    pub axial_stride: usize,
    pub lateral_stride: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub n_axial: usize,
    pub n_lateral: usize,
}

impl PatchGrid {
    /// Grid for full-size frames (2080 x 256): 81 patches of 200 x 26.
    pub fn full() -> Self {
        PatchGrid {
            axial_skip: 540,
            axial_stride: 100,
            lateral_stride: 26,
            patch_h: 200,
            patch_w: 26,
            n_axial: 9,
            n_lateral: 9,
        }
    }

    /// Proportionally scaled grid for desk frames (1040 x 128).
    pub fn desk() -> Self {
        PatchGrid {
            axial_skip: 270,
            axial_stride: 50,
            lateral_stride: 13,
            patch_h: 100,
            patch_w: 13,
            n_axial: 9,
            n_lateral: 9,
        }
    }

    /// Grid for compact frames (520 x 64), sized for single-core test runs.
    pub fn compact() -> Self {
        PatchGrid {
            axial_skip: 135,
            axial_stride: 25,
            lateral_stride: 6,
            patch_h: 50,
            patch_w: 13,
            n_axial: 9,
            n_lateral: 9,
        }
    }

    /// The standard grid for a frame of the given size, keyed by lateral
    /// width (the distinctive dimension across frame sizes). Resampled frames
    /// keep their lateral count but may gain or lose axial samples, so the
    /// axial dimension is only checked for fit, not matched exactly.
    pub fn for_frame(n_axial: usize, n_lateral: usize) -> Result<PatchGrid> {
        let grid = if n_lateral >= 256 {
            PatchGrid::full()
        } else if n_lateral >= 128 {
            PatchGrid::desk()
        } else if n_lateral >= 64 {
            PatchGrid::compact()
        } else {
            return Err(Error::argument(format!(
                "no standard patch grid for a frame with {n_lateral} lines"
            )));
        };
        grid.check_fits(n_axial, n_lateral)?;
        Ok(grid)
    }

    pub fn patches_per_frame(&self) -> usize {
        self.n_axial * self.n_lateral
    }

    /// Axial sample of the top edge of patch row `ai`.
    pub fn axial_start(&self, ai: usize) -> usize {
        self.axial_skip + ai * self.axial_stride
    }

    /// Lateral line of the left edge of patch column `li`.
    pub fn lateral_start(&self, li: usize) -> usize {
        li * self.lateral_stride
    }

    pub(crate) fn check_fits(&self, n_axial: usize, n_lateral: usize) -> Result<()> {
        if self.n_axial == 0 || self.n_lateral == 0 || self.patch_h == 0 || self.patch_w == 0 {
            return Err(Error::argument("patch grid has an empty dimension"));
        }
        let axial_need = self.axial_start(self.n_axial - 1) + self.patch_h;
        if axial_need > n_axial {
            return Err(Error::argument(format!(
                "patch grid needs {axial_need} axial samples but the frame has {n_axial}"
            )));
        }
        let lateral_need = self.lateral_start(self.n_lateral - 1) + self.patch_w;
        if lateral_need > n_lateral {
            return Err(Error::argument(format!(
                "patch grid needs {lateral_need} lateral lines but the frame has {n_lateral}"
            )));
        }
        Ok(())
    }
}

/// Where a patch came from, for split-hygiene audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSource {
    pub frame: usize,
    /// Grid row (axial index).
    pub axial: usize,
    /// Grid column (lateral index).
    pub lateral: usize,
}

/// A rectangular cut of RF samples, stored column-major: each lateral column
/// is a contiguous axial strip.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    samples: Vec<f32>,
    pub patch_h: usize,
    pub patch_w: usize,
    pub source: PatchSource,
    /// Axial sample of the patch top edge in its source frame.
    pub axial_start: usize,
    /// Sampling rate, MHz.
    pub fs: f64,
}

impl Patch {
    pub fn new(samples: Vec<f32>, patch_h: usize, patch_w: usize, fs: f64) -> Self {
        assert_eq!(samples.len(), patch_h * patch_w, "patch grid mismatch");
        Patch {
            samples,
            patch_h,
            patch_w,
            source: PatchSource { frame: 0, axial: 0, lateral: 0 },
            axial_start: 0,
            fs,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// Lateral column `j` as a contiguous axial slice.
    pub fn column(&self, j: usize) -> &[f32] {
        &self.samples[j * self.patch_h..(j + 1) * self.patch_h]
    }

    pub fn at(&self, axial: usize, lateral: usize) -> f32 {
        self.samples[lateral * self.patch_h + axial]
    }

    /// Mirror the patch laterally (the training-time augmentation).
    pub fn hflip(&self) -> Patch {
        let mut out = self.clone();
        for j in 0..self.patch_w {
            let src = self.column(self.patch_w - 1 - j);
            out.samples[j * self.patch_h..(j + 1) * self.patch_h].copy_from_slice(src);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }
}

/// An ordered list of patches; order is the join key with any label or score
/// list, so no operation reorders one without the other.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn new(patches: Vec<Patch>) -> Self {
        PatchSet { patches }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Patch> {
        self.patches.iter()
    }

    /// Subset by indices, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> PatchSet {
        PatchSet::new(indices.iter().map(|&i| self.patches[i].clone()).collect())
    }

    /// Map every patch through the transfer function (per lateral column,
    /// using each patch's own axial placement for depth-bin lookup).
    pub fn apply_tf(&self, tf: &TransferFunction) -> Result<PatchSet> {
        let patches = self
            .patches
            .iter()
            .map(|p| apply_tf_patch(tf, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(PatchSet::new(patches))
    }

    /// Standardize every patch independently.
    pub fn zscore(&self) -> PatchSet {
        PatchSet::new(self.patches.iter().map(zscore).collect())
    }

    /// Pack patches as a 1-frame-per-patch dataset for file exchange.
    /// Source geometry is not representable in the file format and is lost.
    pub fn to_dataset(&self, labels: Option<&[i8]>) -> Result<RFDataset> {
        let labels: Vec<i8> = match labels {
            Some(l) => {
                if l.len() != self.len() {
                    return Err(Error::argument("label count differs from patch count"));
                }
                l.to_vec()
            }
            None => vec![-1; self.len()],
        };
        let frames: Vec<RFFrame> = self
            .patches
            .iter()
            .map(|p| {
                // Dataset frames are line-major; a line is an axial strip, so
                // patch columns map directly onto frame lines.
                RFFrame::new(p.samples.clone(), p.patch_h, p.patch_w, p.fs, 0.0)
            })
            .collect();
        RFDataset::new(frames, labels)
    }

    /// Inverse of [`PatchSet::to_dataset`]; sources are synthesized as
    /// (index, 0, 0) since the file format carries no geometry.
    pub fn from_dataset(ds: &RFDataset) -> PatchSet {
        let patches = ds
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut p = Patch::new(f.samples().to_vec(), f.n_axial(), f.n_lateral(), f.fs);
                p.source = PatchSource { frame: i, axial: 0, lateral: 0 };
                p
            })
            .collect();
        PatchSet::new(patches)
    }
}

/// Cut one frame into its grid of patches, emitted in axial-major,
/// lateral-minor order. `frame_id` lands in every patch's source record.
pub fn extract_patches_with_id(
    frame: &RFFrame,
    grid: &PatchGrid,
    frame_id: usize,
) -> Result<Vec<Patch>> {
    grid.check_fits(frame.n_axial(), frame.n_lateral())?;
    let mut patches = Vec::with_capacity(grid.patches_per_frame());
    for ai in 0..grid.n_axial {
        let a0 = grid.axial_start(ai);
        for li in 0..grid.n_lateral {
            let l0 = grid.lateral_start(li);
            let mut samples = Vec::with_capacity(grid.patch_h * grid.patch_w);
            for j in 0..grid.patch_w {
                let line = frame.line(l0 + j);
                samples.extend_from_slice(&line[a0..a0 + grid.patch_h]);
            }
            let mut p = Patch::new(samples, grid.patch_h, grid.patch_w, frame.fs);
            p.source = PatchSource { frame: frame_id, axial: ai, lateral: li };
            p.axial_start = a0;
            patches.push(p);
        }
    }
    Ok(patches)
}

/// [`extract_patches_with_id`] with frame id 0.
pub fn extract_patches(frame: &RFFrame, grid: &PatchGrid) -> Result<Vec<Patch>> {
    extract_patches_with_id(frame, grid, 0)
}

/// Extract from a stack of frames; frame ids follow the stack order.
pub fn extract_from_frames(frames: &[RFFrame], grid: &PatchGrid) -> Result<PatchSet> {
    let mut patches = Vec::with_capacity(frames.len() * grid.patches_per_frame());
    for (i, f) in frames.iter().enumerate() {
        patches.extend(extract_patches_with_id(f, grid, i)?);
    }
    Ok(PatchSet::new(patches))
}

/// Standardize one patch: `(p - mean) / (std + 1e-8)` with the population
/// standard deviation. Constant patches map to all zeros.
pub fn zscore(p: &Patch) -> Patch {
    let n = p.samples.len() as f64;
    let mean = p.samples.iter().map(|&s| s as f64).sum::<f64>() / n;
    let var = p
        .samples
        .iter()
        .map(|&s| (s as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let denom = var.sqrt() + ZSCORE_EPS;
    let mut out = p.clone();
    for s in out.samples.iter_mut() {
        *s = (((*s as f64) - mean) / denom) as f32;
    }
    out
}

/// Transfer-map one patch column-by-column.
pub fn apply_tf_patch(tf: &TransferFunction, p: &Patch) -> Result<Patch> {
    if tf.is_identity() {
        return Ok(p.clone());
    }
    let mut out = p.clone();
    for j in 0..p.patch_w {
        let filtered = apply_signal(tf, p.column(j), p.axial_start)?;
        out.samples[j * p.patch_h..(j + 1) * p.patch_h].copy_from_slice(&filtered);
    }
    Ok(out)
}
