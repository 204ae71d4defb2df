//! RF dataset container and its on-disk format.
//!
//! Layout (all little-endian): magic `USRF`, format version (u32), frame
//! count, axial length, lateral length (u32 each), sampling rate in Hz (f64),
//! one class label per frame (i8, -1 = unlabeled), then frame-major f32
//! samples with each frame stored line-by-line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::RFFrame;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"USRF";
const VERSION: u32 = 1;

/// A set of RF frames with uniform geometry plus per-frame class labels.
#[derive(Debug, Clone, Default)]
pub struct RFDataset {
    pub frames: Vec<RFFrame>,
    /// Class per frame; -1 marks unlabeled data.
    pub labels: Vec<i8>,
}

impl RFDataset {
    pub fn new(frames: Vec<RFFrame>, labels: Vec<i8>) -> Result<Self> {
        if frames.len() != labels.len() {
            return Err(Error::argument(format!(
                "{} frames but {} labels",
                frames.len(),
                labels.len()
            )));
        }
        let ds = RFDataset { frames, labels };
        ds.check_uniform()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, frame: RFFrame, label: i8) {
        self.frames.push(frame);
        self.labels.push(label);
    }

    fn check_uniform(&self) -> Result<()> {
        let Some(first) = self.frames.first() else {
            return Ok(());
        };
        for (i, f) in self.frames.iter().enumerate() {
            if f.n_axial() != first.n_axial()
                || f.n_lateral() != first.n_lateral()
                || f.fs != first.fs
            {
                return Err(Error::argument(format!(
                    "frame {i} geometry {}x{} @ {} MHz differs from frame 0 ({}x{} @ {} MHz)",
                    f.n_axial(),
                    f.n_lateral(),
                    f.fs,
                    first.n_axial(),
                    first.n_lateral(),
                    first.fs
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.check_uniform()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let (axial, lateral, fs) = match self.frames.first() {
            Some(f) => (f.n_axial(), f.n_lateral(), f.fs),
            None => (0, 0, 0.0),
        };
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(VERSION).map_err(io)?;
        w.write_u32::<LittleEndian>(self.frames.len() as u32).map_err(io)?;
        w.write_u32::<LittleEndian>(axial as u32).map_err(io)?;
        w.write_u32::<LittleEndian>(lateral as u32).map_err(io)?;
        w.write_f64::<LittleEndian>(fs * 1e6).map_err(io)?;
        for &label in &self.labels {
            w.write_i8(label).map_err(io)?;
        }
        for frame in &self.frames {
            for &s in frame.samples() {
                w.write_f32::<LittleEndian>(s).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::format(path, "bad magic, not an RF dataset file"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let count = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let axial = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let lateral = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let fs_hz = r.read_f64::<LittleEndian>().map_err(io)?;
        if count > 0 && (axial == 0 || lateral == 0) {
            return Err(Error::format(path, "zero frame geometry with nonzero count"));
        }
        if !fs_hz.is_finite() || (count > 0 && fs_hz <= 0.0) {
            return Err(Error::format(path, format!("invalid sampling rate {fs_hz} Hz")));
        }

        let mut labels = vec![0i8; count];
        for l in labels.iter_mut() {
            *l = r.read_i8().map_err(io)?;
        }
        let fs = fs_hz / 1e6;
        let mut frames = Vec::with_capacity(count);
        let mut buf = vec![0u8; axial * lateral * 4];
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(io)?;
            let samples: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            frames.push(RFFrame::new(samples, axial, lateral, fs, 0.0));
        }
        let mut tail = [0u8; 1];
        match r.read(&mut tail) {
            Ok(0) => {}
            Ok(_) => return Err(Error::format(path, "trailing bytes after last frame")),
            Err(e) => return Err(Error::io(path, e)),
        }
        Ok(RFDataset { frames, labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfsim::{synthesize_frame, MachineSpec, PhantomSpec, Scale};
    use std::io::Seek;

    fn small_dataset() -> RFDataset {
        let m = MachineSpec::victim(Scale::Compact);
        let p1 = PhantomSpec::phantom1();
        let p2 = PhantomSpec::phantom2();
        RFDataset::new(
            vec![
                synthesize_frame(&p1, &m, 1).unwrap(),
                synthesize_frame(&p2, &m, 2).unwrap(),
            ],
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_samples_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.usrf");
        let ds = small_dataset();
        ds.write(&path).unwrap();
        let back = RFDataset::read(&path).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.len(), ds.len());
        for (a, b) in back.frames.iter().zip(ds.frames.iter()) {
            assert_eq!(a.samples(), b.samples());
            assert_eq!(a.fs, b.fs);
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.usrf");
        std::fs::write(&path, b"NOPE0000000000000000000000000000").unwrap();
        let err = RFDataset::read(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "got {err:?}");
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.usrf");
        small_dataset().write(&path).unwrap();
        let file = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        let len = file.metadata().unwrap().len();
        file.set_len(len - 100).unwrap();
        drop(file);
        assert!(RFDataset::read(&path).is_err());
    }

    #[test]
    fn trailing_bytes_are_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.usrf");
        small_dataset().write(&path).unwrap();
        let mut file = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        file.seek(std::io::SeekFrom::End(0)).unwrap();
        std::io::Write::write_all(&mut file, &[0u8; 3]).unwrap();
        drop(file);
        let err = RFDataset::read(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "got {err:?}");
    }

    #[test]
    fn mismatched_geometry_is_rejected() {
        let m = MachineSpec::victim(Scale::Compact);
        let p = PhantomSpec::phantom1();
        let a = synthesize_frame(&p, &m, 1).unwrap();
        let b = RFFrame::zeros(8, 2, m.fs, 1.0);
        assert!(RFDataset::new(vec![a, b], vec![0, 1]).is_err());
    }

    #[test]
    fn unlabeled_marker_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.usrf");
        let mut ds = small_dataset();
        ds.labels = vec![-1, -1];
        ds.write(&path).unwrap();
        assert_eq!(RFDataset::read(&path).unwrap().labels, vec![-1, -1]);
    }
}
