//! Versioned binary container for classifier weights.
//!
//! Layout (little-endian): magic `USNN`, format version, the architecture
//! descriptor (input size, kernel size, block widths), the initialization
//! seed, then every tensor as f32 in declaration order — per block the conv
//! weights then biases, then the head weights and bias.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::net::{Architecture, ClassifierParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"USNN";
const VERSION: u32 = 1;

/// Upper bound used only to reject absurd descriptors from corrupt files.
const SANE_DIM: u32 = 1 << 20;

/// Failure modes of the streaming reader, mapped to path-aware errors by the
/// callers that know which file is being read.
pub(crate) enum WeightReadError {
    /// Structurally invalid content.
    Bad(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for WeightReadError {
    fn from(e: std::io::Error) -> Self {
        WeightReadError::Io(e)
    }
}

pub(crate) fn write_weights<W: Write>(p: &ClassifierParams, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(p.arch.input_h as u32)?;
    w.write_u32::<LittleEndian>(p.arch.input_w as u32)?;
    w.write_u32::<LittleEndian>(p.arch.kernel_h as u32)?;
    w.write_u32::<LittleEndian>(p.arch.kernel_w as u32)?;
    w.write_u32::<LittleEndian>(p.arch.widths.len() as u32)?;
    for &c in &p.arch.widths {
        w.write_u32::<LittleEndian>(c as u32)?;
    }
    w.write_u64::<LittleEndian>(p.init_seed)?;
    for (cw, cb) in p.conv_w.iter().zip(p.conv_b.iter()) {
        for &v in cw {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for &v in cb {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    for &v in &p.head_w {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    w.write_f32::<LittleEndian>(p.head_b as f32)?;
    Ok(())
}

pub(crate) fn read_weights<R: Read>(
    r: &mut R,
) -> std::result::Result<ClassifierParams, WeightReadError> {
    let bad = WeightReadError::Bad;

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:02x?}, expected {MAGIC:02x?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(bad(format!("unsupported weight format version {version}")));
    }
    let input_h = r.read_u32::<LittleEndian>()?;
    let input_w = r.read_u32::<LittleEndian>()?;
    let kernel_h = r.read_u32::<LittleEndian>()?;
    let kernel_w = r.read_u32::<LittleEndian>()?;
    let n_blocks = r.read_u32::<LittleEndian>()?;
    if input_h == 0
        || input_w == 0
        || kernel_h == 0
        || kernel_w == 0
        || n_blocks == 0
        || input_h > SANE_DIM
        || input_w > SANE_DIM
        || n_blocks > 64
    {
        return Err(bad(format!(
            "implausible architecture descriptor {input_h}x{input_w}, {n_blocks} blocks"
        )));
    }
    let mut widths = Vec::with_capacity(n_blocks as usize);
    for _ in 0..n_blocks {
        let c = r.read_u32::<LittleEndian>()?;
        if c == 0 || c > SANE_DIM {
            return Err(bad(format!("implausible channel width {c}")));
        }
        widths.push(c as usize);
    }
    let init_seed = r.read_u64::<LittleEndian>()?;

    let arch = Architecture {
        input_h: input_h as usize,
        input_w: input_w as usize,
        widths,
        kernel_h: kernel_h as usize,
        kernel_w: kernel_w as usize,
    };
    let stages = arch
        .stages()
        .map_err(|e| bad(format!("stored architecture is invalid: {e}")))?;

    let k = arch.kernel_h * arch.kernel_w;
    let read_tensor = |r: &mut R, n: usize| -> std::result::Result<Vec<f64>, WeightReadError> {
        let mut t = Vec::with_capacity(n);
        for _ in 0..n {
            t.push(r.read_f32::<LittleEndian>()? as f64);
        }
        Ok(t)
    };
    let mut conv_w = Vec::with_capacity(stages.len());
    let mut conv_b = Vec::with_capacity(stages.len());
    for s in &stages {
        conv_w.push(read_tensor(r, s.c_out * s.c_in * k)?);
        conv_b.push(read_tensor(r, s.c_out)?);
    }
    let c_last = stages.last().unwrap().c_out;
    let head_w = read_tensor(r, c_last)?;
    let head_b = read_tensor(r, 1)?[0];

    let params = ClassifierParams { arch, conv_w, conv_b, head_w, head_b, init_seed };
    if !params.to_flat().iter().all(|v| v.is_finite()) {
        return Err(bad("non-finite weight values".to_string()));
    }
    Ok(params)
}

pub(crate) fn map_read_error(path: &Path, e: WeightReadError) -> Error {
    match e {
        WeightReadError::Bad(reason) => Error::format(path, reason),
        WeightReadError::Io(e) => Error::io(path, e),
    }
}

impl ClassifierParams {
    /// Write the weights to `path`, f32 precision.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_weights(self, &mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Read weights written by [`ClassifierParams::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let params = read_weights(&mut r).map_err(|e| map_read_error(path, e))?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::format(path, "trailing bytes after weight tensors"));
        }
        Ok(params)
    }
}
