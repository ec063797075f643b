//! Versioned binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4 bytes  "IMGN"
//! version          u32      currently 1
//! input_side       u32
//! input_channels   u32
//! conv_filters     3 × u32
//! fc_widths        3 × u32
//! dropout_rate     f64
//! bn_epsilon       f64
//! bn_momentum      f64
//! seed             u64
//! epochs           u32
//! tensor records   fixed order (see below)
//! ```
//!
//! Each tensor record is `code u8, rank u8, dims rank × u32, values f64 ×
//! product(dims)`. Records appear block by block — conv weights and bias
//! (code 1), then batchnorm gamma, beta, running mean, running variance
//! (code 2) — followed by each fully connected layer's weights and bias
//! (code 3).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::nn::{HeadInit, Network, NetworkConfig, NnError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"IMGN";
pub const CHECKPOINT_VERSION: u32 = 1;

const CODE_CONV: u8 = 1;
const CODE_BATCHNORM: u8 = 2;
const CODE_DENSE: u8 = 3;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}, this build reads version {CHECKPOINT_VERSION}")]
    UnsupportedVersion(u32),
    #[error("checkpoint ends mid-record")]
    TruncatedFile,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs: u32,
}

pub fn save_checkpoint<W: Write>(
    net: &Network,
    meta: CheckpointMeta,
    mut writer: W,
) -> Result<(), CheckpointError> {
    let w = &mut writer;
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let cfg = net.config();
    write_u32(w, cfg.input_side as u32)?;
    write_u32(w, cfg.input_channels as u32)?;
    for &f in &cfg.conv_filters {
        write_u32(w, f as u32)?;
    }
    for &f in &cfg.fc_widths {
        write_u32(w, f as u32)?;
    }
    write_f64(w, cfg.dropout_rate)?;
    write_f64(w, cfg.bn_epsilon)?;
    write_f64(w, cfg.bn_momentum)?;
    w.write_all(&meta.seed.to_le_bytes())?;
    w.write_all(&meta.epochs.to_le_bytes())?;
    for block in &net.blocks {
        write_record(w, CODE_CONV, block.w.shape(), block.w.data())?;
        write_record(w, CODE_CONV, block.b.shape(), block.b.data())?;
        write_record(w, CODE_BATCHNORM, block.gamma.shape(), block.gamma.data())?;
        write_record(w, CODE_BATCHNORM, block.beta.shape(), block.beta.data())?;
        write_record(w, CODE_BATCHNORM, &[block.running_mean.len()], &block.running_mean)?;
        write_record(w, CODE_BATCHNORM, &[block.running_var.len()], &block.running_var)?;
    }
    for fc in &net.fcs {
        write_record(w, CODE_DENSE, fc.w.shape(), fc.w.data())?;
        write_record(w, CODE_DENSE, fc.b.shape(), fc.b.data())?;
    }
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut reader: R) -> Result<(Network, CheckpointMeta), CheckpointError> {
    let r = &mut reader;
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config = NetworkConfig {
        input_side: read_u32(r)? as usize,
        input_channels: read_u32(r)? as usize,
        conv_filters: [read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize],
        fc_widths: [read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize],
        dropout_rate: read_f64(r)?,
        bn_epsilon: read_f64(r)?,
        bn_momentum: read_f64(r)?,
    };
    let meta = CheckpointMeta { seed: read_u64(r)?, epochs: read_u32(r)? };

    let mut net = Network::with_head(config, 0, HeadInit::Zeros)?;
    for (i, block) in net.blocks.iter_mut().enumerate() {
        let name = |part: &str| format!("block {i} {part}");
        read_record_into(r, CODE_CONV, &name("conv weights"), block.w.data_mut_with_shape())?;
        read_record_into(r, CODE_CONV, &name("conv bias"), block.b.data_mut_with_shape())?;
        read_record_into(r, CODE_BATCHNORM, &name("gamma"), block.gamma.data_mut_with_shape())?;
        read_record_into(r, CODE_BATCHNORM, &name("beta"), block.beta.data_mut_with_shape())?;
        let c = block.running_mean.len();
        read_record_into(r, CODE_BATCHNORM, &name("running mean"), (&[c], &mut block.running_mean))?;
        read_record_into(r, CODE_BATCHNORM, &name("running variance"), (&[c], &mut block.running_var))?;
    }
    for (j, fc) in net.fcs.iter_mut().enumerate() {
        let name = |part: &str| format!("fc {j} {part}");
        read_record_into(r, CODE_DENSE, &name("weights"), fc.w.data_mut_with_shape())?;
        read_record_into(r, CODE_DENSE, &name("bias"), fc.b.data_mut_with_shape())?;
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok((net, meta)),
        Ok(_) => Err(CheckpointError::Malformed("trailing bytes after the final tensor".into())),
        Err(e) => Err(CheckpointError::Io(e)),
    }
}

pub fn save_checkpoint_file<P: AsRef<Path>>(
    net: &Network,
    meta: CheckpointMeta,
    path: P,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    save_checkpoint(net, meta, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint_file<P: AsRef<Path>>(
    path: P,
) -> Result<(Network, CheckpointMeta), CheckpointError> {
    load_checkpoint(BufReader::new(File::open(path)?))
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_record<W: Write>(w: &mut W, code: u8, dims: &[usize], values: &[f64]) -> io::Result<()> {
    w.write_all(&[code, dims.len() as u8])?;
    for &d in dims {
        write_u32(w, d as u32)?;
    }
    for &v in values {
        write_f64(w, v)?;
    }
    Ok(())
}

/// Like `read_exact`, but an early end of input is a truncation error
/// rather than a generic I/O failure.
fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            CheckpointError::TruncatedFile
        } else {
            CheckpointError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CheckpointError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Read one tensor record into a preshaped destination, verifying the
/// layer code and every dimension against what the config dictates.
fn read_record_into<R: Read>(
    r: &mut R,
    code: u8,
    name: &str,
    (dims, out): (&[usize], &mut [f64]),
) -> Result<(), CheckpointError> {
    let mut head = [0u8; 2];
    read_exact(r, &mut head)?;
    if head[0] != code {
        return Err(CheckpointError::Malformed(format!(
            "{name}: expected layer code {code}, found {}",
            head[0]
        )));
    }
    if head[1] as usize != dims.len() {
        return Err(CheckpointError::Malformed(format!(
            "{name}: expected rank {}, found {}",
            dims.len(),
            head[1]
        )));
    }
    for (axis, &expected) in dims.iter().enumerate() {
        let got = read_u32(r)? as usize;
        if got != expected {
            return Err(CheckpointError::Malformed(format!(
                "{name}: axis {axis} has length {got}, expected {expected}"
            )));
        }
    }
    for v in out.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(())
}
