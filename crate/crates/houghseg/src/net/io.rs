//! Weight file serialization (magic `HCNW`).
//!
//! Layout: magic, version u32, length-prefixed architecture notation,
//! rank u8, in_channels u16, num_classes u16, then per layer a tag byte,
//! shape integers, and little-endian f32 parameters in fixed order
//! (kernels, biases, alpha).

use std::io::Read;
use std::path::Path;

use super::arch::parse_arch;
use super::{LayerParams, Network};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"HCNW";
const VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_POOL: u8 = 1;
const TAG_DENSE: u8 = 2;

pub fn save_weights(net: &Network<f32>, path: &Path) -> Result<()> {
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    w.extend_from_slice(&VERSION.to_le_bytes());
    let notation = net.arch.notation.as_bytes();
    w.extend_from_slice(&(notation.len() as u32).to_le_bytes());
    w.extend_from_slice(notation);
    w.push(net.arch.rank as u8);
    w.extend_from_slice(&(net.arch.in_channels as u16).to_le_bytes());
    w.extend_from_slice(&(net.arch.num_classes as u16).to_le_bytes());

    for layer in &net.layers {
        match layer {
            LayerParams::Conv { shape, kernel, bias, alpha } => {
                w.push(TAG_CONV);
                w.extend_from_slice(&(shape.kdims[2] as u16).to_le_bytes());
                w.extend_from_slice(&(shape.out_ch as u32).to_le_bytes());
                w.extend_from_slice(&(shape.in_ch as u32).to_le_bytes());
                for v in kernel.iter().chain(bias).chain(alpha) {
                    w.extend_from_slice(&v.to_le_bytes());
                }
            }
            LayerParams::Pool { size, stride } => {
                w.push(TAG_POOL);
                w.extend_from_slice(&(*size as u16).to_le_bytes());
                w.extend_from_slice(&(*stride as u16).to_le_bytes());
            }
            LayerParams::Dense { in_dim, out_dim, weight, bias, alpha } => {
                w.push(TAG_DENSE);
                w.extend_from_slice(&(*out_dim as u32).to_le_bytes());
                w.extend_from_slice(&(*in_dim as u32).to_le_bytes());
                w.push(alpha.is_some() as u8);
                for v in weight.iter().chain(bias) {
                    w.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(a) = alpha {
                    for v in a {
                        w.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
    }
    std::fs::write(path, w).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<Network<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad weight-file magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight-file version {version}")));
    }
    let nlen = read_u32(&mut r)? as usize;
    if r.len() < nlen {
        return Err(Error::Format("truncated notation string".into()));
    }
    let notation = String::from_utf8(r[..nlen].to_vec())
        .map_err(|_| Error::Format("notation is not utf-8".into()))?;
    r = &r[nlen..];
    let rank = read_u8(&mut r)? as usize;
    let in_channels = read_u16(&mut r)? as usize;
    let num_classes = read_u16(&mut r)? as usize;

    let arch = parse_arch(&notation, rank, in_channels, num_classes)?;
    let mut net: Network<f32> = Network::init_msra(&arch, 0)?;

    for layer in net.layers.iter_mut() {
        let tag = read_u8(&mut r)?;
        match layer {
            LayerParams::Conv { shape, kernel, bias, alpha } => {
                if tag != TAG_CONV {
                    return Err(Error::Format(format!("expected conv layer, found tag {tag}")));
                }
                let kside = read_u16(&mut r)? as usize;
                let out_ch = read_u32(&mut r)? as usize;
                let in_ch = read_u32(&mut r)? as usize;
                if kside != shape.kdims[2] || out_ch != shape.out_ch || in_ch != shape.in_ch {
                    return Err(Error::Format(format!(
                        "conv shape mismatch: file has {kside}x{out_ch}x{in_ch}, \
                         notation implies {}x{}x{}",
                        shape.kdims[2], shape.out_ch, shape.in_ch
                    )));
                }
                read_f32s(&mut r, kernel)?;
                read_f32s(&mut r, bias)?;
                read_f32s(&mut r, alpha)?;
            }
            LayerParams::Pool { size, stride } => {
                if tag != TAG_POOL {
                    return Err(Error::Format(format!("expected pool layer, found tag {tag}")));
                }
                let s = read_u16(&mut r)? as usize;
                let st = read_u16(&mut r)? as usize;
                if s != *size || st != *stride {
                    return Err(Error::Format("pool shape mismatch".into()));
                }
            }
            LayerParams::Dense { in_dim, out_dim, weight, bias, alpha } => {
                if tag != TAG_DENSE {
                    return Err(Error::Format(format!("expected dense layer, found tag {tag}")));
                }
                let o = read_u32(&mut r)? as usize;
                let i = read_u32(&mut r)? as usize;
                let has_alpha = read_u8(&mut r)? != 0;
                if o != *out_dim || i != *in_dim || has_alpha != alpha.is_some() {
                    return Err(Error::Format(format!(
                        "dense shape mismatch: file has {o}x{i}, notation implies {out_dim}x{in_dim}"
                    )));
                }
                read_f32s(&mut r, weight)?;
                read_f32s(&mut r, bias)?;
                if let Some(a) = alpha {
                    read_f32s(&mut r, a)?;
                }
            }
        }
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes in weight file".into()));
    }
    net.reset_momentum();
    Ok(net)
}

fn read_u8(r: &mut &[u8]) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(|_| Error::Format("unexpected end of weight file".into()))?;
    Ok(b[0])
}

fn read_u16(r: &mut &[u8]) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(|_| Error::Format("unexpected end of weight file".into()))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("unexpected end of weight file".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut &[u8], out: &mut [f32]) -> Result<()> {
    for v in out.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| Error::Format("unexpected end of weight file".into()))?;
        *v = f32::from_le_bytes(b);
    }
    Ok(())
}
