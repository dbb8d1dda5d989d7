//! 3D scalar and label volumes with exact two-file I/O.
//!
//! A volume on disk is a plain-text header plus a raw little-endian payload.
//! The header carries exactly five `Key = Value` lines (`NDims`, `DimSize`,
//! `ElementSpacing`, `ElementType`, `ElementDataFile`); the payload stores
//! voxels x-fastest. Scalars are 32-bit floats, labels are unsigned 8-bit
//! region ids (0 = background).

use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Voxel dimensions `(nx, ny, nz)`.
pub type Dims = [usize; 3];

/// Millimetres per voxel along each axis.
pub type Spacing = [f64; 3];

/// Linear index of voxel `(x, y, z)` in x-fastest order.
#[inline]
pub fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// A 3D scalar volume, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: Dims,
    pub spacing: Spacing,
    pub data: Vec<f32>,
}

/// A 3D integer label volume; 0 is background, 1..=R are regions.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub dims: Dims,
    pub spacing: Spacing,
    pub labels: Vec<u8>,
}

/// Either kind of volume, as stored on disk.
#[derive(Debug, Clone)]
pub enum AnyVolume {
    Scalar(Volume),
    Labels(LabelVolume),
}

impl Volume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        check_dims(dims, spacing, data.len())?;
        Ok(Volume { dims, spacing, data })
    }

    /// Volume of zeros at 1 mm isotropic spacing.
    pub fn zeros(dims: Dims) -> Self {
        Volume { dims, spacing: [1.0; 3], data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[linear_index(self.dims, x, y, z)]
    }
}

impl LabelVolume {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<u8>) -> Result<Self> {
        check_dims(dims, spacing, labels.len())?;
        Ok(LabelVolume { dims, spacing, labels })
    }

    pub fn zeros(dims: Dims) -> Self {
        LabelVolume { dims, spacing: [1.0; 3], labels: vec![0; dims[0] * dims[1] * dims[2]] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[linear_index(self.dims, x, y, z)]
    }

    /// Voxel coordinates of every voxel carrying `region`, in scan order.
    pub fn region_voxels(&self, region: u8) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if self.labels[linear_index(self.dims, x, y, z)] == region {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    /// Ids of the non-background regions present, ascending.
    pub fn region_ids(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=255u8).filter(|&r| seen[r as usize]).collect()
    }
}

fn check_dims(dims: Dims, spacing: Spacing, len: usize) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero dimension in {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Shape(format!("non-positive spacing in {spacing:?}")));
    }
    let expected = dims[0] * dims[1] * dims[2];
    if len != expected {
        return Err(Error::Shape(format!(
            "data length {len} does not match dims {dims:?} ({expected} voxels)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ElementType {
    Float32,
    Uint8,
}

/// Save a scalar volume; `path` names the header file, the payload lands next
/// to it with a `.raw` extension.
pub fn save_volume(v: &Volume, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(v.data.len() * 4);
    for &x in &v.data {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    write_pair(path, v.dims, v.spacing, ElementType::Float32, &payload)
}

/// Save a label volume (unsigned 8-bit payload).
pub fn save_labels(l: &LabelVolume, path: &Path) -> Result<()> {
    write_pair(path, l.dims, l.spacing, ElementType::Uint8, &l.labels)
}

fn payload_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

fn write_pair(
    path: &Path,
    dims: Dims,
    spacing: Spacing,
    ty: ElementType,
    payload: &[u8],
) -> Result<()> {
    let raw = payload_path(path);
    let raw_name = raw
        .file_name()
        .ok_or_else(|| Error::Format(format!("no file name in {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let ty_name = match ty {
        ElementType::Float32 => "FLOAT32",
        ElementType::Uint8 => "UINT8",
    };
    let header = format!(
        "NDims = 3\nDimSize = {} {} {}\nElementSpacing = {} {} {}\nElementType = {}\nElementDataFile = {}\n",
        dims[0], dims[1], dims[2], spacing[0], spacing[1], spacing[2], ty_name, raw_name
    );
    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    fs::write(&raw, payload).map_err(|e| Error::io(&raw, e))?;
    Ok(())
}

/// Load a volume pair written by [`save_volume`] / [`save_labels`].
///
/// `FLOAT32` payloads yield [`Volume`], `UINT8` payloads yield [`LabelVolume`].
pub fn load_volume(path: &Path) -> Result<AnyVolume> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ndims = None;
    let mut dims: Option<Dims> = None;
    let mut spacing: Option<Spacing> = None;
    let mut ty = None;
    let mut data_file = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected `Key = Value`", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NDims" => {
                ndims = Some(
                    value
                        .parse::<u32>()
                        .map_err(|_| Error::Format(format!("bad NDims `{value}`")))?,
                )
            }
            "DimSize" => {
                let parts = parse_triple::<usize>(value, "DimSize")?;
                dims = Some(parts);
            }
            "ElementSpacing" => {
                let parts = parse_triple::<f64>(value, "ElementSpacing")?;
                spacing = Some(parts);
            }
            "ElementType" => {
                ty = Some(match value {
                    "FLOAT32" => ElementType::Float32,
                    "UINT8" => ElementType::Uint8,
                    other => {
                        return Err(Error::Format(format!("unsupported element type `{other}`")))
                    }
                })
            }
            "ElementDataFile" => data_file = Some(value.to_string()),
            other => return Err(Error::Format(format!("unknown header key `{other}`"))),
        }
    }

    let ndims = ndims.ok_or_else(|| Error::Format("missing NDims".into()))?;
    if ndims != 3 {
        return Err(Error::Format(format!("NDims must be 3, got {ndims}")));
    }
    let dims = dims.ok_or_else(|| Error::Format("missing DimSize".into()))?;
    let spacing = spacing.ok_or_else(|| Error::Format("missing ElementSpacing".into()))?;
    let ty = ty.ok_or_else(|| Error::Format("missing ElementType".into()))?;
    let data_file = data_file.ok_or_else(|| Error::Format("missing ElementDataFile".into()))?;

    let raw_path = match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(&data_file),
        _ => PathBuf::from(&data_file),
    };
    let payload = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;

    let count = dims[0] * dims[1] * dims[2];
    match ty {
        ElementType::Float32 => {
            if payload.len() != count * 4 {
                return Err(Error::Format(format!(
                    "payload is {} bytes, header claims {} float voxels ({} bytes)",
                    payload.len(),
                    count,
                    count * 4
                )));
            }
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            Ok(AnyVolume::Scalar(Volume::new(dims, spacing, data)?))
        }
        ElementType::Uint8 => {
            if payload.len() != count {
                return Err(Error::Format(format!(
                    "payload is {} bytes, header claims {} label voxels",
                    payload.len(),
                    count
                )));
            }
            Ok(AnyVolume::Labels(LabelVolume::new(dims, spacing, payload)?))
        }
    }
}

/// Load, requiring a scalar volume.
pub fn load_scalar(path: &Path) -> Result<Volume> {
    match load_volume(path)? {
        AnyVolume::Scalar(v) => Ok(v),
        AnyVolume::Labels(_) => {
            Err(Error::Format(format!("{} holds labels, expected scalars", path.display())))
        }
    }
}

/// Load, requiring a label volume.
pub fn load_label(path: &Path) -> Result<LabelVolume> {
    match load_volume(path)? {
        AnyVolume::Labels(l) => Ok(l),
        AnyVolume::Scalar(_) => {
            Err(Error::Format(format!("{} holds scalars, expected labels", path.display())))
        }
    }
}


fn parse_triple<T: std::str::FromStr>(value: &str, key: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("{key} needs three values, got `{value}`")));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| Error::Format(format!("bad {key} entry `{p}`")))?);
    }
    Ok([out.remove(0), out.remove(0), out.remove(0)])
}
