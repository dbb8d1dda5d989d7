//! Patch extraction around voxel centers and balanced training-set assembly.
//!
//! Three patch modes are supported: single-plane 2D (axial by default),
//! 2.5D (sagittal + coronal + transversal planes stacked as channels) and
//! cubic 3D. Values are always copied out of the volume, never aliased.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::volume::{linear_index, LabelVolume, Volume};
use crate::{Error, Result};

/// Patch dimensionality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    TwoD,
    TwoPointFiveD,
    ThreeD,
}

impl Mode {
    /// Number of input channels a network sees for this mode.
    pub fn channels(self) -> usize {
        match self {
            Mode::TwoPointFiveD => 3,
            _ => 1,
        }
    }

    /// Spatial rank of the patch (2 or 3).
    pub fn rank(self) -> usize {
        match self {
            Mode::ThreeD => 3,
            _ => 2,
        }
    }

    /// Scalar count for a patch of side `size`.
    pub fn value_count(self, size: usize) -> usize {
        match self {
            Mode::TwoD => size * size,
            Mode::TwoPointFiveD => 3 * size * size,
            Mode::ThreeD => size * size * size,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Mode::TwoD => 0,
            Mode::TwoPointFiveD => 1,
            Mode::ThreeD => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Mode::TwoD),
            1 => Ok(Mode::TwoPointFiveD),
            2 => Ok(Mode::ThreeD),
            t => Err(Error::Format(format!("unknown patch mode tag {t}"))),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Ok(Mode::TwoD),
            "2.5d" | "25d" => Ok(Mode::TwoPointFiveD),
            "3d" => Ok(Mode::ThreeD),
            other => Err(Error::Config(format!("unknown mode `{other}` (use 2d, 2.5d or 3d)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::TwoD => write!(f, "2d"),
            Mode::TwoPointFiveD => write!(f, "2.5d"),
            Mode::ThreeD => write!(f, "3d"),
        }
    }
}

/// A fixed-size sample centered on a voxel.
///
/// Value layout per mode (all x-fastest within their plane):
/// - 2D: one axial plane, rows y, columns x.
/// - 2.5D: channel 0 sagittal (rows z, cols y), channel 1 coronal
///   (rows z, cols x), channel 2 transversal (rows y, cols x).
/// - 3D: cube in z, y, x order with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub mode: Mode,
    pub size: usize,
    pub center: [usize; 3],
    pub values: Vec<f32>,
    pub label: Option<u8>,
}

/// A labeled patch collection with per-class tallies.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub mode: Mode,
    pub size: usize,
    pub patches: Vec<Patch>,
    pub seed: u64,
}

impl TrainingSet {
    /// Per-label tally, indexed by label id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; 256];
        for p in &self.patches {
            counts[p.label.unwrap_or(0) as usize] += 1;
        }
        let last = counts.iter().rposition(|&c| c > 0).map_or(0, |i| i + 1);
        counts.truncate(last.max(1));
        counts
    }

    pub fn merge(mut self, other: TrainingSet) -> Result<TrainingSet> {
        if self.mode != other.mode || self.size != other.size {
            return Err(Error::Shape("cannot merge training sets of different patch kind".into()));
        }
        self.patches.extend(other.patches);
        Ok(self)
    }
}

/// Margin a center must keep from the faces that its mode samples across.
pub fn margin(size: usize) -> usize {
    size / 2
}

fn in_bounds(dim: usize, c: usize, m: usize) -> bool {
    c >= m && c + m < dim
}

/// Extract one patch. The crop must fit entirely inside the volume.
pub fn extract_patch(v: &Volume, center: [usize; 3], mode: Mode, size: usize) -> Result<Patch> {
    let m = margin(size);
    let [cx, cy, cz] = center;
    let [nx, ny, nz] = v.dims;
    let fits = match mode {
        Mode::TwoD => in_bounds(nx, cx, m) && in_bounds(ny, cy, m) && cz < nz,
        Mode::TwoPointFiveD | Mode::ThreeD => {
            in_bounds(nx, cx, m) && in_bounds(ny, cy, m) && in_bounds(nz, cz, m)
        }
    };
    if !fits {
        return Err(Error::PatchOutOfBounds {
            center: [cx as i64, cy as i64, cz as i64],
            size,
        });
    }

    let mut values = Vec::with_capacity(mode.value_count(size));
    match mode {
        Mode::TwoD => copy_transversal(v, center, size, &mut values),
        Mode::TwoPointFiveD => {
            copy_sagittal(v, center, size, &mut values);
            copy_coronal(v, center, size, &mut values);
            copy_transversal(v, center, size, &mut values);
        }
        Mode::ThreeD => {
            let m = m as isize;
            for dz in -m..=m {
                for dy in -m..=m {
                    let z = (cz as isize + dz) as usize;
                    let y = (cy as isize + dy) as usize;
                    let row = linear_index(v.dims, (cx as isize - m) as usize, y, z);
                    values.extend_from_slice(&v.data[row..row + size]);
                }
            }
        }
    }
    Ok(Patch { mode, size, center, values, label: None })
}

fn copy_transversal(v: &Volume, [cx, cy, cz]: [usize; 3], size: usize, out: &mut Vec<f32>) {
    let m = margin(size);
    for y in cy - m..=cy + m {
        let row = linear_index(v.dims, cx - m, y, cz);
        out.extend_from_slice(&v.data[row..row + size]);
    }
}

fn copy_coronal(v: &Volume, [cx, cy, cz]: [usize; 3], size: usize, out: &mut Vec<f32>) {
    let m = margin(size);
    for z in cz - m..=cz + m {
        let row = linear_index(v.dims, cx - m, cy, z);
        out.extend_from_slice(&v.data[row..row + size]);
    }
}

fn copy_sagittal(v: &Volume, [cx, cy, cz]: [usize; 3], size: usize, out: &mut Vec<f32>) {
    let m = margin(size);
    for z in cz - m..=cz + m {
        for y in cy - m..=cy + m {
            out.push(v.at(cx, y, z));
        }
    }
}

/// Centers eligible for training: at least `margin(size)` voxels from every
/// face, regardless of mode, and carrying the requested label.
pub fn eligible_centers(l: &LabelVolume, label: u8, size: usize) -> Vec<[usize; 3]> {
    let m = margin(size);
    let [nx, ny, nz] = l.dims;
    if nx < size || ny < size || nz < size {
        return Vec::new();
    }
    let mut out = Vec::new();
    for z in m..nz - m {
        for y in m..ny - m {
            for x in m..nx - m {
                if l.labels[linear_index(l.dims, x, y, z)] == label {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Sample a balanced training set: `per_class_count` patches per label in
/// `classes`, uniformly without replacement from the eligible centers.
///
/// Classes with fewer eligible centers than requested contribute all of them
/// (the caller is told through the returned tallies). A class with no
/// eligible center at all is an error. Reproducible given `seed`.
pub fn sample_training_set(
    v: &Volume,
    l: &LabelVolume,
    classes: &[u8],
    per_class_count: usize,
    mode: Mode,
    size: usize,
    seed: u64,
) -> Result<TrainingSet> {
    if v.dims != l.dims {
        return Err(Error::Shape(format!(
            "volume dims {:?} do not match label dims {:?}",
            v.dims, l.dims
        )));
    }
    let mut patches = Vec::new();
    for (class_idx, &class) in classes.iter().enumerate() {
        let mut centers = eligible_centers(l, class, size);
        if centers.is_empty() {
            return Err(Error::EmptyRegion(class));
        }
        let take = per_class_count.min(centers.len());
        // partial Fisher-Yates: only the first `take` positions are settled,
        // one dedicated stream per class so classes stay independent
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class_idx as u64 + 1);
        for i in 0..take {
            let j = rng.gen_range(i..centers.len());
            centers.swap(i, j);
        }
        for &center in &centers[..take] {
            let mut p = extract_patch(v, center, mode, size)?;
            p.label = Some(class);
            patches.push(p);
        }
    }
    Ok(TrainingSet { mode, size, patches, seed })
}

const TS_MAGIC: &[u8; 4] = b"HCTS";
const TS_VERSION: u32 = 1;

/// Serialize a training set (magic `HCTS`).
pub fn save_training_set(ts: &TrainingSet, path: &Path) -> Result<()> {
    let mut w = Vec::new();
    w.extend_from_slice(TS_MAGIC);
    w.extend_from_slice(&TS_VERSION.to_le_bytes());
    w.push(ts.mode.tag());
    w.extend_from_slice(&(ts.size as u16).to_le_bytes());
    w.extend_from_slice(&(ts.patches.len() as u64).to_le_bytes());
    for p in &ts.patches {
        for c in p.center {
            w.extend_from_slice(&(c as i32).to_le_bytes());
        }
        w.push(p.label.unwrap_or(0));
        for &x in &p.values {
            w.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, w).map_err(|e| Error::io(path, e))
}

/// Load a training set written by [`save_training_set`].
pub fn load_training_set(path: &Path) -> Result<TrainingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != TS_MAGIC {
        return Err(Error::Format("bad training-set magic".into()));
    }
    let version = read_u32(&mut r, path)?;
    if version != TS_VERSION {
        return Err(Error::Format(format!("unsupported training-set version {version}")));
    }
    let mode = Mode::from_tag(read_u8(&mut r, path)?)?;
    let size = read_u16(&mut r, path)? as usize;
    let count = read_u64(&mut r, path)? as usize;
    let nvals = mode.value_count(size);
    let mut patches = Vec::with_capacity(count);
    for _ in 0..count {
        let mut center = [0usize; 3];
        for c in &mut center {
            *c = read_i32(&mut r, path)? as usize;
        }
        let label = read_u8(&mut r, path)?;
        let mut values = vec![0f32; nvals];
        for v in &mut values {
            *v = f32::from_le_bytes(read_arr(&mut r, path)?);
        }
        patches.push(Patch { mode, size, center, values, label: Some(label) });
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes in training-set file".into()));
    }
    Ok(TrainingSet { mode, size, patches, seed: 0 })
}

fn read_arr<const N: usize>(r: &mut &[u8], path: &Path) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn read_u8(r: &mut &[u8], path: &Path) -> Result<u8> {
    Ok(read_arr::<1>(r, path)?[0])
}

fn read_u16(r: &mut &[u8], path: &Path) -> Result<u16> {
    Ok(u16::from_le_bytes(read_arr(r, path)?))
}

fn read_u32(r: &mut &[u8], path: &Path) -> Result<u32> {
    Ok(u32::from_le_bytes(read_arr(r, path)?))
}

fn read_u64(r: &mut &[u8], path: &Path) -> Result<u64> {
    Ok(u64::from_le_bytes(read_arr(r, path)?))
}

fn read_i32(r: &mut &[u8], path: &Path) -> Result<i32> {
    Ok(i32::from_le_bytes(read_arr(r, path)?))
}

// Exercised further by the writer in the CLI crate.
#[allow(dead_code)]
fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
