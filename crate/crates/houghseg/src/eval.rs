//! Segmentation quality metrics: Dice, mean surface distance (exact
//! Euclidean distance transform), failure accounting and Dice histograms.

use crate::volume::{linear_index, LabelVolume, Spacing};
use crate::{Error, Result};

/// A binary voxel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl Mask {
    pub fn zeros(dims: [usize; 3]) -> Mask {
        Mask { dims, data: vec![false; dims[0] * dims[1] * dims[2]] }
    }

    /// Voxels of a label volume carrying `region`.
    pub fn from_labels(l: &LabelVolume, region: u8) -> Mask {
        Mask { dims: l.dims, data: l.labels.iter().map(|&v| v == region).collect() }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[linear_index(self.dims, x, y, z)]
    }
}

/// Dice overlap `2|A∩B| / (|A|+|B|)`; two empty masks agree perfectly (1.0).
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::Shape(format!("mask dims {:?} vs {:?}", a.dims, b.dims)));
    }
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x && y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Foreground voxels with at least one six-connected background neighbour;
/// the outside of the volume counts as background.
pub fn boundary_voxels(m: &Mask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = m.dims;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !m.at(x, y, z) {
                    continue;
                }
                let edge = x == 0
                    || y == 0
                    || z == 0
                    || x == nx - 1
                    || y == ny - 1
                    || z == nz - 1
                    || !m.at(x - 1, y, z)
                    || !m.at(x + 1, y, z)
                    || !m.at(x, y - 1, z)
                    || !m.at(x, y + 1, z)
                    || !m.at(x, y, z - 1)
                    || !m.at(x, y, z + 1);
                if edge {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

const FAR: f64 = 1e30;

/// One-dimensional squared distance transform (lower envelope of parabolas)
/// with samples at physical positions `i * spacing`.
fn edt_1d(f: &[f64], spacing: f64, out: &mut [f64]) {
    let n = f.len();
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let x = |i: usize| i as f64 * spacing;
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -FAR;
    z[1] = FAR;
    for q in 1..n {
        if f[q] >= FAR && f[v[k]] >= FAR {
            // both parabolas at infinity: keep the earlier one
            continue;
        }
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + x(q) * x(q)) - (f[p] + x(p) * x(p))) / (2.0 * x(q) - 2.0 * x(p));
            if s <= z[k] {
                if k == 0 {
                    // replace the root parabola
                    v[0] = q;
                    z[0] = -FAR;
                    z[1] = FAR;
                    s = f64::NAN;
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        if s.is_nan() {
            continue;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = FAR;
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < x(q) {
            k += 1;
        }
        let p = v[k];
        let d = x(q) - x(p);
        out[q] = d * d + f[p];
    }
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// seed voxel, separable over the three axes with anisotropic spacing.
pub fn distance_field_sq(dims: [usize; 3], spacing: Spacing, seeds: &[[usize; 3]]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut g = vec![FAR; nx * ny * nz];
    for &[x, y, z] in seeds {
        g[linear_index(dims, x, y, z)] = 0.0;
    }
    let mut line: Vec<f64> = Vec::new();
    let mut out_line: Vec<f64> = Vec::new();

    // x axis
    line.resize(nx, 0.0);
    out_line.resize(nx, 0.0);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                line[x] = g[linear_index(dims, x, y, z)];
            }
            edt_1d(&line, spacing[0], &mut out_line);
            for x in 0..nx {
                g[linear_index(dims, x, y, z)] = out_line[x];
            }
        }
    }
    // y axis
    line.resize(ny, 0.0);
    out_line.resize(ny, 0.0);
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                line[y] = g[linear_index(dims, x, y, z)];
            }
            edt_1d(&line[..ny], spacing[1], &mut out_line[..ny]);
            for y in 0..ny {
                g[linear_index(dims, x, y, z)] = out_line[y];
            }
        }
    }
    // z axis
    line.resize(nz, 0.0);
    out_line.resize(nz, 0.0);
    for y in 0..ny {
        for x in 0..nx {
            for z in 0..nz {
                line[z] = g[linear_index(dims, x, y, z)];
            }
            edt_1d(&line[..nz], spacing[2], &mut out_line[..nz]);
            for z in 0..nz {
                g[linear_index(dims, x, y, z)] = out_line[z];
            }
        }
    }
    g
}

/// Average distance (mm) from predicted boundary voxels to the nearest
/// ground-truth boundary voxel. Directional (predicted toward truth).
pub fn mean_surface_distance(pred: &Mask, gt: &Mask, spacing: Spacing) -> Result<f64> {
    if pred.dims != gt.dims {
        return Err(Error::Shape(format!("mask dims {:?} vs {:?}", pred.dims, gt.dims)));
    }
    let pb = boundary_voxels(pred);
    let gb = boundary_voxels(gt);
    if pb.is_empty() || gb.is_empty() {
        return Err(Error::Shape("surface distance needs two non-empty masks".into()));
    }
    let field = distance_field_sq(gt.dims, spacing, &gb);
    let sum: f64 = pb
        .iter()
        .map(|&[x, y, z]| field[linear_index(gt.dims, x, y, z)].sqrt())
        .sum();
    Ok(sum / pb.len() as f64)
}

/// Symmetric variant: mean of the two directional distances.
pub fn symmetric_surface_distance(a: &Mask, b: &Mask, spacing: Spacing) -> Result<f64> {
    Ok(0.5 * (mean_surface_distance(a, b, spacing)? + mean_surface_distance(b, a, spacing)?))
}

/// Outcome of segmenting one region of one volume.
#[derive(Debug, Clone)]
pub struct RegionResult {
    pub region: u8,
    pub dice: f64,
    /// Undefined (None) when the region failed.
    pub mean_surface_distance: Option<f64>,
    pub failed: bool,
}

impl RegionResult {
    pub fn failure(region: u8) -> RegionResult {
        RegionResult { region, dice: 0.0, mean_surface_distance: None, failed: true }
    }
}

/// Aggregate over many region results.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub total: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Mean Dice with failures contributing 0.
    pub mean_dice: f64,
    /// Mean Dice over successful regions only.
    pub mean_dice_success: Option<f64>,
    /// Mean surface distance over successful regions (failures excluded).
    pub mean_distance: Option<f64>,
}

pub fn summarize(results: &[RegionResult]) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::Config("nothing to summarise".into()));
    }
    let total = results.len();
    let failures = results.iter().filter(|r| r.failed).count();
    let mean_dice = results.iter().map(|r| if r.failed { 0.0 } else { r.dice }).sum::<f64>()
        / total as f64;
    let ok: Vec<&RegionResult> = results.iter().filter(|r| !r.failed).collect();
    let mean_dice_success = if ok.is_empty() {
        None
    } else {
        Some(ok.iter().map(|r| r.dice).sum::<f64>() / ok.len() as f64)
    };
    let dists: Vec<f64> = ok.iter().filter_map(|r| r.mean_surface_distance).collect();
    let mean_distance = if dists.is_empty() {
        None
    } else {
        Some(dists.iter().sum::<f64>() / dists.len() as f64)
    };
    Ok(Summary {
        total,
        failures,
        failure_rate: failures as f64 / total as f64,
        mean_dice,
        mean_dice_success,
        mean_distance,
    })
}

/// Histogram of Dice values in right-exclusive bins of `bin_width` (the
/// last bin is right-inclusive so 1.0 lands in it).
pub fn dice_histogram(dices: &[f64], bin_width: f64) -> Result<Vec<usize>> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::Config("bin width must lie in (0, 1]".into()));
    }
    let nbins = (1.0 / bin_width).round() as usize;
    let mut bins = vec![0usize; nbins];
    for &d in dices {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::Config(format!("dice {d} outside [0, 1]")));
        }
        let b = ((d / bin_width).floor() as usize).min(nbins - 1);
        bins[b] += 1;
    }
    Ok(bins)
}
