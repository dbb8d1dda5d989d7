//! One-pass full-volume evaluation producing per-voxel class scores and
//! features, equal (within float tolerance) to sliding-window inference.
//!
//! Convolution and pooling layers run directly on the full extent; dense
//! layers become convolutions whose kernel is the conv stack's final patch
//! extent. Pooling strides are covered by shift-and-stitch: the post-pool
//! network is evaluated at every stride offset and the outputs interleaved
//! so each interior voxel is produced exactly once.
//!
//! 2D mode evaluates axial slices independently; 2.5D mode (three plane
//! channels sliding along different volume axes) cannot be collapsed into
//! one convolution pass across the nonlinearities, so it runs the patch
//! network on per-slice batches of gathered patches instead.

use crate::net::{argmax_row, conv, patch_batch, BatchTensor, LayerParams, Network};
use crate::patch::{extract_patch, margin, Mode};
use crate::volume::{linear_index, LabelVolume, Volume};
use crate::{Error, Result};

/// Per-voxel outputs over the valid interior of a volume.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    /// First interior voxel (x, y, z).
    pub origin: [usize; 3],
    /// Interior extent (x, y, z).
    pub dims: [usize; 3],
    pub num_classes: usize,
    pub feature_dim: usize,
    /// `[voxel][class]`, voxels in x-fastest interior scan order.
    pub scores: Vec<f32>,
    /// `[voxel][feature]`, same voxel order; present when requested.
    pub features: Option<Vec<f32>>,
}

impl DenseOutput {
    /// Interior linear index of a volume coordinate, if inside.
    pub fn interior_index(&self, x: usize, y: usize, z: usize) -> Option<usize> {
        let [ox, oy, oz] = self.origin;
        let [dx, dy, dz] = self.dims;
        if x < ox || y < oy || z < oz {
            return None;
        }
        let (ix, iy, iz) = (x - ox, y - oy, z - oz);
        if ix >= dx || iy >= dy || iz >= dz {
            return None;
        }
        Some(ix + dx * (iy + dy * iz))
    }

    pub fn voxel_scores(&self, idx: usize) -> &[f32] {
        &self.scores[idx * self.num_classes..(idx + 1) * self.num_classes]
    }

    pub fn voxel_features(&self, idx: usize) -> Option<&[f32]> {
        self.features
            .as_ref()
            .map(|f| &f[idx * self.feature_dim..(idx + 1) * self.feature_dim])
    }
}

/// One z-slab of dense outputs, handed to streaming consumers.
pub struct Slab<'a> {
    pub z: usize,
    /// First interior voxel in x and y.
    pub origin_xy: [usize; 2],
    /// Interior extent in x and y.
    pub dims_xy: [usize; 2],
    pub num_classes: usize,
    pub feature_dim: usize,
    /// `[y][x][class]` over the slab interior.
    pub scores: &'a [f32],
    /// `[y][x][feature]`, present when features were requested.
    pub features: Option<&'a [f32]>,
}

fn check_compatible(net: &Network<f32>, mode: Mode) -> Result<()> {
    if net.arch.rank != mode.rank() || net.arch.in_channels != mode.channels() {
        return Err(Error::Config(format!(
            "network (rank {}, {} channels) does not accept {mode} patches",
            net.arch.rank, net.arch.in_channels
        )));
    }
    Ok(())
}

fn interior(net: &Network<f32>, v: &Volume, mode: Mode) -> Result<([usize; 3], [usize; 3])> {
    let p = net.arch.input_size;
    let m = margin(p);
    let [nx, ny, nz] = v.dims;
    let ok = match mode {
        Mode::TwoD => nx >= p && ny >= p,
        _ => nx >= p && ny >= p && nz >= p,
    };
    if !ok {
        return Err(Error::Shape(format!(
            "volume {:?} is smaller than the receptive field {p} for mode {mode}",
            v.dims
        )));
    }
    Ok(match mode {
        Mode::TwoD => ([m, m, 0], [nx - 2 * m, ny - 2 * m, nz]),
        _ => ([m, m, m], [nx - 2 * m, ny - 2 * m, nz - 2 * m]),
    })
}

/// A partially-evaluated activation map plus the affine map from its output
/// grid back to input-window start coordinates (tensor axis order z, y, x).
struct Branch {
    offset: [usize; 3],
    stride: [usize; 3],
    t: BatchTensor<f32>,
}

fn crop_tensor(t: &BatchTensor<f32>, start: [usize; 3]) -> BatchTensor<f32> {
    let sp = t.spatial;
    let new = [sp[0] - start[0], sp[1] - start[1], sp[2] - start[2]];
    let mut out = BatchTensor::zeros(1, t.channels, new);
    for c in 0..t.channels {
        for z in 0..new[0] {
            for y in 0..new[1] {
                let src = c * sp[0] * sp[1] * sp[2]
                    + (z + start[0]) * sp[1] * sp[2]
                    + (y + start[1]) * sp[2]
                    + start[2];
                let dst = c * new[0] * new[1] * new[2] + z * new[1] * new[2] + y * new[2];
                out.data[dst..dst + new[2]].copy_from_slice(&t.data[src..src + new[2]]);
            }
        }
    }
    out
}

fn prelu_inplace(t: &mut BatchTensor<f32>, alpha: &[f32]) {
    let plane = t.spatial_len();
    for c in 0..t.channels {
        let a = alpha[c];
        for v in &mut t.data[c * plane..(c + 1) * plane] {
            if *v < 0.0 {
                *v *= a;
            }
        }
    }
}

/// Run the convolutionalized network over one full-extent input tensor.
/// Returns per-branch score maps and (optionally) feature maps.
fn run_dense_stack(
    net: &Network<f32>,
    input: BatchTensor<f32>,
    want_features: bool,
) -> Vec<(Branch, Option<BatchTensor<f32>>)> {
    let rank = net.arch.rank;
    // conv-stack extent a patch would have at each dense layer
    let patch_side = net.arch.final_spatial();
    let feature_layer = net.feature_layer();

    let mut branches = vec![Branch { offset: [0; 3], stride: [1; 3], t: input }];
    let mut feature_maps: Vec<Option<BatchTensor<f32>>> = vec![None];
    let mut first_dense_done = false;

    for (i, layer) in net.layers.iter().enumerate() {
        match layer {
            LayerParams::Conv { shape, kernel, bias, alpha } => {
                for b in branches.iter_mut() {
                    let mut out = conv::conv_forward(&b.t, kernel, bias, shape);
                    prelu_inplace(&mut out, alpha);
                    b.t = out;
                }
            }
            LayerParams::Pool { size, stride } => {
                let (w, s) = if rank == 3 {
                    ([*size; 3], [*stride; 3])
                } else {
                    ([1, *size, *size], [1, *stride, *stride])
                };
                let mut next = Vec::new();
                let mut next_feats = Vec::new();
                for (b, f) in branches.iter().zip(&feature_maps) {
                    for oz in 0..s[0] {
                        for oy in 0..s[1] {
                            for ox in 0..s[2] {
                                let off = [oz, oy, ox];
                                if (0..3).any(|a| b.t.spatial[a] < off[a] + w[a]) {
                                    continue;
                                }
                                let cropped = crop_tensor(&b.t, off);
                                let pooled = conv::max_pool_forward(&cropped, w, s);
                                next.push(Branch {
                                    offset: [
                                        b.offset[0] + oz * b.stride[0],
                                        b.offset[1] + oy * b.stride[1],
                                        b.offset[2] + ox * b.stride[2],
                                    ],
                                    stride: [
                                        b.stride[0] * s[0],
                                        b.stride[1] * s[1],
                                        b.stride[2] * s[2],
                                    ],
                                    t: pooled.output,
                                });
                                next_feats.push(f.clone());
                            }
                        }
                    }
                }
                branches = next;
                feature_maps = next_feats;
            }
            LayerParams::Dense { in_dim, out_dim, weight, bias, alpha } => {
                // a dense layer is a convolution over the remaining extent
                let kdims = if first_dense_done {
                    [1, 1, 1]
                } else if rank == 3 {
                    [patch_side; 3]
                } else {
                    [1, patch_side, patch_side]
                };
                for (b, f) in branches.iter_mut().zip(feature_maps.iter_mut()) {
                    let in_ch = *in_dim / (kdims[0] * kdims[1] * kdims[2]);
                    debug_assert_eq!(in_ch, b.t.channels);
                    let shape = conv::ConvShape { in_ch, out_ch: *out_dim, kdims };
                    let mut out = conv::conv_forward(&b.t, weight, bias, &shape);
                    if let Some(a) = alpha {
                        prelu_inplace(&mut out, a);
                    }
                    if want_features && i == feature_layer {
                        *f = Some(out.clone());
                    }
                    b.t = out;
                }
                first_dense_done = true;
            }
        }
    }
    branches.into_iter().zip(feature_maps).collect()
}

/// Scatter branch outputs into `[voxel][channel]` interior fields.
///
/// `to_voxel` maps a window-start coordinate (tensor z, y, x) to the
/// interior index, or `None` for outputs whose nominal patch would overflow
/// the volume. Those exist when pooling drops a window: the network's
/// effective receptive field is then smaller than the patch side, so the
/// dense grid extends past the last valid patch position.
fn scatter_branch(
    field: &mut [f32],
    channels: usize,
    branch_t: &BatchTensor<f32>,
    offset: [usize; 3],
    stride: [usize; 3],
    mut to_voxel: impl FnMut([usize; 3]) -> Option<usize>,
) {
    let sp = branch_t.spatial;
    let plane = branch_t.spatial_len();
    for z in 0..sp[0] {
        for y in 0..sp[1] {
            for x in 0..sp[2] {
                let start = [
                    offset[0] + z * stride[0],
                    offset[1] + y * stride[1],
                    offset[2] + x * stride[2],
                ];
                let Some(idx) = to_voxel(start) else { continue };
                let pos = z * sp[1] * sp[2] + y * sp[2] + x;
                for c in 0..channels {
                    field[idx * channels + c] = branch_t.data[c * plane + pos];
                }
            }
        }
    }
}

fn slice_tensor(v: &Volume, z: usize) -> BatchTensor<f32> {
    let [nx, ny, _] = v.dims;
    let plane = nx * ny;
    BatchTensor {
        batch: 1,
        channels: 1,
        spatial: [1, ny, nx],
        data: v.data[z * plane..(z + 1) * plane].to_vec(),
    }
}

/// Full-volume evaluation with streaming delivery of z-slabs.
///
/// The sink sees every interior z exactly once, in ascending order. For 2D
/// and 2.5D modes each slab is computed independently (bounded memory); 3D
/// runs one volumetric pass and then emits its slices.
pub fn dense_forward_streaming<F>(
    net: &Network<f32>,
    v: &Volume,
    mode: Mode,
    want_features: bool,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(&Slab<'_>) -> Result<()>,
{
    check_compatible(net, mode)?;
    let (origin, dims) = interior(net, v, mode)?;
    let nc = net.arch.num_classes;
    let fd = net.arch.feature_dim();
    let m = margin(net.arch.input_size);
    let plane_len = dims[0] * dims[1];

    match mode {
        Mode::TwoD => {
            let mut scores = vec![0f32; plane_len * nc];
            let mut feats = if want_features { vec![0f32; plane_len * fd] } else { Vec::new() };
            for z in 0..v.dims[2] {
                let input = slice_tensor(v, z);
                let outputs = run_dense_stack(net, input, want_features);
                let to_voxel = |s: [usize; 3]| {
                    let (ix, iy) = (s[2] + m - origin[0], s[1] + m - origin[1]);
                    (ix < dims[0] && iy < dims[1]).then_some(ix + dims[0] * iy)
                };
                for (branch, fmap) in &outputs {
                    scatter_branch(&mut scores, nc, &branch.t, branch.offset, branch.stride, to_voxel);
                    if let Some(fmap) = fmap {
                        scatter_branch(&mut feats, fd, fmap, branch.offset, branch.stride, to_voxel);
                    }
                }
                sink(&Slab {
                    z,
                    origin_xy: [origin[0], origin[1]],
                    dims_xy: [dims[0], dims[1]],
                    num_classes: nc,
                    feature_dim: fd,
                    scores: &scores,
                    features: want_features.then_some(feats.as_slice()),
                })?;
            }
        }
        Mode::TwoPointFiveD => {
            let mut scores = vec![0f32; plane_len * nc];
            let mut feats = if want_features { vec![0f32; plane_len * fd] } else { Vec::new() };
            let p = net.arch.input_size;
            for z in origin[2]..origin[2] + dims[2] {
                let mut centers = Vec::with_capacity(plane_len);
                for y in origin[1]..origin[1] + dims[1] {
                    for x in origin[0]..origin[0] + dims[0] {
                        centers.push([x, y, z]);
                    }
                }
                for (chunk_idx, chunk) in centers.chunks(256).enumerate() {
                    let patches: Vec<_> = chunk
                        .iter()
                        .map(|&c| extract_patch(v, c, mode, p))
                        .collect::<Result<_>>()?;
                    let input = patch_batch(mode, p, patches.iter());
                    let (s, f) = net.eval_from(0, input, want_features);
                    let base = chunk_idx * 256;
                    scores[base * nc..base * nc + s.len()].copy_from_slice(&s);
                    if let Some(f) = f {
                        feats[base * fd..base * fd + f.len()].copy_from_slice(&f);
                    }
                }
                sink(&Slab {
                    z,
                    origin_xy: [origin[0], origin[1]],
                    dims_xy: [dims[0], dims[1]],
                    num_classes: nc,
                    feature_dim: fd,
                    scores: &scores,
                    features: want_features.then_some(feats.as_slice()),
                })?;
            }
        }
        Mode::ThreeD => {
            let input = BatchTensor {
                batch: 1,
                channels: 1,
                spatial: [v.dims[2], v.dims[1], v.dims[0]],
                data: v.data.clone(),
            };
            let outputs = run_dense_stack(net, input, want_features);
            let voxels = plane_len * dims[2];
            let mut scores = vec![0f32; voxels * nc];
            let mut feats = if want_features { vec![0f32; voxels * fd] } else { Vec::new() };
            let to_voxel = |s: [usize; 3]| {
                let (ix, iy, iz) =
                    (s[2] + m - origin[0], s[1] + m - origin[1], s[0] + m - origin[2]);
                (ix < dims[0] && iy < dims[1] && iz < dims[2])
                    .then_some(ix + dims[0] * (iy + dims[1] * iz))
            };
            for (branch, fmap) in &outputs {
                scatter_branch(&mut scores, nc, &branch.t, branch.offset, branch.stride, to_voxel);
                if let Some(fmap) = fmap {
                    scatter_branch(&mut feats, fd, fmap, branch.offset, branch.stride, to_voxel);
                }
            }
            for iz in 0..dims[2] {
                let s = &scores[iz * plane_len * nc..(iz + 1) * plane_len * nc];
                let f = want_features
                    .then(|| &feats[iz * plane_len * fd..(iz + 1) * plane_len * fd]);
                sink(&Slab {
                    z: origin[2] + iz,
                    origin_xy: [origin[0], origin[1]],
                    dims_xy: [dims[0], dims[1]],
                    num_classes: nc,
                    feature_dim: fd,
                    scores: s,
                    features: f,
                })?;
            }
        }
    }
    Ok(())
}

/// One-pass evaluation, fully materialised.
pub fn dense_forward(
    net: &Network<f32>,
    v: &Volume,
    mode: Mode,
    want_features: bool,
) -> Result<DenseOutput> {
    check_compatible(net, mode)?;
    let (origin, dims) = interior(net, v, mode)?;
    let nc = net.arch.num_classes;
    let fd = net.arch.feature_dim();
    let voxels = dims[0] * dims[1] * dims[2];
    let plane_len = dims[0] * dims[1];
    let mut scores = vec![0f32; voxels * nc];
    let mut features = want_features.then(|| vec![0f32; voxels * fd]);

    dense_forward_streaming(net, v, mode, want_features, |slab| {
        let iz = slab.z - origin[2];
        scores[iz * plane_len * nc..(iz + 1) * plane_len * nc].copy_from_slice(slab.scores);
        if let (Some(dst), Some(src)) = (features.as_mut(), slab.features) {
            dst[iz * plane_len * fd..(iz + 1) * plane_len * fd].copy_from_slice(src);
        }
        Ok(())
    })?;

    Ok(DenseOutput { origin, dims, num_classes: nc, feature_dim: fd, scores, features })
}

/// Voxel-wise classification: per-voxel argmax over the class scores, with
/// margin voxels reported as background. Ties break toward the lower class.
pub fn semantic_segment(net: &Network<f32>, v: &Volume, mode: Mode) -> Result<LabelVolume> {
    let mut out = LabelVolume::zeros(v.dims);
    out.spacing = v.spacing;
    dense_forward_streaming(net, v, mode, false, |slab| {
        let nc = slab.num_classes;
        let [ox, oy] = slab.origin_xy;
        let [dx, dy] = slab.dims_xy;
        for iy in 0..dy {
            for ix in 0..dx {
                let row = &slab.scores[(iy * dx + ix) * nc..][..nc];
                let label = argmax_row(row) as u8;
                out.labels[linear_index(v.dims, ox + ix, oy + iy, slab.z)] = label;
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Dump interior features to a binary `HCFD` file:
/// magic, version u32, origin 3xu32, dims 3xu32, d u32, then f32 features
/// voxel-major in interior scan order.
pub fn save_feature_dump(out: &DenseOutput, path: &std::path::Path) -> Result<()> {
    let features = out
        .features
        .as_ref()
        .ok_or_else(|| Error::Config("dense output carries no features".into()))?;
    let mut w = Vec::with_capacity(features.len() * 4 + 64);
    w.extend_from_slice(b"HCFD");
    w.extend_from_slice(&1u32.to_le_bytes());
    for v in out.origin.iter().chain(out.dims.iter()) {
        w.extend_from_slice(&(*v as u32).to_le_bytes());
    }
    w.extend_from_slice(&(out.feature_dim as u32).to_le_bytes());
    for f in features {
        w.extend_from_slice(&f.to_le_bytes());
    }
    std::fs::write(path, w).map_err(|e| Error::io(path, e))
}
