//! Valid convolution and max pooling over batched tensors.
//!
//! Convolutions run as patch-matrix (im2col) multiplications in
//! position-chunks to bound scratch memory; a direct-loop kernel is kept as
//! the correctness oracle. A single rank-agnostic implementation serves 2D
//! and 3D by letting the leading spatial axis degenerate to 1.

use super::tensor::{BatchTensor, Scalar};

/// Scratch budget for one im2col chunk, in scalars.
const COL_CHUNK_SCALARS: usize = 1 << 22;

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    /// Kernel extent per spatial axis `[kz, ky, kx]` (kz = 1 for rank 2).
    pub kdims: [usize; 3],
}

impl ConvShape {
    pub fn kernel_volume(&self) -> usize {
        self.kdims[0] * self.kdims[1] * self.kdims[2]
    }

    /// Column width of the patch matrix.
    pub fn col_width(&self) -> usize {
        self.in_ch * self.kernel_volume()
    }

    pub fn out_spatial(&self, in_spatial: [usize; 3]) -> [usize; 3] {
        [
            in_spatial[0] - self.kdims[0] + 1,
            in_spatial[1] - self.kdims[1] + 1,
            in_spatial[2] - self.kdims[2] + 1,
        ]
    }
}

#[inline]
fn decode3(i: usize, dims: [usize; 3]) -> [usize; 3] {
    let x = i % dims[2];
    let y = (i / dims[2]) % dims[1];
    let z = i / (dims[2] * dims[1]);
    [z, y, x]
}

/// Fill `col` (rows `pos_range`, width `col_width`) with input windows.
fn fill_col<T: Scalar>(
    col: &mut [T],
    sample: &[T],
    in_spatial: [usize; 3],
    out_spatial: [usize; 3],
    shape: &ConvShape,
    pos_start: usize,
    rows: usize,
) {
    let [kz, ky, kx] = shape.kdims;
    let in_plane = in_spatial[1] * in_spatial[2];
    let in_chan = in_spatial[0] * in_plane;
    let width = shape.col_width();
    for r in 0..rows {
        let [oz, oy, ox] = decode3(pos_start + r, out_spatial);
        let row = &mut col[r * width..(r + 1) * width];
        let mut w = 0;
        for ic in 0..shape.in_ch {
            let chan = &sample[ic * in_chan..(ic + 1) * in_chan];
            for dz in 0..kz {
                for dy in 0..ky {
                    let base = (oz + dz) * in_plane + (oy + dy) * in_spatial[2] + ox;
                    // a memcpy call costs more than it moves for tiny kernels
                    if kx <= 4 {
                        for i in 0..kx {
                            row[w + i] = chan[base + i];
                        }
                    } else {
                        row[w..w + kx].copy_from_slice(&chan[base..base + kx]);
                    }
                    w += kx;
                }
            }
        }
    }
}

/// `out[b][oc][pos] = sum over window of kernel * input + bias[oc]`.
///
/// `kernel` is laid out `[oc][ic][kz][ky][kx]`.
pub fn conv_forward<T: Scalar>(
    input: &BatchTensor<T>,
    kernel: &[T],
    bias: &[T],
    shape: &ConvShape,
) -> BatchTensor<T> {
    let out_spatial = shape.out_spatial(input.spatial);
    let mut out = BatchTensor::zeros(input.batch, shape.out_ch, out_spatial);
    let positions = out_spatial[0] * out_spatial[1] * out_spatial[2];
    let width = shape.col_width();
    let chunk_rows = (COL_CHUNK_SCALARS / width).clamp(1, positions.max(1));
    let mut col = vec![T::zero(); chunk_rows * width];

    for b in 0..input.batch {
        let sample = input.sample(b);
        let out_sample = out.sample_mut(b);
        let mut pos = 0;
        while pos < positions {
            let rows = chunk_rows.min(positions - pos);
            fill_col(&mut col, sample, input.spatial, out_spatial, shape, pos, rows);
            // C[pos, oc] lands at out_sample[oc * positions + (pos_start + pos)]
            T::gemm(
                rows,
                width,
                shape.out_ch,
                T::one(),
                &col,
                width as isize,
                1,
                kernel,
                1,
                width as isize,
                T::zero(),
                &mut out_sample[pos..],
                1,
                positions as isize,
            );
            pos += rows;
        }
        for oc in 0..shape.out_ch {
            let plane = &mut out_sample[oc * positions..(oc + 1) * positions];
            for v in plane.iter_mut() {
                *v += bias[oc];
            }
        }
    }
    out
}

/// Gradients of a convolution layer.
pub struct ConvGrads<T> {
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
    pub input: BatchTensor<T>,
}

/// Backward pass: gradients for kernel, bias and input given the upstream
/// gradient on the (pre-activation) outputs.
pub fn conv_backward<T: Scalar>(
    input: &BatchTensor<T>,
    grad_out: &BatchTensor<T>,
    kernel: &[T],
    shape: &ConvShape,
) -> ConvGrads<T> {
    let out_spatial = grad_out.spatial;
    let positions = out_spatial[0] * out_spatial[1] * out_spatial[2];
    let width = shape.col_width();
    let mut grad_kernel = vec![T::zero(); kernel.len()];
    let mut grad_bias = vec![T::zero(); shape.out_ch];
    let mut grad_input = BatchTensor::zeros(input.batch, input.channels, input.spatial);

    let chunk_rows = (COL_CHUNK_SCALARS / width).clamp(1, positions.max(1));
    let mut col = vec![T::zero(); chunk_rows * width];
    let mut grad_col = vec![T::zero(); chunk_rows * width];

    let [kz, ky, kx] = shape.kdims;
    let in_plane = input.spatial[1] * input.spatial[2];
    let in_chan = input.spatial[0] * in_plane;

    for b in 0..input.batch {
        let sample = input.sample(b);
        let g_sample = grad_out.sample(b);
        for oc in 0..shape.out_ch {
            let plane = &g_sample[oc * positions..(oc + 1) * positions];
            grad_bias[oc] += plane.iter().copied().sum();
        }

        let gi_sample = grad_input.sample_mut(b);
        let mut pos = 0;
        while pos < positions {
            let rows = chunk_rows.min(positions - pos);
            fill_col(&mut col, sample, input.spatial, out_spatial, shape, pos, rows);
            // grad_kernel[oc][kidx] += sum over pos of col[pos][kidx] * g[pos][oc]
            T::gemm(
                width,
                rows,
                shape.out_ch,
                T::one(),
                &col,
                1,
                width as isize,
                &g_sample[pos..],
                1,
                positions as isize,
                T::one(),
                &mut grad_kernel,
                1,
                width as isize,
            );
            // grad_col[pos][kidx] = sum over oc of g[pos][oc] * kernel[oc][kidx]
            T::gemm(
                rows,
                shape.out_ch,
                width,
                T::one(),
                &g_sample[pos..],
                1,
                positions as isize,
                kernel,
                width as isize,
                1,
                T::zero(),
                &mut grad_col,
                width as isize,
                1,
            );
            // scatter the column gradient back onto the input grid
            for r in 0..rows {
                let [oz, oy, ox] = decode3(pos + r, out_spatial);
                let row = &grad_col[r * width..(r + 1) * width];
                let mut w = 0;
                for ic in 0..shape.in_ch {
                    let chan = &mut gi_sample[ic * in_chan..(ic + 1) * in_chan];
                    for dz in 0..kz {
                        for dy in 0..ky {
                            let base =
                                (oz + dz) * in_plane + (oy + dy) * input.spatial[2] + ox;
                            for dx in 0..kx {
                                chan[base + dx] += row[w + dx];
                            }
                            w += kx;
                        }
                    }
                }
            }
            pos += rows;
        }
    }
    ConvGrads { kernel: grad_kernel, bias: grad_bias, input: grad_input }
}

/// Direct-loop convolution, the correctness oracle for the gemm path.
pub fn conv_forward_direct<T: Scalar>(
    input: &BatchTensor<T>,
    kernel: &[T],
    bias: &[T],
    shape: &ConvShape,
) -> BatchTensor<T> {
    let out_spatial = shape.out_spatial(input.spatial);
    let mut out = BatchTensor::zeros(input.batch, shape.out_ch, out_spatial);
    let positions = out_spatial[0] * out_spatial[1] * out_spatial[2];
    let kvol = shape.kernel_volume();
    let in_plane = input.spatial[1] * input.spatial[2];
    let in_chan = input.spatial[0] * in_plane;
    let [kz, ky, kx] = shape.kdims;

    for b in 0..input.batch {
        let sample = input.sample(b);
        let out_sample = out.sample_mut(b);
        for oc in 0..shape.out_ch {
            for p in 0..positions {
                let [oz, oy, ox] = decode3(p, out_spatial);
                let mut acc = bias[oc];
                for ic in 0..shape.in_ch {
                    for dz in 0..kz {
                        for dy in 0..ky {
                            for dx in 0..kx {
                                let iv = sample[ic * in_chan
                                    + (oz + dz) * in_plane
                                    + (oy + dy) * input.spatial[2]
                                    + (ox + dx)];
                                let kv = kernel[oc * shape.in_ch * kvol
                                    + ic * kvol
                                    + dz * ky * kx
                                    + dy * kx
                                    + dx];
                                acc = acc + iv * kv;
                            }
                        }
                    }
                }
                out_sample[oc * positions + p] = acc;
            }
        }
    }
    out
}

/// A fully materialised patch matrix, kept around for repeated products
/// against single kernel rows (numerical checks lean on the fact that a
/// convolution is linear in its kernel).
pub struct PatchMatrix<T> {
    pub batch: usize,
    pub positions: usize,
    pub width: usize,
    data: Vec<T>,
}

pub fn build_patch_matrix<T: Scalar>(
    input: &BatchTensor<T>,
    shape: &ConvShape,
) -> PatchMatrix<T> {
    let out_spatial = shape.out_spatial(input.spatial);
    let positions = out_spatial[0] * out_spatial[1] * out_spatial[2];
    let width = shape.col_width();
    let mut data = vec![T::zero(); input.batch * positions * width];
    for b in 0..input.batch {
        fill_col(
            &mut data[b * positions * width..(b + 1) * positions * width],
            input.sample(b),
            input.spatial,
            out_spatial,
            shape,
            0,
            positions,
        );
    }
    PatchMatrix { batch: input.batch, positions, width, data }
}

impl<T: Scalar> PatchMatrix<T> {
    /// `out[pos] += scale * column_k[pos]` for one sample: the change a
    /// kernel-element perturbation of size `scale` induces on that output
    /// channel.
    pub fn axpy_column(&self, b: usize, k: usize, scale: T, out: &mut [T]) {
        let base = b * self.positions * self.width;
        for pos in 0..self.positions {
            out[pos] += scale * self.data[base + pos * self.width + k];
        }
    }
}

/// Max pooling output with cached argmax positions for backprop.
pub struct PoolOutput<T> {
    pub output: BatchTensor<T>,
    /// For each output element, the spatial linear index (within its
    /// channel plane) of the input element that won the window.
    pub argmax: Vec<u32>,
}

/// Max-pool with window `wdims` and stride `sdims` per axis; windows that do
/// not fit are dropped. Ties go to the first element in scan order.
pub fn max_pool_forward<T: Scalar>(
    input: &BatchTensor<T>,
    wdims: [usize; 3],
    sdims: [usize; 3],
) -> PoolOutput<T> {
    let out_spatial = [
        (input.spatial[0] - wdims[0]) / sdims[0] + 1,
        (input.spatial[1] - wdims[1]) / sdims[1] + 1,
        (input.spatial[2] - wdims[2]) / sdims[2] + 1,
    ];
    let mut out = BatchTensor::zeros(input.batch, input.channels, out_spatial);
    let positions = out_spatial[0] * out_spatial[1] * out_spatial[2];
    let mut argmax = vec![0u32; input.batch * input.channels * positions];
    let in_plane = input.spatial[1] * input.spatial[2];
    let in_chan = input.spatial[0] * in_plane;

    for b in 0..input.batch {
        let sample = input.sample(b);
        let out_sample = out.sample_mut(b);
        for c in 0..input.channels {
            let chan = &sample[c * in_chan..(c + 1) * in_chan];
            let amax = &mut argmax[(b * input.channels + c) * positions..][..positions];
            for p in 0..positions {
                let [oz, oy, ox] = decode3(p, out_spatial);
                let (z0, y0, x0) = (oz * sdims[0], oy * sdims[1], ox * sdims[2]);
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for dz in 0..wdims[0] {
                    for dy in 0..wdims[1] {
                        for dx in 0..wdims[2] {
                            let idx = (z0 + dz) * in_plane
                                + (y0 + dy) * input.spatial[2]
                                + (x0 + dx);
                            let v = chan[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                }
                out_sample[c * positions + p] = best;
                amax[p] = best_idx as u32;
            }
        }
    }
    PoolOutput { output: out, argmax }
}

/// Route the upstream gradient to the argmax positions only.
pub fn max_pool_backward<T: Scalar>(
    grad_out: &BatchTensor<T>,
    argmax: &[u32],
    in_channels: usize,
    in_spatial: [usize; 3],
) -> BatchTensor<T> {
    let mut grad_input = BatchTensor::zeros(grad_out.batch, in_channels, in_spatial);
    let positions = grad_out.spatial_len();
    let in_chan = in_spatial[0] * in_spatial[1] * in_spatial[2];
    for b in 0..grad_out.batch {
        let g_sample = grad_out.sample(b);
        let gi_sample = grad_input.sample_mut(b);
        for c in 0..in_channels {
            let amax = &argmax[(b * in_channels + c) * positions..][..positions];
            let gi_chan = &mut gi_sample[c * in_chan..(c + 1) * in_chan];
            for p in 0..positions {
                gi_chan[amax[p] as usize] += g_sample[c * positions + p];
            }
        }
    }
    grad_input
}
