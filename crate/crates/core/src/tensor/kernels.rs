//! Raw forward/backward kernels on flat row-major buffers.
//!
//! These are shared by the tape (which records them) and by the
//! inference-only paths used during rollouts.

use crate::error::{Error, Result};

/// Layout of an image batch `N x H x W x C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageDims {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageDims {
    /// Accepts `HxWxC` (batch of one) or `NxHxWxC`.
    pub fn from_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [height, width, channels] => Ok(ImageDims {
                batch: 1,
                height,
                width,
                channels,
            }),
            [batch, height, width, channels] => Ok(ImageDims {
                batch,
                height,
                width,
                channels,
            }),
            _ => Err(Error::config(format!(
                "expected an HxWxC or NxHxWxC image, got shape {shape:?}"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.batch * self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape with the same rank convention as `like`.
    pub fn shape_like(&self, like: &[usize]) -> Vec<usize> {
        if like.len() == 3 {
            vec![self.height, self.width, self.channels]
        } else {
            vec![self.batch, self.height, self.width, self.channels]
        }
    }
}

/// Kernel layout `KH x KW x Cin x Cout`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelDims {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl KernelDims {
    pub fn from_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [height, width, in_channels, out_channels] => Ok(KernelDims {
                height,
                width,
                in_channels,
                out_channels,
            }),
            _ => Err(Error::config(format!(
                "expected a KHxKWxCinxCout kernel, got shape {shape:?}"
            ))),
        }
    }
}

/// Output dims of a stride-1, unpadded convolution.
pub fn conv2d_dims(input: ImageDims, kernel: KernelDims) -> Result<ImageDims> {
    if input.channels != kernel.in_channels {
        return Err(Error::config(format!(
            "conv input has {} channels, kernel expects {}",
            input.channels, kernel.in_channels
        )));
    }
    if input.height < kernel.height || input.width < kernel.width {
        return Err(Error::config(format!(
            "conv input {}x{} smaller than kernel {}x{}",
            input.height, input.width, kernel.height, kernel.width
        )));
    }
    Ok(ImageDims {
        batch: input.batch,
        height: input.height - kernel.height + 1,
        width: input.width - kernel.width + 1,
        channels: kernel.out_channels,
    })
}

/// Valid cross-correlation, stride 1.
pub fn conv2d(
    input: &[f64],
    in_dims: ImageDims,
    kernel: &[f64],
    k_dims: KernelDims,
    bias: Option<&[f64]>,
) -> Result<(Vec<f64>, ImageDims)> {
    let out_dims = conv2d_dims(in_dims, k_dims)?;
    if let Some(b) = bias {
        if b.len() != k_dims.out_channels {
            return Err(Error::config(format!(
                "conv bias has {} entries, expected {}",
                b.len(),
                k_dims.out_channels
            )));
        }
    }
    let cout = k_dims.out_channels;
    let cin = in_dims.channels;
    let mut out = vec![0.0; out_dims.len()];
    for n in 0..out_dims.batch {
        for i in 0..out_dims.height {
            for j in 0..out_dims.width {
                let o = ((n * out_dims.height + i) * out_dims.width + j) * cout;
                let acc = &mut out[o..o + cout];
                if let Some(b) = bias {
                    acc.copy_from_slice(b);
                }
                for di in 0..k_dims.height {
                    for dj in 0..k_dims.width {
                        let x0 = ((n * in_dims.height + i + di) * in_dims.width + j + dj) * cin;
                        let k0 = (di * k_dims.width + dj) * cin * cout;
                        for ci in 0..cin {
                            let x = input[x0 + ci];
                            if x == 0.0 {
                                continue;
                            }
                            let row = &kernel[k0 + ci * cout..k0 + (ci + 1) * cout];
                            for (a, &k) in acc.iter_mut().zip(row) {
                                *a += x * k;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((out, out_dims))
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_backward(
    input: &[f64],
    in_dims: ImageDims,
    kernel: &[f64],
    k_dims: KernelDims,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let out_dims = conv2d_dims(in_dims, k_dims).expect("dims checked in forward");
    let cout = k_dims.out_channels;
    let cin = in_dims.channels;
    let mut g_in = vec![0.0; input.len()];
    let mut g_k = vec![0.0; kernel.len()];
    let mut g_b = vec![0.0; cout];
    for n in 0..out_dims.batch {
        for i in 0..out_dims.height {
            for j in 0..out_dims.width {
                let o = ((n * out_dims.height + i) * out_dims.width + j) * cout;
                let g = &grad_out[o..o + cout];
                for (b, &v) in g_b.iter_mut().zip(g) {
                    *b += v;
                }
                for di in 0..k_dims.height {
                    for dj in 0..k_dims.width {
                        let x0 = ((n * in_dims.height + i + di) * in_dims.width + j + dj) * cin;
                        let k0 = (di * k_dims.width + dj) * cin * cout;
                        for ci in 0..cin {
                            let x = input[x0 + ci];
                            let krow = &kernel[k0 + ci * cout..k0 + (ci + 1) * cout];
                            let mut gx = 0.0;
                            for (&kv, &gv) in krow.iter().zip(g) {
                                gx += kv * gv;
                            }
                            g_in[x0 + ci] += gx;
                            if x != 0.0 {
                                let gk = &mut g_k[k0 + ci * cout..k0 + (ci + 1) * cout];
                                for (a, &gv) in gk.iter_mut().zip(g) {
                                    *a += x * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (g_in, g_k, g_b)
}

/// 2x2 max pooling with stride 2. Returns the pooled values and, for each
/// output, the flat input index it came from (first maximum in row-major
/// scan order of the window).
pub fn maxpool2(input: &[f64], dims: ImageDims) -> Result<(Vec<f64>, Vec<usize>, ImageDims)> {
    if dims.height < 2 || dims.width < 2 {
        return Err(Error::config(format!(
            "max-pool needs at least 2x2 input, got {}x{}",
            dims.height, dims.width
        )));
    }
    let out_dims = ImageDims {
        batch: dims.batch,
        height: dims.height / 2,
        width: dims.width / 2,
        channels: dims.channels,
    };
    let c = dims.channels;
    let mut out = Vec::with_capacity(out_dims.len());
    let mut argmax = Vec::with_capacity(out_dims.len());
    for n in 0..out_dims.batch {
        for i in 0..out_dims.height {
            for j in 0..out_dims.width {
                for ch in 0..c {
                    let mut best_idx = usize::MAX;
                    let mut best = f64::NEG_INFINITY;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let idx =
                                ((n * dims.height + 2 * i + di) * dims.width + 2 * j + dj) * c + ch;
                            let v = input[idx];
                            if best_idx == usize::MAX || v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    Ok((out, argmax, out_dims))
}

/// Affine map of each row: `out[r] = x[r] * W + b`, with `W` stored `n x m`.
pub fn linear(
    x: &[f64],
    rows: usize,
    n: usize,
    w: &[f64],
    m: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let mut out = vec![0.0; rows * m];
    for r in 0..rows {
        let acc = &mut out[r * m..(r + 1) * m];
        if let Some(b) = bias {
            acc.copy_from_slice(b);
        }
        for (k, &xv) in x[r * n..(r + 1) * n].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (a, &wv) in acc.iter_mut().zip(&w[k * m..(k + 1) * m]) {
                *a += xv * wv;
            }
        }
    }
    out
}

/// Gradients of [`linear`] with respect to input, weights and bias.
pub fn linear_backward(
    x: &[f64],
    rows: usize,
    n: usize,
    w: &[f64],
    m: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; rows * n];
    let mut gw = vec![0.0; n * m];
    let mut gb = vec![0.0; m];
    for r in 0..rows {
        let g = &grad_out[r * m..(r + 1) * m];
        for (b, &v) in gb.iter_mut().zip(g) {
            *b += v;
        }
        for k in 0..n {
            let wrow = &w[k * m..(k + 1) * m];
            gx[r * n + k] = wrow.iter().zip(g).map(|(a, b)| a * b).sum();
            let xv = x[r * n + k];
            if xv != 0.0 {
                for (a, &gv) in gw[k * m..(k + 1) * m].iter_mut().zip(g) {
                    *a += xv * gv;
                }
            }
        }
    }
    (gx, gw, gb)
}

/// Row-wise log-softmax over the last dimension of a `rows x k` matrix.
pub fn log_softmax(x: &[f64], rows: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * k];
    for r in 0..rows {
        let row = &x[r * k..(r + 1) * k];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (o, v) in out[r * k..(r + 1) * k].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(h: usize, w: usize, c: usize) -> ImageDims {
        ImageDims {
            batch: 1,
            height: h,
            width: w,
            channels: c,
        }
    }

    #[test]
    fn conv_of_ones_sums_each_window() {
        let input = vec![1.0; 9];
        let kernel = vec![1.0; 4];
        let kd = KernelDims {
            height: 2,
            width: 2,
            in_channels: 1,
            out_channels: 1,
        };
        let (out, od) = conv2d(&input, dims(3, 3, 1), &kernel, kd, None).unwrap();
        assert_eq!((od.height, od.width, od.channels), (2, 2, 1));
        assert_eq!(out, vec![4.0; 4]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let kd = KernelDims {
            height: 2,
            width: 2,
            in_channels: 2,
            out_channels: 1,
        };
        assert!(conv2d(&[0.0; 9], dims(3, 3, 1), &[0.0; 8], kd, None).is_err());
    }

    #[test]
    fn maxpool_window_routes_to_max() {
        // window [1,3;2,0]
        let (out, argmax, od) = maxpool2(&[1.0, 3.0, 2.0, 0.0], dims(2, 2, 1)).unwrap();
        assert_eq!(out, vec![3.0]);
        assert_eq!(argmax, vec![1]);
        assert_eq!((od.height, od.width), (1, 1));
    }

    #[test]
    fn maxpool_ties_pick_first_in_scan_order() {
        let (_, argmax, _) = maxpool2(&[5.0, 5.0, 5.0, 5.0], dims(2, 2, 1)).unwrap();
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn maxpool_floors_odd_sizes() {
        let (out, _, od) = maxpool2(&[0.0; 5 * 5 * 2], dims(5, 5, 2)).unwrap();
        assert_eq!((od.height, od.width, od.channels), (2, 2, 2));
        assert_eq!(out.len(), 8);
    }

    #[test]
    fn linear_hand_example() {
        let out = linear(
            &[1.0, 2.0],
            1,
            2,
            &[1.0, 0.0, 0.0, 1.0],
            2,
            Some(&[1.0, 1.0]),
        );
        assert_eq!(out, vec![2.0, 3.0]);
    }

    #[test]
    fn log_softmax_is_normalized() {
        let ls = log_softmax(&[0.3, -1.0, 2.0], 1, 3);
        let total: f64 = ls.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
