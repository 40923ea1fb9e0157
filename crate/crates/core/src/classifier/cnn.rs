//! Convolution, pooling, and dense layer arithmetic.
//!
//! All tensors are flat `Vec<f32>` in channel-major (CHW) layout over square
//! planes. Every loop runs in a fixed order so that training and inference
//! are bit-for-bit reproducible on any machine.

/// 3x3 convolution weights plus bias, `weights[out][in][ky][kx]` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv3x3 {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Conv3x3 {
            in_ch,
            out_ch,
            weights: vec![0.0; out_ch * in_ch * 9],
            bias: vec![0.0; out_ch],
        }
    }
}

/// Fully connected layer, `weights[out][in]` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; outputs * inputs],
            bias: vec![0.0; outputs],
        }
    }
}

/// Same-size 3x3 convolution with zero padding.
pub fn conv_forward(input: &[f32], size: usize, conv: &Conv3x3, out: &mut [f32]) {
    debug_assert_eq!(input.len(), conv.in_ch * size * size);
    debug_assert_eq!(out.len(), conv.out_ch * size * size);
    let plane = size * size;
    for oc in 0..conv.out_ch {
        out[oc * plane..(oc + 1) * plane].fill(conv.bias[oc]);
        for ic in 0..conv.in_ch {
            let kernel = &conv.weights[(oc * conv.in_ch + ic) * 9..][..9];
            let in_plane = &input[ic * plane..][..plane];
            let out_plane = &mut out[oc * plane..][..plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let w = kernel[ky * 3 + kx];
                    let dy = ky as isize - 1;
                    let dx = kx as isize - 1;
                    accumulate_shifted(in_plane, out_plane, size, dy, dx, w);
                }
            }
        }
    }
}

/// `out[y][x] += w * in[y + dy][x + dx]` over the in-bounds window.
#[inline]
fn accumulate_shifted(
    input: &[f32],
    out: &mut [f32],
    size: usize,
    dy: isize,
    dx: isize,
    w: f32,
) {
    let y0 = (-dy).max(0) as usize;
    let y1 = (size as isize - dy.max(0)) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (size as isize - dx.max(0)) as usize;
    let n = x1 - x0;
    for y in y0..y1 {
        let iy = (y as isize + dy) as usize;
        let ix = (x0 as isize + dx) as usize;
        let src = &input[iy * size + ix..][..n];
        let dst = &mut out[y * size + x0..][..n];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += w * s;
        }
    }
}

/// Gradient of [`conv_forward`]: accumulates weight/bias gradients and, when
/// `d_input` is given, the gradient w.r.t. the input planes.
pub fn conv_backward(
    input: &[f32],
    size: usize,
    conv: &Conv3x3,
    d_out: &[f32],
    d_conv: &mut Conv3x3,
    mut d_input: Option<&mut [f32]>,
) {
    let plane = size * size;
    for oc in 0..conv.out_ch {
        let d_plane = &d_out[oc * plane..][..plane];
        let db: f64 = d_plane.iter().map(|&v| f64::from(v)).sum();
        d_conv.bias[oc] += db as f32;
        for ic in 0..conv.in_ch {
            let in_plane = &input[ic * plane..][..plane];
            let d_kernel = &mut d_conv.weights[(oc * conv.in_ch + ic) * 9..][..9];
            let kernel = &conv.weights[(oc * conv.in_ch + ic) * 9..][..9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let dy = ky as isize - 1;
                    let dx = kx as isize - 1;
                    d_kernel[ky * 3 + kx] += dot_shifted(in_plane, d_plane, size, dy, dx);
                    if let Some(d_in) = d_input.as_deref_mut() {
                        // d_in[y+dy][x+dx] += w * d_out[y][x]
                        let d_in_plane = &mut d_in[ic * plane..][..plane];
                        scatter_shifted(d_plane, d_in_plane, size, dy, dx, kernel[ky * 3 + kx]);
                    }
                }
            }
        }
    }
}

/// `sum over valid (y, x) of d_out[y][x] * in[y + dy][x + dx]`.
#[inline]
fn dot_shifted(input: &[f32], d_out: &[f32], size: usize, dy: isize, dx: isize) -> f32 {
    let y0 = (-dy).max(0) as usize;
    let y1 = (size as isize - dy.max(0)) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (size as isize - dx.max(0)) as usize;
    let n = x1 - x0;
    let mut acc = 0.0f32;
    for y in y0..y1 {
        let iy = (y as isize + dy) as usize;
        let ix = (x0 as isize + dx) as usize;
        let src = &input[iy * size + ix..][..n];
        let grad = &d_out[y * size + x0..][..n];
        for (g, s) in grad.iter().zip(src) {
            acc += g * s;
        }
    }
    acc
}

/// `d_in[y + dy][x + dx] += w * d_out[y][x]` over the in-bounds window.
#[inline]
fn scatter_shifted(d_out: &[f32], d_in: &mut [f32], size: usize, dy: isize, dx: isize, w: f32) {
    let y0 = (-dy).max(0) as usize;
    let y1 = (size as isize - dy.max(0)) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (size as isize - dx.max(0)) as usize;
    let n = x1 - x0;
    for y in y0..y1 {
        let iy = (y as isize + dy) as usize;
        let ix = (x0 as isize + dx) as usize;
        let dst = &mut d_in[iy * size + ix..][..n];
        let src = &d_out[y * size + x0..][..n];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += w * s;
        }
    }
}

pub fn relu_forward(pre: &[f32], out: &mut [f32]) {
    for (o, &p) in out.iter_mut().zip(pre) {
        *o = p.max(0.0);
    }
}

pub fn relu_backward(pre: &[f32], d_out: &[f32], d_pre: &mut [f32]) {
    for ((d, &g), &p) in d_pre.iter_mut().zip(d_out).zip(pre) {
        *d = if p > 0.0 { g } else { 0.0 };
    }
}

/// 2x2 max pooling with stride 2. `argmax` records, per output cell, which of
/// the four inputs won (scan order, ties to the first).
pub fn maxpool_forward(
    input: &[f32],
    channels: usize,
    size: usize,
    out: &mut [f32],
    argmax: &mut [u8],
) {
    let half = size / 2;
    let plane = size * size;
    let out_plane = half * half;
    for c in 0..channels {
        let in_plane = &input[c * plane..][..plane];
        for y in 0..half {
            for x in 0..half {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0u8;
                for (idx, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = in_plane[(2 * y + dy) * size + 2 * x + dx];
                    if v > best {
                        best = v;
                        best_idx = idx as u8;
                    }
                }
                out[c * out_plane + y * half + x] = best;
                argmax[c * out_plane + y * half + x] = best_idx;
            }
        }
    }
}

pub fn maxpool_backward(
    d_out: &[f32],
    channels: usize,
    size: usize,
    argmax: &[u8],
    d_input: &mut [f32],
) {
    let half = size / 2;
    let plane = size * size;
    let out_plane = half * half;
    d_input.fill(0.0);
    for c in 0..channels {
        for y in 0..half {
            for x in 0..half {
                let o = c * out_plane + y * half + x;
                let (dy, dx) = [(0, 0), (0, 1), (1, 0), (1, 1)][argmax[o] as usize];
                d_input[c * plane + (2 * y + dy) * size + 2 * x + dx] = d_out[o];
            }
        }
    }
}

pub fn dense_forward(input: &[f32], dense: &Dense, out: &mut [f32]) {
    for (o, (row, &b)) in out
        .iter_mut()
        .zip(dense.weights.chunks_exact(dense.inputs).zip(&dense.bias))
    {
        let mut acc = 0.0f32;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *o = acc + b;
    }
}

pub fn dense_backward(
    input: &[f32],
    dense: &Dense,
    d_out: &[f32],
    d_dense: &mut Dense,
    d_input: &mut [f32],
) {
    d_input.fill(0.0);
    for (n, &g) in d_out.iter().enumerate() {
        d_dense.bias[n] += g;
        let row = &dense.weights[n * dense.inputs..][..dense.inputs];
        let d_row = &mut d_dense.weights[n * dense.inputs..][..dense.inputs];
        for i in 0..dense.inputs {
            d_row[i] += g * input[i];
            d_input[i] += g * row[i];
        }
    }
}

/// Numerically stable softmax; normalization runs in f64.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&l| f64::from(l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}
