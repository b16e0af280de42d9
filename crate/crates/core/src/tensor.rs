//! Dense 4-D tensors with convolution, pooling, subsampling, and padding.
//!
//! Layout is NCHW, row-major. Every operation here is a pure function of its
//! inputs and is safe to call concurrently.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Border handling for convolution, pooling, and explicit padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Out-of-range samples read as zero.
    Zero,
    /// Indices wrap modulo the axis length.
    Circular,
    /// Mirror without repeating the border sample.
    Reflect,
}

/// Maps a possibly out-of-range coordinate onto a source index.
/// `None` means the sample reads as zero (only under [`PaddingMode::Zero`]).
#[inline]
pub(crate) fn resolve_index(i: isize, len: usize, mode: PaddingMode) -> Option<usize> {
    let n = len as isize;
    if i >= 0 && i < n {
        return Some(i as usize);
    }
    match mode {
        PaddingMode::Zero => None,
        PaddingMode::Circular => Some((i.rem_euclid(n)) as usize),
        PaddingMode::Reflect => {
            // Single mirror: valid because pad amounts are checked to stay
            // below the axis length.
            let j = if i < 0 { -i } else { 2 * n - 2 - i };
            Some(j as usize)
        }
    }
}

/// Dense 4-D array of scalars with shape (batch, channels, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: [usize; 4],
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Creates a tensor from row-major data; the length must match the shape.
    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<S>) -> Result<Self> {
        let expected = n * c * h * w;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "data length {} does not match shape {}x{}x{}x{} = {}",
                data.len(),
                n,
                c,
                h,
                w,
                expected
            )));
        }
        Ok(Self {
            shape: [n, c, h, w],
            data,
        })
    }

    /// All-zeros tensor of the given shape.
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            shape: [n, c, h, w],
            data: vec![S::zero(); n * c * h * w],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every coordinate.
    pub fn from_fn<F>(n: usize, c: usize, h: usize, w: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize, usize) -> S,
    {
        let mut data = Vec::with_capacity(n * c * h * w);
        for bn in 0..n {
            for bc in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(bn, bc, y, x));
                    }
                }
            }
        }
        Self {
            shape: [n, c, h, w],
            data,
        }
    }

    /// Shape as (batch, channels, height, width).
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let [n, c, h, w] = self.shape;
        (n, c, h, w)
    }

    /// Number of stored elements.
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub(crate) fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> S {
        self.data[self.idx(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: S) {
        let i = self.idx(n, c, y, x);
        self.data[i] = v;
    }

    /// Read-only view of the raw row-major buffer.
    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// The contiguous H×W plane for one (batch, channel) pair.
    pub fn plane(&self, n: usize, c: usize) -> &[S] {
        let (_, _, h, w) = self.shape();
        let start = self.idx(n, c, 0, 0);
        &self.data[start..start + h * w]
    }

    /// Elementwise map.
    pub fn map<F: FnMut(S) -> S>(&self, mut f: F) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            shape: self.shape,
            data,
        })
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    /// True when every stored value is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks single-example tensors along the batch axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Argument("stack: empty input".into()))?;
        let (_, c, h, w) = first.shape();
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        let mut total_n = 0;
        for t in items {
            let (tn, tc, th, tw) = t.shape();
            if (tc, th, tw) != (c, h, w) {
                return Err(Error::Dimension(format!(
                    "stack: item shape ({tc},{th},{tw}) differs from ({c},{h},{w})"
                )));
            }
            total_n += tn;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(total_n, c, h, w, data)
    }

    /// Extracts one example as a (1,C,H,W) tensor.
    pub fn example(&self, n: usize) -> Self {
        let (_, c, h, w) = self.shape();
        let start = self.idx(n, 0, 0, 0);
        Self {
            shape: [1, c, h, w],
            data: self.data[start..start + c * h * w].to_vec(),
        }
    }
}

/// 2-D cross-correlation (no kernel flip) with stride and virtual padding.
///
/// `kernel` has shape (outC, inC, kH, kW); output spatial size follows
/// `floor((H + 2·pad − kH)/stride) + 1`.
pub fn conv2d<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: PaddingMode,
    pad: usize,
) -> Result<Tensor<S>> {
    if stride < 1 {
        return Err(Error::Argument("conv2d: stride must be >= 1".into()));
    }
    let (n, c, h, w) = input.shape();
    let (oc, ic, kh, kw) = kernel.shape();
    if ic != c {
        return Err(Error::Dimension(format!(
            "conv2d: input has {c} channels but kernel expects {ic}"
        )));
    }
    check_reflect(padding, pad, h, w)?;
    let (oh, ow) = conv_output_size(h, w, kh, kw, stride, pad)?;

    let mut out = Tensor::zeros(n, oc, oh, ow);
    for bn in 0..n {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = S::zero();
                    for i in 0..c {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let Some(sy) = resolve_index(iy, h, padding) else {
                                continue;
                            };
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                let Some(sx) = resolve_index(ix, w, padding) else {
                                    continue;
                                };
                                acc = acc + kernel.at(o, i, ky, kx) * input.at(bn, i, sy, sx);
                            }
                        }
                    }
                    out.set(bn, o, oy, ox, acc);
                }
            }
        }
    }
    Ok(out)
}

fn conv_output_size(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize)> {
    let ph = h + 2 * pad;
    let pw = w + 2 * pad;
    if kh == 0 || kw == 0 || kh > ph || kw > pw {
        return Err(Error::Dimension(format!(
            "window {kh}x{kw} does not fit padded input {ph}x{pw}"
        )));
    }
    Ok(((ph - kh) / stride + 1, (pw - kw) / stride + 1))
}

fn check_reflect(padding: PaddingMode, pad: usize, h: usize, w: usize) -> Result<()> {
    if padding == PaddingMode::Reflect && (pad >= h || pad >= w) {
        return Err(Error::Argument(format!(
            "reflect padding amount {pad} must stay below the axis lengths {h}x{w}"
        )));
    }
    Ok(())
}

/// Per-window spatial maximum. Zero padding contributes literal zeros to the
/// window; circular and reflect contribute the mapped samples.
pub fn max_pool<S: Scalar>(
    input: &Tensor<S>,
    window: usize,
    stride: usize,
    padding: PaddingMode,
    pad: usize,
) -> Result<Tensor<S>> {
    Ok(max_pool_with_argmax(input, window, stride, padding, pad)?.0)
}

/// `max_pool` that also reports, per output element, the flat source index of
/// the winning sample (`None` when a zero-pad position won). Ties resolve to
/// the first sample in scan order.
pub fn max_pool_with_argmax<S: Scalar>(
    input: &Tensor<S>,
    window: usize,
    stride: usize,
    padding: PaddingMode,
    pad: usize,
) -> Result<(Tensor<S>, Vec<Option<usize>>)> {
    if window < 1 {
        return Err(Error::Argument("max_pool: window must be >= 1".into()));
    }
    if stride < 1 {
        return Err(Error::Argument("max_pool: stride must be >= 1".into()));
    }
    let (n, c, h, w) = input.shape();
    check_reflect(padding, pad, h, w)?;
    let (oh, ow) = conv_output_size(h, w, window, window, stride, pad)?;

    let mut out = Tensor::zeros(n, c, oh, ow);
    let mut argmax = vec![None; n * c * oh * ow];
    for bn in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = S::neg_infinity();
                    let mut best_src = None;
                    for ky in 0..window {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let sy = resolve_index(iy, h, padding);
                        for kx in 0..window {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            let sx = resolve_index(ix, w, padding);
                            let (v, src) = match (sy, sx) {
                                (Some(sy), Some(sx)) => {
                                    (input.at(bn, ch, sy, sx), Some(input.idx(bn, ch, sy, sx)))
                                }
                                _ => (S::zero(), None),
                            };
                            if v > best {
                                best = v;
                                best_src = src;
                            }
                        }
                    }
                    let oi = out.idx(bn, ch, oy, ox);
                    out.data_mut()[oi] = best;
                    argmax[oi] = best_src;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Keeps samples at indices {0, s, 2s, …} on both spatial axes (phase 0).
pub fn subsample<S: Scalar>(input: &Tensor<S>, stride: usize) -> Result<Tensor<S>> {
    if stride < 1 {
        return Err(Error::Argument("subsample: stride must be >= 1".into()));
    }
    let (n, c, h, w) = input.shape();
    let oh = h.div_ceil(stride);
    let ow = w.div_ceil(stride);
    Ok(Tensor::from_fn(n, c, oh, ow, |bn, bc, y, x| {
        input.at(bn, bc, y * stride, x * stride)
    }))
}

/// Materializes padding on both spatial axes.
pub fn pad<S: Scalar>(input: &Tensor<S>, mode: PaddingMode, amount: usize) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.shape();
    check_reflect(mode, amount, h, w)?;
    let a = amount as isize;
    Ok(Tensor::from_fn(
        n,
        c,
        h + 2 * amount,
        w + 2 * amount,
        |bn, bc, y, x| {
            let sy = resolve_index(y as isize - a, h, mode);
            let sx = resolve_index(x as isize - a, w, mode);
            match (sy, sx) {
                (Some(sy), Some(sx)) => input.at(bn, bc, sy, sx),
                _ => S::zero(),
            }
        },
    ))
}

/// Translates the spatial content by (dy, dx); vacated samples fill per `mode`.
/// Circular mode is an exact roll.
pub fn shift2d<S: Scalar>(input: &Tensor<S>, dy: isize, dx: isize, mode: PaddingMode) -> Tensor<S> {
    let (n, c, h, w) = input.shape();
    Tensor::from_fn(n, c, h, w, |bn, bc, y, x| {
        let sy = resolve_index(y as isize - dy, h, mode);
        let sx = resolve_index(x as isize - dx, w, mode);
        match (sy, sx) {
            (Some(sy), Some(sx)) => input.at(bn, bc, sy, sx),
            _ => S::zero(),
        }
    })
}
