//! Layer kinds and their forward/backward kernels.
//!
//! The graph stores every strided operation in decomposed form: dense
//! (stride-1) compute followed by an explicit `Subsample` node. That is what
//! lets blur nodes slot in between the dense operation and the rate
//! reduction, and it makes "what feeds each subsampling step" a plain graph
//! query.

use crate::activation::Activation;
use crate::antialias::{blur, blur_adjoint, BlurSpec};
use crate::error::{Error, Result};
use crate::scalar::{cast, cast_usize, Scalar};
use crate::tensor::{conv2d, max_pool_with_argmax, resolve_index, subsample, PaddingMode, Tensor};

/// One trainable parameter: a named, shaped block of scalars plus its
/// gradient and SGD momentum buffers.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<S>,
    pub grad: Vec<S>,
    pub velocity: Vec<S>,
}

impl<S: Scalar> Param<S> {
    pub fn new(name: String, dims: Vec<usize>, data: Vec<S>) -> Self {
        let n = data.len();
        debug_assert_eq!(n, dims.iter().product::<usize>());
        Self {
            name,
            dims,
            data,
            grad: vec![S::zero(); n],
            velocity: vec![S::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Conv weights as a (outC, inC, kH, kW) tensor.
    fn conv_tensor(&self) -> Tensor<S> {
        Tensor::from_vec(
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.dims[3],
            self.data.clone(),
        )
        .expect("param dims consistent")
    }
}

/// Per-channel running statistics for one batch-norm node.
#[derive(Debug, Clone)]
pub struct BnRunning<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

/// What a graph node computes.
#[derive(Debug, Clone)]
pub enum NodeKind {
    /// The batch placeholder; node 0 only.
    Input,
    /// Dense (stride-1) trainable convolution, no bias.
    Conv {
        weight: usize,
        pad: usize,
        padding: PaddingMode,
    },
    /// Fixed depthwise binomial blur; holds no trainable parameters.
    Blur {
        spec: BlurSpec,
    },
    /// Phase-0 rate reduction.
    Subsample {
        stride: usize,
    },
    /// Dense (stride-1) max pooling.
    MaxPoolDense {
        window: usize,
        pad: usize,
        padding: PaddingMode,
    },
    BatchNorm {
        gamma: usize,
        beta: usize,
        state: usize,
        momentum: f64,
        eps: f64,
    },
    Activation(Activation),
    /// Residual junction; `rhs` is the second input node.
    Add {
        rhs: usize,
    },
    GlobalAvgPool,
    Linear {
        weight: usize,
        bias: usize,
    },
}

/// A node in the (topologically ordered) layer graph.
#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub input: usize,
    pub name: String,
}

/// Values recorded during the forward pass that backward needs.
#[derive(Debug, Clone)]
pub enum Aux<S> {
    None,
    MaxPool(Vec<Option<usize>>),
    BatchNorm {
        xhat: Tensor<S>,
        inv_std: Vec<S>,
        batch_mean: Vec<S>,
        batch_var: Vec<S>,
    },
}

pub struct TapeEntry<S> {
    pub out: Tensor<S>,
    pub aux: Aux<S>,
}

#[allow(clippy::needless_range_loop)]
fn channel_moments<S: Scalar>(x: &Tensor<S>) -> (Vec<S>, Vec<S>) {
    let (n, c, h, w) = x.shape();
    let count = cast_usize::<S>(n * h * w);
    let mut mean = vec![S::zero(); c];
    let mut var = vec![S::zero(); c];
    for bn in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    mean[ch] = mean[ch] + x.at(bn, ch, y, xx);
                }
            }
        }
    }
    for m in &mut mean {
        *m = *m / count;
    }
    for bn in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let d = x.at(bn, ch, y, xx) - mean[ch];
                    var[ch] = var[ch] + d * d;
                }
            }
        }
    }
    for v in &mut var {
        *v = *v / count;
    }
    (mean, var)
}

/// Runs one node forward. `use_batch_stats` selects train-style batch-norm.
pub fn forward_node<S: Scalar>(
    kind: &NodeKind,
    x: &Tensor<S>,
    rhs: Option<&Tensor<S>>,
    params: &[Param<S>],
    bn_states: &[BnRunning<S>],
    use_batch_stats: bool,
) -> Result<TapeEntry<S>> {
    match kind {
        NodeKind::Input => Ok(TapeEntry {
            out: x.clone(),
            aux: Aux::None,
        }),
        NodeKind::Conv {
            weight,
            pad,
            padding,
        } => {
            let w = params[*weight].conv_tensor();
            Ok(TapeEntry {
                out: conv2d(x, &w, 1, *padding, *pad)?,
                aux: Aux::None,
            })
        }
        NodeKind::Blur { spec } => Ok(TapeEntry {
            out: blur(x, spec)?,
            aux: Aux::None,
        }),
        NodeKind::Subsample { stride } => Ok(TapeEntry {
            out: subsample(x, *stride)?,
            aux: Aux::None,
        }),
        NodeKind::MaxPoolDense {
            window,
            pad,
            padding,
        } => {
            let (out, argmax) = max_pool_with_argmax(x, *window, 1, *padding, *pad)?;
            Ok(TapeEntry {
                out,
                aux: Aux::MaxPool(argmax),
            })
        }
        NodeKind::BatchNorm {
            gamma,
            beta,
            state,
            eps,
            ..
        } => {
            let (n, c, h, w) = x.shape();
            let g = &params[*gamma].data;
            let b = &params[*beta].data;
            let eps_s = cast::<S>(*eps);
            let (mean, var) = if use_batch_stats {
                channel_moments(x)
            } else {
                (
                    bn_states[*state].mean.clone(),
                    bn_states[*state].var.clone(),
                )
            };
            let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps_s).sqrt()).collect();
            let mut xhat = Tensor::zeros(n, c, h, w);
            let mut out = Tensor::zeros(n, c, h, w);
            for bn in 0..n {
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let z = (x.at(bn, ch, y, xx) - mean[ch]) * inv_std[ch];
                            xhat.set(bn, ch, y, xx, z);
                            out.set(bn, ch, y, xx, g[ch] * z + b[ch]);
                        }
                    }
                }
            }
            let aux = if use_batch_stats {
                Aux::BatchNorm {
                    xhat,
                    inv_std,
                    batch_mean: mean,
                    batch_var: var,
                }
            } else {
                Aux::None
            };
            Ok(TapeEntry { out, aux })
        }
        NodeKind::Activation(a) => Ok(TapeEntry {
            out: x.map(|v| a.value(v)),
            aux: Aux::None,
        }),
        NodeKind::Add { .. } => {
            let rhs = rhs.expect("add node has a second input");
            Ok(TapeEntry {
                out: x.add(rhs)?,
                aux: Aux::None,
            })
        }
        NodeKind::GlobalAvgPool => {
            let (n, c, h, w) = x.shape();
            let inv = S::one() / cast_usize::<S>(h * w);
            let out = Tensor::from_fn(n, c, 1, 1, |bn, ch, _, _| {
                let mut acc = S::zero();
                for y in 0..h {
                    for xx in 0..w {
                        acc = acc + x.at(bn, ch, y, xx);
                    }
                }
                acc * inv
            });
            Ok(TapeEntry {
                out,
                aux: Aux::None,
            })
        }
        NodeKind::Linear { weight, bias } => {
            let (n, c, h, w) = x.shape();
            if h != 1 || w != 1 {
                return Err(Error::Dimension(format!(
                    "linear expects pooled (N,C,1,1) input, got spatial {h}x{w}"
                )));
            }
            let wp = &params[*weight];
            let classes = wp.dims[0];
            let features = wp.dims[1];
            if features != c {
                return Err(Error::Dimension(format!(
                    "linear expects {features} features, got {c}"
                )));
            }
            let b = &params[*bias].data;
            let out = Tensor::from_fn(n, classes, 1, 1, |bn, k, _, _| {
                let mut acc = b[k];
                for ch in 0..c {
                    acc = acc + wp.data[k * features + ch] * x.at(bn, ch, 0, 0);
                }
                acc
            });
            Ok(TapeEntry {
                out,
                aux: Aux::None,
            })
        }
    }
}

/// Gradient of one node. Returns the gradient w.r.t. the primary input and,
/// for `Add`, the gradient w.r.t. the second input. Parameter gradients
/// accumulate into `params[*].grad`.
pub fn backward_node<S: Scalar>(
    kind: &NodeKind,
    x: &Tensor<S>,
    aux: &Aux<S>,
    gout: &Tensor<S>,
    params: &mut [Param<S>],
) -> Result<(Tensor<S>, Option<Tensor<S>>)> {
    match kind {
        NodeKind::Input => Ok((gout.clone(), None)),
        NodeKind::Conv {
            weight,
            pad,
            padding,
        } => {
            let (gin, gw) = conv_backward(x, &params[*weight], gout, *pad, *padding);
            for (g, d) in params[*weight].grad.iter_mut().zip(&gw) {
                *g = *g + *d;
            }
            Ok((gin, None))
        }
        NodeKind::Blur { spec } => Ok((blur_adjoint(gout, spec)?, None)),
        NodeKind::Subsample { stride } => Ok((subsample_adjoint(x, gout, *stride), None)),
        NodeKind::MaxPoolDense { .. } => {
            let Aux::MaxPool(argmax) = aux else {
                return Err(Error::Numeric("max-pool tape entry missing argmax".into()));
            };
            let (n, c, h, w) = x.shape();
            let mut gin = Tensor::zeros(n, c, h, w);
            for (i, src) in argmax.iter().enumerate() {
                if let Some(s) = src {
                    gin.data_mut()[*s] = gin.data()[*s] + gout.data()[i];
                }
            }
            Ok((gin, None))
        }
        NodeKind::BatchNorm { gamma, beta, .. } => {
            let Aux::BatchNorm { xhat, inv_std, .. } = aux else {
                return Err(Error::Numeric(
                    "batch-norm backward requires train-mode tape".into(),
                ));
            };
            let (n, c, h, w) = x.shape();
            let m = cast_usize::<S>(n * h * w);
            let g = params[*gamma].data.clone();
            // Per-channel reductions of dy and dy·xhat.
            let mut sum_dy = vec![S::zero(); c];
            let mut sum_dy_xhat = vec![S::zero(); c];
            for bn in 0..n {
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let dy = gout.at(bn, ch, y, xx);
                            sum_dy[ch] = sum_dy[ch] + dy;
                            sum_dy_xhat[ch] = sum_dy_xhat[ch] + dy * xhat.at(bn, ch, y, xx);
                        }
                    }
                }
            }
            for ch in 0..c {
                params[*beta].grad[ch] = params[*beta].grad[ch] + sum_dy[ch];
                params[*gamma].grad[ch] = params[*gamma].grad[ch] + sum_dy_xhat[ch];
            }
            let mut gin = Tensor::zeros(n, c, h, w);
            for bn in 0..n {
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let dy = gout.at(bn, ch, y, xx);
                            let t = m * dy - sum_dy[ch] - xhat.at(bn, ch, y, xx) * sum_dy_xhat[ch];
                            gin.set(bn, ch, y, xx, g[ch] * inv_std[ch] * t / m);
                        }
                    }
                }
            }
            Ok((gin, None))
        }
        NodeKind::Activation(a) => {
            let gin = Tensor::from_fn(
                x.shape().0,
                x.shape().1,
                x.shape().2,
                x.shape().3,
                |bn, ch, y, xx| a.derivative(x.at(bn, ch, y, xx)) * gout.at(bn, ch, y, xx),
            );
            Ok((gin, None))
        }
        NodeKind::Add { .. } => Ok((gout.clone(), Some(gout.clone()))),
        NodeKind::GlobalAvgPool => {
            let (n, c, h, w) = x.shape();
            let inv = S::one() / cast_usize::<S>(h * w);
            let gin = Tensor::from_fn(n, c, h, w, |bn, ch, _, _| gout.at(bn, ch, 0, 0) * inv);
            Ok((gin, None))
        }
        NodeKind::Linear { weight, bias } => {
            let (n, c, _, _) = x.shape();
            let classes = params[*weight].dims[0];
            let features = params[*weight].dims[1];
            for bn in 0..n {
                for k in 0..classes {
                    let dy = gout.at(bn, k, 0, 0);
                    params[*bias].grad[k] = params[*bias].grad[k] + dy;
                    for ch in 0..features {
                        params[*weight].grad[k * features + ch] =
                            params[*weight].grad[k * features + ch] + dy * x.at(bn, ch, 0, 0);
                    }
                }
            }
            let wdata = &params[*weight].data;
            let gin = Tensor::from_fn(n, c, 1, 1, |bn, ch, _, _| {
                let mut acc = S::zero();
                for k in 0..classes {
                    acc = acc + wdata[k * features + ch] * gout.at(bn, k, 0, 0);
                }
                acc
            });
            Ok((gin, None))
        }
    }
}

/// Adjoint of [`crate::tensor::subsample`]: zero-stuffing scatter back to
/// the dense grid. `x` supplies the pre-subsampling shape.
pub(crate) fn subsample_adjoint<S: Scalar>(
    x: &Tensor<S>,
    gout: &Tensor<S>,
    stride: usize,
) -> Tensor<S> {
    let (n, c, h, w) = x.shape();
    let (_, _, oh, ow) = gout.shape();
    let mut gin = Tensor::zeros(n, c, h, w);
    for bn in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    gin.set(bn, ch, y * stride, xx * stride, gout.at(bn, ch, y, xx));
                }
            }
        }
    }
    gin
}

/// Gradient of the dense convolution w.r.t. its input only.
pub(crate) fn conv_input_grad<S: Scalar>(
    x: &Tensor<S>,
    weight: &Param<S>,
    gout: &Tensor<S>,
    pad: usize,
    padding: PaddingMode,
) -> Tensor<S> {
    conv_backward(x, weight, gout, pad, padding).0
}

/// Input and weight gradients of the dense convolution, mirroring the
/// forward index mapping exactly.
fn conv_backward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Param<S>,
    gout: &Tensor<S>,
    pad: usize,
    padding: PaddingMode,
) -> (Tensor<S>, Vec<S>) {
    let (n, c, h, w) = x.shape();
    let (oc, ic, kh, kw) = (
        weight.dims[0],
        weight.dims[1],
        weight.dims[2],
        weight.dims[3],
    );
    let (_, _, oh, ow) = gout.shape();
    let mut gin = Tensor::zeros(n, c, h, w);
    let mut gw = vec![S::zero(); weight.len()];
    for bn in 0..n {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let dy = gout.at(bn, o, oy, ox);
                    for i in 0..ic {
                        for ky in 0..kh {
                            let iy = (oy + ky) as isize - pad as isize;
                            let Some(sy) = resolve_index(iy, h, padding) else {
                                continue;
                            };
                            for kx in 0..kw {
                                let ix = (ox + kx) as isize - pad as isize;
                                let Some(sx) = resolve_index(ix, w, padding) else {
                                    continue;
                                };
                                let widx = ((o * ic + i) * kh + ky) * kw + kx;
                                gw[widx] = gw[widx] + dy * x.at(bn, i, sy, sx);
                                let gi = gin.idx(bn, i, sy, sx);
                                gin.data_mut()[gi] = gin.data()[gi] + dy * weight.data[widx];
                            }
                        }
                    }
                }
            }
        }
    }
    (gin, gw)
}
