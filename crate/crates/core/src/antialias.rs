//! Non-trainable low-pass (blur) kernels and the anti-aliased downsampling
//! placement variants built around a trainable convolution.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::{conv2d, resolve_index, subsample, PaddingMode, Tensor};

/// Blur filter description for one network location: odd kernel size and the
/// padding used when the filter meets a border. The 2-D kernel is the outer
/// product of the 1-D binomial kernel with itself and always sums to one.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlurSpec {
    pub k: usize,
    pub padding: PaddingMode,
}

impl BlurSpec {
    pub fn new(k: usize, padding: PaddingMode) -> Result<Self> {
        validate_kernel_size(k)?;
        Ok(Self { k, padding })
    }

    /// Default reflect-padded blur of the given size.
    pub fn reflect(k: usize) -> Result<Self> {
        Self::new(k, PaddingMode::Reflect)
    }
}

/// Where (and whether) the blur sits relative to the trainable convolution
/// and the subsampling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain strided convolution, no anti-aliasing.
    None,
    /// Blur the input, then convolve with stride.
    BlurBefore,
    /// Convolve densely, blur, then subsample.
    BlurAfter,
    /// Blur on both sides of the dense convolution, then subsample.
    BlurBoth,
    /// Blur, subsample, then convolve without stride; enlarges the trainable
    /// kernel's footprint on the input. Requires spatial support > 1.
    Erf,
    /// The post-activation comparison variant: dense convolution, the
    /// nonlinearity, then blur and subsample.
    BlurpoolPostActivation,
}

/// One step of a downsampling unit, in composition order. `Conv` is always
/// the dense (stride-1) trainable convolution; rate reduction is an explicit
/// `Subsample` stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Blur,
    Conv,
    Subsample,
    Activation,
}

impl Variant {
    /// Composition template for this variant. `conv_spatial` is the trainable
    /// kernel's spatial size; `stride` of 1 drops the subsampling stage.
    pub fn stages(self, stride: usize, conv_spatial: usize) -> Result<Vec<Stage>> {
        if stride < 1 {
            return Err(Error::Argument("variant stride must be >= 1".into()));
        }
        if self == Variant::Erf {
            if conv_spatial <= 1 {
                return Err(Error::Argument(
                    "erf variant needs a trainable kernel with spatial support > 1".into(),
                ));
            }
            if stride == 1 {
                return Err(Error::Argument("erf variant needs stride > 1".into()));
            }
        }
        let sub = stride > 1;
        let mut stages = Vec::new();
        match self {
            Variant::None => {
                stages.push(Stage::Conv);
                if sub {
                    stages.push(Stage::Subsample);
                }
                stages.push(Stage::Activation);
            }
            Variant::BlurBefore => {
                stages.push(Stage::Blur);
                stages.push(Stage::Conv);
                if sub {
                    stages.push(Stage::Subsample);
                }
                stages.push(Stage::Activation);
            }
            Variant::BlurAfter => {
                stages.push(Stage::Conv);
                stages.push(Stage::Blur);
                if sub {
                    stages.push(Stage::Subsample);
                }
                stages.push(Stage::Activation);
            }
            Variant::BlurBoth => {
                stages.push(Stage::Blur);
                stages.push(Stage::Conv);
                stages.push(Stage::Blur);
                if sub {
                    stages.push(Stage::Subsample);
                }
                stages.push(Stage::Activation);
            }
            Variant::Erf => {
                stages.push(Stage::Blur);
                stages.push(Stage::Subsample);
                stages.push(Stage::Conv);
                stages.push(Stage::Activation);
            }
            Variant::BlurpoolPostActivation => {
                stages.push(Stage::Conv);
                stages.push(Stage::Activation);
                stages.push(Stage::Blur);
                if sub {
                    stages.push(Stage::Subsample);
                }
            }
        }
        Ok(stages)
    }
}

fn validate_kernel_size(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) || k > 7 {
        return Err(Error::Argument(format!(
            "blur kernel size must be odd and in 1..=7, got {k}"
        )));
    }
    Ok(())
}

/// Row k−1 of Pascal's triangle normalized by 2^(k−1): the 1-D binomial
/// low-pass kernel.
pub fn binomial_kernel<S: Scalar>(k: usize) -> Result<Vec<S>> {
    validate_kernel_size(k)?;
    let mut row = vec![1u64];
    for _ in 1..k {
        let mut next = vec![1u64; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let norm = (1u64 << (k - 1)) as f64;
    Ok(row.iter().map(|&c| cast(c as f64 / norm)).collect())
}

/// Magnitude response of the 1-D binomial kernel at angular frequency
/// `omega`, evaluated directly from the coefficients.
pub fn binomial_frequency_response(k: usize, omega: f64) -> Result<f64> {
    let kernel: Vec<f64> = binomial_kernel(k)?;
    let center = (k - 1) as isize / 2;
    let mut acc = 0.0;
    for (t, &c) in kernel.iter().enumerate() {
        acc += c * ((t as isize - center) as f64 * omega).cos();
    }
    Ok(acc)
}

/// One 1-D correlation pass with the blur kernel along the given axis.
/// `adjoint` runs the transpose instead (scatter rather than gather),
/// which is what backpropagation through the fixed kernel needs.
fn blur_pass<S: Scalar>(
    input: &Tensor<S>,
    spec: &BlurSpec,
    vertical: bool,
    adjoint: bool,
) -> Result<Tensor<S>> {
    let kernel: Vec<S> = binomial_kernel(spec.k)?;
    let center = ((spec.k - 1) / 2) as isize;
    let (n, c, h, w) = input.shape();
    let axis_len = if vertical { h } else { w };
    if spec.padding == PaddingMode::Reflect && center as usize >= axis_len && spec.k > 1 {
        return Err(Error::Argument(format!(
            "reflect blur of size {} does not fit axis length {axis_len}",
            spec.k
        )));
    }
    let mut out = Tensor::zeros(n, c, h, w);
    for bn in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let along = if vertical { y } else { x };
                    if adjoint {
                        let v = input.at(bn, ch, y, x);
                        for (t, &kv) in kernel.iter().enumerate() {
                            let pos = along as isize + t as isize - center;
                            if let Some(s) = resolve_index(pos, axis_len, spec.padding) {
                                let (ty, tx) = if vertical { (s, x) } else { (y, s) };
                                let i = out.idx(bn, ch, ty, tx);
                                out.data_mut()[i] = out.data()[i] + kv * v;
                            }
                        }
                    } else {
                        let mut acc = S::zero();
                        for (t, &kv) in kernel.iter().enumerate() {
                            let pos = along as isize + t as isize - center;
                            if let Some(s) = resolve_index(pos, axis_len, spec.padding) {
                                let (sy, sx) = if vertical { (s, x) } else { (y, s) };
                                acc = acc + kv * input.at(bn, ch, sy, sx);
                            }
                        }
                        out.set(bn, ch, y, x, acc);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Depthwise blur: the separable outer-product kernel applied per channel
/// with no cross-channel mixing. Output keeps the spatial size.
pub fn blur<S: Scalar>(input: &Tensor<S>, spec: &BlurSpec) -> Result<Tensor<S>> {
    if spec.k == 1 {
        return Ok(input.clone());
    }
    let horizontal = blur_pass(input, spec, false, false)?;
    blur_pass(&horizontal, spec, true, false)
}

/// Adjoint of [`blur`]: routes gradients back through the fixed kernel.
pub fn blur_adjoint<S: Scalar>(grad: &Tensor<S>, spec: &BlurSpec) -> Result<Tensor<S>> {
    if spec.k == 1 {
        return Ok(grad.clone());
    }
    let vertical = blur_pass(grad, spec, true, true)?;
    blur_pass(&vertical, spec, false, true)
}

/// Runs one downsampling unit functionally: the variant's stages around the
/// trainable kernel, with the activation applied where the variant puts it.
/// The trainable convolution uses zero padding of (kH−1)/2 so spatial size is
/// preserved until the explicit subsampling stage.
pub fn apply_variant<S: Scalar>(
    variant: Variant,
    trainable_kernel: &Tensor<S>,
    stride: usize,
    spec: &BlurSpec,
    activation: Activation,
    input: &Tensor<S>,
) -> Result<Tensor<S>> {
    Ok(run_variant(variant, trainable_kernel, stride, spec, activation, input)?.output)
}

/// Output of [`run_variant`] with the intermediate fed to the subsampling
/// stage (when one exists), which is where aliasing is measured.
pub struct VariantTrace<S> {
    pub output: Tensor<S>,
    pub pre_subsample: Option<Tensor<S>>,
}

/// Like [`apply_variant`] but also captures the tensor entering the
/// subsampling stage.
pub fn run_variant<S: Scalar>(
    variant: Variant,
    trainable_kernel: &Tensor<S>,
    stride: usize,
    spec: &BlurSpec,
    activation: Activation,
    input: &Tensor<S>,
) -> Result<VariantTrace<S>> {
    let (_, _, kh, kw) = trainable_kernel.shape();
    if kh != kw {
        return Err(Error::Argument(format!(
            "trainable kernel must be square, got {kh}x{kw}"
        )));
    }
    let stages = variant.stages(stride, kh)?;
    let conv_pad = (kh - 1) / 2;
    let mut current = input.clone();
    let mut pre_subsample = None;
    for stage in stages {
        current = match stage {
            Stage::Blur => blur(&current, spec)?,
            Stage::Conv => conv2d(&current, trainable_kernel, 1, PaddingMode::Zero, conv_pad)?,
            Stage::Subsample => {
                pre_subsample = Some(current.clone());
                subsample(&current, stride)?
            }
            Stage::Activation => current.map(|v| activation.value(v)),
        };
    }
    Ok(VariantTrace {
        output: current,
        pre_subsample,
    })
}
