//! Pointwise nonlinearities with their exact derivatives.

use crate::scalar::{cast, to_f64, Scalar};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Activation function choices. Swish and GELU are the smooth alternatives
/// to ReLU; all three map 0 to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// x·sigmoid(x).
    Swish,
    /// x·Φ(x) with Φ the standard normal CDF (erf-based, not the tanh fit).
    Gelu,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

impl Activation {
    pub fn value<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
            Activation::Swish => {
                let xf = to_f64(x);
                cast(xf * sigmoid(xf))
            }
            Activation::Gelu => {
                let xf = to_f64(x);
                cast(xf * normal_cdf(xf))
            }
        }
    }

    /// Derivative at `x`; ReLU uses the 0 subgradient at the kink.
    pub fn derivative<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Swish => {
                let xf = to_f64(x);
                let s = sigmoid(xf);
                cast(s + xf * s * (1.0 - s))
            }
            Activation::Gelu => {
                let xf = to_f64(x);
                cast(normal_cdf(xf) + xf * normal_pdf(xf))
            }
        }
    }
}
