//! Discrete Fourier transforms used by the aliasing diagnostics.
//!
//! Correctness over throughput: 1-D transforms run by direct summation with
//! a radix-2 fast path for power-of-two lengths, and the 2-D transform is
//! the row-column decomposition. Twiddle factors are computed in f64.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cast, cast_usize, Scalar};

/// 2-D spectrum of an H×W plane, frequency indices k in 0..H, l in 0..W.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<S> {
    h: usize,
    w: usize,
    bins: Vec<Complex<S>>,
}

impl<S: Scalar> Spectrum<S> {
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    #[inline]
    pub fn at(&self, k: usize, l: usize) -> Complex<S> {
        self.bins[k * self.w + l]
    }

    pub fn bins(&self) -> &[Complex<S>] {
        &self.bins
    }

    /// Sum of squared magnitudes over all bins.
    pub fn energy(&self) -> S {
        self.bins
            .iter()
            .fold(S::zero(), |acc, z| acc + z.norm_sqr())
    }

    /// Inverse 2-D transform; returns the real part of the reconstruction.
    pub fn idft2(&self) -> Vec<S> {
        let mut rows: Vec<Complex<S>> = self.bins.clone();
        for r in 0..self.h {
            let row = idft1_complex(&rows[r * self.w..(r + 1) * self.w]);
            rows[r * self.w..(r + 1) * self.w].copy_from_slice(&row);
        }
        let mut out = vec![S::zero(); self.h * self.w];
        let mut col = vec![Complex::new(S::zero(), S::zero()); self.h];
        for c in 0..self.w {
            for r in 0..self.h {
                col[r] = rows[r * self.w + c];
            }
            let t = idft1_complex(&col);
            for r in 0..self.h {
                out[r * self.w + c] = t[r].re;
            }
        }
        out
    }
}

fn twiddle<S: Scalar>(numerator: usize, n: usize, sign: f64) -> Complex<S> {
    let theta = sign * 2.0 * std::f64::consts::PI * (numerator % n) as f64 / n as f64;
    Complex::new(cast(theta.cos()), cast(theta.sin()))
}

fn dft1_direct<S: Scalar>(x: &[Complex<S>], sign: f64) -> Vec<Complex<S>> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex::new(S::zero(), S::zero());
            for (i, &v) in x.iter().enumerate() {
                acc = acc + v * twiddle::<S>(k * i, n, sign);
            }
            acc
        })
        .collect()
}

fn fft_radix2<S: Scalar>(x: &[Complex<S>], sign: f64) -> Vec<Complex<S>> {
    let n = x.len();
    let mut a = x.to_vec();
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = twiddle::<S>(k, len, sign);
                let u = a[start + k];
                let v = a[start + k + len / 2] * w;
                a[start + k] = u + v;
                a[start + k + len / 2] = u - v;
            }
        }
        len <<= 1;
    }
    a
}

fn dft1_complex<S: Scalar>(x: &[Complex<S>]) -> Vec<Complex<S>> {
    if x.len().is_power_of_two() && x.len() > 1 {
        fft_radix2(x, -1.0)
    } else {
        dft1_direct(x, -1.0)
    }
}

fn idft1_complex<S: Scalar>(x: &[Complex<S>]) -> Vec<Complex<S>> {
    let n = x.len();
    let inv_n = S::one() / cast_usize::<S>(n);
    let mut out = if n.is_power_of_two() && n > 1 {
        fft_radix2(x, 1.0)
    } else {
        dft1_direct(x, 1.0)
    };
    for v in &mut out {
        *v = *v * inv_n;
    }
    out
}

/// 1-D DFT of a real signal.
pub fn dft1<S: Scalar>(signal: &[S]) -> Vec<Complex<S>> {
    let x: Vec<Complex<S>> = signal.iter().map(|&v| Complex::new(v, S::zero())).collect();
    dft1_complex(&x)
}

/// Inverse 1-D DFT; returns the real parts.
pub fn idft1<S: Scalar>(spectrum: &[Complex<S>]) -> Vec<S> {
    idft1_complex(spectrum).into_iter().map(|z| z.re).collect()
}

/// 2-D DFT of a single H×W plane given as a row-major slice.
pub fn dft2<S: Scalar>(plane: &[S], h: usize, w: usize) -> Result<Spectrum<S>> {
    if h == 0 || w == 0 {
        return Err(Error::Dimension("dft2: empty plane".into()));
    }
    if plane.len() != h * w {
        return Err(Error::Dimension(format!(
            "dft2: plane length {} does not match {h}x{w}",
            plane.len()
        )));
    }
    let mut rows: Vec<Complex<S>> = plane.iter().map(|&v| Complex::new(v, S::zero())).collect();
    for r in 0..h {
        let row = dft1_complex(&rows[r * w..(r + 1) * w]);
        rows[r * w..(r + 1) * w].copy_from_slice(&row);
    }
    let mut bins = vec![Complex::new(S::zero(), S::zero()); h * w];
    let mut col = vec![Complex::new(S::zero(), S::zero()); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = rows[r * w + c];
        }
        let t = dft1_complex(&col);
        for r in 0..h {
            bins[r * w + c] = t[r];
        }
    }
    Ok(Spectrum { h, w, bins })
}
