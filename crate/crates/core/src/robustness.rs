//! Desk-scale corruption suite and the CE/mCE metrics.
//!
//! Error tables hold top-1 error fractions in [0,1]; CE and mCE are
//! reported ×100 as percents. The reference (normalization) table is always
//! an input, never hard-coded.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::Tensor;

/// The implemented corruption families: noise, blur, photometric, and
/// digital, all parameterizable without image assets or codecs.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    Contrast,
    Brightness,
    Pixelate,
}

impl Corruption {
    pub const ALL: [Corruption; 7] = [
        Corruption::GaussianNoise,
        Corruption::ShotNoise,
        Corruption::ImpulseNoise,
        Corruption::DefocusBlur,
        Corruption::Contrast,
        Corruption::Brightness,
        Corruption::Pixelate,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Corruption::GaussianNoise => "gaussian_noise",
            Corruption::ShotNoise => "shot_noise",
            Corruption::ImpulseNoise => "impulse_noise",
            Corruption::DefocusBlur => "defocus_blur",
            Corruption::Contrast => "contrast",
            Corruption::Brightness => "brightness",
            Corruption::Pixelate => "pixelate",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Corruption::ALL
            .into_iter()
            .find(|c| c.id() == id)
            .ok_or_else(|| Error::Argument(format!("unknown corruption id '{id}'")))
    }
}

/// Severity level 1..=5 with its per-corruption parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Severity {
    level: usize,
}

impl Severity {
    pub fn new(level: usize) -> Result<Self> {
        if !(1..=5).contains(&level) {
            return Err(Error::Argument(format!(
                "severity level must be 1..=5, got {level}"
            )));
        }
        Ok(Self { level })
    }

    pub fn level(self) -> usize {
        self.level
    }

    /// The corruption-specific parameter at this level: noise sigma, photon
    /// scale, impulse fraction, disk radius, contrast factor, brightness
    /// offset, or pixelation factor. Strictly monotone in the level.
    pub fn parameter(self, corruption: Corruption) -> f64 {
        let i = self.level - 1;
        match corruption {
            Corruption::GaussianNoise => [0.04, 0.08, 0.12, 0.16, 0.20][i],
            Corruption::ShotNoise => [60.0, 25.0, 12.0, 5.0, 3.0][i],
            Corruption::ImpulseNoise => [0.01, 0.02, 0.05, 0.07, 0.10][i],
            Corruption::DefocusBlur => [1.0, 2.0, 3.0, 4.0, 6.0][i],
            Corruption::Contrast => [0.75, 0.5, 0.4, 0.3, 0.2][i],
            Corruption::Brightness => [0.05, 0.1, 0.15, 0.2, 0.3][i],
            Corruption::Pixelate => [2.0, 3.0, 4.0, 6.0, 8.0][i],
        }
    }
}

fn check_unit_range(image: &Tensor) -> Result<()> {
    if image.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Argument(
            "corruption input must lie in [0, 1]".into(),
        ));
    }
    Ok(())
}

fn clip01(t: Tensor) -> Tensor {
    t.map(|v| v.clamp(0.0, 1.0))
}

/// Applies `corruption` at the given severity level; deterministic per seed
/// and clipped back to [0,1].
pub fn corrupt(
    image: &Tensor,
    corruption: Corruption,
    severity: Severity,
    seed: u64,
) -> Result<Tensor> {
    apply_corruption(image, corruption, severity.parameter(corruption), seed)
}

/// The parameterized core of [`corrupt`]; identity parameters (sigma 0,
/// factor 1, offset 0) reproduce the input exactly.
pub fn apply_corruption(
    image: &Tensor,
    corruption: Corruption,
    parameter: f64,
    seed: u64,
) -> Result<Tensor> {
    check_unit_range(image)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match corruption {
        Corruption::GaussianNoise => {
            let normal = StandardNormal;
            image.map(|v| {
                let z: f64 = normal.sample(&mut rng);
                v + parameter * z
            })
        }
        Corruption::ShotNoise => {
            if parameter <= 0.0 {
                return Err(Error::Argument("photon scale must be positive".into()));
            }
            image.map(|v| {
                let lambda = v * parameter;
                if lambda <= 0.0 {
                    0.0
                } else {
                    let poisson = Poisson::new(lambda).expect("positive lambda");
                    let count: f64 = poisson.sample(&mut rng);
                    count / parameter
                }
            })
        }
        Corruption::ImpulseNoise => image.map(|v| {
            if rng.gen_bool(parameter.clamp(0.0, 1.0)) {
                if rng.gen_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            } else {
                v
            }
        }),
        Corruption::DefocusBlur => disk_blur(image, parameter)?,
        Corruption::Contrast => contrast(image, parameter),
        Corruption::Brightness => image.map(|v| v + parameter),
        Corruption::Pixelate => pixelate(image, parameter)?,
    };
    Ok(clip01(out))
}

/// Depthwise convolution with a normalized disk kernel of the given radius;
/// reflect borders keep the brightness level at the edges.
fn disk_blur(image: &Tensor, radius: f64) -> Result<Tensor> {
    if radius <= 0.0 {
        return Ok(image.clone());
    }
    let r = radius.floor() as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dy * dy + dx * dx) as f64 <= radius * radius {
                offsets.push((dy, dx));
            }
        }
    }
    let norm = 1.0 / offsets.len() as f64;
    let (n, c, h, w) = image.shape();
    Ok(crate::tensor::Tensor::from_fn(
        n,
        c,
        h,
        w,
        |bn, ch, y, x| {
            let mut acc = 0.0;
            for &(dy, dx) in &offsets {
                let sy = reflect_index(y as isize + dy, h);
                let sx = reflect_index(x as isize + dx, w);
                acc += image.at(bn, ch, sy, sx);
            }
            acc * norm
        },
    ))
}

fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut j = i;
    // Repeated mirroring copes with radii beyond the axis length.
    loop {
        if j < 0 {
            j = -j;
        } else if j >= n {
            j = 2 * n - 2 - j;
        } else {
            return j as usize;
        }
        if n == 1 {
            return 0;
        }
    }
}

/// Scales deviation from the per-channel spatial mean.
fn contrast(image: &Tensor, factor: f64) -> Tensor {
    let (n, c, h, w) = image.shape();
    let inv = 1.0 / (h * w) as f64;
    let mut means = vec![0.0; n * c];
    for bn in 0..n {
        for ch in 0..c {
            means[bn * c + ch] = image.plane(bn, ch).iter().sum::<f64>() * inv;
        }
    }
    crate::tensor::Tensor::from_fn(n, c, h, w, |bn, ch, y, x| {
        let m = means[bn * c + ch];
        (image.at(bn, ch, y, x) - m) * factor + m
    })
}

/// Replaces each `f`×`f` block by its mean (ragged edge blocks shrink).
fn pixelate(image: &Tensor, factor: f64) -> Result<Tensor> {
    let f = factor as usize;
    if f < 1 || factor.fract() != 0.0 {
        return Err(Error::Argument(format!(
            "pixelate factor must be a positive integer, got {factor}"
        )));
    }
    if f == 1 {
        return Ok(image.clone());
    }
    let (n, c, h, w) = image.shape();
    let mut out = crate::tensor::Tensor::zeros(n, c, h, w);
    for bn in 0..n {
        for ch in 0..c {
            for by in (0..h).step_by(f) {
                for bx in (0..w).step_by(f) {
                    let y_end = (by + f).min(h);
                    let x_end = (bx + f).min(w);
                    let mut acc = 0.0;
                    for y in by..y_end {
                        for x in bx..x_end {
                            acc += image.at(bn, ch, y, x);
                        }
                    }
                    let mean = acc / ((y_end - by) * (x_end - bx)) as f64;
                    for y in by..y_end {
                        for x in bx..x_end {
                            out.set(bn, ch, y, x, mean);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-corruption, per-severity top-1 error fractions plus the clean error.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorTable {
    pub entries: BTreeMap<String, [f64; 5]>,
    pub clean_error: f64,
}

impl ErrorTable {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(self.clean_error) {
            return Err(Error::Data("clean_error outside [0,1]".into()));
        }
        for (c, row) in &self.entries {
            if row.iter().any(|&v| !ok(v)) {
                return Err(Error::Data(format!("errors for {c} outside [0,1]")));
            }
        }
        Ok(())
    }

    /// CSV export with one row per (corruption, severity) cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("corruption,severity,error\n");
        for (c, row) in &self.entries {
            for (s, e) in row.iter().enumerate() {
                out.push_str(&format!("{c},{},{e}\n", s + 1));
            }
        }
        out
    }
}

/// Per-corruption CE values (percent) with their mean.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionReport {
    pub ce: BTreeMap<String, f64>,
    pub mce: f64,
    pub clean_error: f64,
}

impl CorruptionReport {
    /// CE per corruption in `table` normalized by `baseline`, and their
    /// unweighted mean.
    pub fn from_tables(table: &ErrorTable, baseline: &ErrorTable) -> Result<Self> {
        let mut ce = BTreeMap::new();
        for c in table.entries.keys() {
            ce.insert(c.clone(), corruption_error(table, baseline, c)?);
        }
        let mce = mean_corruption_error(ce.values().copied())?;
        Ok(Self {
            ce,
            mce,
            clean_error: table.clean_error,
        })
    }
}

/// Eq. of the corruption benchmark: the ratio of severity-summed errors,
/// reported ×100 as percent.
pub fn corruption_error(
    table: &ErrorTable,
    baseline: &ErrorTable,
    corruption: &str,
) -> Result<f64> {
    let f = table
        .entries
        .get(corruption)
        .ok_or_else(|| Error::Data(format!("table lacks corruption '{corruption}'")))?;
    let b = baseline
        .entries
        .get(corruption)
        .ok_or_else(|| Error::Data(format!("baseline lacks corruption '{corruption}'")))?;
    let num: f64 = f.iter().sum();
    let den: f64 = b.iter().sum();
    if den <= 0.0 {
        return Err(Error::Argument(format!(
            "degenerate baseline: severity sum for '{corruption}' is {den}"
        )));
    }
    Ok(100.0 * num / den)
}

/// Unweighted arithmetic mean of CE values.
pub fn mean_corruption_error(ce: impl IntoIterator<Item = f64>) -> Result<f64> {
    let values: Vec<f64> = ce.into_iter().collect();
    if values.is_empty() {
        return Err(Error::Argument("mCE of an empty corruption set".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
