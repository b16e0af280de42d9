//! Few-shot episode sampling and nearest-centroid classification.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledImages;
use crate::error::{Error, Result};
use crate::scalar::{to_f64, Scalar};
use crate::Tensor;

/// One few-shot task: a labeled support set for adaptation and a disjoint
/// query set for evaluation. Labels are episode-local (0..way); `class_map`
/// records the original class behind each episode label.
#[derive(Debug, Clone)]
pub struct Episode {
    pub support_images: Vec<Tensor>,
    pub support_labels: Vec<usize>,
    pub query_images: Vec<Tensor>,
    pub query_labels: Vec<usize>,
    pub way: usize,
    pub shots: usize,
    pub class_map: Vec<usize>,
}

/// Samples one episode: `way` classes chosen uniformly without replacement,
/// and within each class a seeded shuffle before the support/query split, so
/// repeated sampling never visits examples in a fixed order.
pub fn sample_episode(
    data: &LabeledImages,
    way: usize,
    shots: usize,
    query_per_class: usize,
    seed: u64,
) -> Result<Episode> {
    if way == 0 || shots == 0 || query_per_class == 0 {
        return Err(Error::Argument(
            "way, shots, and query_per_class must be positive".into(),
        ));
    }
    if data.classes < way {
        return Err(Error::Data(format!(
            "dataset has {} classes, episode needs {way}",
            data.classes
        )));
    }
    let by_class = data.by_class();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut class_ids: Vec<usize> = (0..data.classes).collect();
    class_ids.shuffle(&mut rng);
    class_ids.truncate(way);

    let mut episode = Episode {
        support_images: Vec::with_capacity(way * shots),
        support_labels: Vec::with_capacity(way * shots),
        query_images: Vec::with_capacity(way * query_per_class),
        query_labels: Vec::with_capacity(way * query_per_class),
        way,
        shots,
        class_map: class_ids.clone(),
    };
    for (episode_label, &class) in class_ids.iter().enumerate() {
        let mut members = by_class[class].clone();
        if members.len() < shots + query_per_class {
            return Err(Error::Data(format!(
                "class {class} has {} examples, episode needs {}",
                members.len(),
                shots + query_per_class
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..shots] {
            episode.support_images.push(data.images[i].clone());
            episode.support_labels.push(episode_label);
        }
        for &i in &members[shots..shots + query_per_class] {
            episode.query_images.push(data.images[i].clone());
            episode.query_labels.push(episode_label);
        }
    }
    Ok(episode)
}

/// Nearest-centroid classification: per-class mean of the support features,
/// queries assigned to the closest centroid by Euclidean distance, ties
/// broken toward the lowest class index.
pub fn ncc_classify<S: Scalar>(
    support_features: &[Vec<S>],
    support_labels: &[usize],
    query_features: &[Vec<S>],
) -> Result<Vec<usize>> {
    if support_features.len() != support_labels.len() || support_features.is_empty() {
        return Err(Error::Argument(
            "support features and labels must be non-empty and aligned".into(),
        ));
    }
    let dim = support_features[0].len();
    if support_features.iter().any(|f| f.len() != dim)
        || query_features.iter().any(|f| f.len() != dim)
    {
        return Err(Error::Dimension("feature dimensions differ".into()));
    }
    let classes = support_labels.iter().max().copied().unwrap_or(0) + 1;
    let mut sums = vec![vec![S::zero(); dim]; classes];
    let mut counts = vec![0usize; classes];
    for (f, &l) in support_features.iter().zip(support_labels) {
        counts[l] += 1;
        for (acc, &v) in sums[l].iter_mut().zip(f) {
            *acc = *acc + v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "class {empty} has no support examples"
        )));
    }
    let centroids: Vec<Vec<S>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let inv = S::one() / S::from_usize(c).expect("count fits scalar");
            s.into_iter().map(|v| v * inv).collect()
        })
        .collect();

    Ok(query_features
        .iter()
        .map(|q| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, c) in centroids.iter().enumerate() {
                let d: f64 = q
                    .iter()
                    .zip(c)
                    .map(|(&a, &b)| {
                        let diff = to_f64(a) - to_f64(b);
                        diff * diff
                    })
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect())
}
