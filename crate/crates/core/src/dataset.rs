//! Labeled image collections shared by training, evaluation, and episode
//! sampling.

use crate::error::{Error, Result};
use crate::Tensor;

/// A labeled set of single-example (1,C,H,W) images in [0,1].
#[derive(Debug, Clone)]
pub struct LabeledImages {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledImages {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if classes == 0 {
            return Err(Error::Data("dataset needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Example indices grouped per class.
    pub fn by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Stacks the given examples into one batch with their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let items: Vec<Tensor> = indices.iter().map(|&i| self.images[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((crate::tensor::Tensor::stack(&items)?, labels))
    }
}
