use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{images_to_target, images_to_tensor, make_training_pair, synthesize_dataset, ImageBuffer};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Equally sized `(lr, hr)` tile pairs.
#[derive(Clone, Debug)]
pub struct PairDataset {
    pairs: Vec<(ImageBuffer, ImageBuffer)>,
}

impl PairDataset {
    pub fn from_pairs(pairs: Vec<(ImageBuffer, ImageBuffer)>) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::invalid("dataset", "no training pairs"))?;
        let dims = |i: &ImageBuffer| (i.height(), i.width(), i.channels());
        let (lr0, hr0) = (dims(&first.0), dims(&first.1));
        if let Some(i) = pairs.iter().position(|(l, h)| dims(l) != lr0 || dims(h) != hr0) {
            return Err(Error::invalid(
                "dataset",
                format!("pair {i} differs in size from pair 0"),
            ));
        }
        Ok(PairDataset { pairs })
    }

    /// Tiles every image at `hr_tile` and downsamples each tile by `scale`.
    pub fn from_images(images: &[ImageBuffer], hr_tile: usize, scale: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for img in images {
            pairs.extend(make_training_pair(img, hr_tile, scale)?);
        }
        Self::from_pairs(pairs)
    }

    /// `count` synthetic images of side `hr_tile`, one pair each.
    pub fn synthetic(seed: u64, count: usize, hr_tile: usize, scale: usize) -> Result<Self> {
        Self::from_images(&synthesize_dataset(seed, count, hr_tile)?, hr_tile, scale)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(ImageBuffer, ImageBuffer)] {
        &self.pairs
    }

    /// `[N, C, H, W]` tensors for the given pair indices: LR as generator
    /// input, HR as training target (see `images_to_target`).
    pub fn batch<T: Element>(&self, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        let lr: Vec<ImageBuffer> = indices.iter().map(|&i| self.pairs[i].0.clone()).collect();
        let hr: Vec<ImageBuffer> = indices.iter().map(|&i| self.pairs[i].1.clone()).collect();
        Ok((images_to_tensor(&lr)?, images_to_target(&hr)?))
    }
}

/// Deterministic minibatch order: reshuffles the index set every pass.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        BatchSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..len).collect(),
            cursor: len,
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}
