//! IDX (MNIST layout) images and labels, plus a synthetic generator.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::fixed::FixParams;
use crate::error::{Error, Result};
use crate::transport::wire::Reader;

const IMAGES_MAGIC: u32 = 0x0803;
const LABELS_MAGIC: u32 = 0x0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

fn be_u32(r: &mut Reader<'_>) -> Result<u32> {
    Ok(u32::from_be_bytes(r.take(4)?.try_into().expect("4 bytes")))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Self> {
        let mut r = Reader::new(images);
        if be_u32(&mut r)? != IMAGES_MAGIC {
            return Err(Error::decode("not an IDX image file"));
        }
        let n = be_u32(&mut r)? as usize;
        let (rows, cols) = (be_u32(&mut r)? as usize, be_u32(&mut r)? as usize);
        let images = (0..n).map(|_| Ok(r.take(rows * cols)?.to_vec())).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let mut r = Reader::new(labels);
        if be_u32(&mut r)? != LABELS_MAGIC {
            return Err(Error::decode("not an IDX label file"));
        }
        if be_u32(&mut r)? as usize != n {
            return Err(Error::decode("image and label counts differ"));
        }
        let labels = r.take(n)?.to_vec();
        r.finish()?;
        Ok(Dataset { rows, cols, images, labels })
    }

    pub fn load_idx(images: &Path, labels: &Path) -> Result<Self> {
        Self::parse_idx(&fs::read(images)?, &fs::read(labels)?)
    }

    pub fn to_idx(&self) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::with_capacity(16 + self.len() * self.rows * self.cols);
        for v in [IMAGES_MAGIC, self.len() as u32, self.rows as u32, self.cols as u32] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        for i in &self.images {
            img.extend_from_slice(i);
        }
        let mut lab = Vec::with_capacity(8 + self.len());
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(self.len() as u32).to_be_bytes());
        lab.extend_from_slice(&self.labels);
        (img, lab)
    }

    /// Class-dependent blobs on noise; learnable but not trivially separable.
    pub fn synthetic(n: usize, rows: usize, cols: usize, classes: u8, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % classes as usize) as u8;
            let (cy, cx) = (
                (label as usize * 7 + 3) % rows.max(1),
                (label as usize * 5 + rows / 3) % cols.max(1),
            );
            let img = (0..rows * cols)
                .map(|p| {
                    let (y, x) = ((p / cols) as f64, (p % cols) as f64);
                    let d2 = (y - cy as f64).powi(2) + (x - cx as f64).powi(2);
                    let v = 200.0 * (-d2 / 8.0).exp() + rng.random_range(0.0..40.0);
                    v.min(255.0) as u8
                })
                .collect();
            images.push(img);
            labels.push(label);
        }
        Dataset { rows, cols, images, labels }
    }

    pub fn take(&self, n: usize) -> Self {
        Dataset { rows: self.rows, cols: self.cols, images: self.images[..n.min(self.len())].to_vec(), labels: self.labels[..n.min(self.len())].to_vec() }
    }

    /// Pixel p maps to round(p / 255) at the fixed-point scale.
    pub fn fixed_image(&self, i: usize, fix: &FixParams) -> Vec<i64> {
        self.images[i].iter().map(|&p| ((p as i64) * fix.one() * 2 + 255) / 510).collect()
    }
}
