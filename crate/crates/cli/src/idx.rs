//! IDX file parsing (the MNIST container format), bit-exact.

use std::io::Read;
use std::path::Path;

use aanet_core::{Error, LabeledImages, Result, Tensor};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Data(format!("idx file truncated reading {what}")));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(bytes)
}

/// Parses an images/labels IDX pair into unit-range single-channel tensors.
/// Byte values scale to [0,1] by division with 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImages> {
    let img_bytes = read_file(images_path)?;
    let magic = read_u32(&img_bytes, 0, "images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "bad images magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32(&img_bytes, 4, "image count")? as usize;
    let rows = read_u32(&img_bytes, 8, "rows")? as usize;
    let cols = read_u32(&img_bytes, 12, "cols")? as usize;
    let expected = 16 + count * rows * cols;
    if img_bytes.len() != expected {
        return Err(Error::Data(format!(
            "images payload is {} bytes, header implies {expected}",
            img_bytes.len()
        )));
    }

    let lbl_bytes = read_file(labels_path)?;
    let magic = read_u32(&lbl_bytes, 0, "labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Data(format!(
            "bad labels magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let lbl_count = read_u32(&lbl_bytes, 4, "label count")? as usize;
    if lbl_bytes.len() != 8 + lbl_count {
        return Err(Error::Data(format!(
            "labels payload is {} bytes, header implies {}",
            lbl_bytes.len(),
            8 + lbl_count
        )));
    }
    if lbl_count != count {
        return Err(Error::Data(format!(
            "{count} images but {lbl_count} labels"
        )));
    }

    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        let data: Vec<f64> = img_bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        images.push(Tensor::from_vec(1, 1, rows, cols, data)?);
        labels.push(lbl_bytes[8 + i] as usize);
    }
    let classes = labels.iter().max().copied().unwrap_or(0) + 1;
    LabeledImages::new(images, labels, classes)
}

/// Serializes a dataset back to an IDX pair (used by fixtures and tests).
pub fn write_idx(data: &LabeledImages, images_path: &Path, labels_path: &Path) -> Result<()> {
    let count = data.len();
    let (_, _, h, w) = data
        .images
        .first()
        .ok_or_else(|| Error::Data("cannot write an empty dataset".into()))?
        .shape();
    let mut img = Vec::with_capacity(16 + count * h * w);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(count as u32).to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    for t in &data.images {
        for &v in t.data() {
            img.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut lbl = Vec::with_capacity(8 + count);
    lbl.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(count as u32).to_be_bytes());
    for &l in &data.labels {
        lbl.push(l as u8);
    }
    std::fs::write(images_path, img)?;
    std::fs::write(labels_path, lbl)?;
    Ok(())
}
