//! IDX files: big-endian `u32` magic, big-endian `u32` dimension sizes, then
//! unsigned-byte payload.

use super::{checksum_of_bytes, Dataset};
use crate::error::{Error, Result};
use crate::model::ImageShape;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse { offset, message: format!("truncated header: missing {what}") })
}

fn check_magic(bytes: &[u8], want: u32, file: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, "magic number")?;
    if magic != want {
        return Err(Error::Parse {
            offset: 0,
            message: format!("{file}: magic 0x{magic:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

/// Parse an image file and its label file into a dataset with pixels scaled
/// to `[0, 1]`. The class count is `max(label) + 1`, at least 10.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    check_magic(images, IDX_IMAGES_MAGIC, "images")?;
    check_magic(labels, IDX_LABELS_MAGIC, "labels")?;
    let n = read_u32(images, 4, "image count")? as usize;
    let rows = read_u32(images, 8, "row count")? as usize;
    let cols = read_u32(images, 12, "column count")? as usize;
    let n_labels = read_u32(labels, 4, "label count")? as usize;
    if n_labels != n {
        return Err(Error::Parse { offset: 4, message: format!("label file holds {n_labels} labels for {n} images") });
    }
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::Parse { offset: 8, message: "image dimensions must be positive".into() });
    }
    let payload = &images[16..];
    if payload.len() < n * dim {
        return Err(Error::Parse {
            offset: 16 + payload.len(),
            message: format!("images: truncated payload, expected {} bytes", n * dim),
        });
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() < n {
        return Err(Error::Parse {
            offset: 8 + label_bytes.len(),
            message: format!("labels: truncated payload, expected {n} bytes"),
        });
    }
    let features: Vec<f64> = payload[..n * dim].iter().map(|&b| b as f64 / 255.0).collect();
    let classes: Vec<usize> = label_bytes[..n].iter().map(|&b| b as usize).collect();
    let num_classes = classes.iter().max().map_or(0, |m| m + 1).max(10);
    let mut ds = Dataset::new(features, dim, classes, num_classes, "idx")?;
    ds.provenance.checksum = checksum_of_bytes(&[images, labels]);
    ds.with_image_shape(ImageShape { height: rows, width: cols, channels: 1 })
}

/// Serialize image rows back to an IDX image file. Pixels are mapped back with
/// `round(v · 255)`, which inverts the parser exactly.
pub fn write_idx_images(ds: &Dataset) -> Result<Vec<u8>> {
    let shape = ds.image_shape.unwrap_or(ImageShape { height: 1, width: ds.dim(), channels: 1 });
    if shape.channels != 1 {
        return Err(Error::InvalidInput("IDX images are single-channel".into()));
    }
    let mut out = Vec::with_capacity(16 + ds.features().len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend_from_slice(&(shape.height as u32).to_be_bytes());
    out.extend_from_slice(&(shape.width as u32).to_be_bytes());
    for &v in ds.features() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside [0, 1]")));
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn write_idx_labels(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + ds.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &l in ds.labels() {
        let b = u8::try_from(l).map_err(|_| Error::InvalidInput(format!("label {l} does not fit in a byte")))?;
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn single_two_by_two_image() {
        let mut img = header(IDX_IMAGES_MAGIC, &[1, 2, 2]);
        img.extend_from_slice(&[0, 255, 128, 0]);
        let mut lbl = header(IDX_LABELS_MAGIC, &[1]);
        lbl.push(7);
        let ds = parse_idx(&img, &lbl).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.row(0), &[0.0, 1.0, 128.0 / 255.0, 0.0]);
        assert_eq!(ds.label(0), 7);
        assert_eq!(ds.image_shape, Some(ImageShape { height: 2, width: 2, channels: 1 }));
    }

    #[test]
    fn zero_images_is_an_empty_dataset() {
        let img = header(IDX_IMAGES_MAGIC, &[0, 28, 28]);
        let lbl = header(IDX_LABELS_MAGIC, &[0]);
        let ds = parse_idx(&img, &lbl).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.dim(), 784);
    }

    #[test]
    fn swapped_files_fail_on_magic() {
        let img = header(IDX_IMAGES_MAGIC, &[0, 2, 2]);
        let lbl = header(IDX_LABELS_MAGIC, &[0]);
        match parse_idx(&lbl, &img) {
            Err(Error::Parse { offset: 0, message }) => assert!(message.contains("0x00000801")),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_idx(&img, &header(IDX_IMAGES_MAGIC, &[0, 2, 2])).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
    }

    #[test]
    fn truncation_and_count_mismatch_name_offsets() {
        let mut img = header(IDX_IMAGES_MAGIC, &[2, 2, 2]);
        img.extend_from_slice(&[1, 2, 3, 4, 5]);
        let mut lbl = header(IDX_LABELS_MAGIC, &[2]);
        lbl.extend_from_slice(&[0, 1]);
        assert!(matches!(parse_idx(&img, &lbl), Err(Error::Parse { offset: 21, .. })));

        let img = header(IDX_IMAGES_MAGIC, &[0, 2, 2]);
        assert!(matches!(parse_idx(&img, &lbl), Err(Error::Parse { offset: 4, .. })));
        assert!(matches!(parse_idx(&img[..10], &lbl), Err(Error::Parse { offset: 8, .. })));

        let mut img = header(IDX_IMAGES_MAGIC, &[2, 1, 1]);
        img.extend_from_slice(&[9, 9]);
        let mut short = header(IDX_LABELS_MAGIC, &[2]);
        short.push(1);
        assert!(matches!(parse_idx(&img, &short), Err(Error::Parse { offset: 9, .. })));
    }

    proptest! {
        #[test]
        fn image_payload_round_trips(n in 0usize..6, rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut img = header(IDX_IMAGES_MAGIC, &[n as u32, rows as u32, cols as u32]);
            img.extend((0..n * rows * cols).map(|_| rng.random::<u8>()));
            let mut lbl = header(IDX_LABELS_MAGIC, &[n as u32]);
            lbl.extend((0..n).map(|_| rng.random_range(0..10u8)));
            let ds = parse_idx(&img, &lbl).unwrap();
            prop_assert!(ds.features().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(write_idx_images(&ds).unwrap(), img);
            prop_assert_eq!(write_idx_labels(&ds).unwrap(), lbl);
        }
    }
}
