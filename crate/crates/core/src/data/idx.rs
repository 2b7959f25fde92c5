//! IDX (MNIST-family) file parsing. All header fields are big-endian u32.

use std::fs;
use std::path::Path;

use super::SampleSet;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32_be(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::parse(self.pos as u64, format!("truncated header ({what})")))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::parse(
                self.bytes.len() as u64,
                format!("truncated {what}: need {n} bytes from offset {}", self.pos),
            )),
        }
    }
}

fn expect_magic(r: &mut Reader<'_>, magic: u32) -> Result<()> {
    if r.bytes.is_empty() {
        return Err(Error::parse(0, "truncated header"));
    }
    let got = r.u32_be("magic")?;
    if got != magic {
        return Err(Error::parse(
            0,
            format!("bad magic 0x{got:08x}, expected 0x{magic:08x}"),
        ));
    }
    Ok(())
}

/// Parse an IDX3 image file into `(count, rows * cols, pixels / 255)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = Reader { bytes, pos: 0 };
    expect_magic(&mut r, IDX_IMAGES_MAGIC)?;
    let count = r.u32_be("image count")? as usize;
    let rows = r.u32_be("row count")? as usize;
    let cols = r.u32_be("column count")? as usize;
    let dim = rows * cols;
    let pixels = r.take(count * dim, "image data")?;
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok((count, dim, features))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader { bytes, pos: 0 };
    expect_magic(&mut r, IDX_LABELS_MAGIC)?;
    let count = r.u32_be("label count")? as usize;
    let labels = r.take(count, "label data")?;
    Ok(labels.iter().map(|&l| l as usize).collect())
}

/// Load an image file and its label file into one sample set.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<SampleSet> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    let (count, dim, features) = parse_idx_images(&images)?;
    let labels = parse_idx_labels(&labels)?;
    if labels.len() != count {
        // Offset 4 is the count field of the label file.
        return Err(Error::parse(
            4,
            format!("label count {} does not match image count {count}", labels.len()),
        ));
    }
    SampleSet::from_parts(dim, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(count: u32, rows: u32, cols: u32, data: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(data);
        b
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn one_two_by_two_image() {
        let (count, dim, features) = parse_idx_images(&image_file(1, 2, 2, &[0, 255, 0, 255])).unwrap();
        assert_eq!((count, dim), (1, 4));
        assert_eq!(features, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(parse_idx_labels(&label_file(&[7])).unwrap(), vec![7]);
    }

    #[test]
    fn empty_file_is_truncated_header() {
        let err = parse_idx_images(&[]).unwrap_err();
        match err {
            Error::Parse { offset, message } => {
                assert_eq!(offset, 0);
                assert_eq!(message, "truncated header");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_truncation_report_offsets() {
        let err = parse_idx_images(&label_file(&[1])).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");

        let err = parse_idx_images(&image_file(2, 2, 2, &[0; 5])).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 21, .. }), "{err}");

        let err = parse_idx_images(&IDX_IMAGES_MAGIC.to_be_bytes()[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 4, .. }), "{err}");
    }

    #[test]
    fn load_checks_count_agreement() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        fs::write(&img, image_file(2, 1, 2, &[0, 51, 102, 255])).unwrap();
        fs::write(&lbl, label_file(&[3])).unwrap();
        assert!(matches!(load_idx(&img, &lbl), Err(Error::Parse { .. })));

        fs::write(&lbl, label_file(&[3, 9])).unwrap();
        let set = load_idx(&img, &lbl).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.features(0), &[0.0, 0.2]);
        assert_eq!(set.labels(), &[3, 9]);
    }
}
