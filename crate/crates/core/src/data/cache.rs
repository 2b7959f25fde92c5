//! Versioned binary snapshot of a [`FederatedDataset`].
//!
//! Layout after the common frame header (`FSDS`, version, JSON header):
//! for every shard and then the test set, a little-endian u64 sample count,
//! that many u32 labels and `count * feature_dim` f64 features.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClientShard, FederatedDataset, SampleSet};
use crate::frame;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FSDS";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    num_clients: usize,
    num_classes: usize,
    feature_dim: usize,
    /// Free-form description of how the dataset was produced.
    source: String,
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &FederatedDataset, source: &str) -> Result<()> {
    let header = Header {
        num_clients: ds.num_clients(),
        num_classes: ds.num_classes(),
        feature_dim: ds.feature_dim(),
        source: source.to_owned(),
    };
    frame::write_header(w, MAGIC, CACHE_VERSION, &header)?;
    for shard in ds.shards() {
        write_set(w, &shard.samples)?;
    }
    write_set(w, ds.test_set())
}

fn write_set<W: Write>(w: &mut W, set: &SampleSet) -> Result<()> {
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    let mut labels = Vec::with_capacity(set.len() * 4);
    for &y in set.labels() {
        labels.extend_from_slice(&(y as u32).to_le_bytes());
    }
    w.write_all(&labels)?;
    frame::write_f64s(w, set.feature_matrix())
}

/// Read a snapshot, returning the dataset and the recorded source string.
pub fn read_dataset<R: Read>(r: &mut R) -> Result<(FederatedDataset, String)> {
    let (header, mut offset): (Header, u64) = frame::read_header(r, MAGIC, CACHE_VERSION)?;
    let mut shards = Vec::with_capacity(header.num_clients);
    for k in 0..header.num_clients {
        let samples = read_set(r, header.feature_dim, &mut offset)?;
        shards.push(ClientShard { client_id: k, samples });
    }
    let test = read_set(r, header.feature_dim, &mut offset)?;
    let ds = FederatedDataset::new(shards, test, header.num_classes)?;
    Ok((ds, header.source))
}

fn read_set<R: Read>(r: &mut R, dim: usize, offset: &mut u64) -> Result<SampleSet> {
    let n = frame::read_u64(r, *offset, "sample count")? as usize;
    *offset += 8;
    let mut raw = vec![0u8; n * 4];
    frame::read_exact(r, &mut raw, *offset, "labels")?;
    *offset += raw.len() as u64;
    let labels = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let features = frame::read_f64s(r, n * dim, *offset, "features")?;
    *offset += (n * dim * 8) as u64;
    SampleSet::from_parts(dim, features, labels).map_err(|e| Error::parse(*offset, e.to_string()))
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &FederatedDataset, source: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, ds, source)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(FederatedDataset, String)> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn snapshot_reload_is_exact() {
        let spec = SyntheticSpec {
            num_clients: 4,
            total_samples: 200,
            seed: 5,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, "synthetic").unwrap();
        let (back, source) = read_dataset(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(source, "synthetic");

        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_dataset(&mut &cut[..]), Err(Error::Parse { .. })));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_dataset(&mut bad.as_slice()), Err(Error::Parse { offset: 4, .. })));
    }
}
