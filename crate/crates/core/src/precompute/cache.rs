//! Binary feature cache (`.mewp`) and the dataset-level cache index.
//!
//! File layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MEWP"
//! 4       4     format version (u32, currently 1)
//! 8       4     n      (u32, node count)
//! 12      4     f      (u32, feature dimension)
//! 16      4     k      (u32, hop count)
//! 20      4     flags  (u32: bit0 stochastic, bit1 resample-each-epoch)
//! 24      8     seed   (u64, sampling seed)
//! 32      ...   2·(k+1) matrices, each n·f float32 values, row-major;
//!               Voronoi hops 0..=k then cell-type hops 0..=k
//! ```
//!
//! Total size is exactly 32 + 2·(k+1)·n·f·4 bytes. Values are stored in
//! float32; reads upcast losslessly to f64, so a read-back file re-written
//! is byte-identical.

use super::PrecomputedFeatures;
use crate::dense::Dense;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CACHE_MAGIC: [u8; 4] = *b"MEWP";
pub const CACHE_VERSION: u32 = 1;
pub const CACHE_HEADER_BYTES: usize = 32;

const FLAG_STOCHASTIC: u32 = 1;
const FLAG_RESAMPLE_EACH_EPOCH: u32 = 2;

/// Exact on-disk size for given dimensions.
pub fn cache_file_size(n: usize, f: usize, k: usize) -> u64 {
    CACHE_HEADER_BYTES as u64 + 2 * (k as u64 + 1) * n as u64 * f as u64 * 4
}

pub fn cache_write(pf: &PrecomputedFeatures, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> =
        Vec::with_capacity(cache_file_size(pf.n, pf.f, pf.k) as usize);
    buf.extend_from_slice(&CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(pf.n as u32).to_le_bytes());
    buf.extend_from_slice(&(pf.f as u32).to_le_bytes());
    buf.extend_from_slice(&(pf.k as u32).to_le_bytes());
    let mut flags = 0u32;
    if pf.stochastic {
        flags |= FLAG_STOCHASTIC;
    }
    if pf.resample_each_epoch {
        flags |= FLAG_RESAMPLE_EACH_EPOCH;
    }
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&pf.seed.to_le_bytes());
    for hops in [&pf.voronoi_hops, &pf.celltype_hops] {
        for m in hops.iter() {
            for &v in &m.data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn cache_read(path: &Path) -> Result<PrecomputedFeatures> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < CACHE_HEADER_BYTES {
        return Err(Error::TruncatedFile);
    }
    if bytes[0..4] != CACHE_MAGIC {
        return Err(Error::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != CACHE_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CACHE_VERSION });
    }
    let n = u32_at(8) as usize;
    let f = u32_at(12) as usize;
    let k = u32_at(16) as usize;
    let flags = u32_at(20);
    let seed = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    if bytes.len() as u64 != cache_file_size(n, f, k) {
        return Err(Error::TruncatedFile);
    }

    let mut offset = CACHE_HEADER_BYTES;
    let read_hops = |offset: &mut usize| -> Vec<Dense> {
        (0..=k)
            .map(|_| {
                let mut data = Vec::with_capacity(n * f);
                for _ in 0..n * f {
                    let v = f32::from_le_bytes(bytes[*offset..*offset + 4].try_into().unwrap());
                    data.push(v as f64);
                    *offset += 4;
                }
                Dense::from_vec(n, f, data)
            })
            .collect()
    };
    let voronoi_hops = read_hops(&mut offset);
    let celltype_hops = read_hops(&mut offset);
    Ok(PrecomputedFeatures {
        n,
        f,
        k,
        seed,
        stochastic: flags & FLAG_STOCHASTIC != 0,
        resample_each_epoch: flags & FLAG_RESAMPLE_EACH_EPOCH != 0,
        voronoi_hops,
        celltype_hops,
    })
}

/// FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// FNV-1a of a file's contents, hex-encoded.
pub fn fnv1a64_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:016x}", fnv1a64(&bytes)))
}

/// Per-column feature standardization parameters, estimated on the training
/// split and applied everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, features: &mut Dense) {
        assert_eq!(features.cols, self.mean.len());
        for i in 0..features.rows {
            for (j, v) in features.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub path: String,
    pub hash: String,
    pub n: usize,
    pub f: usize,
}

/// Dataset-level index mapping image ids to cache files, written next to the
/// `.mewp` files as `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub hops: usize,
    pub seed: u64,
    pub stochastic: bool,
    pub resample_each_epoch: bool,
    pub standardize: Option<Standardization>,
    pub images: BTreeMap<String, CacheEntry>,
}

impl CacheIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample_features(seed: u64) -> PrecomputedFeatures {
        let mut rng = crate::rng::stream(seed, 0xCAC4E);
        let (n, f, k) = (7, 3, 2);
        let mk = |rng: &mut rand_chacha::ChaCha12Rng| {
            Dense::from_vec(n, f, (0..n * f).map(|_| rng.random::<f32>() as f64).collect())
        };
        PrecomputedFeatures {
            n,
            f,
            k,
            seed: 99,
            stochastic: true,
            resample_each_epoch: false,
            voronoi_hops: (0..=k).map(|_| mk(&mut rng)).collect(),
            celltype_hops: (0..=k).map(|_| mk(&mut rng)).collect(),
        }
    }

    #[test]
    fn round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.mewp");
        // values here are exactly representable in f32, so one write-read
        // cycle reproduces the input bit for bit
        let pf = sample_features(1);
        cache_write(&pf, &path).unwrap();
        let back = cache_read(&path).unwrap();
        assert_eq!(back, pf);

        // and a rewrite of the read-back is byte-identical on disk
        let path2 = dir.path().join("img2.mewp");
        cache_write(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn file_size_matches_formula() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.mewp");
        let pf = sample_features(2);
        cache_write(&pf, &path).unwrap();
        let meta = std::fs::metadata(&path).unwrap();
        assert_eq!(meta.len(), cache_file_size(pf.n, pf.f, pf.k));
        assert_eq!(meta.len(), 32 + 2 * 3 * 7 * 3 * 4);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.mewp");
        cache_write(&sample_features(3), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(cache_read(&path), Err(Error::BadMagic)));
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.mewp");
        cache_write(&sample_features(4), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            cache_read(&path),
            Err(Error::VersionMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.mewp");
        cache_write(&sample_features(5), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(cache_read(&path), Err(Error::TruncatedFile)));
    }

    #[test]
    fn index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let index = CacheIndex {
            hops: 3,
            seed: 5,
            stochastic: true,
            resample_each_epoch: false,
            standardize: Some(Standardization { mean: vec![0.0, 1.0], std: vec![1.0, 2.0] }),
            images: BTreeMap::from([(
                "img_0000".to_string(),
                CacheEntry { path: "img_0000.mewp".into(), hash: "abc".into(), n: 10, f: 2 },
            )]),
        };
        index.save(&path).unwrap();
        assert_eq!(CacheIndex::load(&path).unwrap(), index);
    }
}
