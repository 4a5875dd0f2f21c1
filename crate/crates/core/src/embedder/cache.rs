//! Binary embedding cache.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic  b"CECE"
//! u32    version (= 1)
//! u32    dim
//! u64    count
//! count × { u64 sentence hash, dim × f32 }
//! ```
//!
//! Records are written in ascending hash order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{sentence_hash, Embedding, Encoder};
use crate::textcore::Sentence;

const MAGIC: &[u8; 4] = b"CECE";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated cache file")]
    Truncated,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("trailing bytes after {0} records")]
    TrailingBytes(u64),
    #[error("non-finite value in record {0:#018x}")]
    NonFinite(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCache {
    dim: usize,
    entries: BTreeMap<u64, Vec<f32>>,
}

impl EmbeddingCache {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "cache dimension must be positive");
        EmbeddingCache {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Store `vector` under the hash of `sentence`, quantized to f32.
    pub fn insert(&mut self, sentence: &Sentence, vector: &Embedding) -> Result<(), CacheError> {
        self.insert_hash(sentence_hash(sentence), vector)
    }

    pub fn insert_hash(&mut self, hash: u64, vector: &Embedding) -> Result<(), CacheError> {
        if vector.dim() != self.dim {
            return Err(CacheError::DimMismatch {
                expected: self.dim,
                found: vector.dim(),
            });
        }
        if vector.values().iter().any(|v| !v.is_finite()) {
            return Err(CacheError::NonFinite(hash));
        }
        self.entries
            .insert(hash, vector.values().iter().map(|&v| v as f32).collect());
        Ok(())
    }

    pub fn get(&self, sentence: &Sentence) -> Option<Embedding> {
        self.get_hash(sentence_hash(sentence))
    }

    pub fn get_hash(&self, hash: u64) -> Option<Embedding> {
        self.entries
            .get(&hash)
            .map(|v| Embedding::new(v.iter().map(|&x| f64::from(x)).collect()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.entries.iter().map(|(h, v)| (*h, v.as_slice()))
    }

    /// Encode every sentence with `encoder` and cache the result.
    pub fn build<'a, E: Encoder>(
        encoder: &E,
        sentences: impl IntoIterator<Item = &'a Sentence>,
    ) -> Self {
        let mut cache = EmbeddingCache::new(encoder.dim());
        for s in sentences {
            cache
                .insert(s, &encoder.encode(s))
                .expect("encoder output has the encoder's dimension");
        }
        cache
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CacheError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for (hash, values) in &self.entries {
            w.write_all(&hash.to_le_bytes())?;
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Decode a cache. When `expected_dim` is given, a header with a different
    /// dimension is rejected.
    pub fn read_from<R: Read>(mut r: R, expected_dim: Option<usize>) -> Result<Self, CacheError> {
        let mut magic = [0u8; 4];
        if read_exact_or(&mut r, &mut magic, CacheError::BadMagic)? || &magic != MAGIC {
            return Err(CacheError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CacheError::UnsupportedVersion(version));
        }
        let dim = read_u32(&mut r)? as usize;
        if dim == 0 {
            return Err(CacheError::DimMismatch {
                expected: expected_dim.unwrap_or(1),
                found: 0,
            });
        }
        if let Some(expected) = expected_dim {
            if expected != dim {
                return Err(CacheError::DimMismatch {
                    expected,
                    found: dim,
                });
            }
        }
        let count = read_u64(&mut r)?;
        let mut entries = BTreeMap::new();
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let hash = read_u64(&mut r)?;
            read_exact_or(&mut r, &mut buf, CacheError::Truncated)?;
            let values: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(CacheError::NonFinite(hash));
            }
            entries.insert(hash, values);
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(CacheError::TrailingBytes(count));
        }
        Ok(EmbeddingCache { dim, entries })
    }

    pub fn write(&self, path: &Path) -> Result<(), CacheError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read(path: &Path, expected_dim: Option<usize>) -> Result<Self, CacheError> {
        Self::read_from(BufReader::new(File::open(path)?), expected_dim)
    }
}

/// Fills `buf`; maps a premature EOF to `on_eof`. Returns `Ok(false)` on
/// success.
fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], on_eof: CacheError) -> Result<bool, CacheError> {
    match r.read_exact(buf) {
        Ok(()) => Ok(false),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(on_eof),
        Err(e) => Err(e.into()),
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CacheError> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, CacheError::Truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CacheError> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, CacheError::Truncated)?;
    Ok(u64::from_le_bytes(b))
}

/// Serves vectors from a cache and falls back to another encoder on a miss.
pub struct CachedEncoder<E> {
    cache: EmbeddingCache,
    fallback: E,
}

impl<E: Encoder> CachedEncoder<E> {
    pub fn new(cache: EmbeddingCache, fallback: E) -> Result<Self, CacheError> {
        if cache.dim() != fallback.dim() {
            return Err(CacheError::DimMismatch {
                expected: fallback.dim(),
                found: cache.dim(),
            });
        }
        Ok(CachedEncoder { cache, fallback })
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl<E: Encoder> Encoder for CachedEncoder<E> {
    fn dim(&self) -> usize {
        self.cache.dim()
    }

    fn encode(&self, s: &Sentence) -> Embedding {
        self.cache.get(s).unwrap_or_else(|| self.fallback.encode(s))
    }
}
