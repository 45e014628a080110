//! Embedding cache files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic     4 bytes  "FNEC"
//! version   u32      1
//! name_len  u32, then name_len bytes of UTF-8 provider name
//! meta_len  u32, then meta_len bytes of a JSON object of string metadata
//! d_enc     u32
//! count     u64      number of records
//! record*:
//!   id_len  u32, then id_len bytes of UTF-8 article id
//!   channel u8       0 = title, 1 = body, 2 = image
//!   m       u32      number of rows
//!   data    m * d_enc f64, row-major
//! ```
//!
//! Records are written sorted by `(id, channel)`, so a cache is a pure
//! function of its contents. Files not starting with the magic are parsed as
//! the JSON fallback:
//! `{"provider": .., "d_enc": .., "meta": {..}, "records": [{"id", "channel", "m", "data"}]}`
//! where `meta` may be omitted.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    Channel, EmbedKey, EmbeddingProvider, EmbeddingSequence, ImageEmbedder, TextEmbedder,
};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FNEC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    pub provider: String,
    pub d_enc: usize,
    /// Free-form provenance such as seeds and config hashes; keys sorted.
    pub meta: BTreeMap<String, String>,
    records: BTreeMap<(String, Channel), EmbeddingSequence>,
}

#[derive(Serialize, Deserialize)]
struct JsonCache {
    provider: String,
    d_enc: usize,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    records: Vec<JsonRecord>,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    channel: Channel,
    m: usize,
    data: Vec<f64>,
}

impl EmbeddingCache {
    pub fn new(provider: impl Into<String>, d_enc: usize) -> Self {
        EmbeddingCache {
            provider: provider.into(),
            d_enc,
            meta: BTreeMap::new(),
            records: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: &str, channel: Channel, seq: EmbeddingSequence) -> Result<()> {
        if seq.width() != self.d_enc {
            return Err(Error::dims(
                format!("cache record {id}/{channel}"),
                self.d_enc,
                seq.width(),
            ));
        }
        self.records.insert((id.to_string(), channel), seq);
        Ok(())
    }

    pub fn get(&self, id: &str, channel: Channel) -> Option<&EmbeddingSequence> {
        self.records.get(&(id.to_string(), channel))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.provider.len() as u32).to_le_bytes());
        out.extend_from_slice(self.provider.as_bytes());
        let meta = serde_json::to_string(&self.meta).expect("string map serialises");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.d_enc as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for ((id, channel), seq) in &self.records {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.push(channel.code());
            out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
            for v in seq.rows().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.starts_with(MAGIC) {
            let json: JsonCache = serde_json::from_slice(bytes)?;
            let mut cache = EmbeddingCache::new(json.provider, json.d_enc);
            cache.meta = json.meta;
            for r in json.records {
                if r.data.len() != r.m * cache.d_enc {
                    return Err(Error::dims(
                        format!("cache record {}/{} payload", r.id, r.channel),
                        r.m * cache.d_enc,
                        r.data.len(),
                    ));
                }
                let rows = Array2::from_shape_vec((r.m, cache.d_enc), r.data)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                cache.insert(&r.id, r.channel, EmbeddingSequence::new(rows)?)?;
            }
            return Ok(cache);
        }

        let mut rd = Reader { bytes, pos: 4 };
        let version = rd.u32()?;
        if version != VERSION {
            return Err(rd.fail(format!("unsupported cache version {version}")));
        }
        let name_len = rd.u32()? as usize;
        let provider = rd.string(name_len)?;
        let meta_len = rd.u32()? as usize;
        let meta_json = rd.string(meta_len)?;
        let meta = serde_json::from_str(&meta_json).map_err(|e| rd.fail(format!("bad metadata: {e}")))?;
        let d_enc = rd.u32()? as usize;
        let count = rd.u64()?;
        let mut cache = EmbeddingCache::new(provider, d_enc);
        cache.meta = meta;
        for _ in 0..count {
            let id_len = rd.u32()? as usize;
            let id = rd.string(id_len)?;
            let code = rd.take(1)?[0];
            let channel =
                Channel::from_code(code).ok_or_else(|| rd.fail(format!("bad channel code {code}")))?;
            let m = rd.u32()? as usize;
            let n = m
                .checked_mul(d_enc)
                .ok_or_else(|| rd.fail("record size overflow".into()))?;
            let raw = rd.take(n.checked_mul(8).ok_or_else(|| rd.fail("record size overflow".into()))?)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let rows = Array2::from_shape_vec((m, d_enc), data).expect("m x d_enc");
            cache.insert(&id, channel, EmbeddingSequence::new(rows)?)?;
        }
        if rd.pos != bytes.len() {
            return Err(rd.fail("trailing bytes after last record".into()));
        }
        Ok(cache)
    }

    pub fn to_json(&self) -> Result<String> {
        let records = self
            .records
            .iter()
            .map(|((id, channel), seq)| JsonRecord {
                id: id.clone(),
                channel: *channel,
                m: seq.len(),
                data: seq.rows().iter().copied().collect(),
            })
            .collect();
        Ok(serde_json::to_string(&JsonCache {
            provider: self.provider.clone(),
            d_enc: self.d_enc,
            meta: self.meta.clone(),
            records,
        })?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: String) -> Error {
        Error::InvalidArgument(format!("embedding cache at byte {}: {message}", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.fail("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.fail("invalid UTF-8".into()))
    }
}

/// Serves embeddings from an [`EmbeddingCache`], keyed by article id and
/// channel. The text or path argument is ignored.
#[derive(Debug, Clone)]
pub struct PrecomputedProvider {
    cache: EmbeddingCache,
}

impl PrecomputedProvider {
    pub fn new(cache: EmbeddingCache) -> Self {
        PrecomputedProvider { cache }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(EmbeddingCache::load(path)?))
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn lookup(&self, key: EmbedKey<'_>) -> Result<EmbeddingSequence> {
        self.cache
            .get(key.article_id, key.channel)
            .cloned()
            .ok_or_else(|| Error::Provider {
                provider: self.name().to_string(),
                key: key.to_string(),
                message: "no cache entry".into(),
            })
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn name(&self) -> &str {
        "precomputed"
    }

    fn d_enc(&self) -> usize {
        self.cache.d_enc
    }
}

impl TextEmbedder for PrecomputedProvider {
    fn embed_text(&self, key: EmbedKey<'_>, _text: &str) -> Result<EmbeddingSequence> {
        self.lookup(key)
    }
}

impl ImageEmbedder for PrecomputedProvider {
    fn embed_image(&self, key: EmbedKey<'_>, _path: &Path) -> Result<EmbeddingSequence> {
        self.lookup(key)
    }
}
