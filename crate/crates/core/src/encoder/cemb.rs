//! The CEMB embedding file.
//!
//! ```text
//! "CEMB" | version u32 = 1 | count u32 | dim u32
//! count x ( id_len u16 | id bytes (UTF-8) | dim x f32 )
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::MentionEmbedding;

const MAGIC: &[u8; 4] = b"CEMB";
const VERSION: u32 = 1;

/// Writes embeddings in record order. Vectors are narrowed to `f32`.
pub fn write_embeddings<W: Write>(mut out: W, dim: usize, records: &[MentionEmbedding]) -> Result<()> {
    let count = u32::try_from(records.len()).map_err(|_| Error::Format("too many records".into()))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::Format("dimension too large".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    out.write_all(&dim32.to_le_bytes())?;
    for rec in records {
        if rec.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rec.vector.len(),
            });
        }
        let id = rec.mention_id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::Format(format!("mention id of {} bytes is too long", id.len())))?;
        out.write_all(&id_len.to_le_bytes())?;
        out.write_all(id)?;
        for &v in &rec.vector {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a CEMB stream, returning `(dim, records)`. Duplicate ids are
/// rejected.
pub fn read_embeddings<R: Read>(mut input: R) -> Result<(usize, Vec<MentionEmbedding>)> {
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = word(8) as usize;
    let dim = word(12) as usize;
    let mut seen = HashSet::with_capacity(count);
    let mut records = Vec::with_capacity(count.min(1 << 20));
    let truncated = |n: usize| move |_| Error::Format(format!("truncated at record {n}"));
    let mut vec_buf = vec![0u8; 4 * dim];
    for n in 0..count {
        let mut len = [0u8; 2];
        input.read_exact(&mut len).map_err(truncated(n))?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        input.read_exact(&mut id).map_err(truncated(n))?;
        let id = String::from_utf8(id).map_err(|_| Error::Format(format!("record {n}: id is not UTF-8")))?;
        input.read_exact(&mut vec_buf).map_err(truncated(n))?;
        let vector = vec_buf
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        records.push(MentionEmbedding { mention_id: id, vector });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok((dim, records))
}

pub fn write_embeddings_file(path: &Path, dim: usize, records: &[MentionEmbedding]) -> Result<()> {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, dim, records)?;
    std::fs::write(path, buf).map_err(|e| Error::from(e).at_path(path))
}

pub fn read_embeddings_file(path: &Path) -> Result<(usize, Vec<MentionEmbedding>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    read_embeddings(bytes.as_slice()).map_err(|e| e.at_path(path))
}
