//! Example files.
//!
//! **JSONL**: one object per line with the fields, in order, `ids`,
//! `segment_ids`, `word_ids` (`-1` for specials), `masked_positions`,
//! `masked_labels`, `replacements` (one of `M`/`R`/`K` per masked
//! position, as a string) and `is_next`.
//!
//! **Binary** (all integers little-endian). A 24 byte header:
//!
//! | bytes | field |
//! |-------|-------|
//! | 0..8  | magic `EUSPTEX1` |
//! | 8..12 | `u32` max_len `L` |
//! | 12..16| `u32` max predictions `P` (= `L`) |
//! | 16..24| `u64` record count |
//!
//! followed by fixed-width records of `8 + 9L + 7P` bytes:
//! `u16` length, `u16` masked count, `u8` is_next, 3 zero bytes,
//! `L x u32` ids, `L x u8` segment ids, `L x i32` word ids,
//! `P x u16` masked positions, `P x u32` labels, `P x u8` replacement codes.
//! Unused slots are zero, except word ids which are `-1`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::masking::Replacement;
use super::PretrainExample;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"EUSPTEX1";

#[derive(Serialize, Deserialize)]
struct Record {
    ids: Vec<u32>,
    segment_ids: Vec<u8>,
    word_ids: Vec<i64>,
    masked_positions: Vec<u32>,
    masked_labels: Vec<u32>,
    replacements: String,
    is_next: bool,
}

fn word_to_i64(w: Option<u32>) -> i64 {
    w.map_or(-1, i64::from)
}

pub fn write_jsonl<'a, W: Write>(out: &mut W, examples: impl IntoIterator<Item = &'a PretrainExample>) -> Result<()> {
    for ex in examples {
        let rec = Record {
            ids: ex.ids.clone(),
            segment_ids: ex.segment_ids.clone(),
            word_ids: ex.word_ids.iter().copied().map(word_to_i64).collect(),
            masked_positions: ex.masked_positions.clone(),
            masked_labels: ex.masked_labels.clone(),
            replacements: ex.replacements.iter().map(|r| r.code() as char).collect(),
            is_next: ex.is_next,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<PretrainExample>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let replacements = rec
            .replacements
            .bytes()
            .map(|c| Replacement::from_code(c).ok_or_else(|| Error::parse(i + 1, format!("bad replacement code {c}"))))
            .collect::<Result<Vec<_>>>()?;
        let ex = PretrainExample {
            ids: rec.ids,
            segment_ids: rec.segment_ids,
            word_ids: rec.word_ids.iter().map(|&w| u32::try_from(w).ok()).collect(),
            masked_positions: rec.masked_positions,
            masked_labels: rec.masked_labels,
            replacements,
            is_next: rec.is_next,
        };
        ex.validate().map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

fn record_size(max_len: usize) -> usize {
    8 + 9 * max_len + 7 * max_len
}

pub fn write_binary<'a, W: Write>(
    out: &mut W,
    max_len: usize,
    examples: impl IntoIterator<Item = &'a PretrainExample>,
) -> Result<()> {
    if max_len > u16::MAX as usize {
        return Err(Error::Config(format!("max_len {max_len} too large for the binary format")));
    }
    let examples: Vec<&PretrainExample> = examples.into_iter().collect();
    let mut buf = Vec::with_capacity(24 + examples.len() * record_size(max_len));
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(max_len as u32).to_le_bytes());
    buf.extend_from_slice(&(max_len as u32).to_le_bytes());
    buf.extend_from_slice(&(examples.len() as u64).to_le_bytes());
    for ex in examples {
        if ex.len() > max_len || ex.masked_positions.len() > max_len {
            return Err(Error::Input(format!("example of length {} exceeds max_len {max_len}", ex.len())));
        }
        let pad = |n: usize| max_len - n;
        buf.extend_from_slice(&(ex.len() as u16).to_le_bytes());
        buf.extend_from_slice(&(ex.masked_positions.len() as u16).to_le_bytes());
        buf.extend_from_slice(&[ex.is_next as u8, 0, 0, 0]);
        for &id in &ex.ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        buf.resize(buf.len() + 4 * pad(ex.len()), 0);
        buf.extend_from_slice(&ex.segment_ids);
        buf.resize(buf.len() + pad(ex.len()), 0);
        for &w in &ex.word_ids {
            buf.extend_from_slice(&(word_to_i64(w) as i32).to_le_bytes());
        }
        for _ in 0..pad(ex.len()) {
            buf.extend_from_slice(&(-1i32).to_le_bytes());
        }
        let m = ex.masked_positions.len();
        for &p in &ex.masked_positions {
            buf.extend_from_slice(&(p as u16).to_le_bytes());
        }
        buf.resize(buf.len() + 2 * pad(m), 0);
        for &l in &ex.masked_labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        buf.resize(buf.len() + 4 * pad(m), 0);
        buf.extend(ex.replacements.iter().map(|r| r.code()));
        buf.resize(buf.len() + pad(m), 0);
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<(usize, Vec<PretrainExample>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Input(format!("binary example file: {msg}"));
    if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
        return Err(bad("missing header"));
    }
    let u32_at = |b: &[u8], o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
    let u16_at = |b: &[u8], o: usize| u16::from_le_bytes(b[o..o + 2].try_into().unwrap());
    let max_len = u32_at(&bytes, 8) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let size = record_size(max_len);
    if bytes.len() != 24 + count * size {
        return Err(bad("length does not match header"));
    }
    let mut out = Vec::with_capacity(count);
    for rec in bytes[24..].chunks_exact(size) {
        let len = u16_at(rec, 0) as usize;
        let m = u16_at(rec, 2) as usize;
        if len > max_len || m > max_len {
            return Err(bad("record counts exceed max_len"));
        }
        let is_next = rec[4] != 0;
        let ids_at = 8;
        let seg_at = ids_at + 4 * max_len;
        let word_at = seg_at + max_len;
        let pos_at = word_at + 4 * max_len;
        let lab_at = pos_at + 2 * max_len;
        let rep_at = lab_at + 4 * max_len;
        let ex = PretrainExample {
            ids: (0..len).map(|i| u32_at(rec, ids_at + 4 * i)).collect(),
            segment_ids: rec[seg_at..seg_at + len].to_vec(),
            word_ids: (0..len).map(|i| u32::try_from(u32_at(rec, word_at + 4 * i) as i32).ok()).collect(),
            masked_positions: (0..m).map(|i| u16_at(rec, pos_at + 2 * i) as u32).collect(),
            masked_labels: (0..m).map(|i| u32_at(rec, lab_at + 4 * i)).collect(),
            replacements: rec[rep_at..rep_at + m]
                .iter()
                .map(|&c| Replacement::from_code(c).ok_or_else(|| bad("bad replacement code")))
                .collect::<Result<_>>()?,
            is_next,
        };
        out.push(ex);
    }
    Ok((max_len, out))
}
