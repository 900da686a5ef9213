//! Binary time-tag layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic  b"PSTT"
//! 4       2     format version (1)
//! 6       2     record size in bytes (16)
//! 8       8     record count
//! 16      4     metadata length L
//! 20      L     AcquisitionMeta as UTF-8 JSON
//! 20+L    16·n  records: u8 channel, 7 zero bytes, u64 time_ps
//! ```
//!
//! A zero-length file is read as an empty stream.

use std::io::{Read, Write};

use super::{AcquisitionMeta, TimeTag, TimeTagStream};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: [u8; 4] = *b"PSTT";
pub const BINARY_VERSION: u16 = 1;
pub const RECORD_LEN: usize = 16;
/// Bytes before the metadata blob: the 16-byte preamble plus the length word.
pub const FIXED_HEADER_LEN: usize = 20;

pub(super) fn write_header(meta: &AcquisitionMeta, count: u64, w: &mut impl Write) -> Result<()> {
    let json = serde_json::to_vec(meta)?;
    let meta_len = u32::try_from(json.len())
        .map_err(|_| Error::InvalidConfig("metadata blob exceeds 4 GiB".into()))?;
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(RECORD_LEN as u16).to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&meta_len.to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

/// Byte offset of the record-count word, patched by streaming writers.
pub(super) const COUNT_OFFSET: u64 = 8;

pub(super) fn encode(t: &TimeTag) -> [u8; RECORD_LEN] {
    let mut rec = [0u8; RECORD_LEN];
    rec[0] = t.channel;
    rec[8..].copy_from_slice(&t.time_ps.to_le_bytes());
    rec
}

pub(super) fn write(stream: &TimeTagStream, w: &mut impl Write) -> Result<()> {
    write_header(&stream.meta, stream.tags.len() as u64, w)?;
    for t in &stream.tags {
        w.write_all(&encode(t))?;
    }
    Ok(())
}

fn header_err(reason: &str) -> Error {
    Error::MalformedRecord {
        index: 0,
        reason: format!("header: {reason}"),
    }
}

/// Reads the header; `None` for a zero-length input.
///
/// Returns the declared record count and the metadata.
pub(super) fn read_header(r: &mut impl Read) -> Result<Option<(u64, AcquisitionMeta)>> {
    let mut fixed = [0u8; FIXED_HEADER_LEN];
    let got = read_full(r, &mut fixed)?;
    if got == 0 {
        return Ok(None);
    }
    if got < FIXED_HEADER_LEN {
        return Err(header_err("truncated"));
    }
    if fixed[0..4] != BINARY_MAGIC {
        return Err(header_err("bad magic"));
    }
    let version = u16::from_le_bytes([fixed[4], fixed[5]]);
    if version != BINARY_VERSION {
        return Err(header_err(&format!("unsupported version {version}")));
    }
    let record_len = u16::from_le_bytes([fixed[6], fixed[7]]) as usize;
    if record_len != RECORD_LEN {
        return Err(header_err(&format!(
            "record size {record_len}, expected {RECORD_LEN}"
        )));
    }
    let count = u64::from_le_bytes(fixed[8..16].try_into().unwrap());
    let meta_len = u32::from_le_bytes(fixed[16..20].try_into().unwrap()) as usize;
    let mut json = vec![0u8; meta_len];
    if read_full(r, &mut json)? < meta_len {
        return Err(header_err("metadata truncated"));
    }
    let meta: AcquisitionMeta =
        serde_json::from_slice(&json).map_err(|e| header_err(&format!("metadata JSON: {e}")))?;
    Ok(Some((count, meta)))
}

/// Fills `buf` as far as the input allows; returns the bytes read.
pub(super) fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

/// Decodes record `index`, which must not precede `prev`.
pub(super) fn decode(rec: &[u8], index: usize, prev: u64) -> Result<TimeTag> {
    if rec[1..8].iter().any(|&b| b != 0) {
        return Err(Error::MalformedRecord {
            index,
            reason: "reserved bytes are not zero".into(),
        });
    }
    let channel = rec[0];
    if channel >= super::CHANNELS {
        return Err(Error::UnknownChannel { index, channel });
    }
    let time_ps = u64::from_le_bytes(rec[8..16].try_into().unwrap());
    if time_ps < prev {
        return Err(Error::UnsortedStream { index, time_ps });
    }
    Ok(TimeTag { time_ps, channel })
}

pub(super) fn count_mismatch(count: u64, body_len: u64) -> Error {
    Error::MalformedRecord {
        index: (body_len / RECORD_LEN as u64).min(count) as usize,
        reason: format!("header declares {count} records, body holds {body_len} bytes"),
    }
}

pub(super) fn read(mut r: impl Read) -> Result<TimeTagStream> {
    let Some((count, meta)) = read_header(&mut r)? else {
        return Ok(TimeTagStream::default());
    };
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() as u64 != count.saturating_mul(RECORD_LEN as u64) {
        return Err(count_mismatch(count, body.len() as u64));
    }
    let mut tags = Vec::with_capacity(count as usize);
    let mut prev = 0u64;
    for (index, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        let t = decode(rec, index, prev)?;
        prev = t.time_ps;
        tags.push(t);
    }
    Ok(TimeTagStream { tags, meta })
}
