//! CSV time tags: header `channel,time_ps`, one click per line.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{TimeTag, CHANNELS};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 2] = ["channel", "time_ps"];

#[derive(Serialize, Deserialize)]
struct Row {
    channel: u8,
    time_ps: u64,
}

/// Checks the first record against [`CSV_HEADER`].
pub(super) fn check_header(header: &csv::StringRecord) -> Result<()> {
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::MalformedRecord {
            index: 0,
            reason: format!(
                "expected header `channel,time_ps`, found {:?}",
                header.as_slice()
            ),
        });
    }
    Ok(())
}

pub(super) fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Parses data record `index`, which must not precede `prev`.
pub(super) fn parse(
    rec: csv::Result<csv::StringRecord>,
    index: usize,
    prev: u64,
) -> Result<TimeTag> {
    let malformed = |e: &dyn std::fmt::Display| Error::MalformedRecord {
        index,
        reason: e.to_string(),
    };
    let rec = rec.map_err(|e| malformed(&e))?;
    let row: Row = rec.deserialize(None).map_err(|e| malformed(&e))?;
    if row.channel >= CHANNELS {
        return Err(Error::UnknownChannel {
            index,
            channel: row.channel,
        });
    }
    if row.time_ps < prev {
        return Err(Error::UnsortedStream {
            index,
            time_ps: row.time_ps,
        });
    }
    Ok(TimeTag {
        time_ps: row.time_ps,
        channel: row.channel,
    })
}

pub(super) fn read(r: impl Read) -> Result<Vec<TimeTag>> {
    let mut reader = reader(r);
    let mut records = reader.records();
    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => check_header(&header?)?,
    }
    let mut tags = Vec::new();
    let mut prev = 0u64;
    for (index, rec) in records.enumerate() {
        let t = parse(rec, index, prev)?;
        prev = t.time_ps;
        tags.push(t);
    }
    Ok(tags)
}

pub(super) fn writer<W: Write>(w: W) -> Result<csv::Writer<W>> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(CSV_HEADER)?;
    Ok(writer)
}

pub(super) fn write_rows<W: Write>(writer: &mut csv::Writer<W>, tags: &[TimeTag]) -> Result<()> {
    for t in tags {
        writer.serialize(Row {
            channel: t.channel,
            time_ps: t.time_ps,
        })?;
    }
    Ok(())
}

pub(super) fn write(tags: &[TimeTag], w: &mut impl Write) -> Result<()> {
    let mut writer = writer(w)?;
    write_rows(&mut writer, tags)?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_record_is_two_lines() {
        let mut buf = Vec::new();
        write(&[TimeTag::new(1, 42)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "channel,time_ps\n1,42\n");
    }

    #[test]
    fn reads_hand_written() {
        let text = "channel,time_ps\n0,100\n1,250\n0,300\n";
        let tags = read(text.as_bytes()).unwrap();
        assert_eq!(
            tags,
            vec![
                TimeTag::new(0, 100),
                TimeTag::new(1, 250),
                TimeTag::new(0, 300)
            ]
        );
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert!(read(&b""[..]).unwrap().is_empty());
        assert!(read(&b"channel,time_ps\n"[..]).unwrap().is_empty());
    }

    #[test]
    fn errors_carry_record_index() {
        let text = "channel,time_ps\n0,100\n1,oops\n";
        assert!(matches!(
            read(text.as_bytes()),
            Err(Error::MalformedRecord { index: 1, .. })
        ));
        let text = "channel,time_ps\n0,100\n1,50\n";
        assert!(matches!(
            read(text.as_bytes()),
            Err(Error::UnsortedStream {
                index: 1,
                time_ps: 50
            })
        ));
        let text = "chan,t\n0,100\n";
        assert!(matches!(
            read(text.as_bytes()),
            Err(Error::MalformedRecord { index: 0, .. })
        ));
    }
}
