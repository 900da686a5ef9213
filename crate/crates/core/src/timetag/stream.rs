//! Chunked file access for acquisitions too large to hold in memory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::{binary, text, AcquisitionMeta, TagFormat, TimeTag, CHANNELS, RECORD_LEN};
use crate::error::{Error, Result};
use crate::units::ps_to_s;

enum Sink {
    Binary(BufWriter<File>),
    Csv(csv::Writer<BufWriter<File>>),
}

/// Appends sorted clicks to a file block by block.
///
/// The output is byte-identical to [`write_timetags`](super::write_timetags)
/// on the concatenated blocks. Binary files get their record count patched
/// in by [`finish`](Self::finish); a writer dropped without `finish` leaves a
/// binary file that declares zero records.
pub struct TimeTagWriter {
    sink: Sink,
    count: u64,
    prev: u64,
}

impl TimeTagWriter {
    pub fn create(
        path: impl AsRef<Path>,
        format: TagFormat,
        meta: &AcquisitionMeta,
    ) -> Result<Self> {
        let out = BufWriter::new(File::create(path)?);
        let sink = match format {
            TagFormat::Binary => {
                let mut out = out;
                binary::write_header(meta, 0, &mut out)?;
                Sink::Binary(out)
            }
            TagFormat::Csv => Sink::Csv(text::writer(out)?),
        };
        Ok(TimeTagWriter {
            sink,
            count: 0,
            prev: 0,
        })
    }

    /// Appends `tags`; indices in errors count from the start of the file.
    pub fn write(&mut self, tags: &[TimeTag]) -> Result<()> {
        for (i, t) in tags.iter().enumerate() {
            let index = self.count as usize + i;
            if t.channel >= CHANNELS {
                return Err(Error::UnknownChannel {
                    index,
                    channel: t.channel,
                });
            }
            if t.time_ps < self.prev {
                return Err(Error::UnsortedStream {
                    index,
                    time_ps: t.time_ps,
                });
            }
            self.prev = t.time_ps;
        }
        match &mut self.sink {
            Sink::Binary(w) => {
                for t in tags {
                    w.write_all(&binary::encode(t))?;
                }
            }
            Sink::Csv(w) => text::write_rows(w, tags)?,
        }
        self.count += tags.len() as u64;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Flushes and, for binary files, records the final count in the header.
    pub fn finish(self) -> Result<u64> {
        match self.sink {
            Sink::Binary(w) => {
                let mut file = w.into_inner().map_err(|e| e.into_error())?;
                file.seek(SeekFrom::Start(binary::COUNT_OFFSET))?;
                file.write_all(&self.count.to_le_bytes())?;
                file.flush()?;
            }
            Sink::Csv(mut w) => w.flush()?,
        }
        Ok(self.count)
    }
}

enum Source {
    Empty,
    Binary {
        reader: BufReader<File>,
        remaining: u64,
    },
    Csv(csv::StringRecordsIntoIter<BufReader<File>>),
}

/// Reads a time-tag file in chunks, validating as it goes.
///
/// CSV files carry no metadata; their `duration_s` is filled in from the last
/// click once the file is exhausted.
pub struct TimeTagReader {
    source: Source,
    meta: AcquisitionMeta,
    index: usize,
    prev: u64,
}

impl TimeTagReader {
    pub fn open(path: impl AsRef<Path>, format: TagFormat) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let (source, meta) = match format {
            TagFormat::Binary => match binary::read_header(&mut reader)? {
                None => (Source::Empty, AcquisitionMeta::default()),
                Some((count, meta)) => {
                    let body = file_len - reader.stream_position()?;
                    if body != count.saturating_mul(RECORD_LEN as u64) {
                        return Err(binary::count_mismatch(count, body));
                    }
                    (
                        Source::Binary {
                            reader,
                            remaining: count,
                        },
                        meta,
                    )
                }
            },
            TagFormat::Csv => {
                let mut records = text::reader(reader).into_records();
                match records.next() {
                    None => (Source::Empty, AcquisitionMeta::default()),
                    Some(h) => {
                        text::check_header(&h?)?;
                        (Source::Csv(records), AcquisitionMeta::default())
                    }
                }
            }
        };
        Ok(TimeTagReader {
            source,
            meta,
            index: 0,
            prev: 0,
        })
    }

    pub fn meta(&self) -> &AcquisitionMeta {
        &self.meta
    }

    /// Clicks read so far.
    pub fn position(&self) -> usize {
        self.index
    }

    /// Replaces `out` with up to `max` further clicks; returns how many.
    /// Zero means the file is exhausted.
    pub fn read_chunk(&mut self, max: usize, out: &mut Vec<TimeTag>) -> Result<usize> {
        out.clear();
        match &mut self.source {
            Source::Empty => {}
            Source::Binary { reader, remaining } => {
                let n = (*remaining).min(max as u64) as usize;
                let mut buf = vec![0u8; n * RECORD_LEN];
                reader.read_exact(&mut buf)?;
                for rec in buf.chunks_exact(RECORD_LEN) {
                    let t = binary::decode(rec, self.index, self.prev)?;
                    self.prev = t.time_ps;
                    self.index += 1;
                    out.push(t);
                }
                *remaining -= n as u64;
            }
            Source::Csv(records) => {
                for rec in records.by_ref().take(max) {
                    let t = text::parse(rec, self.index, self.prev)?;
                    self.prev = t.time_ps;
                    self.index += 1;
                    out.push(t);
                }
                if out.is_empty() && self.index > 0 {
                    self.meta.duration_s = ps_to_s(self.prev as f64);
                }
            }
        }
        Ok(out.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timetag::{read_timetags, write_timetags, TimeTagStream};

    fn sample() -> TimeTagStream {
        let tags = (0..1000u64)
            .map(|i| TimeTag::new((i % 3 == 0) as u8, i * 37 + i / 5))
            .collect();
        let meta = AcquisitionMeta {
            duration_s: 1e-7,
            seed: 4,
            ..AcquisitionMeta::default()
        };
        TimeTagStream::new(tags, meta).unwrap()
    }

    #[test]
    fn chunked_writer_matches_whole_file_writer() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample();
        for format in [TagFormat::Binary, TagFormat::Csv] {
            let whole = dir.path().join("whole");
            let chunked = dir.path().join("chunked");
            write_timetags(&s, &whole, format).unwrap();
            let mut w = TimeTagWriter::create(&chunked, format, &s.meta).unwrap();
            for block in s.tags().chunks(77) {
                w.write(block).unwrap();
            }
            assert_eq!(w.finish().unwrap(), 1000);
            assert_eq!(
                std::fs::read(&whole).unwrap(),
                std::fs::read(&chunked).unwrap()
            );
        }
    }

    #[test]
    fn chunked_reader_matches_whole_file_reader() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample();
        for format in [TagFormat::Binary, TagFormat::Csv] {
            let path = dir.path().join("f");
            write_timetags(&s, &path, format).unwrap();
            let whole = read_timetags(&path, format).unwrap();
            let mut r = TimeTagReader::open(&path, format).unwrap();
            let mut all = Vec::new();
            let mut buf = Vec::new();
            while r.read_chunk(101, &mut buf).unwrap() > 0 {
                all.extend_from_slice(&buf);
            }
            assert_eq!(all, whole.tags());
            assert_eq!(r.meta(), &whole.meta);
        }
    }

    #[test]
    fn writer_rejects_out_of_order_blocks() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = TimeTagWriter::create(
            dir.path().join("x"),
            TagFormat::Binary,
            &AcquisitionMeta::default(),
        )
        .unwrap();
        w.write(&[TimeTag::new(0, 10), TimeTag::new(1, 20)])
            .unwrap();
        assert!(matches!(
            w.write(&[TimeTag::new(0, 15)]),
            Err(Error::UnsortedStream {
                index: 2,
                time_ps: 15
            })
        ));
    }

    #[test]
    fn empty_files_read_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty");
        std::fs::write(&path, b"").unwrap();
        for format in [TagFormat::Binary, TagFormat::Csv] {
            let mut r = TimeTagReader::open(&path, format).unwrap();
            let mut buf = Vec::new();
            assert_eq!(r.read_chunk(10, &mut buf).unwrap(), 0);
        }
    }
}
