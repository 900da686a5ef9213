//! Detector click records and the files that hold them.

mod binary;
mod stream;
mod text;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::ps_to_s;

pub use binary::{BINARY_MAGIC, BINARY_VERSION, FIXED_HEADER_LEN, RECORD_LEN};
pub use stream::{TimeTagReader, TimeTagWriter};

/// Number of detector channels in a Hanbury Brown–Twiss setup.
pub const CHANNELS: u8 = 2;

/// Default histogram bin width, ps.
pub const DEFAULT_BIN_WIDTH_PS: f64 = 106.9;

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    /// Picoseconds since acquisition start. Field order makes `Ord` sort by
    /// time first, channel second.
    pub time_ps: u64,
    pub channel: u8,
}

impl TimeTag {
    pub fn new(channel: u8, time_ps: u64) -> Self {
        TimeTag { time_ps, channel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionMeta {
    /// Seconds.
    pub duration_s: f64,
    /// Histogram bin width, ps.
    pub bin_width_ps: f64,
    /// Laser repetition period, ps; 0 for continuous-wave excitation.
    pub pulse_period_ps: f64,
    pub seed: u64,
    /// Generator and split path used to produce the data, if simulated.
    #[serde(default)]
    pub rng: String,
    #[serde(default)]
    pub notes: String,
}

impl Default for AcquisitionMeta {
    fn default() -> Self {
        AcquisitionMeta {
            duration_s: 0.0,
            bin_width_ps: DEFAULT_BIN_WIDTH_PS,
            pulse_period_ps: 0.0,
            seed: 0,
            rng: String::new(),
            notes: String::new(),
        }
    }
}

impl AcquisitionMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_ps.is_finite() && self.bin_width_ps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bin_width_ps must be > 0, got {}",
                self.bin_width_ps
            )));
        }
        if !(self.pulse_period_ps == 0.0 || self.pulse_period_ps > self.bin_width_ps) {
            return Err(Error::InvalidConfig(format!(
                "pulse_period_ps must be 0 or exceed bin_width_ps, got {}",
                self.pulse_period_ps
            )));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "duration_s must be >= 0, got {}",
                self.duration_s
            )));
        }
        Ok(())
    }
}

/// A time-sorted sequence of clicks on channels 0 and 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeTagStream {
    tags: Vec<TimeTag>,
    pub meta: AcquisitionMeta,
}

impl TimeTagStream {
    pub fn new(tags: Vec<TimeTag>, meta: AcquisitionMeta) -> Result<Self> {
        validate_tags(&tags)?;
        Ok(TimeTagStream { tags, meta })
    }

    pub(crate) fn from_sorted_unchecked(tags: Vec<TimeTag>, meta: AcquisitionMeta) -> Self {
        debug_assert!(validate_tags(&tags).is_ok());
        TimeTagStream { tags, meta }
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<TimeTag> {
        self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Click times on one channel, in order.
    pub fn channel_times(&self, channel: u8) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.time_ps)
            .collect()
    }

    pub fn split_channels(&self) -> (Vec<u64>, Vec<u64>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for t in &self.tags {
            match t.channel {
                0 => a.push(t.time_ps),
                _ => b.push(t.time_ps),
            }
        }
        (a, b)
    }

    pub fn count(&self, channel: u8) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    /// Mean click rate on `channel`, counts/s, over `meta.duration_s`.
    pub fn rate(&self, channel: u8) -> f64 {
        if self.meta.duration_s > 0.0 {
            self.count(channel) as f64 / self.meta.duration_s
        } else {
            0.0
        }
    }

    pub fn last_time_ps(&self) -> Option<u64> {
        self.tags.last().map(|t| t.time_ps)
    }
}

/// Checks channel range and ordering, reporting the first offending index.
pub fn validate_tags(tags: &[TimeTag]) -> Result<()> {
    let mut prev = 0u64;
    for (index, t) in tags.iter().enumerate() {
        if t.channel >= CHANNELS {
            return Err(Error::UnknownChannel {
                index,
                channel: t.channel,
            });
        }
        if t.time_ps < prev {
            return Err(Error::UnsortedStream {
                index,
                time_ps: t.time_ps,
            });
        }
        prev = t.time_ps;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagFormat {
    #[default]
    Binary,
    Csv,
}

impl FromStr for TagFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "bin" => Ok(TagFormat::Binary),
            "csv" => Ok(TagFormat::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown time-tag format {other:?}"
            ))),
        }
    }
}

impl TagFormat {
    /// Guess from a file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TagFormat::Csv,
            _ => TagFormat::Binary,
        }
    }
}

pub fn read_timetags(path: impl AsRef<Path>, format: TagFormat) -> Result<TimeTagStream> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    match format {
        TagFormat::Binary => binary::read(reader),
        TagFormat::Csv => {
            let tags = text::read(reader)?;
            // CSV carries no metadata; recover what the records imply.
            let meta = AcquisitionMeta {
                duration_s: tags.last().map_or(0.0, |t| ps_to_s(t.time_ps as f64)),
                ..AcquisitionMeta::default()
            };
            Ok(TimeTagStream { tags, meta })
        }
    }
}

pub fn write_timetags(
    stream: &TimeTagStream,
    path: impl AsRef<Path>,
    format: TagFormat,
) -> Result<()> {
    validate_tags(&stream.tags)?;
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        TagFormat::Binary => binary::write(stream, &mut w)?,
        TagFormat::Csv => text::write(&stream.tags, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

/// Byte size of a binary file holding `records` clicks with the given
/// metadata.
pub fn binary_file_len(meta: &AcquisitionMeta, records: usize) -> Result<u64> {
    let json = serde_json::to_vec(meta)?;
    Ok((FIXED_HEADER_LEN + json.len() + records * RECORD_LEN) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Vec<TimeTag> {
        vec![
            TimeTag::new(0, 100),
            TimeTag::new(1, 250),
            TimeTag::new(0, 300),
        ]
    }

    #[test]
    fn rejects_unsorted_with_index() {
        let tags = vec![TimeTag::new(0, 5), TimeTag::new(1, 9), TimeTag::new(0, 7)];
        match TimeTagStream::new(tags, AcquisitionMeta::default()) {
            Err(Error::UnsortedStream { index, time_ps }) => {
                assert_eq!((index, time_ps), (2, 7));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_third_channel() {
        let tags = vec![TimeTag::new(0, 5), TimeTag::new(2, 9)];
        assert!(matches!(
            TimeTagStream::new(tags, AcquisitionMeta::default()),
            Err(Error::UnknownChannel {
                index: 1,
                channel: 2
            })
        ));
    }

    #[test]
    fn three_records_two_channels() {
        let s = TimeTagStream::new(three(), AcquisitionMeta::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.channel_times(0), vec![100, 300]);
        assert_eq!(s.channel_times(1), vec![250]);
    }

    #[test]
    fn ties_are_allowed() {
        let tags = vec![TimeTag::new(0, 5), TimeTag::new(1, 5)];
        assert!(TimeTagStream::new(tags, AcquisitionMeta::default()).is_ok());
    }

    #[test]
    fn meta_invariants() {
        let mut m = AcquisitionMeta::default();
        assert!(m.validate().is_ok());
        m.pulse_period_ps = 50.0;
        assert!(m.validate().is_err());
        m.pulse_period_ps = 25_000.0;
        assert!(m.validate().is_ok());
        m.bin_width_ps = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn format_from_path() {
        assert_eq!(TagFormat::from_path(Path::new("a/b.CSV")), TagFormat::Csv);
        assert_eq!(
            TagFormat::from_path(Path::new("a/b.bin")),
            TagFormat::Binary
        );
        assert_eq!("csv".parse::<TagFormat>().unwrap(), TagFormat::Csv);
    }
}
