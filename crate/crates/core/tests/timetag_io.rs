use std::fs;

use photostat::rng::SeedPath;
use photostat::timetag::{binary_file_len, TimeTagReader, TimeTagWriter};
use photostat::units::{ns_to_ps, ps_to_ns};
use photostat::{
    read_timetags, write_timetags, AcquisitionMeta, Error, TagFormat, TimeTag, TimeTagStream,
};
use proptest::prelude::*;
use rand::Rng as _;

fn meta() -> AcquisitionMeta {
    AcquisitionMeta {
        duration_s: 1.0,
        pulse_period_ps: 25_000.0,
        seed: 7,
        ..AcquisitionMeta::default()
    }
}

fn random_tags(n: usize, seed: u64) -> Vec<TimeTag> {
    let mut rng = SeedPath::root(seed).rng();
    let mut t = 0u64;
    (0..n)
        .map(|_| {
            t += rng.random_range(0..5_000);
            TimeTag::new(rng.random_range(0..2), t)
        })
        .collect()
}

#[test]
fn three_record_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("three.csv");
    fs::write(&path, "channel,time_ps\n0,100\n1,250\n0,300\n").unwrap();
    let s = read_timetags(&path, TagFormat::Csv).unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s.channel_times(0), vec![100, 300]);
    assert_eq!(s.channel_times(1), vec![250]);
}

#[test]
fn round_trip_hundred_thousand_records() {
    let dir = tempfile::tempdir().unwrap();
    let stream = TimeTagStream::new(random_tags(100_000, 1), meta()).unwrap();
    for format in [TagFormat::Binary, TagFormat::Csv] {
        let path = dir.path().join(format!("rt.{format:?}"));
        write_timetags(&stream, &path, format).unwrap();
        let back = read_timetags(&path, format).unwrap();
        assert_eq!(back.tags(), stream.tags(), "{format:?}");
        if format == TagFormat::Binary {
            assert_eq!(back.meta, stream.meta);
        }
    }
}

#[test]
fn million_record_binary_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.bin");
    let stream = TimeTagStream::new(random_tags(1_000_000, 2), meta()).unwrap();
    write_timetags(&stream, &path, TagFormat::Binary).unwrap();
    let expected = binary_file_len(&stream.meta, 1_000_000).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), expected);
    assert_eq!(binary_file_len(&stream.meta, 0).unwrap() + 16_000_000, expected);
}

#[test]
fn empty_streams_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let stream = TimeTagStream::new(Vec::new(), meta()).unwrap();
    for format in [TagFormat::Binary, TagFormat::Csv] {
        let path = dir.path().join(format!("empty.{format:?}"));
        write_timetags(&stream, &path, format).unwrap();
        assert!(read_timetags(&path, format).unwrap().is_empty());
    }
}

#[test]
fn unsorted_and_foreign_channels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "channel,time_ps\n0,300\n1,250\n").unwrap();
    assert!(matches!(
        read_timetags(&path, TagFormat::Csv),
        Err(Error::UnsortedStream { .. })
    ));
    fs::write(&path, "channel,time_ps\n0,100\n2,250\n").unwrap();
    assert!(matches!(
        read_timetags(&path, TagFormat::Csv),
        Err(Error::UnknownChannel { .. })
    ));
}

#[test]
fn truncated_binary_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.bin");
    let stream = TimeTagStream::new(random_tags(10, 3), meta()).unwrap();
    write_timetags(&stream, &path, TagFormat::Binary).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(read_timetags(&path, TagFormat::Binary).is_err());
}

#[test]
fn chunked_writer_and_reader_agree_with_whole_file_io() {
    let dir = tempfile::tempdir().unwrap();
    let stream = TimeTagStream::new(random_tags(50_000, 4), meta()).unwrap();
    let whole = dir.path().join("whole.bin");
    let chunked = dir.path().join("chunked.bin");
    write_timetags(&stream, &whole, TagFormat::Binary).unwrap();
    let mut w = TimeTagWriter::create(&chunked, TagFormat::Binary, &stream.meta).unwrap();
    for c in stream.tags().chunks(777) {
        w.write(c).unwrap();
    }
    assert_eq!(w.finish().unwrap(), 50_000);
    assert_eq!(fs::read(&whole).unwrap(), fs::read(&chunked).unwrap());

    let mut r = TimeTagReader::open(&chunked, TagFormat::Binary).unwrap();
    let mut all = Vec::new();
    let mut buf = Vec::new();
    while r.read_chunk(1000, &mut buf).unwrap() > 0 {
        all.append(&mut buf);
    }
    assert_eq!(all, stream.tags());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_is_a_bijection(
        gaps in prop::collection::vec((0u64..1_000_000, 0u8..2), 0..300),
        seed in any::<u64>(),
        duration in 0.0f64..1e4,
    ) {
        let mut t = 0;
        let tags: Vec<TimeTag> = gaps
            .into_iter()
            .map(|(g, c)| {
                t += g;
                TimeTag::new(c, t)
            })
            .collect();
        let meta = AcquisitionMeta { duration_s: duration, seed, ..meta() };
        let stream = TimeTagStream::new(tags, meta).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_timetags(&stream, &path, TagFormat::Binary).unwrap();
        let back = read_timetags(&path, TagFormat::Binary).unwrap();
        prop_assert_eq!(&back, &stream);
        // Writing the decoded stream reproduces the same bytes.
        let again = dir.path().join("q.bin");
        write_timetags(&back, &again, TagFormat::Binary).unwrap();
        prop_assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn whole_picoseconds_survive_ns_round_trip(ps in 0u64..(1 << 52)) {
        prop_assert_eq!(ns_to_ps(ps_to_ns(ps as f64)).round() as u64, ps);
    }
}
