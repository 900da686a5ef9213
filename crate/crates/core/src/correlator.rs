//! Coincidence histograms between the two detector channels.
//!
//! For every pair of clicks (a on channel 0, b on channel 1) the delay is
//! `τ = t_b − t_a`, and bin `k` collects `τ_min + k·δt ≤ τ < τ_min + (k+1)·δt`.
//! Every in-window pair is counted (full cross-correlation, not start-stop).
//! The bin index is `floor((τ − τ_min)/δt)` in double precision, which is
//! exact for the integer-picosecond delays of any realistic acquisition
//! (|τ| < 2⁵³ ps) and lets δt be non-integer such as 106.9 ps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timetag::{AcquisitionMeta, TimeTagStream};
use crate::units::{ps_to_ns, ps_to_s};

/// Default half-width of the correlation window, ps (±6 pulse periods at 25 ns).
pub const DEFAULT_HALF_WINDOW_PS: f64 = 150_000.0;

/// Minimum number of start clicks per parallel partition.
const PARTITION: usize = 1 << 16;

/// Binning of the delay axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBins {
    pub tau_min_ps: f64,
    pub bin_width_ps: f64,
    pub n_bins: usize,
}

impl DelayBins {
    /// Bins covering `[tau_min, tau_max)`. When the span is not a whole
    /// number of bins, `tau_max` is pushed out to the next bin edge.
    pub fn new(tau_min_ps: f64, tau_max_ps: f64, bin_width_ps: f64) -> Result<Self> {
        if !(bin_width_ps.is_finite() && bin_width_ps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bin width must be > 0, got {bin_width_ps}"
            )));
        }
        if !(tau_min_ps.is_finite() && tau_max_ps.is_finite()) || tau_max_ps <= tau_min_ps {
            return Err(Error::EmptyWindow {
                tau_min: tau_min_ps,
                tau_max: tau_max_ps,
            });
        }
        let span = (tau_max_ps - tau_min_ps) / bin_width_ps;
        // Tolerate rounding when the span is meant to be a whole number of bins.
        let n_bins = if (span - span.round()).abs() < 1e-9 * span.max(1.0) {
            span.round() as usize
        } else {
            span.ceil() as usize
        };
        if n_bins == 0 {
            return Err(Error::EmptyWindow {
                tau_min: tau_min_ps,
                tau_max: tau_max_ps,
            });
        }
        Ok(DelayBins {
            tau_min_ps,
            bin_width_ps,
            n_bins,
        })
    }

    /// `[−n·δt, n·δt)` with the smallest `n` such that `n·δt ≥ half_width`;
    /// τ = 0 sits on a bin edge.
    pub fn symmetric(half_width_ps: f64, bin_width_ps: f64) -> Result<Self> {
        if !(bin_width_ps.is_finite() && bin_width_ps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bin width must be > 0, got {bin_width_ps}"
            )));
        }
        if !(half_width_ps.is_finite() && half_width_ps > 0.0) {
            return Err(Error::EmptyWindow {
                tau_min: -half_width_ps,
                tau_max: half_width_ps,
            });
        }
        let per_side = (half_width_ps / bin_width_ps).ceil() as usize;
        Ok(DelayBins {
            tau_min_ps: -(per_side as f64) * bin_width_ps,
            bin_width_ps,
            n_bins: 2 * per_side,
        })
    }

    pub fn tau_max_ps(&self) -> f64 {
        self.tau_min_ps + self.n_bins as f64 * self.bin_width_ps
    }

    /// Bin of an integer delay, if it lies inside the window.
    #[inline]
    pub fn index(&self, tau_ps: i64) -> Option<usize> {
        let k = ((tau_ps as f64 - self.tau_min_ps) / self.bin_width_ps).floor();
        (k >= 0.0 && k < self.n_bins as f64).then_some(k as usize)
    }

    pub fn center_ps(&self, k: usize) -> f64 {
        self.tau_min_ps + (k as f64 + 0.5) * self.bin_width_ps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bins: DelayBins,
    pub counts: Vec<u64>,
    /// Clicks on channel 0 that contributed as starts.
    pub total_starts: u64,
    /// Clicks on channel 1 that contributed as stops.
    pub total_stops: u64,
    pub acquisition: AcquisitionMeta,
}

impl CorrelationHistogram {
    pub fn zeros(bins: DelayBins) -> Self {
        CorrelationHistogram {
            bins,
            counts: vec![0; bins.n_bins],
            total_starts: 0,
            total_stops: 0,
            acquisition: AcquisitionMeta {
                bin_width_ps: bins.bin_width_ps,
                ..AcquisitionMeta::default()
            },
        }
    }

    pub fn bin_width_ps(&self) -> f64 {
        self.bins.bin_width_ps
    }

    pub fn tau_min_ps(&self) -> f64 {
        self.bins.tau_min_ps
    }

    pub fn tau_max_ps(&self) -> f64 {
        self.bins.tau_max_ps()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin centres in ns, the abscissa used by the model fits.
    pub fn centers_ns(&self) -> Vec<f64> {
        (0..self.bins.n_bins)
            .map(|k| ps_to_ns(self.bins.center_ps(k)))
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        writeln!(w, "tau_ps,counts")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.bins.center_ps(k), c)?;
        }
        w.flush()?;
        let sidecar = sidecar_path(path.as_ref());
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(sidecar)?),
            &HistogramSidecar::from(self),
        )?;
        Ok(())
    }

    /// Reads a histogram CSV. Geometry and totals come from the JSON sidecar
    /// when present, otherwise from the spacing of the bin centres.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(BufReader::new(File::open(path)?));
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["tau_ps", "counts"] {
            return Err(Error::MalformedRecord {
                index: 0,
                reason: format!(
                    "expected header `tau_ps,counts`, found {:?}",
                    headers.as_slice()
                ),
            });
        }
        let mut centers = Vec::new();
        let mut counts = Vec::new();
        for (index, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse_err = |e: String| Error::MalformedRecord { index, reason: e };
            let tau: f64 = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|e| parse_err(format!("tau_ps: {e}")))?;
            let count: f64 = rec
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|e| parse_err(format!("counts: {e}")))?;
            if !(count >= 0.0 && count.fract() == 0.0) {
                return Err(parse_err(format!(
                    "counts must be a non-negative integer, got {count}"
                )));
            }
            centers.push(tau);
            counts.push(count as u64);
        }
        let sidecar = sidecar_path(path);
        if sidecar.exists() {
            let meta: HistogramSidecar =
                serde_json::from_reader(BufReader::new(File::open(sidecar)?))?;
            if meta.bins.n_bins != counts.len() {
                return Err(Error::MalformedRecord {
                    index: counts.len(),
                    reason: format!(
                        "sidecar declares {} bins, CSV holds {}",
                        meta.bins.n_bins,
                        counts.len()
                    ),
                });
            }
            return Ok(CorrelationHistogram {
                bins: meta.bins,
                counts,
                total_starts: meta.total_starts,
                total_stops: meta.total_stops,
                acquisition: meta.acquisition,
            });
        }
        if centers.len() < 2 {
            return Err(Error::DegenerateData(
                "histogram CSV needs at least two bins without a sidecar".into(),
            ));
        }
        let width = (centers[centers.len() - 1] - centers[0]) / (centers.len() - 1) as f64;
        let bins = DelayBins {
            tau_min_ps: centers[0] - width / 2.0,
            bin_width_ps: width,
            n_bins: centers.len(),
        };
        Ok(CorrelationHistogram {
            counts,
            ..CorrelationHistogram::zeros(bins)
        })
    }
}

/// `hist.csv` → `hist.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[derive(Debug, Serialize, Deserialize)]
struct HistogramSidecar {
    bins: DelayBins,
    tau_max_ps: f64,
    total_starts: u64,
    total_stops: u64,
    total_coincidences: u64,
    acquisition: AcquisitionMeta,
}

impl From<&CorrelationHistogram> for HistogramSidecar {
    fn from(h: &CorrelationHistogram) -> Self {
        HistogramSidecar {
            bins: h.bins,
            tau_max_ps: h.tau_max_ps(),
            total_starts: h.total_starts,
            total_stops: h.total_stops,
            total_coincidences: h.total(),
            acquisition: h.acquisition.clone(),
        }
    }
}

fn check_sorted(times: &[u64], which: &'static str) -> Result<()> {
    match times.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::UnsortedInput {
            which,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Two-pointer sweep: for each start, walk the stops whose delay may fall in
/// the window. `lo` only moves forward, so the cost is O(Nₐ + N_b + P).
fn accumulate(a: &[u64], b: &[u64], bins: &DelayBins, counts: &mut [u64]) {
    if a.is_empty() || b.is_empty() {
        return;
    }
    // One picosecond of slack on both ends; `bins.index` decides membership.
    let lo_edge = bins.tau_min_ps.floor() as i64 - 1;
    let hi_edge = bins.tau_max_ps().ceil() as i64 + 1;
    let mut lo = b.partition_point(|&tb| (tb as i64) - (a[0] as i64) < lo_edge);
    for &ta in a {
        let ta = ta as i64;
        while lo < b.len() && (b[lo] as i64) - ta < lo_edge {
            lo += 1;
        }
        for &tb in &b[lo..] {
            let tau = tb as i64 - ta;
            if tau > hi_edge {
                break;
            }
            if let Some(k) = bins.index(tau) {
                counts[k] += 1;
            }
        }
    }
}

/// Counts of all (a, b) pairs, with starts split into `parts` contiguous
/// ranges processed independently and summed.
pub fn cross_correlate_partitioned(
    a: &[u64],
    b: &[u64],
    bins: DelayBins,
    parts: usize,
) -> Result<Vec<u64>> {
    check_sorted(a, "channel 0")?;
    check_sorted(b, "channel 1")?;
    let chunk = a.len().div_ceil(parts.max(1)).max(1);
    let counts = a
        .par_chunks(chunk)
        .map(|starts| {
            let mut c = vec![0u64; bins.n_bins];
            accumulate(starts, b, &bins, &mut c);
            c
        })
        .reduce(
            || vec![0u64; bins.n_bins],
            |mut x, y| {
                x.iter_mut().zip(&y).for_each(|(p, q)| *p += q);
                x
            },
        );
    Ok(counts)
}

/// Histogram of `τ = t_b − t_a` over all pairs from the two sorted click
/// lists (ps).
pub fn cross_correlate(a: &[u64], b: &[u64], bins: DelayBins) -> Result<CorrelationHistogram> {
    let parts = a.len().div_ceil(PARTITION).max(1);
    let counts = cross_correlate_partitioned(a, b, bins, parts)?;
    Ok(CorrelationHistogram {
        counts,
        total_starts: a.len() as u64,
        total_stops: b.len() as u64,
        ..CorrelationHistogram::zeros(bins)
    })
}

/// Correlates channel 0 against channel 1 of a stream.
pub fn correlate_stream(stream: &TimeTagStream, bins: DelayBins) -> Result<CorrelationHistogram> {
    let (a, b) = stream.split_channels();
    let mut h = cross_correlate(&a, &b, bins)?;
    h.acquisition = AcquisitionMeta {
        bin_width_ps: bins.bin_width_ps,
        ..stream.meta.clone()
    };
    Ok(h)
}

/// Correlator fed consecutive time blocks; the result equals a single
/// [`cross_correlate`] over the concatenated blocks.
///
/// Every click of a block must be no earlier than every click of the blocks
/// before it. Only the clicks that can still pair with future data are kept.
#[derive(Debug, Clone)]
pub struct StreamingCorrelator {
    bins: DelayBins,
    counts: Vec<u64>,
    a_tail: Vec<u64>,
    b_tail: Vec<u64>,
    watermark: Option<u64>,
    starts: u64,
    stops: u64,
}

impl StreamingCorrelator {
    pub fn new(bins: DelayBins) -> Self {
        StreamingCorrelator {
            bins,
            counts: vec![0; bins.n_bins],
            a_tail: Vec::new(),
            b_tail: Vec::new(),
            watermark: None,
            starts: 0,
            stops: 0,
        }
    }

    pub fn push(&mut self, a: &[u64], b: &[u64]) -> Result<()> {
        check_sorted(a, "channel 0")?;
        check_sorted(b, "channel 1")?;
        if let Some(w) = self.watermark {
            if a.first().is_some_and(|&t| t < w) {
                return Err(Error::UnsortedInput {
                    which: "channel 0",
                    index: 0,
                });
            }
            if b.first().is_some_and(|&t| t < w) {
                return Err(Error::UnsortedInput {
                    which: "channel 1",
                    index: 0,
                });
            }
        }
        accumulate(&self.a_tail, b, &self.bins, &mut self.counts);
        accumulate(a, &self.b_tail, &self.bins, &mut self.counts);
        accumulate(a, b, &self.bins, &mut self.counts);
        self.starts += a.len() as u64;
        self.stops += b.len() as u64;

        let newest = a.last().copied().max(b.last().copied());
        let w = self.watermark.max(newest);
        self.watermark = w;
        if let Some(w) = w {
            let w = w as i64;
            // Future stops are >= w, so a start pairs only if w − t_a < τ_max.
            let keep_a = w - self.bins.tau_max_ps().ceil() as i64 - 1;
            // Future starts are >= w, so a stop pairs only if t_b − w >= τ_min.
            let keep_b = w + self.bins.tau_min_ps.floor() as i64 - 1;
            self.a_tail.extend_from_slice(a);
            self.b_tail.extend_from_slice(b);
            let cut = self.a_tail.partition_point(|&t| (t as i64) < keep_a);
            self.a_tail.drain(..cut);
            let cut = self.b_tail.partition_point(|&t| (t as i64) < keep_b);
            self.b_tail.drain(..cut);
        }
        Ok(())
    }

    pub fn finish(self, acquisition: AcquisitionMeta) -> CorrelationHistogram {
        CorrelationHistogram {
            bins: self.bins,
            counts: self.counts,
            total_starts: self.starts,
            total_stops: self.stops,
            acquisition: AcquisitionMeta {
                bin_width_ps: self.bins.bin_width_ps,
                ..acquisition
            },
        }
    }
}

/// Divides each bin by the uncorrelated-pair expectation
/// `rate_a · rate_b · duration · δt`.
pub fn normalize_g2(
    hist: &CorrelationHistogram,
    rate_a: f64,
    rate_b: f64,
    duration_s: f64,
) -> Result<Vec<f64>> {
    for (name, v) in [
        ("rate_a", rate_a),
        ("rate_b", rate_b),
        ("duration", duration_s),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::DivisionByZeroConfig(format!("{name} = {v}")));
        }
    }
    let expected = rate_a * rate_b * duration_s * ps_to_s(hist.bin_width_ps());
    Ok(hist.counts.iter().map(|&c| c as f64 / expected).collect())
}
