//! End-to-end HBT acquisitions: simulate clicks block by block and feed them
//! straight into a streaming correlator, so hour-long runs never hold the
//! full stream in memory.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::correlator::{CorrelationHistogram, DelayBins, StreamingCorrelator};
use crate::error::{Error, Result};
use crate::models::{eval_saturation, SaturationParams, SaturationPoint};
use crate::rng::SeedPath;
use crate::sim::bleach_prob_for_lifetime;
use crate::sim::{
    DetectionConfig, EmitterEnsemble, ExcitationConfig, MoleculePhotophysics, StreamSimulator,
};
use crate::timetag::{TagFormat, TimeTag, TimeTagReader, TimeTagWriter};

/// Relative brightnesses of a two-molecule spot whose effective emitter
/// number `(Σb)²/Σb²` is 1.53.
pub const PAIR_BRIGHTNESS: [f64; 2] = [1.0, 0.2868];

/// A pulsed HBT measurement calibrated to a target click rate.
///
/// Detection efficiency is solved from the requested per-detector rate:
/// the signal part `rate − dark` on each detector fixes the total detected
/// photons per pulse, `2·(rate − dark)·Δt`, which is divided among the
/// molecules in proportion to brightness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbtScenario {
    pub brightness: Vec<f64>,
    pub t1_ns: f64,
    pub pulse_period_ns: f64,
    pub excitation_prob_per_pulse: f64,
    /// Total clicks per second on each detector, signal plus dark.
    pub rate_per_detector: f64,
    pub dark_rate_per_detector: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl HbtScenario {
    /// Two molecules with m = 1.53, T₁ = 4.23 ns, Δt = 25 ns, 4×10⁴ clicks/s
    /// per detector of which 3000/s are dark counts.
    pub fn two_molecule(duration_s: f64, seed: u64) -> Self {
        HbtScenario {
            brightness: PAIR_BRIGHTNESS.to_vec(),
            t1_ns: 4.23,
            pulse_period_ns: 25.0,
            excitation_prob_per_pulse: 0.1,
            rate_per_detector: 4e4,
            dark_rate_per_detector: 3000.0,
            duration_s,
            seed,
        }
    }

    /// As [`two_molecule`](Self::two_molecule) with a single emitter.
    pub fn single_molecule(duration_s: f64, seed: u64) -> Self {
        HbtScenario {
            brightness: vec![1.0],
            ..Self::two_molecule(duration_s, seed)
        }
    }

    /// Detection efficiency reproducing the target rate.
    pub fn efficiency(&self) -> f64 {
        let signal = (self.rate_per_detector - self.dark_rate_per_detector).max(0.0);
        let per_pulse = 2.0 * signal * self.pulse_period_ns * 1e-9;
        let total_b: f64 = self.brightness.iter().sum();
        per_pulse / (self.excitation_prob_per_pulse * total_b)
    }

    pub fn ensemble(&self) -> Result<EmitterEnsemble> {
        let eff = self.efficiency();
        let max_b = self.brightness.iter().cloned().fold(0.0, f64::max);
        if !(eff * max_b <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target rate needs detection probability {} > 1; raise excitation_prob_per_pulse",
                eff * max_b
            )));
        }
        let e = EmitterEnsemble {
            molecules: self
                .brightness
                .iter()
                .map(|&b| MoleculePhotophysics::new(self.t1_ns).with_brightness(b))
                .collect(),
            excitation: ExcitationConfig::Pulsed {
                pulse_period_ns: self.pulse_period_ns,
                excitation_prob_per_pulse: self.excitation_prob_per_pulse,
            },
            detection: DetectionConfig {
                efficiency: eff,
                split_ratio: 0.5,
                dark_rate_per_detector: self.dark_rate_per_detector,
            },
            duration_s: self.duration_s,
            seed: self.seed,
        };
        e.validate()?;
        Ok(e)
    }
}

/// Simulates `ensemble` and correlates channel 1 against channel 0 on the fly.
pub fn simulate_and_correlate(
    ensemble: &EmitterEnsemble,
    bins: DelayBins,
) -> Result<CorrelationHistogram> {
    let sim = StreamSimulator::new(ensemble)?;
    let meta = sim.meta().clone();
    let mut corr = StreamingCorrelator::new(bins);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for block in sim {
        a.clear();
        b.clear();
        for t in block {
            if t.channel == 0 {
                a.push(t.time_ps);
            } else {
                b.push(t.time_ps);
            }
        }
        corr.push(&a, &b)?;
    }
    Ok(corr.finish(meta))
}

/// Clicks per chunk when reading time-tag files.
const READ_CHUNK: usize = 1 << 20;

/// Simulates `ensemble` straight to a file; returns the number of clicks.
///
/// The file is identical to writing [`simulate_stream`](crate::simulate_stream)'s
/// output with [`write_timetags`](crate::write_timetags).
pub fn simulate_to_file(
    ensemble: &EmitterEnsemble,
    path: impl AsRef<Path>,
    format: TagFormat,
) -> Result<u64> {
    let sim = StreamSimulator::new(ensemble)?;
    let mut w = TimeTagWriter::create(path, format, sim.meta())?;
    for block in sim {
        w.write(&block)?;
    }
    w.finish()
}

/// Correlates channel 1 against channel 0 of a time-tag file chunk by chunk.
pub fn correlate_file(
    path: impl AsRef<Path>,
    format: TagFormat,
    bins: DelayBins,
) -> Result<CorrelationHistogram> {
    let mut reader = TimeTagReader::open(path, format)?;
    let mut corr = StreamingCorrelator::new(bins);
    let mut chunk: Vec<TimeTag> = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    while reader.read_chunk(READ_CHUNK, &mut chunk)? > 0 {
        a.clear();
        b.clear();
        for t in &chunk {
            if t.channel == 0 {
                a.push(t.time_ps);
            } else {
                b.push(t.time_ps);
            }
        }
        corr.push(&a, &b)?;
    }
    Ok(corr.finish(reader.meta().clone()))
}

/// Saturation curve sampled at `intensities` with Gaussian noise of relative
/// size `rel_noise`; each point's σ is `rel_noise` times its noisy rate.
///
/// Point `k` draws from the `saturation.k` sub-stream of `seed`.
pub fn synthetic_saturation(
    truth: &SaturationParams,
    intensities: &[f64],
    rel_noise: f64,
    seed: u64,
) -> Result<Vec<SaturationPoint>> {
    if !(rel_noise.is_finite() && rel_noise > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "relative noise must be > 0, got {rel_noise}"
        )));
    }
    let noise = Normal::new(0.0, rel_noise).expect("finite σ");
    let root = SeedPath::root(seed);
    Ok(intensities
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let mut rng = root.child("saturation", k as u64).rng();
            let rate = eval_saturation(i, truth) * (1.0 + noise.sample(&mut rng));
            SaturationPoint::new(i, rate, rel_noise * rate.abs())
        })
        .collect())
}

/// Molecules in groups of `(count, mean lifetime s)` under `excitation`;
/// an infinite lifetime gives photostable molecules.
pub fn bleaching_population(
    groups: &[(usize, f64)],
    excitation: &ExcitationConfig,
    t1_ns: f64,
) -> Vec<MoleculePhotophysics> {
    groups
        .iter()
        .flat_map(|&(n, lifetime)| {
            let p = bleach_prob_for_lifetime(excitation, t1_ns, lifetime);
            std::iter::repeat_n(MoleculePhotophysics::new(t1_ns).with_bleach_prob(p), n)
        })
        .collect()
}
