//! Monte Carlo generation of detector clicks from fluorescent molecules.
//!
//! Each molecule is a two-level emitter with lifetime `t1`. Under pulsed
//! excitation every pulse excites an available molecule with a fixed
//! probability and the photon leaves after an `Exp(t1)` delay; under CW
//! excitation excitations form a Poisson process at the two-level scattering
//! rate `(1/2T₁)·I/(I+I_sat)`. Each excitation resolves to exactly one of:
//!
//! * bleach (`bleach_prob_per_excitation`): no photon, the molecule is gone;
//! * shelve (`isc_yield`): no photon, the molecule ignores the laser for an
//!   `Exp(triplet_lifetime)` delay;
//! * emit: one photon, detected with probability
//!   `efficiency·brightness` and routed to channel 0 with `split_ratio`.
//!
//! Dark counts are independent Poisson processes on both channels.
//!
//! Time is processed in fixed one-second blocks. Every (source, block) pair
//! draws from its own RNG sub-stream (`molecule.i/block.k`,
//! `dark.ch/block.k`), so output is bit-identical for a given seed however
//! the work is scheduled, and long acquisitions can be consumed block by
//! block through [`StreamSimulator`] without holding the whole stream.

mod bleach;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, SeedPath};
use crate::timetag::{AcquisitionMeta, TimeTag, TimeTagStream, DEFAULT_BIN_WIDTH_PS};
use crate::units::{ns_to_ps, PS_PER_S};

pub use bleach::{
    bleach_prob_for_lifetime, excitation_rate, photon_budget, simulate_bleaching_survival,
    SurvivalCurve,
};

/// Length of one simulation block, ps.
pub const BLOCK_PS: f64 = PS_PER_S;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculePhotophysics {
    /// Excited-state lifetime T₁, ns.
    pub t1_ns: f64,
    /// In-plane dipole orientation, degrees.
    #[serde(default)]
    pub dipole_angle_deg: f64,
    /// Probability per excitation of crossing to the triplet. Off unless set.
    #[serde(default)]
    pub isc_yield: f64,
    /// Mean triplet shelving time, µs. Required when `isc_yield > 0`.
    #[serde(default)]
    pub triplet_lifetime_us: Option<f64>,
    /// Probability per excitation of irreversible bleaching.
    #[serde(default)]
    pub bleach_prob_per_excitation: f64,
    /// Relative emission weight; scales the detection probability.
    #[serde(default = "one")]
    pub brightness: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl MoleculePhotophysics {
    /// A photostable molecule without triplet shelving.
    pub fn new(t1_ns: f64) -> Self {
        MoleculePhotophysics {
            t1_ns,
            dipole_angle_deg: 0.0,
            isc_yield: 0.0,
            triplet_lifetime_us: None,
            bleach_prob_per_excitation: 0.0,
            brightness: 1.0,
        }
    }

    pub fn with_brightness(mut self, brightness: f64) -> Self {
        self.brightness = brightness;
        self
    }

    pub fn with_bleach_prob(mut self, p: f64) -> Self {
        self.bleach_prob_per_excitation = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.t1_ns.is_finite() && self.t1_ns > 0.0) {
            return bad(format!("t1_ns must be > 0, got {}", self.t1_ns));
        }
        if !(0.0..=1.0).contains(&self.isc_yield) {
            return bad(format!(
                "isc_yield must lie in [0, 1], got {}",
                self.isc_yield
            ));
        }
        if !(0.0..=1.0).contains(&self.bleach_prob_per_excitation) {
            return bad(format!(
                "bleach_prob_per_excitation must lie in [0, 1], got {}",
                self.bleach_prob_per_excitation
            ));
        }
        if !(self.brightness.is_finite() && self.brightness > 0.0) {
            return bad(format!("brightness must be > 0, got {}", self.brightness));
        }
        if self.isc_yield > 0.0 {
            match self.triplet_lifetime_us {
                Some(t) if t.is_finite() && t > 0.0 => {}
                _ => return bad("isc_yield > 0 needs a positive triplet_lifetime_us".into()),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ExcitationConfig {
    Pulsed {
        /// Repetition period Δt, ns.
        pulse_period_ns: f64,
        excitation_prob_per_pulse: f64,
    },
    Cw {
        /// kW/cm².
        intensity: f64,
        /// kW/cm².
        i_sat: f64,
    },
}

impl ExcitationConfig {
    /// Validates and returns non-fatal warnings.
    pub fn validate(&self, molecules: &[MoleculePhotophysics]) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        match *self {
            ExcitationConfig::Pulsed {
                pulse_period_ns,
                excitation_prob_per_pulse,
            } => {
                if !(pulse_period_ns.is_finite() && pulse_period_ns > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "pulse_period_ns must be > 0, got {pulse_period_ns}"
                    )));
                }
                if !(excitation_prob_per_pulse > 0.0 && excitation_prob_per_pulse <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "excitation_prob_per_pulse must lie in (0, 1], got {excitation_prob_per_pulse}"
                    )));
                }
                for (i, m) in molecules.iter().enumerate() {
                    if pulse_period_ns < 3.0 * m.t1_ns {
                        warnings.push(format!(
                            "molecule {i}: pulse period {pulse_period_ns} ns is shorter than 3·T₁ = {} ns; peaks will overlap",
                            3.0 * m.t1_ns
                        ));
                    }
                }
            }
            ExcitationConfig::Cw { intensity, i_sat } => {
                if !(intensity.is_finite() && intensity >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "intensity must be >= 0, got {intensity}"
                    )));
                }
                if !(i_sat.is_finite() && i_sat > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "i_sat must be > 0, got {i_sat}"
                    )));
                }
            }
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Probability that an emitted photon produces a click on either detector.
    pub efficiency: f64,
    /// Probability that a detected photon lands on channel 0.
    #[serde(default = "half")]
    pub split_ratio: f64,
    /// Dark counts per second on each detector.
    #[serde(default)]
    pub dark_rate_per_detector: f64,
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidConfig(format!(
                "efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split_ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if !(self.dark_rate_per_detector.is_finite() && self.dark_rate_per_detector >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dark_rate_per_detector must be >= 0, got {}",
                self.dark_rate_per_detector
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterEnsemble {
    pub molecules: Vec<MoleculePhotophysics>,
    pub excitation: ExcitationConfig,
    pub detection: DetectionConfig,
    /// Acquisition length, s.
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EmitterEnsemble {
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "duration_s must be >= 0, got {}",
                self.duration_s
            )));
        }
        for m in &self.molecules {
            m.validate()?;
        }
        self.detection.validate()?;
        self.excitation.validate(&self.molecules)
    }

    pub fn pulse_period_ps(&self) -> f64 {
        match self.excitation {
            ExcitationConfig::Pulsed {
                pulse_period_ns, ..
            } => ns_to_ps(pulse_period_ns),
            ExcitationConfig::Cw { .. } => 0.0,
        }
    }

    pub fn acquisition_meta(&self) -> AcquisitionMeta {
        AcquisitionMeta {
            duration_s: self.duration_s,
            bin_width_ps: DEFAULT_BIN_WIDTH_PS,
            pulse_period_ps: self.pulse_period_ps(),
            seed: self.seed,
            rng: format!(
                "{}/{{molecule,dark}}.i/block.k",
                SeedPath::root(self.seed).describe()
            ),
            notes: format!("simulated: {} molecule(s)", self.molecules.len()),
        }
    }

    /// Per-pulse detected-photon probability of each molecule, ignoring
    /// bleaching and shelving.
    pub fn detection_prob_per_pulse(&self) -> Vec<f64> {
        let p = match self.excitation {
            ExcitationConfig::Pulsed {
                excitation_prob_per_pulse,
                ..
            } => excitation_prob_per_pulse,
            ExcitationConfig::Cw { .. } => return vec![0.0; self.molecules.len()],
        };
        self.molecules
            .iter()
            .map(|m| p * detect_prob(self.detection.efficiency, m.brightness))
            .collect()
    }

    /// The effective emitter number of the pulsed correlation model,
    /// `(Σ dᵢ)² / Σ dᵢ²` over per-pulse detection probabilities `dᵢ`.
    ///
    /// The central peak counts pairs from distinct molecules, the side peaks
    /// count all pairs; their ratio `1 − Σd²/(Σd)²` equals `1 − 1/m`.
    pub fn effective_emitter_number(&self) -> Option<f64> {
        let d = self.detection_prob_per_pulse();
        let s: f64 = d.iter().sum();
        let s2: f64 = d.iter().map(|x| x * x).sum();
        (s2 > 0.0).then(|| s * s / s2)
    }
}

fn detect_prob(efficiency: f64, brightness: f64) -> f64 {
    (efficiency * brightness).clamp(0.0, 1.0)
}

/// Generates the whole acquisition in memory.
pub fn simulate_stream(ensemble: &EmitterEnsemble) -> Result<TimeTagStream> {
    let sim = StreamSimulator::new(ensemble)?;
    let meta = sim.meta().clone();
    let mut tags = Vec::new();
    for block in sim {
        tags.extend(block);
    }
    Ok(TimeTagStream::from_sorted_unchecked(tags, meta))
}

/// Outcome probabilities of a single excitation, mutually exclusive.
#[derive(Debug, Clone, Copy)]
struct Branching {
    bleach: f64,
    shelve: f64,
    detect: f64,
}

impl Branching {
    fn new(m: &MoleculePhotophysics, det: &DetectionConfig) -> Self {
        let b = m.bleach_prob_per_excitation;
        let shelve = (1.0 - b) * m.isc_yield;
        let detect = (1.0 - b) * (1.0 - m.isc_yield) * detect_prob(det.efficiency, m.brightness);
        Branching {
            bleach: b,
            shelve,
            detect,
        }
    }

    /// Probability that an excitation does anything observable.
    fn eventful(&self) -> f64 {
        (self.bleach + self.shelve + self.detect).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Bleach,
    Shelve,
    Detect,
}

impl Branching {
    /// Draws the outcome of an excitation known to be eventful.
    fn choose(&self, rng: &mut Rng) -> Outcome {
        let u = rng.random::<f64>() * self.eventful();
        if u < self.detect {
            Outcome::Detect
        } else if u < self.detect + self.bleach {
            Outcome::Bleach
        } else {
            Outcome::Shelve
        }
    }
}

#[derive(Debug, Clone)]
struct MoleculeState {
    branching: Branching,
    t1_ps: f64,
    triplet_ps: f64,
    bleached: bool,
    /// The molecule ignores excitation before this time, ps.
    available_from_ps: f64,
    /// Photons emitted in an earlier block but landing in a later one.
    carry: Vec<(u64, u8)>,
}

/// Block-by-block generator; yields sorted clicks for consecutive one-second
/// windows. Concatenating all blocks gives [`simulate_stream`]'s output.
pub struct StreamSimulator {
    ensemble: EmitterEnsemble,
    meta: AcquisitionMeta,
    root: SeedPath,
    molecules: Vec<MoleculeState>,
    duration_ps: f64,
    n_blocks: u64,
    next_block: u64,
}

impl StreamSimulator {
    pub fn new(ensemble: &EmitterEnsemble) -> Result<Self> {
        for w in ensemble.validate()? {
            log::warn!("{w}");
        }
        let molecules = ensemble
            .molecules
            .iter()
            .map(|m| MoleculeState {
                branching: Branching::new(m, &ensemble.detection),
                t1_ps: ns_to_ps(m.t1_ns),
                triplet_ps: m.triplet_lifetime_us.unwrap_or(0.0) * 1e6,
                bleached: false,
                available_from_ps: 0.0,
                carry: Vec::new(),
            })
            .collect();
        let duration_ps = ensemble.duration_s * PS_PER_S;
        Ok(StreamSimulator {
            ensemble: ensemble.clone(),
            meta: ensemble.acquisition_meta(),
            root: SeedPath::root(ensemble.seed),
            molecules,
            duration_ps,
            n_blocks: (duration_ps / BLOCK_PS).ceil() as u64,
            next_block: 0,
        })
    }

    pub fn meta(&self) -> &AcquisitionMeta {
        &self.meta
    }

    pub fn n_blocks(&self) -> u64 {
        self.n_blocks
    }

    fn block(&mut self, k: u64) -> Vec<TimeTag> {
        let start = k as f64 * BLOCK_PS;
        let end = ((k + 1) as f64 * BLOCK_PS).min(self.duration_ps);
        let duration_ps = self.duration_ps;
        let root = &self.root;
        let excitation = &self.ensemble.excitation;
        let split = self.ensemble.detection.split_ratio;
        let dark_rate = self.ensemble.detection.dark_rate_per_detector;
        let last = k + 1 == self.n_blocks;

        // (time, channel, source)
        let mut events: Vec<(u64, u8, u32)> = self
            .molecules
            .par_iter_mut()
            .enumerate()
            .map(|(i, m)| {
                let mut rng = root.child("molecule", i as u64).child("block", k).rng();
                let mut out = Vec::new();
                m.carry.sort_unstable();
                let keep_from = m.carry.partition_point(|&(t, _)| (t as f64) < end || last);
                out.extend(m.carry.drain(..keep_from).map(|(t, c)| (t, c, i as u32)));
                match *excitation {
                    ExcitationConfig::Pulsed {
                        pulse_period_ns,
                        excitation_prob_per_pulse,
                    } => {
                        let period = ns_to_ps(pulse_period_ns);
                        pulsed_block(
                            m,
                            &mut rng,
                            start,
                            end,
                            period,
                            excitation_prob_per_pulse,
                            split,
                            duration_ps,
                            i,
                            &mut out,
                        );
                    }
                    ExcitationConfig::Cw { intensity, i_sat } => {
                        let rate_per_ps = excitation_rate_cw(intensity, i_sat, m.t1_ps);
                        cw_block(m, &mut rng, start, end, rate_per_ps, split, i, &mut out);
                    }
                }
                out
            })
            .flatten()
            .collect();

        let n_mol = self.molecules.len() as u32;
        for ch in 0..2u8 {
            if dark_rate > 0.0 {
                let mut rng = root.child("dark", u64::from(ch)).child("block", k).rng();
                let exp = Exp::new(dark_rate / PS_PER_S).expect("positive rate");
                let mut t = start;
                loop {
                    t += exp.sample(&mut rng);
                    if t >= end {
                        break;
                    }
                    events.push((t as u64, ch, n_mol + u32::from(ch)));
                }
            }
        }
        events.sort_unstable();
        events
            .into_iter()
            .map(|(t, c, _)| TimeTag {
                time_ps: t,
                channel: c,
            })
            .collect()
    }
}

impl Iterator for StreamSimulator {
    type Item = Vec<TimeTag>;

    fn next(&mut self) -> Option<Vec<TimeTag>> {
        if self.next_block >= self.n_blocks {
            return None;
        }
        let k = self.next_block;
        self.next_block += 1;
        Some(self.block(k))
    }
}

/// Photons/ps of a two-level molecule under CW drive.
fn excitation_rate_cw(intensity: f64, i_sat: f64, t1_ps: f64) -> f64 {
    if intensity <= 0.0 {
        return 0.0;
    }
    (1.0 / (2.0 * t1_ps)) * intensity / (intensity + i_sat)
}

fn route(rng: &mut Rng, split: f64) -> u8 {
    u8::from(rng.random::<f64>() >= split)
}

#[allow(clippy::too_many_arguments)]
fn pulsed_block(
    m: &mut MoleculeState,
    rng: &mut Rng,
    start: f64,
    end: f64,
    period: f64,
    p_exc: f64,
    split: f64,
    duration_ps: f64,
    source: usize,
    out: &mut Vec<(u64, u8, u32)>,
) {
    if m.bleached {
        return;
    }
    let p_event = p_exc * m.branching.eventful();
    if p_event <= 0.0 {
        return;
    }
    // Pulse n fires at n·period; this block owns pulses with start <= n·period < end.
    let first = (start / period).ceil() as u64;
    let stop = (end / period).ceil() as u64;
    let geom = Geometric::new(p_event).expect("probability in (0, 1]");
    let decay = Exp::new(1.0 / m.t1_ps).expect("positive lifetime");
    let mut n = first.max((m.available_from_ps / period).ceil() as u64);
    loop {
        n = n.saturating_add(geom.sample(rng));
        if n >= stop {
            break;
        }
        let t_pulse = n as f64 * period;
        match m.branching.choose(rng) {
            Outcome::Detect => {
                let t = t_pulse + decay.sample(rng);
                let ch = route(rng, split);
                if t <= duration_ps {
                    if t < end {
                        out.push((t as u64, ch, source as u32));
                    } else {
                        m.carry.push((t as u64, ch));
                    }
                }
            }
            Outcome::Bleach => {
                m.bleached = true;
                return;
            }
            Outcome::Shelve => {
                let delay = Exp::new(1.0 / m.triplet_ps)
                    .expect("positive triplet lifetime")
                    .sample(rng);
                m.available_from_ps = t_pulse + delay;
                n = (m.available_from_ps / period).ceil() as u64;
                if n >= stop {
                    break;
                }
                continue;
            }
        }
        n += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn cw_block(
    m: &mut MoleculeState,
    rng: &mut Rng,
    start: f64,
    end: f64,
    rate_per_ps: f64,
    split: f64,
    source: usize,
    out: &mut Vec<(u64, u8, u32)>,
) {
    if m.bleached {
        return;
    }
    let rate = rate_per_ps * m.branching.eventful();
    if rate <= 0.0 {
        return;
    }
    let wait = Exp::new(rate).expect("positive rate");
    let mut t = start.max(m.available_from_ps);
    loop {
        t += wait.sample(rng);
        if t >= end {
            break;
        }
        match m.branching.choose(rng) {
            Outcome::Detect => out.push((t as u64, route(rng, split), source as u32)),
            Outcome::Bleach => {
                m.bleached = true;
                return;
            }
            Outcome::Shelve => {
                t += Exp::new(1.0 / m.triplet_ps)
                    .expect("positive triplet lifetime")
                    .sample(rng);
                m.available_from_ps = t;
            }
        }
    }
}
