use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{ExcitationConfig, MoleculePhotophysics};
use crate::error::{Error, Result};
use crate::rng::SeedPath;
use crate::units::NS_PER_S;

/// Number of unbleached molecules at each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    /// Exposure time, s.
    pub times_s: Vec<f64>,
    pub survivors: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(times_s: Vec<f64>, survivors: Vec<f64>) -> Result<Self> {
        if times_s.len() != survivors.len() {
            return Err(Error::InvalidConfig(format!(
                "{} checkpoints but {} survivor counts",
                times_s.len(),
                survivors.len()
            )));
        }
        if times_s.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig(
                "checkpoints must be sorted ascending".into(),
            ));
        }
        Ok(SurvivalCurve { times_s, survivors })
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }
}

/// Excitations per second of one molecule.
pub fn excitation_rate(excitation: &ExcitationConfig, t1_ns: f64) -> f64 {
    match *excitation {
        ExcitationConfig::Pulsed {
            pulse_period_ns,
            excitation_prob_per_pulse,
        } => excitation_prob_per_pulse / pulse_period_ns * NS_PER_S,
        ExcitationConfig::Cw { intensity, i_sat } => {
            if intensity <= 0.0 {
                0.0
            } else {
                NS_PER_S / (2.0 * t1_ns) * intensity / (intensity + i_sat)
            }
        }
    }
}

/// Expected excitations of a two-level molecule after `exposure_s` of CW
/// drive at `intensity` (kW/cm²).
pub fn photon_budget(intensity: f64, i_sat: f64, t1_ns: f64, exposure_s: f64) -> f64 {
    exposure_s * excitation_rate(&ExcitationConfig::Cw { intensity, i_sat }, t1_ns)
}

/// Per-excitation bleach probability giving a mean survival of `lifetime_s`.
pub fn bleach_prob_for_lifetime(excitation: &ExcitationConfig, t1_ns: f64, lifetime_s: f64) -> f64 {
    if lifetime_s.is_infinite() {
        return 0.0;
    }
    (1.0 / (excitation_rate(excitation, t1_ns) * lifetime_s)).min(1.0)
}

/// Draws one bleach time per molecule, exponential at rate
/// `excitation_rate × bleach_prob_per_excitation`, and counts survivors.
///
/// Molecule `i` draws from the `bleach.i` sub-stream of `seed`.
pub fn simulate_bleaching_survival(
    population: &[MoleculePhotophysics],
    excitation: &ExcitationConfig,
    checkpoints_s: &[f64],
    seed: u64,
) -> Result<SurvivalCurve> {
    if checkpoints_s.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig(
            "checkpoints must be sorted ascending".into(),
        ));
    }
    excitation.validate(population)?;
    for m in population {
        m.validate()?;
    }
    let root = SeedPath::root(seed);
    let bleach_times: Vec<f64> = population
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let rate = excitation_rate(excitation, m.t1_ns) * m.bleach_prob_per_excitation;
            if rate > 0.0 {
                Exp::new(rate)
                    .expect("positive rate")
                    .sample(&mut root.child("bleach", i as u64).rng())
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let survivors = checkpoints_s
        .iter()
        .map(|&t| bleach_times.iter().filter(|&&b| b > t).count() as f64)
        .collect();
    Ok(SurvivalCurve {
        times_s: checkpoints_s.to_vec(),
        survivors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn photon_budget_closed_form() {
        assert_eq!(photon_budget(0.0, 75.0, 4.23, 5.7), 0.0);
        let b = photon_budget(75.0, 75.0, 4.0, 1.0);
        assert!((b - 0.5 / 8e-9).abs() / b < 1e-14);
    }

    #[test]
    fn photostable_population_is_flat() {
        let pop = vec![MoleculePhotophysics::new(4.23); 12];
        let exc = ExcitationConfig::Cw {
            intensity: 130.0,
            i_sat: 75.0,
        };
        let c = simulate_bleaching_survival(&pop, &exc, &[0.0, 60.0, 3600.0], 1).unwrap();
        assert_eq!(c.survivors, vec![12.0; 3]);
    }

    #[test]
    fn unsorted_checkpoints_rejected() {
        let exc = ExcitationConfig::Cw {
            intensity: 10.0,
            i_sat: 75.0,
        };
        assert!(simulate_bleaching_survival(&[], &exc, &[5.0, 1.0], 0).is_err());
    }

    #[test]
    fn survival_is_non_increasing() {
        let exc = ExcitationConfig::Cw {
            intensity: 10.0,
            i_sat: 75.0,
        };
        let p = bleach_prob_for_lifetime(&exc, 4.23, 5.7);
        let pop = vec![MoleculePhotophysics::new(4.23).with_bleach_prob(p); 36];
        let t: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let c = simulate_bleaching_survival(&pop, &exc, &t, 9).unwrap();
        assert!(c.survivors.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(c.survivors[0], 36.0);
    }
}
