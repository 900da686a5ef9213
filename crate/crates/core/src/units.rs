//! Unit conventions and physical constants.
//!
//! | quantity    | unit                               |
//! |-------------|------------------------------------|
//! | time        | ps (`u64`, time tags) or ns (`f64`, models) |
//! | intensity   | kW/cm²                             |
//! | rate        | counts/s                           |
//! | energy      | meV                                |
//! | area        | Å²                                 |
//! | pressure    | Pa                                 |
//! | temperature | K (°C accepted only at the edges)  |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PS_PER_NS: f64 = 1e3;
pub const PS_PER_S: f64 = 1e12;
pub const NS_PER_S: f64 = 1e9;

/// Boltzmann constant, J/K (exact, SI 2019).
pub const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;
/// Boltzmann constant, meV/K.
pub const BOLTZMANN_MEV_PER_K: f64 = 8.617_333_262_145e-2;
/// Reduced Planck constant, J·s.
pub const HBAR_J_S: f64 = 1.054_571_817e-34;
/// Unified atomic mass unit, kg.
pub const DALTON_KG: f64 = 1.660_539_066_60e-27;
/// Molar gas constant, J/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314_462_618;
/// Joules per meV.
pub const JOULE_PER_MEV: f64 = 1.602_176_634e-22;

pub const ZERO_CELSIUS_K: f64 = 273.15;

pub fn ps_to_ns(ps: f64) -> f64 {
    ps / PS_PER_NS
}

pub fn ns_to_ps(ns: f64) -> f64 {
    ns * PS_PER_NS
}

pub fn ps_to_s(ps: f64) -> f64 {
    ps / PS_PER_S
}

pub fn s_to_ps(s: f64) -> f64 {
    s * PS_PER_S
}

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + ZERO_CELSIUS_K
}

pub fn kelvin_to_celsius(k: f64) -> f64 {
    k - ZERO_CELSIUS_K
}

/// A temperature as typed by a user: `243C`, `516.15K`, or a bare number
/// (kelvin). Always stored in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Kelvin(pub f64);

impl Kelvin {
    pub fn from_celsius(c: f64) -> Self {
        Kelvin(celsius_to_kelvin(c))
    }

    pub fn celsius(self) -> f64 {
        kelvin_to_celsius(self.0)
    }
}

impl FromStr for Kelvin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidConfig(format!("cannot parse temperature {s:?}"));
        let (num, celsius) = if let Some(v) = s.strip_suffix(['C', 'c']) {
            (v.trim_end_matches('°'), true)
        } else if let Some(v) = s.strip_suffix(['K', 'k']) {
            (v, false)
        } else {
            (s, false)
        };
        let v: f64 = num.trim().parse().map_err(|_| bad())?;
        let k = if celsius { celsius_to_kelvin(v) } else { v };
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature {s:?} is not above absolute zero"
            )));
        }
        Ok(Kelvin(k))
    }
}

impl fmt::Display for Kelvin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} K", self.0)
    }
}
