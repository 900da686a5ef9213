//! Vapor-growth thermodynamics of anthracene crystals.
//!
//! Chain: sublimation pressure `p₀(T)` at the source, ideal-gas pressure
//! `p_t = √(T_t/T_b)·p₀(T_b)` at the cool end, supersaturation drive
//! `Δμ = k_B·T_t·ln(p_t/p₀(T_t))`, and the 2D-growth threshold
//! `Δμ_c = 2·ab·(2γ − σ)` that separates needles from mesas.
//! Energies in meV, areas in Å², pressures in Pa, temperatures in K.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::Estimate;
use crate::units::{
    celsius_to_kelvin, BOLTZMANN_J_PER_K, BOLTZMANN_MEV_PER_K, DALTON_KG, GAS_CONSTANT, HBAR_J_S,
};

pub const ANTHRACENE_MOLAR_MASS: f64 = 178.23;
/// Area of the (001) unit-cell face, Å².
pub const ANTHRACENE_AB: f64 = 51.7;
/// (001) surface energy, meV/Å².
pub const ANTHRACENE_GAMMA_001: f64 = 3.3;
pub const DEFAULT_T_TOP_K: f64 = 298.15;

pub const CLAUSIUS_CLAPEYRON_PRESET: &str = "clausius-clapeyron-preset-1";
pub const ANTOINE_PRESET: &str = "antoine-preset-1";
pub const PRESET_NAMES: [&str; 2] = [ANTOINE_PRESET, CLAUSIUS_CLAPEYRON_PRESET];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CorrelationForm {
    /// `log₁₀(p/Pa) = a − b/(T − c)`.
    Antoine { a: f64, b: f64, c: f64 },
    /// `p = p_ref·exp(−ΔH/R·(1/T − 1/T_ref))`.
    ClausiusClapeyron {
        delta_h_j_per_mol: f64,
        t_ref_k: f64,
        p_ref_pa: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaporPressureCorrelation {
    pub form: CorrelationForm,
    /// Validity window `(T_min, T_max)`, K.
    pub valid_range: (f64, f64),
    pub source_label: String,
}

impl VaporPressureCorrelation {
    /// A bundled anthracene sublimation correlation by name.
    pub fn preset(name: &str) -> Option<Self> {
        let range = (273.15, 523.15);
        match name {
            ANTOINE_PRESET => Some(VaporPressureCorrelation {
                form: CorrelationForm::Antoine {
                    a: 14.022,
                    b: 4837.0,
                    c: 15.0,
                },
                valid_range: range,
                source_label: format!(
                    "{ANTOINE_PRESET}: representative anthracene sublimation fit in Antoine form; \
                     extrapolated above the 489 K melting point"
                ),
            }),
            CLAUSIUS_CLAPEYRON_PRESET => Some(VaporPressureCorrelation {
                form: CorrelationForm::ClausiusClapeyron {
                    delta_h_j_per_mol: 100.4e3,
                    t_ref_k: 298.15,
                    p_ref_pa: 8.7e-4,
                },
                valid_range: range,
                source_label: format!(
                    "{CLAUSIUS_CLAPEYRON_PRESET}: sublimation enthalpy 100.4 kJ/mol anchored at \
                     8.7e-4 Pa, 298.15 K; extrapolated above the 489 K melting point"
                ),
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.valid_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidCoefficients(format!(
                "empty validity range ({lo}, {hi})"
            )));
        }
        match self.form {
            CorrelationForm::Antoine { a, b, c } => {
                if ![a, b, c].iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidCoefficients(
                        "non-finite Antoine coefficient".into(),
                    ));
                }
            }
            CorrelationForm::ClausiusClapeyron {
                delta_h_j_per_mol,
                t_ref_k,
                p_ref_pa,
            } => {
                if !(delta_h_j_per_mol.is_finite()
                    && t_ref_k > 0.0
                    && p_ref_pa > 0.0
                    && p_ref_pa.is_finite())
                {
                    return Err(Error::InvalidCoefficients(
                        "Clausius-Clapeyron needs finite ΔH, T_ref > 0 and p_ref > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn in_range(&self, t_k: f64) -> bool {
        t_k >= self.valid_range.0 && t_k <= self.valid_range.1
    }
}

impl FromStr for VaporPressureCorrelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::preset(s).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown correlation {s:?}; presets are {}",
                PRESET_NAMES.join(", ")
            ))
        })
    }
}

/// Equilibrium vapor pressure in Pa.
pub fn vapor_pressure(t_k: f64, corr: &VaporPressureCorrelation) -> Result<f64> {
    corr.validate()?;
    if !(t_k > 0.0 && t_k.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0 K, got {t_k}"
        )));
    }
    let p = match corr.form {
        CorrelationForm::Antoine { a, b, c } => {
            if t_k <= c {
                return Err(Error::InvalidCoefficients(format!(
                    "Antoine pole: T = {t_k} K ≤ C = {c} K"
                )));
            }
            10f64.powf(a - b / (t_k - c))
        }
        CorrelationForm::ClausiusClapeyron {
            delta_h_j_per_mol,
            t_ref_k,
            p_ref_pa,
        } => {
            if t_k == t_ref_k {
                p_ref_pa
            } else {
                p_ref_pa * (-delta_h_j_per_mol / GAS_CONSTANT * (1.0 / t_k - 1.0 / t_ref_k)).exp()
            }
        }
    };
    Ok(p)
}

/// [`vapor_pressure`] plus an out-of-range note when `t_k` leaves the validity window.
pub fn vapor_pressure_checked(
    t_k: f64,
    corr: &VaporPressureCorrelation,
) -> Result<(f64, Option<String>)> {
    let p = vapor_pressure(t_k, corr)?;
    let flag = (!corr.in_range(t_k)).then(|| {
        format!(
            "T = {t_k:.2} K outside [{:.2}, {:.2}] K of {}",
            corr.valid_range.0, corr.valid_range.1, corr.source_label
        )
    });
    Ok((p, flag))
}

/// Ideal-gas pressure transmitted to the cool end.
pub fn top_pressure_from(t_bottom_k: f64, t_top_k: f64, p0_bottom: f64) -> f64 {
    (t_top_k / t_bottom_k).sqrt() * p0_bottom
}

/// `p_Q = (m·k_B·T/(2πħ²))^{3/2}·k_B·T` in Pa.
pub fn quantum_pressure(t_k: f64, molar_mass: f64) -> f64 {
    let m = molar_mass * DALTON_KG;
    let kt = BOLTZMANN_J_PER_K * t_k;
    (m * kt / (2.0 * PI * HBAR_J_S * HBAR_J_S)).powf(1.5) * kt
}

/// Ideal-gas chemical potential `−k_B·T·ln(p_Q/p)`, meV.
pub fn chemical_potential(p_pa: f64, t_k: f64, molar_mass: f64) -> Result<f64> {
    if !(p_pa > 0.0) {
        return Err(Error::NonPositivePressure(p_pa));
    }
    Ok(-BOLTZMANN_MEV_PER_K * t_k * (quantum_pressure(t_k, molar_mass) / p_pa).ln())
}

/// `2·ab·(2γ − σ)`, meV.
pub fn critical_delta_mu(ab: f64, gamma: f64, sigma: f64) -> f64 {
    2.0 * ab * (2.0 * gamma - sigma)
}

/// Inverts [`critical_delta_mu`]: `σ = 2γ − Δμ/(2·ab)` with linear error propagation.
pub fn extract_sigma(delta_mu: Estimate, ab: f64, gamma: f64) -> Estimate {
    Estimate::new(
        2.0 * gamma - delta_mu.value / (2.0 * ab),
        delta_mu.error / (2.0 * ab),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Morphology {
    Needles,
    Mesas,
    Equilibrium,
}

impl Morphology {
    pub fn classify(delta_mu: f64, critical: f64) -> Self {
        if delta_mu <= 0.0 {
            Morphology::Equilibrium
        } else if delta_mu > critical {
            Morphology::Mesas
        } else {
            Morphology::Needles
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Morphology::Needles => "needles",
            Morphology::Mesas => "mesas",
            Morphology::Equilibrium => "equilibrium",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoScenario {
    pub t_bottom_k: f64,
    #[serde(default = "default_t_top")]
    pub t_top_k: f64,
    pub correlation: VaporPressureCorrelation,
    #[serde(default = "default_molar_mass")]
    pub molar_mass: f64,
    #[serde(default = "default_ab")]
    pub unit_cell_ab: f64,
    #[serde(default = "default_gamma")]
    pub gamma_001: f64,
    /// Substrate binding energy per area, meV/Å².
    #[serde(default)]
    pub sigma_substrate: Option<f64>,
}

fn default_t_top() -> f64 {
    DEFAULT_T_TOP_K
}
fn default_molar_mass() -> f64 {
    ANTHRACENE_MOLAR_MASS
}
fn default_ab() -> f64 {
    ANTHRACENE_AB
}
fn default_gamma() -> f64 {
    ANTHRACENE_GAMMA_001
}

impl ThermoScenario {
    /// Anthracene constants with the top held at 25 °C.
    pub fn new(t_bottom_k: f64, correlation: VaporPressureCorrelation) -> Self {
        ThermoScenario {
            t_bottom_k,
            t_top_k: DEFAULT_T_TOP_K,
            correlation,
            molar_mass: ANTHRACENE_MOLAR_MASS,
            unit_cell_ab: ANTHRACENE_AB,
            gamma_001: ANTHRACENE_GAMMA_001,
            sigma_substrate: None,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma_substrate = Some(sigma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_bottom_k > 0.0 && self.t_top_k > 0.0) {
            return Err(Error::InvalidConfig("temperatures must be > 0 K".into()));
        }
        if !(self.unit_cell_ab > 0.0 && self.gamma_001 > 0.0 && self.molar_mass > 0.0) {
            return Err(Error::InvalidConfig(
                "ab, γ and molar mass must be > 0".into(),
            ));
        }
        self.correlation.validate()
    }
}

pub fn top_pressure(s: &ThermoScenario) -> Result<f64> {
    s.validate()?;
    Ok(top_pressure_from(
        s.t_bottom_k,
        s.t_top_k,
        vapor_pressure(s.t_bottom_k, &s.correlation)?,
    ))
}

/// `k_B·T_t·ln(p_t/p₀(T_t))`, meV.
pub fn delta_mu(s: &ThermoScenario) -> Result<f64> {
    let p_t = top_pressure(s)?;
    let p0_t = vapor_pressure(s.t_top_k, &s.correlation)?;
    Ok(BOLTZMANN_MEV_PER_K * s.t_top_k * (p_t / p0_t).ln())
}

pub fn predict_morphology(s: &ThermoScenario) -> Result<Morphology> {
    let sigma = s.sigma_substrate.ok_or_else(|| {
        Error::InvalidConfig("morphology prediction needs sigma_substrate".into())
    })?;
    Ok(Morphology::classify(
        delta_mu(s)?,
        critical_delta_mu(s.unit_cell_ab, s.gamma_001, sigma),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    pub t_bottom_k: f64,
    pub t_top_k: f64,
    pub p0_bottom: f64,
    pub p0_top: f64,
    pub p_top: f64,
    /// `p₀(T_b)/p₀(T_t)`.
    pub pressure_ratio: f64,
    /// Quantum pressure at `T_t`.
    pub quantum_pressure: f64,
    /// μ of the vapor at `(p_t, T_t)`.
    pub mu_vapor: f64,
    /// μ of vapor in equilibrium with the crystal at `T_t`.
    pub mu_surface: f64,
    pub delta_mu: f64,
    pub delta_mu_critical: Option<f64>,
    pub predicted_morphology: Option<Morphology>,
    pub correlation: String,
    pub out_of_range_flags: Vec<String>,
}

pub fn thermo_report(s: &ThermoScenario) -> Result<ThermoReport> {
    s.validate()?;
    let mut flags = Vec::new();
    let (p0_bottom, f1) = vapor_pressure_checked(s.t_bottom_k, &s.correlation)?;
    let (p0_top, f2) = vapor_pressure_checked(s.t_top_k, &s.correlation)?;
    flags.extend(f1);
    flags.extend(f2);
    let p_top = top_pressure_from(s.t_bottom_k, s.t_top_k, p0_bottom);
    let dmu = delta_mu(s)?;
    let critical = s
        .sigma_substrate
        .map(|sig| critical_delta_mu(s.unit_cell_ab, s.gamma_001, sig));
    Ok(ThermoReport {
        t_bottom_k: s.t_bottom_k,
        t_top_k: s.t_top_k,
        p0_bottom,
        p0_top,
        p_top,
        pressure_ratio: p0_bottom / p0_top,
        quantum_pressure: quantum_pressure(s.t_top_k, s.molar_mass),
        mu_vapor: chemical_potential(p_top, s.t_top_k, s.molar_mass)?,
        mu_surface: chemical_potential(p0_top, s.t_top_k, s.molar_mass)?,
        delta_mu: dmu,
        delta_mu_critical: critical,
        predicted_morphology: critical.map(|c| Morphology::classify(dmu, c)),
        correlation: s.correlation.source_label.clone(),
        out_of_range_flags: flags,
    })
}

/// Bottom temperature in `[lo_k, hi_k]` where Δμ crosses the critical value,
/// found by bisection to 1 mK. `None` if there is no sign change.
pub fn crossover_temperature(s: &ThermoScenario, lo_k: f64, hi_k: f64) -> Result<Option<f64>> {
    let sigma = s
        .sigma_substrate
        .ok_or_else(|| Error::InvalidConfig("crossover needs sigma_substrate".into()))?;
    let critical = critical_delta_mu(s.unit_cell_ab, s.gamma_001, sigma);
    let excess = |t: f64| -> Result<f64> {
        Ok(delta_mu(&ThermoScenario {
            t_bottom_k: t,
            ..s.clone()
        })? - critical)
    };
    let (mut a, mut b) = (lo_k, hi_k);
    let (fa, fb) = (excess(a)?, excess(b)?);
    if fa.signum() == fb.signum() {
        return Ok(None);
    }
    while b - a > 1e-3 {
        let mid = 0.5 * (a + b);
        if excess(mid)?.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

/// One row of a temperature sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t_bottom_k: f64,
    pub t_bottom_c: f64,
    pub pressure_ratio: f64,
    pub delta_mu: f64,
    pub morphology: Option<Morphology>,
}

pub fn sweep(s: &ThermoScenario, t_bottom_k: &[f64]) -> Result<Vec<SweepRow>> {
    t_bottom_k
        .iter()
        .map(|&t| {
            let r = thermo_report(&ThermoScenario {
                t_bottom_k: t,
                ..s.clone()
            })?;
            Ok(SweepRow {
                t_bottom_k: t,
                t_bottom_c: t - celsius_to_kelvin(0.0),
                pressure_ratio: r.pressure_ratio,
                delta_mu: r.delta_mu,
                morphology: r.predicted_morphology,
            })
        })
        .collect()
}
