use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    detect_spots, extract_polarization_series, jittered_angle, render_scan, Emitter, EmitterLayout,
    ScanConfig,
};
use crate::error::Result;
use crate::models::fit_polarization;
use crate::models::polarization::wrap_180;
use crate::rng::SeedPath;

/// A synthetic survey of molecules in several crystals, each crystal
/// sharing one dipole axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub n_crystals: usize,
    pub n_molecules: usize,
    /// Gaussian spread of dipoles about their crystal axis, degrees.
    pub intrinsic_spread_deg: f64,
    pub angles_deg: Vec<f64>,
    pub scan: ScanConfig,
    pub threshold_sigma: f64,
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            n_crystals: 12,
            n_molecules: 58,
            intrinsic_spread_deg: 3.0,
            angles_deg: (0..12).map(|k| 15.0 * k as f64).collect(),
            scan: ScanConfig::default(),
            threshold_sigma: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMolecule {
    pub crystal: usize,
    pub true_angle_deg: f64,
    pub fitted_angle_deg: f64,
    pub fitted_error_deg: f64,
    pub visibility: f64,
    /// Fitted angle relative to the crystal's mean fitted angle, in `(−90, 90]`.
    pub deviation_deg: f64,
    /// Peak signal over its Poisson noise.
    pub snr: f64,
    pub isolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub crystal_axes_deg: Vec<f64>,
    pub crystal_means_deg: Vec<f64>,
    pub molecules: Vec<BatchMolecule>,
    pub n_planted: usize,
    pub n_detected: usize,
}

/// Signed difference `a − b` of two axial angles, in `(−90, 90]`.
pub fn axial_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    if d > 90.0 {
        d - 180.0
    } else {
        d
    }
}

fn axial_mean(angles: &[f64]) -> f64 {
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| {
        let u = (2.0 * a).to_radians();
        (s + u.sin(), c + u.cos())
    });
    wrap_180(0.5 * f64::atan2(s, c).to_degrees())
}

const SITES: [(f64, f64); 6] = [
    (3.0, 4.0),
    (8.0, 4.0),
    (13.0, 4.0),
    (3.0, 11.0),
    (8.0, 11.0),
    (13.0, 11.0),
];

/// Render → detect → extract → fit for every crystal.
///
/// Molecules are spread as evenly as possible over the crystals and placed
/// near fixed sites 5 µm apart so that every planted spot is isolated.
/// Spots are found on the sum of all polarizer frames; each detection is
/// matched to the nearest planted molecule within one PSF FWHM.
pub fn polarization_batch(cfg: &BatchConfig) -> Result<BatchResult> {
    let root = SeedPath::root(cfg.seed);
    let mut axes = Vec::new();
    let mut means = Vec::new();
    let mut molecules = Vec::new();
    let mut n_detected = 0;
    let fwhm = cfg.scan.psf_fwhm_um();
    for k in 0..cfg.n_crystals {
        let n_here =
            cfg.n_molecules / cfg.n_crystals + usize::from(k < cfg.n_molecules % cfg.n_crystals);
        let mut rng = root.child("crystal", k as u64).rng();
        let axis = rng.random::<f64>() * 180.0;
        axes.push(axis);
        let emitters: Vec<Emitter> = (0..n_here)
            .map(|i| {
                let (x, y) = SITES[i % SITES.len()];
                let shift = (i / SITES.len()) as f64 * 1.5;
                Emitter {
                    x_um: x + shift + (rng.random::<f64>() - 0.5),
                    y_um: y + shift + (rng.random::<f64>() - 0.5),
                    dipole_angle_deg: wrap_180(jittered_angle(
                        &mut rng,
                        axis,
                        cfg.intrinsic_spread_deg,
                    )),
                    brightness: 1.0,
                }
            })
            .collect();
        let layout = EmitterLayout::new(emitters);
        let scan_seed = root.child("scan", k as u64).stream_id();
        let frames: Vec<(f64, Array2<f64>)> = cfg
            .angles_deg
            .iter()
            .map(|&a| {
                let c = ScanConfig {
                    seed: scan_seed,
                    ..cfg.scan.with_polarizer(a)
                };
                render_scan(&layout, &c).map(|img| (a, img))
            })
            .collect::<Result<_>>()?;
        let mut total = Array2::zeros(cfg.scan.shape());
        for (_, f) in &frames {
            total += f;
        }
        let spots = detect_spots(&total, &cfg.scan, cfg.threshold_sigma);
        n_detected += spots.len();
        let series = extract_polarization_series(&frames, &spots, &cfg.scan)?;
        let mut here = Vec::new();
        for s in series {
            let Some(truth) = layout
                .emitters
                .iter()
                .filter(|e| {
                    (e.x_um - s.spot.centroid_um.0).hypot(e.y_um - s.spot.centroid_um.1) < fwhm
                })
                .min_by(|a, b| {
                    let da = (a.x_um - s.spot.centroid_um.0).hypot(a.y_um - s.spot.centroid_um.1);
                    let db = (b.x_um - s.spot.centroid_um.0).hypot(b.y_um - s.spot.centroid_um.1);
                    da.total_cmp(&db)
                })
            else {
                continue;
            };
            if s.lost {
                continue;
            }
            let Ok(fit) = fit_polarization(&s.series) else {
                continue;
            };
            let peak = s.raw_signal.iter().cloned().fold(0.0, f64::max);
            let n_frames = frames.len().max(1) as f64;
            let bg_per_frame = total.iter().sum::<f64>() / total.len() as f64 / n_frames;
            let ap_pixels = std::f64::consts::PI * (super::APERTURE_FWHM * fwhm).powi(2)
                / (cfg.scan.pixel_size_um().0 * cfg.scan.pixel_size_um().1);
            here.push(BatchMolecule {
                crystal: k,
                true_angle_deg: truth.dipole_angle_deg,
                fitted_angle_deg: fit.params.dipole_angle_deg(),
                fitted_error_deg: fit.std_errors.phase_phi_deg,
                visibility: fit.params.visibility(),
                deviation_deg: 0.0,
                snr: peak / (peak + bg_per_frame * ap_pixels).max(1.0).sqrt(),
                isolated: s.spot.isolated,
            });
        }
        let mean = axial_mean(&here.iter().map(|m| m.fitted_angle_deg).collect::<Vec<_>>());
        for m in &mut here {
            m.deviation_deg = axial_difference(m.fitted_angle_deg, mean);
        }
        means.push(mean);
        molecules.extend(here);
    }
    Ok(BatchResult {
        crystal_axes_deg: axes,
        crystal_means_deg: means,
        molecules,
        n_planted: cfg.n_molecules,
        n_detected,
    })
}

/// Counts of `deviations` in bins of `bin_deg` covering `[−90, 90)`,
/// returned as `(bin centre, count)`.
pub fn spread_histogram(deviations: &[f64], bin_deg: f64) -> Vec<(f64, usize)> {
    let n = (180.0 / bin_deg).ceil() as usize;
    let mut counts = vec![0usize; n];
    for d in deviations {
        let k = ((d + 90.0) / bin_deg).floor();
        if k >= 0.0 && (k as usize) < n {
            counts[k as usize] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (-90.0 + (k as f64 + 0.5) * bin_deg, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axial_arithmetic() {
        assert_eq!(axial_difference(179.0, 1.0), -2.0);
        assert_eq!(axial_difference(1.0, 179.0), 2.0);
        assert!(
            (axial_mean(&[178.0, 2.0]) - 0.0).abs() < 1e-9
                || (axial_mean(&[178.0, 2.0]) - 180.0).abs() < 1e-9
        );
    }

    #[test]
    fn histogram_bins() {
        let h = spread_histogram(&[-1.0, 0.5, 4.9, 89.0], 5.0);
        assert_eq!(h.len(), 36);
        assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), 4);
        assert_eq!(h[17], (-2.5, 1));
        assert_eq!(h[18], (2.5, 2));
    }
}
