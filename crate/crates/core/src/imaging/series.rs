use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ScanConfig, SpotDetection};
use crate::error::{Error, Result};

/// Aperture radius in PSF FWHM.
pub const APERTURE_FWHM: f64 = 1.5;
/// Background annulus inner and outer radii in PSF FWHM.
pub const ANNULUS_FWHM: (f64, f64) = (2.0, 3.0);

/// Polarization response of one spot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotSeries {
    pub spot: SpotDetection,
    /// `(polarizer angle°, signal / max signal)`.
    pub series: Vec<(f64, f64)>,
    /// Background-subtracted aperture sums before normalization.
    pub raw_signal: Vec<f64>,
    /// Below the detection floor at every angle.
    pub lost: bool,
}

/// Aperture photometry for each spot in each frame.
///
/// Counts inside `APERTURE_FWHM` of the centroid are summed and the mean of
/// the `ANNULUS_FWHM` ring, times the aperture pixel count, is subtracted.
/// Each series is divided by its largest value. A spot whose signal never
/// exceeds three Poisson σ of its aperture background is marked `lost`.
pub fn extract_polarization_series(
    images: &[(f64, Array2<f64>)],
    spots: &[SpotDetection],
    config: &ScanConfig,
) -> Result<Vec<SpotSeries>> {
    let shape = config.shape();
    if let Some((angle, _)) = images.iter().find(|(_, img)| img.dim() != shape) {
        return Err(Error::InvalidConfig(format!(
            "frame at {angle}° does not match the {shape:?} scan geometry"
        )));
    }
    let fwhm = config.psf_fwhm_um();
    let r_ap = APERTURE_FWHM * fwhm;
    let (r_in, r_out) = (ANNULUS_FWHM.0 * fwhm, ANNULUS_FWHM.1 * fwhm);
    let (dx, dy) = config.pixel_size_um();
    let mut out = Vec::with_capacity(spots.len());
    for spot in spots {
        let (sx, sy) = spot.centroid_um;
        let c_lo = ((sx - r_out) / dx).floor().max(0.0) as usize;
        let c_hi = (((sx + r_out) / dx).ceil().max(0.0) as usize).min(shape.1);
        let r_lo = ((sy - r_out) / dy).floor().max(0.0) as usize;
        let r_hi = (((sy + r_out) / dy).ceil().max(0.0) as usize).min(shape.0);
        let mut aperture = Vec::new();
        let mut annulus = Vec::new();
        for r in r_lo..r_hi {
            for c in c_lo..c_hi {
                let (x, y) = config.pixel_center(r, c);
                let d = (x - sx).hypot(y - sy);
                if d <= r_ap {
                    aperture.push((r, c));
                } else if d >= r_in && d <= r_out {
                    annulus.push((r, c));
                }
            }
        }
        let mut raw = Vec::with_capacity(images.len());
        let mut lost = true;
        for (_, img) in images {
            let sum: f64 = aperture.iter().map(|&ix| img[ix]).sum();
            let bg = if annulus.is_empty() {
                0.0
            } else {
                annulus.iter().map(|&ix| img[ix]).sum::<f64>() / annulus.len() as f64
            };
            let bg_total = bg * aperture.len() as f64;
            let signal = sum - bg_total;
            if signal > 3.0 * bg_total.max(1.0).sqrt() {
                lost = false;
            }
            raw.push(signal);
        }
        let peak = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = if peak > 0.0 { peak } else { 1.0 };
        let series = images
            .iter()
            .zip(&raw)
            .map(|((a, _), s)| (*a, s / norm))
            .collect();
        out.push(SpotSeries {
            spot: *spot,
            series,
            raw_signal: raw,
            lost,
        });
    }
    Ok(out)
}
