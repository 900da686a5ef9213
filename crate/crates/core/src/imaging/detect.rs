use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ScanConfig, FWHM_PER_SIGMA};
use crate::fit::{levenberg_marquardt, LeastSquares, LmOptions};

/// A localized fluorescent spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotDetection {
    /// `(x, y)`, µm.
    pub centroid_um: (f64, f64),
    /// Fitted peak height above background, counts.
    pub amplitude: f64,
    pub fwhm_est_nm: f64,
    /// No other detection within 3 PSF FWHM.
    pub isolated: bool,
}

/// Symmetric 2D Gaussian on a pedestal over `[amp, x₀, y₀, σ, offset]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gaussian2d;

impl Gaussian2d {
    pub const N_PARAMS: usize = 5;

    pub fn eval(x: f64, y: f64, p: &[f64]) -> f64 {
        let r2 = (x - p[1]).powi(2) + (y - p[2]).powi(2);
        p[4] + p[0] * (-r2 / (2.0 * p[3] * p[3])).exp()
    }

    pub fn gradient(x: f64, y: f64, p: &[f64], g: &mut [f64]) {
        let (dx, dy) = (x - p[1], y - p[2]);
        let s2 = p[3] * p[3];
        let e = (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
        g[0] = e;
        g[1] = p[0] * e * dx / s2;
        g[2] = p[0] * e * dy / s2;
        g[3] = p[0] * e * (dx * dx + dy * dy) / (s2 * p[3]);
        g[4] = 1.0;
    }
}

struct WindowFit {
    pts: Vec<(f64, f64, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LeastSquares for WindowFit {
    fn n_params(&self) -> usize {
        Gaussian2d::N_PARAMS
    }

    fn n_residuals(&self) -> usize {
        self.pts.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (o, &(x, y, v)) in out.iter_mut().zip(&self.pts) {
            *o = (v - Gaussian2d::eval(x, y, p)) / v.max(1.0).sqrt();
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) -> bool {
        let mut g = [0.0; Gaussian2d::N_PARAMS];
        for (i, &(x, y, v)) in self.pts.iter().enumerate() {
            Gaussian2d::gradient(x, y, p, &mut g);
            let w = v.max(1.0).sqrt();
            for j in 0..Gaussian2d::N_PARAMS {
                jac[(i, j)] = -g[j] / w;
            }
        }
        true
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((self.lo.clone(), self.hi.clone()))
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Finds PSF-shaped spots.
///
/// Background is the image median and noise `√max(background, 1)`.
/// Candidates are 3×3 local maxima above `background + threshold_sigma·noise`;
/// each is refined by a weighted 2D Gaussian fit over a window 3 FWHM wide
/// and kept if the fitted height clears the same threshold and the fitted
/// width is within a factor of two of the PSF. Refined spots closer than
/// half a FWHM are merged, keeping the brighter one, so emitters closer than
/// the PSF width come back as one spot. `isolated` is set when no other
/// spot lies within 3 FWHM.
pub fn detect_spots(
    image: &Array2<f64>,
    config: &ScanConfig,
    threshold_sigma: f64,
) -> Vec<SpotDetection> {
    let (rows, cols) = image.dim();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let mut all: Vec<f64> = image.iter().copied().collect();
    let bg = median(&mut all);
    let noise = bg.max(1.0).sqrt();
    let threshold = bg + threshold_sigma * noise;

    let mut candidates = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = image[(r, c)];
            if v <= threshold {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                        continue;
                    }
                    let w = image[(rr as usize, cc as usize)];
                    // Plateaus: the first pixel in scan order wins.
                    if w > v || (w == v && (dr < 0 || (dr == 0 && dc < 0))) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((v, r, c));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

    let fwhm = config.psf_fwhm_um();
    let mut spots: Vec<SpotDetection> = Vec::new();
    for (v, r, c) in candidates {
        let Some(spot) = refine(image, config, r, c, v - bg, bg) else {
            continue;
        };
        if spot.amplitude <= threshold_sigma * noise {
            continue;
        }
        let ratio = spot.fwhm_est_nm / config.psf_fwhm_nm;
        if !(0.5..=2.0).contains(&ratio) {
            continue;
        }
        let near = spots
            .iter()
            .any(|s| dist(s.centroid_um, spot.centroid_um) < 0.5 * fwhm);
        if !near {
            spots.push(spot);
        }
    }
    let centroids: Vec<(f64, f64)> = spots.iter().map(|s| s.centroid_um).collect();
    for (i, s) in spots.iter_mut().enumerate() {
        s.isolated = centroids
            .iter()
            .enumerate()
            .all(|(j, c)| i == j || dist(*c, s.centroid_um) >= 3.0 * fwhm);
    }
    spots
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn refine(
    image: &Array2<f64>,
    config: &ScanConfig,
    r: usize,
    c: usize,
    height: f64,
    bg: f64,
) -> Option<SpotDetection> {
    let (rows, cols) = image.dim();
    let (dx, dy) = config.pixel_size_um();
    let half = 1.5 * config.psf_fwhm_um();
    let (hr, hc) = ((half / dy).ceil() as usize, (half / dx).ceil() as usize);
    let mut pts = Vec::new();
    for rr in r.saturating_sub(hr)..(r + hr + 1).min(rows) {
        for cc in c.saturating_sub(hc)..(c + hc + 1).min(cols) {
            let (x, y) = config.pixel_center(rr, cc);
            pts.push((x, y, image[(rr, cc)]));
        }
    }
    let (x0, y0) = config.pixel_center(r, c);
    let sigma = config.psf_sigma_um();
    let min_pitch = dx.min(dy);
    let lo = vec![0.0, x0 - half, y0 - half, 0.25 * min_pitch, 0.0];
    let hi = vec![
        f64::INFINITY,
        x0 + half,
        y0 + half,
        4.0 * sigma.max(min_pitch),
        f64::INFINITY,
    ];
    let problem = WindowFit { pts, lo, hi };
    let start = [height.max(1e-9), x0, y0, sigma, bg];
    let opts = LmOptions {
        xtol: 1e-8,
        ftol: 1e-10,
        max_iterations: 100,
        ..LmOptions::default()
    };
    // A candidate the PSF model cannot fit is noise, not a spot.
    let rep = levenberg_marquardt(&problem, &start, &opts).ok()?;
    rep.params.iter().all(|v| v.is_finite()).then(|| SpotDetection {
        centroid_um: (rep.params[1], rep.params[2]),
        amplitude: rep.params[0],
        fwhm_est_nm: rep.params[3] * FWHM_PER_SIGMA * 1e3,
        isolated: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{expected_scan, render_scan, Emitter, EmitterLayout};

    fn layout(points: &[(f64, f64)]) -> EmitterLayout {
        EmitterLayout::new(
            points
                .iter()
                .map(|&(x, y)| Emitter {
                    x_um: x,
                    y_um: y,
                    dipole_angle_deg: 0.0,
                    brightness: 1.0,
                })
                .collect(),
        )
    }

    #[test]
    fn blank_image_has_no_spots() {
        let cfg = ScanConfig::default();
        let img = render_scan(&layout(&[]), &cfg).unwrap();
        assert!(detect_spots(&img, &cfg, 5.0).is_empty());
    }

    #[test]
    fn background_noise_is_not_detected() {
        for seed in 0..20 {
            let cfg = ScanConfig {
                seed,
                ..ScanConfig::default()
            };
            let img = render_scan(&layout(&[]), &cfg).unwrap();
            let spots = detect_spots(&img, &cfg, 5.0);
            assert!(spots.is_empty(), "seed {seed}: {spots:?}");
        }
    }

    #[test]
    fn noiseless_centroids() {
        let cfg = ScanConfig::default();
        let truth = [(4.03, 5.51), (11.2, 9.87), (6.66, 13.1)];
        let img = expected_scan(&layout(&truth), &cfg).unwrap();
        let spots = detect_spots(&img, &cfg, 5.0);
        assert_eq!(spots.len(), 3);
        let pitch = cfg.pixel_size_um().0;
        for t in truth {
            let best = spots
                .iter()
                .map(|s| dist(s.centroid_um, t))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.5 * pitch, "{best}");
        }
        assert!(spots.iter().all(|s| s.isolated));
    }

    #[test]
    fn close_pair_merges() {
        let cfg = ScanConfig {
            dwell_rate_scale: 400.0,
            ..ScanConfig::default()
        };
        let img = render_scan(&layout(&[(8.0, 8.0), (8.3, 8.0)]), &cfg).unwrap();
        assert_eq!(detect_spots(&img, &cfg, 5.0).len(), 1);
    }
}
