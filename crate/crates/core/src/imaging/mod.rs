//! Confocal raster-scan synthesis and per-spot polarization analysis.
//!
//! Images are `Array2<f64>` indexed `[row, col] = [y, x]`. Pixel `(r, c)`
//! has its centre at `((c + 0.5)·Δx, (r + 0.5)·Δy)` µm from the field
//! origin, with `Δx = field_width/cols` and `Δy = field_height/rows`.

mod batch;
mod detect;
mod series;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::correlator::sidecar_path;
use crate::error::{Error, Result};
use crate::rng::SeedPath;

pub use batch::{polarization_batch, spread_histogram, BatchConfig, BatchMolecule, BatchResult};
pub use detect::{detect_spots, Gaussian2d, SpotDetection};
pub use series::{extract_polarization_series, SpotSeries, ANNULUS_FWHM, APERTURE_FWHM};

/// Gaussian FWHM over σ, `2√(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Field width and height, µm.
    pub field_size_um: (f64, f64),
    /// Columns and rows.
    pub pixels: (usize, usize),
    pub psf_fwhm_nm: f64,
    /// Expected peak counts of a unit-brightness emitter aligned with the polarizer.
    pub dwell_rate_scale: f64,
    /// Expected background counts per pixel.
    pub background_rate: f64,
    pub polarizer_angle_deg: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            field_size_um: (16.0, 16.0),
            pixels: (200, 200),
            psf_fwhm_nm: 400.0,
            dwell_rate_scale: 100.0,
            background_rate: 2.0,
            polarizer_angle_deg: 0.0,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.field_size_um;
        if !(w > 0.0 && h > 0.0 && self.pixels.0 > 0 && self.pixels.1 > 0) {
            return Err(Error::InvalidConfig(
                "field size and pixel counts must be positive".into(),
            ));
        }
        if !(self.psf_fwhm_nm > 0.0) {
            return Err(Error::InvalidConfig("psf_fwhm_nm must be > 0".into()));
        }
        if !(self.dwell_rate_scale >= 0.0 && self.background_rate >= 0.0) {
            return Err(Error::InvalidConfig("rates must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn with_polarizer(&self, angle_deg: f64) -> Self {
        ScanConfig {
            polarizer_angle_deg: angle_deg,
            ..self.clone()
        }
    }

    /// Pixel pitch `(Δx, Δy)`, µm.
    pub fn pixel_size_um(&self) -> (f64, f64) {
        (
            self.field_size_um.0 / self.pixels.0 as f64,
            self.field_size_um.1 / self.pixels.1 as f64,
        )
    }

    pub fn psf_sigma_um(&self) -> f64 {
        self.psf_fwhm_nm * 1e-3 / FWHM_PER_SIGMA
    }

    pub fn psf_fwhm_um(&self) -> f64 {
        self.psf_fwhm_nm * 1e-3
    }

    /// Centre of pixel `(row, col)`, µm, as `(x, y)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let (dx, dy) = self.pixel_size_um();
        ((col as f64 + 0.5) * dx, (row as f64 + 0.5) * dy)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.pixels.1, self.pixels.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub x_um: f64,
    pub y_um: f64,
    pub dipole_angle_deg: f64,
    #[serde(default = "one")]
    pub brightness: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterLayout {
    pub emitters: Vec<Emitter>,
    /// Emitters per µm² used when generating layouts.
    #[serde(default = "default_density")]
    pub density_hint: f64,
}

fn default_density() -> f64 {
    0.4
}

impl EmitterLayout {
    pub fn new(emitters: Vec<Emitter>) -> Self {
        EmitterLayout {
            emitters,
            density_hint: default_density(),
        }
    }

    /// Poisson-many emitters at uniform positions with uniform dipole angles.
    pub fn random(config: &ScanConfig, density_per_um2: f64, seed: u64) -> Self {
        let mut rng = SeedPath::root(seed).child("layout", 0).rng();
        let (w, h) = config.field_size_um;
        let mean = density_per_um2 * w * h;
        let n = if mean > 0.0 {
            Poisson::new(mean)
                .map(|d| d.sample(&mut rng) as usize)
                .unwrap_or(0)
        } else {
            0
        };
        let emitters = (0..n)
            .map(|_| Emitter {
                x_um: rng.random::<f64>() * w,
                y_um: rng.random::<f64>() * h,
                dipole_angle_deg: rng.random::<f64>() * 180.0,
                brightness: 1.0,
            })
            .collect();
        EmitterLayout {
            emitters,
            density_hint: density_per_um2,
        }
    }

    /// Indices of emitters lying outside the field.
    pub fn out_of_field(&self, config: &ScanConfig) -> Vec<usize> {
        let (w, h) = config.field_size_um;
        self.emitters
            .iter()
            .enumerate()
            .filter(|(_, e)| !(0.0..=w).contains(&e.x_um) || !(0.0..=h).contains(&e.y_um))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Draws a dipole angle around `mean_deg` with Gaussian spread.
pub(crate) fn jittered_angle(rng: &mut crate::rng::Rng, mean_deg: f64, spread_deg: f64) -> f64 {
    if spread_deg > 0.0 {
        mean_deg
            + Normal::new(0.0, spread_deg)
                .expect("positive spread")
                .sample(rng)
    } else {
        mean_deg
    }
}

/// Expected counts per pixel before Poisson sampling.
pub fn expected_scan(layout: &EmitterLayout, config: &ScanConfig) -> Result<Array2<f64>> {
    config.validate()?;
    let (rows, cols) = config.shape();
    let sigma = config.psf_sigma_um();
    let reach = 8.0 * sigma;
    let mut img = Array2::from_elem((rows, cols), config.background_rate);
    let (dx, dy) = config.pixel_size_um();
    for e in &layout.emitters {
        let c = (config.polarizer_angle_deg - e.dipole_angle_deg)
            .to_radians()
            .cos();
        let peak = e.brightness * c * c * config.dwell_rate_scale;
        if peak == 0.0 {
            continue;
        }
        let col_lo = (((e.x_um - reach) / dx).floor().max(0.0)) as usize;
        let col_hi = (((e.x_um + reach) / dx).ceil().max(0.0) as usize).min(cols);
        let row_lo = (((e.y_um - reach) / dy).floor().max(0.0)) as usize;
        let row_hi = (((e.y_um + reach) / dy).ceil().max(0.0) as usize).min(rows);
        for r in row_lo..row_hi {
            for col in col_lo..col_hi {
                let (x, y) = config.pixel_center(r, col);
                let d2 = (x - e.x_um).powi(2) + (y - e.y_um).powi(2);
                img[(r, col)] += peak * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    Ok(img)
}

/// Poisson-sampled scan. Pixel `k = row·cols + col` draws from its own
/// sub-stream `(seed, polarizer angle, k)`, so frames at different polarizer
/// settings are independent and every pixel is reproducible on its own.
pub fn render_scan(layout: &EmitterLayout, config: &ScanConfig) -> Result<Array2<f64>> {
    let expected = expected_scan(layout, config)?;
    let cols = expected.ncols();
    let frame =
        SeedPath::root(config.seed).child("polarizer_mdeg", angle_key(config.polarizer_angle_deg));
    let mut out = expected;
    for ((r, c), v) in out.indexed_iter_mut() {
        *v = if *v > 0.0 {
            let mut rng = frame.child("pixel", (r * cols + c) as u64).rng();
            Poisson::new(*v).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
        } else {
            0.0
        };
    }
    Ok(out)
}

fn angle_key(deg: f64) -> u64 {
    (deg * 1000.0).round() as i64 as u64
}

/// Geometry stored beside an image CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub config: ScanConfig,
    pub pixel_size_um: (f64, f64),
    pub pixel_center_convention: String,
}

impl From<&ScanConfig> for ImageSidecar {
    fn from(c: &ScanConfig) -> Self {
        ImageSidecar {
            config: c.clone(),
            pixel_size_um: c.pixel_size_um(),
            pixel_center_convention:
                "x_um = (col + 0.5) * pixel_size_um.0, y_um = (row + 0.5) * pixel_size_um.1".into(),
        }
    }
}

/// Writes one CSV line per image row plus a JSON sidecar with the geometry.
pub fn write_image_csv(
    path: impl AsRef<Path>,
    image: &Array2<f64>,
    config: &ScanConfig,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    for row in image.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    let side = File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(side, &ImageSidecar::from(config))?;
    Ok(())
}

/// Reads an image CSV and, if present, its sidecar.
pub fn read_image_csv(path: impl AsRef<Path>) -> Result<(Array2<f64>, Option<ImageSidecar>)> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(BufReader::new(File::open(path)?));
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedRecord {
                index: i,
                reason: e.to_string(),
            })?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(Error::MalformedRecord {
                    index: i,
                    reason: format!("expected {c} columns, got {}", vals.len()),
                })
            }
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    let image = Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| {
        Error::MalformedRecord {
            index: 0,
            reason: e.to_string(),
        }
    })?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        Some(serde_json::from_reader(BufReader::new(File::open(side)?))?)
    } else {
        None
    };
    Ok((image, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center_emitter(angle: f64) -> EmitterLayout {
        EmitterLayout::new(vec![Emitter {
            x_um: 8.0,
            y_um: 8.0,
            dipole_angle_deg: angle,
            brightness: 1.0,
        }])
    }

    #[test]
    fn blank_field_is_zero() {
        let cfg = ScanConfig {
            background_rate: 0.0,
            ..ScanConfig::default()
        };
        let img = render_scan(&EmitterLayout::new(vec![]), &cfg).unwrap();
        assert!(img.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crossed_polarizer_is_dark() {
        let cfg = ScanConfig {
            background_rate: 0.0,
            polarizer_angle_deg: 90.0,
            ..ScanConfig::default()
        };
        let img = expected_scan(&center_emitter(0.0), &cfg).unwrap();
        assert!(img.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn photon_conservation() {
        let cfg = ScanConfig {
            background_rate: 0.0,
            polarizer_angle_deg: 30.0,
            ..ScanConfig::default()
        };
        let img = expected_scan(&center_emitter(10.0), &cfg).unwrap();
        let (dx, dy) = cfg.pixel_size_um();
        let s = cfg.psf_sigma_um();
        let want = (20f64.to_radians().cos().powi(2))
            * cfg.dwell_rate_scale
            * 2.0
            * std::f64::consts::PI
            * s
            * s
            / (dx * dy);
        assert!((img.sum() / want - 1.0).abs() < 0.01);
    }

    #[test]
    fn linearity_in_expectation() {
        let cfg = ScanConfig::default();
        let a = Emitter {
            x_um: 3.0,
            y_um: 4.0,
            dipole_angle_deg: 20.0,
            brightness: 1.0,
        };
        let b = Emitter {
            x_um: 3.3,
            y_um: 4.1,
            dipole_angle_deg: 70.0,
            brightness: 0.5,
        };
        let both = expected_scan(&EmitterLayout::new(vec![a, b]), &cfg).unwrap();
        let ea = expected_scan(&EmitterLayout::new(vec![a]), &cfg).unwrap();
        let eb = expected_scan(&EmitterLayout::new(vec![b]), &cfg).unwrap();
        let diff = &both - &(ea + eb - cfg.background_rate);
        assert!(diff.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = ScanConfig {
            seed: 9,
            ..ScanConfig::default()
        };
        let a = render_scan(&center_emitter(0.0), &cfg).unwrap();
        let b = render_scan(&center_emitter(0.0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.csv");
        let cfg = ScanConfig {
            pixels: (7, 5),
            ..ScanConfig::default()
        };
        let img = render_scan(&center_emitter(0.0), &cfg).unwrap();
        write_image_csv(&p, &img, &cfg).unwrap();
        let (back, side) = read_image_csv(&p).unwrap();
        assert_eq!(back, img);
        assert_eq!(side.unwrap().config, cfg);
    }
}
