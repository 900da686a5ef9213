//! Photon statistics of single fluorescent molecules.
//!
//! The crate simulates time-tagged detector clicks from pulsed or CW
//! emitters, builds Hanbury Brown–Twiss coincidence histograms, fits the
//! antibunching train, saturation, polarization and photobleaching models
//! with a bounded Levenberg–Marquardt solver, synthesizes confocal scans,
//! and evaluates the vapor-growth thermodynamics of the host crystal.
//!
//! ```
//! use photostat::models::{eval_saturation, SaturationParams};
//!
//! let p = SaturationParams { i_sat: 75.0, r_max: 440e3 };
//! assert_eq!(eval_saturation(75.0, &p), 220e3);
//! ```
//!
//! Units: integer picoseconds for time tags, nanoseconds for fitted
//! delays and lifetimes, kW/cm² for intensity, counts/s for rates, meV for
//! energies, Å² for areas, Pa for pressure and K for temperature.

pub mod correlator;
pub mod error;
pub mod fit;
pub mod imaging;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod thermo;
pub mod timetag;
pub mod units;

pub use correlator::{
    cross_correlate, normalize_g2, CorrelationHistogram, DelayBins, StreamingCorrelator,
};
pub use error::{Error, Result};
pub use fit::{Estimate, FitResult};
pub use sim::{simulate_stream, EmitterEnsemble};
pub use timetag::{
    read_timetags, write_timetags, AcquisitionMeta, TagFormat, TimeTag, TimeTagStream,
};
