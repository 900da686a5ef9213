//! The book's chapters as modules, so every snippet runs as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/time-tags.md")]
pub mod time_tags {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/correlation.md")]
pub mod correlation {}
#[doc = include_str!("../../../book/src/antibunching.md")]
pub mod antibunching {}
#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}
#[doc = include_str!("../../../book/src/saturation.md")]
pub mod saturation {}
#[doc = include_str!("../../../book/src/polarization.md")]
pub mod polarization {}
#[doc = include_str!("../../../book/src/bleaching.md")]
pub mod bleaching {}
#[doc = include_str!("../../../book/src/thermodynamics.md")]
pub mod thermodynamics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
