//! Poisson multi-Bernoulli negative log-likelihood (PMB-NLL) for evaluating
//! and training probabilistic object detectors.
//!
//! A detector's output for one image is read as a random finite set: every
//! detection is a Bernoulli component with an existence probability, a class
//! distribution and a box distribution, and low-confidence detections form a
//! Poisson intensity for objects the detector failed to pick up. The score of
//! the image is `-log f(Y)` for the realised ground-truth set `Y`, evaluated
//! over the `Q` most likely object-to-component assignments.
//!
//! ```
//! use pmb_nll::{BernoulliComponent, BoundingBox, BoxDistribution, ClassDistribution};
//! use pmb_nll::scoring::mb_nll;
//!
//! let bbox = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
//! let comp = BernoulliComponent::new(
//!     0.75,
//!     ClassDistribution::new(vec![1.0]).unwrap(),
//!     BoxDistribution::laplace(bbox, [1.0; 4]).unwrap(),
//! )
//! .unwrap();
//! let report = mb_nll(&[comp], &[], 25).unwrap();
//! assert!((report.nll - (-0.25f64.ln())).abs() < 1e-12);
//! ```

pub mod assignment;
pub mod density;
pub mod detr;
mod error;
pub mod evaluate;
pub mod io;
pub mod logspace;
pub mod ppp;
pub mod scoring;
pub mod selftest;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Assignment, BernoulliComponent, BoundingBox, BoxDistribution, BoxFamily, ClassDistribution, GroundTruthObject,
    IntensityComponent, LabelMap, NllDecomposition, NllReport, PmbDensity, PoissonIntensity, Target,
};
