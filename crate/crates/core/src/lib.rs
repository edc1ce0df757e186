//! Utility-pole risk assessment from street-level imagery products.
//!
//! Three independent measurement paths feed one risk calculus:
//!
//! * [`hough`]: pole inclination from edge masks of street-view captures.
//! * [`depth`]: pole-to-vegetation separation from monocular depth maps.
//! * [`pointcloud`]: pole tilt and exact vegetation clearance from a
//!   reconstructed scene.
//!
//! [`risk`] turns those measurements into fire and topple classes, and
//! [`pipeline`] runs everything over a pole catalog and emits GeoJSON and
//! CSV reports. [`catalog`] plans and caches the image captures and
//! [`detection`] scores detector output.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod config;
pub mod depth;
pub mod detection;
pub mod hough;
pub mod imaging;
pub mod pipeline;
pub mod pointcloud;
pub mod risk;
pub mod synthetic;

pub use catalog::{
    parse_pole_catalog, write_pole_catalog, CaptureProfile, CatalogError, Material, PoleRecord,
    ViewRequest,
};
pub use config::{ConfigError, PipelineConfig};
pub use depth::{DepthError, DepthEstimate, DepthMap};
pub use detection::{Detection, EvalError, EvalReport, GroundTruth};
pub use hough::{HoughError, HoughLine, InclinationResult};
pub use imaging::{BBox, EdgeMask, GrayRaster, ImagingError};
pub use pipeline::{emit_geojson, emit_summary, run_pipeline, PipelineError, PipelineRun};
pub use pointcloud::{CloudError, CorridorResult, PlyError, Point3, PointCloud};
pub use risk::{PoleRiskAssessment, RiskClass, RiskConfig, RiskError, RiskThresholds};

/// Any error raised by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Hough(#[from] HoughError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
