//! Procedural multi-domain morphology data.

pub mod augment;
pub mod dataset;
pub mod domain;
pub mod geometry;
pub mod io;
pub mod render;
pub mod validate;

pub use augment::{augment, AugmentConfig, AugmentParams};
pub use dataset::{make_dataset, make_dataset_with_counts, ImageSet, SamplePair};
pub use domain::{standard_domains, DomainSpec};
pub use geometry::{generate_geometry, Ellipse, GeometrySpec};
pub use io::{load_images, load_split, read_manifest, write_dataset, DatasetManifest};
pub use render::{render_image, render_mask};
