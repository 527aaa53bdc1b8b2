//! Occlusion-aware centerline labels from vector maps.
//!
//! The crate turns lane geometry from a vector map, ego poses, camera
//! calibrations and semantic-segmentation masks into per-frame centerline
//! labels: 2D keypoints paired with their 3D camera-frame points, a smooth
//! image-plane spline, and bird's-eye-view grid targets. Centerlines hidden
//! behind context-free structures are removed according to an occlusion
//! threshold. The same crate carries the training losses for 2D/3D
//! centerline heads, the BEV decoder, and benchmark metrics.
//!
//! Modules, in pipeline order:
//!
//! * [`geom`]: poses, trajectories, pinhole cameras.
//! * [`ingest`]: map, trajectory, calibration and mask files.
//! * [`labelgen`]: resampling, projection, geometric filters, BEV targets.
//! * [`occlusion`]: category ontology and keypoint filtering.
//! * [`pipeline`]: one call per frame wiring the steps above.
//! * [`heads`]: loss kernels and head-output decoding.
//! * [`eval`]: matching, precision/recall/F1, X/Z errors.
//! * [`synth`]: synthetic scenes with analytically known labels.

pub mod eval;
pub mod geom;
pub mod heads;
pub mod ingest;
pub mod labelgen;
pub mod occlusion;
pub mod pipeline;
pub mod synth;
