//! Fiducial markers in LiDAR point clouds.
//!
//! The crate is organised by pipeline stage:
//!
//! 1. [`geom`] – SO(3)/SE(3) math and closed-form point-set alignment.
//! 2. [`cloud`] – point clouds, intensity-gradient downsampling, clustering, OBBs.
//! 3. [`image`] – spherical projection into intensity/range images.
//! 4. [`marker`] – square-tag family, 2D detection, adaptive thresholding,
//!    3D corner recovery and per-marker pose.
//! 5. [`map_locate`] – marker localization inside full 3D maps via an
//!    intermediate plane.
//! 6. [`registration`] – two-level graph registration (shortest-path
//!    initialization + Levenberg–Marquardt factor graph).
//! 7. [`simulator`] – synthetic LiDAR scenes with ground truth.
//! 8. [`metrics`] – RMSE, Chamfer distance, recall, overlap.

pub mod cloud;
pub mod geom;
pub mod image;
pub mod io;
pub mod map_locate;
pub mod marker;
pub mod metrics;
pub mod registration;
pub mod simulator;

pub use geom::{align_svd, se3_ominus, so3_log, CorrespondenceSet, Pose, Rotation};
