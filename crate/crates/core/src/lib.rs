//! Polar active-ray contours.
//!
//! A contour is a reference point plus `L` radii along equally spaced rays.
//! Its energy combines a data map `D`, a per-pixel curvature weight `beta`
//! and a per-pixel balloon weight `kappa`. This crate provides the geometry,
//! the maps, explicit and implicit-explicit evolution, adjoint training of the
//! maps, segmentation metrics and a synthetic scene generator.

pub mod error;
pub mod evolution;
pub mod fields;
pub mod geometry;
pub mod io;
pub mod learning;
pub mod metrics;
pub mod scene;

pub use error::{
    EvolutionError, FieldError, FormatError, GeometryError, LearningError, MetricError, SceneError,
};
pub use evolution::{
    assemble_system, energy_total, evolve, evolve_implicit_explicit, evolve_step,
    multi_init_evolve, rho_max_for, EvolutionConfig, ForceVector, MultiInitConfig, RhoMax, Solver,
    SystemBands, Trajectory,
};
pub use fields::{build_pretrain_fields, distance_transform, FieldSet, ScalarField};
pub use geometry::{
    contour_points, ground_truth_rays, point_in_polygon, polygon_area, rasterize,
    ray_polygon_distance, Mask, Point2, Polygon, RayContour,
};
pub use learning::{
    backward_through_evolution, loss_grad, ray_loss_l1, sgd_momentum_step, train, LearnableFields,
    TrainConfig,
};
pub use metrics::{
    alignment_recall, boundf, evaluate_instances, iou, weighted_coverage, AlignmentCurve,
    InstanceResult, MetricReport,
};
pub use scene::{build_scene, Scene, ShapeKind};
