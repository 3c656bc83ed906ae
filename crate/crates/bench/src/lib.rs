//! Shared fixtures for the benchmarks.

use activeray::evolution::{evolve, seed_contour, EvolutionConfig, Trajectory};
use activeray::{build_scene, RayContour, Scene, ShapeKind};

/// A single convex instance on a `size`-square image.
pub fn convex_scene(size: usize) -> Scene {
    build_scene(7, size, size, 1, ShapeKind::Convex).expect("scene fixture")
}

/// The seed contour of the scene's first instance.
pub fn seed(scene: &Scene, rays: usize) -> RayContour {
    seed_contour(&scene.instance_masks()[0], rays, 1.0)
        .expect("seed fixture")
        .expect("instance is large enough to seed")
}

/// A trajectory ready for the backward pass.
pub fn trajectory(scene: &Scene, rays: usize, steps: usize) -> (RayContour, Trajectory) {
    let cfg = EvolutionConfig {
        steps,
        ..Default::default()
    };
    evolve(&seed(scene, rays), &scene.fields, &cfg).expect("trajectory fixture")
}
