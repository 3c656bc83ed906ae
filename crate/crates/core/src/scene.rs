//! Synthetic scenes: random polygons placed on a small canvas with
//! pretraining maps built from their rasterized union.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, SceneError};
use crate::fields::{build_pretrain_fields, FieldSet, ScalarField};
use crate::geometry::{rasterize, signed_area, Mask, Point2, Polygon};
use crate::io::write_atomic;

/// Distance every polygon keeps from the image border.
pub const MARGIN: f64 = 2.0;
/// Minimum distance between two instances.
pub const SEPARATION: f64 = 2.0;
const CONVEX_RETRIES: usize = 100;
const PLACEMENT_ATTEMPTS: usize = 1000;
const MIN_CONVEX_AREA: f64 = 4.0;
const MIN_INSTANCE_SIDE: f64 = 12.0;

/// `(min_x, min_y, max_x, max_y)`.
pub type BBox = (f64, f64, f64, f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Convex,
    Star,
    #[serde(rename = "ushape")]
    UShape,
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeKind::Convex => "convex",
            ShapeKind::Star => "star",
            ShapeKind::UShape => "ushape",
        })
    }
}

impl FromStr for ShapeKind {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "convex" => Ok(ShapeKind::Convex),
            "star" => Ok(ShapeKind::Star),
            "ushape" => Ok(ShapeKind::UShape),
            other => Err(SceneError::Invalid(format!("unknown shape kind {other:?}"))),
        }
    }
}

/// Convex hull, counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point2, a: Point2, b: Point2| a.sub(o).cross(b.sub(o));
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in [pts.clone(), pts.iter().rev().copied().collect()] {
        let start = hull.len();
        for p in pass {
            while hull.len() >= start + 2
                && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Hull of `n_vertices` uniform points in `bbox`, resampled until it has
/// at least 3 vertices and area of at least 4.
pub fn random_convex_polygon<R: Rng + ?Sized>(
    rng: &mut R,
    bbox: BBox,
    n_vertices: usize,
) -> Result<Polygon, SceneError> {
    assert!(n_vertices >= 3, "a convex polygon needs at least 3 points");
    let (x0, y0, x1, y1) = bbox;
    for _ in 0..CONVEX_RETRIES {
        let pts: Vec<Point2> = (0..n_vertices)
            .map(|_| Point2::new(rng.gen_range(x0..=x1), rng.gen_range(y0..=y1)))
            .collect();
        let hull = convex_hull(&pts);
        if hull.len() >= 3 && signed_area(&hull) >= MIN_CONVEX_AREA {
            if let Ok(p) = Polygon::new(hull) {
                return Ok(p);
            }
        }
    }
    Err(SceneError::DegenerateAfterRetries(CONVEX_RETRIES))
}

/// Star-shaped polygon about `center`: vertices on evenly spaced rays with a
/// random common rotation, radii uniform in `radius_range`.
pub fn random_star_polygon<R: Rng + ?Sized>(
    rng: &mut R,
    center: Point2,
    n_vertices: usize,
    radius_range: (f64, f64),
) -> Polygon {
    assert!(n_vertices >= 5, "star polygons use at least 5 vertices");
    let (lo, hi) = radius_range;
    assert!(
        lo > 0.0 && lo <= hi,
        "radius range must be positive and ordered"
    );
    let offset = rng.gen_range(0.0..std::f64::consts::TAU / n_vertices as f64);
    let vertices = (0..n_vertices)
        .map(|i| {
            let angle = offset + std::f64::consts::TAU * i as f64 / n_vertices as f64;
            center.add(Point2::unit(angle).scale(rng.gen_range(lo..=hi)))
        })
        .collect();
    Polygon::new(vertices).expect("single-valued radius per angle gives a simple polygon")
}

/// Regular polygon with circumradius `radius`, first vertex on the +x axis.
pub fn regular_polygon(
    center: Point2,
    radius: f64,
    n_vertices: usize,
) -> Result<Polygon, SceneError> {
    Ok(Polygon::new(
        (0..n_vertices)
            .map(|i| {
                center.add(
                    Point2::unit(std::f64::consts::TAU * i as f64 / n_vertices as f64)
                        .scale(radius),
                )
            })
            .collect(),
    )?)
}

/// U opening towards `-y` inside `bbox`, with arms of width `arm` and a base
/// of thickness `base`.
pub fn u_shape_polygon(bbox: BBox, arm: f64, base: f64) -> Result<Polygon, SceneError> {
    let (x0, y0, x1, y1) = bbox;
    if !(2.0 * arm < x1 - x0 && base < y1 - y0 && arm > 0.0 && base > 0.0) {
        return Err(SceneError::Invalid(
            "U-shape arms or base do not fit the box".into(),
        ));
    }
    Ok(Polygon::new(vec![
        Point2::new(x0, y0),
        Point2::new(x0 + arm, y0),
        Point2::new(x0 + arm, y1 - base),
        Point2::new(x1 - arm, y1 - base),
        Point2::new(x1 - arm, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ])?)
}

/// Distance between two polygons, zero when they overlap.
pub fn polygon_gap(a: &Polygon, b: &Polygon) -> f64 {
    if a.vertices().iter().any(|&p| b.contains(p)) || b.vertices().iter().any(|&p| a.contains(p)) {
        return 0.0;
    }
    let one_way = |p: &Polygon, q: &Polygon| {
        p.vertices()
            .iter()
            .map(|&v| q.boundary_distance(v))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    width: usize,
    height: usize,
    n_instances: usize,
    kind: ShapeKind,
) -> Result<Polygon, SceneError> {
    let room = (width.min(height) as f64 - 2.0 * MARGIN).max(1.0);
    let max_side = (room / (n_instances as f64).sqrt())
        .max(MIN_INSTANCE_SIDE)
        .min(room);
    let min_side = MIN_INSTANCE_SIDE.min(max_side);
    let side = rng.gen_range(min_side..=max_side);
    let x0 = rng.gen_range(MARGIN..=width as f64 - MARGIN - side);
    let y0 = rng.gen_range(MARGIN..=height as f64 - MARGIN - side);
    let bbox = (x0, y0, x0 + side, y0 + side);
    match kind {
        ShapeKind::Convex => {
            let n = rng.gen_range(5..=10);
            random_convex_polygon(rng, bbox, n)
        }
        ShapeKind::Star => {
            let n = rng.gen_range(5..=12);
            let r = side / 2.0;
            Ok(random_star_polygon(
                rng,
                Point2::new(x0 + r, y0 + r),
                n,
                (0.5 * r, r),
            ))
        }
        ShapeKind::UShape => {
            let arm = side * rng.gen_range(0.25..0.35);
            let base = side * rng.gen_range(0.25..0.35);
            u_shape_polygon(bbox, arm, base)
        }
    }
}

/// Ground-truth polygons with their pretraining maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub polygons: Vec<Polygon>,
    pub fields: FieldSet,
}

#[derive(Serialize, Deserialize)]
struct SceneHeader {
    width: usize,
    height: usize,
    seed: u64,
    polygons: Vec<Polygon>,
}

impl Scene {
    /// Builds the maps for the given polygons after checking placement.
    pub fn from_polygons(
        width: usize,
        height: usize,
        seed: u64,
        polygons: Vec<Polygon>,
    ) -> Result<Self, SceneError> {
        check_layout(width, height, &polygons)?;
        let gt = union_mask(&polygons, width, height);
        if gt.is_empty() {
            return Err(SceneError::Invalid("polygons cover no pixel center".into()));
        }
        let fields = build_pretrain_fields(&gt, &gt.boundary())?;
        Ok(Self {
            width,
            height,
            seed,
            polygons,
            fields,
        })
    }

    /// Union of all instance rasters.
    pub fn gt_mask(&self) -> Mask {
        union_mask(&self.polygons, self.width, self.height)
    }

    pub fn instance_masks(&self) -> Vec<Mask> {
        self.polygons
            .iter()
            .map(|p| rasterize(p, self.width, self.height))
            .collect()
    }

    /// Checks placement and that the maps match the canvas.
    pub fn validate(&self) -> Result<(), SceneError> {
        check_layout(self.width, self.height, &self.polygons)?;
        if self.fields.width() != self.width || self.fields.height() != self.height {
            return Err(SceneError::Invalid(format!(
                "fields are {}x{}, scene is {}x{}",
                self.fields.width(),
                self.fields.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    /// Writes `scene.json`, `d.arf`, `beta.arf` and `kappa.arf` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), FormatError> {
        let header = SceneHeader {
            width: self.width,
            height: self.height,
            seed: self.seed,
            polygons: self.polygons.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&header)?;
        json.push(b'\n');
        write_atomic(&dir.join("scene.json"), &json)?;
        save_fields(&self.fields, dir)
    }

    pub fn load(dir: &Path) -> Result<Self, FormatError> {
        let header: SceneHeader = serde_json::from_slice(&std::fs::read(dir.join("scene.json"))?)?;
        let fields = load_fields(dir)?;
        let scene = Scene {
            width: header.width,
            height: header.height,
            seed: header.seed,
            polygons: header.polygons,
            fields,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Writes the three maps as `d.arf`, `beta.arf` and `kappa.arf`.
pub fn save_fields(fields: &FieldSet, dir: &Path) -> Result<(), FormatError> {
    write_atomic(&dir.join("d.arf"), &fields.d().to_arf())?;
    write_atomic(&dir.join("beta.arf"), &fields.beta().to_arf())?;
    write_atomic(&dir.join("kappa.arf"), &fields.kappa().to_arf())?;
    Ok(())
}

pub fn load_fields(dir: &Path) -> Result<FieldSet, FormatError> {
    let read = |name: &str| -> Result<ScalarField, FormatError> {
        ScalarField::from_arf(&std::fs::read(dir.join(name))?)
    };
    Ok(FieldSet::new(
        read("d.arf")?,
        read("beta.arf")?,
        read("kappa.arf")?,
    )?)
}

fn union_mask(polygons: &[Polygon], width: usize, height: usize) -> Mask {
    polygons.iter().fold(Mask::new(width, height), |acc, p| {
        acc.or(&rasterize(p, width, height))
    })
}

fn check_layout(width: usize, height: usize, polygons: &[Polygon]) -> Result<(), SceneError> {
    if polygons.is_empty() {
        return Err(SceneError::Invalid("scene has no polygons".into()));
    }
    for (i, p) in polygons.iter().enumerate() {
        let (x0, y0, x1, y1) = p.bounds();
        if x0 < MARGIN || y0 < MARGIN || x1 > width as f64 - MARGIN || y1 > height as f64 - MARGIN {
            return Err(SceneError::Invalid(format!(
                "polygon {i} violates the {MARGIN} px margin"
            )));
        }
        for (j, q) in polygons.iter().enumerate().skip(i + 1) {
            if polygon_gap(p, q) < SEPARATION {
                return Err(SceneError::Invalid(format!(
                    "polygons {i} and {j} are closer than {SEPARATION} px"
                )));
            }
        }
    }
    Ok(())
}

/// Places `n_instances` non-overlapping shapes of `kind` by rejection
/// sampling and builds the pretraining maps of their union.
pub fn build_scene(
    seed: u64,
    width: usize,
    height: usize,
    n_instances: usize,
    kind: ShapeKind,
) -> Result<Scene, SceneError> {
    if n_instances == 0 {
        return Err(SceneError::Invalid(
            "at least one instance is required".into(),
        ));
    }
    if (width.min(height) as f64) < 2.0 * MARGIN + MIN_INSTANCE_SIDE {
        return Err(SceneError::Invalid(format!(
            "canvas {width}x{height} is too small"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut polygons: Vec<Polygon> = Vec::with_capacity(n_instances);
    let mut attempts = 0;
    while polygons.len() < n_instances {
        if attempts == PLACEMENT_ATTEMPTS {
            return Err(SceneError::PlacementFailed(PLACEMENT_ATTEMPTS));
        }
        attempts += 1;
        let candidate = random_instance(&mut rng, width, height, n_instances, kind)?;
        if rasterize(&candidate, width, height).is_empty() {
            continue;
        }
        if polygons
            .iter()
            .all(|p| polygon_gap(p, &candidate) >= SEPARATION)
        {
            polygons.push(candidate);
        }
    }
    Scene::from_polygons(width, height, seed, polygons)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ground_truth_rays;

    #[test]
    fn convex_generator_is_convex_and_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = random_convex_polygon(&mut a, (0.0, 0.0, 20.0, 20.0), 7).unwrap();
            assert!(p.is_convex() && p.is_simple() && p.area() >= 4.0);
            assert_eq!(
                p,
                random_convex_polygon(&mut b, (0.0, 0.0, 20.0, 20.0), 7).unwrap()
            );
        }
    }

    #[test]
    fn convex_generator_gives_up_on_tiny_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            random_convex_polygon(&mut rng, (0.0, 0.0, 1.0, 1.0), 5),
            Err(SceneError::DegenerateAfterRetries(100))
        );
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let pts = [
            (0.0, 0.0),
            (2.0, 0.0),
            (1.0, 0.0),
            (2.0, 2.0),
            (0.0, 2.0),
            (1.0, 1.0),
        ]
        .map(|(x, y)| Point2::new(x, y));
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(signed_area(&hull) > 0.0);
    }

    #[test]
    fn star_with_equal_radii_is_regular() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Point2::new(10.0, 10.0);
        let p = random_star_polygon(&mut rng, c, 7, (4.0, 4.0));
        let side = p.vertices()[0].distance(p.vertices()[1]);
        for (a, b) in p.edges() {
            assert!((a.distance(c) - 4.0).abs() < 1e-12);
            assert!((a.distance(b) - side).abs() < 1e-9);
        }
    }

    #[test]
    fn star_rays_recover_vertex_radii() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let c = Point2::new(30.0, 30.0);
            let p = random_star_polygon(&mut rng, c, 9, (5.0, 15.0));
            for &v in p.vertices() {
                let d = v.sub(c);
                let angle = d.y.atan2(d.x);
                let r = crate::geometry::ray_polygon_distance(&p, c, angle).unwrap();
                assert!((r - d.norm()).abs() < 1e-9);
            }
            assert!(p.is_simple());
            assert_eq!(ground_truth_rays(&p, c, 16).unwrap().len(), 16);
        }
    }

    #[test]
    fn u_shape_is_not_convex() {
        let u = u_shape_polygon((4.0, 4.0, 40.0, 40.0), 10.0, 10.0).unwrap();
        assert!(!u.is_convex());
        assert_eq!(u.area(), 36.0 * 36.0 - 16.0 * 26.0);
        assert!(u_shape_polygon((0.0, 0.0, 10.0, 10.0), 6.0, 2.0).is_err());
    }

    #[test]
    fn gap_of_separated_squares() {
        let a = Polygon::rectangle(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = Polygon::rectangle(5.0, 0.0, 7.0, 2.0).unwrap();
        assert_eq!(polygon_gap(&a, &b), 3.0);
        let c = Polygon::rectangle(1.0, 1.0, 3.0, 3.0).unwrap();
        assert_eq!(polygon_gap(&a, &c), 0.0);
    }

    #[test]
    fn single_convex_scene_d_vanishes_on_boundary() {
        let scene = build_scene(5, 64, 64, 1, ShapeKind::Convex).unwrap();
        let boundary = scene.gt_mask().boundary();
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(scene.fields.d().get(x, y) == 0.0, boundary.get(x, y));
            }
        }
    }

    #[test]
    fn scene_soak() {
        for seed in 0..100 {
            let s = build_scene(seed, 64, 64, 1, ShapeKind::Convex).unwrap();
            s.validate().unwrap();
            assert!(s.polygons.iter().all(|p| p.is_convex()));
            let gt = s.gt_mask();
            let strict = gt.and_not(&gt.boundary());
            for y in 0..64 {
                for x in 0..64 {
                    if !gt.get(x, y) {
                        assert_eq!(s.fields.kappa().get(x, y), 0.0);
                    }
                    if strict.get(x, y) {
                        assert_eq!(s.fields.beta().get(x, y), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn multi_instance_scenes_keep_separation() {
        for kind in [ShapeKind::Convex, ShapeKind::Star, ShapeKind::UShape] {
            let s = build_scene(9, 96, 96, 3, kind).unwrap();
            assert_eq!(s.polygons.len(), 3);
            s.validate().unwrap();
        }
    }

    #[test]
    fn zero_instances_rejected() {
        assert!(matches!(
            build_scene(0, 64, 64, 0, ShapeKind::Convex),
            Err(SceneError::Invalid(_))
        ));
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let scene = build_scene(7, 48, 40, 2, ShapeKind::Star).unwrap();
        scene.save(dir.path()).unwrap();
        let loaded = Scene::load(dir.path()).unwrap();
        assert_eq!(loaded, scene);
        let again = tempfile::tempdir().unwrap();
        loaded.save(again.path()).unwrap();
        for name in ["scene.json", "d.arf", "beta.arf", "kappa.arf"] {
            assert_eq!(
                std::fs::read(dir.path().join(name)).unwrap(),
                std::fs::read(again.path().join(name)).unwrap()
            );
        }
    }

    #[test]
    fn shape_kind_parses() {
        assert_eq!("ushape".parse::<ShapeKind>().unwrap(), ShapeKind::UShape);
        assert!("circle".parse::<ShapeKind>().is_err());
        assert_eq!(ShapeKind::Star.to_string(), "star");
    }
}
