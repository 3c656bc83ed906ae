//! Points, polygons, ray contours and pixel masks.
//!
//! Coordinates are in pixels with `x` to the right and `y` down. Pixel
//! `(ix, iy)` covers the unit square `[ix, ix + 1) x [iy, iy + 1)`, so its
//! center sits at `(ix + 0.5, iy + 0.5)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Orientation tests treat cross products below this magnitude as zero.
pub const ORIENT_EPS: f64 = 1e-12;
/// Ray crossings closer than this along the ray are one crossing.
pub const CROSSING_MERGE_EPS: f64 = 1e-9;
/// Smallest number of rays for which the pentadiagonal bands stay distinct.
pub const MIN_RAYS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }

    /// Unit vector at `angle` radians from the x axis.
    pub fn unit(angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c, s)
    }
}

fn orient(a: Point2, b: Point2, c: Point2) -> i8 {
    let v = b.sub(a).cross(c.sub(a));
    if v > ORIENT_EPS {
        1
    } else if v < -ORIENT_EPS {
        -1
    } else {
        0
    }
}

/// `p` lies on the closed segment `ab`, assuming the three points are collinear.
fn within_box(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) - ORIENT_EPS
        && p.x <= a.x.max(b.x) + ORIENT_EPS
        && p.y >= a.y.min(b.y) - ORIENT_EPS
        && p.y <= a.y.max(b.y) + ORIENT_EPS
}

/// Closed-segment intersection test, touching included.
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && within_box(q1, q2, p1))
        || (d2 == 0 && within_box(q1, q2, p2))
        || (d3 == 0 && within_box(p1, p2, q1))
        || (d4 == 0 && within_box(p1, p2, q2))
}

/// `p` is on segment `ab` but is neither endpoint.
fn strictly_inside_segment(a: Point2, b: Point2, p: Point2) -> bool {
    if orient(a, b, p) != 0 || !within_box(a, b, p) {
        return false;
    }
    p.distance(a) > ORIENT_EPS && p.distance(b) > ORIENT_EPS
}

/// Euclidean distance from `p` to the closed segment `ab`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a.add(ab.scale(t)))
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

/// True iff no two non-adjacent edges meet and no vertex lies strictly
/// inside another edge. Zero-length edges make a polygon non-simple.
pub fn is_simple(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a.distance(b) <= ORIENT_EPS {
            return false;
        }
    }
    for i in 0..n {
        let (a, b) = edge(i);
        for j in (i + 1)..n {
            let (c, d) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // The shared vertex is allowed; the far endpoints must stay off the other edge.
                if strictly_inside_segment(a, b, c)
                    || strictly_inside_segment(a, b, d)
                    || strictly_inside_segment(c, d, a)
                    || strictly_inside_segment(c, d, b)
                {
                    return false;
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Convexity by consistent cross-product sign; collinear vertices are tolerated.
pub fn is_convex_vertices(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0i8;
    for i in 0..n {
        let o = orient(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
        if o == 0 {
            continue;
        }
        if sign == 0 {
            sign = o;
        } else if o != sign {
            return false;
        }
    }
    sign != 0 && is_simple(vertices)
}

/// A simple polygon with counter-clockwise vertices, closed implicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Validates the vertex list and reverses clockwise input.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !is_simple(&vertices) {
            return Err(GeometryError::NotSimple);
        }
        let area = signed_area(&vertices);
        if area.abs() <= ORIENT_EPS {
            return Err(GeometryError::Degenerate);
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn is_convex(&self) -> bool {
        is_convex_vertices(&self.vertices)
    }

    pub fn is_simple(&self) -> bool {
        is_simple(&self.vertices)
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, self)
    }

    /// Shortest distance from `p` to any edge.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point2::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }

    fn ensure_interior(&self, center: Point2) -> Result<(), GeometryError> {
        if !center.is_finite()
            || !self.contains(center)
            || self.boundary_distance(center) <= ORIENT_EPS
        {
            return Err(GeometryError::CenterOutside);
        }
        Ok(())
    }

    /// Ray parameters `t > 0` at which `center + t * dir` meets each edge.
    fn ray_hits(&self, center: Point2, dir: Point2) -> Vec<f64> {
        let mut hits = Vec::new();
        for (p, q) in self.edges() {
            let e = q.sub(p);
            let denom = dir.cross(e);
            if denom.abs() <= ORIENT_EPS * e.norm().max(1.0) {
                // Parallel edges are reached through their endpoints on the neighbouring edges.
                continue;
            }
            let w = p.sub(center);
            let t = w.cross(e) / denom;
            let s = w.cross(dir) / denom;
            if t > ORIENT_EPS && (-ORIENT_EPS..=1.0 + ORIENT_EPS).contains(&s) {
                hits.push(t);
            }
        }
        hits
    }
}

impl Serialize for Polygon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.vertices.iter().map(|p| [p.x, p.y]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Polygon::new(pairs.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// Even-odd test with a half-open rule on edge endpoints.
pub fn point_in_polygon(p: Point2, polygon: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in polygon.edges() {
        if let Some(x) = scanline_crossing(a, b, p.y) {
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// x coordinate where edge `ab` crosses the horizontal line at `y`, using the
/// half-open convention `min(ay, by) <= y < max(ay, by)`.
fn scanline_crossing(a: Point2, b: Point2, y: f64) -> Option<f64> {
    if (a.y > y) == (b.y > y) {
        return None;
    }
    Some(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
}

pub fn polygon_area(polygon: &Polygon) -> f64 {
    polygon.area()
}

pub fn is_convex(polygon: &Polygon) -> bool {
    polygon.is_convex()
}

/// Distance from an interior `center` to the nearest boundary hit along `angle`.
pub fn ray_polygon_distance(
    polygon: &Polygon,
    center: Point2,
    angle: f64,
) -> Result<f64, GeometryError> {
    polygon.ensure_interior(center)?;
    polygon
        .ray_hits(center, Point2::unit(angle))
        .into_iter()
        .reduce(f64::min)
        .ok_or(GeometryError::NoIntersection)
}

/// Radii of the first boundary hits at the `count` evenly spaced ray angles.
pub fn ground_truth_rays(
    polygon: &Polygon,
    center: Point2,
    count: usize,
) -> Result<Vec<f64>, GeometryError> {
    (0..count)
        .map(|i| ray_polygon_distance(polygon, center, ray_angle(i, count)))
        .collect()
}

/// Number of distinct boundary crossings along the ray. Hits within
/// [`CROSSING_MERGE_EPS`] merge, so a ray through a vertex counts once.
pub fn count_ray_crossings(
    polygon: &Polygon,
    center: Point2,
    angle: f64,
) -> Result<usize, GeometryError> {
    polygon.ensure_interior(center)?;
    let mut hits = polygon.ray_hits(center, Point2::unit(angle));
    hits.sort_by(f64::total_cmp);
    let mut count = 0;
    let mut last = f64::NEG_INFINITY;
    for t in hits {
        if t - last > CROSSING_MERGE_EPS {
            count += 1;
        }
        last = t;
    }
    Ok(count)
}

/// Angle of ray `i` out of `count`, starting at 0 along +x.
pub fn ray_angle(i: usize, count: usize) -> f64 {
    TAU * i as f64 / count as f64
}

/// Polar contour: `L` radii at evenly spaced angles around a reference point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayContour {
    center: Point2,
    radii: Vec<f64>,
}

impl RayContour {
    pub fn new(center: Point2, radii: Vec<f64>) -> Result<Self, GeometryError> {
        if radii.len() < MIN_RAYS {
            return Err(GeometryError::TooFewRays(radii.len()));
        }
        if !center.is_finite() || radii.iter().any(|r| !r.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if radii.iter().any(|&r| r <= 0.0) {
            return Err(GeometryError::NonPositiveRadius);
        }
        Ok(Self { center, radii })
    }

    pub fn circle(center: Point2, radius: f64, rays: usize) -> Result<Self, GeometryError> {
        Self::new(center, vec![radius; rays])
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn delta_theta(&self) -> f64 {
        TAU / self.radii.len() as f64
    }

    pub fn angle(&self, i: usize) -> f64 {
        ray_angle(i, self.radii.len())
    }

    pub fn points(&self) -> Vec<Point2> {
        contour_points(self)
    }

    /// The contour as a polygon. Fails only when radii are so small that
    /// consecutive points coincide within the orientation tolerance.
    pub fn to_polygon(&self) -> Result<Polygon, GeometryError> {
        Polygon::new(self.points())
    }
}

/// Cartesian points `center + rho_i (cos i dtheta, sin i dtheta)`.
pub fn contour_points(contour: &RayContour) -> Vec<Point2> {
    let n = contour.len();
    contour
        .radii
        .iter()
        .enumerate()
        .map(|(i, &r)| contour.center.add(Point2::unit(ray_angle(i, n)).scale(r)))
        .collect()
}

/// Boolean raster, row-major, `true` = foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(
            width >= 1 && height >= 1,
            "mask dimensions must be positive"
        );
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert!(
            width >= 1 && height >= 1,
            "mask dimensions must be positive"
        );
        assert_eq!(
            bits.len(),
            width * height,
            "bit count does not match dimensions"
        );
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert!(self.same_shape(other), "mask dimensions differ");
        Mask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Foreground pixels with a 4-neighbour that is background or off-image.
    pub fn boundary(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        Mask::from_fn(w, h, |x, y| {
            self.get(x, y)
                && (x == 0
                    || y == 0
                    || x + 1 == w
                    || y + 1 == h
                    || !self.get(x - 1, y)
                    || !self.get(x + 1, y)
                    || !self.get(x, y - 1)
                    || !self.get(x, y + 1))
        })
    }

    /// Binary PGM (P5, maxval 255, foreground = 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }

    /// Parses a P5 PGM; any non-zero sample is foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Mask, crate::error::FormatError> {
        let (w, h, data) = crate::io::parse_pgm(bytes)?;
        Ok(Mask::from_bits(
            w,
            h,
            data.iter().map(|&v| v != 0).collect(),
        ))
    }
}

/// Pixel `(x, y)` is set iff its center `(x + 0.5, y + 0.5)` is inside the
/// polygon under the even-odd rule.
pub fn rasterize(polygon: &Polygon, width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    let mut xs = Vec::with_capacity(polygon.len());
    for y in 0..height {
        let yc = y as f64 + 0.5;
        xs.clear();
        xs.extend(
            polygon
                .edges()
                .filter_map(|(a, b)| scanline_crossing(a, b, yc)),
        );
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centers with span[0] <= x + 0.5 < span[1]
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(width as f64);
            if end <= start {
                continue;
            }
            for x in start as usize..end as usize {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

    fn square(h: f64) -> Polygon {
        Polygon::rectangle(-h, -h, h, h).unwrap()
    }

    fn u_shape() -> Polygon {
        // opening at the top (y large); arms at x in [0,2] and [4,6]
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(6.0, 0.0),
            Point2::new(6.0, 6.0),
            Point2::new(4.0, 6.0),
            Point2::new(4.0, 2.0),
            Point2::new(2.0, 2.0),
            Point2::new(2.0, 6.0),
            Point2::new(0.0, 6.0),
        ])
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn contour_points_axis_angles() {
        let c = RayContour::new(
            Point2::new(0.0, 0.0),
            vec![2.0, 3.0, 4.0, 5.0, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let pts = c.points();
        // L = 8 here; rays 0, 2, 4, 6 are the axis directions
        assert!(close(pts[0].x, 2.0, 1e-12) && close(pts[0].y, 0.0, 1e-12));
        assert!(close(pts[2].x, 0.0, 1e-12) && close(pts[2].y, 4.0, 1e-12));
        assert!(close(pts[4].x, -1.0, 1e-12) && close(pts[4].y, 0.0, 1e-12));
    }

    #[test]
    fn contour_points_four_rays_direct_substitution() {
        // RayContour requires L >= 5, so check the formula on a raw computation.
        let radii = [2.0, 3.0, 4.0, 5.0];
        let expected = [(2.0, 0.0), (0.0, 3.0), (-4.0, 0.0), (0.0, -5.0)];
        for (i, (&r, &(ex, ey))) in radii.iter().zip(&expected).enumerate() {
            let p = Point2::unit(ray_angle(i, 4)).scale(r);
            assert!(close(p.x, ex, 1e-12) && close(p.y, ey, 1e-12));
        }
    }

    #[test]
    fn hexagon_and_circle_points() {
        let c = RayContour::circle(Point2::new(10.0, 10.0), 1.0, 6).unwrap();
        let pts = c.points();
        for (i, p) in pts.iter().enumerate() {
            assert!(close(p.distance(Point2::new(10.0, 10.0)), 1.0, 1e-12));
            assert!(close(p.distance(pts[(i + 1) % 6]), 1.0, 1e-12));
        }
        let c = RayContour::circle(Point2::new(0.0, 0.0), 7.5, 60).unwrap();
        assert!(c.points().iter().all(|p| close(p.norm(), 7.5, 1e-12)));
    }

    #[test]
    fn ray_contour_rejects_bad_input() {
        assert_eq!(
            RayContour::circle(Point2::default(), 1.0, 4),
            Err(GeometryError::TooFewRays(4))
        );
        assert_eq!(
            RayContour::new(Point2::default(), vec![1.0, 1.0, 0.0, 1.0, 1.0]),
            Err(GeometryError::NonPositiveRadius)
        );
    }

    #[test]
    fn square_ray_distances() {
        let sq = square(1.0);
        let o = Point2::new(0.0, 0.0);
        assert!(close(
            ray_polygon_distance(&sq, o, 0.0).unwrap(),
            1.0,
            1e-12
        ));
        assert!(close(
            ray_polygon_distance(&sq, o, FRAC_PI_4).unwrap(),
            SQRT_2,
            1e-12
        ));
        assert_eq!(
            ray_polygon_distance(&sq, Point2::new(3.0, 0.0), 0.0),
            Err(GeometryError::CenterOutside)
        );
        assert_eq!(
            ray_polygon_distance(&sq, Point2::new(1.0, 0.0), 0.0),
            Err(GeometryError::CenterOutside)
        );
    }

    #[test]
    fn square_ground_truth_rays() {
        let sq = square(1.0);
        let r4 = ground_truth_rays(&sq, Point2::default(), 4).unwrap();
        assert!(r4.iter().all(|&r| close(r, 1.0, 1e-12)));
        let r8 = ground_truth_rays(&sq, Point2::default(), 8).unwrap();
        for (i, r) in r8.iter().enumerate() {
            let want = if i % 2 == 0 { 1.0 } else { SQRT_2 };
            assert!(close(*r, want, 1e-12), "ray {i}: {r}");
        }
    }

    #[test]
    fn u_shape_takes_nearest_crossing() {
        let u = u_shape();
        let c = Point2::new(1.0, 4.0);
        // +x crosses the left arm's inner wall, the right arm's two walls after that
        assert_eq!(count_ray_crossings(&u, c, 0.0).unwrap(), 3);
        assert!(close(ray_polygon_distance(&u, c, 0.0).unwrap(), 1.0, 1e-12));
        assert_eq!(
            count_ray_crossings(&square(1.0), Point2::default(), 0.0).unwrap(),
            1
        );
    }

    #[test]
    fn vertex_hit_counts_once() {
        let sq = square(1.0);
        assert_eq!(
            count_ray_crossings(&sq, Point2::default(), FRAC_PI_4).unwrap(),
            1
        );
        assert_eq!(
            count_ray_crossings(&sq, Point2::default(), 3.0 * FRAC_PI_4).unwrap(),
            1
        );
    }

    #[test]
    fn simplicity() {
        assert!(square(1.0).is_simple());
        let bowtie = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(!is_simple(&bowtie));
        assert_eq!(Polygon::new(bowtie.to_vec()), Err(GeometryError::NotSimple));
        // vertex touching a non-adjacent edge
        let touching = [
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 4.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 4.0),
        ];
        assert!(!is_simple(&touching));
        // spike folding back along its own edge
        let spike = [
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 3.0),
        ];
        assert!(!is_simple(&spike));
    }

    #[test]
    fn area_containment_convexity() {
        let unit = Polygon::rectangle(-0.5, -0.5, 0.5, 0.5).unwrap();
        assert!(close(polygon_area(&unit), 1.0, 1e-15));
        assert!(point_in_polygon(Point2::new(0.0, 0.0), &unit));
        assert!(!point_in_polygon(Point2::new(0.6, 0.0), &unit));
        let hex = RayContour::circle(Point2::default(), 3.0, 6)
            .unwrap()
            .to_polygon()
            .unwrap();
        assert!(is_convex(&hex));
        assert!(!is_convex(&u_shape()));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let cw = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(cw.area() > 0.0);
    }

    #[test]
    fn rasterize_square_and_sliver() {
        let sq = Polygon::rectangle(0.0, 0.0, 4.0, 4.0).unwrap();
        let m = rasterize(&sq, 8, 8);
        assert_eq!(m.count(), 16);
        assert!(m.get(3, 3) && !m.get(4, 3));
        let sliver = Polygon::new(vec![
            Point2::new(1.1, 1.0),
            Point2::new(1.3, 1.0),
            Point2::new(1.3, 6.0),
            Point2::new(1.1, 6.0),
        ])
        .unwrap();
        assert!(rasterize(&sliver, 8, 8).is_empty());
    }

    #[test]
    fn rasterize_matches_point_in_polygon() {
        let hex = RayContour::circle(Point2::new(7.3, 6.1), 5.2, 6)
            .unwrap()
            .to_polygon()
            .unwrap();
        let m = rasterize(&hex, 16, 16);
        for y in 0..16 {
            for x in 0..16 {
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                assert_eq!(m.get(x, y), point_in_polygon(p, &hex), "pixel {x},{y}");
            }
        }
    }

    #[test]
    fn mask_boundary_and_pgm() {
        let m = Mask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
        let b = m.boundary();
        assert_eq!(b.count(), 8);
        assert!(!b.get(2, 2));
        let round = Mask::from_pgm(&m.to_pgm()).unwrap();
        assert_eq!(round, m);
    }

    #[test]
    fn polygon_json_is_vertex_pairs() {
        let sq = Polygon::rectangle(0.0, 0.0, 2.0, 1.0).unwrap();
        let s = serde_json::to_string(&sq).unwrap();
        assert_eq!(s, "[[0.0,0.0],[2.0,0.0],[2.0,1.0],[0.0,1.0]]");
        let back: Polygon = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sq);
        assert!(serde_json::from_str::<Polygon>("[[0,0],[1,1]]").is_err());
    }

    #[test]
    fn ray_angles_cover_circle() {
        assert!(close(ray_angle(1, 4), FRAC_PI_2, 1e-15));
        assert!(close(ray_angle(2, 4), PI, 1e-15));
    }
}
