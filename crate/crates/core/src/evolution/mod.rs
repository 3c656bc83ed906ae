//! Contour evolution by gradient descent on the active-ray energy.
//!
//! The energy of a contour with points `c_i` is
//!
//! ```text
//! E = sum_i D(c_i) + beta(c_i) |c_{i+1} - 2 c_i + c_{i-1}|^2 + kappa(c_i) (1 - rho_i / rho_max_i)
//! ```
//!
//! Its radial derivative, with the field samples held fixed, is `A rho + f`
//! where `A` is cyclic pentadiagonal and `f` collects the data and balloon
//! terms. Each step resamples the fields at the current points, rebuilds
//! `(A, f)` and moves the radii, clamping them into `[rho_min, rho_max_i]`.

mod cyclic;

pub use cyclic::{dense_solve, solve_cyclic_pentadiagonal, DENSE_FALLBACK_MAX};

use serde::{Deserialize, Serialize};

use crate::error::EvolutionError;
use crate::fields::{inner_distance, FieldSet, PointSamples};
use crate::geometry::{rasterize, ray_angle, Mask, Point2, RayContour};

/// Time step used when none is given.
pub const DEFAULT_DT: f64 = 2e-4;
/// Inference iterations used when none is given.
pub const DEFAULT_STEPS: usize = 200;
/// Rays per contour used when none is given.
pub const DEFAULT_RAYS: usize = 60;

/// The five bands of a cyclic pentadiagonal matrix. Row `i` holds `a_i` at
/// column `i + 2`, `b_i` at `i + 1`, `c_i` on the diagonal, `d_i` at `i - 1`
/// and `e_i` at `i - 2`, all indices modulo `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemBands {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl SystemBands {
    /// Curvature bands for per-ray beta samples: the Hessian of
    /// `sum_j beta_j |c_{j+1} - 2 c_j + c_{j-1}|^2` in the radii.
    pub fn from_beta(beta: &[f64]) -> Self {
        let l = beta.len();
        let dtheta = std::f64::consts::TAU / l as f64;
        let (c1, c2) = (dtheta.cos(), (2.0 * dtheta).cos());
        let at = |i: isize| beta[i.rem_euclid(l as isize) as usize];
        let mut bands = SystemBands {
            a: vec![0.0; l],
            b: vec![0.0; l],
            c: vec![0.0; l],
            d: vec![0.0; l],
            e: vec![0.0; l],
        };
        for i in 0..l {
            let k = i as isize;
            let (prev, cur, next) = (at(k - 1), at(k), at(k + 1));
            bands.a[i] = 2.0 * next * c2;
            bands.b[i] = -4.0 * (cur + next) * c1;
            bands.c[i] = 2.0 * (prev + 4.0 * cur + next);
            bands.d[i] = -4.0 * (prev + cur) * c1;
            bands.e[i] = 2.0 * prev * c2;
        }
        bands
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let l = self.len();
        (0..l)
            .map(|i| {
                self.a[i] * x[(i + 2) % l]
                    + self.b[i] * x[(i + 1) % l]
                    + self.c[i] * x[i]
                    + self.d[i] * x[(i + l - 1) % l]
                    + self.e[i] * x[(i + l - 2) % l]
            })
            .collect()
    }

    /// `A^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let l = self.len();
        let mut out = vec![0.0; l];
        for i in 0..l {
            out[(i + 2) % l] += self.a[i] * x[i];
            out[(i + 1) % l] += self.b[i] * x[i];
            out[i] += self.c[i] * x[i];
            out[(i + l - 1) % l] += self.d[i] * x[i];
            out[(i + l - 2) % l] += self.e[i] * x[i];
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let l = self.len();
        (0..l)
            .map(|i| {
                (0..l)
                    .map(|j| cyclic::cyclic_entry(self, 0.0, i, j))
                    .collect()
            })
            .collect()
    }
}

/// Data plus balloon derivatives, one entry per ray.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceVector(pub Vec<f64>);

impl ForceVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Explicit,
    #[serde(rename = "imex")]
    ImplicitExplicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub steps: usize,
    pub rho_min: f64,
    pub solver: Solver,
    /// Stop once `max_i |rho_i^{t+1} - rho_i^t|` falls below this.
    pub convergence_eps: Option<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            steps: DEFAULT_STEPS,
            rho_min: 1.0,
            solver: Solver::Explicit,
            convergence_eps: None,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EvolutionError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.rho_min > 0.0 && self.rho_min.is_finite()) {
            return Err(EvolutionError::InvalidConfig(format!(
                "rho_min must be positive, got {}",
                self.rho_min
            )));
        }
        if let Some(eps) = self.convergence_eps {
            if eps.is_nan() || eps <= 0.0 {
                return Err(EvolutionError::InvalidConfig(
                    "convergence_eps must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-ray distance from the reference point to the image rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoMax(pub Vec<f64>);

impl RhoMax {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Ray-box distances from `center` to the border of `[0, width] x [0, height]`.
pub fn rho_max_for(
    center: Point2,
    rays: usize,
    width: usize,
    height: usize,
) -> Result<RhoMax, EvolutionError> {
    let (w, h) = (width as f64, height as f64);
    if !(center.x > 0.0 && center.x < w && center.y > 0.0 && center.y < h) {
        return Err(EvolutionError::CenterOutsideImage);
    }
    let axis = |pos: f64, dir: f64, hi: f64| {
        if dir > 0.0 {
            (hi - pos) / dir
        } else if dir < 0.0 {
            -pos / dir
        } else {
            f64::INFINITY
        }
    };
    Ok(RhoMax(
        (0..rays)
            .map(|i| {
                let u = Point2::unit(ray_angle(i, rays));
                axis(center.x, u.x, w).min(axis(center.y, u.y, h))
            })
            .collect(),
    ))
}

/// Unit directions of the `L` rays.
pub(crate) fn ray_directions(rays: usize) -> Vec<Point2> {
    (0..rays)
        .map(|i| Point2::unit(ray_angle(i, rays)))
        .collect()
}

pub(crate) fn ray_points(center: Point2, radii: &[f64], dirs: &[Point2]) -> Vec<Point2> {
    radii
        .iter()
        .zip(dirs)
        .map(|(&r, &u)| center.add(u.scale(r)))
        .collect()
}

/// Field samples at every contour point.
pub(crate) fn sample_rays(fields: &FieldSet, points: &[Point2]) -> Vec<PointSamples> {
    points.iter().map(|&p| fields.sample_with_grad(p)).collect()
}

pub(crate) fn force_from_samples(
    samples: &[PointSamples],
    dirs: &[Point2],
    rho_max: &[f64],
) -> ForceVector {
    ForceVector(
        samples
            .iter()
            .zip(dirs)
            .zip(rho_max)
            .map(|((s, u), &rm)| s.gx.value * u.x + s.gy.value * u.y - s.kappa.value / rm)
            .collect(),
    )
}

fn assemble_at(
    center: Point2,
    radii: &[f64],
    dirs: &[Point2],
    fields: &FieldSet,
    rho_max: &RhoMax,
) -> (SystemBands, ForceVector) {
    let samples = sample_rays(fields, &ray_points(center, radii, dirs));
    let beta: Vec<f64> = samples.iter().map(|s| s.beta.value).collect();
    (
        SystemBands::from_beta(&beta),
        force_from_samples(&samples, dirs, &rho_max.0),
    )
}

/// Bands of `A` and the force `f` at the contour's current points.
pub fn assemble_system(
    contour: &RayContour,
    fields: &FieldSet,
    rho_max: &RhoMax,
) -> (SystemBands, ForceVector) {
    let dirs = ray_directions(contour.len());
    assemble_at(contour.center(), contour.radii(), &dirs, fields, rho_max)
}

/// Total contour energy with every map sampled bilinearly at the contour points.
pub fn energy_total(contour: &RayContour, fields: &FieldSet, rho_max: &RhoMax) -> f64 {
    let pts = contour.points();
    let l = pts.len();
    (0..l)
        .map(|i| {
            let (d, beta, kappa) = fields.sample(pts[i]);
            let second = pts[(i + 1) % l]
                .sub(pts[i].scale(2.0))
                .add(pts[(i + l - 1) % l]);
            d + beta * second.dot(second) + kappa * (1.0 - contour.radii()[i] / rho_max.0[i])
        })
        .sum()
}

/// `rho - dt (A rho + f)` without clamping.
pub fn explicit_update(rho: &[f64], bands: &SystemBands, force: &ForceVector, dt: f64) -> Vec<f64> {
    let ar = bands.apply(rho);
    rho.iter()
        .zip(&ar)
        .zip(&force.0)
        .map(|((r, a), f)| r - dt * (a + f))
        .collect()
}

/// Clamps each radius into `[rho_min, rho_max_i]`, reporting which moved.
pub fn clamp_radii(radii: &[f64], rho_min: f64, rho_max: &RhoMax) -> (Vec<f64>, Vec<bool>) {
    radii
        .iter()
        .zip(&rho_max.0)
        .map(|(&r, &hi)| {
            let c = r.clamp(rho_min, hi);
            (c, c != r)
        })
        .unzip()
}

/// One explicit step followed by the radius clamp.
pub fn evolve_step(
    rho: &[f64],
    bands: &SystemBands,
    force: &ForceVector,
    config: &EvolutionConfig,
    rho_max: &RhoMax,
) -> Vec<f64> {
    clamp_radii(
        &explicit_update(rho, bands, force, config.dt),
        config.rho_min,
        rho_max,
    )
    .0
}

/// One implicit-explicit step `(A + I/dt)^{-1} (rho/dt - f)`, then the clamp.
pub fn imex_step(
    rho: &[f64],
    bands: &SystemBands,
    force: &ForceVector,
    config: &EvolutionConfig,
    rho_max: &RhoMax,
) -> Result<Vec<f64>, EvolutionError> {
    let y = imex_solve(rho, bands, force, config.dt)?;
    Ok(clamp_radii(&y, config.rho_min, rho_max).0)
}

fn imex_solve(
    rho: &[f64],
    bands: &SystemBands,
    force: &ForceVector,
    dt: f64,
) -> Result<Vec<f64>, EvolutionError> {
    let inv_dt = 1.0 / dt;
    let rhs: Vec<f64> = rho
        .iter()
        .zip(&force.0)
        .map(|(r, f)| r * inv_dt - f)
        .collect();
    solve_cyclic_pentadiagonal(bands, inv_dt, &rhs)
}

/// Radii before and after every step, plus the clamp pattern of each step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub center: Point2,
    pub rho_max: RhoMax,
    pub dt: f64,
    pub rho_min: f64,
    pub solver: Solver,
    pub width: usize,
    pub height: usize,
    /// `steps + 1` radius vectors, the first being the initial contour.
    pub radii: Vec<Vec<f64>>,
    /// `steps` entries; `clamped[t][i]` is set when step `t` clipped ray `i`.
    pub clamped: Vec<Vec<bool>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.clamped.len()
    }

    pub fn final_radii(&self) -> &[f64] {
        self.radii
            .last()
            .expect("trajectory holds the initial radii")
    }

    pub fn contour_at(&self, t: usize) -> Result<RayContour, EvolutionError> {
        Ok(RayContour::new(self.center, self.radii[t].clone())?)
    }

    /// Rows of `(step, ray, rho)`.
    pub fn to_csv(&self) -> String {
        crate::io::csv_text(
            &["step", "i", "rho"],
            self.radii.iter().enumerate().flat_map(|(t, r)| {
                r.iter()
                    .enumerate()
                    .map(move |(i, v)| vec![t.to_string(), i.to_string(), v.to_string()])
            }),
        )
    }
}

fn check_start(
    contour: &RayContour,
    fields: &FieldSet,
    config: &EvolutionConfig,
) -> Result<RhoMax, EvolutionError> {
    config.validate()?;
    let rho_max = rho_max_for(
        contour.center(),
        contour.len(),
        fields.width(),
        fields.height(),
    )?;
    if let Some(i) = rho_max.0.iter().position(|&m| m <= config.rho_min) {
        return Err(EvolutionError::InvalidConfig(format!(
            "ray {i} reaches the image border within rho_min"
        )));
    }
    if let Some(i) = contour
        .radii()
        .iter()
        .zip(&rho_max.0)
        .position(|(&r, &m)| r < config.rho_min || r > m)
    {
        return Err(EvolutionError::InvalidConfig(format!(
            "initial radius of ray {i} lies outside [rho_min, rho_max]"
        )));
    }
    Ok(rho_max)
}

/// Runs the configured solver from `contour`, rebuilding `(A, f)` each step.
/// Returns the final contour and the full trajectory.
pub fn evolve(
    contour: &RayContour,
    fields: &FieldSet,
    config: &EvolutionConfig,
) -> Result<(RayContour, Trajectory), EvolutionError> {
    let rho_max = check_start(contour, fields, config)?;
    let center = contour.center();
    let dirs = ray_directions(contour.len());
    let mut traj = Trajectory {
        center,
        rho_max,
        dt: config.dt,
        rho_min: config.rho_min,
        solver: config.solver,
        width: fields.width(),
        height: fields.height(),
        radii: vec![contour.radii().to_vec()],
        clamped: Vec::with_capacity(config.steps),
    };
    for step in 0..config.steps {
        let rho = traj.final_radii();
        let (bands, force) = assemble_at(center, rho, &dirs, fields, &traj.rho_max);
        let raw = match config.solver {
            Solver::Explicit => explicit_update(rho, &bands, &force, config.dt),
            Solver::ImplicitExplicit => imex_solve(rho, &bands, &force, config.dt)?,
        };
        if raw.iter().any(|r| !r.is_finite()) {
            return Err(EvolutionError::NonFinite { step });
        }
        let (next, clamped) = match config.solver {
            Solver::Explicit => clamp_radii(&raw, config.rho_min, &traj.rho_max),
            Solver::ImplicitExplicit => {
                let next = clamp_radii(&raw, config.rho_min, &traj.rho_max).0;
                let clamped = next
                    .iter()
                    .zip(&traj.rho_max.0)
                    .map(|(&r, &m)| r == config.rho_min || r == m)
                    .collect();
                (next, clamped)
            }
        };
        let change = next
            .iter()
            .zip(rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        traj.radii.push(next);
        traj.clamped.push(clamped);
        if config.convergence_eps.is_some_and(|eps| change < eps) {
            break;
        }
    }
    let out = RayContour::new(center, traj.final_radii().to_vec())?;
    Ok((out, traj))
}

/// Reference solver: same loop as [`evolve`] with the implicit-explicit update.
pub fn evolve_implicit_explicit(
    contour: &RayContour,
    fields: &FieldSet,
    config: &EvolutionConfig,
) -> Result<RayContour, EvolutionError> {
    let cfg = EvolutionConfig {
        solver: Solver::ImplicitExplicit,
        ..config.clone()
    };
    evolve(contour, fields, &cfg).map(|(c, _)| c)
}

/// Settings for covering one segment with several contours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiInitConfig {
    pub rays: usize,
    /// Stop once fewer uncovered pixels than this remain.
    pub min_area: usize,
    pub max_inits: usize,
}

impl Default for MultiInitConfig {
    fn default() -> Self {
        Self {
            rays: DEFAULT_RAYS,
            min_area: 16,
            max_inits: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiInitResult {
    pub contours: Vec<RayContour>,
    pub initial: Vec<RayContour>,
    pub union: Mask,
}

/// Seed contour at the deepest pixel of `region`: the center is the
/// distance-transform argmax (first in row-major order on ties) and the
/// radius is `min(4 rho_min, depth / 2)`. `None` when no circle of radius
/// `rho_min` fits.
pub fn seed_contour(
    region: &Mask,
    rays: usize,
    rho_min: f64,
) -> Result<Option<RayContour>, EvolutionError> {
    let depth = inner_distance(region);
    let (mut best, mut at) = (0.0, (0, 0));
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if depth.get(x, y) > best {
                best = depth.get(x, y);
                at = (x, y);
            }
        }
    }
    let radius = (4.0 * rho_min).min(best / 2.0);
    if radius < rho_min {
        return Ok(None);
    }
    let center = Point2::new(at.0 as f64 + 0.5, at.1 as f64 + 0.5);
    Ok(Some(RayContour::circle(center, radius, rays)?))
}

/// Covers `segment` with successive contours, each seeded in the part the
/// previous ones left uncovered.
pub fn multi_init_evolve(
    segment: &Mask,
    fields: &FieldSet,
    config: &EvolutionConfig,
    limits: &MultiInitConfig,
) -> Result<MultiInitResult, EvolutionError> {
    if segment.is_empty() {
        return Err(EvolutionError::EmptySegment);
    }
    if segment.width() != fields.width() || segment.height() != fields.height() {
        return Err(crate::error::FieldError::DimensionMismatch("segment vs fields".into()).into());
    }
    let mut out = MultiInitResult {
        contours: Vec::new(),
        initial: Vec::new(),
        union: Mask::new(segment.width(), segment.height()),
    };
    while out.contours.len() < limits.max_inits {
        let uncovered = segment.and_not(&out.union);
        if uncovered.count() < limits.min_area {
            break;
        }
        let Some(seed) = seed_contour(&uncovered, limits.rays, config.rho_min)? else {
            break;
        };
        let (contour, _) = evolve(&seed, fields, config)?;
        let covered = rasterize(&contour.to_polygon()?, segment.width(), segment.height());
        out.union = out.union.or(&covered);
        out.initial.push(seed);
        out.contours.push(contour);
    }
    Ok(out)
}
