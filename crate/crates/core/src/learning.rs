//! Training the per-pixel maps by differentiating through the unrolled
//! explicit evolution.
//!
//! The reverse pass transposes the implemented update
//! `rho' = clamp(rho - dt (A(rho) rho + f(rho)))`, where `A` and `f` depend on
//! the radii through the bilinear samples of `beta`, `kappa` and the Sobel
//! gradient of `D`. Gradients reach the grids through the bilinear corner
//! weights, and reach `D` through the transposed Sobel stencil.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::LearningError;
use crate::evolution::{
    evolve, ray_directions, ray_points, sample_rays, EvolutionConfig, Solver, SystemBands,
    Trajectory,
};
use crate::fields::{sobel_adjoint, BilinearSample, FieldSet, ScalarField};
use crate::geometry::{ground_truth_rays, Point2, Polygon, RayContour};
use crate::scene::Scene;

/// Rejection-sampling budget for a training reference point.
pub const MAX_CENTER_DRAWS: usize = 10_000;

/// `sum_i |rho_i - gt_i|`.
pub fn ray_loss_l1(rho: &[f64], rho_gt: &[f64]) -> Result<f64, LearningError> {
    check_len(rho, rho_gt)?;
    Ok(rho.iter().zip(rho_gt).map(|(a, b)| (a - b).abs()).sum())
}

/// Subgradient of [`ray_loss_l1`], zero at ties.
pub fn loss_grad(rho: &[f64], rho_gt: &[f64]) -> Result<Vec<f64>, LearningError> {
    check_len(rho, rho_gt)?;
    Ok(rho
        .iter()
        .zip(rho_gt)
        .map(|(a, b)| match a.partial_cmp(b) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => -1.0,
            _ => 0.0,
        })
        .collect())
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), LearningError> {
    if a.len() != b.len() {
        return Err(LearningError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Grids of the same shape as the three maps.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrads {
    pub d: ScalarField,
    pub beta: ScalarField,
    pub kappa: ScalarField,
}

impl FieldGrads {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            d: ScalarField::zeros(width, height),
            beta: ScalarField::zeros(width, height),
            kappa: ScalarField::zeros(width, height),
        }
    }

    fn grids_mut(&mut self) -> [&mut ScalarField; 3] {
        [&mut self.d, &mut self.beta, &mut self.kappa]
    }

    fn clear(&mut self) {
        for g in self.grids_mut() {
            g.values_mut().fill(0.0);
        }
    }
}

/// The maps as trainable parameters, with gradient and momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnableFields {
    fields: FieldSet,
    pub grads: FieldGrads,
    pub momentum: FieldGrads,
}

impl LearnableFields {
    pub fn new(fields: FieldSet) -> Self {
        let (w, h) = (fields.width(), fields.height());
        Self {
            fields,
            grads: FieldGrads::zeros(w, h),
            momentum: FieldGrads::zeros(w, h),
        }
    }

    pub fn fields(&self) -> &FieldSet {
        &self.fields
    }

    pub fn into_fields(self) -> FieldSet {
        self.fields
    }

    pub fn zero_grads(&mut self) {
        self.grads.clear();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub train_steps: usize,
    pub evolution: EvolutionConfig,
    pub rays: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-5,
            momentum: 0.3,
            train_steps: 100,
            evolution: EvolutionConfig::default(),
            rays: crate::evolution::DEFAULT_RAYS,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearningError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearningError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LearningError::InvalidConfig(
                "momentum must lie in [0, 1)".into(),
            ));
        }
        if self.evolution.solver != Solver::Explicit {
            return Err(LearningError::InvalidConfig(
                "training differentiates the explicit solver".into(),
            ));
        }
        self.evolution.validate()?;
        Ok(())
    }
}

/// `d q_j / d rho_k` for `k = j - 1, j, j + 1`, where `q_j` is the squared
/// second difference at point `j`.
fn second_difference_partials(radii: &[f64], dirs: &[Point2], j: usize) -> [f64; 3] {
    let l = radii.len();
    let (p, n) = ((j + l - 1) % l, (j + 1) % l);
    let v = dirs[n]
        .scale(radii[n])
        .sub(dirs[j].scale(2.0 * radii[j]))
        .add(dirs[p].scale(radii[p]));
    [
        2.0 * v.dot(dirs[p]),
        -4.0 * v.dot(dirs[j]),
        2.0 * v.dot(dirs[n]),
    ]
}

fn directional(s: &BilinearSample, u: Point2) -> f64 {
    s.d_dx * u.x + s.d_dy * u.y
}

fn scatter(grid: &mut ScalarField, s: &BilinearSample, g: f64) {
    if g == 0.0 {
        return;
    }
    let values = grid.values_mut();
    for &(idx, w) in &s.corners {
        values[idx] += w * g;
    }
}

/// Accumulates `dL/d(grid entry)` into `fields.grads` given `dL/d rho^T`.
pub fn backward_through_evolution(
    trajectory: &Trajectory,
    fields: &mut LearnableFields,
    d_loss_d_rho_final: &[f64],
) -> Result<(), LearningError> {
    let mismatch = |m: String| Err(LearningError::TrajectoryMismatch(m));
    if trajectory.solver != Solver::Explicit {
        return mismatch("only explicit trajectories can be differentiated".into());
    }
    if trajectory.width != fields.fields.width() || trajectory.height != fields.fields.height() {
        return mismatch(format!(
            "trajectory grid {}x{} vs fields {}x{}",
            trajectory.width,
            trajectory.height,
            fields.fields.width(),
            fields.fields.height()
        ));
    }
    if trajectory.radii.len() != trajectory.clamped.len() + 1 {
        return mismatch("radius and clamp records disagree in length".into());
    }
    let l = d_loss_d_rho_final.len();
    if trajectory.rho_max.0.len() != l
        || trajectory.radii.iter().any(|r| r.len() != l)
        || trajectory.clamped.iter().any(|c| c.len() != l)
    {
        return mismatch(format!("loss gradient has {l} rays"));
    }

    let dt = trajectory.dt;
    let dirs = ray_directions(l);
    let rho_max = &trajectory.rho_max.0;
    let mut grad_gx = ScalarField::zeros(trajectory.width, trajectory.height);
    let mut grad_gy = ScalarField::zeros(trajectory.width, trajectory.height);
    let mut lambda = d_loss_d_rho_final.to_vec();

    for t in (0..trajectory.steps()).rev() {
        let rho = &trajectory.radii[t];
        let mu: Vec<f64> = lambda
            .iter()
            .zip(&trajectory.clamped[t])
            .map(|(&g, &c)| if c { 0.0 } else { g })
            .collect();
        let samples = sample_rays(&fields.fields, &ray_points(trajectory.center, rho, &dirs));
        let beta: Vec<f64> = samples.iter().map(|s| s.beta.value).collect();
        let at_mu = SystemBands::from_beta(&beta).apply_transpose(&mu);

        // s_j = sum_k mu_k d q_j / d rho_k
        let s: Vec<f64> = (0..l)
            .map(|j| {
                let dq = second_difference_partials(rho, &dirs, j);
                dq[0] * mu[(j + l - 1) % l] + dq[1] * mu[j] + dq[2] * mu[(j + 1) % l]
            })
            .collect();

        for k in 0..l {
            let (sm, u) = (&samples[k], dirs[k]);
            let df = directional(&sm.gx, u) * u.x + directional(&sm.gy, u) * u.y
                - directional(&sm.kappa, u) / rho_max[k];
            lambda[k] = mu[k] - dt * (at_mu[k] + s[k] * directional(&sm.beta, u) + mu[k] * df);

            scatter(&mut fields.grads.beta, &sm.beta, -dt * s[k]);
            scatter(&mut fields.grads.kappa, &sm.kappa, dt * mu[k] / rho_max[k]);
            scatter(&mut grad_gx, &sm.gx, -dt * mu[k] * u.x);
            scatter(&mut grad_gy, &sm.gy, -dt * mu[k] * u.y);
        }
    }

    let grad_d = sobel_adjoint(&grad_gx, &grad_gy);
    for (acc, g) in fields.grads.d.values_mut().iter_mut().zip(grad_d.values()) {
        *acc += g;
    }
    Ok(())
}

/// `buffer = momentum * buffer + grad`, `param -= lr * buffer`, clamp at zero,
/// then clear the gradients.
pub fn sgd_momentum_step(
    fields: &mut LearnableFields,
    config: &TrainConfig,
) -> Result<(), LearningError> {
    let (d, beta, kappa) = fields.fields.clone().into_parts();
    let mut params = [d, beta, kappa];
    let grads = [&fields.grads.d, &fields.grads.beta, &fields.grads.kappa];
    let buffers = fields.momentum.grids_mut();
    for ((param, grad), buffer) in params.iter_mut().zip(grads).zip(buffers) {
        for ((p, &g), b) in param
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(buffer.values_mut())
        {
            *b = config.momentum * *b + g;
            *p = (*p - config.learning_rate * *b).max(0.0);
        }
    }
    let [d, beta, kappa] = params;
    fields.fields = FieldSet::new(d, beta, kappa)?;
    fields.zero_grads();
    Ok(())
}

/// Uniform point in the polygon's bounding box whose `rho_min` disk lies
/// inside the polygon.
pub fn sample_interior_point<R: Rng + ?Sized>(
    rng: &mut R,
    polygon: &Polygon,
    rho_min: f64,
) -> Result<Point2, LearningError> {
    let (x0, y0, x1, y1) = polygon.bounds();
    for _ in 0..MAX_CENTER_DRAWS {
        let p = Point2::new(rng.gen_range(x0..=x1), rng.gen_range(y0..=y1));
        if polygon.contains(p) && polygon.boundary_distance(p) >= rho_min {
            return Ok(p);
        }
    }
    Err(LearningError::NoInteriorPoint(MAX_CENTER_DRAWS))
}

/// Circle at `center` of radius `min(4 rho_min, depth / 2)`, at least
/// `rho_min`, where `depth` is the distance to the polygon boundary.
pub fn training_init(
    polygon: &Polygon,
    center: Point2,
    rays: usize,
    rho_min: f64,
) -> Result<RayContour, LearningError> {
    let depth = polygon.boundary_distance(center);
    let radius = (4.0 * rho_min).min(depth / 2.0).max(rho_min);
    Ok(RayContour::circle(center, radius, rays)?)
}

/// One forward/backward/update cycle from a given reference point. Returns
/// the loss before the update.
pub fn train_step(
    fields: &mut LearnableFields,
    polygon: &Polygon,
    center: Point2,
    config: &TrainConfig,
) -> Result<f64, LearningError> {
    let target = ground_truth_rays(polygon, center, config.rays)?;
    let init = training_init(polygon, center, config.rays, config.evolution.rho_min)?;
    let (out, traj) = evolve(&init, &fields.fields, &config.evolution)?;
    let loss = ray_loss_l1(out.radii(), &target)?;
    backward_through_evolution(&traj, fields, &loss_grad(out.radii(), &target)?)?;
    sgd_momentum_step(fields, config)?;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub scene_id: usize,
    pub loss: f64,
}

/// Loss history as CSV with columns `step,scene_id,loss`.
pub fn history_csv(history: &[HistoryEntry]) -> String {
    crate::io::csv_text(
        &["step", "scene_id", "loss"],
        history.iter().map(|h| {
            vec![
                h.step.to_string(),
                h.scene_id.to_string(),
                h.loss.to_string(),
            ]
        }),
    )
}

/// Trains one set of maps per scene, starting from each scene's pretraining
/// maps. Every step draws a scene, an instance and a reference point.
pub fn train(
    scenes: &[Scene],
    config: &TrainConfig,
) -> Result<(Vec<LearnableFields>, Vec<HistoryEntry>), LearningError> {
    config.validate()?;
    if scenes.is_empty() {
        return Err(LearningError::InvalidConfig("no scenes to train on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut learnable: Vec<LearnableFields> = scenes
        .iter()
        .map(|s| LearnableFields::new(s.fields.clone()))
        .collect();
    let mut history = Vec::with_capacity(config.train_steps);
    for step in 0..config.train_steps {
        let scene_id = rng.gen_range(0..scenes.len());
        let scene = &scenes[scene_id];
        let polygon = &scene.polygons[rng.gen_range(0..scene.polygons.len())];
        let center = sample_interior_point(&mut rng, polygon, config.evolution.rho_min)?;
        let loss = train_step(&mut learnable[scene_id], polygon, center, config)?;
        history.push(HistoryEntry {
            step,
            scene_id,
            loss,
        });
    }
    Ok((learnable, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::regular_polygon;

    #[test]
    fn l1_examples() {
        assert_eq!(ray_loss_l1(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(ray_loss_l1(&[5.0; 4], &[5.0; 4]).unwrap(), 0.0);
        assert_eq!(
            loss_grad(&[1.0, 2.0], &[2.0, 4.0]).unwrap(),
            vec![-1.0, -1.0]
        );
        assert_eq!(
            loss_grad(&[3.0, 1.0, 2.0], &[3.0, 0.0, 2.0]).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
        assert_eq!(
            ray_loss_l1(&[1.0], &[1.0, 2.0]),
            Err(LearningError::LengthMismatch(1, 2))
        );
        assert_eq!(
            loss_grad(&[1.0, 2.0], &[1.0]),
            Err(LearningError::LengthMismatch(2, 1))
        );
    }

    #[test]
    fn loss_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho: Vec<f64> = (0..60).map(|_| rng.gen_range(1.0..20.0)).collect();
        let gt: Vec<f64> = (0..60).map(|_| rng.gen_range(1.0..20.0)).collect();
        let g = loss_grad(&rho, &gt).unwrap();
        for i in 0..60 {
            let mut hi = rho.clone();
            let mut lo = rho.clone();
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            let fd = (ray_loss_l1(&hi, &gt).unwrap() - ray_loss_l1(&lo, &gt).unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_steps_gives_zero_grads() {
        let fields = FieldSet::uniform(16, 16, 1.0, 0.5, 0.5).unwrap();
        let c = RayContour::circle(Point2::new(8.0, 8.0), 3.0, 8).unwrap();
        let cfg = EvolutionConfig {
            steps: 0,
            ..Default::default()
        };
        let (_, traj) = evolve(&c, &fields, &cfg).unwrap();
        let mut lf = LearnableFields::new(fields);
        backward_through_evolution(&traj, &mut lf, &[1.0; 8]).unwrap();
        assert_eq!(lf.grads, FieldGrads::zeros(16, 16));
    }

    #[test]
    fn kappa_one_step_hand_derivative() {
        let fields = FieldSet::uniform(32, 32, 0.0, 0.0, 0.2).unwrap();
        let center = Point2::new(16.0, 16.0);
        let c = RayContour::circle(center, 5.0, 8).unwrap();
        let cfg = EvolutionConfig {
            steps: 1,
            ..Default::default()
        };
        let (_, traj) = evolve(&c, &fields, &cfg).unwrap();
        let mut upstream = vec![0.0; 8];
        upstream[1] = 1.0;
        let mut lf = LearnableFields::new(fields.clone());
        backward_through_evolution(&traj, &mut lf, &upstream).unwrap();
        let sample = fields.sample_with_grad(c.points()[1]).kappa;
        let rm = traj.rho_max.0[1];
        let mut expected = ScalarField::zeros(32, 32);
        for &(idx, w) in &sample.corners {
            expected.values_mut()[idx] += cfg.dt / rm * w;
        }
        for (a, b) in lf.grads.kappa.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn mismatched_trajectory_is_rejected() {
        let fields = FieldSet::uniform(16, 16, 1.0, 0.5, 0.5).unwrap();
        let c = RayContour::circle(Point2::new(8.0, 8.0), 3.0, 8).unwrap();
        let (_, traj) = evolve(
            &c,
            &fields,
            &EvolutionConfig {
                steps: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let mut lf = LearnableFields::new(fields.clone());
        assert!(matches!(
            backward_through_evolution(&traj, &mut lf, &[1.0; 7]),
            Err(LearningError::TrajectoryMismatch(_))
        ));
        let mut other = LearnableFields::new(FieldSet::uniform(20, 16, 1.0, 0.5, 0.5).unwrap());
        assert!(matches!(
            backward_through_evolution(&traj, &mut other, &[1.0; 8]),
            Err(LearningError::TrajectoryMismatch(_))
        ));
    }

    /// Loss after evolving with one grid entry shifted by `h`.
    fn perturbed_loss(
        fields: &FieldSet,
        which: usize,
        idx: usize,
        h: f64,
        init: &RayContour,
        cfg: &EvolutionConfig,
        gt: &[f64],
    ) -> f64 {
        let (d, beta, kappa) = fields.clone().into_parts();
        let mut grids = [d, beta, kappa];
        grids[which].values_mut()[idx] += h;
        let [d, beta, kappa] = grids;
        let f = FieldSet::new(d, beta, kappa).unwrap();
        let (out, _) = evolve(init, &f, cfg).unwrap();
        ray_loss_l1(out.radii(), gt).unwrap()
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 12;
        let fields = FieldSet::new(
            ScalarField::from_fn(n, n, |_, _| rng.gen_range(1.0..3.0)),
            ScalarField::from_fn(n, n, |_, _| rng.gen_range(0.05..0.2)),
            ScalarField::from_fn(n, n, |_, _| rng.gen_range(0.5..2.0)),
        )
        .unwrap();
        let init = RayContour::circle(Point2::new(6.1, 5.9), 2.7, 7).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.02,
            steps: 4,
            ..Default::default()
        };
        let (out, traj) = evolve(&init, &fields, &cfg).unwrap();
        assert!(traj.clamped.iter().flatten().all(|&c| !c));
        let gt: Vec<f64> = out
            .radii()
            .iter()
            .enumerate()
            .map(|(i, r)| r + if i % 2 == 0 { 0.3 } else { -0.3 })
            .collect();
        let mut lf = LearnableFields::new(fields.clone());
        backward_through_evolution(&traj, &mut lf, &loss_grad(out.radii(), &gt).unwrap()).unwrap();
        let h = 1e-4;
        for (which, grads) in [&lf.grads.d, &lf.grads.beta, &lf.grads.kappa]
            .into_iter()
            .enumerate()
        {
            for idx in 0..n * n {
                let fd = (perturbed_loss(&fields, which, idx, h, &init, &cfg, &gt)
                    - perturbed_loss(&fields, which, idx, -h, &init, &cfg, &gt))
                    / (2.0 * h);
                let g = grads.values()[idx];
                assert!(
                    (fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()) + 1e-10,
                    "map {which} entry {idx}: adjoint {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn momentum_arithmetic() {
        let fields = FieldSet::uniform(4, 4, 10.0, 10.0, 10.0).unwrap();
        let mut lf = LearnableFields::new(fields.clone());
        let cfg = TrainConfig {
            learning_rate: 1.0,
            momentum: 0.0,
            ..Default::default()
        };
        sgd_momentum_step(&mut lf, &cfg).unwrap();
        assert_eq!(lf.fields(), &fields);
        lf.grads.kappa.values_mut()[5] = 2.5;
        lf.grads.beta.values_mut()[0] = 20.0;
        sgd_momentum_step(&mut lf, &cfg).unwrap();
        assert_eq!(lf.fields().kappa().values()[5], 7.5);
        assert_eq!(lf.fields().beta().values()[0], 0.0);
        assert!(lf.grads.kappa.values().iter().all(|&v| v == 0.0));

        let mut lf = LearnableFields::new(fields);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.3,
            ..Default::default()
        };
        for _ in 0..2 {
            lf.grads.d.values_mut()[3] = 1.0;
            sgd_momentum_step(&mut lf, &cfg).unwrap();
        }
        assert!((lf.fields().d().values()[3] - (10.0 - 0.1 * 2.3)).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let poly = regular_polygon(Point2::new(24.0, 24.0), 12.0, 32).unwrap();
        let scene = Scene::from_polygons(48, 48, 0, vec![poly.clone()]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            evolution: EvolutionConfig {
                steps: 20,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut lf = LearnableFields::new(scene.fields.clone());
        let center = Point2::new(23.0, 25.0);
        let first = train_step(&mut lf, &poly, center, &cfg).unwrap();
        for _ in 0..3 {
            assert_eq!(train_step(&mut lf, &poly, center, &cfg).unwrap(), first);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let poly = regular_polygon(Point2::new(24.0, 24.0), 12.0, 32).unwrap();
        let scene = Scene::from_polygons(48, 48, 0, vec![poly]).unwrap();
        let cfg = TrainConfig {
            train_steps: 5,
            evolution: EvolutionConfig {
                steps: 20,
                ..Default::default()
            },
            ..Default::default()
        };
        let (a, ha) = train(std::slice::from_ref(&scene), &cfg).unwrap();
        let (b, hb) = train(std::slice::from_ref(&scene), &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        assert!(history_csv(&ha).starts_with("step,scene_id,loss\n0,0,"));
    }

    #[test]
    fn interior_sampling_respects_rho_min() {
        let poly = Polygon::rectangle(0.0, 0.0, 10.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let p = sample_interior_point(&mut rng, &poly, 1.5).unwrap();
            assert!(poly.boundary_distance(p) >= 1.5);
        }
        assert_eq!(
            sample_interior_point(&mut rng, &poly, 2.5),
            Err(LearningError::NoInteriorPoint(10_000))
        );
    }
}
