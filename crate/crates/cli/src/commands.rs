use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::anyhow;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use activeray::evolution::{evolve, multi_init_evolve, seed_contour, MultiInitConfig};
use activeray::io::write_atomic;
use activeray::learning::history_csv;
use activeray::metrics::{alignment_recall_polylines, AlignmentCurve, MATCH_THRESHOLD};
use activeray::scene::save_fields;
use activeray::{
    boundf, build_scene, evaluate_instances, iou, rasterize, train, weighted_coverage,
    EvolutionConfig, EvolutionError, FormatError, InstanceResult, LearningError, Mask,
    MetricReport, Point2, RayContour, Scene, TrainConfig,
};

use crate::args::{EvalArgs, EvolutionArgs, EvolveArgs, SynthArgs, TrainArgs};
use crate::render::render_svg;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Io(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Io(e) | Failure::Numeric(e) => e,
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Io(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<EvolutionError> for Failure {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::NonFinite { .. } | EvolutionError::SingularSystem => {
                Failure::Numeric(e.into())
            }
            EvolutionError::InvalidConfig(_) => Failure::Usage(e.into()),
            _ => Failure::Numeric(e.into()),
        }
    }
}

impl From<LearningError> for Failure {
    fn from(e: LearningError) -> Self {
        match e {
            LearningError::Evolution(inner) => inner.into(),
            LearningError::InvalidConfig(_) => Failure::Usage(e.into()),
            _ => Failure::Numeric(e.into()),
        }
    }
}

pub type Outcome = Result<(), Failure>;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: &'static str,
    pub duration_secs: f64,
}

impl RunManifest {
    fn new(command: &'static str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command,
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION"),
            duration_secs: 0.0,
        }
    }

    fn write(mut self, path: &Path, started: Instant) -> Outcome {
        self.duration_secs = started.elapsed().as_secs_f64();
        write_json(path, &self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Io(e.into()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn load_scene(dir: &Path) -> Result<Scene, Failure> {
    Scene::load(dir).map_err(|e| {
        Failure::Io(anyhow::Error::new(e).context(format!("loading scene {}", dir.display())))
    })
}

fn evolution_config(args: &EvolutionArgs) -> Result<EvolutionConfig, Failure> {
    let cfg = EvolutionConfig {
        dt: args.dt,
        steps: args.steps,
        rho_min: args.rho_min,
        ..Default::default()
    };
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    Ok(cfg)
}

pub fn synth(args: &SynthArgs) -> Outcome {
    let started = Instant::now();
    let mut manifest = RunManifest::new(
        "synth",
        serde_json::json!({
            "width": args.width, "height": args.height, "instances": args.instances,
            "shape": activeray::ShapeKind::from(args.shape), "count": args.count,
        }),
        Some(args.seed),
    );
    for i in 0..u64::from(args.count) {
        let scene = build_scene(
            args.seed.wrapping_add(i),
            args.width as usize,
            args.height as usize,
            args.instances as usize,
            args.shape.into(),
        )
        .map_err(|e| Failure::Usage(e.into()))?;
        let dir = args.out.join(format!("scene_{i:04}"));
        scene.save(&dir)?;
        manifest.outputs.push(dir);
    }
    manifest.write(&args.out.join("manifest.json"), started)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourRecord {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
}

impl From<&RayContour> for ContourRecord {
    fn from(c: &RayContour) -> Self {
        Self {
            center: [c.center().x, c.center().y],
            radii: c.radii().to_vec(),
        }
    }
}

impl ContourRecord {
    fn to_contour(&self) -> Result<RayContour, Failure> {
        RayContour::new(
            Point2::new(self.center[0], self.center[1]),
            self.radii.clone(),
        )
        .map_err(|e| Failure::Io(anyhow!("invalid contour in contours file: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceContours {
    pub instance: usize,
    pub initial: Vec<ContourRecord>,
    pub contours: Vec<ContourRecord>,
}

/// The `contours.json` written by `evolve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourFile {
    pub width: usize,
    pub height: usize,
    pub instances: Vec<InstanceContours>,
}

fn union_raster(contours: &[RayContour], width: usize, height: usize) -> Result<Mask, Failure> {
    let mut mask = Mask::new(width, height);
    for c in contours {
        let poly = c.to_polygon().map_err(|e| Failure::Numeric(e.into()))?;
        mask = mask.or(&rasterize(&poly, width, height));
    }
    Ok(mask)
}

pub fn evolve_cmd(args: &EvolveArgs) -> Outcome {
    let started = Instant::now();
    let scene = load_scene(&args.scene)?;
    let mut cfg = evolution_config(&args.evolution)?;
    cfg.solver = args.solver.into();
    cfg.convergence_eps = args.convergence_eps;
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    let limits = MultiInitConfig {
        rays: args.evolution.rays as usize,
        ..Default::default()
    };

    let masks = scene.instance_masks();
    let results: Vec<(Vec<RayContour>, Vec<RayContour>)> = masks
        .par_iter()
        .map(|mask| -> Result<_, EvolutionError> {
            if mask.is_empty() {
                return Ok((Vec::new(), Vec::new()));
            }
            if args.multi_init {
                let out = multi_init_evolve(mask, &scene.fields, &cfg, &limits)?;
                return Ok((out.initial, out.contours));
            }
            match seed_contour(mask, limits.rays, cfg.rho_min)? {
                Some(init) => {
                    let (out, _) = evolve(&init, &scene.fields, &cfg)?;
                    Ok((vec![init], vec![out]))
                }
                None => Ok((Vec::new(), Vec::new())),
            }
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(masks.len());
    let mut preds = Vec::with_capacity(masks.len());
    for (gt, (_, contours)) in masks.iter().zip(&results) {
        let pred = union_raster(contours, scene.width, scene.height)?;
        rows.push(InstanceResult {
            iou: iou(&pred, gt).map_err(|e| Failure::Numeric(e.into()))?,
            gt_area: gt.count(),
            boundf: boundf(&pred, gt).map_err(|e| Failure::Numeric(e.into()))?,
        });
        preds.push(pred);
    }
    let n = rows.len() as f64;
    let report = MetricReport {
        mean_iou: rows.iter().map(|r| r.iou).sum::<f64>() / n,
        mean_boundf: rows.iter().map(|r| r.boundf).sum::<f64>() / n,
        weighted_coverage: weighted_coverage(&masks, &preds)
            .map_err(|e| Failure::Numeric(e.into()))?,
        instances: rows,
    };

    let file = ContourFile {
        width: scene.width,
        height: scene.height,
        instances: results
            .iter()
            .enumerate()
            .map(|(instance, (initial, contours))| InstanceContours {
                instance,
                initial: initial.iter().map(ContourRecord::from).collect(),
                contours: contours.iter().map(ContourRecord::from).collect(),
            })
            .collect(),
    };
    let mut manifest = RunManifest::new(
        "evolve",
        serde_json::json!({
            "evolution": cfg, "rays": limits.rays, "multi_init": args.multi_init,
            "min_area": limits.min_area, "max_inits": limits.max_inits,
        }),
        Some(scene.seed),
    );
    manifest.inputs.push(args.scene.clone());

    let contours_path = args.out.join("contours.json");
    write_json(&contours_path, &file)?;
    manifest.outputs.push(contours_path);
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| args.out.join("metrics.csv"));
    write_atomic(&metrics_path, report.to_csv().as_bytes())?;
    manifest.outputs.push(metrics_path);
    if let Some(svg) = &args.render {
        let initial: Vec<RayContour> = results.iter().flat_map(|r| r.0.iter().cloned()).collect();
        let finals: Vec<RayContour> = results.iter().flat_map(|r| r.1.iter().cloned()).collect();
        let doc = render_svg(
            scene.width,
            scene.height,
            &scene.polygons,
            &initial,
            &finals,
        );
        write_atomic(svg, doc.as_bytes())?;
        manifest.outputs.push(svg.clone());
    }
    manifest.write(&args.out.join("manifest.json"), started)
}

pub fn train_cmd(args: &TrainArgs) -> Outcome {
    let started = Instant::now();
    let scene = load_scene(&args.scene)?;
    let config = TrainConfig {
        learning_rate: args.lr,
        momentum: args.momentum,
        train_steps: args.train_steps,
        evolution: evolution_config(&args.evolution)?,
        rays: args.evolution.rays as usize,
        seed: args.seed,
    };
    config.validate().map_err(|e| Failure::Usage(e.into()))?;
    let (mut trained, history) = train(std::slice::from_ref(&scene), &config)?;
    let fields = trained
        .pop()
        .expect("one scene in, one field set out")
        .into_fields();

    let mut manifest = RunManifest::new(
        "train",
        serde_json::to_value(&config).expect("config serializes"),
        Some(args.seed),
    );
    manifest.inputs.push(args.scene.clone());
    save_fields(&fields, &args.out)?;
    for name in ["d.arf", "beta.arf", "kappa.arf"] {
        manifest.outputs.push(args.out.join(name));
    }
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| args.out.join("history.csv"));
    write_atomic(&history_path, history_csv(&history).as_bytes())?;
    manifest.outputs.push(history_path);
    manifest.write(&args.out.join("manifest.json"), started)
}

/// Instance masks and boundary polylines of a prediction directory.
fn load_prediction(
    dir: &Path,
    width: usize,
    height: usize,
) -> Result<(Vec<Mask>, Vec<Vec<Point2>>), Failure> {
    let contours_path = dir.join("contours.json");
    if contours_path.exists() {
        let file: ContourFile = serde_json::from_slice(&std::fs::read(&contours_path)?)
            .map_err(|e| Failure::Io(e.into()))?;
        if (file.width, file.height) != (width, height) {
            return Err(Failure::Io(anyhow!(
                "prediction is {}x{}, ground truth is {width}x{height}",
                file.width,
                file.height
            )));
        }
        let mut masks = Vec::new();
        let mut lines = Vec::new();
        for inst in &file.instances {
            let contours = inst
                .contours
                .iter()
                .map(ContourRecord::to_contour)
                .collect::<Result<Vec<_>, _>>()?;
            if contours.is_empty() {
                continue;
            }
            masks.push(union_raster(&contours, width, height)?);
            lines.extend(contours.iter().map(RayContour::points));
        }
        return Ok((masks, lines));
    }
    let scene = load_scene(dir)?;
    if (scene.width, scene.height) != (width, height) {
        return Err(Failure::Io(anyhow!(
            "prediction and ground truth sizes differ"
        )));
    }
    let lines = scene
        .polygons
        .iter()
        .map(|p| p.vertices().to_vec())
        .collect();
    Ok((scene.instance_masks(), lines))
}

pub fn eval_cmd(args: &EvalArgs) -> Outcome {
    let started = Instant::now();
    let gt = load_scene(&args.gt)?;
    let (pred_masks, pred_lines) = load_prediction(&args.pred, gt.width, gt.height)?;
    let report = evaluate_instances(&gt.instance_masks(), &pred_masks)
        .map_err(|e| Failure::Numeric(e.into()))?;
    let gt_lines: Vec<Vec<Point2>> = gt.polygons.iter().map(|p| p.vertices().to_vec()).collect();
    let curve = if pred_lines.is_empty() {
        AlignmentCurve {
            points: Vec::new(),
            matched_errors: Vec::new(),
            gt_samples: 0,
        }
    } else {
        alignment_recall_polylines(&pred_lines, &gt_lines, MATCH_THRESHOLD)
            .map_err(|e| Failure::Numeric(e.into()))?
    };

    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({ "match_threshold": MATCH_THRESHOLD }),
        None,
    );
    manifest.inputs = vec![args.pred.clone(), args.gt.clone()];
    write_atomic(&args.out, report.to_json().as_bytes())?;
    manifest.outputs.push(args.out.clone());
    if let Some(path) = &args.curve {
        write_atomic(path, curve.to_csv().as_bytes())?;
        manifest.outputs.push(path.clone());
    }
    let mut name = args.out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    manifest.write(&args.out.with_file_name(name), started)
}
