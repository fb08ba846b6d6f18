//! Open-loop planning metrics (dual-convention L2 displacement and
//! grid-based collision rate), report emission, and the ablation harness.

use serde::{Deserialize, Serialize};

use crate::align::VideoEncoder;
use crate::error::{Error, Result};
use crate::fusion::{
    cognition_feature, stage2_train, Framework, FusionCfg, Planner, Stage2Config,
};
use crate::synth::{gen_scenes, Difficulty, Scene};

pub const REPORT_FORMAT_VERSION: u32 = 1;
/// ego vehicle footprint, meters (length along heading, width across)
pub const EGO_LENGTH: f64 = 4.0;
pub const EGO_WIDTH: f64 = 1.8;
/// waypoint indices (1-based) reached at the 1/2/3 s horizons at 2 Hz
const HORIZON_STEPS: [usize; 3] = [2, 4, 6];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L2Convention {
    /// mean displacement over all steps up to the horizon
    Stp3,
    /// displacement at the horizon step only
    Uniad,
}

/// Per-horizon displacement errors plus their average.
pub fn l2_metric(
    pred: &[[f64; 2]],
    gt: &[[f64; 2]],
    convention: L2Convention,
) -> Result<([f64; 3], f64)> {
    if pred.len() != 6 || gt.len() != 6 {
        return Err(Error::Input(format!(
            "expected 6 waypoints in both trajectories, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let step_err: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
        .collect();
    let mut horizons = [0.0; 3];
    for (h, &steps) in HORIZON_STEPS.iter().enumerate() {
        horizons[h] = match convention {
            L2Convention::Uniad => step_err[steps - 1],
            L2Convention::Stp3 => step_err[..steps].iter().sum::<f64>() / steps as f64,
        };
    }
    let avg = horizons.iter().sum::<f64>() / 3.0;
    Ok((horizons, avg))
}

fn waypoint_yaws(pred: &[[f64; 2]]) -> Vec<f64> {
    let mut yaws = Vec::with_capacity(pred.len());
    let mut prev = [0.0, 0.0];
    let mut last_yaw = 0.0;
    for wp in pred {
        let (dx, dy) = (wp[0] - prev[0], wp[1] - prev[1]);
        if dx.hypot(dy) > 1e-9 {
            last_yaw = dy.atan2(dx);
        }
        yaws.push(last_yaw);
        prev = *wp;
    }
    yaws
}

fn box_hits_grid(scene: &Scene, center: [f64; 2], yaw: f64, length: f64, width: f64) -> bool {
    let grid = &scene.grid;
    let (cos, sin) = (yaw.cos(), yaw.sin());
    let reach = 0.5 * length.hypot(width);
    let min_col = ((center[0] - reach - grid.origin.0) / grid.resolution).floor().max(0.0) as usize;
    let min_row = ((center[1] - reach - grid.origin.1) / grid.resolution).floor().max(0.0) as usize;
    let max_col =
        (((center[0] + reach - grid.origin.0) / grid.resolution).ceil() as i64).min(grid.width as i64 - 1);
    let max_row =
        (((center[1] + reach - grid.origin.1) / grid.resolution).ceil() as i64).min(grid.height as i64 - 1);
    if max_col < 0 || max_row < 0 {
        return false;
    }
    for row in min_row..=max_row as usize {
        for col in min_col..=max_col as usize {
            if !grid.get(col, row) {
                continue;
            }
            let (cx, cy) = grid.cell_center(col, row);
            // cell center in the box frame
            let (dx, dy) = (cx - center[0], cy - center[1]);
            let along = dx * cos + dy * sin;
            let across = -dx * sin + dy * cos;
            if along.abs() <= 0.5 * length && across.abs() <= 0.5 * width {
                return true;
            }
        }
    }
    false
}

/// Per-horizon collision flags: a horizon is flagged when the oriented ego
/// box at any waypoint up to it covers an occupied cell center. Flags are
/// monotone in horizon by construction.
pub fn collision_metric(
    pred: &[[f64; 2]],
    scene: &Scene,
    footprint: (f64, f64),
) -> Result<[bool; 3]> {
    let (length, width) = footprint;
    if length <= 0.0 || width <= 0.0 {
        return Err(Error::Input(format!("footprint {length}x{width} must be positive")));
    }
    if pred.len() != 6 {
        return Err(Error::Input(format!("expected 6 waypoints, got {}", pred.len())));
    }
    let yaws = waypoint_yaws(pred);
    let mut hit_any = false;
    let mut flags = [false; 3];
    let mut step = 0;
    for (h, &steps) in HORIZON_STEPS.iter().enumerate() {
        while step < steps {
            if !hit_any && box_hits_grid(scene, pred[step], yaws[step], length, width) {
                hit_any = true;
            }
            step += 1;
        }
        flags[h] = hit_any;
    }
    Ok(flags)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SampleMetrics {
    pub id: String,
    pub stp3: [f64; 3],
    pub uniad: [f64; 3],
    pub collision: [bool; 3],
}

/// Aggregated evaluation output. Wall-clock timing is deliberately kept out
/// of this structure so identical runs serialize to identical bytes.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub format_version: u32,
    pub framework: String,
    pub config: FusionCfg,
    pub seed: u64,
    pub n_samples: usize,
    pub stp3_l2: [f64; 3],
    pub stp3_avg: f64,
    pub uniad_l2: [f64; 3],
    pub uniad_avg: f64,
    pub collision_rate: [f64; 3],
    pub collision_avg: f64,
    pub per_sample: Vec<SampleMetrics>,
}

/// Evaluate a planner over a scene set. Deterministic: scenes are visited
/// in order and aggregation uses fixed-order sums.
pub fn run_eval(
    planner: &Planner,
    encoder: &VideoEncoder,
    scenes: &[Scene],
    seed: u64,
) -> Result<MetricReport> {
    if scenes.is_empty() {
        return Err(Error::Input("no scenes to evaluate".into()));
    }
    let mut per_sample = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let v_t = cognition_feature(encoder, scene)?;
        let pred = planner.forward(scene, &v_t, None)?;
        let data = pred.data();
        let pred: Vec<[f64; 2]> = (0..6).map(|k| [data[2 * k], data[2 * k + 1]]).collect();
        let (stp3, _) = l2_metric(&pred, &scene.expert_traj, L2Convention::Stp3)?;
        let (uniad, _) = l2_metric(&pred, &scene.expert_traj, L2Convention::Uniad)?;
        let collision = collision_metric(&pred, scene, (EGO_LENGTH, EGO_WIDTH))?;
        per_sample.push(SampleMetrics { id: scene.id.clone(), stp3, uniad, collision });
    }
    let n = per_sample.len() as f64;
    let mut stp3_l2 = [0.0; 3];
    let mut uniad_l2 = [0.0; 3];
    let mut collision_rate = [0.0; 3];
    for s in &per_sample {
        for h in 0..3 {
            stp3_l2[h] += s.stp3[h] / n;
            uniad_l2[h] += s.uniad[h] / n;
            collision_rate[h] += s.collision[h] as u8 as f64 / n;
        }
    }
    Ok(MetricReport {
        format_version: REPORT_FORMAT_VERSION,
        framework: planner.framework.to_string(),
        config: planner.cfg.clone(),
        seed,
        n_samples: per_sample.len(),
        stp3_l2,
        stp3_avg: stp3_l2.iter().sum::<f64>() / 3.0,
        uniad_l2,
        uniad_avg: uniad_l2.iter().sum::<f64>() / 3.0,
        collision_rate,
        collision_avg: collision_rate.iter().sum::<f64>() / 3.0,
        per_sample,
    })
}

/// Aligned text table with the dual L2 column groups plus collision rates.
pub fn format_table(reports: &[&MetricReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} | {:>7} {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} {:>7}\n",
        "method", "st 1s", "st 2s", "st 3s", "st avg", "un 1s", "un 2s", "un 3s", "un avg",
        "col 1s", "col 2s", "col 3s", "col avg"
    ));
    out.push_str(&"-".repeat(138));
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{:<10} | {:>7.3} {:>7.3} {:>7.3} {:>7.3} | {:>7.3} {:>7.3} {:>7.3} {:>7.3} | {:>6.2}% {:>6.2}% {:>6.2}% {:>6.2}%\n",
            r.framework,
            r.stp3_l2[0], r.stp3_l2[1], r.stp3_l2[2], r.stp3_avg,
            r.uniad_l2[0], r.uniad_l2[1], r.uniad_l2[2], r.uniad_avg,
            100.0 * r.collision_rate[0], 100.0 * r.collision_rate[1],
            100.0 * r.collision_rate[2], 100.0 * r.collision_avg,
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    Framework,
    Freeze,
    Ns,
    Layers,
    Heads,
    Dropout,
    DataSource,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "framework" => Ok(AblationAxis::Framework),
            "freeze" => Ok(AblationAxis::Freeze),
            "ns" => Ok(AblationAxis::Ns),
            "layers" => Ok(AblationAxis::Layers),
            "heads" => Ok(AblationAxis::Heads),
            "dropout" => Ok(AblationAxis::Dropout),
            "data_source" => Ok(AblationAxis::DataSource),
            other => Err(Error::Usage(format!(
                "unknown ablation axis {other:?} (expected framework, freeze, ns, layers, heads, dropout, or data_source)"
            ))),
        }
    }
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AblationAxis::Framework => "framework",
            AblationAxis::Freeze => "freeze",
            AblationAxis::Ns => "ns",
            AblationAxis::Layers => "layers",
            AblationAxis::Heads => "heads",
            AblationAxis::Dropout => "dropout",
            AblationAxis::DataSource => "data_source",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ArmResult {
    pub label: String,
    pub report: Option<MetricReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AblationGrid {
    pub axis: String,
    pub seed: u64,
    pub epochs: usize,
    pub arms: Vec<ArmResult>,
}

fn parse_count(axis: AblationAxis, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Usage(format!("axis {axis} expects an integer value, got {v:?}")))
}

/// Train one arm per value under a shared budget and tabulate. A failing
/// arm is reported with its error instead of aborting the grid.
pub fn run_ablation(
    axis: AblationAxis,
    values: &[String],
    scenes: &[Scene],
    encoder: &VideoEncoder,
    base: &Stage2Config,
) -> Result<AblationGrid> {
    if values.len() < 2 {
        return Err(Error::Input(format!(
            "ablation needs at least 2 configurations, got {}",
            values.len()
        )));
    }
    let mut arms = Vec::with_capacity(values.len());
    for value in values {
        let arm = run_arm(axis, value, scenes, encoder, base);
        arms.push(match arm {
            Ok(report) => ArmResult { label: value.clone(), report: Some(report), error: None },
            Err(e) => ArmResult { label: value.clone(), report: None, error: Some(e.to_string()) },
        });
    }
    Ok(AblationGrid { axis: axis.to_string(), seed: base.seed, epochs: base.epochs, arms })
}

fn run_arm(
    axis: AblationAxis,
    value: &str,
    scenes: &[Scene],
    encoder: &VideoEncoder,
    base: &Stage2Config,
) -> Result<MetricReport> {
    let mut cfg = base.clone();
    let mut arm_scenes: Option<Vec<Scene>> = None;
    match axis {
        AblationAxis::Framework => {
            let fw: Framework = value.parse()?;
            cfg.framework = fw;
            cfg.fusion = FusionCfg {
                dropout: base.fusion.dropout,
                d: base.fusion.d,
                ..FusionCfg::for_framework(fw, base.fusion.d)
            };
        }
        AblationAxis::Freeze => match value {
            "frozen" => cfg.unfreeze_encoder = false,
            "unfrozen" => cfg.unfreeze_encoder = true,
            other => {
                return Err(Error::Usage(format!(
                    "freeze axis expects frozen or unfrozen, got {other:?}"
                )))
            }
        },
        AblationAxis::Ns => cfg.fusion.n_s = parse_count(axis, value)?,
        AblationAxis::Layers => cfg.fusion.layers = parse_count(axis, value)?,
        AblationAxis::Heads => cfg.fusion.heads = parse_count(axis, value)?,
        AblationAxis::Dropout => {
            cfg.fusion.dropout = value
                .parse()
                .map_err(|_| Error::Usage(format!("axis dropout expects a number, got {value:?}")))?
        }
        AblationAxis::DataSource => {
            let difficulty: Difficulty = value.parse()?;
            arm_scenes = Some(gen_scenes(scenes.len(), cfg.seed, difficulty)?);
        }
    }
    let scenes_ref = arm_scenes.as_deref().unwrap_or(scenes);
    if cfg.unfreeze_encoder {
        // unfrozen arms mutate the encoder; train a private copy so other
        // arms keep seeing the original Stage-1 weights
        let before: Vec<Vec<f64>> = encoder.params().iter().map(|p| p.tensor.data()).collect();
        let own = clone_encoder(encoder);
        let result = stage2_train(scenes_ref, &own, &cfg)?;
        let after: Vec<Vec<f64>> = own.params().iter().map(|p| p.tensor.data()).collect();
        if before == after {
            return Err(Error::Training(
                "unfrozen arm left the video encoder unchanged".into(),
            ));
        }
        return run_eval(&result.planner, &own, scenes_ref, cfg.seed);
    }
    let result = stage2_train(scenes_ref, encoder, &cfg)?;
    run_eval(&result.planner, encoder, scenes_ref, cfg.seed)
}

fn clone_encoder(encoder: &VideoEncoder) -> VideoEncoder {
    let copy = VideoEncoder::new(0, encoder.d, encoder.dropout);
    for (dst, src) in copy.params().iter().zip(encoder.params()) {
        dst.tensor.set_data(src.tensor.data());
    }
    copy
}

pub fn format_ablation(grid: &AblationGrid) -> String {
    let mut out = format!("axis: {} (seed {}, {} epochs)\n", grid.axis, grid.seed, grid.epochs);
    let reports: Vec<&MetricReport> =
        grid.arms.iter().filter_map(|a| a.report.as_ref()).collect();
    if !reports.is_empty() {
        out.push_str(&format_table(&reports));
    }
    for arm in &grid.arms {
        if let Some(err) = &arm.error {
            out.push_str(&format!("{:<10} | FAILED: {err}\n", arm.label));
        }
    }
    out
}

#[cfg(test)]
mod tests;
