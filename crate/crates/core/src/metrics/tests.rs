use super::*;
use crate::fusion::Planner;
use crate::synth::{gen_scenes, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn traj(points: [[f64; 2]; 6]) -> Vec<[f64; 2]> {
    points.to_vec()
}

fn straight(step: f64) -> Vec<[f64; 2]> {
    (1..=6).map(|k| [step * k as f64, 0.0]).collect()
}

#[test]
fn l2_zero_for_identical_trajectories() {
    let t = straight(2.0);
    for conv in [L2Convention::Stp3, L2Convention::Uniad] {
        let (h, avg) = l2_metric(&t, &t, conv).unwrap();
        assert_eq!(h, [0.0, 0.0, 0.0]);
        assert_eq!(avg, 0.0);
    }
}

#[test]
fn l2_constant_offset_is_constant_under_both_conventions() {
    let gt = straight(2.0);
    let pred: Vec<[f64; 2]> = gt.iter().map(|p| [p[0], p[1] + 0.5]).collect();
    for conv in [L2Convention::Stp3, L2Convention::Uniad] {
        let (h, avg) = l2_metric(&pred, &gt, conv).unwrap();
        for v in h {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert!((avg - 0.5).abs() < 1e-12);
    }
}

#[test]
fn l2_matches_independent_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let pred: Vec<[f64; 2]> =
            (0..6).map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect();
        let gt: Vec<[f64; 2]> =
            (0..6).map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect();
        let per_step: Vec<f64> = (0..6)
            .map(|k| {
                let dx = pred[k][0] - gt[k][0];
                let dy = pred[k][1] - gt[k][1];
                (dx * dx + dy * dy).sqrt()
            })
            .collect();
        let (stp3, _) = l2_metric(&pred, &gt, L2Convention::Stp3).unwrap();
        let (uniad, _) = l2_metric(&pred, &gt, L2Convention::Uniad).unwrap();
        for (h, steps) in [(0usize, 2usize), (1, 4), (2, 6)] {
            let mut acc = 0.0;
            for s in per_step.iter().take(steps) {
                acc += s;
            }
            assert!((stp3[h] - acc / steps as f64).abs() < 1e-12);
            assert!((uniad[h] - per_step[steps - 1]).abs() < 1e-12);
        }
        // prefix mean stays inside the per-step error range
        let lo = per_step.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = per_step.iter().cloned().fold(0.0, f64::max);
        assert!(stp3[2] >= lo - 1e-12 && stp3[2] <= hi + 1e-12);
    }
}

#[test]
fn l2_rejects_length_mismatch() {
    let t = straight(1.0);
    assert!(l2_metric(&t[..5], &t, L2Convention::Stp3).is_err());
}

#[test]
fn collision_empty_grid_is_clean() {
    let mut scene = gen_scenes(1, 1, crate::synth::Difficulty::Easy).unwrap().remove(0);
    scene.grid = Grid::empty();
    let flags = collision_metric(&straight(2.0), &scene, (EGO_LENGTH, EGO_WIDTH)).unwrap();
    assert_eq!(flags, [false, false, false]);
}

#[test]
fn collision_occupied_waypoint_flags_covering_horizons() {
    let mut scene = gen_scenes(1, 1, crate::synth::Difficulty::Easy).unwrap().remove(0);
    scene.grid = Grid::empty();
    let pred = traj([[2.0, 0.0], [4.0, 0.0], [6.0, 0.0], [8.0, 0.0], [10.0, 0.0], [12.0, 0.0]]);
    // occupy the cell under waypoint 3 (first step of the 2 s horizon)
    let (col, row) = scene.grid.cell_of(6.0, 0.0).unwrap();
    scene.grid.set(col, row, true);
    let flags = collision_metric(&pred, &scene, (EGO_LENGTH, EGO_WIDTH)).unwrap();
    assert_eq!(flags, [false, true, true]);
}

#[test]
fn collision_rejects_bad_footprint() {
    let scene = gen_scenes(1, 1, crate::synth::Difficulty::Easy).unwrap().remove(0);
    assert!(collision_metric(&straight(1.0), &scene, (0.0, 1.8)).is_err());
}

/// Full-grid rasterization oracle: test every cell of the grid against the
/// oriented box at every step in the horizon.
fn brute_force_flags(pred: &[[f64; 2]], scene: &Scene) -> [bool; 3] {
    let yaws = super::waypoint_yaws(pred);
    let grid = &scene.grid;
    let hit_at = |step: usize| -> bool {
        let (cx0, cy0) = (pred[step][0], pred[step][1]);
        let (cos, sin) = (yaws[step].cos(), yaws[step].sin());
        for row in 0..grid.height {
            for col in 0..grid.width {
                if !grid.get(col, row) {
                    continue;
                }
                let (cx, cy) = grid.cell_center(col, row);
                let (dx, dy) = (cx - cx0, cy - cy0);
                let along = dx * cos + dy * sin;
                let across = -dx * sin + dy * cos;
                if along.abs() <= 0.5 * EGO_LENGTH && across.abs() <= 0.5 * EGO_WIDTH {
                    return true;
                }
            }
        }
        false
    };
    let mut flags = [false; 3];
    for (h, steps) in [(0usize, 2usize), (1, 4), (2, 6)] {
        flags[h] = (0..steps).any(hit_at);
    }
    flags
}

#[test]
fn collision_matches_rasterization_oracle_and_is_monotone() {
    let scenes = gen_scenes(100, 13, crate::synth::Difficulty::Hard).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for scene in &scenes {
        let pred: Vec<[f64; 2]> = (0..6)
            .map(|_| [rng.gen_range(-8.0..24.0), rng.gen_range(-16.0..16.0)])
            .collect();
        let flags = collision_metric(&pred, scene, (EGO_LENGTH, EGO_WIDTH)).unwrap();
        assert_eq!(flags, brute_force_flags(&pred, scene), "scene {}", scene.id);
        assert!(flags[0] <= flags[1] && flags[1] <= flags[2]);
    }
}

fn tiny_eval_setup() -> (Vec<Scene>, VideoEncoder) {
    let scenes = gen_scenes(12, 7, crate::synth::Difficulty::Medium).unwrap();
    (scenes, VideoEncoder::new(42, 16, 0.0))
}

fn tiny_planner(framework: Framework) -> Planner {
    let cfg = FusionCfg { dropout: 0.0, ..FusionCfg::for_framework(framework, 16) };
    Planner::new(5, framework, cfg)
}

#[test]
fn run_eval_is_deterministic_and_averages_check_out() {
    let (scenes, encoder) = tiny_eval_setup();
    let planner = tiny_planner(Framework::F2);
    let a = run_eval(&planner, &encoder, &scenes, 7).unwrap();
    let b = run_eval(&planner, &encoder, &scenes, 7).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    assert!((a.stp3_avg - a.stp3_l2.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!((a.uniad_avg - a.uniad_l2.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!((a.collision_avg - a.collision_rate.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert_eq!(a.n_samples, scenes.len());
    assert!(a.collision_rate.iter().all(|r| (0.0..=1.0).contains(r)));
}

#[test]
fn run_eval_config_echo_distinguishes_frameworks() {
    let (scenes, encoder) = tiny_eval_setup();
    let base = run_eval(&tiny_planner(Framework::Baseline), &encoder, &scenes, 1).unwrap();
    let f3 = run_eval(&tiny_planner(Framework::F3), &encoder, &scenes, 1).unwrap();
    assert_ne!(base.framework, f3.framework);
    assert_ne!(base.config.layers, f3.config.layers);
    let table = format_table(&[&base, &f3]);
    assert!(table.contains("baseline") && table.contains("f3"));
}

fn tiny_stage2(framework: Framework) -> Stage2Config {
    let mut cfg = Stage2Config::new(framework, 16, 3);
    cfg.fusion.dropout = 0.0;
    cfg.epochs = 1;
    cfg
}

#[test]
fn ablation_framework_axis_runs_and_is_deterministic() {
    let (scenes, encoder) = tiny_eval_setup();
    let values: Vec<String> =
        ["baseline", "f1", "f2", "f3"].iter().map(|s| s.to_string()).collect();
    let base = tiny_stage2(Framework::Baseline);
    let a = run_ablation(AblationAxis::Framework, &values, &scenes, &encoder, &base).unwrap();
    let b = run_ablation(AblationAxis::Framework, &values, &scenes, &encoder, &base).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.arms.len(), 4);
    assert!(a.arms.iter().all(|arm| arm.report.is_some()));
    let text = format_ablation(&a);
    assert!(text.contains("axis: framework"));
}

#[test]
fn ablation_freeze_axis_moves_encoder_when_unfrozen() {
    let (scenes, encoder) = tiny_eval_setup();
    let snapshot: Vec<Vec<f64>> = encoder.params().iter().map(|p| p.tensor.data()).collect();
    let values: Vec<String> = ["frozen", "unfrozen"].iter().map(|s| s.to_string()).collect();
    let base = tiny_stage2(Framework::F2);
    let grid = run_ablation(AblationAxis::Freeze, &values, &scenes, &encoder, &base).unwrap();
    assert!(grid.arms.iter().all(|arm| arm.report.is_some()), "{grid:?}");
    // the shared encoder itself must stay untouched by both arms
    let after: Vec<Vec<f64>> = encoder.params().iter().map(|p| p.tensor.data()).collect();
    assert_eq!(snapshot, after);
}

#[test]
fn ablation_marks_bad_arm_failed_without_aborting() {
    let (scenes, encoder) = tiny_eval_setup();
    let values: Vec<String> = ["8", "notanumber"].iter().map(|s| s.to_string()).collect();
    let base = tiny_stage2(Framework::F1);
    let grid = run_ablation(AblationAxis::Ns, &values, &scenes, &encoder, &base).unwrap();
    assert!(grid.arms[0].report.is_some());
    assert!(grid.arms[1].report.is_none());
    assert!(grid.arms[1].error.is_some());
    assert!(format_ablation(&grid).contains("FAILED"));
}

#[test]
fn ablation_requires_two_arms_and_known_axis() {
    let (scenes, encoder) = tiny_eval_setup();
    let base = tiny_stage2(Framework::Baseline);
    let one = vec!["baseline".to_string()];
    assert!(run_ablation(AblationAxis::Framework, &one, &scenes, &encoder, &base).is_err());
    assert!("bogus".parse::<AblationAxis>().is_err());
}
