use super::*;

fn cfg(n: usize, noise: f64, seed: u64) -> PairGenConfig {
    PairGenConfig::new(n, 8, noise, seed)
}

#[test]
fn pairs_same_seed_identical() {
    let a = gen_pairs(&cfg(6, 0.1, 42)).unwrap();
    let b = gen_pairs(&cfg(6, 0.1, 42)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.latent, y.latent);
        assert_eq!(x.video.data, y.video.data);
        assert_eq!(x.eeg.samples, y.eeg.samples);
    }
}

#[test]
fn pairs_noise_zero_matches_clean_readout() {
    let c = cfg(4, 0.0, 7);
    let g = PairGenerator::new(c.clone());
    for s in gen_pairs(&c).unwrap() {
        assert_eq!(s.eeg.samples, g.clean_eeg(&s.latent));
    }
}

#[test]
fn pairs_rejects_degenerate_configs() {
    assert!(gen_pairs(&cfg(1, 0.0, 0)).is_err());
    assert!(gen_pairs(&PairGenConfig::new(4, 0, 0.0, 0)).is_err());
}

#[test]
fn pairs_shapes_and_ranges() {
    let samples = gen_pairs(&cfg(3, 0.2, 1)).unwrap();
    for s in &samples {
        assert_eq!((s.video.frames, s.video.height, s.video.width), (4, 32, 32));
        assert_eq!(s.video.data.len(), s.video.numel());
        assert!(s.video.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s.eeg.channels, 8);
        assert_eq!(s.eeg.sample_rate_hz, 1000.0);
        assert_eq!(s.eeg.samples_per_channel(), 2000);
        assert!(!s.eeg.processed);
    }
}

/// With mild noise, matching each sample's EEG back to the latent that best
/// explains it recovers the true pairing almost always.
#[test]
fn pairs_noisy_eeg_recovers_latent_pairing() {
    let c = cfg(64, 0.1, 3);
    let g = PairGenerator::new(c.clone());
    let samples = gen_pairs(&c).unwrap();
    let clean: Vec<Vec<f64>> = samples.iter().map(|s| g.clean_eeg(&s.latent)).collect();
    let mut hits = 0;
    for (i, s) in samples.iter().enumerate() {
        let best = (0..samples.len())
            .min_by(|&a, &b| {
                let da: f64 = s.eeg.samples.iter().zip(&clean[a]).map(|(x, y)| (x - y).powi(2)).sum();
                let db: f64 = s.eeg.samples.iter().zip(&clean[b]).map(|(x, y)| (x - y).powi(2)).sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        if best == i {
            hits += 1;
        }
    }
    assert!(hits as f64 / samples.len() as f64 >= 0.95, "recovered {hits}/64 pairs");
}

#[test]
fn video_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("video.bin");
    let clip = gen_pairs(&cfg(2, 0.0, 5)).unwrap().remove(0).video;
    write_video(&path, &clip).unwrap();
    let back = read_video(&path).unwrap();
    assert_eq!(back.data, clip.data);
    assert_eq!((back.frames, back.height, back.width, back.channels), (4, 32, 32, 1));
}

#[test]
fn scenes_straight_command_is_straight_line() {
    // find a go-straight scene and check its waypoints sit on the heading axis
    let scenes = gen_scenes(20, 11, Difficulty::Easy).unwrap();
    let straight = scenes
        .iter()
        .find(|s| s.command == Command::GoStraight)
        .expect("20 scenes should include a go-straight one");
    for (k, wp) in straight.expert_traj.iter().enumerate() {
        assert!(wp[1].abs() < 1e-9, "lateral drift {}", wp[1]);
        let expect_x = straight.speed * 0.5 * (k as f64 + 1.0);
        assert!((wp[0] - expect_x).abs() < 1e-9);
    }
}

#[test]
fn scenes_expert_paths_avoid_obstacles() {
    for difficulty in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
        let scenes = gen_scenes(40, 23, difficulty).unwrap();
        for s in &scenes {
            assert_eq!(s.expert_traj.len(), SCENE_WAYPOINTS);
            for wp in &s.expert_traj {
                assert!(!s.grid.occupied_at(wp[0], wp[1]), "{}: waypoint in obstacle", s.id);
            }
        }
    }
}

#[test]
fn scenes_waypoint_steps_bounded_by_speed_limit() {
    let scenes = gen_scenes(50, 9, Difficulty::Hard).unwrap();
    let max_step = EGO_SPEED_MAX / 2.0;
    for s in &scenes {
        let mut prev = [0.0, 0.0];
        for wp in &s.expert_traj {
            let step = ((wp[0] - prev[0]).powi(2) + (wp[1] - prev[1]).powi(2)).sqrt();
            assert!(step <= max_step + 1e-9, "{}: step {step} exceeds {max_step}", s.id);
            prev = *wp;
        }
    }
}

#[test]
fn scenes_history_is_kinematically_consistent() {
    let scenes = gen_scenes(10, 2, Difficulty::Medium).unwrap();
    for s in &scenes {
        assert_eq!(s.ego_history.len(), HISTORY_POSES);
        assert_eq!(*s.ego_history.last().unwrap(), [0.0, 0.0, 0.0]);
        for pair in s.ego_history.windows(2) {
            let dx = pair[1][0] - pair[0][0];
            assert!(dx > 0.0 && dx / 0.5 <= EGO_SPEED_MAX);
        }
    }
}

#[test]
fn scenes_serialize_deterministically() {
    let a = serde_json::to_vec(&gen_scenes(100, 77, Difficulty::Medium).unwrap()).unwrap();
    let b = serde_json::to_vec(&gen_scenes(100, 77, Difficulty::Medium).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scene_json_round_trip_preserves_grid() {
    let scenes = gen_scenes(3, 5, Difficulty::Hard).unwrap();
    for s in &scenes {
        let json = serde_json::to_string(s).unwrap();
        let back: Scene = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, s);
        assert!(json.contains("rle"));
    }
}

#[test]
fn render_camera_is_deterministic_and_bounded() {
    let scene = &gen_scenes(1, 13, Difficulty::Medium).unwrap()[0];
    let a = render_camera(scene);
    let b = render_camera(scene);
    assert_eq!(a.data, b.data);
    assert_eq!((a.frames, a.height, a.width, a.channels), (4, 32, 32, 1));
    assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
    // frames must differ so temporal pooling has signal
    let f0 = &a.data[..32 * 32];
    let f3 = &a.data[3 * 32 * 32..];
    assert!(f0 != f3);
}

#[test]
fn render_camera_sees_obstacles() {
    let scene = &gen_scenes(1, 31, Difficulty::Hard).unwrap()[0];
    let mut empty = scene.clone();
    empty.grid = Grid::empty();
    assert_ne!(render_camera(scene).data, render_camera(&empty).data);
}
