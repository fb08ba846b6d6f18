//! Synthetic data: correlated video/EEG pairs for alignment training and
//! occupancy-grid driving scenes with expert trajectories for planning.

mod pairs;
mod scenes;

pub use pairs::{
    gen_pairs, read_video, write_video, PairGenConfig, PairGenerator, PairedSample, VideoClip,
};
pub use scenes::{
    gen_scenes, render_camera, Command, Difficulty, Grid, Scene, EGO_SPEED_MAX, HISTORY_POSES,
    SCENE_WAYPOINTS,
};

#[cfg(test)]
mod tests;
