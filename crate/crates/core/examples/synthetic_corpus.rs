//! Generates the toy corpus, runs forward kinematics and foot-contact
//! detection on one clip, and round-trips it through the `.mmot` format.

use mmdm::motion::io::{read_motion, write_motion};
use mmdm::motion::{
    default_speed_threshold, detect_foot_contact, generate_synthetic_dataset, sequence_positions, GeneratorConfig,
};

pub struct Summary {
    pub clips: usize,
    pub contact_frames: usize,
    pub round_trip_exact: bool,
}

pub fn run_example() -> mmdm::Result<Summary> {
    let config = GeneratorConfig { samples_per_archetype: 3, ..Default::default() };
    let clips = generate_synthetic_dataset(&config, 7)?;
    let skeleton = config.skeleton();
    let walk = &clips[0];
    println!("{} clips; first: {:?} ({} frames)", clips.len(), walk.caption(), walk.len());

    let positions = sequence_positions(&skeleton, walk)?;
    let contacts = detect_foot_contact(&skeleton, &positions, walk.fps(), default_speed_threshold(walk.fps()))?;
    let contact_frames = contacts.contacts().iter().filter(|&&c| c == 1).count();
    println!("planted foot-frames: {contact_frames} of {}", contacts.contacts().len());

    let dir = tempfile::tempdir().map_err(|e| mmdm::Error::io("tempdir", e))?;
    let path = dir.path().join("walk.mmot");
    write_motion(&path, walk, &skeleton)?;
    let (back, back_skeleton) = read_motion(&path)?;
    let round_trip_exact = back == *walk && back_skeleton == skeleton;
    println!("round trip exact: {round_trip_exact}");
    Ok(Summary { clips: clips.len(), contact_frames, round_trip_exact })
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
