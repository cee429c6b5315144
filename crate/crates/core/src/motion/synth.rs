//! Procedural motion archetypes with template captions.
//!
//! Motions are authored as local joint rotations plus a root translation on
//! the toy rig, so both representation modes come out of the same curves.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward_kinematics, MotionSequence, RepresentationMode, Skeleton};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Archetype {
    Walk,
    WaveLeftArm,
    WaveRightArm,
    KickRightLeg,
    Crouch,
    Jump,
}

impl Archetype {
    pub const ALL: [Archetype; 6] = [
        Archetype::Walk,
        Archetype::WaveLeftArm,
        Archetype::WaveRightArm,
        Archetype::KickRightLeg,
        Archetype::Crouch,
        Archetype::Jump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Walk => "walk",
            Archetype::WaveLeftArm => "wave-left-arm",
            Archetype::WaveRightArm => "wave-right-arm",
            Archetype::KickRightLeg => "kick-right-leg",
            Archetype::Crouch => "crouch",
            Archetype::Jump => "jump",
        }
    }

    /// Verb phrases; each one belongs to exactly one archetype.
    pub fn phrases(self) -> &'static [&'static str] {
        match self {
            Archetype::Walk => &["walks forward", "strolls ahead", "is walking straight"],
            Archetype::WaveLeftArm => &["waves the left arm", "raises the left hand and waves", "waves with the left hand"],
            Archetype::WaveRightArm => &["waves the right arm", "raises the right hand and waves", "waves with the right hand"],
            Archetype::KickRightLeg => &["kicks with the right leg", "kicks the right foot forward", "does a kick with the right leg"],
            Archetype::Crouch => &["crouches down", "squats down low", "bends the knees and crouches"],
            Archetype::Jump => &["jumps in place", "hops up", "leaps upward on the spot"],
        }
    }

    fn base_frequency(self) -> f64 {
        match self {
            Archetype::Walk => 1.0,
            Archetype::WaveLeftArm | Archetype::WaveRightArm => 1.5,
            Archetype::KickRightLeg => 0.8,
            Archetype::Crouch => 0.5,
            Archetype::Jump => 0.9,
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Archetype::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| Error::config(format!("unknown motion archetype {s:?}")))
    }
}

pub const SUBJECTS: [&str; 5] = ["a person", "someone", "a man", "a woman", "the figure"];
/// Indexed by tempo tier: slow, medium, fast.
pub const ADVERBS: [&str; 3] = ["slowly", "steadily", "quickly"];
const TEMPO: [f64; 3] = [0.6, 1.0, 1.5];

/// Builds and parses the template captions.
pub struct CaptionGrammar;

impl CaptionGrammar {
    pub fn caption(subject: usize, archetype: Archetype, phrase: usize, tempo: usize) -> String {
        format!("{} {} {}", SUBJECTS[subject], archetype.phrases()[phrase], ADVERBS[tempo])
    }

    /// Which archetype a caption describes, if it came from this grammar.
    pub fn classify(caption: &str) -> Option<Archetype> {
        let c = caption.to_ascii_lowercase();
        Archetype::ALL.into_iter().find(|a| a.phrases().iter().any(|p| c.contains(p)))
    }

    /// Every word the grammar can emit, sorted.
    pub fn vocabulary() -> Vec<String> {
        let mut words = BTreeSet::new();
        let phrases = Archetype::ALL.iter().flat_map(|a| a.phrases().iter());
        for text in SUBJECTS.iter().chain(ADVERBS.iter()).chain(phrases) {
            words.extend(tokenize(text));
        }
        words.into_iter().collect()
    }
}

/// Lowercased alphanumeric words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub archetypes: Vec<String>,
    pub samples_per_archetype: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub fps: f32,
    pub mode: RepresentationMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            archetypes: ["walk", "wave-left-arm", "kick-right-leg", "crouch"].map(String::from).to_vec(),
            samples_per_archetype: 50,
            min_len: 16,
            max_len: 64,
            fps: 20.0,
            mode: RepresentationMode::Positions,
        }
    }
}

impl GeneratorConfig {
    pub fn parsed_archetypes(&self) -> Result<Vec<Archetype>> {
        self.archetypes.iter().map(|a| a.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let archetypes = self.parsed_archetypes()?;
        if archetypes.len() < 4 {
            return Err(Error::config(format!("need at least 4 archetypes, got {}", archetypes.len())));
        }
        if self.min_len < 16 || self.max_len > 64 || self.min_len > self.max_len {
            return Err(Error::config(format!(
                "motion lengths must satisfy 16 <= min_len <= max_len <= 64, got [{}, {}]",
                self.min_len, self.max_len
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::config("fps must be positive"));
        }
        Ok(())
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton::toy(self.mode)
    }
}

/// One sample's randomized parameters.
#[derive(Debug, Clone, Copy)]
struct Params {
    frequency: f64,
    amplitude: f64,
    phase: f64,
}

/// Generates `samples_per_archetype` clips for each configured archetype,
/// archetype-major. Pure in `(config, seed)`.
pub fn generate_synthetic_dataset(config: &GeneratorConfig, seed: u64) -> Result<Vec<MotionSequence>> {
    config.validate()?;
    let archetypes = config.parsed_archetypes()?;
    let skeleton = Skeleton::toy(RepresentationMode::Rotations);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(archetypes.len() * config.samples_per_archetype);
    for &arch in &archetypes {
        for _ in 0..config.samples_per_archetype {
            let tempo = rng.random_range(0..3);
            let params = Params {
                frequency: arch.base_frequency() * TEMPO[tempo] * rng.random_range(0.9..1.1),
                amplitude: rng.random_range(0.8..1.2),
                phase: rng.random_range(0.0..2.0 * PI),
            };
            let len = rng.random_range(config.min_len..=config.max_len);
            let subject = rng.random_range(0..SUBJECTS.len());
            let phrase = rng.random_range(0..arch.phrases().len());
            let caption = CaptionGrammar::caption(subject, arch, phrase, tempo);
            let rotations = archetype_rotations(arch, params, len, config.fps as f64);
            let frames = match config.mode {
                RepresentationMode::Rotations => rotations,
                RepresentationMode::Positions => {
                    let t = super::sequence::array3_to_tensor(&rotations, &candle_core::Device::Cpu)?;
                    super::sequence::tensor_to_array3(&forward_kinematics(&skeleton, &t)?)?
                }
            };
            out.push(MotionSequence::new(frames, caption, config.fps)?);
        }
    }
    Ok(out)
}

// Toy rig joint indices.
const PELVIS: usize = 0;
const L_SHOULDER: usize = 1;
const R_SHOULDER: usize = 3;
const L_KNEE: usize = 5;
const R_KNEE: usize = 7;
const STANDING_HEIGHT: f64 = 0.9;

fn archetype_rotations(arch: Archetype, p: Params, len: usize, fps: f64) -> Array3<f32> {
    let mut frames = Array3::<f32>::zeros((len, 9, 6));
    for n in 0..len {
        let t = n as f64 / fps;
        let angle = 2.0 * PI * p.frequency * t + p.phase;
        let s = angle.sin();
        let mut set = |joint: usize, channel: usize, v: f64| frames[[n, joint, channel]] = v as f32;
        set(PELVIS, 4, STANDING_HEIGHT);
        match arch {
            Archetype::Walk => {
                let a = 0.5 * p.amplitude;
                set(PELVIS, 5, 1.2 * p.frequency * t);
                set(PELVIS, 4, STANDING_HEIGHT + 0.02 * (2.0 * angle).sin());
                set(L_KNEE, 0, -a * s);
                set(R_KNEE, 0, a * s);
                set(L_SHOULDER, 0, 0.3 * a * s);
                set(R_SHOULDER, 0, -0.3 * a * s);
            }
            Archetype::WaveLeftArm => set(L_SHOULDER, 2, 2.3 + 0.4 * p.amplitude * s),
            Archetype::WaveRightArm => set(R_SHOULDER, 2, -(2.3 + 0.4 * p.amplitude * s)),
            Archetype::KickRightLeg => {
                let pulse = s.max(0.0);
                set(R_KNEE, 0, -1.2 * p.amplitude * pulse * pulse);
            }
            Archetype::Crouch => {
                let depth = 0.5 * (1.0 - angle.cos());
                set(PELVIS, 4, STANDING_HEIGHT - 0.25 * p.amplitude * depth);
                set(L_KNEE, 0, 1.0 * depth);
                set(R_KNEE, 0, 1.0 * depth);
                set(L_SHOULDER, 0, -0.6 * depth);
                set(R_SHOULDER, 0, -0.6 * depth);
            }
            Archetype::Jump => {
                let air = s.max(0.0);
                let squat = (-s).max(0.0);
                set(PELVIS, 4, STANDING_HEIGHT + 0.3 * p.amplitude * air - 0.1 * squat);
                set(L_KNEE, 0, 0.4 * squat);
                set(R_KNEE, 0, 0.4 * squat);
                set(L_SHOULDER, 2, 1.0 * air);
                set(R_SHOULDER, 2, -air);
            }
        }
    }
    frames
}
