//! Skeletons, motion clips, kinematics and the synthetic motion corpus.

mod contact;
pub mod io;
mod kinematics;
mod sequence;
mod skeleton;
pub mod synth;

pub use contact::{default_speed_threshold, detect_foot_contact, FootContactLabels};
pub use kinematics::{axis_angle_to_matrix, forward_kinematics, sequence_positions};
pub use sequence::MotionSequence;
pub(crate) use sequence::tensor_to_array3;
pub use skeleton::{BodyPart, PartPartition, RepresentationMode, Skeleton};
pub use synth::{generate_synthetic_dataset, Archetype, CaptionGrammar, GeneratorConfig};
