use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five body regions used by the body-part mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Torso,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
}

impl BodyPart {
    pub const ALL: [BodyPart; 5] = [
        BodyPart::Torso,
        BodyPart::LeftArm,
        BodyPart::RightArm,
        BodyPart::LeftLeg,
        BodyPart::RightLeg,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BodyPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BodyPart::Torso => "torso",
            BodyPart::LeftArm => "left_arm",
            BodyPart::RightArm => "right_arm",
            BodyPart::LeftLeg => "left_leg",
            BodyPart::RightLeg => "right_leg",
        };
        f.write_str(s)
    }
}

/// How per-joint features are interpreted.
///
/// In `Positions` mode every joint carries its global xyz position (D = 3) and
/// forward kinematics is the identity. In `Rotations` mode every joint carries
/// a local axis-angle rotation followed by a translation triple (D = 6); only
/// the root's translation is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationMode {
    #[default]
    Positions,
    Rotations,
}

impl RepresentationMode {
    pub fn feature_dim(self) -> usize {
        match self {
            RepresentationMode::Positions => 3,
            RepresentationMode::Rotations => 6,
        }
    }
}

/// Joint hierarchy with bone offsets and the body-part assignment.
///
/// This is also the on-disk skeleton sidecar schema (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonRepr", into = "SkeletonRepr")]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<[f64; 3]>,
    part_of: Vec<BodyPart>,
    foot_joints: Vec<usize>,
    mode: RepresentationMode,
    order: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonRepr {
    names: Vec<String>,
    parents: Vec<i64>,
    offsets: Vec<[f64; 3]>,
    parts: Vec<BodyPart>,
    foot_joints: Vec<usize>,
    #[serde(default)]
    representation: RepresentationMode,
}

impl TryFrom<SkeletonRepr> for Skeleton {
    type Error = Error;

    fn try_from(r: SkeletonRepr) -> Result<Self> {
        let parents = r
            .parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(Error::InvalidSkeleton(format!("parent index {p} is negative"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Skeleton::new(r.names, parents, r.offsets, r.parts, r.foot_joints, r.representation)
    }
}

impl From<Skeleton> for SkeletonRepr {
    fn from(s: Skeleton) -> Self {
        SkeletonRepr {
            parents: s.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            names: s.names,
            offsets: s.offsets,
            parts: s.part_of,
            foot_joints: s.foot_joints,
            representation: s.mode,
        }
    }
}

impl Skeleton {
    /// Validates the hierarchy: exactly one root at index 0, no cycles,
    /// every joint assigned a part, foot joints in range.
    ///
    /// Parts may be empty here; [`Skeleton::part_index_sets`] is where a
    /// full five-part partition is demanded.
    pub fn new(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        offsets: Vec<[f64; 3]>,
        part_of: Vec<BodyPart>,
        foot_joints: Vec<usize>,
        mode: RepresentationMode,
    ) -> Result<Self> {
        let j = parents.len();
        if j == 0 {
            return Err(Error::InvalidSkeleton("skeleton has no joints".into()));
        }
        if names.len() != j || offsets.len() != j || part_of.len() != j {
            return Err(Error::InvalidSkeleton(format!(
                "length mismatch: {} parents, {} names, {} offsets, {} part assignments",
                j,
                names.len(),
                offsets.len(),
                part_of.len()
            )));
        }
        let roots: Vec<usize> = (0..j).filter(|&i| parents[i].is_none()).collect();
        if roots != [0] {
            return Err(Error::InvalidSkeleton(format!(
                "expected exactly one root at index 0, found roots {roots:?}"
            )));
        }
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= j {
                    return Err(Error::InvalidSkeleton(format!("joint {i} has parent {p} out of range")));
                }
                if p == i {
                    return Err(Error::InvalidSkeleton(format!("joint {i} is its own parent")));
                }
            }
        }
        if offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSkeleton("non-finite bone offset".into()));
        }
        for &f in &foot_joints {
            if f >= j {
                return Err(Error::InvalidSkeleton(format!("foot joint {f} out of range")));
            }
        }
        let order = topological_order(&parents)?;
        Ok(Skeleton { names, parents, offsets, part_of, foot_joints, mode, order })
    }

    /// Default 9-joint toy rig: pelvis root, two-joint arms and legs.
    ///
    /// ```text
    ///        l_hand   r_hand
    ///          |        |
    ///     l_shoulder--pelvis--r_shoulder
    ///            l_knee   r_knee
    ///              |        |
    ///            l_foot   r_foot
    /// ```
    pub fn toy(mode: RepresentationMode) -> Self {
        let joints: [(&str, Option<usize>, [f64; 3], BodyPart); 9] = [
            ("pelvis", None, [0.0, 0.0, 0.0], BodyPart::Torso),
            ("l_shoulder", Some(0), [0.2, 0.5, 0.0], BodyPart::LeftArm),
            ("l_hand", Some(1), [0.0, -0.5, 0.0], BodyPart::LeftArm),
            ("r_shoulder", Some(0), [-0.2, 0.5, 0.0], BodyPart::RightArm),
            ("r_hand", Some(3), [0.0, -0.5, 0.0], BodyPart::RightArm),
            ("l_knee", Some(0), [0.1, -0.45, 0.0], BodyPart::LeftLeg),
            ("l_foot", Some(5), [0.0, -0.45, 0.0], BodyPart::LeftLeg),
            ("r_knee", Some(0), [-0.1, -0.45, 0.0], BodyPart::RightLeg),
            ("r_foot", Some(7), [0.0, -0.45, 0.0], BodyPart::RightLeg),
        ];
        Skeleton::new(
            joints.iter().map(|j| j.0.to_string()).collect(),
            joints.iter().map(|j| j.1).collect(),
            joints.iter().map(|j| j.2).collect(),
            joints.iter().map(|j| j.3).collect(),
            vec![6, 8],
            mode,
        )
        .expect("toy skeleton is valid")
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offsets(&self) -> &[[f64; 3]] {
        &self.offsets
    }

    pub fn part_of(&self, joint: usize) -> BodyPart {
        self.part_of[joint]
    }

    pub fn foot_joints(&self) -> &[usize] {
        &self.foot_joints
    }

    pub fn mode(&self) -> RepresentationMode {
        self.mode
    }

    pub fn feature_dim(&self) -> usize {
        self.mode.feature_dim()
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Same hierarchy, different representation mode.
    pub fn with_mode(&self, mode: RepresentationMode) -> Self {
        Skeleton { mode, ..self.clone() }
    }

    /// Same hierarchy with every bone offset multiplied by `factor`.
    pub fn with_scaled_offsets(&self, factor: f64) -> Self {
        let offsets = self.offsets.iter().map(|o| o.map(|v| v * factor)).collect();
        Skeleton { offsets, ..self.clone() }
    }

    /// Joint indices of each body part in declaration order, indexed by
    /// [`BodyPart::index`]. Fails if any part is empty.
    pub fn part_index_sets(&self) -> Result<PartPartition> {
        let mut sets: [Vec<usize>; 5] = Default::default();
        for (joint, part) in self.part_of.iter().enumerate() {
            sets[part.index()].push(joint);
        }
        if let Some(p) = BodyPart::ALL.iter().find(|p| sets[p.index()].is_empty()) {
            return Err(Error::InvalidSkeleton(format!("body part {p} has no joints")));
        }
        Ok(PartPartition { sets })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSkeleton(e.to_string()))
    }
}

/// Five disjoint joint lists covering the whole skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartPartition {
    sets: [Vec<usize>; 5],
}

impl PartPartition {
    pub fn joints(&self, part: BodyPart) -> &[usize] {
        &self.sets[part.index()]
    }

    pub fn sizes(&self) -> [usize; 5] {
        std::array::from_fn(|i| self.sets[i].len())
    }

    pub fn iter(&self) -> impl Iterator<Item = (BodyPart, &[usize])> {
        BodyPart::ALL.iter().map(move |&p| (p, self.joints(p)))
    }

    /// Joint indices concatenated in part order.
    pub fn flattened(&self) -> Vec<usize> {
        self.sets.iter().flatten().copied().collect()
    }

    pub fn joint_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

fn topological_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let j = parents.len();
    let mut children = vec![Vec::new(); j];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(i);
        }
    }
    let mut order = Vec::with_capacity(j);
    let mut stack = vec![0usize];
    while let Some(n) = stack.pop() {
        order.push(n);
        stack.extend(children[n].iter().rev());
    }
    if order.len() != j {
        return Err(Error::InvalidSkeleton(
            "parent links contain a cycle or a joint unreachable from the root".into(),
        ));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn nine_joint_fixture() -> Skeleton {
        // 3 torso, 1 per arm, 2 per leg
        use BodyPart::*;
        let parts = vec![Torso, Torso, Torso, LeftArm, RightArm, LeftLeg, LeftLeg, RightLeg, RightLeg];
        let parents = vec![None, Some(0), Some(1), Some(1), Some(1), Some(0), Some(5), Some(0), Some(7)];
        Skeleton::new(
            (0..9).map(|i| format!("j{i}")).collect(),
            parents,
            vec![[0.0, 0.1, 0.0]; 9],
            parts,
            vec![6, 8],
            RepresentationMode::Positions,
        )
        .unwrap()
    }

    #[test]
    fn part_sets_read_back_assignment() {
        let p = nine_joint_fixture().part_index_sets().unwrap();
        assert_eq!(p.sizes(), [3, 1, 1, 2, 2]);
        assert_eq!(p.joints(BodyPart::Torso), &[0, 1, 2]);
        assert_eq!(p.joints(BodyPart::LeftLeg), &[5, 6]);
        let mut all = p.flattened();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn empty_part_is_rejected_by_partition_only() {
        let s = Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![[0.0; 3]; 2],
            vec![BodyPart::Torso, BodyPart::LeftArm],
            vec![],
            RepresentationMode::Positions,
        )
        .unwrap();
        assert!(matches!(s.part_index_sets(), Err(Error::InvalidSkeleton(_))));
    }

    #[test]
    fn rejects_bad_hierarchies() {
        let mk = |parents: Vec<Option<usize>>| {
            let n = parents.len();
            Skeleton::new(
                (0..n).map(|i| i.to_string()).collect(),
                parents,
                vec![[0.0; 3]; n],
                vec![BodyPart::Torso; n],
                vec![],
                RepresentationMode::Positions,
            )
        };
        assert!(mk(vec![None, None]).is_err());
        assert!(mk(vec![Some(1), None]).is_err());
        // 1 -> 2 -> 1 cycle, unreachable from root
        assert!(mk(vec![None, Some(2), Some(1)]).is_err());
        assert!(mk(vec![None, Some(5)]).is_err());
        assert!(mk(vec![None, Some(0), Some(1)]).is_ok());
    }

    #[test]
    fn topological_order_handles_parents_after_children() {
        let s = Skeleton::new(
            vec!["root".into(), "tip".into(), "mid".into()],
            vec![None, Some(2), Some(0)],
            vec![[0.0; 3]; 3],
            vec![BodyPart::Torso; 3],
            vec![],
            RepresentationMode::Positions,
        )
        .unwrap();
        assert_eq!(s.topological_order(), &[0, 2, 1]);
    }

    #[test]
    fn sidecar_json_round_trip() {
        let s = Skeleton::toy(RepresentationMode::Rotations);
        let back = Skeleton::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
        assert!(Skeleton::from_json(r#"{"names":[]}"#).is_err());
    }
}
