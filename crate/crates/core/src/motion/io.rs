//! `.mmot` motion files and their JSON skeleton sidecars.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "MMOT" | u32 version = 1 | u32 N | u32 J | u32 D | f32 fps | u32 caption_len
//! caption (UTF-8) | N·J·D f32 frames, C order (frame, joint, feature)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;

use super::{MotionSequence, Skeleton};
use crate::error::{DecodeError, Error, Result};

pub const MAGIC: [u8; 4] = *b"MMOT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 4 + 4;

pub fn encode_motion(motion: &MotionSequence) -> Vec<u8> {
    let (n, j, d) = motion.frames().dim();
    let caption = motion.caption().as_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + caption.len() + n * j * d * 4);
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, n as u32, j as u32, d as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&motion.fps().to_le_bytes());
    out.extend_from_slice(&(caption.len() as u32).to_le_bytes());
    out.extend_from_slice(caption);
    for v in motion.frames().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, len: usize, what: &'static str) -> std::result::Result<&'a [u8], DecodeError> {
        let available = self.buf.len() - self.pos;
        if len > available {
            return Err(DecodeError::Truncated { what, expected: len, available });
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> std::result::Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_motion(bytes: &[u8]) -> Result<MotionSequence> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic).into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(DecodeError::VersionMismatch { found: version, expected: VERSION }.into());
    }
    let n = r.u32("header")? as usize;
    let j = r.u32("header")? as usize;
    let d = r.u32("header")? as usize;
    let fps = f32::from_bits(r.u32("header")?);
    let caption_len = r.u32("header")? as usize;
    let caption = std::str::from_utf8(r.take(caption_len, "caption")?)
        .map_err(|_| DecodeError::BadCaption)?
        .to_string();
    let count = n
        .checked_mul(j)
        .and_then(|v| v.checked_mul(d))
        .and_then(|v| v.checked_mul(4))
        .ok_or(DecodeError::Truncated { what: "frames", expected: usize::MAX, available: bytes.len() - r.pos })?;
    let payload = r.take(count, "frames")?;
    if r.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - r.pos).into());
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let frames = Array3::from_shape_vec((n, j, d), data).expect("payload length checked");
    MotionSequence::new(frames, caption, fps)
}

/// Where the skeleton sidecar of a motion file lives: `walk.mmot` → `walk.skeleton.json`.
pub fn sidecar_path(motion_path: &Path) -> PathBuf {
    motion_path.with_extension("skeleton.json")
}

/// Writes the motion file and its skeleton sidecar.
pub fn write_motion(path: &Path, motion: &MotionSequence, skeleton: &Skeleton) -> Result<()> {
    motion.check_skeleton(skeleton)?;
    fs::write(path, encode_motion(motion)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, skeleton.to_json()).map_err(|e| Error::io(side, e))
}

pub fn read_motion(path: &Path) -> Result<(MotionSequence, Skeleton)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let motion = decode_motion(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let skeleton = Skeleton::from_json(&text)?;
    motion.check_skeleton(&skeleton)?;
    Ok((motion, skeleton))
}

/// Every `.mmot` file in `dir`, sorted by file name, with the skeleton of the first.
pub fn read_motion_dir(dir: &Path) -> Result<(Vec<MotionSequence>, Skeleton)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mmot"))
        .collect();
    paths.sort();
    let mut skeleton = None;
    let mut motions = Vec::with_capacity(paths.len());
    for p in &paths {
        let (m, s) = read_motion(p)?;
        match &skeleton {
            None => skeleton = Some(s),
            Some(first) if *first != s => {
                return Err(Error::invalid(format!("{} uses a different skeleton", p.display())))
            }
            Some(_) => {}
        }
        motions.push(m);
    }
    let skeleton = skeleton.ok_or_else(|| Error::invalid(format!("no .mmot files in {}", dir.display())))?;
    Ok((motions, skeleton))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MotionSequence {
        let frames = Array3::from_shape_fn((3, 2, 3), |(i, j, k)| (i as f32 - j as f32) * 0.25 + k as f32 * 1e-3);
        MotionSequence::new(frames, "a person waves ünïcode ✓", 30.0).unwrap()
    }

    #[test]
    fn header_is_little_endian_and_c_ordered() {
        let bytes = encode_motion(&sample());
        assert_eq!(&bytes[..4], b"MMOT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 30.0);
        let cap_len = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
        let first = 28 + cap_len;
        assert_eq!(f32::from_le_bytes(bytes[first..first + 4].try_into().unwrap()), 0.0);
        // element (0, 0, 1) comes second
        assert_eq!(f32::from_le_bytes(bytes[first + 4..first + 8].try_into().unwrap()), 1e-3);
    }

    #[test]
    fn distinct_decode_errors() {
        let good = encode_motion(&sample());
        let mut bad = good.clone();
        bad[0] = b'X';
        let err = decode_motion(&bad).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_motion(&bad), Err(Error::Decode(DecodeError::VersionMismatch { found: 2, .. }))));
        let mut bad = good.clone();
        bad[8] = 4; // N = 4 but payload holds 3 frames
        assert!(matches!(
            decode_motion(&bad),
            Err(Error::Decode(DecodeError::Truncated { what: "frames", .. }))
        ));
        assert!(matches!(
            decode_motion(&good[..good.len() - 1]),
            Err(Error::Decode(DecodeError::Truncated { .. }))
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_motion(&long), Err(Error::Decode(DecodeError::TrailingBytes(1)))));
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let skel = Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![[0.0; 3], [0.0, 1.0, 0.0]],
            vec![super::super::BodyPart::Torso; 2],
            vec![1],
            super::super::RepresentationMode::Positions,
        )
        .unwrap();
        let path = dir.path().join("m.mmot");
        write_motion(&path, &sample(), &skel).unwrap();
        assert!(dir.path().join("m.skeleton.json").exists());
        let (m, s) = read_motion(&path).unwrap();
        assert_eq!(m, sample());
        assert_eq!(s, skel);
    }
}
