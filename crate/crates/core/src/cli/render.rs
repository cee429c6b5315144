//! Stick-figure rendering to binary PPM frames.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{sequence_positions, BodyPart, MotionSequence, Skeleton};

/// Orthographic view direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum View {
    /// Looking along −z: image axes are world x (right) and y (up).
    #[default]
    Front,
    /// Looking along +x: image axes are world z and y.
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub view: View,
    pub size: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { view: View::Front, size: 256 }
    }
}

/// Packed RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

const BACKGROUND: [u8; 3] = [250, 250, 250];

pub fn part_color(part: BodyPart) -> [u8; 3] {
    match part {
        BodyPart::Torso => [60, 60, 60],
        BodyPart::LeftArm => [220, 50, 47],
        BodyPart::RightArm => [38, 139, 210],
        BodyPart::LeftLeg => [203, 120, 22],
        BodyPart::RightLeg => [64, 160, 43],
    }
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image { width, height, pixels: BACKGROUND.repeat(width * height) }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.pixels[i..i + 3].copy_from_slice(&c);
        }
    }

    /// Bresenham segment, two pixels thick.
    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, c);
            self.put(x + 1, y, c);
            self.put(x, y + 1, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn dot(&mut self, (x, y): (i64, i64), c: [u8; 3]) {
        for oy in -2..=2 {
            for ox in -2..=2 {
                self.put(x + ox, y + oy, c);
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Pixel coordinates of every joint in every frame, `[N][J]`, using one
/// bounding box for the whole clip so the camera never moves.
pub fn project_positions(positions: &Array3<f32>, opts: &RenderOptions) -> Vec<Vec<(f64, f64)>> {
    let (n, j, _) = positions.dim();
    let horizontal = match opts.view {
        View::Front => 0,
        View::Side => 2,
    };
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for f in 0..n {
        for k in 0..j {
            for (a, axis) in [horizontal, 1].into_iter().enumerate() {
                let v = positions[[f, k, axis]] as f64;
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
    let centre = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let scale = 0.8 * (opts.size - 1) as f64 / span;
    let mid = (opts.size - 1) as f64 / 2.0;
    (0..n)
        .map(|f| {
            (0..j)
                .map(|k| {
                    let u = positions[[f, k, horizontal]] as f64 - centre[0];
                    let v = positions[[f, k, 1]] as f64 - centre[1];
                    (mid + u * scale, mid - v * scale)
                })
                .collect()
        })
        .collect()
}

pub fn render_frames(motion: &MotionSequence, skeleton: &Skeleton, opts: &RenderOptions) -> Result<Vec<Image>> {
    if opts.size < 8 {
        return Err(Error::invalid(format!("image size {} is too small", opts.size)));
    }
    let positions = sequence_positions(skeleton, motion)?;
    let pixels = project_positions(&positions, opts);
    let round = |(x, y): (f64, f64)| (x.round() as i64, y.round() as i64);
    Ok(pixels
        .iter()
        .map(|frame| {
            let mut img = Image::new(opts.size, opts.size);
            for (k, parent) in skeleton.parents().iter().enumerate() {
                if let Some(p) = parent {
                    img.line(round(frame[*p]), round(frame[k]), part_color(skeleton.part_of(k)));
                }
            }
            for (k, &xy) in frame.iter().enumerate() {
                img.dot(round(xy), part_color(skeleton.part_of(k)));
            }
            img
        })
        .collect())
}

/// Writes `frame_0000.ppm`, `frame_0001.ppm`, ... into `dir`.
pub fn write_frames(images: &[Image], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let path = dir.join(format!("frame_{i:04}.ppm"));
            std::fs::write(&path, img.to_ppm()).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
