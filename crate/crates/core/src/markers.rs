//! Marker segmentation and rigid-body pose.
//!
//! The registered color image is converted to HSV, thresholded against
//! per-marker color ranges, cleaned with a morphological opening, and the
//! surviving connected components yield centroids via image moments. The
//! robot pose is the center of the marker triangle; heading points from that
//! center toward the front marker.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame::ColorFrame;

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct HsvColor {
    pub h: f32,
    pub s: f32,
    pub v: f32,
}

impl HsvColor {
    pub fn to_rgb(self) -> [u8; 3] {
        hsv_to_rgb(self.h, self.s, self.v)
    }
}

/// Standard hexcone RGB -> HSV conversion for one pixel.
pub fn rgb_pixel_to_hsv(rgb: [u8; 3]) -> HsvColor {
    let r = rgb[0] as f32 / 255.0;
    let g = rgb[1] as f32 / 255.0;
    let b = rgb[2] as f32 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;

    let mut h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    if h < 0.0 {
        h += 360.0;
    }
    let s = if max == 0.0 { 0.0 } else { delta / max };
    HsvColor { h, s, v: max }
}

/// Inverse hexcone conversion, used by the renderer and in tests.
pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let i = h.floor();
    let f = h - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i as i32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Per-pixel HSV image.
#[derive(Clone, Debug)]
pub struct HsvFrame {
    width: usize,
    height: usize,
    data: Vec<HsvColor>,
}

impl HsvFrame {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> HsvColor {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[HsvColor] {
        &self.data
    }
}

/// Convert a full color frame to HSV.
pub fn rgb_to_hsv(frame: &ColorFrame) -> HsvFrame {
    let width = frame.width();
    let data = frame
        .as_slice()
        .par_chunks(width)
        .flat_map_iter(|row| row.iter().map(|&c| rgb_pixel_to_hsv(c)))
        .collect();
    HsvFrame {
        width,
        height: frame.height(),
        data,
    }
}

/// HSV acceptance intervals; the hue interval may wrap across 0 degrees.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HsvRange {
    pub h_lo: f32,
    pub h_hi: f32,
    pub s_lo: f32,
    pub s_hi: f32,
    pub v_lo: f32,
    pub v_hi: f32,
}

impl HsvRange {
    /// Symmetric range around a reference color.
    pub fn around(c: HsvColor, h_margin: f32, s_margin: f32, v_margin: f32) -> Self {
        Self {
            h_lo: (c.h - h_margin).rem_euclid(360.0),
            h_hi: (c.h + h_margin).rem_euclid(360.0),
            s_lo: (c.s - s_margin).max(0.0),
            s_hi: (c.s + s_margin).min(1.0),
            v_lo: (c.v - v_margin).max(0.0),
            v_hi: (c.v + v_margin).min(1.0),
        }
    }

    #[inline]
    pub fn contains(&self, c: HsvColor) -> bool {
        let hue_ok = if self.h_lo <= self.h_hi {
            c.h >= self.h_lo && c.h <= self.h_hi
        } else {
            // interval wraps through 0 degrees
            c.h >= self.h_lo || c.h <= self.h_hi
        };
        hue_ok && c.s >= self.s_lo && c.s <= self.s_hi && c.v >= self.v_lo && c.v <= self.v_hi
    }
}

/// Boolean pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Pixel-wise AND, used to restrict a color mask to registered pixels.
    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }
}

/// Binarize an HSV frame against a color range.
pub fn threshold_mask(frame: &HsvFrame, range: &HsvRange) -> BinaryMask {
    let width = frame.width();
    let data = frame
        .as_slice()
        .par_chunks(width)
        .flat_map_iter(|row| row.iter().map(|&c| range.contains(c)))
        .collect();
    BinaryMask {
        width,
        height: frame.height(),
        data,
    }
}

/// Erosion followed by dilation with a `(2r+1)` square structuring element.
/// Out-of-image neighbors count as false.
pub fn morph_open(mask: &BinaryMask, kernel_radius: usize) -> BinaryMask {
    dilate(&erode(mask, kernel_radius), kernel_radius)
}

// The square kernel is separable: run each pass along rows then columns.

fn erode(mask: &BinaryMask, r: usize) -> BinaryMask {
    let h = horizontal_pass(mask, r, false);
    vertical_pass(&h, r, false)
}

fn dilate(mask: &BinaryMask, r: usize) -> BinaryMask {
    let h = horizontal_pass(mask, r, true);
    vertical_pass(&h, r, true)
}

/// `any = true` gives dilation semantics, `any = false` erosion.
fn horizontal_pass(mask: &BinaryMask, r: usize, any: bool) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut out = BinaryMask::new(w, h);
    out.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                let window = &mask.data[y * w + lo..=y * w + hi];
                let full = hi - lo + 1 == 2 * r + 1;
                *o = if any {
                    window.iter().any(|&b| b)
                } else {
                    // borders see implicit false neighbors
                    full && window.iter().all(|&b| b)
                };
            }
        });
    out
}

fn vertical_pass(mask: &BinaryMask, r: usize, any: bool) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut out = BinaryMask::new(w, h);
    out.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            let full = hi - lo + 1 == 2 * r + 1;
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = if any { false } else { full };
                for yy in lo..=hi {
                    let b = mask.data[yy * w + x];
                    if any {
                        acc |= b;
                    } else {
                        acc &= b;
                    }
                }
                *o = acc;
            }
        });
    out
}

/// A connected component of the mask with its centroid from image moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    /// First moments over the zeroth: `(mu10/mu00, mu01/mu00)`.
    pub centroid: (f64, f64),
    /// Zeroth moment: pixel count.
    pub area: u64,
}

/// Connected components (8-connectivity) with area at least `min_area`,
/// sorted by area descending (scan order breaks ties).
pub fn extract_centroids(mask: &BinaryMask, min_area: u64) -> Vec<Blob> {
    let (w, h) = (mask.width, mask.height);
    let mut visited = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        if !mask.data[start] || visited[start] {
            continue;
        }
        // flood fill one component, accumulating integer moments exactly
        let mut mu00: u64 = 0;
        let mut mu10: u64 = 0;
        let mut mu01: u64 = 0;
        visited[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            mu00 += 1;
            mu10 += x as u64;
            mu01 += y as u64;
            let x0 = x.saturating_sub(1);
            let x1 = (x + 1).min(w - 1);
            let y0 = y.saturating_sub(1);
            let y1 = (y + 1).min(h - 1);
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let j = yy * w + xx;
                    if mask.data[j] && !visited[j] {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if mu00 >= min_area {
            blobs.push(Blob {
                centroid: (mu10 as f64 / mu00 as f64, mu01 as f64 / mu00 as f64),
                area: mu00,
            });
        }
    }
    blobs.sort_by(|a, b| b.area.cmp(&a.area));
    blobs
}

/// One detected marker: image centroid plus its 3D position in the camera
/// frame and in the world.
#[derive(Clone, Copy, Debug)]
pub struct MarkerSample {
    pub pixel: (f64, f64),
    pub position_camera: Vector3<f64>,
    pub position_world: Vector3<f64>,
}

/// The three labeled markers of a frame; any of them may be missing.
#[derive(Clone, Copy, Debug, Default)]
pub struct MarkerObservation {
    pub front: Option<MarkerSample>,
    pub left: Option<MarkerSample>,
    pub right: Option<MarkerSample>,
}

impl MarkerObservation {
    pub fn all_visible(&self) -> bool {
        self.front.is_some() && self.left.is_some() && self.right.is_some()
    }

    pub fn by_slot(&self, slot: usize) -> Option<&MarkerSample> {
        match slot {
            0 => self.front.as_ref(),
            1 => self.left.as_ref(),
            _ => self.right.as_ref(),
        }
    }
}

/// Robot position and heading derived from the marker triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    /// Heading in the world XY plane; zero points along world +x.
    pub yaw: f64,
}

/// Marker triples closer to collinear than this (squared triangle area in
/// m^4) do not define an orientation.
const MIN_TRIANGLE_AREA_SQ: f64 = 1e-12;

/// Pose from three marker world positions.
///
/// All three markers must be visible; the position is the mean of the
/// marker positions and the heading points from it toward the front marker,
/// measured in the world XY plane. Degenerate (collinear) triples yield no
/// measurement.
pub fn compute_pose(obs: &MarkerObservation) -> Option<Pose> {
    let (f, l, r) = match (&obs.front, &obs.left, &obs.right) {
        (Some(f), Some(l), Some(r)) => (f, l, r),
        _ => return None,
    };
    let area2 = (l.position_world - f.position_world)
        .cross(&(r.position_world - f.position_world))
        .norm_squared();
    if area2 < MIN_TRIANGLE_AREA_SQ {
        return None;
    }
    let position = (f.position_world + l.position_world + r.position_world) / 3.0;
    let heading = f.position_world - position;
    Some(Pose {
        position,
        yaw: heading.y.atan2(heading.x),
    })
}

/// Decide which of two rear markers is the robot's left one, given the front
/// marker, using world up to orient the triangle.
pub fn rear_is_left(front_w: &Vector3<f64>, rear_w: &Vector3<f64>, center_w: &Vector3<f64>) -> bool {
    let heading = front_w - center_w;
    let arm = rear_w - center_w;
    // left side has heading x arm pointing along world +z
    heading.cross(&arm).z > 0.0
}
