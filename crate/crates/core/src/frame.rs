//! Depth and color frame buffers.
//!
//! Depth is stored in meters with an out-of-band sentinel for pixels that
//! carry no usable range measurement (no disparity, out of range, dropout).

/// Sensor image width in pixels.
pub const FRAME_WIDTH: usize = 640;
/// Sensor image height in pixels.
pub const FRAME_HEIGHT: usize = 480;

/// Lower bound of the useful depth interval, meters.
pub const DEPTH_MIN_M: f64 = 0.8;
/// Upper bound of the useful depth interval, meters.
pub const DEPTH_MAX_M: f64 = 4.5;

/// Sentinel for a depth pixel with no usable measurement.
///
/// NaN compares unequal to every valid depth, so it can never be confused
/// with one; use [`depth_is_valid`] rather than comparing against this
/// constant.
pub const INVALID_DEPTH: f64 = f64::NAN;

/// True for a finite, strictly positive depth value.
#[inline]
pub fn depth_is_valid(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// Per-pixel depth map in meters.
#[derive(Clone, Debug)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    /// Frame index this depth map belongs to.
    pub timestamp: u64,
    data: Vec<f64>,
}

impl DepthFrame {
    /// All-invalid frame.
    pub fn new_invalid(width: usize, height: usize, timestamp: u64) -> Self {
        Self {
            width,
            height,
            timestamp,
            data: vec![INVALID_DEPTH; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, timestamp: u64, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "depth buffer size mismatch");
        Self {
            width,
            height,
            timestamp,
            data,
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
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: f64) {
        self.data[y * self.width + x] = z;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of pixels holding a valid depth.
    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&z| depth_is_valid(z)).count()
    }
}

/// Per-pixel RGB image, channels in `[0, 255]`.
#[derive(Clone, Debug)]
pub struct ColorFrame {
    width: usize,
    height: usize,
    /// Frame index this image belongs to.
    pub timestamp: u64,
    data: Vec<[u8; 3]>,
}

impl ColorFrame {
    pub fn new_filled(width: usize, height: usize, timestamp: u64, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            timestamp,
            data: vec![rgb; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, timestamp: u64, data: Vec<[u8; 3]>) -> Self {
        assert_eq!(data.len(), width * height, "color buffer size mismatch");
        Self {
            width,
            height,
            timestamp,
            data,
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
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.data[y * self.width + x] = rgb;
    }

    pub fn as_slice(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [[u8; 3]] {
        &mut self.data
    }
}
