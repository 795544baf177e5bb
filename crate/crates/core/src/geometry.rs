//! Box and velocity types shared by every stage of the tracker.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};

/// Minimum width/height of any box produced by the tracker, in pixels.
pub const MIN_BOX_SIDE: f64 = 1.0;

/// Default jitter magnitude, as a fraction of the relevant dimension.
pub const DEFAULT_JITTER: f64 = 0.02;

/// Axis-aligned box in pixels: top-left corner plus size.
///
/// Width and height are positive and every coordinate is finite. Values are
/// kept at sub-pixel precision; rounding happens only when writing files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::Data(alloc::format!(
                "invalid box ({x}, {y}, {w}, {h})"
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x: self.x * s,
            y: self.y * s,
            w: self.w * s,
            h: self.h * s,
        }
    }

    fn clamp_size(mut self) -> Self {
        if !(self.w >= MIN_BOX_SIDE) {
            self.w = MIN_BOX_SIDE;
        }
        if !(self.h >= MIN_BOX_SIDE) {
            self.h = MIN_BOX_SIDE;
        }
        self
    }
}

/// A detector output at a given (1-based) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub frame: u32,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64, frame: u32) -> Result<Self> {
        if frame == 0 {
            return Err(Error::Data("detection frames are 1-based".into()));
        }
        if !confidence.is_finite() {
            return Err(Error::Data("detection confidence must be finite".into()));
        }
        Ok(Self {
            bbox,
            confidence,
            frame,
        })
    }
}

/// Frame size in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDims {
    pub width: f64,
    pub height: f64,
}

impl FrameDims {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite() {
            Ok(Self { width, height })
        } else {
            Err(Error::Data(alloc::format!(
                "invalid frame size {width}x{height}"
            )))
        }
    }
}

/// Per-frame box motion normalized by the frame size.
///
/// `dx` and `dw` are fractions of the frame width, `dy` and `dh` fractions of
/// the frame height.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity {
        dx: 0.0,
        dy: 0.0,
        dw: 0.0,
        dh: 0.0,
    };

    pub fn new(dx: f64, dy: f64, dw: f64, dh: f64) -> Self {
        Self { dx, dy, dw, dh }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            dx: a[0],
            dy: a[1],
            dw: a[2],
            dh: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Velocity between two consecutive boxes.
    pub fn between(from: &BoundingBox, to: &BoundingBox, dims: FrameDims) -> Self {
        Self {
            dx: (to.x - from.x) / dims.width,
            dy: (to.y - from.y) / dims.height,
            dw: (to.w - from.w) / dims.width,
            dh: (to.h - from.h) / dims.height,
        }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Velocities between consecutive boxes; one shorter than the input.
pub fn seq_to_velocities(boxes: &[BoundingBox], dims: FrameDims) -> Result<Vec<Velocity>> {
    if boxes.len() < 2 {
        return Err(Error::EmptySequence {
            needed: 2,
            got: boxes.len(),
        });
    }
    Ok(boxes
        .windows(2)
        .map(|w| Velocity::between(&w[0], &w[1], dims))
        .collect())
}

/// Advance a box by one normalized velocity step. Width and height are
/// clamped to at least one pixel; position is left unclamped.
pub fn apply_velocity(b: &BoundingBox, v: &Velocity, dims: FrameDims) -> BoundingBox {
    BoundingBox {
        x: b.x + v.dx * dims.width,
        y: b.y + v.dy * dims.height,
        w: b.w + v.dw * dims.width,
        h: b.h + v.dh * dims.height,
    }
    .clamp_size()
}

/// Uniform detector-style noise: position by up to `magnitude` of the frame
/// size, size by up to `magnitude` of the box size.
pub fn jitter<R: Rng + ?Sized>(
    b: &BoundingBox,
    dims: FrameDims,
    magnitude: f64,
    rng: &mut R,
) -> BoundingBox {
    if magnitude <= 0.0 {
        return *b;
    }
    let mut u = |scale: f64| (rng.random::<f64>() * 2.0 - 1.0) * magnitude * scale;
    BoundingBox {
        x: b.x + u(dims.width),
        y: b.y + u(dims.height),
        w: b.w + u(b.w),
        h: b.h + u(b.h),
    }
    .clamp_size()
}
