//! Pixel-space and normalized bounding boxes.
//!
//! Boxes are stored in corner form everywhere. Normalization divides every
//! coordinate by the larger image dimension and rounds half away from zero.

use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported number of decimals for normalized coordinates.
pub const MAX_PRECISION: u32 = 6;

/// Default number of decimals for normalized coordinates.
pub const DEFAULT_PRECISION: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BBoxError {
    #[error("coordinate {0} is negative or not finite")]
    BadCoordinate(f64),
    #[error("corners out of order: ({x_left}, {y_top}) .. ({x_right}, {y_bottom})")]
    Inverted {
        x_left: f64,
        y_top: f64,
        x_right: f64,
        y_bottom: f64,
    },
    #[error("normalized coordinate {0} outside [0, 1]")]
    OutOfUnitRange(f64),
}

/// Absolute pixel box: top-left and bottom-right corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_left: f64,
    pub y_top: f64,
    pub x_right: f64,
    pub y_bottom: f64,
}

impl BBox {
    pub fn new(x_left: f64, y_top: f64, x_right: f64, y_bottom: f64) -> Result<Self, BBoxError> {
        for v in [x_left, y_top, x_right, y_bottom] {
            if !v.is_finite() || v < 0.0 {
                return Err(BBoxError::BadCoordinate(v));
            }
        }
        if x_left > x_right || y_top > y_bottom {
            return Err(BBoxError::Inverted {
                x_left,
                y_top,
                x_right,
                y_bottom,
            });
        }
        Ok(BBox {
            x_left,
            y_top,
            x_right,
            y_bottom,
        })
    }

    /// Builds a box from GQA's `(x, y, w, h)` form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, BBoxError> {
        if !w.is_finite() || w < 0.0 {
            return Err(BBoxError::BadCoordinate(w));
        }
        if !h.is_finite() || h < 0.0 {
            return Err(BBoxError::BadCoordinate(h));
        }
        BBox::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn height(&self) -> f64 {
        self.y_bottom - self.y_top
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_zero_area(&self) -> bool {
        self.area() == 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_left + self.x_right) / 2.0,
            (self.y_top + self.y_bottom) / 2.0,
        )
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_right <= f64::from(width) && self.y_bottom <= f64::from(height)
    }
}

/// Renders pixel coordinates the way the generation prompt prints them,
/// e.g. `(346, 0, 391, 70)`.
impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            PixelCoord(self.x_left),
            PixelCoord(self.y_top),
            PixelCoord(self.x_right),
            PixelCoord(self.y_bottom)
        )
    }
}

struct PixelCoord(f64);

impl fmt::Display for PixelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == libm::trunc(self.0) && self.0.abs() < 1e15 {
            write!(f, "{}", self.0 as i64)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Normalized box with every component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBBox {
    pub x_l: f64,
    pub y_l: f64,
    pub x_r: f64,
    pub y_r: f64,
}

impl NormBBox {
    pub fn new(x_l: f64, y_l: f64, x_r: f64, y_r: f64) -> Result<Self, BBoxError> {
        for v in [x_l, y_l, x_r, y_r] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(BBoxError::OutOfUnitRange(v));
            }
        }
        if x_l > x_r || y_l > y_r {
            return Err(BBoxError::Inverted {
                x_left: x_l,
                y_top: y_l,
                x_right: x_r,
                y_bottom: y_r,
            });
        }
        Ok(NormBBox { x_l, y_l, x_r, y_r })
    }

    pub fn area(&self) -> f64 {
        (self.x_r - self.x_l) * (self.y_r - self.y_l)
    }

    pub fn components(&self) -> [f64; 4] {
        [self.x_l, self.y_l, self.x_r, self.y_r]
    }
}

/// Canonical wire rendering: `(0.51, 0.0, 0.54, 0.09)`.
impl fmt::Display for NormBBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            UnitCoord(self.x_l),
            UnitCoord(self.y_l),
            UnitCoord(self.x_r),
            UnitCoord(self.y_r)
        )
    }
}

/// Shortest decimal form with at least one fractional digit (`0.5`, `0.0`, `0.51`).
pub struct UnitCoord(pub f64);

impl fmt::Display for UnitCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = FixedBuf::new();
        let _ = fmt::write(&mut buf, format_args!("{:.*}", MAX_PRECISION as usize, self.0));
        let s = buf.as_str();
        let trimmed = match s.find('.') {
            Some(dot) => {
                let t = s.trim_end_matches('0');
                if t.len() == dot + 1 {
                    &s[..dot + 2]
                } else {
                    t
                }
            }
            None => s,
        };
        f.write_str(trimmed)
    }
}

// Stack buffer for formatting a single coordinate without allocating.
struct FixedBuf {
    bytes: [u8; 48],
    len: usize,
}

impl FixedBuf {
    fn new() -> Self {
        FixedBuf {
            bytes: [0; 48],
            len: 0,
        }
    }

    fn as_str(&self) -> &str {
        core::str::from_utf8(&self.bytes[..self.len]).unwrap_or("")
    }
}

impl fmt::Write for FixedBuf {
    fn write_str(&mut self, s: &str) -> fmt::Result {
        let end = self.len + s.len();
        if end > self.bytes.len() {
            return Err(fmt::Error);
        }
        self.bytes[self.len..end].copy_from_slice(s.as_bytes());
        self.len = end;
        Ok(())
    }
}

/// Divides `value` by `denom` and rounds half away from zero to `precision`
/// decimals. Integral inputs take an exact integer path so that ties such as
/// `0.785` round the way hand arithmetic does.
pub fn round_ratio(value: f64, denom: f64, precision: u32) -> f64 {
    let precision = precision.min(MAX_PRECISION);
    let scale = 10u64.pow(precision);
    let exact = value == libm::trunc(value)
        && denom == libm::trunc(denom)
        && value.abs() < 1e12
        && denom > 0.0
        && denom < 1e12;
    if exact {
        let num = value.abs() as u128 * u128::from(scale);
        let den = denom as u128;
        let mut q = num / den;
        let r = num % den;
        if 2 * r >= den {
            q += 1;
        }
        let out = q as f64 / scale as f64;
        if value < 0.0 {
            -out
        } else {
            out
        }
    } else {
        round_to(value / denom, precision)
    }
}

/// Rounds half away from zero to `precision` decimals.
pub fn round_to(value: f64, precision: u32) -> f64 {
    let scale = libm::pow(10.0, f64::from(precision.min(MAX_PRECISION)));
    libm::round(value * scale) / scale
}

/// Normalizes a pixel box by the larger image dimension.
///
/// Boxes that overshoot the image are clamped to `[0, 1]` after division.
pub fn normalize_bbox(b: &BBox, width: u32, height: u32, precision: u32) -> NormBBox {
    let denom = f64::from(width.max(height).max(1));
    let norm = |v: f64| round_ratio(v, denom, precision).clamp(0.0, 1.0);
    NormBBox {
        x_l: norm(b.x_left),
        y_l: norm(b.y_top),
        x_r: norm(b.x_right),
        y_r: norm(b.y_bottom),
    }
}
