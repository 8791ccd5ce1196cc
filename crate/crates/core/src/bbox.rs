use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel box in corner form. Serialized as
/// `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox2D {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if [x_min, y_min, x_max, y_max].iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("bounding box", "non-finite coordinate"));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::invalid(
                "bounding box",
                format!("need x_min < x_max and y_min < y_max, got ({x_min}, {y_min}, {x_max}, {y_max})"),
            ));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed-interval containment on both axes.
    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.x_min <= u && u <= self.x_max && self.y_min <= v && v <= self.y_max
    }

    pub fn iou(&self, other: &BBox2D) -> f64 {
        let ow = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let oh = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = ow * oh;
        inter / (self.area() + other.area() - inter)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BBox2D {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox2D::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox2D> for [f64; 4] {
    fn from(b: BBox2D) -> Self {
        b.to_array()
    }
}
