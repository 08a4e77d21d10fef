//! Increasing families of compact sets `K_0 ⊂ int K_1 ⊂ ...` covering `R^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of every member of a [`CompactFamily`].
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Closed Euclidean ball of radius `r_j`.
    Ball,
    /// Axis-aligned box with half-width `r_j * aspect[i]` along axis `i`.
    /// An empty `aspect` means a cube.
    Box { aspect: Vec<f64> },
}

/// `K_j` centered at `center` with scale `r_j = r0 * growth^j`, `growth > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFamily", into = "RawFamily")]
pub struct CompactFamily {
    shape: Shape,
    center: Vec<f64>,
    r0: f64,
    growth: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeName {
    Ball,
    Box,
}

/// Flat serialized form: `shape = "ball" | "box"`, `aspect` only for boxes.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    shape: ShapeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aspect: Option<Vec<f64>>,
    center: Vec<f64>,
    r0: f64,
    growth: f64,
}

impl TryFrom<RawFamily> for CompactFamily {
    type Error = Error;
    fn try_from(raw: RawFamily) -> Result<Self> {
        let shape = match (raw.shape, raw.aspect) {
            (ShapeName::Ball, None) => Shape::Ball,
            (ShapeName::Ball, Some(_)) => {
                return Err(Error::InvalidCompacts(
                    "`aspect` applies to boxes only".into(),
                ))
            }
            (ShapeName::Box, aspect) => Shape::Box {
                aspect: aspect.unwrap_or_default(),
            },
        };
        CompactFamily::new(shape, raw.center, raw.r0, raw.growth)
    }
}

impl From<CompactFamily> for RawFamily {
    fn from(f: CompactFamily) -> Self {
        let (shape, aspect) = match f.shape {
            Shape::Ball => (ShapeName::Ball, None),
            Shape::Box { aspect } if aspect.is_empty() => (ShapeName::Box, None),
            Shape::Box { aspect } => (ShapeName::Box, Some(aspect)),
        };
        RawFamily {
            shape,
            aspect,
            center: f.center,
            r0: f.r0,
            growth: f.growth,
        }
    }
}

impl CompactFamily {
    pub fn new(shape: Shape, center: Vec<f64>, r0: f64, growth: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidCompacts(
                "center must have dimension >= 1".into(),
            ));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCompacts("center must be finite".into()));
        }
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::InvalidCompacts(format!(
                "r0 must be positive, got {r0}"
            )));
        }
        if !(growth.is_finite() && growth > 1.0) {
            return Err(Error::InvalidCompacts(format!(
                "growth must exceed 1 so that K_j lies in the interior of K_(j+1), got {growth}"
            )));
        }
        if let Shape::Box { aspect } = &shape {
            if !aspect.is_empty() && aspect.len() != center.len() {
                return Err(Error::Dimension {
                    what: "box aspect",
                    expected: center.len(),
                    got: aspect.len(),
                });
            }
            if aspect.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(Error::InvalidCompacts(
                    "box aspect entries must be positive".into(),
                ));
            }
        }
        Ok(CompactFamily {
            shape,
            center,
            r0,
            growth,
        })
    }

    pub fn ball(center: Vec<f64>, r0: f64, growth: f64) -> Result<Self> {
        Self::new(Shape::Ball, center, r0, growth)
    }

    pub fn cube(center: Vec<f64>, r0: f64, growth: f64) -> Result<Self> {
        Self::new(Shape::Box { aspect: Vec::new() }, center, r0, growth)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// Scale of `K_j`; `+inf` once it overflows.
    pub fn radius(&self, j: u64) -> f64 {
        let j = i32::try_from(j).unwrap_or(i32::MAX);
        self.r0 * self.growth.powi(j)
    }

    fn half_width(&self, radius: f64, axis: usize) -> f64 {
        match &self.shape {
            Shape::Box { aspect } if !aspect.is_empty() => radius * aspect[axis],
            _ => radius,
        }
    }

    /// `x ∈ K_j` (closed sets).
    #[inline]
    pub fn contains(&self, j: u64, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        let r = self.radius(j);
        match self.shape {
            Shape::Ball => {
                let d2: f64 = x
                    .iter()
                    .zip(&self.center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum();
                d2.sqrt() <= r
            }
            Shape::Box { .. } => x
                .iter()
                .zip(&self.center)
                .enumerate()
                .all(|(i, (xi, ci))| (xi - ci).abs() <= self.half_width(r, i)),
        }
    }

    /// Euclidean distance from `x` to the boundary of `K_j`.
    pub fn boundary_distance(&self, j: u64, x: &[f64]) -> f64 {
        let r = self.radius(j);
        match self.shape {
            Shape::Ball => {
                let norm = x
                    .iter()
                    .zip(&self.center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum::<f64>()
                    .sqrt();
                (r - norm).abs()
            }
            Shape::Box { .. } => {
                if self.contains(j, x) {
                    x.iter()
                        .zip(&self.center)
                        .enumerate()
                        .map(|(i, (xi, ci))| self.half_width(r, i) - (xi - ci).abs())
                        .fold(f64::INFINITY, f64::min)
                } else {
                    x.iter()
                        .zip(&self.center)
                        .enumerate()
                        .map(|(i, (xi, ci))| {
                            let excess = ((xi - ci).abs() - self.half_width(r, i)).max(0.0);
                            excess * excess
                        })
                        .sum::<f64>()
                        .sqrt()
                }
            }
        }
    }

    /// Smallest `j` with `x ∈ K_j`; `None` only for non-finite `x`.
    pub fn member_index(&self, x: &[f64]) -> Option<u64> {
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        (0u64..).find(|&j| self.contains(j, x))
    }

    /// Indices `j` whose scale is still finite.
    pub fn representable(&self) -> impl Iterator<Item = u64> + '_ {
        (0u64..).take_while(move |&j| self.radius(j).is_finite())
    }
}
