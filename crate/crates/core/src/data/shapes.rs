use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CflError;

/// The six built-in shape classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Circle,
    Square,
    Triangle,
    Cross,
    Star,
    Ring,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 6] = [
        ShapeClass::Circle,
        ShapeClass::Square,
        ShapeClass::Triangle,
        ShapeClass::Cross,
        ShapeClass::Star,
        ShapeClass::Ring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Circle => "circle",
            ShapeClass::Square => "square",
            ShapeClass::Triangle => "triangle",
            ShapeClass::Cross => "cross",
            ShapeClass::Star => "star",
            ShapeClass::Ring => "ring",
        }
    }

    /// Membership test in the shape's local frame, `u, v` in `[-1, 1]`
    /// with `v` pointing down. Every shape fits in the unit disc, so any
    /// rotation of it stays inside its footprint.
    pub(crate) fn contains(self, u: f32, v: f32) -> bool {
        let r2 = u * u + v * v;
        match self {
            ShapeClass::Circle => r2 <= 1.0,
            ShapeClass::Square => u.abs() <= 0.7 && v.abs() <= 0.7,
            ShapeClass::Triangle => triangle_contains(u, v),
            ShapeClass::Cross => {
                (u.abs() <= 0.3 && v.abs() <= 0.95) || (v.abs() <= 0.3 && u.abs() <= 0.95)
            }
            ShapeClass::Star => star_contains(u, v),
            ShapeClass::Ring => (0.36..=1.0).contains(&r2),
        }
    }

    /// `contains` for the shape rotated by `angle` radians.
    pub(crate) fn contains_rotated(self, u: f32, v: f32, angle: f32) -> bool {
        let (s, c) = angle.sin_cos();
        self.contains(c * u + s * v, -s * u + c * v)
    }
}

/// Equilateral triangle with circumradius 0.95, apex up.
fn triangle_contains(u: f32, v: f32) -> bool {
    let inradius = 0.475;
    [90.0f32, 210.0, 330.0].iter().all(|deg| {
        let (s, c) = deg.to_radians().sin_cos();
        u * c + v * s <= inradius
    })
}

fn star_contains(u: f32, v: f32) -> bool {
    let mut poly = [(0.0f32, 0.0f32); 10];
    for (i, p) in poly.iter_mut().enumerate() {
        let r = if i % 2 == 0 { 1.0 } else { 0.45 };
        let a = -std::f32::consts::FRAC_PI_2 + i as f32 * std::f32::consts::PI / 5.0;
        *p = (r * a.cos(), r * a.sin());
    }
    // even-odd ray casting
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = CflError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShapeClass::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| CflError::Config(format!("unknown shape class '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in ShapeClass::ALL {
            assert_eq!(c.name().parse::<ShapeClass>().unwrap(), c);
        }
        assert!("hexagon".parse::<ShapeClass>().is_err());
    }

    #[test]
    fn shapes_fit_the_unit_disc() {
        for shape in ShapeClass::ALL {
            for i in 0..200 {
                for j in 0..200 {
                    let (u, v) = (-1.0 + i as f32 * 0.01, -1.0 + j as f32 * 0.01);
                    if u * u + v * v > 1.0 {
                        assert!(!shape.contains(u, v), "{shape} at {u},{v}");
                    }
                }
            }
        }
    }

    #[test]
    fn rotation_by_a_quarter_turn_maps_a_cross_to_itself() {
        for (u, v) in [(0.1, 0.8), (0.5, 0.5), (0.0, 0.0), (0.9, 0.2)] {
            assert_eq!(
                ShapeClass::Cross.contains(u, v),
                ShapeClass::Cross.contains_rotated(u, v, std::f32::consts::FRAC_PI_2)
            );
        }
        assert!(ShapeClass::Square.contains_rotated(0.0, 0.95, std::f32::consts::FRAC_PI_4));
        assert!(!ShapeClass::Square.contains(0.0, 0.95));
    }

    #[test]
    fn shapes_differ_in_their_centers() {
        assert!(ShapeClass::Circle.contains(0.0, 0.0));
        assert!(!ShapeClass::Ring.contains(0.0, 0.0));
        assert!(ShapeClass::Star.contains(0.0, 0.0));
        assert!(!ShapeClass::Star.contains(0.9, 0.9));
        assert!(!ShapeClass::Cross.contains(0.7, 0.7));
        assert!(ShapeClass::Square.contains(0.65, 0.65));
        assert!(ShapeClass::Triangle.contains(0.0, -0.9));
        assert!(!ShapeClass::Triangle.contains(0.0, 0.5));
    }
}
