//! Procedural fields built from constant-density spheres and boxes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::FieldOutput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned.
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Shape {
    fn contains(&self, p: &Vector3<f64>) -> bool {
        match self {
            Shape::Sphere { center, radius } => {
                let d = p - Vector3::from(*center);
                d.norm_squared() <= radius * radius
            }
            Shape::Box { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
        }
    }
}

/// Surface detail: a 3D lattice of cubes of side `fill · cell` painted in
/// `color`, one per `cell`-sized cell. On flat faces this shows up as a grid
/// of square tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub color: [f64; 3],
    pub cell: f64,
    pub fill: f64,
    #[serde(default)]
    pub offset: [f64; 3],
}

impl Pattern {
    fn covers(&self, p: &Vector3<f64>) -> bool {
        let lo = 0.5 * (1.0 - self.fill);
        let hi = 0.5 * (1.0 + self.fill);
        (0..3).all(|i| {
            let u = ((p[i] - self.offset[i]) / self.cell).rem_euclid(1.0);
            u >= lo && u < hi
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub color: [f64; 3],
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Pattern>,
}

impl Primitive {
    pub fn sphere(center: [f64; 3], radius: f64, color: [f64; 3], density: f64) -> Self {
        Self {
            shape: Shape::Sphere { center, radius },
            color,
            density,
            pattern: None,
        }
    }

    pub fn cuboid(min: [f64; 3], max: [f64; 3], color: [f64; 3], density: f64) -> Self {
        Self {
            shape: Shape::Box { min, max },
            color,
            density,
            pattern: None,
        }
    }

    pub fn with_pattern(mut self, pattern: Pattern) -> Self {
        self.pattern = Some(pattern);
        self
    }

    fn color_at(&self, p: &Vector3<f64>) -> [f64; 3] {
        match &self.pattern {
            Some(pat) if pat.covers(p) => pat.color,
            _ => self.color,
        }
    }
}

/// Density is the sum over containing primitives; color is their
/// density-weighted mean. Empty space has zero density and black color.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self { primitives }
    }

    pub fn eval(&self, p: &Vector3<f64>) -> FieldOutput {
        let mut sigma = 0.0;
        let mut rgb = [0.0; 3];
        for prim in &self.primitives {
            if prim.density > 0.0 && prim.shape.contains(p) {
                let c = prim.color_at(p);
                sigma += prim.density;
                for i in 0..3 {
                    rgb[i] += prim.density * c[i];
                }
            }
        }
        if sigma > 0.0 {
            for v in &mut rgb {
                *v = (*v / sigma).clamp(0.0, 1.0);
            }
        }
        FieldOutput { rgb, sigma }
    }
}
