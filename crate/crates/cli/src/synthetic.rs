//! Seeded synthetic task families standing in for handwriting-style motion
//! datasets.
//!
//! Every shape is a smooth curve through the unit box that ends at the
//! origin. Demonstrations of one task differ by a smooth random deformation
//! of size `noise` that vanishes at the goal, so the starts vary while the
//! goal is shared.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DataKind, DatasetFile, TaskData};
use clfd_core::so3::{exp_map, RotationVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Line,
    Arc,
    Sine,
    SCurve,
    FigureEight,
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Line, Shape::Arc, Shape::Sine, Shape::SCurve, Shape::FigureEight];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Line => "line",
            Shape::Arc => "arc",
            Shape::Sine => "sine",
            Shape::SCurve => "s-curve",
            Shape::FigureEight => "figure-eight",
        }
    }

    /// Point at phase `s ∈ [0, 1]`.
    pub fn point(self, s: f64) -> [f64; 2] {
        match self {
            Shape::Line => [-1.0 + s, 0.6 * (1.0 - s)],
            Shape::Arc => {
                let a = PI * (1.0 - s);
                [-0.5 + 0.5 * a.cos(), 0.5 * a.sin()]
            }
            Shape::Sine => [-1.0 + s, 0.3 * (2.0 * PI * s).sin()],
            Shape::SCurve => [0.5 * (2.0 * PI * s).sin(), -1.0 + s],
            // Two lobes; the path crosses itself twice, so the same position
            // is visited with different headings.
            Shape::FigureEight => [0.6 * (2.0 * PI * s).sin(), 0.3 * (4.0 * PI * s).sin() - 0.3 * (1.0 - s)],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match Shape::ALL.into_iter().find(|shape| shape.name() == s) {
            Some(shape) => Ok(shape),
            None => bail!(
                "unknown shape '{s}' (expected one of {})",
                Shape::ALL.map(Shape::name).join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_name")]
    pub name: String,
    /// One task per entry.
    pub shapes: Vec<String>,
    pub demos: usize,
    pub steps: usize,
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// `quaternion` turns each curve into an orientation path.
    #[serde(default = "default_kind")]
    pub kind: DataKind,
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_kind() -> DataKind {
    DataKind::Position
}

impl SyntheticSpec {
    pub fn position(shapes: &[Shape], demos: usize, steps: usize, noise: f64, seed: u64) -> Self {
        Self {
            name: default_name(),
            shapes: shapes.iter().map(|s| s.name().to_string()).collect(),
            demos,
            steps,
            noise,
            seed,
            kind: DataKind::Position,
        }
    }
}

/// Builds the dataset described by `spec`. The same spec always produces the
/// same numbers.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<DatasetFile> {
    ensure!(!spec.shapes.is_empty(), "shapes: at least one shape is required");
    ensure!(spec.demos >= 1, "demos: at least one demonstration is required");
    ensure!(spec.steps >= 2, "steps: at least 2 points are required");
    ensure!(spec.noise.is_finite() && spec.noise >= 0.0, "noise: must be non-negative");
    let shapes = spec.shapes.iter().map(|s| s.parse()).collect::<Result<Vec<Shape>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tasks = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let mut demonstrations = Vec::with_capacity(spec.demos);
        for _ in 0..spec.demos {
            let mut coeffs = [0.0; 4];
            for c in &mut coeffs {
                *c = spec.noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            }
            let demo: Vec<Vec<f64>> = (0..spec.steps)
                .map(|n| {
                    let s = n as f64 / (spec.steps - 1) as f64;
                    let p = shape.point(s);
                    let bump = (PI * s).sin();
                    let x = p[0] + coeffs[0] * (1.0 - s) + coeffs[1] * bump;
                    let y = p[1] + coeffs[2] * (1.0 - s) + coeffs[3] * bump;
                    match spec.kind {
                        DataKind::Position => Ok(vec![x, y]),
                        DataKind::Quaternion => {
                            let q = exp_map(&RotationVector([0.5 * x, 0.5 * y, 0.3 * (1.0 - s)]))?;
                            Ok(q.to_array().to_vec())
                        }
                    }
                })
                .collect::<Result<_>>()?;
            demonstrations.push(demo);
        }
        tasks.push(TaskData {
            task_name: shape.name().to_string(),
            demonstrations,
        });
    }
    let mut data = DatasetFile {
        name: spec.name.clone(),
        kind: spec.kind,
        dim: if spec.kind == DataKind::Position { 2 } else { 4 },
        recording_frequency: None,
        tasks,
    };
    data.canonicalize();
    data.validate()?;
    Ok(data)
}
