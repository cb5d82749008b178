//! Position-trajectory dissimilarity: dynamic time warping, discrete Fréchet
//! distance and swept area.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::Trajectory;

fn euclid(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_dims(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidInput("empty point sequence".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            context: "trajectory comparison",
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    Ok(())
}

/// Dynamic-programming DTW over raw point sequences (rows are points),
/// Euclidean point cost, no band, summed along the optimal alignment.
pub fn dtw_points(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    check_dims(&a, &b)?;
    let m = b.nrows();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for i in 0..a.nrows() {
        for j in 0..m {
            let cost = euclid(a.row(i), b.row(j));
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

pub fn dtw(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    dtw_points(a.points(), b.points())
}

/// Discrete Fréchet distance: the smallest achievable maximum point distance
/// over all monotone couplings.
pub fn frechet_points(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    check_dims(&a, &b)?;
    let m = b.nrows();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for i in 0..a.nrows() {
        for j in 0..m {
            let cost = euclid(a.row(i), b.row(j));
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = cost.max(best);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

pub fn discrete_frechet(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    frechet_points(a.points(), b.points())
}

fn triangle_area(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>, r: ArrayView1<'_, f64>) -> f64 {
    let u: Vec<f64> = q.iter().zip(p.iter()).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = r.iter().zip(p.iter()).map(|(a, b)| a - b).collect();
    if u.len() == 2 {
        0.5 * (u[0] * v[1] - u[1] * v[0]).abs()
    } else {
        let c = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }
}

/// Area swept between corresponding segments of two equal-length paths.
///
/// Each quadrilateral `p_t, p_{t+1}, p̂_{t+1}, p̂_t` is split into two
/// triangles along a diagonal. Both diagonals are used and averaged, which
/// gives the exact area for convex quadrilaterals and keeps the measure
/// symmetric in its arguments.
pub fn swept_area_points(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    check_dims(&a, &b)?;
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "swept area needs equal lengths, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if !(2..=3).contains(&a.ncols()) {
        return Err(Error::InvalidInput(format!(
            "swept area is defined for 2-D and 3-D paths, got {}-D",
            a.ncols()
        )));
    }
    let mut total = 0.0;
    for t in 0..a.nrows().saturating_sub(1) {
        let (p0, p1, q0, q1) = (a.row(t), a.row(t + 1), b.row(t), b.row(t + 1));
        let first = triangle_area(p0, p1, q1) + triangle_area(p0, q1, q0);
        let second = triangle_area(q0, q1, p1) + triangle_area(q0, p1, p0);
        total += 0.5 * (first + second);
    }
    Ok(total)
}

pub fn swept_area(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    swept_area_points(a.points(), b.points())
}

/// Errors of one prediction against one demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionErrors {
    pub dtw: f64,
    pub frechet: f64,
    /// `None` when the state dimension is not 2 or 3.
    pub swept_area: Option<f64>,
}

pub fn position_errors(pred: &Trajectory, demo: &Trajectory) -> Result<PositionErrors> {
    let swept = if (2..=3).contains(&demo.dim()) && pred.len() == demo.len() {
        Some(swept_area(pred, demo)?)
    } else {
        None
    };
    Ok(PositionErrors {
        dtw: dtw(pred, demo)?,
        frechet: discrete_frechet(pred, demo)?,
        swept_area: swept,
    })
}

/// Mean errors over a set of demonstrations with the per-demo breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub dtw: f64,
    pub frechet: f64,
    pub swept_area: f64,
    pub per_demo: Vec<PositionErrors>,
}

impl ErrorReport {
    pub fn from_demos(per_demo: Vec<PositionErrors>) -> Self {
        let n = per_demo.len().max(1) as f64;
        Self {
            dtw: per_demo.iter().map(|e| e.dtw).sum::<f64>() / n,
            frechet: per_demo.iter().map(|e| e.frechet).sum::<f64>() / n,
            swept_area: per_demo.iter().filter_map(|e| e.swept_area).sum::<f64>() / n,
            per_demo,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_sequences_are_zero() {
        let a = array![[0.0, 1.0], [2.0, 3.0], [4.0, 1.0]];
        assert_eq!(dtw_points(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(frechet_points(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(swept_area_points(a.view(), a.view()).unwrap(), 0.0);
    }

    #[test]
    fn single_cell_dtw() {
        let a = array![[0.0]];
        let b = array![[3.0]];
        assert_eq!(dtw_points(a.view(), b.view()).unwrap(), 3.0);
    }

    #[test]
    fn parallel_offset_frechet() {
        let a = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let b = &a + &array![[0.0, 0.25]];
        assert!((frechet_points(a.view(), b.view()).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unit_square_swept_area() {
        let a = array![[0.0, 0.0], [1.0, 0.0]];
        let b = array![[0.0, 1.0], [1.0, 1.0]];
        assert!((swept_area_points(a.view(), b.view()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn swept_area_in_space() {
        let a = array![[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let b = array![[0.0, 0.0, 3.0], [0.0, 2.0, 3.0]];
        assert!((swept_area_points(a.view(), b.view()).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = array![[0.0, 0.0]];
        let b = array![[0.0, 0.0, 0.0]];
        assert!(matches!(dtw_points(a.view(), b.view()), Err(Error::DimensionMismatch { .. })));
        assert!(frechet_points(a.view(), b.view()).is_err());
    }

    #[test]
    fn swept_area_requires_equal_length() {
        let a = array![[0.0, 0.0], [1.0, 0.0]];
        let b = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(matches!(swept_area_points(a.view(), b.view()), Err(Error::ShapeMismatch(_))));
    }
}
