use crate::error::{Error, Result};

/// Piecewise-linear scalar multiplier of time.
///
/// A jump is written as two breakpoints at the same time. Sampling exactly at
/// the jump returns the left limit; any later time sees the right value.
/// Outside the breakpoint range the end values are held.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProgram {
    points: Vec<(f64, f64)>,
}

impl LoadProgram {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("load program needs at least one breakpoint".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 >= w[0].0) {
                return Err(Error::Config("load program times must be non-decreasing".into()));
            }
        }
        for w in points.windows(3) {
            if w[0].0 == w[2].0 {
                return Err(Error::Config("at most two breakpoints may share a time".into()));
            }
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Config("load program values must be finite".into()));
        }
        Ok(LoadProgram { points })
    }

    pub fn constant(value: f64) -> Self {
        LoadProgram { points: vec![(0.0, value)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t1 == t0 {
                continue;
            }
            if t <= t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }
}
