//! Uniformly sampled observable records.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub enum SeriesValues {
    /// Real samples; `NaN` marks a sample that is undefined (for instance a
    /// normalised correlation whose denominator fell below its floor).
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl SeriesValues {
    pub fn len(&self) -> usize {
        match self {
            Self::Real(v) => v.len(),
            Self::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub values: SeriesValues,
    pub label: String,
    pub meta: Option<ModelParams>,
}

impl TimeSeries {
    pub fn real(label: impl Into<String>, t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::checked(label.into(), t, SeriesValues::Real(values))
    }

    pub fn complex(label: impl Into<String>, t: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        Self::checked(label.into(), t, SeriesValues::Complex(values))
    }

    fn checked(label: String, t: Vec<f64>, values: SeriesValues) -> Result<Self> {
        if t.len() != values.len() {
            return Err(Error::Dimension(format!(
                "series '{label}': {} times but {} values",
                t.len(),
                values.len()
            )));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!("series '{label}': times not increasing")));
        }
        Ok(Self {
            t,
            values,
            label,
            meta: None,
        })
    }

    pub fn with_meta(mut self, params: ModelParams) -> Self {
        self.meta = Some(params);
        self
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Real samples; complex series yield their real parts.
    pub fn real_values(&self) -> Vec<f64> {
        match &self.values {
            SeriesValues::Real(v) => v.clone(),
            SeriesValues::Complex(v) => v.iter().map(|z| z.re).collect(),
        }
    }

    /// Sampling interval, if the grid is uniform to `1e-9` relative.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.t.len() < 2 {
            return None;
        }
        let h = (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64;
        let uniform = self
            .t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
        uniform.then_some(h)
    }

    /// Samples with `t` in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        self.t
            .iter()
            .zip(self.real_values())
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(t, v)| (*t, v))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(TimeSeries::real("x", vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(TimeSeries::real("x", vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn uniform_detection() {
        let s = TimeSeries::real("x", vec![0.0, 0.1, 0.2, 0.3], vec![0.0; 4]).unwrap();
        assert!((s.uniform_step().unwrap() - 0.1).abs() < 1e-15);
        let s = TimeSeries::real("x", vec![0.0, 0.1, 0.25], vec![0.0; 3]).unwrap();
        assert!(s.uniform_step().is_none());
    }
}
