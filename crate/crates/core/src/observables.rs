//! Output-field correlation functions, power spectra and Fourier transforms
//! of time traces.
//!
//! Correlations are read from released bins of a finished run. With base bin
//! `m` and lag `p`,
//!
//! ```text
//! g1(p) = <b^dag_{m-p} b_m> / <b^dag_m b_m>
//! g2(p) = <b^dag_{m-p} b_{m-p} b^dag_m b_m> / <b^dag_m b_m>^2      p > 0
//! g2(0) = <b^dag b^dag b b>_m / <b^dag_m b_m>^2
//! ```
//!
//! Bins at different times commute, so the time-ordered and the plain
//! product agree for `p > 0`.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{annihilation, number, pair_number};
use crate::mps::{MpsState, SiteLabel};
use crate::series::TimeSeries;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    G1,
    G2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSeries {
    pub kind: CorrelationKind,
    /// Lags `p * dt`, `p = 0..=max_lag`.
    pub tau: Vec<f64>,
    pub values: Vec<C64>,
    /// Time stamp `m * dt` of the base bin.
    pub base_time: f64,
    /// Denominator used: `<b^dag b>` of the base bin (g1) or its square (g2).
    pub normalization: f64,
}

impl CorrelationSeries {
    pub fn dt(&self) -> f64 {
        if self.tau.len() > 1 {
            self.tau[1] - self.tau[0]
        } else {
            0.0
        }
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// Mean of the final 10% of lags (at least one sample).
    pub fn tail_mean(&self) -> C64 {
        let n = self.values.len();
        let k = (n / 10).max(1);
        self.values[n - k..].iter().sum::<C64>() / k as f64
    }
}

fn base_position(state: &MpsState, base: i64, max_lag: usize) -> Result<usize> {
    let pos = state
        .position_of(SiteLabel::Bin(base))
        .ok_or_else(|| Error::Validation(format!("bin {base} is not on the chain")))?;
    if pos >= state.center() {
        return Err(Error::Validation(format!("bin {base} has not been released yet")));
    }
    if max_lag > pos {
        return Err(Error::Validation(format!(
            "lag {max_lag} reaches past the oldest retained bin ({pos} bins before {base})"
        )));
    }
    Ok(pos)
}

fn base_occupation(state: &MpsState, pos: usize, dt: f64, floor: f64) -> Result<f64> {
    let d = state.physical_dim(pos);
    let n = state.expectation(&[(pos, &number(d))])?.re;
    if n / dt < floor {
        return Err(Error::Singular(format!(
            "output flux {:.3e} at the base bin is below the floor {floor:.1e}",
            n / dt
        )));
    }
    Ok(n)
}

/// Normalised first-order correlation of the output field, lags `0..=max_lag`.
/// `floor` bounds the base-bin photon flux from below.
pub fn g1_output(
    state: &MpsState,
    base: i64,
    max_lag: usize,
    dt: f64,
    floor: f64,
) -> Result<CorrelationSeries> {
    let pos = base_position(state, base, max_lag)?;
    let n = base_occupation(state, pos, dt, floor)?;
    let d = state.physical_dim(pos);
    let b = annihilation(d);
    let bd = b.adjoint()?;
    let lagged = state.correlation_sweep(pos, &b, &bd, max_lag)?;
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(C64::new(1.0, 0.0));
    values.extend(lagged.into_iter().map(|z| z / n));
    Ok(CorrelationSeries {
        kind: CorrelationKind::G1,
        tau: (0..=max_lag).map(|p| p as f64 * dt).collect(),
        values,
        base_time: base as f64 * dt,
        normalization: n,
    })
}

/// Normalised second-order correlation of the output field.
pub fn g2_output(
    state: &MpsState,
    base: i64,
    max_lag: usize,
    dt: f64,
    floor: f64,
) -> Result<CorrelationSeries> {
    let pos = base_position(state, base, max_lag)?;
    let n = base_occupation(state, pos, dt, floor)?;
    let d = state.physical_dim(pos);
    let num = number(d);
    let zero = state.expectation(&[(pos, &pair_number(d))])?.re;
    let lagged = state.correlation_sweep(pos, &num, &num, max_lag)?;
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(C64::new(zero / (n * n), 0.0));
    values.extend(lagged.into_iter().map(|z| z / (n * n)));
    Ok(CorrelationSeries {
        kind: CorrelationKind::G2,
        tau: (0..=max_lag).map(|p| p as f64 * dt).collect(),
        values,
        base_time: base as f64 * dt,
        normalization: n * n,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Frequencies in units of `g`.
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    pub normalized: bool,
    pub window: Window,
}

/// Uniform frequency grid, in units of the coupling `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            omega_min: -3.0,
            omega_max: 3.0,
            points: 1201,
        }
    }
}

impl FrequencyGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_min.is_finite() && self.omega_max.is_finite())
            || self.omega_max <= self.omega_min
        {
            return Err(Error::Validation("frequency grid needs omega_min < omega_max".into()));
        }
        if self.points < 2 {
            return Err(Error::Validation("frequency grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points)
            .map(|i| self.omega_min + i as f64 * self.step())
            .collect()
    }
}

/// `S(w) = 2 dt Re sum_p [g1(tau_p) - g1_inf] e^{i w tau_p}`, with `g1_inf`
/// the tail mean. `g` converts the grid to physical frequencies.
pub fn power_spectrum(
    g1: &CorrelationSeries,
    grid: &FrequencyGrid,
    g: f64,
    normalize: bool,
) -> Result<Spectrum> {
    grid.validate()?;
    if g1.values.len() < 16 {
        return Err(Error::Validation(format!(
            "spectrum needs at least 16 lags, got {}",
            g1.values.len()
        )));
    }
    let dt = g1.dt();
    let inf = g1.tail_mean();
    let shifted: Vec<C64> = g1.values.iter().map(|z| z - inf).collect();
    let omega = grid.values();
    let mut values: Vec<f64> = omega
        .iter()
        .map(|&w| {
            let w = w * g;
            // e^{i w tau_p} by recurrence; accurate enough for the lag counts used
            let step = C64::from_polar(1.0, w * dt);
            let mut ph = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for (p, z) in shifted.iter().enumerate() {
                if p % 256 == 0 {
                    ph = C64::from_polar(1.0, w * dt * p as f64);
                }
                acc += z * ph;
                ph *= step;
            }
            2.0 * dt * acc.re
        })
        .collect();
    if normalize {
        normalize_max(&mut values)?;
    }
    Ok(Spectrum {
        omega,
        values,
        normalized: normalize,
        window: Window::None,
    })
}

fn normalize_max(values: &mut [f64]) -> Result<()> {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(m > 0.0) {
        return Err(Error::Singular("spectrum has no positive maximum".into()));
    }
    for v in values.iter_mut() {
        *v /= m;
    }
    Ok(())
}

/// Magnitude of the discrete Fourier transform of a mean-subtracted,
/// optionally windowed trace, scaled by the sample interval. Frequencies are
/// `2 pi k / (N dt)` in units of `g`; `pad_to` zero-pads to a longer length.
pub fn trace_fourier(
    series: &TimeSeries,
    window: Window,
    g: f64,
    pad_to: Option<usize>,
) -> Result<Spectrum> {
    let dt = series
        .uniform_step()
        .ok_or_else(|| Error::Validation(format!("series '{}' is not uniformly sampled", series.label)))?;
    let x = series.real_values();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("series '{}' has undefined samples", series.label)));
    }
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let nfft = pad_to.unwrap_or(n).max(n);
    let mut buf = vec![C64::new(0.0, 0.0); nfft];
    for (i, v) in x.iter().enumerate() {
        let w = match window {
            Window::None => 1.0,
            Window::Hann => 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1).max(1) as f64).cos(),
        };
        buf[i] = C64::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let half = nfft / 2;
    Ok(Spectrum {
        omega: (0..=half)
            .map(|k| 2.0 * PI * k as f64 / (nfft as f64 * dt) / g)
            .collect(),
        values: buf[..=half].iter().map(|z| z.norm() * dt).collect(),
        normalized: false,
        window,
    })
}

impl Spectrum {
    pub fn step(&self) -> f64 {
        self.omega[1] - self.omega[0]
    }

    /// Index of the largest value with `omega` in `[lo, hi]`.
    pub fn argmax_in(&self, lo: f64, hi: f64) -> Option<usize> {
        self.omega
            .iter()
            .enumerate()
            .filter(|(_, w)| **w >= lo && **w <= hi)
            .max_by(|a, b| self.values[a.0].total_cmp(&self.values[b.0]))
            .map(|(i, _)| i)
    }

    /// Indices of strict local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        let v = &self.values;
        (1..v.len().saturating_sub(1))
            .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
            .collect()
    }

    /// Distances from the peak at `idx` to the half-height crossings on its
    /// left and right, linearly interpolated; `None` where the spectrum
    /// stays above half height up to the grid edge.
    pub fn half_widths(&self, idx: usize) -> (Option<f64>, Option<f64>) {
        let v = &self.values;
        let half = v[idx] / 2.0;
        let cross = |a: usize, b: usize| {
            let (wa, wb) = (self.omega[a], self.omega[b]);
            wa + (half - v[a]) * (wb - wa) / (v[b] - v[a])
        };
        let left = (0..idx).rev().find(|&i| v[i] <= half).map(|l| self.omega[idx] - cross(l, l + 1));
        let right = (idx + 1..v.len()).find(|&i| v[i] <= half).map(|r| cross(r - 1, r) - self.omega[idx]);
        (left, right)
    }

    /// Full width at half maximum of the peak at `idx`, with linear
    /// interpolation of the two half-height crossings.
    pub fn fwhm(&self, idx: usize) -> Option<f64> {
        match self.half_widths(idx) {
            (Some(l), Some(r)) => Some(l + r),
            _ => None,
        }
    }

    /// Robust noise level: median plus three MAD-based standard deviations.
    pub fn noise_floor(&self) -> f64 {
        noise_floor(&self.values)
    }
}

pub fn noise_floor(values: &[f64]) -> f64 {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    med + 3.0 * 1.4826 * median(&dev)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(values: Vec<C64>, dt: f64) -> CorrelationSeries {
        CorrelationSeries {
            kind: CorrelationKind::G1,
            tau: (0..values.len()).map(|p| p as f64 * dt).collect(),
            values,
            base_time: 0.0,
            normalization: 1.0,
        }
    }

    #[test]
    fn flat_correlation_has_no_spectrum() {
        let g1 = synthetic(vec![C64::new(1.0, 0.0); 200], 0.1);
        let s = power_spectrum(&g1, &FrequencyGrid::default(), 1.0, false).unwrap();
        assert!(s.values.iter().all(|v| v.abs() < 1e-12));
        assert!(power_spectrum(&synthetic(vec![C64::new(1.0, 0.0); 10], 0.1), &FrequencyGrid::default(), 1.0, false).is_err());
    }

    #[test]
    fn exponential_gives_lorentzian() {
        let (kappa, dt) = (0.5, 0.01);
        let g1 = synthetic(
            (0..6000).map(|p| C64::new((-kappa * p as f64 * dt).exp(), 0.0)).collect(),
            dt,
        );
        let grid = FrequencyGrid { omega_min: -3.0, omega_max: 3.0, points: 601 };
        let s = power_spectrum(&g1, &grid, 1.0, true).unwrap();
        let i = s.argmax_in(-1.0, 1.0).unwrap();
        assert!(s.omega[i].abs() < 1e-12);
        let w = s.fwhm(i).unwrap();
        assert!((w - 2.0 * kappa).abs() < grid.step(), "{w}");
        // Lorentzian shape 2k/(k^2 + w^2) normalised
        let j = s.omega.iter().position(|w| (w - 1.0).abs() < 1e-9).unwrap();
        let want = kappa * kappa / (kappa * kappa + 1.0);
        assert!((s.values[j] - want).abs() < 1e-2);
    }

    #[test]
    fn real_symmetric_correlation_gives_even_spectrum() {
        let dt = 0.05;
        let g1 = synthetic(
            (0..400)
                .map(|p| {
                    let t = p as f64 * dt;
                    C64::new((-0.3 * t).exp() * (2.0 * t).cos(), 0.0)
                })
                .collect(),
            dt,
        );
        let s = power_spectrum(&g1, &FrequencyGrid::default(), 1.0, false).unwrap();
        let n = s.values.len();
        for i in 0..n {
            assert!((s.values[i] - s.values[n - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_on_synthetic_lorentzian() {
        // for real even g1, the spectrum is the full-line transform, so
        // (1/2pi) int S^2 dw = 2 int_0^inf g1^2 dt
        let (kappa, dt) = (1.0, 0.01);
        let g1 = synthetic(
            (0..4000).map(|p| C64::new((-kappa * p as f64 * dt).exp(), 0.0)).collect(),
            dt,
        );
        let grid = FrequencyGrid { omega_min: -300.0, omega_max: 300.0, points: 30001 };
        let s = power_spectrum(&g1, &grid, 1.0, false).unwrap();
        let lhs: f64 = s.values.iter().map(|v| v * v).sum::<f64>() * grid.step() / (2.0 * PI);
        let rhs = 2.0 * g1.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * dt;
        assert!((lhs - rhs).abs() / rhs < 2e-2, "{lhs} {rhs}");
    }

    #[test]
    fn fourier_of_constant_and_cosine() {
        let dt = 0.05;
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * dt).collect();
        let flat = TimeSeries::real("x", t.clone(), vec![3.0; 2000]).unwrap();
        let s = trace_fourier(&flat, Window::None, 1.0, None).unwrap();
        assert!(s.values.iter().all(|v| v.abs() < 1e-10));
        let g = 0.7;
        let cos = TimeSeries::real("x", t.clone(), t.iter().map(|t| (2.0 * g * t).cos()).collect()).unwrap();
        for w in [Window::None, Window::Hann] {
            let s = trace_fourier(&cos, w, g, None).unwrap();
            let i = s.argmax_in(0.0, f64::INFINITY).unwrap();
            assert!((s.omega[i] - 2.0).abs() <= s.step(), "{}", s.omega[i]);
        }
        let uneven = TimeSeries::real("x", vec![0.0, 1.0, 3.0], vec![0.0; 3]).unwrap();
        assert!(trace_fourier(&uneven, Window::None, 1.0, None).is_err());
    }

    #[test]
    fn fwhm_and_noise_helpers() {
        let omega: Vec<f64> = (0..101).map(|i| i as f64 * 0.1 - 5.0).collect();
        let values = omega.iter().map(|w| 1.0 / (1.0 + w * w)).collect();
        let s = Spectrum { omega, values, normalized: false, window: Window::None };
        let i = s.argmax_in(-1.0, 1.0).unwrap();
        assert!((s.fwhm(i).unwrap() - 2.0).abs() < 0.02);
        assert_eq!(s.local_maxima(), vec![50]);
        let floor = noise_floor(&[1.0, 1.1, 0.9, 1.0, 1.05, 0.95, 10.0]);
        assert!(floor < 2.0 && floor > 1.0);
    }
}
