//! Linearised delay model: effective decay, Laplace-domain denominator,
//! complex poles and the analytic linear spectrum.
//!
//! In the weak-excitation limit the emitter behaves as a second oscillator
//! and the cavity amplitude obeys
//!
//! ```text
//! a(s) = [ ... ] / D(s),
//! D(s) = s + kappa + i delta + k e^{-s tau + i phi} + g^2 / (s + i delta)
//! ```
//!
//! with `kappa = kappa1 + kappa2` and `k = 2 sqrt(kappa1 kappa2)`. Poles are
//! located as zeros of the entire function `N(s) = (s + i delta) D(s)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::observables::{FrequencyGrid, Spectrum, Window};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearParams {
    pub g: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub tau: f64,
    pub phi: f64,
    pub delta: f64,
    pub drive_amplitude: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            kappa1: 0.0,
            kappa2: 0.0,
            tau: 0.0,
            phi: 0.0,
            delta: 0.0,
            drive_amplitude: 0.0,
        }
    }
}

impl From<&ModelParams> for LinearParams {
    fn from(p: &ModelParams) -> Self {
        Self {
            g: p.g,
            kappa1: p.kappa1,
            kappa2: p.kappa2,
            tau: p.tau,
            phi: p.phi,
            delta: p.delta,
            drive_amplitude: p.drive_amplitude,
        }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g", self.g),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("tau", self.tau),
            ("phi", self.phi),
            ("delta", self.delta),
            ("drive_amplitude", self.drive_amplitude),
        ] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("kappa1", self.kappa1), ("kappa2", self.kappa2), ("tau", self.tau)] {
            if v < 0.0 {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa1 + self.kappa2
    }

    pub fn k(&self) -> f64 {
        2.0 * (self.kappa1 * self.kappa2).sqrt()
    }

    /// Parameters with the opposite detuning and phase; their denominator
    /// governs the creation operator.
    pub fn conjugate(&self) -> Self {
        Self {
            phi: -self.phi,
            delta: -self.delta,
            ..self.clone()
        }
    }
}

/// Zero-delay amplitude decay coefficient `kappa1 + kappa2 + 2 sqrt(kappa1 kappa2) e^{i phi}`.
pub fn effective_decay(kappa1: f64, kappa2: f64, phi: f64) -> C64 {
    let k = 2.0 * (kappa1 * kappa2).sqrt();
    if k == 0.0 {
        return C64::new(kappa1 + kappa2, 0.0);
    }
    // e^{i pi} rounds to -1 + 1.2e-16 i; snap the exact half-turn
    let e = if phi.rem_euclid(2.0 * PI) == PI {
        C64::new(-1.0, 0.0)
    } else {
        C64::from_polar(1.0, phi)
    };
    C64::new(kappa1 + kappa2, 0.0) + k * e
}

fn feedback_term(s: C64, p: &LinearParams) -> C64 {
    if p.k() == 0.0 {
        return C64::new(0.0, 0.0);
    }
    p.k() * (-s * p.tau + I * p.phi).exp()
}

/// `D(s)`; errors at the singular point `s = -i delta` when `g != 0`.
pub fn transfer_denominator(s: C64, p: &LinearParams) -> Result<C64> {
    let base = s + p.kappa() + I * p.delta + feedback_term(s, p);
    if p.g == 0.0 {
        return Ok(base);
    }
    let pole = s + I * p.delta;
    if pole == C64::new(0.0, 0.0) {
        return Err(Error::Singular(format!("D(s) is singular at s = {s}")));
    }
    Ok(base + p.g * p.g / pole)
}

/// `N(s) = (s + i delta) D(s)` and `N'(s)`; for `g = 0` simply `D` and `D'`.
fn entire(s: C64, p: &LinearParams) -> (C64, C64) {
    let fb = feedback_term(s, p);
    let base = s + p.kappa() + I * p.delta + fb;
    let dbase = C64::new(1.0, 0.0) - p.tau * fb;
    if p.g == 0.0 {
        return (base, dbase);
    }
    let w = s + I * p.delta;
    (w * base + p.g * p.g, base + w * dbase)
}

/// Rectangle in the complex `s` plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoleWindow {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Default for PoleWindow {
    fn default() -> Self {
        Self {
            re_min: -2.0,
            re_max: 0.0,
            im_min: -3.0,
            im_max: 3.0,
        }
    }
}

impl PoleWindow {
    pub fn symmetric(re_min: f64, half_width: f64) -> Self {
        Self {
            re_min,
            re_max: 0.0,
            im_min: -half_width,
            im_max: half_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite())
            && self.re_min < self.re_max
            && self.im_min < self.im_max;
        if !ok {
            return Err(Error::Validation(format!("invalid pole window {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, s: C64) -> bool {
        s.re >= self.re_min && s.re <= self.re_max && s.im >= self.im_min && s.im <= self.im_max
    }

    fn scale(&self) -> f64 {
        (self.re_max - self.re_min).max(self.im_max - self.im_min)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoleSet {
    /// Sorted by decreasing real part (least damped first).
    pub poles: Vec<C64>,
    /// `|D(s)|` at each pole.
    pub residuals: Vec<f64>,
    pub window: PoleWindow,
    /// Zero count from the argument principle on the window boundary.
    pub winding: i64,
    /// Subcells `(lower-left, upper-right)` where Newton failed from every seed.
    pub flagged_cells: Vec<(C64, C64)>,
    /// Seeds per axis in the last grid used.
    pub density: usize,
}

impl PoleSet {
    pub fn least_damped(&self) -> Option<C64> {
        self.poles.first().copied()
    }

    /// Spectral peak position `omega = -Im s` of each pole.
    pub fn peak_frequencies(&self) -> Vec<f64> {
        self.poles.iter().map(|s| -s.im).collect()
    }
}

fn newton(mut s: C64, p: &LinearParams, limit: f64) -> Option<C64> {
    for _ in 0..100 {
        let (n, dn) = entire(s, p);
        if !dn.is_finite() || dn == C64::new(0.0, 0.0) {
            return None;
        }
        let step = n / dn;
        s -= step;
        if !s.is_finite() || s.norm() > limit {
            return None;
        }
        if step.norm() <= 1e-15 * s.norm().max(1.0) {
            return Some(s);
        }
    }
    let (n, dn) = entire(s, p);
    ((n / dn).norm() <= 1e-12 * s.norm().max(1.0)).then_some(s)
}

/// Number of zeros of `N` inside `w`, from the winding of its phase along
/// the boundary. Segments are subdivided until the phase changes by less
/// than 0.25 rad between samples.
pub fn winding_number(p: &LinearParams, w: &PoleWindow) -> Result<i64> {
    let corners = [
        C64::new(w.re_min, w.im_min),
        C64::new(w.re_max, w.im_min),
        C64::new(w.re_max, w.im_max),
        C64::new(w.re_min, w.im_max),
    ];
    let mut total = 0.0;
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        for j in 0..64 {
            let x = a + (b - a) * (j as f64 / 64.0);
            let y = a + (b - a) * ((j + 1) as f64 / 64.0);
            total += phase_change(p, x, y, 0)?;
        }
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

fn value_on_boundary(p: &LinearParams, s: C64) -> Result<C64> {
    let f = entire(s, p).0;
    if f.norm() < 1e-300 {
        return Err(Error::Singular(format!(
            "denominator vanishes on the window boundary near {s}"
        )));
    }
    Ok(f)
}

/// Phase change of `N` from `a` to `b`; a segment is accepted once both of
/// its halves turn by less than 0.25 rad.
fn phase_change(p: &LinearParams, a: C64, b: C64, depth: usize) -> Result<f64> {
    let fa = value_on_boundary(p, a)?;
    let fb = value_on_boundary(p, b)?;
    let m = (a + b) / 2.0;
    let fm = value_on_boundary(p, m)?;
    let d1 = (fm / fa).arg();
    let d2 = (fb / fm).arg();
    if d1.abs() < 0.25 && d2.abs() < 0.25 {
        return Ok(d1 + d2);
    }
    if depth > 40 {
        return Err(Error::Singular(format!(
            "a zero lies on the window boundary near {a}; widen or shift the window"
        )));
    }
    Ok(phase_change(p, a, m, depth + 1)? + phase_change(p, m, b, depth + 1)?)
}

/// Grid-seeded Newton search for the zeros of `D` in `window`, checked
/// against the argument principle. `density` is the number of seeds per
/// axis (at least 8); it is doubled up to three times if the count is short.
pub fn find_poles(p: &LinearParams, window: &PoleWindow, density: usize) -> Result<PoleSet> {
    p.validate()?;
    window.validate()?;
    if density < 8 {
        return Err(Error::Validation(format!("density {density} below 8 seeds per axis")));
    }
    let winding = winding_number(p, window)?;
    let limit = 1e3 * (window.scale() + window.re_min.abs() + window.im_max.abs() + 1.0);
    let mut found: Vec<C64> = Vec::new();
    let mut flagged = Vec::new();
    let mut n = density;
    for _attempt in 0..4 {
        flagged.clear();
        let dx = (window.re_max - window.re_min) / (n - 1) as f64;
        let dy = (window.im_max - window.im_min) / (n - 1) as f64;
        let mut ok = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let seed = C64::new(window.re_min + i as f64 * dx, window.im_min + j as f64 * dy);
                if let Some(s) = newton(seed, p, limit) {
                    ok[i * n + j] = true;
                    let inside = s.re >= window.re_min - 1e-9
                        && s.re <= window.re_max + 1e-9
                        && s.im >= window.im_min - 1e-9
                        && s.im <= window.im_max + 1e-9;
                    if inside && !found.iter().any(|z| (z - s).norm() < 1e-6) {
                        found.push(s);
                    }
                }
            }
        }
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let any = ok[i * n + j] || ok[(i + 1) * n + j] || ok[i * n + j + 1] || ok[(i + 1) * n + j + 1];
                if !any {
                    flagged.push((
                        C64::new(window.re_min + i as f64 * dx, window.im_min + j as f64 * dy),
                        C64::new(window.re_min + (i + 1) as f64 * dx, window.im_min + (j + 1) as f64 * dy),
                    ));
                }
            }
        }
        if found.iter().filter(|s| window.contains(**s)).count() as i64 >= winding {
            break;
        }
        n *= 2;
    }
    found.retain(|s| window.contains(*s));
    found.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let residuals = found
        .iter()
        .map(|&s| transfer_denominator(s, p).map(|d| d.norm()))
        .collect::<Result<Vec<_>>>()?;
    if let Some((s, r)) = found.iter().zip(&residuals).find(|(_, r)| **r > 1e-9) {
        return Err(Error::NoConvergence(format!("pole {s} has residual {r:.2e}")));
    }
    if found.len() as i64 != winding {
        return Err(Error::NoConvergence(format!(
            "found {} poles but the boundary winding counts {winding}",
            found.len()
        )));
    }
    Ok(PoleSet {
        poles: found,
        residuals,
        window: *window,
        winding,
        flagged_cells: flagged,
        density: n,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSpectrumForm {
    /// `g^2 E^2 / |D(-i w)|^2`.
    #[default]
    Envelope,
    /// `|g^2 E^2 / (D(-i w) D~(-i w) s^2 (s^2 + delta^2))|` at `s = -i w`,
    /// where `D~` has the opposite detuning and phase.
    Printed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpectrum {
    pub spectrum: Spectrum,
    /// Grid frequencies (units of `g`) dropped as singular.
    pub excluded: Vec<f64>,
}

/// Analytic weak-drive spectrum on a grid given in units of `g`.
pub fn linear_spectrum(
    grid: &FrequencyGrid,
    p: &LinearParams,
    form: LinearSpectrumForm,
    normalize: bool,
) -> Result<LinearSpectrum> {
    p.validate()?;
    grid.validate()?;
    if p.g == 0.0 {
        return Err(Error::Validation("frequencies are in units of g; g must be nonzero".into()));
    }
    let amp = (p.g * p.drive_amplitude).powi(2);
    let conj = p.conjugate();
    let mut omega = Vec::with_capacity(grid.points);
    let mut values = Vec::with_capacity(grid.points);
    let mut excluded = Vec::new();
    for w_g in grid.values() {
        let w = w_g * p.g;
        let s = C64::new(0.0, -w);
        let v = match form {
            LinearSpectrumForm::Envelope => transfer_denominator(s, p).map(|d| amp / d.norm_sqr()),
            LinearSpectrumForm::Printed => {
                let drive_pole = s * s * (s * s + p.delta * p.delta);
                if drive_pole.norm() < 1e-300 {
                    Err(Error::Singular("drive pole".into()))
                } else {
                    transfer_denominator(s, p)
                        .and_then(|d| Ok(d * transfer_denominator(s, &conj)?))
                        .map(|dd| (C64::new(amp, 0.0) / (dd * drive_pole)).norm())
                }
            }
        };
        match v {
            Ok(v) if v.is_finite() => {
                omega.push(w_g);
                values.push(v);
            }
            _ => excluded.push(w_g),
        }
    }
    if normalize {
        let m = values.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 {
            values.iter_mut().for_each(|v| *v /= m);
        }
    }
    Ok(LinearSpectrum {
        spectrum: Spectrum {
            omega,
            values,
            normalized: normalize,
            window: Window::None,
        },
        excluded,
    })
}
