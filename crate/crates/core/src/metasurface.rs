//! Lorentzian element response and the unit-disk projection.
//!
//! Each element behaves as a damped resonator,
//!
//! ```text
//! phi(w) = F w^2 / (w0^2 - w^2 + j kappa w)
//! ```
//!
//! so a single parameter triple fixes its reflection coefficient on every
//! subcarrier at once.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::LorentzBounds;

/// Parameters of one resonating element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonator {
    /// Oscillator strength.
    pub f: f64,
    /// Resonance angular frequency (normalized, rad/sample).
    pub omega0: f64,
    /// Damping factor (normalized, rad/sample).
    pub kappa: f64,
}

impl Resonator {
    pub const fn new(f: f64, omega0: f64, kappa: f64) -> Self {
        Resonator { f, omega0, kappa }
    }

    #[inline]
    fn denominator(&self, w: f64) -> Complex64 {
        Complex64::new(self.omega0 * self.omega0 - w * w, self.kappa * w)
    }

    /// Response at `w`, or `None` at the singularity (`w == omega0`, `kappa == 0`).
    #[inline]
    pub fn response(&self, w: f64) -> Option<Complex64> {
        let den = self.denominator(w);
        if den.re == 0.0 && den.im == 0.0 {
            return None;
        }
        Some(self.f * w * w / den)
    }

    /// Response and its partial derivatives with respect to `(f, omega0, kappa)`.
    #[inline]
    pub fn response_with_jacobian(&self, w: f64) -> Option<(Complex64, [Complex64; 3])> {
        let den = self.denominator(w);
        if den.re == 0.0 && den.im == 0.0 {
            return None;
        }
        let inv = 1.0 / den;
        let w2 = w * w;
        let d = self.f * w2 * inv;
        let d_f = w2 * inv;
        // dd/dden = -F w^2 / den^2 = -d / den
        let d_den = -d * inv;
        let d_omega0 = d_den * (2.0 * self.omega0);
        let d_kappa = d_den * Complex64::new(0.0, w);
        Some((d, [d_f, d_omega0, d_kappa]))
    }

    /// Response, gradient and Hessian with respect to `(f, omega0, kappa)`.
    pub fn response_with_hessian(&self, w: f64) -> Option<(Complex64, [Complex64; 3], [[Complex64; 3]; 3])> {
        let (d, jac) = self.response_with_jacobian(w)?;
        let inv = 1.0 / self.denominator(w);
        let inv2 = inv * inv;
        let jw = Complex64::new(0.0, w);
        let (w0, w2) = (self.omega0, w * w);
        let f_w0 = -2.0 * w0 * w2 * inv2;
        let f_k = -jw * w2 * inv2;
        let w0_w0 = -2.0 * d * inv + 8.0 * w0 * w0 * d * inv2;
        let w0_k = 4.0 * w0 * jw * d * inv2;
        let k_k = -2.0 * w2 * d * inv2;
        let zero = Complex64::new(0.0, 0.0);
        Some((d, jac, [[zero, f_w0, f_k], [f_w0, w0_w0, w0_k], [f_k, w0_k, k_k]]))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.f, self.omega0, self.kappa]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Resonator::new(a[0], a[1], a[2])
    }

    /// Clamps into the box, flooring `f` and `omega0` at their minimum.
    pub fn clamped(&self, b: &LorentzBounds) -> Self {
        Resonator {
            f: self.f.clamp(b.f_min, b.f_max),
            omega0: self.omega0.clamp(b.omega_min, b.omega_max),
            kappa: self.kappa.clamp(-b.kappa_max, b.kappa_max),
        }
    }

    pub fn in_bounds(&self, b: &LorentzBounds) -> bool {
        self.f > 0.0
            && self.f <= b.f_max
            && self.omega0 > 0.0
            && self.omega0 <= b.omega_max
            && self.kappa.abs() <= b.kappa_max
    }
}

/// Per-element parameters of one surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub elements: Vec<Resonator>,
}

impl LorentzianParams {
    pub fn new(elements: Vec<Resonator>) -> Self {
        LorentzianParams { elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn in_bounds(&self, b: &LorentzBounds) -> bool {
        self.elements.iter().all(|r| r.in_bounds(b))
    }
}

/// Complex reflection coefficients, `K x M`, row-major by subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionProfile {
    pub subcarriers: usize,
    pub elements: usize,
    values: Vec<Complex64>,
}

impl ReflectionProfile {
    pub fn zeros(subcarriers: usize, elements: usize) -> Self {
        ReflectionProfile {
            subcarriers,
            elements,
            values: vec![Complex64::new(0.0, 0.0); subcarriers * elements],
        }
    }

    pub fn from_fn(subcarriers: usize, elements: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(subcarriers * elements);
        for k in 0..subcarriers {
            for m in 0..elements {
                values.push(f(k, m));
            }
        }
        ReflectionProfile { subcarriers, elements, values }
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize) -> Complex64 {
        self.values[k * self.elements + m]
    }

    #[inline]
    pub fn set(&mut self, k: usize, m: usize, v: Complex64) {
        self.values[k * self.elements + m] = v;
    }

    /// Coefficients of all elements at subcarrier `k`.
    #[inline]
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.elements..(k + 1) * self.elements]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Column `m` across subcarriers.
    pub fn column(&self, m: usize) -> Vec<Complex64> {
        (0..self.subcarriers).map(|k| self.get(k, m)).collect()
    }

    pub fn set_column(&mut self, m: usize, col: &[Complex64]) {
        for (k, v) in col.iter().enumerate() {
            self.set(k, m, *v);
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise distance to `other`.
    pub fn max_abs_diff(&self, other: &ReflectionProfile) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Uniform bin grid `w_k = pi k / K`, `k = 1..K`.
pub fn omega_grid(subcarriers: usize) -> Vec<f64> {
    let kf = subcarriers as f64;
    (1..=subcarriers)
        .map(|k| if k == subcarriers { std::f64::consts::PI } else { std::f64::consts::PI * k as f64 / kf })
        .collect()
}

/// Evaluates every element on the bin grid.
pub fn lorentzian_response(params: &LorentzianParams, omega: &[f64]) -> Result<ReflectionProfile> {
    let mut out = ReflectionProfile::zeros(omega.len(), params.len());
    for (m, r) in params.elements.iter().enumerate() {
        for (k, &w) in omega.iter().enumerate() {
            let v = r.response(w).ok_or(Error::Singularity { element: m, bin: k })?;
            out.set(k, m, v);
        }
    }
    Ok(out)
}

/// Radial projection onto the closed unit disk.
#[inline]
pub fn project_unit_disk(y: Complex64) -> Complex64 {
    let r = y.norm();
    if r > 1.0 {
        y / r
    } else {
        y
    }
}

/// Largest on-grid modulus of one element's response; infinite at a singularity.
pub fn element_peak(r: &Resonator, omega: &[f64]) -> f64 {
    omega
        .iter()
        .map(|&w| r.response(w).map_or(f64::INFINITY, |v| v.norm()))
        .fold(0.0, f64::max)
}

/// Rescales `f` so the element's on-grid modulus does not exceed one. The
/// response is linear in `f`, so this is exact. Returns `false` when the
/// floor on `f` prevents it.
pub fn limit_modulus(r: &mut Resonator, omega: &[f64], bounds: &LorentzBounds) -> bool {
    let peak = element_peak(r, omega);
    if !peak.is_finite() {
        return false;
    }
    if peak > 1.0 {
        let scaled = r.f / peak;
        if scaled < bounds.f_min {
            r.f = bounds.f_min;
            return element_peak(r, omega) <= 1.0;
        }
        r.f = scaled;
    }
    true
}

/// Starting parameters: resonances spread across the bin grid, unit
/// damping, and oscillator strength 0.5 reduced where needed so the
/// on-grid modulus stays within the unit disk.
pub fn initial_params(elements: usize, omega: &[f64], bounds: &LorentzBounds) -> LorentzianParams {
    let nk = omega.len();
    LorentzianParams::new(
        (0..elements)
            .map(|m| {
                let bin = (m * nk) / elements.max(1);
                let mut r = Resonator::new(0.5, omega[bin.min(nk - 1)], 1.0).clamped(bounds);
                limit_modulus(&mut r, omega, bounds);
                r
            })
            .collect(),
    )
}
