//! Closed-form Λ-system optics, polarization self-rotation, and far-field
//! beam-array patterns.
//!
//! The closed forms serve two roles: they are fast analytic observables in
//! their own right (rotation angle, Stokes component), and they are
//! independent oracles for the numerical steady-state solver in the weak-probe
//! regime where their derivation holds (ground populations pinned at ½,
//! negligible excited population, detunings well inside the optical line).

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::physics::{resonant_cross_section, PhysConsts};

/// Parameters of the three-level Λ closed forms. `delta1`/`delta2` are the
/// full one-photon detunings of each circular component including any
/// AC-Stark contribution; `gamma` is the optical-coherence decay rate.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LambdaParams {
    pub omega1: f64,
    pub omega2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma: f64,
    pub gamma12: f64,
}

impl LambdaParams {
    /// Build from drive quantities: the detunings become
    /// `Δᵢ = Ωᵢ²/Δ_upper + δ_p` (AC-Stark shift plus common drive detuning).
    pub fn from_drive(
        omega1: f64,
        omega2: f64,
        delta_upper: f64,
        delta_p: f64,
        gamma: f64,
        gamma12: f64,
    ) -> Self {
        Self {
            omega1,
            omega2,
            delta1: omega1 * omega1 / delta_upper + delta_p,
            delta2: omega2 * omega2 / delta_upper + delta_p,
            gamma,
            gamma12,
        }
    }

    /// Circular-component imbalance (Ω₁²−Ω₂²)/(Ω₁²+Ω₂²).
    pub fn s_z(&self) -> f64 {
        let t = self.omega1 * self.omega1 + self.omega2 * self.omega2;
        if t == 0.0 {
            0.0
        } else {
            (self.omega1 * self.omega1 - self.omega2 * self.omega2) / t
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Domain(
                "optical coherence decay must be positive".into(),
            ));
        }
        if self.gamma12 < 0.0 || self.omega1 < 0.0 || self.omega2 < 0.0 {
            return Err(Error::Domain(
                "Rabi frequencies and gamma12 must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Weak-probe steady-state coherences of the Λ system.
#[derive(Copy, Clone, Debug)]
pub struct LambdaClosedForm {
    pub rho12: C64,
    pub rho13: C64,
    pub rho23: C64,
}

/// Closed-form steady coherences: the ground coherence from the balanced
/// two-photon equation, then each optical coherence with the ground
/// populations pinned at ½. Valid for drives weak against both the optical
/// decay and the ground relaxation.
pub fn analytic_lambda3(p: &LambdaParams) -> Result<LambdaClosedForm> {
    p.validate()?;
    let i = C64::new(0.0, 1.0);
    let denom12 = C64::new(
        p.gamma12 + (p.omega1 * p.omega1 + p.omega2 * p.omega2) / p.gamma,
        p.delta2 - p.delta1,
    );
    if denom12.norm() == 0.0 {
        return Err(Error::Degenerate(
            "ground coherence denominator vanished".into(),
        ));
    }
    let rho12 = C64::from(-p.omega1 * p.omega2 / p.gamma) / denom12;
    let rho13 = (i * 0.5 * p.omega1 + i * p.omega2 * rho12)
        / C64::new(p.gamma, -p.delta1);
    let rho23 = (i * 0.5 * p.omega2 + i * p.omega1 * rho12.conj())
        / C64::new(p.gamma, -p.delta2);
    Ok(LambdaClosedForm { rho12, rho13, rho23 })
}

/// Self-rotation observables of a linearly polarized beam.
#[derive(Copy, Clone, Debug)]
pub struct SelfRotation {
    /// Stokes S_y from the exact coherence expression (arbitrary units).
    pub sy: f64,
    /// Compact strong-coherence form of S_y (arbitrary units, proportional
    /// to `sy` for small imbalance and small detunings).
    pub sy_compact: f64,
    /// Susceptibility seen by the right-circular component.
    pub chi1: C64,
    /// Susceptibility seen by the left-circular component.
    pub chi2: C64,
    /// Polarization rotation phase over the cell (rad).
    pub phi: f64,
}

/// Evaluate the self-rotation of a beam through `length` m of vapor at the
/// given ground-state `density` (m⁻³).
///
/// Susceptibilities are normalized so that a bare resonant leg reproduces the
/// two-level absorption coefficient: `k₀·Im χ = n·σ₀` at line center.
pub fn self_rotation(
    p: &LambdaParams,
    density: f64,
    length: f64,
    k: &PhysConsts,
) -> Result<SelfRotation> {
    if density < 0.0 || length <= 0.0 {
        return Err(Error::Domain(
            "density must be non-negative and length positive".into(),
        ));
    }
    let cf = analytic_lambda3(p)?;
    let scale = 2.0 * density * resonant_cross_section(k) * p.gamma / k.wavenumber();
    let chi = |rho: C64, omega: f64| -> C64 {
        if omega == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::from(scale / omega) * rho
        }
    };
    let chi1 = chi(cf.rho13, p.omega1);
    let chi2 = chi(cf.rho23, p.omega2);
    let phi = std::f64::consts::PI * length * (chi1.re - chi2.re) / k.lambda;

    let d21 = p.delta2 - p.delta1;
    let sy = (d21 * (0.5 + cf.rho12.re) - 2.0 * p.gamma * cf.rho12.im)
        / (p.gamma * p.gamma + p.delta1 * p.delta1);
    let om_tot2 = p.omega1 * p.omega1 + p.omega2 * p.omega2;
    let d = p.gamma12 + om_tot2 / p.gamma;
    let sy_compact = p.s_z() * om_tot2 * (1.0 - 0.5 * om_tot2 / (d * d));
    Ok(SelfRotation {
        sy,
        sy_compact,
        chi1,
        chi2,
        phi,
    })
}

/// Far-field pattern of an aperture: padded 2-D discrete Fourier transform.
#[derive(Clone, Debug)]
pub struct FarField {
    /// Centered (DC in the middle) transform amplitude, unnormalized.
    pub amplitude: Array2<C64>,
    /// Centered intensity, normalized to unit peak.
    pub intensity: Array2<f64>,
}

/// Compute the far-field diffraction pattern of a complex aperture.
///
/// The aperture is zero-padded by `pad_factor` in each dimension (4 is a good
/// default for smooth fringes), transformed, and centered.
pub fn far_field(aperture: &Array2<C64>, pad_factor: usize) -> Result<FarField> {
    let (r, c) = aperture.dim();
    if r < 2 || c < 2 {
        return Err(Error::Dimension(format!(
            "aperture grid {r}×{c} is too small"
        )));
    }
    if pad_factor == 0 {
        return Err(Error::Domain("pad factor must be at least 1".into()));
    }
    let (rr, cc) = (r * pad_factor, c * pad_factor);
    if rr > 8192 || cc > 8192 {
        return Err(Error::Resource(format!(
            "far-field grid {rr}×{cc} exceeds the 8192² limit"
        )));
    }
    let mut field = Array2::<C64>::zeros((rr, cc));
    field.slice_mut(s![..r, ..c]).assign(aperture);
    fft2_in_place(&mut field);
    let amplitude = fftshift(&field);
    let mut intensity = amplitude.mapv(|z| z.norm_sqr());
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        intensity.mapv_inplace(|x| x / peak);
    }
    Ok(FarField { amplitude, intensity })
}

/// In-place 2-D FFT (rows then columns).
fn fft2_in_place(a: &mut Array2<C64>) {
    let (r, c) = a.dim();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(c);
    for mut row in a.rows_mut() {
        row_fft.process(row.as_slice_mut().expect("row-major rows are contiguous"));
    }
    let col_fft = planner.plan_fft_forward(r);
    let mut buf = vec![C64::new(0.0, 0.0); r];
    for j in 0..c {
        for i in 0..r {
            buf[i] = a[[i, j]];
        }
        col_fft.process(&mut buf);
        for i in 0..r {
            a[[i, j]] = buf[i];
        }
    }
}

/// Move the zero-frequency bin to the center.
fn fftshift(a: &Array2<C64>) -> Array2<C64> {
    let (r, c) = a.dim();
    Array2::from_shape_fn((r, c), |(i, j)| a[[(i + r / 2) % r, (j + c / 2) % c]])
}

/// Near-square centered grid of `n` beam positions with the given pitch (m).
pub fn grid_layout(n: usize, pitch: f64) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let (row, col) = (idx / cols, idx % cols);
        out.push((
            (col as f64 - (cols as f64 - 1.0) / 2.0) * pitch,
            (row as f64 - (rows as f64 - 1.0) / 2.0) * pitch,
        ));
    }
    out
}

/// Sample a coherent array of Gaussian beams onto an `n_px`×`n_px` grid
/// spanning ±`extent` m. Each beam has 1/e² intensity waist `2·radius` and a
/// complex weight (amplitude and phase).
pub fn aperture_from_layout(
    layout: &[(f64, f64)],
    radius: f64,
    weights: &[C64],
    n_px: usize,
    extent: f64,
) -> Result<Array2<C64>> {
    if layout.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} beam positions but {} weights",
            layout.len(),
            weights.len()
        )));
    }
    if !(radius > 0.0 && extent > 0.0) || n_px < 2 {
        return Err(Error::Domain("aperture geometry must be positive".into()));
    }
    let step = 2.0 * extent / n_px as f64;
    let mut a = Array2::<C64>::zeros((n_px, n_px));
    for ((i, j), e) in a.indexed_iter_mut() {
        let y = -extent + (i as f64 + 0.5) * step;
        let x = -extent + (j as f64 + 0.5) * step;
        let mut sum = C64::new(0.0, 0.0);
        for (&(bx, by), &wt) in layout.iter().zip(weights) {
            let d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
            sum += wt * C64::from((-d2 / (4.0 * radius * radius)).exp());
        }
        *e = sum;
    }
    Ok(a)
}
