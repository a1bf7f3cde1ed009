//! Physical constants, vapor thermodynamics, cell/beam geometry, and the
//! calibration between laboratory units (mW, mm, °C) and model units (rad/s).
//!
//! Everything here is a pure function of its arguments; all outputs are SI
//! with angular frequencies in rad/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fundamental constants and species data for the D1 line of Rb-87.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysConsts {
    /// Reduced Planck constant (J·s).
    pub hbar: f64,
    /// Boltzmann constant (J/K).
    pub kb: f64,
    /// Atomic mass (kg).
    pub mass: f64,
    /// Optical wavelength (m).
    pub lambda: f64,
    /// Speed of light (m/s).
    pub c: f64,
    /// Vacuum permittivity (F/m).
    pub eps0: f64,
}

impl PhysConsts {
    /// Rb-87 driven on its 795 nm line.
    pub fn rb87() -> Self {
        Self {
            hbar: 1.054_571_817e-34,
            kb: 1.380_649e-23,
            mass: 1.443_160_60e-25,
            lambda: 795e-9,
            c: 299_792_458.0,
            eps0: 8.854_187_8128e-12,
        }
    }

    /// Optical angular frequency 2πc/λ (rad/s).
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.c / self.lambda
    }

    /// Optical wavenumber 2π/λ (rad/m).
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda
    }
}

impl Default for PhysConsts {
    fn default() -> Self {
        Self::rb87()
    }
}

/// Vapor-cell parameters; rates are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    /// Cell length (m).
    pub length: f64,
    /// Cell inner radius (m).
    pub radius: f64,
    /// Vapor temperature (K).
    pub temperature: f64,
    /// Ground-state population relaxation rate γ₀ (rad/s).
    pub gamma0: f64,
    /// Ground-state coherence relaxation rate γ₁₂ (rad/s).
    pub gamma12: f64,
    /// Excited-state population decay rate γ (rad/s); optical coherences
    /// decay at γ/2.
    pub gamma: f64,
    /// Doppler width (FWHM of the optical-detuning distribution, rad/s).
    pub doppler_width: f64,
    /// Multiplier on the vapor density (1.0 = nominal; 0.0 = empty cell,
    /// useful for shot-noise checks).
    pub density_scale: f64,
}

impl CellConfig {
    /// The 7.5 cm × 2.5 cm coated cell at 63.7 °C with 10 Hz ground-state
    /// relaxation, 6 MHz excited-state decay, and 500 MHz Doppler width.
    pub fn default_cell() -> Self {
        let twopi = 2.0 * std::f64::consts::PI;
        Self {
            length: 7.5e-2,
            radius: 1.25e-2,
            temperature: 63.7 + 273.15,
            gamma0: twopi * 10.0,
            gamma12: twopi * 10.0,
            gamma: twopi * 6.0e6,
            doppler_width: twopi * 500.0e6,
            density_scale: 1.0,
        }
    }

    /// Validate positivity and rate ordering.
    pub fn validate(&self) -> Result<()> {
        if self.length <= 0.0 || self.radius <= 0.0 {
            return Err(Error::Geometry("cell length and radius must be positive".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Domain("temperature must be positive".into()));
        }
        if self.gamma0 < 0.0 || self.gamma12 < 0.0 || self.gamma < self.gamma12 {
            return Err(Error::Domain("need γ ≥ γ₁₂ ≥ 0 and γ₀ ≥ 0".into()));
        }
        if self.doppler_width <= 0.0 {
            return Err(Error::Domain("Doppler width must be positive".into()));
        }
        if self.density_scale < 0.0 {
            return Err(Error::Domain("density scale must be nonnegative".into()));
        }
        Ok(())
    }

    /// Vapor density including the configured scale factor (m⁻³).
    pub fn density(&self) -> Result<f64> {
        Ok(self.density_scale * vapor_density(self.temperature)?)
    }
}

/// Beam polarization of a channel's drive field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    /// Drive along x; squeezed vacuum generated along y (the default).
    H,
    /// Drive along y; the defect orientation.
    V,
}

/// Piecewise-constant power envelope: (t_start, t_end, scale) segments,
/// scale 1 outside all segments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Envelope(pub Vec<(f64, f64, f64)>);

impl Envelope {
    /// Power scale factor at time `t`.
    pub fn at(&self, t: f64) -> f64 {
        for &(t0, t1, s) in &self.0 {
            if t >= t0 && t < t1 {
                return s;
            }
        }
        1.0
    }

    /// Check that segments are ordered, non-overlapping, and nonnegative.
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = f64::NEG_INFINITY;
        for &(t0, t1, s) in &self.0 {
            if t1 <= t0 {
                return Err(Error::Config(format!("empty envelope segment [{t0}, {t1})")));
            }
            if t0 < prev_end {
                return Err(Error::Config("overlapping envelope segments".into()));
            }
            if s < 0.0 {
                return Err(Error::Config("negative envelope scale".into()));
            }
            prev_end = t1;
        }
        Ok(())
    }

    /// Times at which the envelope switches value, sorted.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.0.iter().flat_map(|&(t0, t1, _)| [t0, t1]).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

/// One illuminated channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Beam radius r_i (m); the 1/e² waist is 2·r_i.
    pub radius: f64,
    /// Optical power (W).
    pub power: f64,
    /// Drive polarization.
    pub polarization: Polarization,
    /// One-photon detuning δ′ (rad/s), positive = red.
    pub detuning: f64,
    /// Pulsed-power envelope (empty = always on at `power`).
    #[serde(default)]
    pub envelope: Envelope,
}

impl ChannelSpec {
    /// A continuously driven H-polarized resonant channel.
    pub fn steady(radius: f64, power: f64) -> Self {
        Self {
            radius,
            power,
            polarization: Polarization::H,
            detuning: 0.0,
            envelope: Envelope::default(),
        }
    }

    /// Beam cross-section πr² (m²).
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }
}

/// Validate an array of channels against the cell geometry.
pub fn validate_channels(cell: &CellConfig, channels: &[ChannelSpec]) -> Result<()> {
    let mut r2_sum = 0.0;
    for (i, ch) in channels.iter().enumerate() {
        if ch.radius <= 0.0 || ch.radius >= cell.radius {
            return Err(Error::Geometry(format!(
                "channel {i}: radius {} m outside (0, {})",
                ch.radius, cell.radius
            )));
        }
        if ch.power < 0.0 {
            return Err(Error::Domain(format!("channel {i}: negative power")));
        }
        ch.envelope.validate()?;
        r2_sum += ch.radius * ch.radius;
    }
    if r2_sum >= cell.radius * cell.radius {
        return Err(Error::Geometry(format!(
            "beams fill the cell cross-section (Σr² = {r2_sum:.3e} ≥ R² = {:.3e}); no dark region left",
            cell.radius * cell.radius
        )));
    }
    Ok(())
}

/// Saturated rubidium vapor density (m⁻³) from the empirical liquid-phase
/// vapor-pressure fit log₁₀P[torr] = 15.88253 − 4529.635/T + 0.00058663·T −
/// 2.99138·log₁₀T and the ideal-gas law.
pub fn vapor_density(t_kelvin: f64) -> Result<f64> {
    if !(t_kelvin > 273.0 && t_kelvin < 400.0) {
        return Err(Error::Domain(format!(
            "vapor curve valid for 273 K < T < 400 K, got {t_kelvin} K"
        )));
    }
    let log10_p_torr =
        15.88253 - 4529.635 / t_kelvin + 0.00058663 * t_kelvin - 2.99138 * t_kelvin.log10();
    let p_pa = 10f64.powf(log10_p_torr) * 133.322_368;
    Ok(p_pa / (PhysConsts::rb87().kb * t_kelvin))
}

/// Mean thermal speed v̄ = sqrt(8 k_B T / (π m)) (m/s).
pub fn mean_speed(t_kelvin: f64) -> f64 {
    let k = PhysConsts::rb87();
    (8.0 * k.kb * t_kelvin / (std::f64::consts::PI * k.mass)).sqrt()
}

/// Exchange rates between each channel and the dark region:
/// k_i0 = v̄/(2 r_i) (channel → dark) and
/// k_0i = k_i0 · r_i²/(R² − Σ_j r_j²) (dark → channel).
pub fn exchange_rates(cell: &CellConfig, channels: &[ChannelSpec]) -> Result<(Vec<f64>, Vec<f64>)> {
    validate_channels(cell, channels)?;
    let vbar = mean_speed(cell.temperature);
    let r2_sum: f64 = channels.iter().map(|c| c.radius * c.radius).sum();
    let dark_r2 = cell.radius * cell.radius - r2_sum;
    let k_i0: Vec<f64> = channels.iter().map(|c| vbar / (2.0 * c.radius)).collect();
    let k_0i: Vec<f64> = channels
        .iter()
        .zip(&k_i0)
        .map(|(c, k)| k * c.radius * c.radius / dark_r2)
        .collect();
    Ok((k_i0, k_0i))
}

/// Reference 1/e² beam waist for the Rabi-frequency calibration (m).
pub const RABI_REF_WAIST: f64 = 0.505e-3;

/// Reference calibration: ordinary-frequency Rabi MHz produced by 1 mW at the
/// reference waist.
pub const RABI_MHZ_PER_SQRT_MW: f64 = 43.6;

/// Drive Rabi frequency (rad/s) for a beam of `power` W with 1/e² waist
/// `waist` m, scaling as sqrt(P/A) and calibrated so that 1 mW at the
/// reference waist gives 2π·`calib_mhz`·10⁶ rad/s.
pub fn power_to_rabi(power: f64, waist: f64, calib_mhz: f64) -> f64 {
    2.0 * std::f64::consts::PI
        * calib_mhz
        * 1e6
        * (power / 1e-3).sqrt()
        * (RABI_REF_WAIST / waist)
}

/// Photon flux P/(ħω) of a beam (photons/s).
pub fn photon_flux(power: f64, k: &PhysConsts) -> f64 {
    power / (k.hbar * k.omega())
}

/// Resonant absorption cross-section of a closed transition, 3λ²/(2π) (m²).
pub fn resonant_cross_section(k: &PhysConsts) -> f64 {
    1.5 * k.lambda * k.lambda / std::f64::consts::PI
}

/// Atom numbers per channel (density × beam cylinder) and in the dark region
/// (density × remaining cross-section × length).
pub fn atom_numbers(cell: &CellConfig, channels: &[ChannelSpec]) -> Result<(Vec<f64>, f64)> {
    validate_channels(cell, channels)?;
    let n = cell.density()?;
    let n_i: Vec<f64> = channels.iter().map(|c| n * c.area() * cell.length).collect();
    let r2_sum: f64 = channels.iter().map(|c| c.radius * c.radius).sum();
    let dark_area = std::f64::consts::PI * (cell.radius * cell.radius - r2_sum);
    Ok((n_i, n * dark_area * cell.length))
}
