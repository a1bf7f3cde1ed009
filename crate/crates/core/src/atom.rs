//! Level schemes, interaction matrices, relaxation, and the velocity grid.
//!
//! Three schemes are supported: a three-level Λ system (two ground states and
//! one excited state, useful for closed-form cross-checks), a four-level
//! double-Λ system (two ground states, two excited states), and the full
//! five-level system that adds the second hyperfine ground manifold as a trap
//! state. Basis orders are (g1, g2, e) for the Λ system and (x, y, e3, e4[,
//! t]) otherwise, where x/y are the two coherently coupled ground states and
//! t is the trap.
//!
//! The coherent part is expressed through a Hermitian matrix `M` with
//! `H = −ħM`, so the mean-field master equation reads `ρ̇ = +i[M, ρ] + …`.
//! Diagonal entries carry the level shifts: the two excited states sit at
//! `−δ_eff` and `−(δ_eff + Δ)` with `δ_eff = δ − k·v` the Doppler-shifted
//! two-photon detuning (positive `δ` = red detuning), and the trap state sits
//! at `+Δ_HF`. The drive enters through the real amplitude `α` and the
//! quantum field through a complex placeholder `a_y` that occupies the
//! co-rotating (excited,ground) slots; its adjoint fills the mirrored slots,
//! so `M` is Hermitian for any concrete value.
//!
//! Relaxation is described by an element-wise decay matrix `Γ` (rate for each
//! `ρ_{μν}`) plus a diagonal repopulation map that routes spontaneous decay
//! into the ground states by fixed branching ratios and redistributes ground
//! population isotropically at the wall/collision rate. The pair conserves
//! trace exactly.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{CellConfig, PhysConsts, Polarization};

/// Ground state coupled to the lower excited state (H-polarized branch).
pub const X: usize = 0;
/// Ground state coupled to the upper excited state (H-polarized branch).
pub const Y: usize = 1;
/// Lower excited state.
pub const E3: usize = 2;
/// Upper excited state.
pub const E4: usize = 3;
/// Trap state (second hyperfine ground manifold), five-level scheme only.
pub const TRAP: usize = 4;

/// Which level structure to use.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Two ground states, one excited state; no quantum-field slot.
    Lambda3,
    /// Two ground states, two excited states.
    DoubleLambda4,
    /// Four levels plus an uncoupled trap ground manifold.
    FiveLevel,
}

/// Level structure with its decay and coupling constants (all rates rad/s).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelScheme {
    pub kind: SchemeKind,
    /// Excited-state population decay rate.
    pub gamma: f64,
    /// Splitting between the two excited states.
    pub delta_upper: f64,
    /// Ground hyperfine splitting (five-level scheme only).
    pub delta_hf: f64,
    /// Branching of excited decay into (x, y, trap).
    pub branching: [f64; 3],
    /// Field coupling of the e3 transitions (√(rad/s)); drive Rabi scale for Λ3.
    pub g1: f64,
    /// Field coupling of the e4 transitions (√(rad/s)); drive Rabi scale for Λ3.
    pub g2: f64,
}

impl LevelScheme {
    /// Five-level scheme with the reference branching ratios.
    pub fn five_level(gamma: f64, g: f64) -> Self {
        Self {
            kind: SchemeKind::FiveLevel,
            gamma,
            delta_upper: 2.0 * std::f64::consts::PI * 814.5e6,
            delta_hf: 2.0 * std::f64::consts::PI * 6.8e9,
            branching: [0.38, 0.38, 0.24],
            g1: g,
            g2: g,
        }
    }

    /// Four-level double-Λ scheme (trap branch folded back into x and y).
    pub fn double_lambda(gamma: f64, g: f64) -> Self {
        Self {
            kind: SchemeKind::DoubleLambda4,
            ..Self::five_level(gamma, g)
        }
    }

    /// Three-level Λ scheme; `gamma_oc` is the optical-coherence decay rate,
    /// so the excited population decays at `2·gamma_oc`.
    pub fn lambda3(gamma_oc: f64) -> Self {
        Self {
            kind: SchemeKind::Lambda3,
            gamma: 2.0 * gamma_oc,
            delta_upper: 2.0 * std::f64::consts::PI * 814.5e6,
            delta_hf: 0.0,
            branching: [0.5, 0.5, 0.0],
            g1: 1.0,
            g2: 1.0,
        }
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        match self.kind {
            SchemeKind::Lambda3 => 3,
            SchemeKind::DoubleLambda4 => 4,
            SchemeKind::FiveLevel => 5,
        }
    }

    /// Check rate positivity and branching normalization.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Domain("excited decay rate must be positive".into()));
        }
        if self.branching.iter().any(|&b| b < 0.0) {
            return Err(Error::Domain("branching ratios must be non-negative".into()));
        }
        let sum: f64 = self.branching.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "branching ratios must sum to 1, got {sum}"
            )));
        }
        if self.kind == SchemeKind::DoubleLambda4 && self.branching[0] + self.branching[1] <= 0.0 {
            return Err(Error::Domain(
                "four-level scheme needs nonzero ground branching".into(),
            ));
        }
        if !(self.g1 >= 0.0 && self.g2 >= 0.0) {
            return Err(Error::Domain("field couplings must be non-negative".into()));
        }
        Ok(())
    }

    /// Branching into (x, y) renormalized over the retained ground states.
    fn ground_branching(&self) -> (f64, f64, f64) {
        match self.kind {
            SchemeKind::DoubleLambda4 => {
                let s = self.branching[0] + self.branching[1];
                (self.branching[0] / s, self.branching[1] / s, 0.0)
            }
            _ => (self.branching[0], self.branching[1], self.branching[2]),
        }
    }
}

/// Interaction matrix `M` (with `H = −ħM`) for one velocity class.
///
/// `alpha` is the real drive amplitude (drive Rabi frequency `Ω = √2·α·g1`),
/// `a_y` the concrete value substituted for the quantum-field placeholder
/// (zero at mean field), `delta_p` the two-photon detuning of the drive
/// (positive = red), and `v` the signed atomic velocity along the beam.
/// Velocities far outside the thermal distribution (beyond ±5 Doppler widths)
/// are accepted but physically negligible.
pub fn hamiltonian(
    scheme: &LevelScheme,
    pol: Polarization,
    alpha: f64,
    a_y: C64,
    delta_p: f64,
    v: f64,
    k: &PhysConsts,
) -> Array2<C64> {
    let delta_eff = delta_p - k.wavenumber() * v;
    let d = scheme.dim();
    let mut m = Array2::<C64>::zeros((d, d));
    match scheme.kind {
        SchemeKind::Lambda3 => {
            // Circular-component basis: AC-Stark-shifted grounds, shared
            // excited state at −δ_eff.
            let om1 = alpha * scheme.g1;
            let om2 = alpha * scheme.g2;
            m[[0, 0]] = C64::from(om1 * om1 / scheme.delta_upper);
            m[[1, 1]] = C64::from(om2 * om2 / scheme.delta_upper);
            m[[2, 2]] = C64::from(-delta_eff);
            m[[0, 2]] = C64::from(-om1);
            m[[2, 0]] = C64::from(-om1);
            m[[1, 2]] = C64::from(-om2);
            m[[2, 1]] = C64::from(-om2);
        }
        SchemeKind::DoubleLambda4 | SchemeKind::FiveLevel => {
            m[[E3, E3]] = C64::from(-delta_eff);
            m[[E4, E4]] = C64::from(-(delta_eff + scheme.delta_upper));
            if scheme.kind == SchemeKind::FiveLevel {
                m[[TRAP, TRAP]] = C64::from(scheme.delta_hf);
            }
            let root2 = std::f64::consts::SQRT_2;
            match pol {
                Polarization::H => {
                    // Drive on (x,e4) and (y,e3); field on (x,e3) and (y,e4).
                    m[[X, E4]] = C64::from(root2 * alpha * scheme.g2);
                    m[[E4, X]] = C64::from(root2 * alpha * scheme.g2);
                    m[[Y, E3]] = C64::from(root2 * alpha * scheme.g1);
                    m[[E3, Y]] = C64::from(root2 * alpha * scheme.g1);
                    m[[E3, X]] = scheme.g1 * a_y;
                    m[[X, E3]] = scheme.g1 * a_y.conj();
                    m[[E4, Y]] = scheme.g2 * a_y;
                    m[[Y, E4]] = scheme.g2 * a_y.conj();
                }
                Polarization::V => {
                    // Mirror image: drive on (x,e3) and (y,e4).
                    m[[X, E3]] = C64::from(root2 * alpha * scheme.g1);
                    m[[E3, X]] = C64::from(root2 * alpha * scheme.g1);
                    m[[Y, E4]] = C64::from(root2 * alpha * scheme.g2);
                    m[[E4, Y]] = C64::from(root2 * alpha * scheme.g2);
                    m[[E4, X]] = scheme.g2 * a_y;
                    m[[X, E4]] = scheme.g2 * a_y.conj();
                    m[[E3, Y]] = scheme.g1 * a_y;
                    m[[Y, E3]] = scheme.g1 * a_y.conj();
                }
            }
        }
    }
    m
}

/// Derivatives of the interaction matrix with respect to the quantum-field
/// placeholder: `(∂M/∂a_y, ∂M/∂a_y†)`. Zero matrices for the Λ3 scheme.
pub fn field_coupling(scheme: &LevelScheme, pol: Polarization) -> (Array2<C64>, Array2<C64>) {
    let d = scheme.dim();
    let mut v = Array2::<C64>::zeros((d, d));
    if scheme.kind != SchemeKind::Lambda3 {
        match pol {
            Polarization::H => {
                v[[E3, X]] = C64::from(scheme.g1);
                v[[E4, Y]] = C64::from(scheme.g2);
            }
            Polarization::V => {
                v[[E4, X]] = C64::from(scheme.g2);
                v[[E3, Y]] = C64::from(scheme.g1);
            }
        }
    }
    let vd = crate::linalg::adjoint(&v);
    (v, vd)
}

/// Matrix elements `(row, col, weight)` whose fluctuations source the
/// outgoing field: `ȧ_y ∝ +i·Σ weight·δρ[row][col]`.
pub fn source_elements(scheme: &LevelScheme, pol: Polarization) -> Vec<(usize, usize, f64)> {
    if scheme.kind == SchemeKind::Lambda3 {
        return Vec::new();
    }
    match pol {
        Polarization::H => vec![(E3, X, scheme.g1), (E4, Y, scheme.g2)],
        Polarization::V => vec![(E4, X, scheme.g2), (E3, Y, scheme.g1)],
    }
}

/// Element-wise decay-rate matrix `Γ` for the scheme in the given cell.
pub fn gamma_matrix(scheme: &LevelScheme, cell: &CellConfig) -> Array2<f64> {
    let g0 = cell.gamma0;
    let g12 = cell.gamma12;
    let ge = scheme.gamma;
    match scheme.kind {
        SchemeKind::Lambda3 => {
            let oc = ge / 2.0;
            arr2(&[[g0, g12, oc], [g12, g0, oc], [oc, oc, ge]])
        }
        SchemeKind::DoubleLambda4 => {
            let oc = ge / 2.0;
            arr2(&[
                [g0, g12, oc, oc],
                [g12, g0, oc, oc],
                [oc, oc, ge, ge],
                [oc, oc, ge, ge],
            ])
        }
        SchemeKind::FiveLevel => {
            let oc = ge / 2.0;
            arr2(&[
                [g0, g12, oc, oc, g12],
                [g12, g0, oc, oc, g12],
                [oc, oc, ge, ge, oc],
                [oc, oc, ge, ge, oc],
                [g12, g12, oc, oc, g0],
            ])
        }
    }
}

/// Diagonal repopulation feeds `(dest, src, rate)`: population flows into
/// `ρ[dest][dest]` at `rate·ρ[src][src]`. Together with [`gamma_matrix`]
/// this conserves trace exactly.
pub fn repop_feeds(scheme: &LevelScheme, cell: &CellConfig) -> Vec<(usize, usize, f64)> {
    let g0 = cell.gamma0;
    let ge = scheme.gamma;
    let (bx, by, bt) = scheme.ground_branching();
    match scheme.kind {
        SchemeKind::Lambda3 => vec![
            (0, 1, g0),
            (1, 0, g0),
            (0, 2, ge / 2.0),
            (1, 2, ge / 2.0),
        ],
        SchemeKind::DoubleLambda4 => vec![
            (X, Y, g0),
            (Y, X, g0),
            (X, E3, bx * ge),
            (X, E4, bx * ge),
            (Y, E3, by * ge),
            (Y, E4, by * ge),
        ],
        SchemeKind::FiveLevel => vec![
            (X, Y, g0 / 2.0),
            (X, TRAP, g0 / 2.0),
            (Y, X, g0 / 2.0),
            (Y, TRAP, g0 / 2.0),
            (TRAP, X, g0 / 2.0),
            (TRAP, Y, g0 / 2.0),
            (X, E3, bx * ge),
            (X, E4, bx * ge),
            (Y, E3, by * ge),
            (Y, E4, by * ge),
            (TRAP, E3, bt * ge),
            (TRAP, E4, bt * ge),
        ],
    }
}

/// Apply the full dissipator `−Γ∘ρ + S(ρ)` to a density matrix.
pub fn apply_dissipator(
    gamma: &Array2<f64>,
    feeds: &[(usize, usize, f64)],
    rho: &Array2<C64>,
) -> Array2<C64> {
    let mut out = Array2::<C64>::zeros(rho.raw_dim());
    for ((i, j), r) in out.indexed_iter_mut() {
        *r = -gamma[[i, j]] * rho[[i, j]];
    }
    for &(dest, src, rate) in feeds {
        out[[dest, dest]] += rate * rho[[src, src]];
    }
    out
}

/// One velocity class: signed speed along the beam and its quadrature weight.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct VelocityClass {
    pub v: f64,
    pub w: f64,
}

/// Gauss–Hermite discretization of the thermal velocity distribution.
///
/// `doppler_fwhm` is the optical Doppler width (FWHM, rad/s); the matching
/// velocity spread is `σ_v = λ·Δ_D/(2π·√(8 ln 2))`. Weights are normalized to
/// sum to one and nodes come in exact ± pairs (a single zero-velocity class
/// for `n = 1`). Grids beyond 512 points are refused.
pub fn doppler_grid(doppler_fwhm: f64, n: usize, k: &PhysConsts) -> Result<Vec<VelocityClass>> {
    if n == 0 {
        return Err(Error::Domain("velocity grid needs at least one class".into()));
    }
    if n > 512 {
        return Err(Error::Resource(format!(
            "velocity grid of {n} classes exceeds the 512-point limit"
        )));
    }
    if !(doppler_fwhm >= 0.0) {
        return Err(Error::Domain("Doppler width must be non-negative".into()));
    }
    let sigma_v = k.lambda * doppler_fwhm / (2.0 * std::f64::consts::PI * (8.0 * 2f64.ln()).sqrt());
    let (x, w) = gauss_hermite(n);
    let norm: f64 = w.iter().sum();
    let mut grid: Vec<VelocityClass> = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| VelocityClass {
            v: std::f64::consts::SQRT_2 * sigma_v * xi,
            w: wi / norm,
        })
        .collect();
    grid.sort_by(|a, b| a.v.partial_cmp(&b.v).unwrap());
    Ok(grid)
}

/// Nodes and weights of n-point Gauss–Hermite quadrature (weight `e^{−x²}`).
///
/// Newton iteration on the normalized recurrence; nodes are mirrored so the
/// grid is symmetric to the last bit.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        // Store the positive root at the top, its mirror at the bottom.
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, herm_residual};
    
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn consts() -> PhysConsts {
        PhysConsts::rb87()
    }

    fn random_density(rng: &mut ChaCha8Rng, d: usize) -> Array2<C64> {
        let mut a = Array2::<C64>::zeros((d, d));
        for e in a.iter_mut() {
            *e = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let mut rho = Array2::<C64>::zeros((d, d));
        // ρ = AA† / tr(AA†) is a valid density matrix.
        for i in 0..d {
            for j in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..d {
                    s += a[[i, k]] * a[[j, k]].conj();
                }
                rho[[i, j]] = s;
            }
        }
        let tr: C64 = (0..d).map(|i| rho[[i, i]]).sum();
        rho.mapv(|e| e / tr.re)
    }

    #[test]
    fn hamiltonian_is_hermitian_for_concrete_field_values() {
        let k = consts();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [
            SchemeKind::Lambda3,
            SchemeKind::DoubleLambda4,
            SchemeKind::FiveLevel,
        ] {
            let scheme = match kind {
                SchemeKind::Lambda3 => LevelScheme::lambda3(2e6),
                SchemeKind::DoubleLambda4 => LevelScheme::double_lambda(2e7, 3.0),
                SchemeKind::FiveLevel => LevelScheme::five_level(2e7, 3.0),
            };
            for pol in [Polarization::H, Polarization::V] {
                for _ in 0..20 {
                    let alpha = 1e6 * rng.gen::<f64>();
                    let a_y = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 1e5;
                    let delta = 1e6 * (rng.gen::<f64>() - 0.5);
                    let v = 300.0 * (rng.gen::<f64>() - 0.5);
                    let m = hamiltonian(&scheme, pol, alpha, a_y, delta, v, &k);
                    let scale = m.iter().map(|e| e.norm()).fold(0.0, f64::max);
                    assert!(herm_residual(&m) <= 1e-14 * scale);
                }
            }
        }
    }

    #[test]
    fn five_level_zero_drive_is_diagonal_with_expected_shifts() {
        let k = consts();
        let scheme = LevelScheme::five_level(2.0 * std::f64::consts::PI * 6e6, 1.0);
        let delta = 2.0 * std::f64::consts::PI * 1e6;
        let v = 10.0;
        let m = hamiltonian(&scheme, Polarization::H, 0.0, C64::new(0.0, 0.0), delta, v, &k);
        let de = delta - k.wavenumber() * v;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(m[[i, j]], C64::new(0.0, 0.0));
                }
            }
        }
        assert_eq!(m[[X, X]], C64::new(0.0, 0.0));
        assert_eq!(m[[Y, Y]], C64::new(0.0, 0.0));
        assert!((m[[E3, E3]].re - (-de)).abs() < 1e-9 * de.abs());
        assert!((m[[E4, E4]].re - (-(de + scheme.delta_upper))).abs() < 1e-6);
        assert!((m[[TRAP, TRAP]].re - scheme.delta_hf).abs() < 1e-6);
    }

    #[test]
    fn doppler_shift_enters_both_optical_detunings_equally() {
        let k = consts();
        let scheme = LevelScheme::five_level(2e7, 1.0);
        let m0 = hamiltonian(&scheme, Polarization::H, 0.0, C64::new(0.0, 0.0), 0.0, 0.0, &k);
        let mv = hamiltonian(&scheme, Polarization::H, 0.0, C64::new(0.0, 0.0), 0.0, 100.0, &k);
        let shift = mv[[E3, E3]] - m0[[E3, E3]];
        let shift4 = mv[[E4, E4]] - m0[[E4, E4]];
        assert!((shift - shift4).norm() < 1e-9 * shift.norm());
        // Moving toward the beam (+v) raises the effective shift by k·v.
        assert!((shift.re - k.wavenumber() * 100.0).abs() < 1e-6 * shift.re.abs());
        assert_eq!(mv[[TRAP, TRAP]], m0[[TRAP, TRAP]]);
    }

    #[test]
    fn polarization_mirror_preserves_the_spectrum() {
        let k = consts();
        let scheme = LevelScheme::five_level(2e7, 2.5);
        let alpha = 8e5;
        let a_y = C64::new(3e4, -1e4);
        let mh = hamiltonian(&scheme, Polarization::H, alpha, a_y, 5e5, 40.0, &k);
        let mv = hamiltonian(&scheme, Polarization::V, alpha, a_y, 5e5, 40.0, &k);
        let (eh, _) = eigh(&mh).unwrap();
        let (ev, _) = eigh(&mv).unwrap();
        let scale = eh.iter().map(|e| e.abs()).fold(0.0, f64::max);
        // Swapping the drive and field branches relabels x↔y when g1 = g2,
        // so the two matrices are unitarily equivalent.
        for (a, b) in eh.iter().zip(&ev) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn lambda3_matrix_matches_the_stark_shifted_form() {
        let k = consts();
        let mut scheme = LevelScheme::lambda3(1.5e6);
        scheme.g1 = 2.0e5;
        scheme.g2 = 1.0e5;
        let m = hamiltonian(&scheme, Polarization::H, 1.0, C64::new(0.0, 0.0), 3e5, 0.0, &k);
        let om1 = scheme.g1;
        let om2 = scheme.g2;
        assert!((m[[0, 0]].re - om1 * om1 / scheme.delta_upper).abs() < 1e-9);
        assert!((m[[1, 1]].re - om2 * om2 / scheme.delta_upper).abs() < 1e-9);
        assert!((m[[2, 2]].re + 3e5).abs() < 1e-9);
        assert_eq!(m[[0, 1]], C64::new(0.0, 0.0));
        assert!((m[[0, 2]].re + om1).abs() < 1e-9);
        assert!((m[[1, 2]].re + om2).abs() < 1e-9);
    }

    #[test]
    fn field_coupling_matches_hamiltonian_derivative() {
        let k = consts();
        for pol in [Polarization::H, Polarization::V] {
            let scheme = LevelScheme::five_level(2e7, 1.7);
            let (v, vd) = field_coupling(&scheme, pol);
            let a = C64::new(0.35, -0.8);
            let m0 = hamiltonian(&scheme, pol, 0.4, C64::new(0.0, 0.0), 1e5, 5.0, &k);
            let ma = hamiltonian(&scheme, pol, 0.4, a, 1e5, 5.0, &k);
            let rebuilt = &m0 + &v.mapv(|e| e * a) + &vd.mapv(|e| e * a.conj());
            let diff = (&ma - &rebuilt).iter().map(|e| e.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn source_elements_mirror_the_field_slots() {
        let scheme = LevelScheme::five_level(2e7, 1.7);
        let (v, _) = field_coupling(&scheme, Polarization::H);
        for (r, c, g) in source_elements(&scheme, Polarization::H) {
            assert!((v[[r, c]].re - g).abs() < 1e-15);
        }
        assert!(source_elements(&LevelScheme::lambda3(1e6), Polarization::H).is_empty());
    }

    #[test]
    fn dissipator_preserves_trace_on_random_states() {
        let cell = CellConfig {
            gamma0: 0.31,
            gamma12: 0.11,
            ..CellConfig::default_cell()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for kind in [
            SchemeKind::Lambda3,
            SchemeKind::DoubleLambda4,
            SchemeKind::FiveLevel,
        ] {
            let scheme = match kind {
                SchemeKind::Lambda3 => LevelScheme::lambda3(0.85),
                SchemeKind::DoubleLambda4 => LevelScheme::double_lambda(1.7, 1.0),
                SchemeKind::FiveLevel => LevelScheme::five_level(1.7, 1.0),
            };
            let g = gamma_matrix(&scheme, &cell);
            let feeds = repop_feeds(&scheme, &cell);
            for _ in 0..1000 {
                let rho = random_density(&mut rng, scheme.dim());
                let dt = apply_dissipator(&g, &feeds, &rho);
                let tr: C64 = (0..scheme.dim()).map(|i| dt[[i, i]]).sum();
                assert!(tr.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn excited_population_feeds_grounds_by_branching() {
        let cell = CellConfig::default_cell();
        let scheme = LevelScheme::five_level(1.0, 1.0);
        let g = gamma_matrix(&scheme, &cell);
        let feeds = repop_feeds(&scheme, &cell);
        let mut rho = Array2::<C64>::zeros((5, 5));
        rho[[E3, E3]] = C64::new(1.0, 0.0);
        let dt = apply_dissipator(&g, &feeds, &rho);
        assert!((dt[[X, X]].re - 0.38).abs() < 1e-12);
        assert!((dt[[Y, Y]].re - 0.38).abs() < 1e-12);
        assert!((dt[[TRAP, TRAP]].re - 0.24).abs() < 1e-12);
        assert!((dt[[E3, E3]].re + 1.0).abs() < 1e-12);
        assert_eq!(dt[[E4, E4]], C64::new(0.0, 0.0));
    }

    #[test]
    fn four_level_branching_is_renormalized_onto_the_grounds() {
        let cell = CellConfig::default_cell();
        let scheme = LevelScheme::double_lambda(1.0, 1.0);
        let g = gamma_matrix(&scheme, &cell);
        let feeds = repop_feeds(&scheme, &cell);
        let mut rho = Array2::<C64>::zeros((4, 4));
        rho[[E4, E4]] = C64::new(1.0, 0.0);
        let dt = apply_dissipator(&g, &feeds, &rho);
        assert!((dt[[X, X]].re - 0.5).abs() < 1e-12);
        assert!((dt[[Y, Y]].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ground_redistribution_has_no_net_loss() {
        // Pure ground-state mixtures relax toward uniformity without leaking.
        let cell = CellConfig {
            gamma0: 0.4,
            gamma12: 0.1,
            ..CellConfig::default_cell()
        };
        let scheme = LevelScheme::five_level(1.7, 1.0);
        let g = gamma_matrix(&scheme, &cell);
        let feeds = repop_feeds(&scheme, &cell);
        let mut rho = Array2::<C64>::zeros((5, 5));
        rho[[X, X]] = C64::new(1.0, 0.0);
        let dt = apply_dissipator(&g, &feeds, &rho);
        assert!((dt[[X, X]].re + 0.4).abs() < 1e-12);
        assert!((dt[[Y, Y]].re - 0.2).abs() < 1e-12);
        assert!((dt[[TRAP, TRAP]].re - 0.2).abs() < 1e-12);
        let tr: C64 = (0..5).map(|i| dt[[i, i]]).sum();
        assert!(tr.norm() < 1e-14);
        // The uniform ground mixture is stationary.
        let mut eq = Array2::<C64>::zeros((5, 5));
        for i in [X, Y, TRAP] {
            eq[[i, i]] = C64::new(1.0 / 3.0, 0.0);
        }
        let dt_eq = apply_dissipator(&g, &feeds, &eq);
        assert!(dt_eq.iter().map(|e| e.norm()).fold(0.0, f64::max) < 1e-14);
    }

    #[test]
    fn gamma_matrix_has_the_expected_rate_pattern() {
        let cell = CellConfig {
            gamma0: 0.3,
            gamma12: 0.07,
            ..CellConfig::default_cell()
        };
        let scheme = LevelScheme::five_level(2.0, 1.0);
        let g = gamma_matrix(&scheme, &cell);
        assert_eq!(g[[X, X]], 0.3);
        assert_eq!(g[[X, Y]], 0.07);
        assert_eq!(g[[X, TRAP]], 0.07);
        assert_eq!(g[[X, E3]], 1.0);
        assert_eq!(g[[E3, E4]], 2.0);
        assert_eq!(g[[E4, E4]], 2.0);
        assert_eq!(g[[TRAP, TRAP]], 0.3);
        assert_eq!(g[[TRAP, E4]], 1.0);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(g[[i, j]], g[[j, i]]);
            }
        }
    }

    #[test]
    fn lambda3_dissipator_matches_the_optical_coherence_rate() {
        let cell = CellConfig {
            gamma0: 0.2,
            gamma12: 0.05,
            ..CellConfig::default_cell()
        };
        let scheme = LevelScheme::lambda3(0.9);
        let g = gamma_matrix(&scheme, &cell);
        assert_eq!(g[[0, 2]], 0.9);
        assert_eq!(g[[2, 2]], 1.8);
        assert_eq!(g[[0, 1]], 0.05);
        let feeds = repop_feeds(&scheme, &cell);
        let mut rho = Array2::<C64>::zeros((3, 3));
        rho[[2, 2]] = C64::new(1.0, 0.0);
        let dt = apply_dissipator(&g, &feeds, &rho);
        assert!((dt[[0, 0]].re - 0.9).abs() < 1e-14);
        assert!((dt[[1, 1]].re - 0.9).abs() < 1e-14);
        assert!((dt[[2, 2]].re + 1.8).abs() < 1e-14);
    }

    #[test]
    fn scheme_validation_rejects_bad_branching() {
        let mut s = LevelScheme::five_level(1.0, 1.0);
        s.branching = [0.5, 0.5, 0.5];
        assert!(s.validate().is_err());
        s.branching = [0.38, 0.38, 0.24];
        assert!(s.validate().is_ok());
        s.gamma = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn velocity_grid_is_normalized_symmetric_and_exact() {
        let k = consts();
        let fwhm = 2.0 * std::f64::consts::PI * 500e6;
        let sigma_v = k.lambda * fwhm / (2.0 * std::f64::consts::PI * (8.0 * 2f64.ln()).sqrt());
        for n in [1usize, 2, 3, 8, 33, 64, 128] {
            let grid = doppler_grid(fwhm, n, &k).unwrap();
            assert_eq!(grid.len(), n);
            let wsum: f64 = grid.iter().map(|c| c.w).sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for (lo, hi) in grid.iter().zip(grid.iter().rev()) {
                assert_eq!(lo.v, -hi.v);
                assert_eq!(lo.w, hi.w);
            }
            if n >= 3 {
                let m2: f64 = grid.iter().map(|c| c.w * c.v * c.v).sum();
                assert!((m2 / (sigma_v * sigma_v) - 1.0).abs() < 1e-12);
            }
            if n >= 5 {
                let m4: f64 = grid.iter().map(|c| c.w * c.v.powi(4)).sum();
                assert!((m4 / (3.0 * sigma_v.powi(4)) - 1.0).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn velocity_grid_edge_cases() {
        let k = consts();
        let grid = doppler_grid(2e9, 1, &k).unwrap();
        assert_eq!(grid[0].v, 0.0);
        assert_eq!(grid[0].w, 1.0);
        assert!(doppler_grid(2e9, 0, &k).is_err());
        assert!(matches!(
            doppler_grid(2e9, 513, &k),
            Err(Error::Resource(_))
        ));
        // Zero width collapses every class onto v = 0.
        let flat = doppler_grid(0.0, 7, &k).unwrap();
        assert!(flat.iter().all(|c| c.v == 0.0));
        // The default 64-point grid spans several thermal widths.
        let grid = doppler_grid(fwhm_default(), 64, &k).unwrap();
        let sigma_v =
            k.lambda * fwhm_default() / (2.0 * std::f64::consts::PI * (8.0 * 2f64.ln()).sqrt());
        assert!(grid.last().unwrap().v > 3.0 * sigma_v);
    }

    fn fwhm_default() -> f64 {
        2.0 * std::f64::consts::PI * 500e6
    }
}
