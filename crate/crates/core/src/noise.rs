//! Linearized quantum-fluctuation transport through the vapor.
//!
//! The mean field pins each region's density matrix; small fluctuations
//! `δρ` obey the same linear generator, driven by the co-propagating
//! quantum field and by Langevin noise whose diffusion follows from the
//! Einstein relation. Adiabatically eliminating the atoms at sideband
//! frequency ω turns one thin slice of the cell into a 2×2 frequency-domain
//! transfer acting on `(ã(ω), b̃(ω))`, where `b̃` is the Fourier transform
//! of the field's adjoint. Composing slices and sandwiching the vacuum
//! input covariance yields the output quadrature spectra.
//!
//! Conventions: Fourier transform with `∂t → −iω`, so the atomic resolvent
//! is `G(±ω) = (∓iω·I − A)⁻¹`; covariances are defined by
//! `⟨x_i(ω)·x_j(ω′)⟩ = 2πδ(ω+ω′)·C_ij(ω)` with `x = (ã, b̃)`, making the
//! vacuum input `C_vac = [[0,1],[0,0]]` and a vacuum quadrature variance
//! `S = 1/4` (0 dB).

use ndarray::{s, Array2};
use num_complex::Complex64 as C64;

use crate::atom::{self, LevelScheme, SchemeKind};
use crate::error::{Error, Result};
use crate::linalg::{self, czeros, Lu};
use crate::physics::{CellConfig, PhysConsts};
use crate::steady::{self, elem_index, RegionSpec};

/// Everything needed to build the fluctuation problem of one velocity class
/// within one propagation slice.
pub struct BlockInput<'a> {
    pub scheme: &'a LevelScheme,
    pub cell: &'a CellConfig,
    pub consts: &'a PhysConsts,
    /// Drive parameters per block (probe channel, aggregates, reservoir).
    pub specs: &'a [RegionSpec],
    /// Real block-coupling coefficients: `δρ̇⁽ʳ⁾ += Σ_s couple[r][s]·δρ⁽ˢ⁾`,
    /// with the diagonal carrying each block's exchange loss.
    pub couple: &'a Array2<f64>,
    /// Per-atom mean-field state of each block.
    pub rhos: &'a [Array2<C64>],
    /// Second-moment weight of each block: (member count)/(atoms per member
    /// in this slice and class). Zero marks a noiseless block.
    pub sigma_scale: &'a [f64],
    /// Index of the block the quantum field propagates through.
    pub probe: usize,
    /// Atoms of the probe block in this slice and class.
    pub n_probe: f64,
    /// Signed velocity of this class along the beam.
    pub v: f64,
}

/// Precomputed, frequency-independent pieces of one (slice, class) problem.
#[derive(Debug)]
pub struct FluctuationBlock {
    /// Drift generator of the stacked fluctuations.
    pub a: Array2<C64>,
    /// Field-drive columns `[i[V,ρ̄] | i[V†,ρ̄]]`, probe block only.
    pub b: Array2<C64>,
    /// Source rows picking the optical coherences that radiate back into
    /// the field (per atom; the atom number multiplies in the kernel).
    pub s: Array2<C64>,
    /// Einstein diffusion `2D`, positivity-repaired.
    pub d2: Array2<C64>,
    /// Probe atoms in this slice and class.
    pub n_atoms: f64,
}

/// Stacked drift generator: block-diagonal single-region Liouvillians plus
/// the real coupling coefficients on the identity of each block pair.
pub fn drift_matrix(
    scheme: &LevelScheme,
    cell: &CellConfig,
    specs: &[RegionSpec],
    couple: &Array2<f64>,
    v: f64,
    consts: &PhysConsts,
) -> Result<Array2<C64>> {
    scheme.validate()?;
    cell.validate()?;
    let n = specs.len();
    if n == 0 {
        return Err(Error::Dimension("no blocks to assemble".into()));
    }
    if couple.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "coupling matrix is {:?}, expected {n}×{n}",
            couple.dim()
        )));
    }
    if couple.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("coupling coefficients must be finite".into()));
    }
    let d = scheme.dim();
    let dd = d * d;
    let gamma = atom::gamma_matrix(scheme, cell);
    let feeds = atom::repop_feeds(scheme, cell);
    let mut a = czeros(n * dd, n * dd);
    for (r, spec) in specs.iter().enumerate() {
        let m = atom::hamiltonian(
            scheme,
            spec.pol,
            spec.alpha,
            C64::new(0.0, 0.0),
            spec.detuning,
            v,
            consts,
        );
        let block = steady::liouvillian(&m, &gamma, &feeds);
        let base = r * dd;
        a.slice_mut(s![base..base + dd, base..base + dd])
            .assign(&block);
    }
    for r in 0..n {
        for c in 0..n {
            let w = couple[[r, c]];
            if w != 0.0 {
                for e in 0..dd {
                    a[[r * dd + e, c * dd + e]] += C64::from(w);
                }
            }
        }
    }
    Ok(a)
}

/// Second moments of the fluctuation variables for a single atom in state
/// `ρ`: with `x_(r,c) ↔ |c⟩⟨r| − ρ[r][c]`, the plain-ordered moment is
/// `Σ_(rc),(r'c') = δ_{r,c'}·ρ[r'][c] − ρ[r][c]·ρ[r'][c']`.
pub fn single_atom_moments(rho: &Array2<C64>) -> Array2<C64> {
    let d = rho.nrows();
    let mut sig = czeros(d * d, d * d);
    for r in 0..d {
        for c in 0..d {
            let p = elem_index(r, c, d);
            for rp in 0..d {
                for cp in 0..d {
                    let q = elem_index(rp, cp, d);
                    let mut v = -rho[[r, c]] * rho[[rp, cp]];
                    if r == cp {
                        v += rho[[rp, c]];
                    }
                    sig[[p, q]] = v;
                }
            }
        }
    }
    sig
}

/// Einstein-relation diffusion `2D = −(A·Σ + Σ·Aᵀ)`, repaired to the nearest
/// positive form. The physical positivity object is the Hermitian
/// rearrangement `D̃_{(μν)(αβ)} = 2D_{(νμ)(αβ)}`; its negative eigenvalues
/// (small closure artifacts) are clipped, and clipping more than a 1e-4
/// fraction of the spectrum is reported as a model inconsistency.
pub fn diffusion_matrix(a: &Array2<C64>, sigma: &Array2<C64>, d: usize) -> Result<Array2<C64>> {
    let n = a.nrows();
    if sigma.dim() != (n, n) || n % (d * d) != 0 {
        return Err(Error::Dimension(format!(
            "moment matrix {:?} does not match generator {:?} with {d} levels",
            sigma.dim(),
            a.dim()
        )));
    }
    let two_d = -(a.dot(sigma) + sigma.dot(&a.t()));
    // index of the within-block element transpose (μν) → (νμ)
    let dd = d * d;
    let star = |p: usize| -> usize {
        let blk = p / dd;
        let e = p % dd;
        blk * dd + elem_index(e % d, e / d, d)
    };
    let mut tilde = czeros(n, n);
    for p in 0..n {
        for q in 0..n {
            tilde[[p, q]] = two_d[[star(p), q]];
        }
    }
    let herm_gap = linalg::herm_residual(&tilde);
    let scale = linalg::norm_1(&tilde).max(1e-300);
    if herm_gap > 1e-8 * scale {
        return Err(Error::ModelConsistency(format!(
            "diffusion lost conjugation symmetry (gap {herm_gap:.3e} vs scale {scale:.3e})"
        )));
    }
    let tilde = (&tilde + &linalg::adjoint(&tilde)).mapv(|z| 0.5 * z);
    // fast path: a factorizable (already positive) matrix needs no repair
    if cholesky_succeeds(&tilde, 1e-12 * scale) {
        let mut out = czeros(n, n);
        for p in 0..n {
            for q in 0..n {
                out[[p, q]] = tilde[[star(p), q]];
            }
        }
        return Ok(out);
    }
    let (w, vecs) = linalg::eigh(&tilde)?;
    let clipped: f64 = w.iter().filter(|&&x| x < 0.0).map(|x| -x).sum();
    let total: f64 = w.iter().map(|x| x.abs()).sum();
    if clipped > 1e-4 * total.max(1e-300) {
        return Err(Error::ModelConsistency(format!(
            "diffusion is not positive (clipped {clipped:.3e} of {total:.3e})"
        )));
    }
    let mut repaired = czeros(n, n);
    if clipped > 0.0 {
        for k in 0..n {
            if w[k] <= 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = vecs[[i, k]] * C64::from(w[k]);
                for j in 0..n {
                    repaired[[i, j]] += vik * vecs[[j, k]].conj();
                }
            }
        }
    } else {
        repaired = tilde;
    }
    let mut out = czeros(n, n);
    for p in 0..n {
        for q in 0..n {
            out[[p, q]] = repaired[[star(p), q]];
        }
    }
    Ok(out)
}

/// Cholesky factorization attempt on a Hermitian matrix lifted by `shift`
/// on the diagonal: success certifies positivity to within the shift.
fn cholesky_succeeds(h: &Array2<C64>, shift: f64) -> bool {
    let n = h.nrows();
    let mut l = h.clone();
    for i in 0..n {
        l[[i, i]] += C64::from(shift);
    }
    for j in 0..n {
        let mut d = l[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[[j, j]] = C64::from(d);
        for i in (j + 1)..n {
            let mut v = l[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = v / d;
        }
    }
    true
}

/// Assemble the frequency-independent fluctuation problem of one
/// (slice, velocity class) pair.
pub fn fluctuation_block(input: &BlockInput) -> Result<FluctuationBlock> {
    let scheme = input.scheme;
    if scheme.kind == SchemeKind::Lambda3 {
        return Err(Error::Config(
            "the three-level scheme has no quantum-field slot; use a four- or five-level scheme"
                .into(),
        ));
    }
    let n = input.specs.len();
    if input.rhos.len() != n || input.sigma_scale.len() != n {
        return Err(Error::Dimension(format!(
            "{} specs, {} states, {} moment weights",
            n,
            input.rhos.len(),
            input.sigma_scale.len()
        )));
    }
    if input.probe >= n {
        return Err(Error::Dimension(format!(
            "probe block {} outside the {n} blocks",
            input.probe
        )));
    }
    if !(input.n_probe >= 0.0) || !input.n_probe.is_finite() {
        return Err(Error::Domain("probe atom number must be finite and non-negative".into()));
    }
    if input.sigma_scale.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain("moment weights must be finite and non-negative".into()));
    }
    let d = scheme.dim();
    let dd = d * d;
    for rho in input.rhos {
        if rho.dim() != (d, d) {
            return Err(Error::Dimension(format!(
                "state is {:?}, expected {d}×{d}",
                rho.dim()
            )));
        }
    }
    let a = drift_matrix(
        scheme,
        input.cell,
        input.specs,
        input.couple,
        input.v,
        input.consts,
    )?;

    let i = C64::new(0.0, 1.0);
    let probe_spec = &input.specs[input.probe];
    let rho_p = &input.rhos[input.probe];
    let (v_op, vd_op) = atom::field_coupling(scheme, probe_spec.pol);
    let comm_a = (&v_op.dot(rho_p) - &rho_p.dot(&v_op)).mapv(|z| i * z);
    let comm_ad = (&vd_op.dot(rho_p) - &rho_p.dot(&vd_op)).mapv(|z| i * z);
    let mut b = czeros(n * dd, 2);
    let base = input.probe * dd;
    for mu in 0..d {
        for nu in 0..d {
            b[[base + elem_index(mu, nu, d), 0]] = comm_a[[mu, nu]];
            b[[base + elem_index(mu, nu, d), 1]] = comm_ad[[mu, nu]];
        }
    }

    let mut s_rows = czeros(2, n * dd);
    for (row, col, w) in atom::source_elements(scheme, probe_spec.pol) {
        s_rows[[0, base + elem_index(row, col, d)]] = i * w;
        s_rows[[1, base + elem_index(col, row, d)]] = -i * w;
    }

    let mut sigma = czeros(n * dd, n * dd);
    for r in 0..n {
        let w = input.sigma_scale[r];
        if w == 0.0 {
            continue;
        }
        let s1 = single_atom_moments(&input.rhos[r]).mapv(|z| z * w);
        sigma
            .slice_mut(s![r * dd..(r + 1) * dd, r * dd..(r + 1) * dd])
            .assign(&s1);
    }
    let d2 = diffusion_matrix(&a, &sigma, d)?;

    Ok(FluctuationBlock {
        a,
        b,
        s: s_rows,
        d2,
        n_atoms: input.n_probe,
    })
}

/// Frequency-domain kernel of one slice at sideband ±ω: the 2×2 gain
/// densities `K(±ω)` and lumped noise densities `Q(±ω)`, summed over the
/// velocity classes.
#[derive(Debug)]
pub struct SliceKernel {
    pub k_plus: Array2<C64>,
    pub k_minus: Array2<C64>,
    pub q_plus: Array2<C64>,
    pub q_minus: Array2<C64>,
}

fn resolvent_factor(a: &Array2<C64>, omega: f64, sign: f64) -> Result<Lu> {
    let n = a.nrows();
    let mut m = a.mapv(|z| -z);
    let shift = C64::new(0.0, -sign * omega);
    for k in 0..n {
        m[[k, k]] += shift;
    }
    Lu::factor(&m).map_err(|e| match e {
        Error::Singular(_) => Error::Resonance { omega: sign * omega },
        other => other,
    })
}

/// Build the slice kernel at sideband frequency ω from the per-class
/// fluctuation blocks of that slice.
///
/// The DC sideband is rejected outright: ω = 0 coincides with the
/// conserved-population mode of every trace-preserving generator, so its
/// resolvent does not exist. The spectrum has a finite ω → 0 limit, which
/// callers reach by evaluating at a small nonzero sideband.
pub fn slice_kernel(blocks: &[FluctuationBlock], omega: f64) -> Result<SliceKernel> {
    if omega == 0.0 {
        return Err(Error::Resonance { omega: 0.0 });
    }
    let mut k_plus = czeros(2, 2);
    let mut k_minus = czeros(2, 2);
    let mut q_plus = czeros(2, 2);
    let mut q_minus = czeros(2, 2);
    for blk in blocks {
        if blk.n_atoms == 0.0 {
            continue;
        }
        let nd = blk.a.nrows();
        let lu_p = resolvent_factor(&blk.a, omega, 1.0)?;
        let lu_m = resolvent_factor(&blk.a, omega, -1.0)?;
        // columns G(±ω)·b
        let gb_p = lu_p.solve_mat(&blk.b);
        let gb_m = lu_m.solve_mat(&blk.b);
        // rows S·G(±ω) via transposed solves
        let mut r_p = czeros(2, nd);
        let mut r_m = czeros(2, nd);
        for row in 0..2 {
            let srow = blk.s.row(row).to_owned();
            r_p.row_mut(row)
                .assign(&lu_p.solve_transposed_vec(&srow));
            r_m.row_mut(row)
                .assign(&lu_m.solve_transposed_vec(&srow));
        }
        let na = C64::from(blk.n_atoms);
        let na2 = C64::from(blk.n_atoms * blk.n_atoms);
        let sgb_p = blk.s.dot(&gb_p);
        let sgb_m = blk.s.dot(&gb_m);
        k_plus = k_plus + sgb_p.mapv(|z| z * na);
        k_minus = k_minus + sgb_m.mapv(|z| z * na);
        let qp = r_p.dot(&blk.d2).dot(&r_m.t());
        let qm = r_m.dot(&blk.d2).dot(&r_p.t());
        q_plus = q_plus + qp.mapv(|z| z * na2);
        q_minus = q_minus + qm.mapv(|z| z * na2);
    }
    Ok(SliceKernel {
        k_plus,
        k_minus,
        q_plus,
        q_minus,
    })
}

/// Accumulated transfer of a run of slices at ±ω: field transfer matrices
/// and added-noise covariances, composable and finally closable against the
/// vacuum input.
#[derive(Clone)]
pub struct SliceTransfer {
    pub t_plus: Array2<C64>,
    pub t_minus: Array2<C64>,
    pub n_plus: Array2<C64>,
    pub n_minus: Array2<C64>,
}

impl SliceTransfer {
    /// The do-nothing element.
    pub fn identity() -> Self {
        Self {
            t_plus: linalg::ceye(2),
            t_minus: linalg::ceye(2),
            n_plus: czeros(2, 2),
            n_minus: czeros(2, 2),
        }
    }

    /// Exponentiate a slice kernel: `T(±ω) = exp K(±ω)` with the noise
    /// accumulated uniformly across the slice,
    /// `N(ω) = ∫₀¹ e^{K(ω)u}·Q(ω)·e^{K(−ω)ᵀu} du`.
    pub fn from_kernel(k: &SliceKernel) -> Self {
        Self {
            t_plus: linalg::expm(&k.k_plus),
            t_minus: linalg::expm(&k.k_minus),
            n_plus: linalg::integrate_sandwich(&k.k_plus, &k.k_minus, &k.q_plus),
            n_minus: linalg::integrate_sandwich(&k.k_minus, &k.k_plus, &k.q_minus),
        }
    }

    /// This transfer followed by `later`.
    pub fn then(&self, later: &Self) -> Self {
        Self {
            t_plus: later.t_plus.dot(&self.t_plus),
            t_minus: later.t_minus.dot(&self.t_minus),
            n_plus: &later.t_plus.dot(&self.n_plus).dot(&later.t_minus.t()) + &later.n_plus,
            n_minus: &later.t_minus.dot(&self.n_minus).dot(&later.t_plus.t()) + &later.n_minus,
        }
    }

    /// Output covariances `(C(ω), C(−ω))` for a vacuum input.
    pub fn output_covariance(&self) -> (Array2<C64>, Array2<C64>) {
        let cv = vacuum_covariance();
        let cp = &self.t_plus.dot(&cv).dot(&self.t_minus.t()) + &self.n_plus;
        let cm = &self.t_minus.dot(&cv).dot(&self.t_plus.t()) + &self.n_minus;
        (cp, cm)
    }
}

/// Vacuum input covariance in the `(ã, b̃)` ordering.
pub fn vacuum_covariance() -> Array2<C64> {
    let mut c = czeros(2, 2);
    c[[0, 1]] = C64::new(1.0, 0.0);
    c
}

/// Symmetrized covariance `C_s(ω) = ½(C(ω) + C(−ω)ᵀ)`, the object quadrature
/// variances are read from.
pub fn symmetrized(c_plus: &Array2<C64>, c_minus: &Array2<C64>) -> Array2<C64> {
    (c_plus + &c_minus.t()).mapv(|z| 0.5 * z)
}

/// Spectral variance of the quadrature `X_θ = (â e^{−iθ} + â† e^{iθ})/2`.
pub fn spectrum_at(c_s: &Array2<C64>, theta: f64) -> f64 {
    let r = [
        C64::new(0.0, -theta).exp(),
        C64::new(0.0, theta).exp(),
    ];
    let mut s = C64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            s += r[i] * c_s[[i, j]] * r[j];
        }
    }
    0.25 * s.re
}

/// Extremal quadrature variances at one sideband frequency.
pub struct QuadratureSpectrum {
    /// Smallest quadrature variance (vacuum = 1/4).
    pub s_min: f64,
    /// Largest quadrature variance.
    pub s_max: f64,
    /// Angle of the squeezed quadrature, in [0, π).
    pub theta: f64,
    /// True when the state is circular and the angle is arbitrary.
    pub degenerate: bool,
}

/// Reduce an output covariance pair to the extremal quadrature variances,
/// checking the reality conditions a physical spectrum must satisfy.
pub fn quadrature_spectrum(
    c_plus: &Array2<C64>,
    c_minus: &Array2<C64>,
) -> Result<QuadratureSpectrum> {
    let cs = symmetrized(c_plus, c_minus);
    let scale = cs.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let t = cs[[0, 1]] + cs[[1, 0]];
    if t.im.abs() > 1e-8 * scale {
        return Err(Error::ModelConsistency(format!(
            "cross quadrature density is not real ({:.3e} vs scale {scale:.3e})",
            t.im
        )));
    }
    let gap = (cs[[0, 0]] - cs[[1, 1]].conj()).norm();
    if gap > 1e-8 * scale {
        return Err(Error::ModelConsistency(format!(
            "anomalous densities lost conjugate pairing (gap {gap:.3e} vs scale {scale:.3e})"
        )));
    }
    let u = 0.5 * (cs[[0, 0]] + cs[[1, 1]].conj());
    let mean = 0.25 * t.re;
    let swing = 0.5 * u.norm();
    let mut s_min = mean - swing;
    let s_max = mean + swing;
    if s_min < -1e-9 * s_max.abs().max(1e-300) {
        return Err(Error::ModelConsistency(format!(
            "negative quadrature variance {s_min:.3e}"
        )));
    }
    s_min = s_min.max(0.0);
    let degenerate = u.norm() <= 1e-12 * mean.abs().max(1e-300);
    let theta = if degenerate {
        0.0
    } else {
        let mut th = 0.5 * u.im.atan2(u.re) + std::f64::consts::FRAC_PI_2;
        th = th.rem_euclid(std::f64::consts::PI);
        th
    };
    Ok(QuadratureSpectrum {
        s_min,
        s_max,
        theta,
        degenerate,
    })
}

/// Decibels relative to the vacuum variance: `10·log₁₀(4S)`.
pub fn to_db(s: f64) -> f64 {
    10.0 * (4.0 * s).log10()
}

/// Mean of the extremal variances in decibels; zero for any pure Gaussian
/// state and positive once the state mixes.
pub fn purity_db(s_min: f64, s_max: f64) -> f64 {
    0.5 * (to_db(s_min) + to_db(s_max))
}

/// Covariance of the same field after an optical phase shift φ.
pub fn phase_shift(c: &Array2<C64>, phi: f64) -> Array2<C64> {
    let d = [C64::new(0.0, phi).exp(), C64::new(0.0, -phi).exp()];
    Array2::from_shape_fn((2, 2), |(i, j)| d[i] * c[[i, j]] * d[j])
}

/// Covariance of the balanced sum of independent channels, each phase
/// shifted by its own φ before combining.
pub fn combine_channels(parts: &[(Array2<C64>, f64)]) -> Result<Array2<C64>> {
    if parts.is_empty() {
        return Err(Error::Dimension("no channels to combine".into()));
    }
    let mut c = czeros(2, 2);
    for (cj, phi) in parts {
        c = c + phase_shift(cj, *phi);
    }
    Ok(c.mapv(|z| z / C64::from(parts.len() as f64)))
}

/// Spot check that a fluctuation generator is non-amplifying: measures the
/// spectral abscissa on the time scale of the slowest retained rate and
/// rejects growth beyond its tolerance.
pub fn stability_check(a: &Array2<C64>, slow_rate: f64) -> Result<()> {
    if !(slow_rate > 0.0) {
        return Err(Error::Domain("slow rate must be positive".into()));
    }
    let ab = linalg::spectral_abscissa(a, 0.1 / slow_rate);
    if ab > 0.05 * slow_rate {
        return Err(Error::Stability(format!(
            "fluctuations grow at {ab:.3e} rad/s against a slow scale of {slow_rate:.3e} rad/s"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{E3, E4, TRAP, X, Y};
    use crate::physics::Polarization;
    use crate::steady::ExchangePair;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn toy_scheme() -> LevelScheme {
        let mut s = LevelScheme::double_lambda(40.0, 1.0);
        s.delta_upper = 230.0;
        s
    }

    fn toy_cell() -> CellConfig {
        let mut cell = CellConfig::default_cell();
        cell.gamma0 = 0.9;
        cell.gamma12 = 0.35;
        cell
    }

    fn unit_consts() -> PhysConsts {
        // wavenumber never enters these tests at v = 0
        PhysConsts::rb87()
    }

    fn random_density(rng: &mut ChaCha8Rng, d: usize) -> Array2<C64> {
        let g = Array2::from_shape_fn((d, d), |_| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let h = g.dot(&linalg::adjoint(&g));
        let tr: C64 = (0..d).map(|i| h[[i, i]]).sum();
        h.mapv(|z| z / tr)
    }

    /// One isolated driven block with uniform parameters.
    fn single_block(
        scheme: &LevelScheme,
        cell: &CellConfig,
        alpha: f64,
        detuning: f64,
        n_atoms: f64,
    ) -> FluctuationBlock {
        let consts = unit_consts();
        let spec = RegionSpec {
            alpha,
            pol: Polarization::H,
            detuning,
        };
        let rho = steady::solve_regions(scheme, cell, &[spec], &[], 0.0, &consts).unwrap();
        let couple = array![[0.0]];
        fluctuation_block(&BlockInput {
            scheme,
            cell,
            consts: &consts,
            specs: &[spec],
            couple: &couple,
            rhos: &rho,
            sigma_scale: &[1.0 / n_atoms],
            probe: 0,
            n_probe: n_atoms,
            v: 0.0,
        })
        .unwrap()
    }

    /// Probe + aggregate-of-others + reservoir layout for `cnt` identical
    /// channels, with mean field solved self-consistently.
    fn chain_blocks(
        scheme: &LevelScheme,
        cell: &CellConfig,
        alpha: f64,
        detuning: f64,
        cnt: f64,
        k_in: f64,
        k_out: f64,
        n_ch: f64,
        n_dark: f64,
        velocities: &[(f64, f64)],
    ) -> Vec<FluctuationBlock> {
        let consts = unit_consts();
        let ch = RegionSpec {
            alpha,
            pol: Polarization::H,
            detuning,
        };
        let mean_regions = [RegionSpec::dark(), ch];
        let mean_exchange = [
            ExchangePair {
                from: 0,
                to: 1,
                rate: k_in,
            },
            ExchangePair {
                from: 1,
                to: 0,
                rate: cnt * k_out,
            },
        ];
        let specs = [ch, ch, RegionSpec::dark()];
        let couple = array![
            [-k_in, 0.0, k_in],
            [0.0, -k_in, (cnt - 1.0) * k_in],
            [k_out, k_out, -cnt * k_out],
        ];
        velocities
            .iter()
            .map(|&(v, w)| {
                let rho =
                    steady::solve_regions(scheme, cell, &mean_regions, &mean_exchange, v, &consts)
                        .unwrap();
                let rhos = [rho[1].clone(), rho[1].clone(), rho[0].clone()];
                fluctuation_block(&BlockInput {
                    scheme,
                    cell,
                    consts: &consts,
                    specs: &specs,
                    couple: &couple,
                    rhos: &rhos,
                    sigma_scale: &[
                        1.0 / (w * n_ch),
                        (cnt - 1.0) / (w * n_ch),
                        1.0 / (w * n_dark),
                    ],
                    probe: 0,
                    n_probe: w * n_ch,
                    v,
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn three_level_scheme_is_rejected() {
        let scheme = LevelScheme::lambda3(20.0);
        let cell = toy_cell();
        let consts = unit_consts();
        let spec = RegionSpec {
            alpha: 0.1,
            pol: Polarization::H,
            detuning: 0.0,
        };
        let rho = steady::solve_regions(&scheme, &cell, &[spec], &[], 0.0, &consts).unwrap();
        let couple = array![[0.0]];
        let err = fluctuation_block(&BlockInput {
            scheme: &scheme,
            cell: &cell,
            consts: &consts,
            specs: &[spec],
            couple: &couple,
            rhos: &rho,
            sigma_scale: &[1.0],
            probe: 0,
            n_probe: 1.0,
            v: 0.0,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn single_atom_moments_match_operator_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2, 4] {
            let rho = random_density(&mut rng, d);
            let sig = single_atom_moments(&rho);
            // brute force with explicit |c⟩⟨r| matrices
            for r in 0..d {
                for cc in 0..d {
                    let mut op1 = czeros(d, d);
                    op1[[cc, r]] = c(1.0, 0.0);
                    for rp in 0..d {
                        for cp in 0..d {
                            let mut op2 = czeros(d, d);
                            op2[[cp, rp]] = c(1.0, 0.0);
                            let trace = |m: &Array2<C64>| -> C64 {
                                (0..d).map(|i| m[[i, i]]).sum()
                            };
                            let want = trace(&rho.dot(&op1).dot(&op2))
                                - trace(&rho.dot(&op1)) * trace(&rho.dot(&op2));
                            let got = sig[[elem_index(r, cc, d), elem_index(rp, cp, d)]];
                            assert_abs_diff_eq!(got.re, want.re, epsilon = 1e-13);
                            assert_abs_diff_eq!(got.im, want.im, epsilon = 1e-13);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn undriven_slices_preserve_vacuum_exactly() {
        // The keystone consistency check: without a drive the medium only
        // absorbs and re-emits, and a vacuum input must leave as vacuum for
        // any density, detuning, velocity spread, or exchange topology.
        let cell = toy_cell();
        for scheme in [toy_scheme(), LevelScheme::five_level(40.0, 1.0)] {
            let blocks = chain_blocks(
                &scheme,
                &cell,
                0.0,
                7.0,
                5.0,
                1.3,
                0.2,
                80.0,
                900.0,
                &[(-3.0, 0.25), (0.0, 0.5), (3.0, 0.25)],
            );
            for omega in [0.3, 11.0, 60.0] {
                let kernel = slice_kernel(&blocks, omega).unwrap();
                let tr = SliceTransfer::from_kernel(&kernel);
                // the medium really does attenuate…
                assert!(
                    tr.t_plus[[0, 0]].norm() < 0.999,
                    "no absorption at ω = {omega}"
                );
                // …yet the vacuum passes through unchanged
                let (cp, cm) = tr.output_covariance();
                let cv = vacuum_covariance();
                for i in 0..2 {
                    for j in 0..2 {
                        assert_abs_diff_eq!(cp[[i, j]].re, cv[[i, j]].re, epsilon = 1e-9);
                        assert_abs_diff_eq!(cp[[i, j]].im, cv[[i, j]].im, epsilon = 1e-9);
                        assert_abs_diff_eq!(cm[[i, j]].re, cv[[i, j]].re, epsilon = 1e-9);
                        assert_abs_diff_eq!(cm[[i, j]].im, cv[[i, j]].im, epsilon = 1e-9);
                    }
                }
                let q = quadrature_spectrum(&cp, &cm).unwrap();
                assert_abs_diff_eq!(to_db(q.s_min), 0.0, epsilon = 1e-7);
                assert_abs_diff_eq!(to_db(q.s_max), 0.0, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn zero_density_gives_identity_transfer() {
        let scheme = toy_scheme();
        let cell = toy_cell();
        let consts = unit_consts();
        let spec = RegionSpec {
            alpha: 2.0,
            pol: Polarization::H,
            detuning: 1.0,
        };
        let rho = steady::solve_regions(&scheme, &cell, &[spec], &[], 0.0, &consts).unwrap();
        let couple = array![[0.0]];
        let blk = fluctuation_block(&BlockInput {
            scheme: &scheme,
            cell: &cell,
            consts: &consts,
            specs: &[spec],
            couple: &couple,
            rhos: &rho,
            sigma_scale: &[0.0],
            probe: 0,
            n_probe: 0.0,
            v: 0.0,
        })
        .unwrap();
        let kernel = slice_kernel(&[blk], 5.0).unwrap();
        let tr = SliceTransfer::from_kernel(&kernel);
        let (cp, cm) = tr.output_covariance();
        let q = quadrature_spectrum(&cp, &cm).unwrap();
        assert_abs_diff_eq!(q.s_min, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(q.s_max, 0.25, epsilon = 1e-15);
        assert!(q.degenerate);
    }

    #[test]
    fn undriven_kernel_matches_closed_form() {
        // With no drive the two optical coherences decouple and the kernel
        // is a sum of complex Lorentzians, one per leg, the second pushed
        // off by the excited-state splitting:
        //   K_aa(ω) = −N[g₁²ρ_xx/(γ/2 + i(δ′−ω)) + g₂²ρ_yy/(γ/2 + i(δ′+Δ−ω))]
        //   K_bb(ω) = −N[g₁²ρ_xx/(γ/2 − i(δ′+ω)) + g₂²ρ_yy/(γ/2 − i(δ′+Δ+ω))]
        // and the off-diagonal entries vanish.
        let scheme = toy_scheme();
        let cell = toy_cell();
        let n_atoms = 170.0;
        let delta = 9.0;
        let blk = single_block(&scheme, &cell, 0.0, delta, n_atoms);
        let consts = unit_consts();
        let rho = steady::solve_regions(
            &scheme,
            &cell,
            &[RegionSpec {
                alpha: 0.0,
                pol: Polarization::H,
                detuning: delta,
            }],
            &[],
            0.0,
            &consts,
        )
        .unwrap();
        let w1 = n_atoms * scheme.g1 * scheme.g1 * rho[0][[X, X]].re;
        let w2 = n_atoms * scheme.g2 * scheme.g2 * rho[0][[Y, Y]].re;
        let half = 0.5 * scheme.gamma;
        let du = scheme.delta_upper;
        let k_aa = |om: f64| -> C64 {
            -C64::from(w1) / c(half, delta - om) - C64::from(w2) / c(half, delta + du - om)
        };
        let k_bb = |om: f64| -> C64 {
            -C64::from(w1) / c(half, -(delta + om)) - C64::from(w2) / c(half, -(delta + du + om))
        };
        for omega in [0.7, 4.0, 33.0] {
            let kernel = slice_kernel(std::slice::from_ref(&blk), omega).unwrap();
            let want_aa = k_aa(omega);
            let want_bb = k_bb(omega);
            assert_abs_diff_eq!(kernel.k_plus[[0, 0]].re, want_aa.re, epsilon = 1e-10);
            assert_abs_diff_eq!(kernel.k_plus[[0, 0]].im, want_aa.im, epsilon = 1e-10);
            assert_abs_diff_eq!(kernel.k_plus[[1, 1]].re, want_bb.re, epsilon = 1e-10);
            assert_abs_diff_eq!(kernel.k_plus[[1, 1]].im, want_bb.im, epsilon = 1e-10);
            assert!(kernel.k_plus[[0, 1]].norm() < 1e-12);
            assert!(kernel.k_plus[[1, 0]].norm() < 1e-12);
            // conjugation symmetry between the ± kernels
            assert_abs_diff_eq!(
                kernel.k_minus[[0, 0]].re,
                kernel.k_plus[[1, 1]].conj().re,
                epsilon = 1e-12
            );
        }
        // near resonance the power transmission follows exp(2·Re K_aa), and
        // the resonant leg dominates it: od₁ = 4N g₁²ρ_xx/γ
        let blk0 = single_block(&scheme, &cell, 0.0, 0.0, n_atoms);
        let kernel = slice_kernel(std::slice::from_ref(&blk0), 1e-3).unwrap();
        let tr = SliceTransfer::from_kernel(&kernel);
        let t_pow = tr.t_plus[[0, 0]].norm_sqr();
        let want = -C64::from(w1) / c(half, -1e-3) - C64::from(w2) / c(half, du - 1e-3);
        assert_abs_diff_eq!(t_pow.ln(), 2.0 * want.re, epsilon = 1e-9);
        let od1 = 4.0 * w1 / scheme.gamma;
        assert!((t_pow.ln() + od1).abs() < 0.02 * od1);
    }

    #[test]
    fn einstein_diffusion_has_the_textbook_optical_element() {
        // For an undriven atom the optical-coherence noise strength is set
        // by the total dephasing: 2D[(e3,x),(x,e3)] = γ·ρ_xx/N, independent
        // of the optical detuning.
        let scheme = toy_scheme();
        let cell = toy_cell();
        let n_atoms = 50.0;
        for delta in [0.0, 13.0] {
            let blk = single_block(&scheme, &cell, 0.0, delta, n_atoms);
            let d = scheme.dim();
            let p = elem_index(E3, X, d);
            let q = elem_index(X, E3, d);
            let want = scheme.gamma * 0.5 / n_atoms; // ρ_xx = 1/2
            assert_abs_diff_eq!(blk.d2[[p, q]].re, want, epsilon = 1e-12);
            assert_abs_diff_eq!(blk.d2[[p, q]].im, 0.0, epsilon = 1e-12);
            // plain-ordered asymmetry: the reversed element carries the
            // excited population instead and vanishes here
            assert!(blk.d2[[q, p]].norm() < 1e-12);
        }
    }

    #[test]
    fn kernel_and_noise_scale_linearly_with_atom_number() {
        let scheme = toy_scheme();
        let cell = toy_cell();
        let b1 = single_block(&scheme, &cell, 1.4, 2.0, 60.0);
        let b2 = single_block(&scheme, &cell, 1.4, 2.0, 120.0);
        let k1 = slice_kernel(std::slice::from_ref(&b1), 3.0).unwrap();
        let k2 = slice_kernel(std::slice::from_ref(&b2), 3.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    k2.k_plus[[i, j]].re,
                    2.0 * k1.k_plus[[i, j]].re,
                    epsilon = 1e-10
                );
                assert_abs_diff_eq!(
                    k2.k_plus[[i, j]].im,
                    2.0 * k1.k_plus[[i, j]].im,
                    epsilon = 1e-10
                );
                assert_abs_diff_eq!(
                    k2.q_plus[[i, j]].re,
                    2.0 * k1.q_plus[[i, j]].re,
                    epsilon = 1e-10
                );
                assert_abs_diff_eq!(
                    k2.q_plus[[i, j]].im,
                    2.0 * k1.q_plus[[i, j]].im,
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn pure_parametric_kernel_reproduces_the_squeezer() {
        for r in [0.2, 0.8] {
            let kernel = SliceKernel {
                k_plus: array![[c(0.0, 0.0), c(r, 0.0)], [c(r, 0.0), c(0.0, 0.0)]],
                k_minus: array![[c(0.0, 0.0), c(r, 0.0)], [c(r, 0.0), c(0.0, 0.0)]],
                q_plus: czeros(2, 2),
                q_minus: czeros(2, 2),
            };
            let tr = SliceTransfer::from_kernel(&kernel);
            let (cp, cm) = tr.output_covariance();
            let q = quadrature_spectrum(&cp, &cm).unwrap();
            assert_abs_diff_eq!(q.s_min, 0.25 * (-2.0 * r).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(q.s_max, 0.25 * (2.0 * r).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(q.theta, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
            // a pure state has zero mean decibels
            assert_abs_diff_eq!(purity_db(q.s_min, q.s_max), 0.0, epsilon = 1e-10);
            // the Heisenberg floor is saturated
            assert_abs_diff_eq!(q.s_min * q.s_max, 1.0 / 16.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn composition_matches_monolithic_chain() {
        let scheme = toy_scheme();
        let cell = toy_cell();
        let b_weak = single_block(&scheme, &cell, 0.9, 1.0, 30.0);
        let b_strong = single_block(&scheme, &cell, 2.2, -4.0, 55.0);
        let omega = 2.5;
        let k1 = slice_kernel(std::slice::from_ref(&b_weak), omega).unwrap();
        let k2 = slice_kernel(std::slice::from_ref(&b_strong), omega).unwrap();
        let t1 = SliceTransfer::from_kernel(&k1);
        let t2 = SliceTransfer::from_kernel(&k2);
        let chain = t1.then(&t2);
        // transfer products
        let want_t = t2.t_plus.dot(&t1.t_plus);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(chain.t_plus[[i, j]].re, want_t[[i, j]].re, epsilon = 1e-13);
                assert_abs_diff_eq!(chain.t_plus[[i, j]].im, want_t[[i, j]].im, epsilon = 1e-13);
            }
        }
        // covariance through the chain equals the two-step update
        let (c1p, c1m) = t1.output_covariance();
        let step_p = &t2.t_plus.dot(&c1p).dot(&t2.t_minus.t()) + &t2.n_plus;
        let step_m = &t2.t_minus.dot(&c1m).dot(&t2.t_plus.t()) + &t2.n_minus;
        let (cp, cm) = chain.output_covariance();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(cp[[i, j]].re, step_p[[i, j]].re, epsilon = 1e-12);
                assert_abs_diff_eq!(cp[[i, j]].im, step_p[[i, j]].im, epsilon = 1e-12);
                assert_abs_diff_eq!(cm[[i, j]].re, step_m[[i, j]].re, epsilon = 1e-12);
                assert_abs_diff_eq!(cm[[i, j]].im, step_m[[i, j]].im, epsilon = 1e-12);
            }
        }
        // and splitting one slice in half reproduces it whole: the kernel is
        // a density, so halving K and Q per sub-slice is exact
        let half = SliceKernel {
            k_plus: k1.k_plus.mapv(|z| 0.5 * z),
            k_minus: k1.k_minus.mapv(|z| 0.5 * z),
            q_plus: k1.q_plus.mapv(|z| 0.5 * z),
            q_minus: k1.q_minus.mapv(|z| 0.5 * z),
        };
        let th = SliceTransfer::from_kernel(&half);
        let rejoined = th.then(&th);
        let (cpr, cmr) = rejoined.output_covariance();
        let (cp1, cm1) = t1.output_covariance();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(cpr[[i, j]].re, cp1[[i, j]].re, epsilon = 1e-12);
                assert_abs_diff_eq!(cpr[[i, j]].im, cp1[[i, j]].im, epsilon = 1e-12);
                assert_abs_diff_eq!(cmr[[i, j]].re, cm1[[i, j]].re, epsilon = 1e-12);
                assert_abs_diff_eq!(cmr[[i, j]].im, cm1[[i, j]].im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn phase_shift_rotates_the_squeezing_angle() {
        let scheme = toy_scheme();
        let cell = toy_cell();
        let blk = single_block(&scheme, &cell, 2.0, 3.0, 90.0);
        let kernel = slice_kernel(std::slice::from_ref(&blk), 1.5).unwrap();
        let tr = SliceTransfer::from_kernel(&kernel);
        let (cp, cm) = tr.output_covariance();
        let base = quadrature_spectrum(&cp, &cm).unwrap();
        for phi in [0.4, 1.3, 2.9] {
            let q = quadrature_spectrum(&phase_shift(&cp, phi), &phase_shift(&cm, phi)).unwrap();
            assert_abs_diff_eq!(q.s_min, base.s_min, epsilon = 1e-12);
            assert_abs_diff_eq!(q.s_max, base.s_max, epsilon = 1e-12);
            let want = (base.theta + phi).rem_euclid(std::f64::consts::PI);
            let diff = (q.theta - want).abs();
            let diff = diff.min(std::f64::consts::PI - diff);
            assert!(diff < 1e-9, "angle drifted by {diff:.2e} at φ = {phi}");
            // the θ-parameterized variance agrees pointwise
            let cs_rot = symmetrized(&phase_shift(&cp, phi), &phase_shift(&cm, phi));
            let cs = symmetrized(&cp, &cm);
            for theta in [0.0, 0.7, 2.2] {
                assert_abs_diff_eq!(
                    spectrum_at(&cs_rot, theta + phi),
                    spectrum_at(&cs, theta),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn combining_identical_channels_in_phase_keeps_the_spectrum() {
        let scheme = toy_scheme();
        let cell = toy_cell();
        let blk = single_block(&scheme, &cell, 2.0, 3.0, 90.0);
        let kernel = slice_kernel(std::slice::from_ref(&blk), 1.5).unwrap();
        let (cp, cm) = SliceTransfer::from_kernel(&kernel).output_covariance();
        let single = quadrature_spectrum(&cp, &cm).unwrap();

        let sum_p = combine_channels(&[(cp.clone(), 0.0), (cp.clone(), 0.0)]).unwrap();
        let sum_m = combine_channels(&[(cm.clone(), 0.0), (cm.clone(), 0.0)]).unwrap();
        let both = quadrature_spectrum(&sum_p, &sum_m).unwrap();
        assert_abs_diff_eq!(both.s_min, single.s_min, epsilon = 1e-12);
        assert_abs_diff_eq!(both.s_max, single.s_max, epsilon = 1e-12);

        // in quadrature the combination is circular: every angle reads the
        // mean of the extremal variances
        let orth_p = combine_channels(&[(cp.clone(), 0.0), (cp.clone(), 0.5 * std::f64::consts::PI)])
            .unwrap();
        let orth_m = combine_channels(&[(cm.clone(), 0.0), (cm.clone(), 0.5 * std::f64::consts::PI)])
            .unwrap();
        let orth = quadrature_spectrum(&orth_p, &orth_m).unwrap();
        let want = 0.5 * (single.s_min + single.s_max);
        assert_abs_diff_eq!(orth.s_min, want, epsilon = 1e-10);
        assert_abs_diff_eq!(orth.s_max, want, epsilon = 1e-10);
        assert!(orth.degenerate);
    }

    #[test]
    fn dc_sideband_is_a_resonance_but_nearby_frequencies_converge() {
        let scheme = toy_scheme();
        let cell = toy_cell();
        let blocks = chain_blocks(
            &scheme,
            &cell,
            1.0,
            0.0,
            4.0,
            1.0,
            0.25,
            40.0,
            600.0,
            &[(0.0, 1.0)],
        );
        let err = slice_kernel(&blocks, 0.0).unwrap_err();
        assert!(matches!(err, Error::Resonance { .. }));
        // the conserved mode is projected out of the kernel, so the spectrum
        // has a finite DC limit: successive halvings of ω converge linearly
        let ka = slice_kernel(&blocks, 4e-4).unwrap();
        let kb = slice_kernel(&blocks, 2e-4).unwrap();
        let kc = slice_kernel(&blocks, 1e-4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let d_ab = (ka.k_plus[[i, j]] - kb.k_plus[[i, j]]).norm();
                let d_bc = (kb.k_plus[[i, j]] - kc.k_plus[[i, j]]).norm();
                assert!(d_ab < 5e-3, "kernel jump {d_ab:.2e}");
                assert!(d_bc < 0.6 * d_ab + 1e-12, "no convergence: {d_bc:.2e} vs {d_ab:.2e}");
                let q_bc = (kb.q_plus[[i, j]] - kc.q_plus[[i, j]]).norm();
                assert!(q_bc < 5e-3, "noise jump {q_bc:.2e}");
            }
        }
    }

    #[test]
    fn stability_check_accepts_decay_and_flags_growth() {
        let stable = array![[c(-2.0, 5.0), c(0.3, 0.0)], [c(0.0, 0.1), c(-1.0, -4.0)]];
        assert!(stability_check(&stable, 1.0).is_ok());
        let growing = array![[c(0.5, 3.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        assert!(matches!(
            stability_check(&growing, 1.0),
            Err(Error::Stability(_))
        ));
    }

    #[test]
    fn driven_chains_respect_the_uncertainty_floor() {
        let cell = toy_cell();
        let scheme = LevelScheme::five_level(40.0, 1.0);
        let mut worst = f64::INFINITY;
        for (alpha, delta) in [(1.5, 0.0), (3.0, 6.0), (6.0, -10.0)] {
            let blocks = chain_blocks(
                &scheme,
                &cell,
                alpha,
                delta,
                5.0,
                1.3,
                0.2,
                120.0,
                1500.0,
                &[(-2.0, 0.3), (0.0, 0.4), (2.0, 0.3)],
            );
            for omega in [0.4, 3.0, 20.0] {
                let kernel = slice_kernel(&blocks, omega).unwrap();
                let tr = SliceTransfer::from_kernel(&kernel);
                let chained = tr.then(&tr).then(&tr);
                let (cp, cm) = chained.output_covariance();
                let q = quadrature_spectrum(&cp, &cm).unwrap();
                assert!(q.s_min > 0.0);
                assert!(q.s_max.is_finite());
                let product = q.s_min * q.s_max * 16.0;
                worst = worst.min(product);
                assert!(
                    product >= 1.0 - 1e-9,
                    "uncertainty product {product:.12} below the floor at α = {alpha}, ω = {omega}"
                );
            }
        }
        // the floor is actually approached but not violated
        assert!(worst >= 1.0 - 1e-9);
    }

    #[test]
    fn trap_level_population_adds_no_spurious_noise() {
        // five-level scheme: pile population into the trap state via strong
        // drive, then verify the undriven vacuum identity still holds when
        // the drive is removed but the trap stays occupied in the moments
        let cell = toy_cell();
        let scheme = LevelScheme::five_level(40.0, 1.0);
        let consts = unit_consts();
        let spec = RegionSpec {
            alpha: 0.0,
            pol: Polarization::H,
            detuning: 2.0,
        };
        // hand-build a stationary-like state with trap weight: the undriven
        // generator keeps any ground/trap mixture stationary
        let mut rho = czeros(5, 5);
        rho[[X, X]] = c(0.35, 0.0);
        rho[[Y, Y]] = c(0.35, 0.0);
        rho[[TRAP, TRAP]] = c(0.30, 0.0);
        let couple = array![[0.0]];
        let blk = fluctuation_block(&BlockInput {
            scheme: &scheme,
            cell: &cell,
            consts: &consts,
            specs: &[spec],
            couple: &couple,
            rhos: &[rho],
            sigma_scale: &[1.0 / 75.0],
            probe: 0,
            n_probe: 75.0,
            v: 0.0,
        })
        .unwrap();
        let kernel = slice_kernel(std::slice::from_ref(&blk), 1.0).unwrap();
        let (cp, cm) = SliceTransfer::from_kernel(&kernel).output_covariance();
        let cv = vacuum_covariance();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(cp[[i, j]].re, cv[[i, j]].re, epsilon = 1e-9);
                assert_abs_diff_eq!(cp[[i, j]].im, cv[[i, j]].im, epsilon = 1e-9);
                assert_abs_diff_eq!(cm[[i, j]].re, cv[[i, j]].re, epsilon = 1e-9);
                assert_abs_diff_eq!(cm[[i, j]].im, cv[[i, j]].im, epsilon = 1e-9);
            }
        }
        let _ = E4; // silence unused import in this narrow test set
    }
}
