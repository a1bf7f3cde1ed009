//! Mean-field steady state of the coupled channel/reservoir system.
//!
//! Atoms fly between the illuminated channel columns and the surrounding dark
//! reservoir, so the mean field of one velocity class is a set of density
//! matrices — one per region — coupled by exchange terms
//! `ρ̇⁽ʳ⁾ += k·(ρ⁽ᶠʳᵒᵐ⁾ − ρ⁽ʳ⁾)`. Region 0 is always the dark reservoir;
//! identical channels may be folded into one representative region with a
//! multiplicity-weighted back-coupling, which leaves the fixed point invariant
//! and shrinks the linear system from (N+1)·d² to a few blocks.
//!
//! The stacked generator is singular (one global conservation law when the
//! exchange rates balance atom fluxes), so the steady state is obtained from
//! a bordered solve that pins every region to unit trace, followed by a
//! residual check that rejects rate sets without a true stationary state.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::atom::{self, LevelScheme, SchemeKind};
use crate::error::{Error, Result};
use crate::linalg::{self, czeros};
use crate::physics::{exchange_rates, CellConfig, ChannelSpec, PhysConsts, Polarization};

/// Drive parameters of one region (the dark reservoir has `alpha = 0`).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RegionSpec {
    /// Drive amplitude; the drive Rabi frequency is √2·α·g1.
    pub alpha: f64,
    pub pol: Polarization,
    /// Two-photon drive detuning δ′ (rad/s), positive = red.
    pub detuning: f64,
}

impl RegionSpec {
    /// The undriven reservoir region.
    pub fn dark() -> Self {
        Self {
            alpha: 0.0,
            pol: Polarization::H,
            detuning: 0.0,
        }
    }
}

/// One exchange coupling: `ρ̇⁽ᵗᵒ⁾ += rate·(ρ⁽ᶠʳᵒᵐ⁾ − ρ⁽ᵗᵒ⁾)`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ExchangePair {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Row-major index of ρ[μ][ν] inside a region block.
#[inline]
pub fn elem_index(mu: usize, nu: usize, d: usize) -> usize {
    mu * d + nu
}

/// Single-region Liouvillian as a d²×d² matrix acting on the row-major
/// element vector: `i[M,ρ] − Γ∘ρ + S(ρ)`.
pub fn liouvillian(
    m: &Array2<C64>,
    gamma: &Array2<f64>,
    feeds: &[(usize, usize, f64)],
) -> Array2<C64> {
    let d = m.nrows();
    let mut a = czeros(d * d, d * d);
    let i = C64::new(0.0, 1.0);
    for mu in 0..d {
        for nu in 0..d {
            let row = elem_index(mu, nu, d);
            for k in 0..d {
                a[[row, elem_index(k, nu, d)]] += i * m[[mu, k]];
                a[[row, elem_index(mu, k, d)]] -= i * m[[k, nu]];
            }
            a[[row, row]] -= C64::from(gamma[[mu, nu]]);
        }
    }
    for &(dest, src, rate) in feeds {
        a[[elem_index(dest, dest, d), elem_index(src, src, d)]] += C64::from(rate);
    }
    a
}

/// Stacked generator for all regions of one velocity class, including the
/// exchange couplings. Ordered with the dark reservoir as region 0.
pub fn assemble_generator(
    scheme: &LevelScheme,
    cell: &CellConfig,
    regions: &[RegionSpec],
    exchange: &[ExchangePair],
    v: f64,
    k: &PhysConsts,
) -> Result<Array2<C64>> {
    scheme.validate()?;
    cell.validate()?;
    if regions.is_empty() {
        return Err(Error::Dimension("no regions to assemble".into()));
    }
    let d = scheme.dim();
    let n = regions.len();
    for p in exchange {
        if p.from >= n || p.to >= n || p.from == p.to {
            return Err(Error::Dimension(format!(
                "exchange pair {} → {} outside the {n} regions",
                p.from, p.to
            )));
        }
        if !(p.rate >= 0.0) {
            return Err(Error::Domain("exchange rates must be non-negative".into()));
        }
    }
    let gamma = atom::gamma_matrix(scheme, cell);
    let feeds = atom::repop_feeds(scheme, cell);
    let mut a = czeros(n * d * d, n * d * d);
    for (r, spec) in regions.iter().enumerate() {
        let m = atom::hamiltonian(
            scheme,
            spec.pol,
            spec.alpha,
            C64::new(0.0, 0.0),
            spec.detuning,
            v,
            k,
        );
        let block = liouvillian(&m, &gamma, &feeds);
        let base = r * d * d;
        a.slice_mut(s![base..base + d * d, base..base + d * d])
            .assign(&block);
    }
    for p in exchange {
        let rate = C64::from(p.rate);
        for e in 0..d * d {
            a[[p.to * d * d + e, p.from * d * d + e]] += rate;
            a[[p.to * d * d + e, p.to * d * d + e]] -= rate;
        }
    }
    Ok(a)
}

/// Steady state of a stacked generator: solves `A·x = 0` with every region
/// pinned to unit trace, checks the residual, and returns the per-region
/// density matrices (hermitized against roundoff).
pub fn steady_state(a: &Array2<C64>, n_regions: usize, d: usize) -> Result<Vec<Array2<C64>>> {
    let nd = n_regions * d * d;
    if a.nrows() != nd || a.ncols() != nd {
        return Err(Error::Dimension(format!(
            "generator is {:?}, expected {nd}×{nd}",
            a.dim()
        )));
    }
    let mut c = czeros(n_regions, nd);
    for r in 0..n_regions {
        for j in 0..d {
            c[[r, r * d * d + elem_index(j, j, d)]] = C64::new(1.0, 0.0);
        }
    }
    let t = Array1::from_elem(n_regions, C64::new(1.0, 0.0));
    let x = linalg::solve_bordered(a, &c, &t)?;
    let resid = a.dot(&x);
    let rnorm = resid.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let xnorm = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let anorm = linalg::norm_1(a).max(1.0);
    if rnorm > 1e-8 * anorm * xnorm {
        return Err(Error::ModelConsistency(format!(
            "no stationary state under these exchange rates (residual {:.3e} vs scale {:.3e})",
            rnorm,
            anorm * xnorm
        )));
    }
    let mut out = Vec::with_capacity(n_regions);
    for r in 0..n_regions {
        let mut rho = Array2::<C64>::zeros((d, d));
        for mu in 0..d {
            for nu in 0..d {
                rho[[mu, nu]] = x[r * d * d + elem_index(mu, nu, d)];
            }
        }
        let rho = (&rho + &linalg::adjoint(&rho)).mapv(|z| 0.5 * z);
        out.push(rho);
    }
    Ok(out)
}

/// Assemble and solve in one call.
pub fn solve_regions(
    scheme: &LevelScheme,
    cell: &CellConfig,
    regions: &[RegionSpec],
    exchange: &[ExchangePair],
    v: f64,
    k: &PhysConsts,
) -> Result<Vec<Array2<C64>>> {
    let a = assemble_generator(scheme, cell, regions, exchange, v, k)?;
    steady_state(&a, regions.len(), scheme.dim())
}

/// One channel species seen by the shared-reservoir solver.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SharedSpecies {
    pub spec: RegionSpec,
    /// Reservoir → channel hopping rate for one member (per atom).
    pub k_in: f64,
    /// Channel → reservoir back-rate summed over the species' members.
    pub k_back: f64,
}

/// Mean field with a velocity-averaged reservoir. Wall collisions
/// re-thermalize velocity between channel visits while preserving the spin
/// state, so the dark region holds a single density matrix with no velocity
/// label, exchanged with every velocity class of every channel species.
///
/// Each class/species block obeys `0 = L_v·ρ + k_in·(ρ⁰ − ρ)`, which solves
/// exactly as `ρ = (k_in·I − L_v)⁻¹·k_in·ρ⁰`; eliminating all channel blocks
/// leaves one d²×d² fixed-point problem for the reservoir, closed by a
/// unit-trace border. Channel traces come out pinned automatically because
/// each single-region generator is trace-preserving.
///
/// Returns `(rho[class][species], rho_dark)`.
pub fn solve_shared(
    scheme: &LevelScheme,
    cell: &CellConfig,
    species: &[SharedSpecies],
    classes: &[(f64, f64)],
    k: &PhysConsts,
) -> Result<(Vec<Vec<Array2<C64>>>, Array2<C64>)> {
    scheme.validate()?;
    cell.validate()?;
    if species.is_empty() || classes.is_empty() {
        return Err(Error::Dimension(
            "shared-reservoir solve needs at least one species and one class".into(),
        ));
    }
    for s in species {
        if !(s.k_in > 0.0) || !(s.k_back > 0.0) {
            return Err(Error::Domain("exchange rates must be positive".into()));
        }
    }
    let d = scheme.dim();
    let gamma = atom::gamma_matrix(scheme, cell);
    let feeds = atom::repop_feeds(scheme, cell);
    let dark = RegionSpec::dark();
    let m_dark = atom::hamiltonian(scheme, dark.pol, dark.alpha, C64::new(0.0, 0.0), 0.0, 0.0, k);
    let mut acc = liouvillian(&m_dark, &gamma, &feeds);
    let beta_total: f64 = species.iter().map(|s| s.k_back).sum();
    for e in 0..d * d {
        acc[[e, e]] -= C64::from(beta_total);
    }

    // Per class and species: fold the eliminated channel response
    // k_back·w·(k_in·I − L)⁻¹·k_in into the reservoir generator.
    let mut response = Vec::with_capacity(classes.len());
    for &(v, w) in classes {
        let mut row = Vec::with_capacity(species.len());
        for sp in species {
            let m = atom::hamiltonian(
                scheme,
                sp.spec.pol,
                sp.spec.alpha,
                C64::new(0.0, 0.0),
                sp.spec.detuning,
                v,
                k,
            );
            let l = liouvillian(&m, &gamma, &feeds);
            let mut b = l.mapv(|z| -z);
            for e in 0..d * d {
                b[[e, e]] += C64::from(sp.k_in);
            }
            let lu = linalg::Lu::factor(&b)?;
            let t = lu.solve_mat(&(linalg::ceye(d * d) * C64::from(sp.k_in)));
            acc = acc + t.mapv(|z| z * C64::from(sp.k_back * w));
            row.push(t);
        }
        response.push(row);
    }

    let mut c = czeros(1, d * d);
    for j in 0..d {
        c[[0, elem_index(j, j, d)]] = C64::new(1.0, 0.0);
    }
    let t1 = Array1::from_elem(1, C64::new(1.0, 0.0));
    let x0 = linalg::solve_bordered(&acc, &c, &t1)?;
    let resid = acc.dot(&x0);
    let rnorm = resid.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let xnorm = x0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let anorm = linalg::norm_1(&acc).max(1.0);
    if rnorm > 1e-8 * anorm * xnorm {
        return Err(Error::ModelConsistency(format!(
            "no stationary reservoir state (residual {:.3e} vs scale {:.3e})",
            rnorm,
            anorm * xnorm
        )));
    }

    let unvec = |x: &Array1<C64>| {
        let mut rho = Array2::<C64>::zeros((d, d));
        for mu in 0..d {
            for nu in 0..d {
                rho[[mu, nu]] = x[elem_index(mu, nu, d)];
            }
        }
        (&rho + &linalg::adjoint(&rho)).mapv(|z| 0.5 * z)
    };
    let rho_dark = unvec(&x0);
    let mut out = Vec::with_capacity(classes.len());
    for row in &response {
        let mut per_class = Vec::with_capacity(species.len());
        for t in row {
            per_class.push(unvec(&t.dot(&x0)));
        }
        out.push(per_class);
    }
    Ok((out, rho_dark))
}

/// Exchange pairs for the full problem: region 0 is the dark reservoir and
/// region `i+1` is channel `i`.
pub fn exchange_pairs(cell: &CellConfig, channels: &[ChannelSpec]) -> Result<Vec<ExchangePair>> {
    let (k_i0, k_0i) = exchange_rates(cell, channels)?;
    let mut pairs = Vec::with_capacity(2 * channels.len());
    for i in 0..channels.len() {
        pairs.push(ExchangePair {
            from: 0,
            to: i + 1,
            rate: k_i0[i],
        });
        pairs.push(ExchangePair {
            from: i + 1,
            to: 0,
            rate: k_0i[i],
        });
    }
    Ok(pairs)
}

/// Exchange pairs for a species-reduced problem: `species[s]` holds
/// `count` identical channels represented by region `s+1`. The dark row
/// weights each species by its multiplicity, which reproduces the full
/// system's fixed point when the members are truly identical.
pub fn species_exchange_pairs(
    cell: &CellConfig,
    species: &[(usize, ChannelSpec)],
) -> Result<Vec<ExchangePair>> {
    let expanded: Vec<ChannelSpec> = species
        .iter()
        .flat_map(|(count, c)| std::iter::repeat(c.clone()).take(*count))
        .collect();
    let (k_i0, k_0i) = exchange_rates(cell, &expanded)?;
    let mut pairs = Vec::with_capacity(2 * species.len());
    let mut at = 0usize;
    for (s, (count, _)) in species.iter().enumerate() {
        pairs.push(ExchangePair {
            from: 0,
            to: s + 1,
            rate: k_i0[at],
        });
        pairs.push(ExchangePair {
            from: s + 1,
            to: 0,
            rate: *count as f64 * k_0i[at],
        });
        at += count;
    }
    Ok(pairs)
}

/// Photons scattered out of the drive per second by `n_atoms` atoms in the
/// given state: excited population times the population decay rate.
pub fn excited_scatter_rate(scheme: &LevelScheme, rho: &Array2<C64>, n_atoms: f64) -> f64 {
    let pop: f64 = match scheme.kind {
        SchemeKind::Lambda3 => rho[[2, 2]].re,
        _ => rho[[atom::E3, atom::E3]].re + rho[[atom::E4, atom::E4]].re,
    };
    scheme.gamma * pop.max(0.0) * n_atoms
}

/// Fraction of the drive photon flux surviving a slice that scatters
/// `scattered` photons per second (clamped to [0, 1]).
pub fn pump_absorption(flux: f64, scattered: f64) -> f64 {
    if flux <= 0.0 {
        return 0.0;
    }
    (1.0 - scattered / flux).clamp(0.0, 1.0)
}
