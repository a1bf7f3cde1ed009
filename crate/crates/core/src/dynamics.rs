//! Millisecond-scale array dynamics under pulsed channel schedules.
//!
//! The full master equation spans rates from the optical linewidth (tens of
//! MHz) down to wall-coating relaxation (tens of Hz). The questions asked of
//! a time trace live at the slow end — how quickly a channel joins the array,
//! how quickly squeezing recovers once a defect pulse ends — so the optically
//! fast components (every element touching an excited state, and the
//! hyperfine coherences split by GHz) are slaved to the ground sector. Within
//! each region the single-region generator is partitioned into slow
//! components (the x/y populations and coherence, plus the trap population in
//! the five-level scheme) and fast ones, and the fast block is eliminated
//! exactly: `L_red = L_ss − L_sf·L_ff⁻¹·L_fs`, with the slaving map
//! `F = −L_ff⁻¹·L_fs` kept so any snapshot can reconstruct the full density
//! matrix. The reduction preserves the slow-sector trace identically.
//!
//! Because atoms re-thermalize their velocity at every wall bounce while the
//! ground sector relaxes over milliseconds, the slow state is shared across
//! velocity classes: the reduced generator is averaged over the Doppler
//! ensemble, while the per-class slaving maps keep the class-resolved fast
//! structure for readout. Regions couple through the same wall-exchange rates
//! as the stationary solver.
//!
//! Drive schedules are piecewise constant, so the reduced generator is
//! constant on each segment; integration is a fixed-step fourth-order scheme
//! marching segment by segment (deterministic, no adaptivity), with the
//! atom-weighted trace monitored as a step-size certificate. Spectral
//! readouts are quasi-static: each snapshot reconstructs the per-class mean
//! states and prices the stationary fluctuation problem at that instant,
//! valid while the detection sideband turns many cycles per schedule segment.
//! Propagation uses a single longitudinal slice (drive depletion across the
//! cell is at the percent level and has no bearing on transient timescales).

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::atom::{self, LevelScheme, TRAP, X, Y};
use crate::error::{Error, Result};
use crate::linalg::{self, czeros, Lu};
use crate::model::{self, ModelConfig};
use crate::noise::{self, SliceTransfer};
use crate::physics::PhysConsts;
use crate::steady::{self, elem_index, RegionSpec};

/// One piecewise-constant power override of a species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    /// Species whose power is overridden.
    pub species: usize,
    /// Start of the override (s), inclusive.
    pub t_on: f64,
    /// End of the override (s), exclusive.
    pub t_off: f64,
    /// Power during the override (W).
    pub power: f64,
}

/// A pulsed drive protocol: baseline species powers, overridden by
/// non-overlapping pulses, over a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub pulses: Vec<Pulse>,
    /// Total simulated time (s).
    pub horizon: f64,
}

impl PulseSchedule {
    /// A constant schedule: baseline powers over `horizon`.
    pub fn constant(horizon: f64) -> Self {
        Self {
            pulses: Vec::new(),
            horizon,
        }
    }

    /// The defect protocol: `species` is driven at `power` during
    /// `[t_on, t_off)` and sits at its baseline otherwise.
    pub fn defect(species: usize, t_on: f64, t_off: f64, power: f64, horizon: f64) -> Self {
        Self {
            pulses: vec![Pulse {
                species,
                t_on,
                t_off,
                power,
            }],
            horizon,
        }
    }

    pub fn validate(&self, n_species: usize) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("schedule horizon {}", self.horizon)));
        }
        for p in &self.pulses {
            if p.species >= n_species {
                return Err(Error::Config(format!(
                    "pulse on species {} of {}",
                    p.species, n_species
                )));
            }
            if !(p.power >= 0.0 && p.power.is_finite()) {
                return Err(Error::Config(format!("pulse power {} W", p.power)));
            }
            if !(p.t_on >= 0.0 && p.t_off > p.t_on && p.t_off <= self.horizon) {
                return Err(Error::Config(format!(
                    "pulse interval [{}, {}) outside [0, {}]",
                    p.t_on, p.t_off, self.horizon
                )));
            }
        }
        for (i, a) in self.pulses.iter().enumerate() {
            for b in self.pulses.iter().skip(i + 1) {
                if a.species == b.species && a.t_on < b.t_off && b.t_on < a.t_off {
                    return Err(Error::Config(format!(
                        "overlapping pulses on species {}",
                        a.species
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sorted, deduplicated segment boundaries: 0, every pulse edge, horizon.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut t = vec![0.0, self.horizon];
        for p in &self.pulses {
            if p.t_on > 0.0 {
                t.push(p.t_on);
            }
            if p.t_off < self.horizon {
                t.push(p.t_off);
            }
        }
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        t
    }

    /// Power of `species` at time `t`, given its baseline.
    pub fn power_at(&self, species: usize, baseline: f64, t: f64) -> f64 {
        for p in &self.pulses {
            if p.species == species && t >= p.t_on && t < p.t_off {
                return p.power;
            }
        }
        baseline
    }
}

/// Row-major vec indices of the slow (ground-sector) components.
fn slow_indices(scheme: &LevelScheme) -> Vec<usize> {
    let d = scheme.dim();
    let mut idx = vec![
        elem_index(X, X, d),
        elem_index(X, Y, d),
        elem_index(Y, X, d),
        elem_index(Y, Y, d),
    ];
    if d > TRAP {
        idx.push(elem_index(TRAP, TRAP, d));
    }
    idx
}

/// Exact elimination of the fast sector of one region's generator.
/// Returns the reduced slow generator and the slaving map `F` such that the
/// quasi-steady fast components are `f = F·s`.
pub fn reduce_region(
    scheme: &LevelScheme,
    cell: &crate::physics::CellConfig,
    spec: &RegionSpec,
    v: f64,
    k: &PhysConsts,
) -> Result<(Array2<C64>, Array2<C64>)> {
    let d = scheme.dim();
    let m = atom::hamiltonian(
        scheme,
        spec.pol,
        spec.alpha,
        C64::new(0.0, 0.0),
        spec.detuning,
        v,
        k,
    );
    let gamma = atom::gamma_matrix(scheme, cell);
    let feeds = atom::repop_feeds(scheme, cell);
    let l = steady::liouvillian(&m, &gamma, &feeds);

    let slow = slow_indices(scheme);
    let fast: Vec<usize> = (0..d * d).filter(|i| !slow.contains(i)).collect();
    let ns = slow.len();
    let nf = fast.len();
    let gather = |rows: &[usize], cols: &[usize]| -> Array2<C64> {
        Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| l[[rows[i], cols[j]]])
    };
    let l_ss = gather(&slow, &slow);
    let l_sf = gather(&slow, &fast);
    let l_fs = gather(&fast, &slow);
    let l_ff = gather(&fast, &fast);

    let lu = Lu::factor(&l_ff).map_err(|_| {
        Error::ModelConsistency(
            "fast sector of the reduced dynamics is singular; the ground-sector \
             reduction does not apply"
                .into(),
        )
    })?;
    let mut slave = lu.solve_mat(&l_fs);
    slave.mapv_inplace(|z| -z);
    let l_red = &l_ss + &l_sf.dot(&slave);
    let _ = (ns, nf);
    Ok((l_red, slave))
}

/// One constant-drive stretch of the schedule with its reduced generator.
struct Segment {
    t0: f64,
    t1: f64,
    /// Global slow generator: regions (dark first) coupled by wall exchange.
    g: Array2<C64>,
    /// Per region, per velocity class: slaving map back to the fast sector.
    slave: Vec<Vec<Array2<C64>>>,
    /// Per-species drive specs during the segment.
    specs: Vec<RegionSpec>,
}

/// A reduced-dynamics trajectory with everything needed for readout.
pub struct Trajectory {
    /// Snapshot times (s).
    pub times: Vec<f64>,
    /// Snapshot slow states: regions stacked dark-first, `n_slow` components
    /// per region.
    pub slow: Vec<Array1<C64>>,
    /// Segment index of each snapshot.
    seg_of: Vec<usize>,
    segments: Vec<Segment>,
    /// Slow components per region.
    pub n_slow: usize,
    /// Region count (species count + 1 for the dark reservoir).
    pub n_regions: usize,
}

impl Trajectory {
    /// Ground-sector density matrix of one region at one snapshot (fast
    /// components zero). Region 0 is the dark reservoir; species `s` sits at
    /// region `s + 1`.
    pub fn region_ground(&self, snap: usize, region: usize, scheme: &LevelScheme) -> Array2<C64> {
        let d = scheme.dim();
        let idx = slow_indices(scheme);
        let x = &self.slow[snap];
        let mut rho = czeros(d, d);
        for (c, &p) in idx.iter().enumerate() {
            rho[[p / d, p % d]] = x[region * self.n_slow + c];
        }
        rho
    }

    /// Atom-population total of one region at one snapshot.
    pub fn region_trace(&self, snap: usize, region: usize) -> f64 {
        let x = &self.slow[snap];
        let base = region * self.n_slow;
        let mut t = x[base].re + x[base + 3].re;
        if self.n_slow == 5 {
            t += x[base + 4].re;
        }
        t
    }
}

fn global_generator(
    cfg: &ModelConfig,
    scheme: &LevelScheme,
    rates: &model::SpeciesRates,
    specs: &[RegionSpec],
    classes: &[atom::VelocityClass],
    consts: &PhysConsts,
) -> Result<(Array2<C64>, Vec<Vec<Array2<C64>>>)> {
    let ns = slow_indices(scheme).len();
    let nr = cfg.species.len() + 1;
    let mut g = czeros(nr * ns, nr * ns);
    let mut slave = Vec::with_capacity(nr);
    for r in 0..nr {
        let spec = if r == 0 {
            RegionSpec::dark()
        } else {
            specs[r - 1]
        };
        let mut acc = czeros(ns, ns);
        let mut maps = Vec::with_capacity(classes.len());
        for cl in classes {
            let (l_red, f) = reduce_region(scheme, &cfg.cell, &spec, cl.v, consts)?;
            acc = acc + l_red.mapv(|z| z * C64::from(cl.w));
            maps.push(f);
        }
        g.slice_mut(s![r * ns..(r + 1) * ns, r * ns..(r + 1) * ns])
            .assign(&acc);
        slave.push(maps);
    }
    // wall exchange: channel rows relax toward the reservoir at k_in, the
    // reservoir row collects every member at k_out
    for (sp, s_cfg) in cfg.species.iter().enumerate() {
        let r = sp + 1;
        let kin = C64::from(rates.k_in[sp]);
        let kout = C64::from(s_cfg.count as f64 * rates.k_out[sp]);
        for c in 0..ns {
            g[[r * ns + c, r * ns + c]] -= kin;
            g[[r * ns + c, c]] += kin;
            g[[c, c]] -= kout;
            g[[c, r * ns + c]] += kout;
        }
    }
    Ok((g, slave))
}

/// Largest total row weight of the generator — a conservative bound on its
/// spectral radius, hence on the fastest retained rate.
fn rate_bound(g: &Array2<C64>) -> f64 {
    let mut bound: f64 = 0.0;
    for i in 0..g.nrows() {
        let row: f64 = (0..g.ncols()).map(|j| g[[i, j]].norm()).sum();
        bound = bound.max(row);
    }
    bound
}

/// Integrate the reduced array dynamics through a pulsed schedule.
///
/// `dt` is the integration step; pass 0.0 to let the integrator choose from
/// the fastest retained rate. `snap_stride` stores every n-th step (0 picks a
/// stride for ~240 snapshots). The initial state is the stationary point of
/// the baseline (pulse-free) drive.
pub fn time_evolve(
    cfg: &ModelConfig,
    schedule: &PulseSchedule,
    dt: f64,
    snap_stride: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    schedule.validate(cfg.species.len())?;
    let consts = PhysConsts::rb87();
    let scheme = cfg.scheme(&consts);
    let g_coupling = scheme.g1;
    let rates = model::species_rates(cfg)?;
    let classes = atom::doppler_grid(cfg.cell.doppler_width, cfg.doppler_points, &consts)?;
    let ns = slow_indices(&scheme).len();
    let nr = cfg.species.len() + 1;

    let specs_for = |powers: &[f64]| -> Vec<RegionSpec> {
        cfg.species
            .iter()
            .enumerate()
            .map(|(s, sp)| RegionSpec {
                alpha: model::alpha_for(
                    powers[s],
                    sp.spec.radius,
                    cfg.rabi_calib_mhz,
                    g_coupling,
                ),
                pol: sp.spec.polarization,
                detuning: sp.spec.detuning,
            })
            .collect()
    };

    // segments with their reduced generators
    let edges = schedule.switch_times();
    let mut segments = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let tm = 0.5 * (t0 + t1);
        let powers: Vec<f64> = cfg
            .species
            .iter()
            .enumerate()
            .map(|(s, sp)| schedule.power_at(s, sp.spec.power, tm))
            .collect();
        let specs = specs_for(&powers);
        let (g, slave) = global_generator(cfg, &scheme, &rates, &specs, &classes, &consts)?;
        segments.push(Segment {
            t0,
            t1,
            g,
            slave,
            specs,
        });
    }

    // initial state: stationary point of the baseline drive
    let baseline: Vec<f64> = cfg.species.iter().map(|s| s.spec.power).collect();
    let specs0 = specs_for(&baseline);
    let (g0, _) = global_generator(cfg, &scheme, &rates, &specs0, &classes, &consts)?;
    let mut border = czeros(1, nr * ns);
    border[[0, 0]] = C64::from(1.0);
    border[[0, 3]] = C64::from(1.0);
    if ns == 5 {
        border[[0, 4]] = C64::from(1.0);
    }
    let t_rhs = Array1::from_elem(1, C64::from(1.0));
    let x0 = linalg::solve_bordered(&g0, &border, &t_rhs)?;
    for r in 0..nr {
        let base = r * ns;
        let mut tr = x0[base].re + x0[base + 3].re;
        if ns == 5 {
            tr += x0[base + 4].re;
        }
        if (tr - 1.0).abs() > 1e-6 {
            return Err(Error::ModelConsistency(format!(
                "baseline stationary state: region {r} holds population {tr:.8}"
            )));
        }
    }

    // step-size certificate
    let bound = segments.iter().map(|s| rate_bound(&s.g)).fold(0.0, f64::max);
    let dt_max = 0.1 / bound.max(1e-300);
    let mut step = if dt == 0.0 { dt_max } else { dt };
    if step > dt_max * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "step {step:.3e} s does not resolve the fastest retained rate \
             ({bound:.3e} 1/s); need dt <= {dt_max:.3e} s"
        )));
    }

    // atom weights for the conserved total
    let n_total: f64 = rates
        .n_sp
        .iter()
        .zip(&cfg.species)
        .map(|(n, s)| n * s.count as f64)
        .sum::<f64>()
        + rates.n_dark;
    let mut weights = vec![rates.n_dark / n_total];
    for (n, s) in rates.n_sp.iter().zip(&cfg.species) {
        weights.push(n * s.count as f64 / n_total);
    }

    for halving in 0..4 {
        match march(&segments, &x0, step, snap_stride, ns, &weights) {
            Ok((times, slow, seg_of)) => {
                return Ok(Trajectory {
                    times,
                    slow,
                    seg_of,
                    segments,
                    n_slow: ns,
                    n_regions: nr,
                });
            }
            Err(Error::ModelConsistency(_)) if halving < 3 => step *= 0.5,
            Err(e) => return Err(e),
        }
    }
    unreachable!("final halving either returned or erred");
}

type MarchOut = (Vec<f64>, Vec<Array1<C64>>, Vec<usize>);

fn march(
    segments: &[Segment],
    x0: &Array1<C64>,
    dt: f64,
    snap_stride: usize,
    ns: usize,
    weights: &[f64],
) -> std::result::Result<MarchOut, Error> {
    let horizon = segments.last().map(|s| s.t1).unwrap_or(0.0);
    let total_steps = (horizon / dt).ceil() as usize;
    let stride = if snap_stride == 0 {
        (total_steps / 240).max(1)
    } else {
        snap_stride
    };

    let weighted_trace = |x: &Array1<C64>| -> f64 {
        weights
            .iter()
            .enumerate()
            .map(|(r, w)| {
                let base = r * ns;
                let mut t = x[base].re + x[base + 3].re;
                if ns == 5 {
                    t += x[base + 4].re;
                }
                w * t
            })
            .sum()
    };

    let mut x = x0.clone();
    let mut times = Vec::new();
    let mut slow = Vec::new();
    let mut seg_of = Vec::new();
    let mut store = |t: f64, x: &Array1<C64>, seg: usize| -> std::result::Result<(), Error> {
        let drift = (weighted_trace(x) - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::ModelConsistency(format!(
                "trace drift {drift:.2e} at t = {t:.3e} s; step too coarse"
            )));
        }
        times.push(t);
        slow.push(x.clone());
        seg_of.push(seg);
        Ok(())
    };

    store(0.0, &x, 0)?;
    let mut step_count = 0usize;
    for (si, seg) in segments.iter().enumerate() {
        let span = seg.t1 - seg.t0;
        let n = (span / dt).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let hg = seg.g.mapv(|z| z * C64::from(h));
        for i in 0..n {
            // classic fourth-order step of the linear system x' = G x
            let k1 = hg.dot(&x);
            let k2 = hg.dot(&(&x + &k1.mapv(|z| z * C64::from(0.5))));
            let k3 = hg.dot(&(&x + &k2.mapv(|z| z * C64::from(0.5))));
            let k4 = hg.dot(&(&x + &k3));
            x = &x
                + &k1.mapv(|z| z / C64::from(6.0))
                + &k2.mapv(|z| z / C64::from(3.0))
                + &k3.mapv(|z| z / C64::from(3.0))
                + &k4.mapv(|z| z / C64::from(6.0));
            step_count += 1;
            let at_boundary = i + 1 == n;
            if step_count % stride == 0 || at_boundary {
                let t = if at_boundary {
                    seg.t1
                } else {
                    seg.t0 + h * (i + 1) as f64
                };
                // a boundary snapshot belongs to the segment just finished
                store(t, &x, si)?;
            }
        }
    }
    Ok((times, slow, seg_of))
}

/// Quasi-static spectral readout of a trajectory: the instantaneous squeezing
/// of the probed species at each snapshot, in decibels.
///
/// Refuses detection sidebands slower than ten cycles per schedule segment,
/// where the quasi-static picture breaks down.
pub fn instantaneous_squeezing(
    cfg: &ModelConfig,
    traj: &Trajectory,
    omega: f64,
    probe: usize,
) -> Result<Vec<f64>> {
    if probe >= cfg.species.len() {
        return Err(Error::Config(format!(
            "probe species {} of {}",
            probe,
            cfg.species.len()
        )));
    }
    let t_min = traj
        .segments
        .iter()
        .map(|s| s.t1 - s.t0)
        .fold(f64::INFINITY, f64::min);
    if omega < 10.0 / t_min {
        return Err(Error::Domain(format!(
            "detection frequency {omega:.3e} rad/s too slow for quasi-static \
             readout of {:.3e} s segments",
            t_min
        )));
    }
    let consts = PhysConsts::rb87();
    let scheme = cfg.scheme(&consts);
    let rates = model::species_rates(cfg)?;
    let classes = atom::doppler_grid(cfg.cell.doppler_width, cfg.doppler_points, &consts)?;
    let lay = model::block_layout(cfg, probe, &rates);
    let d = scheme.dim();
    let slow_idx = slow_indices(&scheme);
    let ns = slow_idx.len();
    let fast_idx: Vec<usize> = (0..d * d).filter(|i| !slow_idx.contains(i)).collect();

    let embed = |x: &Array1<C64>, region: usize, slave: &Array2<C64>| -> Array2<C64> {
        let base = region * ns;
        let xs = x.slice(s![base..base + ns]).to_owned();
        let xf = slave.dot(&xs);
        let mut rho = czeros(d, d);
        for (c, &p) in slow_idx.iter().enumerate() {
            rho[[p / d, p % d]] = xs[c];
        }
        for (c, &p) in fast_idx.iter().enumerate() {
            rho[[p / d, p % d]] = xf[c];
        }
        // enforce Hermitian structure against integrator roundoff
        for a in 0..d {
            for b in 0..a {
                let m = 0.5 * (rho[[a, b]] + rho[[b, a]].conj());
                rho[[a, b]] = m;
                rho[[b, a]] = m.conj();
            }
            rho[[a, a]] = C64::from(rho[[a, a]].re);
        }
        rho
    };

    (0..traj.times.len())
        .into_par_iter()
        .map(|i| {
            let seg = &traj.segments[traj.seg_of[i]];
            let x = &traj.slow[i];
            let mut blocks = Vec::with_capacity(classes.len());
            for (ci, cl) in classes.iter().enumerate() {
                let rho_dark = embed(x, 0, &seg.slave[0][ci]);
                let rho_sp: Vec<Array2<C64>> = (0..cfg.species.len())
                    .map(|sp| embed(x, sp + 1, &seg.slave[sp + 1][ci]))
                    .collect();
                blocks.push(model::assemble_class_block(
                    cfg, &scheme, &consts, &lay, &rates, &seg.specs, &rho_sp, &rho_dark, cl.v,
                    cl.w, 1.0,
                )?);
            }
            let kernel = noise::slice_kernel(&blocks, omega)?;
            let (cp, cm) = SliceTransfer::from_kernel(&kernel).output_covariance();
            let q = noise::quadrature_spectrum(&cp, &cm)?;
            Ok(noise::to_db(q.s_min))
        })
        .collect()
}

/// Fit `y(t) = A + B·exp(−(t − t_off)/τ)` to the samples past `t_off` and
/// return `(τ, σ_τ)`, the recovery time with its fit uncertainty.
pub fn recovery_time(times: &[f64], s_db: &[f64], t_off: f64) -> Result<(f64, f64)> {
    if times.len() != s_db.len() {
        return Err(Error::Dimension(format!(
            "{} times vs {} samples",
            times.len(),
            s_db.len()
        )));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(s_db)
        .filter(|(t, _)| **t > t_off)
        .map(|(t, y)| (*t - t_off, *y))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Domain(format!(
            "{} samples past the pulse edge; need at least 8 for a fit",
            pts.len()
        )));
    }
    let span = pts.last().unwrap().0 - pts[0].0;
    let (ymin, ymax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| {
            (lo.min(y), hi.max(y))
        });
    if ymax - ymin < 1e-9 {
        return Err(Error::Fit(
            "squeezing trace is flat after the pulse; recovery time undefined".into(),
        ));
    }

    // linear least squares for (A, B) at fixed τ, returning the residual
    let sse_at = |tau: f64| -> (f64, f64, f64) {
        let (mut s1, mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(t, y) in &pts {
            let e = (-t / tau).exp();
            s1 += 1.0;
            se += e;
            see += e * e;
            sy += y;
            sey += e * y;
        }
        let det = s1 * see - se * se;
        if det.abs() < 1e-300 {
            return (f64::INFINITY, 0.0, 0.0);
        }
        let a = (see * sy - se * sey) / det;
        let b = (s1 * sey - se * sy) / det;
        let sse: f64 = pts
            .iter()
            .map(|&(t, y)| {
                let r = y - a - b * (-t / tau).exp();
                r * r
            })
            .sum();
        (sse, a, b)
    };

    // bracket the optimum on a log grid, then refine by golden section
    let lo = (span / 1e4).max(1e-12);
    let hi = span * 10.0;
    let n_scan = 64;
    let mut best = (f64::INFINITY, 0usize);
    let tau_of = |i: usize| lo * (hi / lo).powf(i as f64 / (n_scan - 1) as f64);
    for i in 0..n_scan {
        let (sse, _, _) = sse_at(tau_of(i));
        if sse < best.0 {
            best = (sse, i);
        }
    }
    if best.1 == 0 || best.1 == n_scan - 1 {
        return Err(Error::Fit(format!(
            "recovery fit ran to the search boundary (τ ≈ {:.3e} s); the \
             trace does not resolve an exponential return",
            tau_of(best.1)
        )));
    }
    let (mut a, mut b) = (tau_of(best.1 - 1), tau_of(best.1 + 1));
    let phi = 0.5 * (3.0 - 5.0_f64.sqrt());
    let (mut x1, mut x2) = (a + phi * (b - a), b - phi * (b - a));
    let (mut f1, mut f2) = (sse_at(x1).0, sse_at(x2).0);
    for _ in 0..200 {
        if (b - a) < 1e-12 * b {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + phi * (b - a);
            f1 = sse_at(x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - phi * (b - a);
            f2 = sse_at(x2).0;
        }
    }
    let tau = 0.5 * (a + b);
    let (sse, afit, bfit) = sse_at(tau);
    if bfit.abs() < 1e-9 {
        return Err(Error::Fit(
            "fitted recovery amplitude is zero; recovery time undefined".into(),
        ));
    }

    // covariance of (A, B, τ) from the Gauss–Newton normal matrix
    let mut jtj = [[0.0f64; 3]; 3];
    for &(t, _) in &pts {
        let e = (-t / tau).exp();
        let row = [1.0, e, bfit * e * t / (tau * tau)];
        for r in 0..3 {
            for c in 0..3 {
                jtj[r][c] += row[r] * row[c];
            }
        }
    }
    let det = jtj[0][0] * (jtj[1][1] * jtj[2][2] - jtj[1][2] * jtj[2][1])
        - jtj[0][1] * (jtj[1][0] * jtj[2][2] - jtj[1][2] * jtj[2][0])
        + jtj[0][2] * (jtj[1][0] * jtj[2][1] - jtj[1][1] * jtj[2][0]);
    if det.abs() < 1e-300 {
        return Err(Error::Fit("singular fit covariance".into()));
    }
    // (J'J)^{-1}[2][2] via the cofactor
    let cof_tt = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let dof = (pts.len() as f64 - 3.0).max(1.0);
    let var_tau = (sse / dof) * (cof_tt / det);
    let _ = afit;
    Ok((tau, var_tau.max(0.0).sqrt()))
}
