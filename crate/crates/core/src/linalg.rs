//! Dense complex linear-algebra kernels sized for this crate's problems
//! (systems of at most a few hundred unknowns): LU solves, a Hermitian Jacobi
//! eigensolver, scaling-and-squaring matrix exponentials, and the exact
//! integral ∫₀¹ e^{Ku} Q e^{K′ᵀu} du used for distributed noise injection.
//!
//! Everything is deterministic: no pivot randomization, fixed sweep orders,
//! fixed reduction orders.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Complex zero matrix.
pub fn czeros(rows: usize, cols: usize) -> Array2<C64> {
    Array2::from_elem((rows, cols), C64::new(0.0, 0.0))
}

/// Complex identity matrix.
pub fn ceye(n: usize) -> Array2<C64> {
    let mut a = czeros(n, n);
    for i in 0..n {
        a[[i, i]] = C64::new(1.0, 0.0);
    }
    a
}

/// Conjugate transpose.
pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Max |a − a†| entry, as a Hermiticity residual.
pub fn herm_residual(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            r = r.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    r
}

/// 1-norm (max absolute column sum).
pub fn norm_1(a: &Array2<C64>) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Frobenius norm.
pub fn norm_fro(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// LU factorization with partial pivoting of a square complex matrix.
pub struct Lu {
    lu: Array2<C64>,
    piv: Vec<usize>,
}

impl Lu {
    /// Factor `a`; fails on singularity (pivot below 1e-300 absolute or
    /// collapse by 1e-14 relative to the matrix scale).
    pub fn factor(a: &Array2<C64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("expected square matrix, got {:?}", a.dim())));
        }
        let scale = norm_1(a).max(1e-300);
        let mut lu = a.clone();
        let mut piv = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = k;
            let mut best = lu[[k, k]].norm();
            for i in (k + 1)..n {
                let v = lu[[i, k]].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-14 * scale {
                return Err(Error::Singular(format!(
                    "pivot {k} of {n} collapsed to {best:.3e} (matrix scale {scale:.3e})"
                )));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[[k, j]];
                    lu[[k, j]] = lu[[p, j]];
                    lu[[p, j]] = t;
                }
            }
            piv.push(p);
            let d = lu[[k, k]];
            for i in (k + 1)..n {
                let m = lu[[i, k]] / d;
                lu[[i, k]] = m;
                if m != C64::new(0.0, 0.0) {
                    for j in (k + 1)..n {
                        let sub = m * lu[[k, j]];
                        lu[[i, j]] -= sub;
                    }
                }
            }
        }
        Ok(Self { lu, piv })
    }

    /// Solve A·x = b for one right-hand side.
    pub fn solve_vec(&self, b: &Array1<C64>) -> Array1<C64> {
        let n = self.lu.nrows();
        let mut x = b.clone();
        // apply all interchanges first: the stored L is the fully permuted one
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let xk = x[k];
            if xk != C64::new(0.0, 0.0) {
                for i in (k + 1)..n {
                    let sub = self.lu[[i, k]] * xk;
                    x[i] -= sub;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in (k + 1)..n {
                s -= self.lu[[k, j]] * x[j];
            }
            x[k] = s / self.lu[[k, k]];
        }
        x
    }

    /// Solve A·X = B column by column.
    pub fn solve_mat(&self, b: &Array2<C64>) -> Array2<C64> {
        let mut out = czeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve_vec(&b.column(j).to_owned());
            out.column_mut(j).assign(&col);
        }
        out
    }

    /// Solve Aᵀ·x = b using the same factorization: with A = P⁻¹LU this is
    /// Uᵀw = b, Lᵀz = w, then undoing the interchanges in reverse order.
    pub fn solve_transposed_vec(&self, b: &Array1<C64>) -> Array1<C64> {
        let n = self.lu.nrows();
        let mut x = b.clone();
        for k in 0..n {
            let mut s = x[k];
            for i in 0..k {
                s -= self.lu[[i, k]] * x[i];
            }
            x[k] = s / self.lu[[k, k]];
        }
        for k in (0..n).rev() {
            let xk = x[k];
            if xk != C64::new(0.0, 0.0) {
                for i in 0..k {
                    let sub = self.lu[[k, i]] * xk;
                    x[i] -= sub;
                }
            }
        }
        for k in (0..n).rev() {
            x.swap(k, self.piv[k]);
        }
        x
    }
}

/// Solve A·x = b by LU with partial pivoting.
pub fn solve(a: &Array2<C64>, b: &Array1<C64>) -> Result<Array1<C64>> {
    Ok(Lu::factor(a)?.solve_vec(b))
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations; returns eigenvalues ascending with matching orthonormal columns
/// in `v` (a = v · diag(w) · v†).
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("expected square matrix, got {:?}", a.dim())));
    }
    let res = herm_residual(a);
    let scale = norm_fro(a).max(1e-300);
    if res > 1e-10 * scale {
        return Err(Error::Domain(format!(
            "eigh needs a Hermitian input (residual {res:.3e} vs scale {scale:.3e})"
        )));
    }
    // work on the exactly Hermitized copy
    let mut m = czeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]].conj());
        }
    }
    let mut v = ceye(n);
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let phi = apq.arg();
                let mag = apq.norm();
                // diagonalize [[app, mag e^{iφ}],[mag e^{-iφ}, aqq]]
                let theta = 0.5 * (2.0 * mag).atan2(aqq - app);
                let c = theta.cos();
                let s = theta.sin();
                let e_pos = C64::from_polar(1.0, phi);
                // columns: new_p = c·p − s·e^{-iφ}·q ; new_q = s·e^{iφ}·p + c·q
                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * e_pos.conj() * miq;
                    m[[i, q]] = s * e_pos * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[[p, j]];
                    let mqj = m[[q, j]];
                    m[[p, j]] = c * mpj - s * e_pos * mqj;
                    m[[q, j]] = s * e_pos.conj() * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * e_pos.conj() * viq;
                    v[[i, q]] = s * e_pos * vip + c * viq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let w_raw: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    idx.sort_by(|&i, &j| w_raw[i].total_cmp(&w_raw[j]));
    let w = Array1::from_iter(idx.iter().map(|&i| w_raw[i]));
    let mut vs = czeros(n, n);
    for (newj, &oldj) in idx.iter().enumerate() {
        vs.column_mut(newj).assign(&v.column(oldj));
    }
    Ok((w, vs))
}

/// Matrix exponential by scaling and squaring with a high-order Taylor core.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let nrm = norm_1(a);
    let s = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let m = a.mapv(|z| z / C64::new(2f64.powi(s), 0.0));
    // Taylor to order 18 at ‖M‖ ≤ 0.5: truncation < 2^-60
    let mut term = ceye(n);
    let mut sum = ceye(n);
    for k in 1..=18 {
        term = term.dot(&m) / C64::new(k as f64, 0.0);
        sum += &term;
    }
    let mut e = sum;
    for _ in 0..s {
        e = e.dot(&e);
    }
    e
}

/// φ₁(A) = A⁻¹(e^A − I) = ∫₀¹ e^{Au} du, computed for any A (including
/// singular) through the exponential of the augmented block matrix.
pub fn phi1(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let mut b = czeros(2 * n, 2 * n);
    b.slice_mut(s![..n, ..n]).assign(a);
    for i in 0..n {
        b[[i, n + i]] = C64::new(1.0, 0.0);
    }
    let e = expm(&b);
    e.slice(s![..n, n..]).to_owned()
}

/// Kronecker product.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = czeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij != C64::new(0.0, 0.0) {
                for k in 0..br {
                    for l in 0..bc {
                        out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                    }
                }
            }
        }
    }
    out
}

/// Exact ∫₀¹ e^{K u} · Q · e^{K′ᵀ u} du via φ₁ of the Kronecker sum
/// K⊗I + I⊗K′ acting on the row-major vectorization of Q.
pub fn integrate_sandwich(k: &Array2<C64>, kp: &Array2<C64>, q: &Array2<C64>) -> Array2<C64> {
    let n = k.nrows();
    let id = ceye(n);
    let l = kron(k, &id) + kron(&id, kp);
    let p = phi1(&l);
    let qv = Array1::from_iter(q.iter().cloned());
    let nv = p.dot(&qv);
    Array2::from_shape_vec((n, n), nv.to_vec()).expect("shape preserved")
}

/// Upper bound estimate of max Re λ(A): the growth rate of ‖e^{Aτ}v‖ under
/// power iteration on e^{Aτ}. Deterministic start vector; adequate as a
/// stability guard.
pub fn spectral_abscissa(a: &Array2<C64>, tau: f64) -> f64 {
    let n = a.nrows();
    let e = expm(&a.mapv(|z| z * C64::new(tau, 0.0)));
    let mut v = Array1::from_shape_fn(n, |i| {
        C64::new(1.0 + 0.37 * ((i as f64) + 1.0).sin(), 0.11 * ((i as f64) + 2.0).cos())
    });
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / C64::new(nrm, 0.0));
    let mut growth: f64 = 0.0;
    for it in 0..250 {
        let w = e.dot(&v);
        let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nw == 0.0 {
            return f64::NEG_INFINITY;
        }
        if it >= 200 {
            growth = growth.max(nw);
        }
        v = w.mapv(|z| z / C64::new(nw, 0.0));
    }
    growth.ln() / tau
}

/// Solve the singular system A·x = 0 subject to linear constraints C·x = t by
/// the bordered square system [[A, C†],[C, 0]]·[x; λ] = [0; t].
///
/// The border blocks are rescaled to the norm of `A` before factoring, so
/// constraint rows compete for pivots on equal footing even when `A` spans
/// many decades; the returned `x` is unaffected by the rescaling.
pub fn solve_bordered(a: &Array2<C64>, c: &Array2<C64>, t: &Array1<C64>) -> Result<Array1<C64>> {
    let n = a.nrows();
    let m = c.nrows();
    if a.ncols() != n || c.ncols() != n || t.len() != m {
        return Err(Error::Dimension(format!(
            "bordered solve: A {:?}, C {:?}, t {}",
            a.dim(),
            c.dim(),
            t.len()
        )));
    }
    let s = C64::from(norm_1(a).max(1.0));
    let mut big = czeros(n + m, n + m);
    big.slice_mut(s![..n, ..n]).assign(a);
    for i in 0..m {
        for j in 0..n {
            big[[n + i, j]] = s * c[[i, j]];
            big[[j, n + i]] = s * c[[i, j]].conj();
        }
    }
    let mut rhs = Array1::from_elem(n + m, C64::new(0.0, 0.0));
    for i in 0..m {
        rhs[n + i] = s * t[i];
    }
    let lu = Lu::factor(&big).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!(
            "steady solve: null space larger than the {m} trace constraints ({msg})"
        )),
        other => other,
    })?;
    let mut sol = lu.solve_vec(&rhs);
    // two rounds of iterative refinement claw back the digits lost to pivot
    // growth when the generator spans many decades (GHz splittings next to
    // Hz wall rates)
    for _ in 0..2 {
        let resid = &rhs - &big.dot(&sol);
        let corr = lu.solve_vec(&resid);
        sol = &sol + &corr;
    }
    Ok(sol.slice(s![..n]).to_owned())
}
