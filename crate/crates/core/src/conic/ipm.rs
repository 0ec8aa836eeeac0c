//! Homogeneous self-dual primal-dual interior-point method over products of
//! PSD (real or complex Hermitian) cones and the nonnegative orthant.
//!
//! Solves `min cᵀz : s = h + G z ∈ K` together with its dual through the
//! simplified homogeneous embedding
//!
//! ```text
//!   Gᵀy         = c τ − r_d
//!   h τ + G z   = s + r_p
//!   −cᵀz − hᵀy  = κ + r_g
//! ```
//!
//! with Nesterov-Todd scaling, Mehrotra predictor-corrector steps, and
//! residuals shrinking proportionally to the complementarity measure. A
//! vanishing κ/τ yields the optimum; a vanishing τ yields an infeasibility
//! or unboundedness certificate.

use ndarray::prelude::*;
use ndarray_linalg::{Cholesky, SolveTriangular, Diag, UPLO};
use num_complex::Complex64;

use super::coords::{self, Mode};
use super::geometry::{GBlockKind, Geometry};
use super::{SolveAccuracy, SolveStatus};
use crate::linalg::{conj_transpose, eigh_cmat, CMat};
use crate::{Error, Result};

const MAX_ITER: usize = 120;
const STEP_FRAC: f64 = 0.98;

#[derive(Debug)]
pub struct GeomSolution {
    pub status: SolveStatus,
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub accuracy: SolveAccuracy,
    pub iterations: usize,
}

struct Block {
    kind: GBlockKind,
    offset: usize,
    dim: usize,
    /// Columns of an identity-selector G sub-block, if applicable.
    selector: Option<Vec<usize>>,
}

/// Per-iteration Nesterov-Todd scaling data of one PSD block.
struct NtPsd {
    r: CMat,
    r_inv: CMat,
    lambda: Array1<f64>,
}

pub fn solve_geometry(geom: &Geometry, tol: f64) -> Result<GeomSolution> {
    if let Some(status) = geom.pre_status {
        return Ok(GeomSolution {
            status,
            z: vec![0.0; geom.n_z],
            primal_objective: 0.0,
            dual_objective: 0.0,
            accuracy: SolveAccuracy::default(),
            iterations: 0,
        });
    }
    if geom.rows == 0 || geom.n_z == 0 {
        return Err(Error::SolverFailure("empty geometric program".into()));
    }

    let mode = geom.mode;
    let n = geom.n_z;
    let blocks = collect_blocks(geom);

    let g = &geom.g;
    let h = Array1::from_vec(geom.h.clone());
    let c = Array1::from_vec(geom.c.clone());
    let h_norm = h.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let g_inf = g.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-12);

    // barrier degree
    let nu: f64 = blocks
        .iter()
        .map(|b| match b.kind {
            GBlockKind::Psd(nb) => nb as f64,
            GBlockKind::Nonneg(k) => k as f64,
        })
        .sum::<f64>()
        + 1.0;

    // state
    let mut x = Array1::<f64>::zeros(n);
    let mut s = identity_point(&blocks, geom.rows, mode);
    let mut y = s.clone();
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let mut best_acc = SolveAccuracy::default();
    let mut best_state: Option<(Array1<f64>, Array1<f64>, f64, f64, f64)> = None;
    let mut best_score = f64::INFINITY;
    let mut best_mu = f64::INFINITY;
    let mut stall = 0usize;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        iterations = iter;
        // the iterate is a ray: renormalize to τ = 1 when τ drifts small, so
        // the absolute roundoff floors stop eating the τ-relative measures
        if tau < 0.5 {
            let f = 1.0 / tau;
            x.mapv_inplace(|v| v * f);
            y.mapv_inplace(|v| v * f);
            s.mapv_inplace(|v| v * f);
            kappa *= f;
            tau = 1.0;
        }
        // residuals
        let gx = g.dot(&x);
        let gty = g.t().dot(&y);
        let r_d = &gty - &(&c * tau); // want 0: Gᵀy − cτ = 0
        let r_p = &(&h * tau) + &gx - &s; // want 0: hτ + Gz − s = 0
        let r_g = -c.dot(&x) - h.dot(&y) - kappa;

        let mu = (s.dot(&y) + tau * kappa) / nu;

        // convergence diagnostics at the de-homogenized point
        let pobj = c.dot(&x) / tau + geom.c0;
        let dobj = -h.dot(&y) / tau + geom.c0;
        // complementarity gap and objective-difference gap; the latter is the
        // tighter certificate once both residuals are small
        let gap = (s.dot(&y) / (tau * tau)).min((pobj - dobj).abs());
        // backward-stable residual measures: relative to the magnitudes of
        // the terms entering each equation (data and iterate scale)
        let pres = norm2(&r_p) / (tau * h_norm).max(g_inf * norm2(&x)).max(norm2(&s));
        let dres = norm2(&r_d) / (tau * c_norm).max(g_inf * norm2(&y));
        let relgap = gap / pobj.abs().max(dobj.abs()).max(1.0);
        let score = pres.max(dres).max(relgap.min(gap));
        if score < 0.9 * best_score || mu < 0.9 * best_mu {
            stall = 0;
        } else {
            stall += 1;
        }
        best_mu = best_mu.min(mu);
        if score < best_score {
            best_score = score;
            best_acc = SolveAccuracy {
                rel_gap: relgap,
                primal_residual: pres,
                dual_residual: dres,
                entropy_order: None,
                escalation_delta: None,
            };
            best_state = Some((x.clone(), y.clone(), tau, pobj, dobj));
        }
        if std::env::var_os("REGENT_IPM_TRACE").is_some() {
            eprintln!(
                "it {iter:3} mu {mu:9.2e} tau {tau:8.2e} kap {kappa:8.2e} pres {pres:8.2e} \
                 dres {dres:8.2e} gap {gap:9.2e} pobj {pobj:12.5e} |y| {:8.2e} |s| {:8.2e}",
                norm2(&y),
                norm2(&s)
            );
        }
        if pres <= tol && dres <= tol && (gap <= tol || relgap <= tol) {
            return Ok(GeomSolution {
                status: SolveStatus::Optimal,
                z: (&x / tau).to_vec(),
                primal_objective: pobj,
                dual_objective: dobj,
                accuracy: best_acc,
                iterations: iter,
            });
        }
        // infeasibility certificates
        let hty = h.dot(&y);
        if hty < 0.0 {
            let res = norm2(&gty) / (-hty);
            if res <= tol * 1e-2 * c_norm {
                return Ok(certificate(SolveStatus::Infeasible, geom, iter, &best_acc));
            }
        }
        let ctx = c.dot(&x);
        if ctx < 0.0 {
            let res = norm2(&(&s - &gx)) / (-ctx);
            if res <= tol * 1e-2 * h_norm {
                return Ok(certificate(SolveStatus::Unbounded, geom, iter, &best_acc));
            }
        }

        // NT scalings
        let nt = blocks
            .iter()
            .map(|b| nt_scaling(b, mode, &s, &y))
            .collect::<Result<Vec<_>>>()?;

        // Schur matrix M = Gᵀ H⁻¹ G (+ regularization), factorized once
        let m = build_schur(geom, &blocks, &nt, n)?;
        let chol = factor(m)?;

        // helper closures -----------------------------------------------------
        let h_inv_apply = |v: &Array1<f64>| -> Array1<f64> {
            let mut out = Array1::<f64>::zeros(geom.rows);
            for (b, ntb) in blocks.iter().zip(&nt) {
                apply_h_inv(b, ntb, mode, v, &mut out);
            }
            out
        };

        // τ-elimination solve, reused by both directions:
        // M Δx₁ = −(GᵀH⁻¹h + c);  Δy₁ = H⁻¹(−GΔx₁ − h)
        let hinv_h = h_inv_apply(&h);
        let rhs1 = -(&g.t().dot(&hinv_h) + &c);
        let dx1 = chol_solve(&chol, &rhs1);
        let dz1 = h_inv_apply(&-(&g.dot(&dx1) + &h));

        // Directions are assembled in the scaled space, where the centering
        // and dual terms are balanced (all of size ~λ); the unscaled Δs is
        // produced by a single final congruence. Forming Δs as ds_c − H Δy in
        // unscaled coordinates cancels catastrophically near the boundary.
        let step = |sigma: f64,
                    corr: Option<(&[ScaledDir], &[ScaledDir], f64, f64)>|
         -> StepDirs {
            // scaled centering matrices per block
            let d_mats: Vec<ScaledDir> = blocks
                .iter()
                .zip(&nt)
                .enumerate()
                .map(|(i, (b, ntb))| {
                    central_scaled(
                        b,
                        ntb,
                        sigma * mu,
                        corr.map(|(dsa, dya, _, _)| (&dsa[i], &dya[i])),
                    )
                })
                .collect();
            // ds_c = r d r† packed
            let mut ds_c = Array1::<f64>::zeros(geom.rows);
            for ((b, ntb), d) in blocks.iter().zip(&nt).zip(&d_mats) {
                unscale_into(b, ntb, mode, d, &mut ds_c);
            }
            let d_tk = sigma * mu
                - tau * kappa
                - corr.map_or(0.0, |(_, _, dta, dka)| dta * dka);

            // Newton system (residuals shrink by 1−σ):
            //   GᵀΔy − cΔτ           = −(1−σ) r_d
            //   GΔx + hΔτ − Δs       = −(1−σ) r_p
            //   −cᵀΔx − hᵀΔy − Δκ   = −(1−σ) r_g
            //   Δs + HΔy             = ds_c
            //   κΔτ + τΔκ           = d_tk
            let facr = 1.0 - sigma;
            let u2 = &ds_c - &r_p.mapv(|v| facr * v);
            let rhs0 = &r_d.mapv(|v| facr * v) + &g.t().dot(&h_inv_apply(&u2));
            let dx0 = chol_solve(&chol, &rhs0);
            let dz0 = h_inv_apply(&(&u2 - &g.dot(&dx0)));

            // Near feasibility the scalar τ-equation is dominated by operator
            // noise and only drags τ down a non-ray direction (inflating the
            // reported gap); freeze τ and take pure centering steps instead.
            let dtau = if score < 1e-2 {
                0.0
            } else {
                let den = -c.dot(&dx1) - h.dot(&dz1) + kappa / tau;
                let num = -facr * r_g + c.dot(&dx0) + h.dot(&dz0) + d_tk / tau;
                num / den
            };

            let dx = &dx0 + &dx1.mapv(|v| dtau * v);
            let dy = &dz0 + &dz1.mapv(|v| dtau * v);
            // scaled dual direction and Δs̃ = d − Δỹ; Δs = r Δs̃ r†
            let mut ds = Array1::<f64>::zeros(geom.rows);
            let mut ds_tilde = Vec::with_capacity(blocks.len());
            let mut dy_tilde = Vec::with_capacity(blocks.len());
            for ((b, ntb), d) in blocks.iter().zip(&nt).zip(&d_mats) {
                let dyt = scale_dual(b, ntb, mode, &dy);
                let dst = scaled_sub(d, &dyt);
                unscale_into(b, ntb, mode, &dst, &mut ds);
                ds_tilde.push(dst);
                dy_tilde.push(dyt);
            }
            let dkappa = (d_tk - kappa * dtau) / tau;

            StepDirs {
                dx,
                dy,
                ds,
                dtau,
                dkappa,
                ds_tilde,
                dy_tilde,
            }
        };

        // affine (predictor) direction
        let aff = step(0.0, None);
        let alpha_a = max_step(&blocks, &nt, &aff, tau, kappa).min(1.0);
        let sigma = {
            // Mehrotra gap ratio
            let sy: f64 = s.dot(&y) + tau * kappa;
            let s_a = &s + &aff.ds.mapv(|v| alpha_a * v);
            let y_a = &y + &aff.dy.mapv(|v| alpha_a * v);
            let sy_a = s_a.dot(&y_a) + (tau + alpha_a * aff.dtau) * (kappa + alpha_a * aff.dkappa);
            let ratio = (sy_a / sy).clamp(0.0, 1.0);
            (ratio * ratio * ratio).clamp(1e-10, 0.999)
        };

        // combined (corrector) direction
        let mut comb = step(
            sigma,
            Some((&aff.ds_tilde, &aff.dy_tilde, aff.dtau, aff.dkappa)),
        );
        let mut alpha = max_step(&blocks, &nt, &comb, tau, kappa);
        if alpha < 0.1 {
            // corrector overshoot near a degenerate face: fall back to a
            // heavily centered step without the second-order term
            comb = step(sigma.max(0.8), None);
            alpha = max_step(&blocks, &nt, &comb, tau, kappa);
        }
        let alpha = (STEP_FRAC * alpha).min(1.0);

        if std::env::var_os("REGENT_IPM_TRACE").is_some() {
            let lam_min = nt
                .iter()
                .flat_map(|n| n.lambda.iter().copied())
                .fold(f64::INFINITY, f64::min);
            eprintln!(
                "    alpha {alpha:9.3e} alpha_a {alpha_a:9.3e} sigma {sigma:9.3e} lam_min {lam_min:9.3e}"
            );
        }
        x = &x + &comb.dx.mapv(|v| alpha * v);
        y = &y + &comb.dy.mapv(|v| alpha * v);
        s = &s + &comb.ds.mapv(|v| alpha * v);
        tau += alpha * comb.dtau;
        kappa += alpha * comb.dkappa;

        // Residual tracking: under an exact Newton step both feasibility
        // residuals contract to θ·r with θ = 1 − α(1−σ). Re-enforcing the
        // primal equation removes the roundoff the congruence chain injects
        // into s near the boundary; the dual equation is repaired by a
        // cone-safeguarded projection through the factored Schur system
        // (the operator noise then enters only at second order).
        let theta = 1.0 - alpha * (1.0 - sigma);
        s = &(&h * tau) + &g.dot(&x) - &r_p.mapv(|v| theta * v);
        for round in 0..2 {
            let err = &r_d.mapv(|v| theta * v) - &(&g.t().dot(&y) - &c.mapv(|v| v * tau));
            let dy_fix = h_inv_apply(&g.dot(&chol_solve(&chol, &err)));
            let beta = dual_fix_step(&blocks, mode, &y, &dy_fix);
            if std::env::var_os("REGENT_IPM_TRACE").is_some() {
                eprintln!(
                    "    fix{round}: |err| {:.2e} beta {beta:.3e} |dy| {:.2e}",
                    norm2(&err),
                    norm2(&dy_fix)
                );
            }
            if beta > 1e-8 {
                y = &y + &dy_fix.mapv(|v| beta * v);
            } else {
                break;
            }
        }

        if !(tau.is_finite() && kappa.is_finite()) || tau <= 0.0 {
            return Err(Error::SolverFailure("homogeneous variable collapsed".into()));
        }
        // progress floor reached: further iterations only churn roundoff
        if stall >= 8 {
            break;
        }
    }

    let (bx, _by, btau, bpobj, bdobj) = best_state.unwrap_or((x, y, tau, 0.0, 0.0));
    Ok(GeomSolution {
        status: SolveStatus::MaxIterations,
        z: (&bx / btau).to_vec(),
        primal_objective: bpobj,
        dual_objective: bdobj,
        accuracy: best_acc,
        iterations,
    })
}

fn certificate(
    status: SolveStatus,
    geom: &Geometry,
    iter: usize,
    acc: &SolveAccuracy,
) -> GeomSolution {
    GeomSolution {
        status,
        z: vec![0.0; geom.n_z],
        primal_objective: 0.0,
        dual_objective: 0.0,
        accuracy: acc.clone(),
        iterations: iter,
    }
}

fn norm2(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn collect_blocks(geom: &Geometry) -> Vec<Block> {
    let mode = geom.mode;
    geom.blocks
        .iter()
        .map(|&(kind, offset)| {
            let dim = match kind {
                GBlockKind::Psd(nb) => mode.herm_dim(nb),
                GBlockKind::Nonneg(k) => k,
            };
            // identity-selector detection: each row has exactly one entry, 1.0,
            // in a distinct column
            let mut selector = Some(Vec::with_capacity(dim));
            'scan: for r in offset..offset + dim {
                let row = geom.g.row(r);
                let mut found = None;
                for (j, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        if v != 1.0 || found.is_some() {
                            selector = None;
                            break 'scan;
                        }
                        found = Some(j);
                    }
                }
                match (found, &mut selector) {
                    (Some(j), Some(cols)) => cols.push(j),
                    _ => {
                        selector = None;
                        break 'scan;
                    }
                }
            }
            if let Some(cols) = &selector {
                let mut sorted = cols.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != dim {
                    selector = None;
                }
            }
            Block {
                kind,
                offset,
                dim,
                selector,
            }
        })
        .collect()
}

fn identity_point(blocks: &[Block], rows: usize, mode: Mode) -> Array1<f64> {
    let mut s = Array1::<f64>::zeros(rows);
    for b in blocks {
        match b.kind {
            GBlockKind::Psd(nb) => {
                let id = coords::packed_identity(mode, nb);
                for (k, v) in id.into_iter().enumerate() {
                    s[b.offset + k] = v;
                }
            }
            GBlockKind::Nonneg(k) => {
                for i in 0..k {
                    s[b.offset + i] = 1.0;
                }
            }
        }
    }
    s
}

/// NT scaling for one block: factors r, r⁻¹ with `r† y r = r⁻¹ s r⁻† = Λ`.
fn nt_scaling(b: &Block, mode: Mode, s: &Array1<f64>, y: &Array1<f64>) -> Result<NtPsd> {
    match b.kind {
        GBlockKind::Nonneg(k) => {
            // diagonal scaling stored in lambda; r holds sqrt(s/y) elementwise
            let mut lam = Array1::<f64>::zeros(k);
            let mut d = CMat::zeros((k, 1));
            for i in 0..k {
                let si = s[b.offset + i];
                let yi = y[b.offset + i];
                if si <= 0.0 || yi <= 0.0 {
                    return Err(Error::SolverFailure("orthant iterate left the cone".into()));
                }
                lam[i] = (si * yi).sqrt();
                d[(i, 0)] = Complex64::new((si / yi).sqrt(), 0.0);
            }
            Ok(NtPsd {
                r: d.clone(),
                r_inv: d.mapv(|v| Complex64::new(1.0 / v.re, 0.0)),
                lambda: lam,
            })
        }
        GBlockKind::Psd(nb) => {
            // Cholesky/SVD construction: s = L_s L_s†, y = L_y L_y†,
            // L_y† L_s = U Σ V†, then r = L_s V Σ^{-1/2}, r⁻¹ = Σ^{1/2} V† L_s⁻¹.
            // Conditioning stays at the square roots of the block conditions.
            let s_mat = coords::unpack(mode, nb, block_slice(s, b));
            let y_mat = coords::unpack(mode, nb, block_slice(y, b));
            let l_s = chol_lower_cmat(&s_mat)?;
            let l_y = chol_lower_cmat(&y_mat)?;
            let w = conj_transpose(&l_y).dot(&l_s);
            let (u, sv, vt) = complex_svd(&w)?;
            let _ = u;
            let v = conj_transpose(&vt);
            let lam: Array1<f64> = sv.mapv(|x| x.max(1e-150));
            let mut vs = v.clone();
            for (j, l) in lam.iter().enumerate() {
                let f = 1.0 / l.sqrt();
                vs.column_mut(j).mapv_inplace(|z| z * f);
            }
            let r = l_s.dot(&vs);
            let ls_inv = tri_inv_lower(&l_s);
            let mut vd = vt.clone();
            for (i, l) in lam.iter().enumerate() {
                let f = l.sqrt();
                vd.row_mut(i).mapv_inplace(|z| z * f);
            }
            let r_inv = vd.dot(&ls_inv);
            Ok(NtPsd {
                r,
                r_inv,
                lambda: lam,
            })
        }
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
fn chol_lower_cmat(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    let mut l = CMat::zeros((n, n));
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::SolverFailure(
                "cone iterate lost positive definiteness".into(),
            ));
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
fn tri_inv_lower(l: &CMat) -> CMat {
    let n = l.nrows();
    let mut inv = CMat::zeros((n, n));
    for col in 0..n {
        // solve L x = e_col
        for i in col..n {
            let mut v = if i == col {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for k in col..i {
                v -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = v / l[(i, i)];
        }
    }
    inv
}

/// Complex SVD `A = U Σ V†` through LAPACK; the returned triple follows the
/// standard convention (pinned by `complex_svd_convention`).
fn complex_svd(a: &CMat) -> Result<(CMat, Array1<f64>, CMat)> {
    use ndarray_linalg::SVD;
    let (u, s, vt) = a
        .svd(true, true)
        .map_err(|e| Error::SolverFailure(format!("svd failed: {e}")))?;
    Ok((u.expect("u"), s, vt.expect("vt")))
}

fn block_slice<'a>(v: &'a Array1<f64>, b: &Block) -> &'a [f64] {
    &v.as_slice().unwrap()[b.offset..b.offset + b.dim]
}

fn scaled_rebuild(q: &CMat, vals: &Array1<f64>, f: impl Fn(f64) -> f64) -> CMat {
    let mut qs = q.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        qs.column_mut(j).mapv_inplace(|z| z * fv);
    }
    qs.dot(&conj_transpose(q))
}

/// out[block] += H(v) = R v R with R = r r†.
fn apply_h(b: &Block, nt: &NtPsd, mode: Mode, v: &Array1<f64>, out: &mut Array1<f64>) {
    match b.kind {
        GBlockKind::Nonneg(k) => {
            for i in 0..k {
                let d = nt.r[(i, 0)].re;
                out[b.offset + i] += d * d * v[b.offset + i];
            }
        }
        GBlockKind::Psd(nb) => {
            let vm = coords::unpack(mode, nb, block_slice(v, b));
            // H(v) = r (r† v r) r†
            let inner = conj_transpose(&nt.r).dot(&vm).dot(&nt.r);
            let res = nt.r.dot(&inner).dot(&conj_transpose(&nt.r));
            let packed = coords::pack(mode, &res);
            for (k, val) in packed.into_iter().enumerate() {
                out[b.offset + k] += val;
            }
        }
    }
}

/// out[block] += H⁻¹(v) = R⁻¹ v R⁻¹.
fn apply_h_inv(b: &Block, nt: &NtPsd, mode: Mode, v: &Array1<f64>, out: &mut Array1<f64>) {
    match b.kind {
        GBlockKind::Nonneg(k) => {
            for i in 0..k {
                let d = nt.r[(i, 0)].re;
                out[b.offset + i] += v[b.offset + i] / (d * d);
            }
        }
        GBlockKind::Psd(nb) => {
            let vm = coords::unpack(mode, nb, block_slice(v, b));
            let inner = nt.r_inv.dot(&vm).dot(&conj_transpose(&nt.r_inv));
            let res = conj_transpose(&nt.r_inv).dot(&inner).dot(&nt.r_inv);
            let packed = coords::pack(mode, &res);
            for (k, val) in packed.into_iter().enumerate() {
                out[b.offset + k] += val;
            }
        }
    }
}

/// A direction expressed in the scaled space of one block.
enum ScaledDir {
    Scalars(Vec<f64>),
    Mat(CMat),
}

struct StepDirs {
    dx: Array1<f64>,
    dy: Array1<f64>,
    ds: Array1<f64>,
    dtau: f64,
    dkappa: f64,
    ds_tilde: Vec<ScaledDir>,
    dy_tilde: Vec<ScaledDir>,
}

/// Scaled centering direction `Linv(σμ I − Λ² − sym(Δs̃ Δỹ))` of one block.
fn central_scaled(
    b: &Block,
    nt: &NtPsd,
    sigma_mu: f64,
    corr: Option<(&ScaledDir, &ScaledDir)>,
) -> ScaledDir {
    match b.kind {
        GBlockKind::Nonneg(k) => {
            let mut out = vec![0.0; k];
            for i in 0..k {
                let lam = nt.lambda[i];
                let mut d = sigma_mu - lam * lam;
                if let Some((ScaledDir::Scalars(dsa), ScaledDir::Scalars(dya))) = corr {
                    d -= dsa[i] * dya[i];
                }
                out[i] = d / lam;
            }
            ScaledDir::Scalars(out)
        }
        GBlockKind::Psd(nb) => {
            let mut d = CMat::zeros((nb, nb));
            for i in 0..nb {
                d[(i, i)] = Complex64::new(sigma_mu - nt.lambda[i] * nt.lambda[i], 0.0);
            }
            if let Some((ScaledDir::Mat(dsa), ScaledDir::Mat(dya))) = corr {
                let prod = dsa.dot(dya);
                let sym = (&prod + &conj_transpose(&prod)).mapv(|v| v * 0.5);
                d = &d - &sym;
            }
            // Linv: entrywise 2/(λ_i+λ_j)
            for i in 0..nb {
                for j in 0..nb {
                    let denom = nt.lambda[i] + nt.lambda[j];
                    d[(i, j)] *= 2.0 / denom;
                }
            }
            ScaledDir::Mat(d)
        }
    }
}

/// Scale a packed dual direction: `Δỹ = r† Δy r` (scalars: `w·Δy`).
fn scale_dual(b: &Block, nt: &NtPsd, mode: Mode, dy: &Array1<f64>) -> ScaledDir {
    match b.kind {
        GBlockKind::Nonneg(k) => {
            let mut out = vec![0.0; k];
            for i in 0..k {
                out[i] = dy[b.offset + i] * nt.r[(i, 0)].re;
            }
            ScaledDir::Scalars(out)
        }
        GBlockKind::Psd(nb) => {
            let dym = coords::unpack(mode, nb, block_slice(dy, b));
            ScaledDir::Mat(conj_transpose(&nt.r).dot(&dym).dot(&nt.r))
        }
    }
}

fn scaled_sub(a: &ScaledDir, b: &ScaledDir) -> ScaledDir {
    match (a, b) {
        (ScaledDir::Scalars(x), ScaledDir::Scalars(y)) => {
            ScaledDir::Scalars(x.iter().zip(y).map(|(u, v)| u - v).collect())
        }
        (ScaledDir::Mat(x), ScaledDir::Mat(y)) => ScaledDir::Mat(x - y),
        _ => unreachable!("block kind mismatch"),
    }
}

/// out[block] += unscaled direction `r d r†` (scalars: `w·d`).
fn unscale_into(b: &Block, nt: &NtPsd, mode: Mode, d: &ScaledDir, out: &mut Array1<f64>) {
    match (b.kind, d) {
        (GBlockKind::Nonneg(k), ScaledDir::Scalars(v)) => {
            for i in 0..k {
                out[b.offset + i] += nt.r[(i, 0)].re * v[i];
            }
        }
        (GBlockKind::Psd(_), ScaledDir::Mat(m)) => {
            let res = nt.r.dot(m).dot(&conj_transpose(&nt.r));
            let packed = coords::pack(mode, &res);
            for (k, val) in packed.into_iter().enumerate() {
                out[b.offset + k] += val;
            }
        }
        _ => unreachable!("block kind mismatch"),
    }
}

/// Largest step keeping `Λ + α Δs̃` and `Λ + α Δỹ` (and τ, κ) in the cones.
fn max_step(blocks: &[Block], nt: &[NtPsd], dirs: &StepDirs, tau: f64, kappa: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    if dirs.dtau < 0.0 {
        alpha = alpha.min(-tau / dirs.dtau);
    }
    if dirs.dkappa < 0.0 {
        alpha = alpha.min(-kappa / dirs.dkappa);
    }
    for ((b, ntb), (dst, dyt)) in blocks
        .iter()
        .zip(nt)
        .zip(dirs.ds_tilde.iter().zip(&dirs.dy_tilde))
    {
        match (b.kind, dst, dyt) {
            (GBlockKind::Nonneg(k), ScaledDir::Scalars(ds), ScaledDir::Scalars(dy)) => {
                for i in 0..k {
                    let lam = ntb.lambda[i];
                    if ds[i] < 0.0 {
                        alpha = alpha.min(-lam / ds[i]);
                    }
                    if dy[i] < 0.0 {
                        alpha = alpha.min(-lam / dy[i]);
                    }
                }
            }
            (GBlockKind::Psd(_), ScaledDir::Mat(ds), ScaledDir::Mat(dy)) => {
                let lam_msqrt = ntb.lambda.mapv(|v| 1.0 / v.sqrt());
                alpha = alpha.min(step_to_boundary(&scale_sym(ds, &lam_msqrt)));
                alpha = alpha.min(step_to_boundary(&scale_sym(dy, &lam_msqrt)));
            }
            _ => unreachable!("block kind mismatch"),
        }
    }
    alpha
}

/// Safeguarded step for the dual-equation repair: the largest β ≤ 1 keeping
/// `y + β δy` safely inside the cone (margin 0.9 to the boundary).
fn dual_fix_step(blocks: &[Block], mode: Mode, y: &Array1<f64>, dy: &Array1<f64>) -> f64 {
    let mut beta: f64 = 1.0;
    for b in blocks {
        match b.kind {
            GBlockKind::Nonneg(k) => {
                for i in 0..k {
                    let yi = y[b.offset + i];
                    let di = dy[b.offset + i];
                    if di < 0.0 {
                        beta = beta.min(-0.9 * yi / di);
                    }
                }
            }
            GBlockKind::Psd(nb) => {
                let ym = coords::unpack(mode, nb, block_slice(y, b));
                let dm = coords::unpack(mode, nb, block_slice(dy, b));
                let (vals, q) = eigh_cmat(&ym);
                let floor = vals
                    .iter()
                    .copied()
                    .fold(0.0f64, f64::max)
                    .max(1e-300)
                    * 1e-16;
                let mut qi = q.clone();
                for (j, &v) in vals.iter().enumerate() {
                    let f = 1.0 / v.max(floor).sqrt();
                    qi.column_mut(j).mapv_inplace(|z| z * f);
                }
                // y^{-1/2} δy y^{-1/2} with y^{-1/2} = Q Λ^{-1/2} Q†
                let half = qi.dot(&conj_transpose(&q));
                let m = half.dot(&dm).dot(&conj_transpose(&half));
                let (ev, _) = eigh_cmat(&m);
                let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
                if min < 0.0 {
                    beta = beta.min(-0.9 / min);
                }
            }
        }
    }
    beta.max(0.0)
}

/// D M D for diagonal D.
fn scale_sym(m: &CMat, d: &Array1<f64>) -> CMat {
    let n = m.nrows();
    CMat::from_shape_fn((n, n), |(i, j)| m[(i, j)] * d[i] * d[j])
}

/// Largest α with I + α M ⪰ 0.
fn step_to_boundary(m: &CMat) -> f64 {
    let (vals, _) = eigh_cmat(m);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

/// Schur complement `M = Gᵀ H⁻¹ G` over the z variables.
fn build_schur(
    geom: &Geometry,
    blocks: &[Block],
    nt: &[NtPsd],
    n: usize,
) -> Result<Array2<f64>> {
    let mode = geom.mode;
    let mut m = Array2::<f64>::zeros((n, n));
    for (b, ntb) in blocks.iter().zip(nt) {
        match b.kind {
            GBlockKind::Nonneg(k) => {
                let gb = geom.g.slice(ndarray::s![b.offset..b.offset + k, ..]);
                // rows scaled by 1/d², then GᵀDG
                let mut scaled = gb.to_owned();
                for i in 0..k {
                    let d = ntb.r[(i, 0)].re;
                    let w = 1.0 / (d * d);
                    scaled.row_mut(i).mapv_inplace(|v| v * w);
                }
                ndarray::linalg::general_mat_mul(1.0, &gb.t(), &scaled, 1.0, &mut m);
            }
            GBlockKind::Psd(nb) => {
                // K' = coordinate matrix of congruence by R⁻¹ (Hermitian)
                let r_inv_h = conj_transpose(&ntb.r_inv).dot(&ntb.r_inv); // R⁻¹
                let kp = congruence_matrix(mode, nb, &r_inv_h);
                if let Some(cols) = &b.selector {
                    // M[cols, cols] += K'
                    for (a, &ca) in cols.iter().enumerate() {
                        for (bb, &cb) in cols.iter().enumerate() {
                            m[(ca, cb)] += kp[(a, bb)];
                        }
                    }
                } else {
                    let gb = geom.g.slice(ndarray::s![b.offset..b.offset + b.dim, ..]);
                    let t = kp.dot(&gb);
                    ndarray::linalg::general_mat_mul(1.0, &gb.t(), &t, 1.0, &mut m);
                }
            }
        }
    }
    Ok(m)
}

/// Coordinate-space matrix of `u ↦ A u A` for Hermitian A, via outer products
/// of A's columns.
fn congruence_matrix(mode: Mode, n: usize, a: &CMat) -> Array2<f64> {
    let dim = mode.herm_dim(n);
    let mut k = Array2::<f64>::zeros((dim, dim));
    let cols: Vec<Array1<Complex64>> = (0..n).map(|j| a.column(j).to_owned()).collect();
    let mut img = CMat::zeros((n, n));
    let mut write = |col: usize, img: &CMat, k: &mut Array2<f64>| {
        let packed = coords::pack(mode, img);
        for (r, v) in packed.into_iter().enumerate() {
            k[(r, col)] = v;
        }
    };
    for i in 0..n {
        // diagonal basis element: A e_i e_iᵀ A = a_i a_i†
        outer_into(&cols[i], &cols[i], Complex64::new(1.0, 0.0), &mut img);
        write(coords::diag_coord(n, i), &img, &mut k);
    }
    let inv_sqrt2 = 1.0 / coords::SQRT2;
    for i in 0..n {
        for j in (i + 1)..n {
            // real off-diagonal: (a_i a_j† + a_j a_i†)/√2
            outer_pair(
                &cols[i],
                &cols[j],
                Complex64::new(inv_sqrt2, 0.0),
                &mut img,
            );
            write(coords::re_coord(n, i, j), &img, &mut k);
            if mode == Mode::Complex {
                // imaginary off-diagonal: (i a_i a_j† − i a_j a_i†)/√2
                outer_pair(
                    &cols[i],
                    &cols[j],
                    Complex64::new(0.0, inv_sqrt2),
                    &mut img,
                );
                write(coords::im_coord(n, i, j), &img, &mut k);
            }
        }
    }
    k
}

/// img = c·u v†
fn outer_into(u: &Array1<Complex64>, v: &Array1<Complex64>, c: Complex64, img: &mut CMat) {
    let n = u.len();
    for r in 0..n {
        for s in 0..n {
            img[(r, s)] = c * u[r] * v[s].conj();
        }
    }
}

/// img = c·u v† + conj(c)·v u†  (Hermitian)
fn outer_pair(u: &Array1<Complex64>, v: &Array1<Complex64>, c: Complex64, img: &mut CMat) {
    let n = u.len();
    for r in 0..n {
        for s in 0..n {
            let t = c * u[r] * v[s].conj();
            let t2 = c.conj() * v[r] * u[s].conj();
            img[(r, s)] = t + t2;
        }
    }
}

struct CholFactor {
    l: Array2<f64>,
    m: Array2<f64>,
}

fn factor(m: Array2<f64>) -> Result<CholFactor> {
    let n = m.nrows();
    let mean_diag: f64 = (0..n).map(|i| m[(i, i)].abs()).sum::<f64>() / n as f64;
    let mut reg = 1e-13 * mean_diag.max(1e-300);
    for _ in 0..8 {
        let mut attempt = m.clone();
        for i in 0..n {
            attempt[(i, i)] += reg;
        }
        if let Ok(l) = attempt.cholesky(UPLO::Lower) {
            return Ok(CholFactor { l, m });
        }
        reg *= 100.0;
    }
    Err(Error::SolverFailure(
        "Schur complement not positive definite".into(),
    ))
}

fn tri_solve(l: &Array2<f64>, rhs: &Array1<f64>) -> Array1<f64> {
    let y = l
        .solve_triangular(UPLO::Lower, Diag::NonUnit, rhs)
        .expect("forward substitution");
    l.t()
        .to_owned()
        .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
        .expect("backward substitution")
}

fn chol_solve(f: &CholFactor, rhs: &Array1<f64>) -> Array1<f64> {
    let mut x = tri_solve(&f.l, rhs);
    for _ in 0..2 {
        let res = rhs - &f.m.dot(&x);
        x = &x + &tri_solve(&f.l, &res);
    }
    x
}
