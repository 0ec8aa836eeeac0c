//! Geometric form of a presolved program and the entropy-cone lowering.
//!
//! After presolve, every standard-form coordinate is an affine expression
//! over the surviving variables `z`. The geometric program lists affine PSD
//! and nonnegative constraints over `z`; entropy cones are expanded here into
//! PSD constraints through the operator-log approximation
//! `ln x ≈ 2^p Σ_j w_j f_{t_j}(x^{1/2^p})`, `f_t(x) = (x-1)/(t(x-1)+1)`,
//! with Gauss-Legendre nodes `t_j`: a chain of `p` matrix-geometric-mean
//! blocks followed by one 2×2 Schur block per quadrature node.

use ndarray::prelude::*;

use super::coords::{self, Mode};
use super::gauss;
use super::presolve::Presolved;
use super::sparse::SparseVec;
use super::{ConeSpec, ConicProgram, SolveStatus};
use crate::linalg::eigh_cmat;
use crate::{Error, Result, LN_2};

/// Largest side for the general (vectorized) QRE lowering; the lifted block
/// has side n², so this caps it at 400.
const QRE_GENERAL_LIMIT: usize = 20;

/// One affine Hermitian or scalar expression: sparse z terms plus constant.
#[derive(Debug, Clone, Default)]
pub struct Expr {
    pub terms: SparseVec,
    pub constant: f64,
}

impl Expr {
    fn var(j: usize) -> Self {
        Expr {
            terms: SparseVec::unit(j),
            constant: 0.0,
        }
    }
    fn constant(c: f64) -> Self {
        Expr {
            terms: SparseVec::new(),
            constant: c,
        }
    }
    fn axpy(&mut self, c: f64, other: &Expr) {
        self.terms.axpy(c, &other.terms);
        self.constant += c * other.constant;
    }
    fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.terms.scale(c);
        out.constant *= c;
        out
    }
    fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Cone block of the geometric program (a row range of G).
#[derive(Debug, Clone, Copy)]
pub enum GBlockKind {
    Psd(usize),
    Nonneg(usize),
}

#[derive(Debug)]
pub struct Geometry {
    pub mode: Mode,
    pub n_z: usize,
    /// Cone blocks with their row ranges.
    pub blocks: Vec<(GBlockKind, usize)>, // (kind, row offset)
    pub rows: usize,
    /// Dense constraint matrix: s = h + G z ∈ K, row-major (rows × n_z).
    pub g: Array2<f64>,
    pub h: Vec<f64>,
    /// Minimize cᵀz + c0.
    pub c: Vec<f64>,
    pub c0: f64,
    /// Early verdict from presolve (infeasible / unbounded).
    pub pre_status: Option<SolveStatus>,
    /// Builder variable -> geometry column (None for variables pinned to 0).
    pub col_of_var: Vec<Option<usize>>,
}

impl Geometry {
    /// Expand a geometry solution vector back to builder-variable indexing.
    pub fn expand(&self, z: &[f64]) -> Vec<f64> {
        self.col_of_var
            .iter()
            .map(|c| c.map_or(0.0, |j| z[j]))
            .collect()
    }
}

struct Builder {
    mode: Mode,
    n_z: usize,
    cones: Vec<(GBlockKind, Vec<Expr>)>,
    scalar_rows: Vec<Expr>,
}

impl Builder {
    fn fresh_herm(&mut self, n: usize) -> Vec<Expr> {
        let dim = self.mode.herm_dim(n);
        let out = (self.n_z..self.n_z + dim).map(Expr::var).collect();
        self.n_z += dim;
        out
    }

    fn push_psd(&mut self, n: usize, rows: Vec<Expr>) {
        debug_assert_eq!(rows.len(), self.mode.herm_dim(n));
        self.cones.push((GBlockKind::Psd(n), rows));
    }

    fn push_scalar(&mut self, e: Expr) {
        self.scalar_rows.push(e);
    }
}

/// Packed-coordinate exprs of the constant identity.
fn identity_exprs(mode: Mode, n: usize) -> Vec<Expr> {
    coords::packed_identity(mode, n)
        .into_iter()
        .map(Expr::constant)
        .collect()
}

/// Hermitian entry (i, j) of a packed expression block, as (real, imag) exprs.
/// Imag is None in real mode or on the diagonal.
fn entry_exprs(mode: Mode, n: usize, x: &[Expr], i: usize, j: usize) -> (Expr, Option<Expr>, bool) {
    // returns (re, im, conjugated): value = (re + i*im)/√2 unless diagonal
    if i == j {
        return (x[coords::diag_coord(n, i)].clone(), None, false);
    }
    let (a, b, conj) = if i < j { (i, j, false) } else { (j, i, true) };
    let re = x[coords::re_coord(n, a, b)].clone();
    let im = match mode {
        Mode::Complex => Some(x[coords::im_coord(n, a, b)].clone()),
        Mode::Real => None,
    };
    (re, im, conj)
}

/// Build the packed exprs of the 2n×2n Hermitian block
/// `[[TL, TR], [TR, BR]]` where TL, TR, BR are packed n-blocks and TR is
/// itself Hermitian.
fn two_by_two_block(
    mode: Mode,
    n: usize,
    tl: &[Expr],
    tr: &[Expr],
    br: &[Expr],
) -> Vec<Expr> {
    let big = 2 * n;
    let mut rows = vec![Expr::default(); mode.herm_dim(big)];
    // diagonal
    for i in 0..n {
        rows[coords::diag_coord(big, i)] = tl[coords::diag_coord(n, i)].clone();
        rows[coords::diag_coord(big, n + i)] = br[coords::diag_coord(n, i)].clone();
    }
    // within-quadrant off-diagonals copy coordinate-for-coordinate
    for i in 0..n {
        for j in (i + 1)..n {
            rows[coords::re_coord(big, i, j)] = tl[coords::re_coord(n, i, j)].clone();
            rows[coords::re_coord(big, n + i, n + j)] = br[coords::re_coord(n, i, j)].clone();
            if mode == Mode::Complex {
                rows[coords::im_coord(big, i, j)] = tl[coords::im_coord(n, i, j)].clone();
                rows[coords::im_coord(big, n + i, n + j)] = br[coords::im_coord(n, i, j)].clone();
            }
        }
    }
    // cross quadrant: big entry (i, n+k) = TR_{i,k}
    for i in 0..n {
        for k in 0..n {
            let (r, c) = (i, n + k);
            let (re, im, conj) = entry_exprs(mode, n, tr, i, k);
            if i == k {
                // diagonal of TR: entry real = TR_ii, big coords get √2·value
                rows[coords::re_coord(big, r, c)] = re.scaled(coords::SQRT2);
                continue;
            }
            let sign = if conj { -1.0 } else { 1.0 };
            rows[coords::re_coord(big, r, c)] = re;
            if mode == Mode::Complex {
                rows[coords::im_coord(big, r, c)] = im.unwrap().scaled(sign);
            }
        }
    }
    rows
}

/// Sum of packed blocks with coefficients.
fn combine(dim: usize, parts: &[(f64, &[Expr])]) -> Vec<Expr> {
    let mut out = vec![Expr::default(); dim];
    for &(c, block) in parts {
        for (o, b) in out.iter_mut().zip(block) {
            o.axpy(c, b);
        }
    }
    out
}

/// Emit the operator-log chain for the pair (X, Y) at order (p, q), returning
/// the packed exprs of `S = 2^p Σ_j T_j` with the guarantee `S ⪯ P_ln(X, Y)`
/// (natural log) on every feasible point.
fn lower_log_chain(
    b: &mut Builder,
    n: usize,
    x: &[Expr],
    y: &[Expr],
    order: (u32, usize),
) -> Vec<Expr> {
    let (p, q) = order;
    let mode = b.mode;
    let dim = mode.herm_dim(n);
    let (nodes, weights) = gauss::nodes_weights(q);

    // geometric-mean chain: Z_1 ⪯ X # Y, Z_i ⪯ X # Z_{i-1}
    let mut prev: Vec<Expr> = y.to_vec();
    for _ in 0..p {
        let zi = b.fresh_herm(n);
        let block = two_by_two_block(mode, n, x, &zi, &prev);
        b.push_psd(2 * n, block);
        prev = zi;
    }

    // quadrature nodes: T_j ⪯ (w/t)(X − X(tZ + (1−t)X)^{-1}X)
    let mut t_sum = vec![Expr::default(); dim];
    for j in 0..q {
        let t = nodes[j];
        let w = weights[j];
        let tj = b.fresh_herm(n);
        let wt = w / t;
        // TL = (w/t)X − T_j ; TR = sqrt(w/t)·X ; BR = t·Z_p + (1−t)·X
        let tl = combine(dim, &[(wt, x), (-1.0, &tj)]);
        let tr = combine(dim, &[(wt.sqrt(), x)]);
        let br = combine(dim, &[(t, &prev), (1.0 - t, x)]);
        let block = two_by_two_block(mode, n, &tl, &tr, &br);
        b.push_psd(2 * n, block);
        for (acc, term) in t_sum.iter_mut().zip(&tj) {
            acc.axpy(f64::from(1u32 << p), term);
        }
    }
    t_sum
}

/// tr[A ln A] in nats for a constant PSD block, eigenvalues below the support
/// cut contributing zero.
fn trace_a_ln_a(mode: Mode, n: usize, consts: &[f64]) -> Result<f64> {
    let m = coords::unpack(mode, n, consts);
    let (vals, _) = eigh_cmat(&m);
    let max = vals.iter().copied().fold(0.0f64, |a, v| a.max(v.abs()));
    if vals.iter().any(|&v| v < -1e-8 * max.max(1.0)) {
        return Err(Error::InvalidArgument(
            "entropy cone with a non-PSD constant first argument".into(),
        ));
    }
    let cut = 1e-12 * max.max(1e-300);
    Ok(vals
        .iter()
        .filter(|&&v| v > cut)
        .map(|&v| v * v.ln())
        .sum())
}

/// Packed exprs of `A ⊗ I_n` (side n²) from the packed exprs of A (side n).
fn kron_with_identity(mode: Mode, n: usize, a: &[Expr], a_left: bool) -> Vec<Expr> {
    let big = n * n;
    let mut rows = vec![Expr::default(); mode.herm_dim(big)];
    // entry ((i,k),(j,l)) = A_ij δ_kl (a_left) or δ_ij A_kl (right)
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                // a_left: rows (i*n+k, j*n+k) = A_ij
                // a_right: rows (k*n+i, k*n+j) = A_ij
                let (r, c) = if a_left {
                    (i * n + k, j * n + k)
                } else {
                    (k * n + i, k * n + j)
                };
                if r > c {
                    continue; // handled by the (j, i) iteration
                }
                let (re, im, conj) = entry_exprs(mode, n, a, i, j);
                if r == c {
                    rows[coords::diag_coord(big, r)] = re;
                    continue;
                }
                if i == j {
                    // off-diagonal big entry equal to a diagonal entry of A
                    rows[coords::re_coord(big, r, c)] = re.scaled(coords::SQRT2);
                    continue;
                }
                let sign = if conj { -1.0 } else { 1.0 };
                rows[coords::re_coord(big, r, c)] = re;
                if mode == Mode::Complex {
                    rows[coords::im_coord(big, r, c)] = im.unwrap().scaled(sign);
                }
            }
        }
    }
    rows
}

/// Conjugate (entrywise) of a packed Hermitian expression block.
fn conjugate_block(mode: Mode, n: usize, a: &[Expr]) -> Vec<Expr> {
    let mut out = a.to_vec();
    if mode == Mode::Complex {
        for i in 0..n {
            for j in (i + 1)..n {
                let c = coords::im_coord(n, i, j);
                out[c] = out[c].scaled(-1.0);
            }
        }
    }
    out
}

pub fn build_geometry(
    program: &ConicProgram,
    pre: &Presolved,
    order: Option<(u32, usize)>,
) -> Result<Geometry> {
    let mode = pre.mode;
    let offsets = program.offsets();

    if pre.infeasible {
        return Ok(empty_geometry(mode, SolveStatus::Infeasible));
    }

    let mut b = Builder {
        mode,
        n_z: pre.z_coords.len(),
        cones: Vec::new(),
        scalar_rows: Vec::new(),
    };

    // expression of a standard-form coordinate over z
    let coord_expr = |coord: usize| -> Expr {
        let (terms, constant) = pre.coord_terms(coord);
        Expr {
            terms: SparseVec::from_terms(terms),
            constant,
        }
    };
    // packed exprs of a Hermitian component at `base` (standard layout is
    // complex; in real mode only the real prefix coordinates exist)
    let herm_exprs = |base: usize, n: usize| -> Vec<Expr> {
        (0..mode.herm_dim(n)).map(|k| coord_expr(base + k)).collect()
    };

    for (k, blk) in program.blocks.iter().enumerate() {
        let off = offsets[k];
        match *blk {
            ConeSpec::Psd(n) => {
                let rows = herm_exprs(off, n);
                b.push_psd(n, rows);
            }
            ConeSpec::Nonneg(len) => {
                for i in 0..len {
                    let e = coord_expr(off + i);
                    b.push_scalar(e);
                }
            }
            ConeSpec::Free(_) => {}
            ConeSpec::Ore(n) => {
                let order = order.expect("entropy order for ORE block");
                let a = herm_exprs(off, n);
                let y = herm_exprs(off + n * n, n);
                let t = herm_exprs(off + 2 * n * n, n);
                // domain constraints
                if !a.iter().all(Expr::is_constant) {
                    b.push_psd(n, a.clone());
                }
                b.push_psd(n, y.clone());
                // ln2·T + S ⪰ 0 with S ⪯ P_ln(A, B)
                let s = lower_log_chain(&mut b, n, &a, &y, order);
                let dim = mode.herm_dim(n);
                let final_rows = combine(dim, &[(LN_2, &t), (1.0, &s)]);
                b.push_psd(n, final_rows);
            }
            ConeSpec::Qre(n) => {
                let order = order.expect("entropy order for QRE block");
                let a = herm_exprs(off, n);
                let y = herm_exprs(off + n * n, n);
                let t = coord_expr(off + 2 * n * n);
                b.push_psd(n, y.clone());
                if a.iter().all(Expr::is_constant) {
                    // fixed first argument: ln2·t ≥ tr[A ln A] − tr[A S],
                    // S ⪯ P_ln(I, B) ≈ ln B
                    let consts: Vec<f64> = a.iter().map(|e| e.constant).collect();
                    let t_ln = trace_a_ln_a(mode, n, &consts)?;
                    let ident = identity_exprs(mode, n);
                    let s = lower_log_chain(&mut b, n, &ident, &y, order);
                    let mut row = t.scaled(LN_2);
                    row.constant -= t_ln;
                    for (coef, se) in consts.iter().zip(&s) {
                        row.axpy(*coef, se);
                    }
                    b.push_scalar(row);
                } else {
                    if n > QRE_GENERAL_LIMIT {
                        return Err(Error::InvalidArgument(format!(
                            "general QRE lowering limited to side {QRE_GENERAL_LIMIT}, got {n}"
                        )));
                    }
                    b.push_psd(n, a.clone());
                    // D(A‖B)·ln2 = Φ†[P_ln(A⊗I, I⊗conj(B))]Φ negated; Φ = Σ|ii⟩
                    let a_big = kron_with_identity(mode, n, &a, true);
                    let yc = conjugate_block(mode, n, &y);
                    let b_big = kron_with_identity(mode, n, &yc, false);
                    let s = lower_log_chain(&mut b, n * n, &a_big, &b_big, order);
                    // ln2·t + Σ_{i,j} S_{(ii),(jj)} ≥ 0
                    let big = n * n;
                    let mut row = t.scaled(LN_2);
                    for i in 0..n {
                        let d = i * n + i;
                        row.axpy(1.0, &s[coords::diag_coord(big, d)]);
                        for j in (i + 1)..n {
                            let e = j * n + j;
                            // entry (d, e) + (e, d) = 2·Re = √2·re coord
                            row.axpy(coords::SQRT2, &s[coords::re_coord(big, d, e)]);
                        }
                    }
                    b.push_scalar(row);
                }
            }
        }
    }

    // gather scalar rows into a single nonneg block
    let scalar_rows = std::mem::take(&mut b.scalar_rows);
    if !scalar_rows.is_empty() {
        b.cones.push((GBlockKind::Nonneg(scalar_rows.len()), scalar_rows));
    }

    assemble(b, pre)
}

fn empty_geometry(mode: Mode, status: SolveStatus) -> Geometry {
    Geometry {
        mode,
        n_z: 0,
        blocks: Vec::new(),
        rows: 0,
        g: Array2::zeros((0, 0)),
        h: Vec::new(),
        c: Vec::new(),
        c0: 0.0,
        pre_status: Some(status),
        col_of_var: Vec::new(),
    }
}

fn assemble(b: Builder, pre: &Presolved) -> Result<Geometry> {
    let n_var = b.n_z;
    let mut c_full = vec![0.0; n_var];
    c_full[..pre.objective_z.len()].copy_from_slice(&pre.objective_z);

    // column usage scan over the sparse expressions
    let mut used = vec![false; n_var];
    for (_, exprs) in &b.cones {
        for e in exprs {
            for &(j, _) in &e.terms.terms {
                used[j] = true;
            }
        }
    }
    let mut pre_status = None;
    let mut col_of_var = vec![None; n_var];
    let mut n_z = 0usize;
    for j in 0..n_var {
        if used[j] {
            col_of_var[j] = Some(n_z);
            n_z += 1;
        } else if c_full[j] != 0.0 {
            // an unconstrained variable with a cost is an unbounded direction
            pre_status = Some(SolveStatus::Unbounded);
        }
    }

    let rows: usize = b.cones.iter().map(|(_, r)| r.len()).sum();
    let mut g = Array2::zeros((rows, n_z));
    let mut h = vec![0.0; rows];
    let mut blocks = Vec::with_capacity(b.cones.len());
    let mut at = 0usize;
    for (kind, exprs) in &b.cones {
        blocks.push((*kind, at));
        for e in exprs {
            h[at] = e.constant;
            for &(j, v) in &e.terms.terms {
                g[(at, col_of_var[j].expect("used column"))] = v;
            }
            at += 1;
        }
    }
    let mut c = vec![0.0; n_z];
    for j in 0..n_var {
        if let Some(col) = col_of_var[j] {
            c[col] = c_full[j];
        }
    }

    Ok(Geometry {
        mode: b.mode,
        n_z,
        blocks,
        rows,
        g,
        h,
        c,
        c0: pre.objective_shift,
        pre_status,
        col_of_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_hermitian, CMat};

    /// Evaluate packed exprs at a z point.
    fn eval(exprs: &[Expr], z: &[f64]) -> Vec<f64> {
        exprs
            .iter()
            .map(|e| e.constant + e.terms.dot_dense(z))
            .collect()
    }

    #[test]
    fn two_by_two_matches_dense_construction() {
        let n = 3;
        let mode = Mode::Complex;
        let dim = mode.herm_dim(n);
        // X constant, Z variable, Y variable: evaluate at a random z and
        // compare against the dense 2x2 block
        let x0 = random_hermitian(n, 5);
        let x_exprs: Vec<Expr> = coords::pack(mode, x0.matrix())
            .into_iter()
            .map(Expr::constant)
            .collect();
        let z_exprs: Vec<Expr> = (0..dim).map(Expr::var).collect();
        let y_exprs: Vec<Expr> = (dim..2 * dim).map(Expr::var).collect();
        let zm = random_hermitian(n, 6);
        let ym = random_hermitian(n, 7);
        let mut z = coords::pack(mode, zm.matrix());
        z.extend(coords::pack(mode, ym.matrix()));

        let block = two_by_two_block(mode, n, &x_exprs, &z_exprs, &y_exprs);
        let vals = eval(&block, &z);
        let got = coords::unpack(mode, 2 * n, &vals);

        let mut want = CMat::zeros((2 * n, 2 * n));
        for i in 0..n {
            for j in 0..n {
                want[(i, j)] = x0.matrix()[(i, j)];
                want[(i, n + j)] = zm.matrix()[(i, j)];
                want[(n + i, j)] = zm.matrix()[(j, i)].conj();
                want[(n + i, n + j)] = ym.matrix()[(i, j)];
            }
        }
        let dev = (&got - &want).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-13, "dev {dev:.3e}");
    }

    #[test]
    fn kron_identity_matches_dense() {
        let n = 3;
        let mode = Mode::Complex;
        let dim = mode.herm_dim(n);
        let a_exprs: Vec<Expr> = (0..dim).map(Expr::var).collect();
        let am = random_hermitian(n, 9);
        let z = coords::pack(mode, am.matrix());

        for left in [true, false] {
            let big = kron_with_identity(mode, n, &a_exprs, left);
            let vals = eval(&big, &z);
            let got = coords::unpack(mode, n * n, &vals);
            let eye = CMat::eye(n);
            let want = if left {
                crate::linalg::kron_mat(am.matrix(), &eye)
            } else {
                crate::linalg::kron_mat(&eye, am.matrix())
            };
            let dev = (&got - &want).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-13, "left={left} dev {dev:.3e}");
        }
    }

    #[test]
    fn conjugate_block_matches() {
        let n = 4;
        let mode = Mode::Complex;
        let dim = mode.herm_dim(n);
        let a_exprs: Vec<Expr> = (0..dim).map(Expr::var).collect();
        let am = random_hermitian(n, 13);
        let z = coords::pack(mode, am.matrix());
        let cb = conjugate_block(mode, n, &a_exprs);
        let got = coords::unpack(mode, n, &eval(&cb, &z));
        let want = am.matrix().mapv(|v| v.conj());
        let dev = (&got - &want).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-14);
    }
}
