//! Standard-form presolve: real-data restriction and equality elimination.
//!
//! Realification: when every datum of the program (objective, equality
//! coefficients, right-hand sides) avoids the imaginary coordinates of the
//! Hermitian blocks, the feasible set is invariant under entrywise
//! conjugation and the optimum may be taken real. The imaginary coordinates
//! are then pinned to zero and Hermitian blocks shrink to real symmetric
//! ones.
//!
//! Elimination: the equalities our builders emit are definitional (each row
//! introduces block coordinates as affine images of earlier ones), so sparse
//! Gaussian elimination with threshold pivoting resolves every coordinate
//! into an affine expression over a small set of surviving variables.
//! Exactly dependent rows are dropped when consistent and flagged as
//! infeasible otherwise.

use super::coords::{pairs, Mode};
use super::sparse::SparseVec;
use super::{ConeSpec, ConicProgram};
use crate::{Error, Result};
use std::collections::{HashMap, HashSet};

/// Affine expression of one standard-form coordinate over the surviving
/// variables (global coordinate indices).
#[derive(Debug, Clone)]
pub enum CoordExpr {
    /// The coordinate survived; its z-index.
    Var(usize),
    /// Eliminated: affine over z-indices.
    Affine { terms: Vec<(usize, f64)>, constant: f64 },
}

#[derive(Debug)]
pub struct Presolved {
    pub mode: Mode,
    /// Surviving coordinates (global indices), in z order.
    pub z_coords: Vec<usize>,
    /// Expression per global coordinate.
    pub exprs: Vec<CoordExpr>,
    /// Objective over z plus constant (program constant not included).
    pub objective_z: Vec<f64>,
    pub objective_shift: f64,
    /// Equalities were inconsistent.
    pub infeasible: bool,
}

impl Presolved {
    pub fn eval_coord(&self, coord: usize, z: &[f64]) -> f64 {
        match &self.exprs[coord] {
            CoordExpr::Var(j) => z[*j],
            CoordExpr::Affine { terms, constant } => {
                constant + terms.iter().map(|&(j, v)| v * z[j]).sum::<f64>()
            }
        }
    }

    /// Expression of a coordinate as (sparse z terms, constant).
    pub fn coord_terms(&self, coord: usize) -> (Vec<(usize, f64)>, f64) {
        match &self.exprs[coord] {
            CoordExpr::Var(j) => (vec![(*j, 1.0)], 0.0),
            CoordExpr::Affine { terms, constant } => (terms.clone(), *constant),
        }
    }
}

/// Global indices of the imaginary coordinates of every Hermitian block.
fn imag_coords(program: &ConicProgram) -> HashSet<usize> {
    let mut set = HashSet::new();
    let offsets = program.offsets();
    for (k, b) in program.blocks.iter().enumerate() {
        let off = offsets[k];
        let mut mark_herm = |base: usize, n: usize| {
            let start = base + n + pairs(n);
            for c in start..base + n * n {
                set.insert(c);
            }
        };
        match *b {
            ConeSpec::Psd(n) => mark_herm(off, n),
            ConeSpec::Qre(n) => {
                mark_herm(off, n);
                mark_herm(off + n * n, n);
            }
            ConeSpec::Ore(n) => {
                mark_herm(off, n);
                mark_herm(off + n * n, n);
                mark_herm(off + 2 * n * n, n);
            }
            ConeSpec::Nonneg(_) | ConeSpec::Free(_) => {}
        }
    }
    set
}

pub fn presolve(program: &ConicProgram) -> Result<Presolved> {
    let total = program.total_dim();
    let imag = imag_coords(program);

    // -- realification check -----------------------------------------------
    let obj_real = program.objective.terms.iter().all(|&(i, _)| !imag.contains(&i));
    let mut rows_ok = obj_real;
    if rows_ok {
        'rows: for row in &program.equalities {
            let mut any_imag = false;
            let mut any_real = false;
            for &(i, _) in &row.terms.terms {
                if imag.contains(&i) {
                    any_imag = true;
                } else {
                    any_real = true;
                }
            }
            if any_imag && (any_real || row.rhs.abs() > 1e-13) {
                rows_ok = false;
                break 'rows;
            }
        }
    }
    let mode = if rows_ok { Mode::Real } else { Mode::Complex };

    // -- collect active rows -------------------------------------------------
    let mut rows: Vec<(SparseVec, f64)> = Vec::new();
    for row in &program.equalities {
        if mode == Mode::Real {
            let all_imag = row
                .terms
                .terms
                .iter()
                .all(|&(i, _)| imag.contains(&i));
            if all_imag && !row.terms.is_empty() {
                continue; // satisfied by pinning imaginary coordinates to zero
            }
            debug_assert!(row.terms.terms.iter().all(|&(i, _)| !imag.contains(&i)));
        }
        rows.push((row.terms.clone(), row.rhs));
    }

    // -- sparse Gaussian elimination -----------------------------------------
    // col -> active row ids containing it
    let mut col_rows: HashMap<usize, HashSet<usize>> = HashMap::new();
    for (rid, (row, _)) in rows.iter().enumerate() {
        for &(c, _) in &row.terms {
            col_rows.entry(c).or_default().insert(rid);
        }
    }
    let mut active: Vec<bool> = vec![true; rows.len()];
    // pivots in order: (column, row terms without the pivot, rhs, pivot coefficient)
    let mut pivots: Vec<(usize, SparseVec, f64)> = Vec::new();
    let mut pivoted: HashSet<usize> = HashSet::new();
    let mut infeasible = false;

    loop {
        // pick the shortest active row (deterministic tie-break on id)
        let mut best: Option<(usize, usize)> = None;
        for (rid, (row, _)) in rows.iter().enumerate() {
            if !active[rid] {
                continue;
            }
            let len = row.terms.len();
            if best.map_or(true, |(_, blen)| len < blen) {
                best = Some((rid, len));
            }
        }
        let Some((rid, _)) = best else { break };
        active[rid] = false;
        let (row, rhs) = rows[rid].clone();
        let scale = row.max_abs();
        if row.is_empty() || scale < 1e-12 {
            if rhs.abs() > 1e-9 * (1.0 + scale) {
                infeasible = true;
            }
            continue;
        }
        // pivot column: fewest other-row usages, then largest coefficient
        let mut pick: Option<(usize, f64, usize)> = None; // (col, |coef|, usage)
        for &(c, v) in &row.terms {
            if v.abs() < 1e-8 * scale {
                continue;
            }
            let usage = col_rows.get(&c).map_or(0, |s| s.len());
            let better = match pick {
                None => true,
                Some((_, bv, bu)) => usage < bu || (usage == bu && v.abs() > bv),
            };
            if better {
                pick = Some((c, v.abs(), usage));
            }
        }
        let Some((col, _, _)) = pick else {
            // no numerically safe pivot; treat as dependent
            if rhs.abs() > 1e-9 * (1.0 + scale) {
                infeasible = true;
            }
            continue;
        };
        let mut expr = row.clone();
        let coef = expr.remove(col).expect("pivot in row");
        // col = (rhs - expr)/coef
        expr.scale(-1.0 / coef);
        let rhs_c = rhs / coef;
        // substitute col = rhs_c + expr·x into the other active rows
        if let Some(users) = col_rows.get(&col).cloned() {
            for other in users {
                if other == rid || !active[other] {
                    continue;
                }
                let changed = {
                    let (orow, orhs) = &mut rows[other];
                    match orow.remove(col) {
                        Some(w) => {
                            orow.axpy(w, &expr);
                            *orhs -= w * rhs_c;
                            true
                        }
                        None => false,
                    }
                };
                if changed {
                    // the index may keep stale entries; lookups tolerate them
                    for &(c2, _) in &rows[other].0.terms {
                        col_rows.entry(c2).or_default().insert(other);
                    }
                }
            }
        }
        col_rows.remove(&col);
        pivoted.insert(col);
        pivots.push((col, expr, rhs_c));
    }

    // -- assemble coordinate expressions -------------------------------------
    // z variables: coordinates that are neither pivoted nor pinned imaginary.
    let mut z_coords = Vec::new();
    let mut z_index: HashMap<usize, usize> = HashMap::new();
    for coord in 0..total {
        if pivoted.contains(&coord) {
            continue;
        }
        if mode == Mode::Real && imag.contains(&coord) {
            continue;
        }
        z_index.insert(coord, z_coords.len());
        z_coords.push(coord);
    }

    let mut exprs: Vec<CoordExpr> = (0..total)
        .map(|c| match z_index.get(&c) {
            Some(&j) => CoordExpr::Var(j),
            None => CoordExpr::Affine {
                terms: Vec::new(),
                constant: 0.0,
            },
        })
        .collect();

    // resolve pivots in reverse order: each pivot row references only z-vars
    // and later pivots (already resolved), never earlier ones
    for (col, expr, rhs_c) in pivots.iter().rev() {
        let mut terms: HashMap<usize, f64> = HashMap::new();
        let mut constant = *rhs_c;
        for &(c, v) in &expr.terms {
            match &exprs[c] {
                CoordExpr::Var(j) => {
                    *terms.entry(*j).or_insert(0.0) += v;
                }
                CoordExpr::Affine {
                    terms: inner,
                    constant: ic,
                } => {
                    constant += v * ic;
                    for &(j, w) in inner {
                        *terms.entry(j).or_insert(0.0) += v * w;
                    }
                }
            }
        }
        let mut tv: Vec<(usize, f64)> = terms.into_iter().filter(|&(_, v)| v != 0.0).collect();
        tv.sort_by_key(|&(j, _)| j);
        exprs[*col] = CoordExpr::Affine {
            terms: tv,
            constant,
        };
    }

    // -- objective over z ----------------------------------------------------
    let mut objective_z = vec![0.0; z_coords.len()];
    let mut objective_shift = 0.0;
    for &(c, v) in &program.objective.terms {
        match &exprs[c] {
            CoordExpr::Var(j) => objective_z[*j] += v,
            CoordExpr::Affine { terms, constant } => {
                objective_shift += v * constant;
                for &(j, w) in terms {
                    objective_z[j] += v * w;
                }
            }
        }
    }

    if z_coords.len() > 200_000 {
        return Err(Error::SolverFailure(format!(
            "presolved program too large: {} variables",
            z_coords.len()
        )));
    }

    Ok(Presolved {
        mode,
        z_coords,
        exprs,
        objective_z,
        objective_shift,
        infeasible,
    })
}
