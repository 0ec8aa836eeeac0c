//! Conic programs over products of PSD, quantum-relative-entropy, and
//! operator-relative-entropy cones, and a primal-dual interior-point solver.
//!
//! Programs are stated in standard form `min ⟨c,x⟩ : x ∈ K, E(x) = b` over an
//! ordered tuple of cone blocks. The entropy cones are solved by lowering to
//! PSD constraints through a rational (quadrature plus square-root scaling)
//! approximation of the operator logarithm, with the approximation order
//! auto-escalated until the optimum stabilizes; the base engine is a
//! homogeneous self-dual interior-point method over PSD products.
//!
//! All entropy cones are base two: `Qre(n)` contains `(A, B, t)` with
//! `D(A‖B) ≤ t` in bits and `Ore(n)` contains `(A, B, T)` with
//! `T ⪰ -A^{1/2} log₂(A^{-1/2} B A^{-1/2}) A^{1/2}`.

pub mod builders;
pub(crate) mod coords;
mod gauss;
mod geometry;
mod ipm;
mod json;
mod presolve;
pub(crate) mod sparse;

pub use coords::Mode;
pub use json::{load_program, save_program};

use crate::{Error, Result};
use sparse::SparseVec;

/// Cone block of a standard-form program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSpec {
    /// Complex Hermitian PSD block of side `n`; n² real coordinates.
    Psd(usize),
    /// Quantum relative entropy epigraph `(A, B, t)`, `2n²+1` coordinates.
    Qre(usize),
    /// Operator relative entropy epigraph `(A, B, T)`, `3n²` coordinates.
    Ore(usize),
    /// Componentwise nonnegative scalars.
    Nonneg(usize),
    /// Unconstrained scalars.
    Free(usize),
}

impl ConeSpec {
    /// Real coordinate dimension of the block.
    pub fn coord_dim(&self) -> usize {
        match *self {
            ConeSpec::Psd(n) => n * n,
            ConeSpec::Qre(n) => 2 * n * n + 1,
            ConeSpec::Ore(n) => 3 * n * n,
            ConeSpec::Nonneg(k) | ConeSpec::Free(k) => k,
        }
    }
}

/// Linear equality `Σ coef·x[coord] = rhs` over global coordinates.
#[derive(Debug, Clone)]
pub struct EqRow {
    pub terms: SparseVec,
    pub rhs: f64,
}

/// Standard-form conic program.
///
/// Coordinates are indexed globally: block `k` occupies the contiguous range
/// starting at `offsets()[k]`. Hermitian blocks use the packed layout of
/// [`Mode::Complex`]: diagonal, then `√2·Re`, then `√2·Im` of the upper
/// triangle.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub blocks: Vec<ConeSpec>,
    pub objective: SparseVec,
    pub objective_constant: f64,
    pub equalities: Vec<EqRow>,
}

impl ConicProgram {
    pub fn new(blocks: Vec<ConeSpec>) -> Self {
        Self {
            blocks,
            objective: SparseVec::new(),
            objective_constant: 0.0,
            equalities: Vec::new(),
        }
    }

    /// Global coordinate offsets per block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut acc = 0;
        for b in &self.blocks {
            off.push(acc);
            acc += b.coord_dim();
        }
        off
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.coord_dim()).sum()
    }

    pub fn push_equality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(EqRow {
            terms: SparseVec::from_terms(terms),
            rhs,
        });
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>, constant: f64) {
        self.objective = SparseVec::from_terms(terms);
        self.objective_constant = constant;
    }
}

/// Solver status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Residual and gap estimates of the returned iterate, plus the entropy-cone
/// approximation order that produced it.
#[derive(Debug, Clone, Default)]
pub struct SolveAccuracy {
    pub rel_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Final (p, q) order of the operator-log approximation, if any entropy
    /// cone was present.
    pub entropy_order: Option<(u32, usize)>,
    /// Objective change over the last escalation step, if escalation ran.
    pub escalation_delta: Option<f64>,
}

/// Primal-dual outcome of a solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    /// Standard-form coordinates per block (packed Hermitian layout).
    pub blocks: Vec<Vec<f64>>,
    /// Objective value (including the program's constant term).
    pub objective: f64,
    /// Dual objective estimate from the interior-point engine.
    pub dual_objective: f64,
    pub accuracy: SolveAccuracy,
    pub iterations: usize,
}

/// Minimum supported tolerance.
pub const MIN_TOL: f64 = 1e-9;

/// Solve a standard-form program to the requested tolerance.
///
/// Entropy cones are lowered to PSD constraints at escalating approximation
/// orders `(3,3), (4,4), …` until the optimum moves by less than `tol/10`.
/// Infeasibility and unboundedness are detected and reported as statuses.
pub fn solve(program: &ConicProgram, tol: f64) -> Result<Solution> {
    let tol = tol.max(MIN_TOL);
    let has_entropy = program
        .blocks
        .iter()
        .any(|b| matches!(b, ConeSpec::Qre(_) | ConeSpec::Ore(_)));

    let pre = presolve::presolve(program)?;

    if !has_entropy {
        let geom = geometry::build_geometry(program, &pre, None)?;
        let sol = ipm::solve_geometry(&geom, tol)?;
        return Ok(finish(program, &pre, &geom, sol));
    }

    let ladder: [(u32, usize); 5] = [(3, 3), (4, 4), (5, 5), (6, 6), (7, 7)];
    let mut prev: Option<Solution> = None;
    let mut last_delta = None;
    for (step, &(p, q)) in ladder.iter().enumerate() {
        let geom = geometry::build_geometry(program, &pre, Some((p, q)))?;
        let raw = ipm::solve_geometry(&geom, tol)?;
        let mut sol = finish(program, &pre, &geom, raw);
        sol.accuracy.entropy_order = Some((p, q));
        if sol.status != SolveStatus::Optimal {
            // infeasibility or unboundedness does not depend on the log order
            return Ok(sol);
        }
        if let Some(prev_sol) = &prev {
            let delta = (sol.objective - prev_sol.objective).abs();
            last_delta = Some(delta);
            sol.accuracy.escalation_delta = last_delta;
            if delta < tol / 10.0 || step + 1 == ladder.len() {
                return Ok(sol);
            }
        } else if step + 1 == ladder.len() {
            return Ok(sol);
        }
        prev = Some(sol);
    }
    unreachable!()
}

/// Map the geometric solution back into standard-form block coordinates.
fn finish(
    program: &ConicProgram,
    pre: &presolve::Presolved,
    geom: &geometry::Geometry,
    sol: ipm::GeomSolution,
) -> Solution {
    let offsets = program.offsets();
    let mut blocks = Vec::with_capacity(program.blocks.len());
    if matches!(sol.status, SolveStatus::Optimal | SolveStatus::MaxIterations) {
        let z = geom.expand(&sol.z);
        for (k, b) in program.blocks.iter().enumerate() {
            let mut vals = vec![0.0; b.coord_dim()];
            for (local, val) in vals.iter_mut().enumerate() {
                *val = pre.eval_coord(offsets[k] + local, &z);
            }
            blocks.push(vals);
        }
    } else {
        for b in &program.blocks {
            blocks.push(vec![0.0; b.coord_dim()]);
        }
    }
    Solution {
        status: sol.status,
        blocks,
        objective: sol.primal_objective + program.objective_constant,
        dual_objective: sol.dual_objective + program.objective_constant,
        accuracy: sol.accuracy,
        iterations: sol.iterations,
    }
}

/// Convenience: solve and return the optimal value, mapping non-optimal
/// statuses onto errors.
pub fn solve_value(program: &ConicProgram, tol: f64) -> Result<f64> {
    let sol = solve(program, tol)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.objective),
        SolveStatus::Infeasible => Err(Error::Infeasible),
        SolveStatus::Unbounded => Err(Error::Unbounded),
        SolveStatus::MaxIterations => Err(Error::SolverFailure(format!(
            "iteration limit; residuals {:.2e}/{:.2e}, relgap {:.2e}",
            sol.accuracy.primal_residual, sol.accuracy.dual_residual, sol.accuracy.rel_gap
        ))),
    }
}
