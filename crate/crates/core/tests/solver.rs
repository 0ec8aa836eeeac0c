//! Solver battery on programs with independently known optima.

use ndarray::prelude::*;
use num_complex::Complex64;
use regent_core::conic::{solve, solve_value, ConeSpec, ConicProgram, Mode, SolveStatus};
use regent_core::linalg::{random_density, random_hermitian, HermitianOperator};

mod util;
use util::pack_complex;

/// min t s.t. t ≥ x, t ≥ -x over scalars with x pinned: LP sanity.
#[test]
fn lp_absolute_value() {
    // blocks: nonneg slacks (t - x, t + x), free (x, t)
    let mut p = ConicProgram::new(vec![ConeSpec::Nonneg(2), ConeSpec::Free(2)]);
    // coords: 0,1 nonneg; 2 = x; 3 = t
    p.push_equality(vec![(0, 1.0), (2, 1.0), (3, -1.0)], 0.0); // s0 = t - x
    p.push_equality(vec![(1, 1.0), (2, -1.0), (3, -1.0)], 0.0); // s1 = t + x
    p.push_equality(vec![(2, 1.0)], -0.7); // x = -0.7
    p.set_objective(vec![(3, 1.0)], 0.0);
    let v = solve_value(&p, 1e-8).unwrap();
    assert!((v - 0.7).abs() < 1e-7, "got {v}");
}

/// Largest eigenvalue as an SDP: min t s.t. tI - A ⪰ 0.
#[test]
fn spectral_norm_sdp() {
    for seed in [3u64, 4, 5] {
        let a = random_hermitian(4, seed);
        let lam_max = a.eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // blocks: Psd(4) slack S, Free(1) t;  S = tI - A
        let mut p = ConicProgram::new(vec![ConeSpec::Psd(4), ConeSpec::Free(1)]);
        let t_coord = 16;
        let id = pack_complex(&HermitianOperator::identity(4));
        let am = pack_complex(&a);
        for k in 0..16 {
            // S_k - t*id_k = -a_k
            p.push_equality(vec![(k, 1.0), (t_coord, -id[k])], -am[k]);
        }
        p.set_objective(vec![(t_coord, 1.0)], 0.0);
        let v = solve_value(&p, 1e-7).unwrap();
        assert!((v - lam_max).abs() < 1e-6, "seed {seed}: {v} vs {lam_max}");
    }
}

/// Trace norm via its variational SDP: ‖A‖₁ = min tr Y : -Y ⪯ A ⪯ Y.
#[test]
fn trace_norm_variational_sdp() {
    for seed in 0..20u64 {
        let n = 3 + (seed as usize % 3);
        let a = random_hermitian(n, 100 + seed);
        let want = a.trace_norm();
        // blocks: P = Y - A ⪰ 0, Q = Y + A ⪰ 0, Y free herm
        let nn = n * n;
        let mut p = ConicProgram::new(vec![
            ConeSpec::Psd(n),
            ConeSpec::Psd(n),
            ConeSpec::Free(nn),
        ]);
        let am = pack_complex(&a);
        for k in 0..nn {
            p.push_equality(vec![(k, 1.0), (2 * nn + k, -1.0)], -am[k]);
            p.push_equality(vec![(nn + k, 1.0), (2 * nn + k, -1.0)], am[k]);
        }
        // objective: tr Y  (diagonal coords of the free block)
        p.set_objective((0..n).map(|i| (2 * nn + i, 1.0)).collect(), 0.0);
        let v = solve_value(&p, 1e-7).unwrap();
        assert!((v - want).abs() < 1e-6, "seed {seed}: {v} vs {want}");
    }
}

/// Real-data program exercises the real-symmetric restriction; a complex
/// version of the same data must agree.
#[test]
fn real_restriction_agrees_with_complex() {
    // max tr(Aρ) over density matrices ρ = λmax for real A; force complex by
    // perturbing with an imaginary off-diagonal term
    let build = |mat: &HermitianOperator| -> ConicProgram {
        let n = mat.dim();
        let nn = n * n;
        let mut p = ConicProgram::new(vec![ConeSpec::Psd(n)]);
        p.push_equality((0..n).map(|i| (i, 1.0)).collect(), 1.0); // trace one
        let am = pack_complex(mat);
        p.set_objective((0..nn).map(|k| (k, -am[k])).collect(), 0.0);
        p
    };
    let real_mat = HermitianOperator::diagonal(&[0.3, -0.1, 0.9]);
    let v = solve_value(&build(&real_mat), 1e-8).unwrap();
    assert!((v + 0.9).abs() < 1e-7, "{v}");

    let mut m = real_mat.matrix().clone();
    m[(0, 1)] = Complex64::new(0.0, 0.4);
    m[(1, 0)] = Complex64::new(0.0, -0.4);
    let cplx = HermitianOperator::unstructured(m).unwrap();
    let vc = solve_value(&build(&cplx), 1e-8).unwrap();
    let want = -cplx
        .eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((vc - want).abs() < 1e-7, "{vc} vs {want}");
}

#[test]
fn infeasible_and_unbounded_detected() {
    // x ≥ 0, x = -1: infeasible (via cone, not presolve: use two nonnegs)
    let mut p = ConicProgram::new(vec![ConeSpec::Nonneg(2)]);
    p.push_equality(vec![(0, 1.0), (1, 1.0)], -1.0);
    p.set_objective(vec![(0, 1.0)], 0.0);
    let sol = solve(&p, 1e-8).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);

    // min -x s.t. x ≥ 0: unbounded
    let mut p2 = ConicProgram::new(vec![ConeSpec::Nonneg(1)]);
    p2.set_objective(vec![(0, -1.0)], 0.0);
    let sol2 = solve(&p2, 1e-8).unwrap();
    assert_eq!(sol2.status, SolveStatus::Unbounded);
}

/// QRE with both arguments pinned to commuting (diagonal) matrices equals the
/// classical KL divergence in bits.
#[test]
fn qre_commuting_reproduces_classical_kl() {
    for seed in 0..20u64 {
        let n = 3;
        // seeded simplex points bounded away from zero
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut sa = 0.0;
        let mut sb = 0.0;
        for i in 0..n {
            let u = ((seed * 31 + i as u64 * 17) % 97) as f64 / 97.0;
            let v = ((seed * 13 + i as u64 * 41) % 89) as f64 / 89.0;
            a[i] = 0.08 + u;
            b[i] = 0.08 + v;
            sa += a[i];
            sb += b[i];
        }
        for i in 0..n {
            a[i] /= sa;
            b[i] /= sb;
        }
        let kl: f64 = (0..n).map(|i| a[i] * (a[i] / b[i]).log2()).sum();

        let nn = n * n;
        let mut p = ConicProgram::new(vec![ConeSpec::Qre(n)]);
        let pa = pack_complex(&HermitianOperator::diagonal(&a));
        let pb = pack_complex(&HermitianOperator::diagonal(&b));
        for k in 0..nn {
            p.push_equality(vec![(k, 1.0)], pa[k]);
            p.push_equality(vec![(nn + k, 1.0)], pb[k]);
        }
        p.set_objective(vec![(2 * nn, 1.0)], 0.0);
        let v = solve_value(&p, 3e-8).unwrap();
        assert!((v - kl).abs() < 1e-7, "seed {seed}: {v} vs {kl}");
    }
}

/// ORE with fixed identity first argument: min tr V s.t. (I, W, V) ∈ ORE
/// equals tr(-log₂ W).
#[test]
fn ore_identity_gives_matrix_log() {
    for seed in [7u64, 8] {
        let n = 3;
        let w = random_density(n, n, seed).unwrap();
        let w_op = w.op().scale(1.5);
        let want: f64 = w_op.eigenvalues().iter().map(|&v| -(v.log2())).sum();
        let nn = n * n;
        let mut p = ConicProgram::new(vec![ConeSpec::Ore(n)]);
        let id = pack_complex(&HermitianOperator::identity(n));
        let pw = pack_complex(&w_op);
        for k in 0..nn {
            p.push_equality(vec![(k, 1.0)], id[k]);
            p.push_equality(vec![(nn + k, 1.0)], pw[k]);
        }
        p.set_objective((0..n).map(|i| (2 * nn + i, 1.0)).collect(), 0.0);
        let v = solve_value(&p, 1e-7).unwrap();
        assert!((v - want).abs() < 1e-6, "seed {seed}: {v} vs {want}");
    }
}

/// General (variable first argument) QRE: min over density ρ of D(ρ‖ω)
/// equals -log₂ tr ω by the Gibbs variational principle.
#[test]
fn qre_variable_first_argument() {
    for seed in [11u64, 12] {
        let n = 2;
        let omega = random_density(n, n, seed).unwrap().op().scale(1.8);
        let want = -(omega.trace().log2());
        let nn = n * n;
        // blocks: Qre(2) with A = ρ (variable, trace 1), B = ω pinned
        let mut p = ConicProgram::new(vec![ConeSpec::Qre(n)]);
        let po = pack_complex(&omega);
        for k in 0..nn {
            p.push_equality(vec![(nn + k, 1.0)], po[k]);
        }
        p.push_equality((0..n).map(|i| (i, 1.0)).collect(), 1.0);
        p.set_objective(vec![(2 * nn, 1.0)], 0.0);
        let v = solve_value(&p, 1e-7).unwrap();
        assert!((v - want).abs() < 1e-6, "seed {seed}: {v} vs {want}");
    }
}

/// Scale-consistency: doubling the objective doubles the optimum.
#[test]
fn objective_scaling() {
    let a = random_hermitian(3, 55);
    let build = |scale: f64| {
        let n = 3;
        let mut p = ConicProgram::new(vec![ConeSpec::Psd(n)]);
        p.push_equality((0..n).map(|i| (i, 1.0)).collect(), 1.0);
        let am = pack_complex(&a);
        p.set_objective((0..n * n).map(|k| (k, scale * am[k])).collect(), 0.0);
        p
    };
    let v1 = solve_value(&build(1.0), 1e-7).unwrap();
    let v2 = solve_value(&build(2.0), 1e-7).unwrap();
    assert!((v2 - 2.0 * v1).abs() < 1e-6);
}

/// Deterministic: identical inputs give bit-identical objectives.
#[test]
fn deterministic_solves() {
    let a = random_hermitian(4, 99);
    let n = 4;
    let mut p = ConicProgram::new(vec![ConeSpec::Psd(n)]);
    p.push_equality((0..n).map(|i| (i, 1.0)).collect(), 1.0);
    let am = pack_complex(&a);
    p.set_objective((0..n * n).map(|k| (k, am[k])).collect(), 0.0);
    let v1 = solve(&p, 1e-7).unwrap();
    let v2 = solve(&p, 1e-7).unwrap();
    assert_eq!(v1.objective.to_bits(), v2.objective.to_bits());
    assert_eq!(v1.iterations, v2.iterations);
}

/// Program JSON round trip solves to the same value.
#[test]
fn json_round_trip_solves() {
    let a = random_hermitian(3, 123);
    let n = 3;
    let mut p = ConicProgram::new(vec![ConeSpec::Psd(n)]);
    p.push_equality((0..n).map(|i| (i, 1.0)).collect(), 1.0);
    let am = pack_complex(&a);
    p.set_objective((0..n * n).map(|k| (k, am[k])).collect(), 0.0);
    let dir = std::env::temp_dir().join("regent_json_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("prog.json");
    regent_core::conic::save_program(&p, &path).unwrap();
    let p2 = regent_core::conic::load_program(&path).unwrap();
    let v1 = solve_value(&p, 1e-7).unwrap();
    let v2 = solve_value(&p2, 1e-7).unwrap();
    assert!((v1 - v2).abs() < 1e-9);
}

/// Psd solution blocks are reported in packed layout and match the optimizer.
#[test]
fn solution_blocks_read_back() {
    // max tr(Aρ) over densities: optimum is the top eigenprojector
    let a = HermitianOperator::diagonal(&[1.0, 0.0, 0.25]);
    let n = 3;
    let mut p = ConicProgram::new(vec![ConeSpec::Psd(n)]);
    p.push_equality((0..n).map(|i| (i, 1.0)).collect(), 1.0);
    let am = pack_complex(&a);
    p.set_objective((0..n * n).map(|k| (k, -am[k])).collect(), 0.0);
    let sol = solve(&p, 1e-7).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let rho = util::unpack_complex(n, &sol.blocks[0]);
    assert!((rho[(0, 0)].re - 1.0).abs() < 1e-5);
    assert!(rho[(1, 1)].re.abs() < 1e-5);
    let _ = Mode::Complex;
    let _: Array2<Complex64> = rho;
}
