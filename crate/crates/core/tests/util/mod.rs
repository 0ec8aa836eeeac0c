//! Shared helpers for the integration tests.

#![allow(dead_code)]

use ndarray::prelude::*;
use num_complex::Complex64;
use regent_core::linalg::HermitianOperator;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Pack a Hermitian operator into the solver's complex coordinate layout:
/// diagonal, then √2·Re, then √2·Im of the upper triangle (row-major pairs).
pub fn pack_complex(op: &HermitianOperator) -> Vec<f64> {
    let n = op.dim();
    let m = op.matrix();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i] = m[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            out[k] = SQRT2 * m[(i, j)].re;
            k += 1;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out[k] = SQRT2 * m[(i, j)].im;
            k += 1;
        }
    }
    out
}

/// Inverse of `pack_complex`.
pub fn unpack_complex(n: usize, x: &[f64]) -> Array2<Complex64> {
    let mut m = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = Complex64::new(x[i], 0.0);
    }
    let pairs = n * (n - 1) / 2;
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let re = x[n + k] / SQRT2;
            let im = x[n + pairs + k] / SQRT2;
            m[(i, j)] = Complex64::new(re, im);
            m[(j, i)] = Complex64::new(re, -im);
            k += 1;
        }
    }
    m
}
