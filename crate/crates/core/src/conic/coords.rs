//! Real coordinatizations of Hermitian matrices.
//!
//! Complex Hermitian `n×n` matrices map isometrically to `R^{n²}` with layout
//! `[diagonal | √2·Re(offdiag) | √2·Im(offdiag)]`, off-diagonal pairs `(i,j)`,
//! `i < j`, in row-major order. Real symmetric matrices use the prefix
//! `[diagonal | √2·offdiag]` of the same layout, so restricting a complex
//! block to real data is a coordinate truncation.

use num_complex::Complex64;

use crate::linalg::CMat;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Coordinate mode of a Hermitian block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Complex,
    Real,
}

impl Mode {
    /// Coordinate dimension of an `n×n` Hermitian block in this mode.
    pub fn herm_dim(self, n: usize) -> usize {
        match self {
            Mode::Complex => n * n,
            Mode::Real => n * (n + 1) / 2,
        }
    }
}

/// Number of off-diagonal pairs.
#[inline]
pub fn pairs(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Index of the pair `(i,j)`, `i < j`, in row-major pair order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Coordinate of the diagonal entry `i`.
#[inline]
pub fn diag_coord(_n: usize, i: usize) -> usize {
    i
}

/// Coordinate of `√2·Re A_{ij}` for `i < j`.
#[inline]
pub fn re_coord(n: usize, i: usize, j: usize) -> usize {
    n + pair_index(n, i, j)
}

/// Coordinate of `√2·Im A_{ij}` for `i < j` (complex mode only).
#[inline]
pub fn im_coord(n: usize, i: usize, j: usize) -> usize {
    n + pairs(n) + pair_index(n, i, j)
}

/// Pack a Hermitian matrix into its coordinate vector.
pub fn pack(mode: Mode, m: &CMat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; mode.herm_dim(n)];
    for i in 0..n {
        out[diag_coord(n, i)] = m[(i, i)].re;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out[re_coord(n, i, j)] = SQRT2 * m[(i, j)].re;
            if mode == Mode::Complex {
                out[im_coord(n, i, j)] = SQRT2 * m[(i, j)].im;
            }
        }
    }
    out
}

/// Unpack a coordinate vector into a Hermitian matrix.
pub fn unpack(mode: Mode, n: usize, x: &[f64]) -> CMat {
    debug_assert_eq!(x.len(), mode.herm_dim(n));
    let mut m = CMat::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = Complex64::new(x[diag_coord(n, i)], 0.0);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let re = x[re_coord(n, i, j)] / SQRT2;
            let im = if mode == Mode::Complex {
                x[im_coord(n, i, j)] / SQRT2
            } else {
                0.0
            };
            m[(i, j)] = Complex64::new(re, im);
            m[(j, i)] = Complex64::new(re, -im);
        }
    }
    m
}

/// Coordinate contributions of a Hermitian rank-entry update:
/// adding `c·v` to entry `(i,j)` (and `conj(c)·v` to `(j,i)`) contributes
/// the returned `(coord, coefficient)` pairs to the block's coordinates.
pub fn entry_coords(mode: Mode, n: usize, i: usize, j: usize, c: Complex64) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(2);
    if i == j {
        debug_assert!(c.im.abs() < 1e-12, "diagonal coefficient must be real");
        if c.re != 0.0 {
            out.push((diag_coord(n, i), c.re));
        }
        return out;
    }
    let (a, b, cc) = if i < j { (i, j, c) } else { (j, i, c.conj()) };
    if cc.re != 0.0 {
        out.push((re_coord(n, a, b), SQRT2 * cc.re));
    }
    match mode {
        Mode::Complex => {
            if cc.im != 0.0 {
                out.push((im_coord(n, a, b), SQRT2 * cc.im));
            }
        }
        Mode::Real => debug_assert!(cc.im.abs() < 1e-12, "imaginary data in real mode"),
    }
    out
}

/// Dense real vector dot with a packed Hermitian pair: `tr[A B] = ⟨pack A, pack B⟩`.
pub fn hs_inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trace of the block as a linear functional over its coordinates.
pub fn trace_functional(mode: Mode, n: usize) -> Vec<(usize, f64)> {
    let _ = mode;
    (0..n).map(|i| (diag_coord(n, i), 1.0)).collect()
}

/// Packed identity matrix.
pub fn packed_identity(mode: Mode, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; mode.herm_dim(n)];
    for i in 0..n {
        v[i] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_hermitian;

    #[test]
    fn pack_round_trip_isometry() {
        for seed in 0..3u64 {
            let a = random_hermitian(5, seed);
            let b = random_hermitian(5, 10 + seed);
            let pa = pack(Mode::Complex, a.matrix());
            let pb = pack(Mode::Complex, b.matrix());
            let back = unpack(Mode::Complex, 5, &pa);
            let dev = (&back - a.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-15);
            let hs = a.inner(&b);
            assert!((hs - hs_inner(&pa, &pb)).abs() < 1e-12);
        }
    }

    #[test]
    fn real_mode_is_prefix() {
        let a = random_hermitian(4, 3);
        let re_part = a.matrix().mapv(|z| Complex64::new(z.re, 0.0));
        let full = pack(Mode::Complex, &re_part);
        let real = pack(Mode::Real, &re_part);
        assert_eq!(&full[..real.len()], &real[..]);
        assert!(full[real.len()..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn entry_coord_consistency() {
        // building a matrix entry-wise through entry_coords matches direct packing
        let n = 4;
        let a = random_hermitian(n, 77);
        let mut coords = vec![0.0; n * n];
        for i in 0..n {
            coords[diag_coord(n, i)] += a.matrix()[(i, i)].re;
            for j in (i + 1)..n {
                for (c, w) in entry_coords(Mode::Complex, n, i, j, a.matrix()[(i, j)]) {
                    coords[c] += w;
                }
            }
        }
        let direct = pack(Mode::Complex, a.matrix());
        for (x, y) in coords.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
