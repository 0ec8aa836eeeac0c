//! Dense complex Hermitian linear algebra: operators with declared tensor
//! structure, matrix functions in an eigenbasis, norms, fidelity, and seeded
//! random states.
//!
//! All logarithms exposed from this module are base two; natural-log kernels
//! are converted at the boundary.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Asymmetry beyond this is a user error rather than float noise.
const HERMITICITY_REJECT: f64 = 1e-8;
/// Eigenvalues above `RANK_TOLERANCE * max_eig` count towards the support.
const RANK_TOLERANCE: f64 = 1e-9;
/// PSD / trace slack accepted on density operators.
const DENSITY_TOLERANCE: f64 = 1e-10;

pub type CMat = Array2<Complex64>;

/// Dense complex Hermitian matrix with declared subsystem dimensions.
///
/// Construction symmetrizes `(A + A†)/2` and rejects inputs whose asymmetry
/// exceeds `1e-8` before symmetrization. An empty `subsystem_dims` means the
/// operator carries no tensor structure.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMat,
    subsystem_dims: Vec<usize>,
}

impl HermitianOperator {
    pub fn new(mat: CMat, subsystem_dims: Vec<usize>) -> Result<Self> {
        let (r, c) = mat.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {r}x{c}, expected square"
            )));
        }
        if !subsystem_dims.is_empty() {
            let prod: usize = subsystem_dims.iter().product();
            if prod != r {
                return Err(Error::DimensionMismatch(format!(
                    "subsystem dims {subsystem_dims:?} do not multiply to {r}"
                )));
            }
            if subsystem_dims.iter().any(|&d| d == 0) {
                return Err(Error::InvalidArgument("zero subsystem dimension".into()));
            }
        }
        let adj = conj_transpose(&mat);
        let asym = (&mat - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > HERMITICITY_REJECT {
            return Err(Error::NotHermitian {
                asymmetry: asym,
                limit: HERMITICITY_REJECT,
            });
        }
        let sym = (&mat + &adj).mapv(|z| z * 0.5);
        Ok(Self {
            mat: sym,
            subsystem_dims,
        })
    }

    /// Unstructured Hermitian operator.
    pub fn unstructured(mat: CMat) -> Result<Self> {
        Self::new(mat, Vec::new())
    }

    /// The `n`-dimensional identity.
    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMat::eye(dim),
            subsystem_dims: Vec::new(),
        }
    }

    /// Zero operator.
    pub fn zero(dim: usize) -> Self {
        Self {
            mat: CMat::zeros((dim, dim)),
            subsystem_dims: Vec::new(),
        }
    }

    /// Diagonal operator from real entries.
    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMat::zeros((n, n));
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        Self {
            mat: m,
            subsystem_dims: Vec::new(),
        }
    }

    /// Rank-one projector `|v⟩⟨v| / ⟨v|v⟩`.
    pub fn projector(v: &Array1<Complex64>) -> Self {
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let n = v.len();
        let mut m = CMat::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i] * v[j].conj() / n2;
            }
        }
        Self {
            mat: m,
            subsystem_dims: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn subsystem_dims(&self) -> &[usize] {
        &self.subsystem_dims
    }

    /// Replace the declared tensor structure.
    pub fn with_subsystems(mut self, dims: Vec<usize>) -> Result<Self> {
        if !dims.is_empty() && dims.iter().product::<usize>() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "subsystem dims {dims:?} do not multiply to {}",
                self.dim()
            )));
        }
        self.subsystem_dims = dims;
        Ok(self)
    }

    pub fn trace(&self) -> f64 {
        self.mat.diag().iter().map(|z| z.re).sum()
    }

    /// Hilbert-Schmidt inner product `tr[A B]`, real for Hermitian pairs.
    pub fn inner(&self, other: &Self) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.t().iter())
            .map(|(a, b)| (a * b).re)
            .sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            mat: self.mat.mapv(|z| z * c),
            subsystem_dims: self.subsystem_dims.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("operator sum".into()));
        }
        Ok(Self {
            mat: &self.mat + &other.mat,
            subsystem_dims: self.subsystem_dims.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Eigendecomposition; eigenvalues ascending, eigenvectors as columns
    /// satisfying `A = V diag(λ) V†`.
    pub fn eigh(&self) -> (Array1<f64>, CMat) {
        eigh_cmat(&self.mat)
    }

    pub fn eigenvalues(&self) -> Array1<f64> {
        self.eigh().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Kronecker product; resulting structure is the concatenation of both
    /// factors' structures (a factor with no declared structure contributes
    /// its full dimension).
    pub fn kron(&self, other: &Self) -> Self {
        let mat = kron_mat(&self.mat, &other.mat);
        let mut dims = if self.subsystem_dims.is_empty() {
            vec![self.dim()]
        } else {
            self.subsystem_dims.clone()
        };
        dims.extend(if other.subsystem_dims.is_empty() {
            vec![other.dim()]
        } else {
            other.subsystem_dims.clone()
        });
        Self {
            mat,
            subsystem_dims: dims,
        }
    }

    /// `n`-fold Kronecker power, `n ≥ 1`.
    pub fn tensor_power(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("tensor power with n = 0".into()));
        }
        let mut out = self.clone();
        for _ in 1..n {
            out = out.kron(self);
        }
        Ok(out)
    }

    /// Transpose of the chosen tensor factor (1-based index).
    pub fn partial_transpose(&self, subsystem_index: usize) -> Result<Self> {
        let dims = self.require_structure()?;
        let k = check_index(subsystem_index, dims.len())?;
        let mut out = CMat::zeros((self.dim(), self.dim()));
        let strides = index_strides(&dims);
        for (ri, row) in MultiIndex::new(&dims).enumerate() {
            for (ci, col) in MultiIndex::new(&dims).enumerate() {
                // swap the k-th digit between row and column
                let mut r2 = row.clone();
                let mut c2 = col.clone();
                std::mem::swap(&mut r2[k], &mut c2[k]);
                let ri2 = flatten(&r2, &strides);
                let ci2 = flatten(&c2, &strides);
                out[(ri2, ci2)] = self.mat[(ri, ci)];
            }
        }
        Ok(Self {
            mat: out,
            subsystem_dims: dims,
        })
    }

    /// Trace over the chosen tensor factor (1-based index).
    pub fn partial_trace(&self, subsystem_index: usize) -> Result<Self> {
        let dims = self.require_structure()?;
        let k = check_index(subsystem_index, dims.len())?;
        let kept: Vec<usize> = dims
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, &d)| d)
            .collect();
        let out_dim: usize = kept.iter().product::<usize>().max(1);
        let mut out = CMat::zeros((out_dim, out_dim));
        let strides = index_strides(&dims);
        let kept_strides = index_strides(&kept);
        for (ri, row) in MultiIndex::new(&dims).enumerate() {
            let rk: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, &d)| d)
                .collect();
            let ro = flatten(&rk, &kept_strides);
            for (ci, col) in MultiIndex::new(&dims).enumerate() {
                if row[k] != col[k] {
                    continue;
                }
                let ck: Vec<usize> = col
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != k)
                    .map(|(_, &d)| d)
                    .collect();
                let co = flatten(&ck, &kept_strides);
                out[(ro, co)] += self.mat[(ri, ci)];
            }
            let _ = strides;
        }
        Ok(Self {
            mat: out,
            subsystem_dims: if kept.len() > 1 { kept } else { Vec::new() },
        })
    }

    /// Apply `f` to the eigenvalues in an eigenbasis.
    ///
    /// `Log` is base two and, like `InverseOnSupport`, acts on the support:
    /// eigenvalues below the rank tolerance map to zero. The caller is
    /// responsible for support checks.
    pub fn matrix_function(&self, f: MatrixFunction) -> Result<Self> {
        let (vals, vecs) = self.eigh();
        let max = vals.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
        let cut = RANK_TOLERANCE * max.max(1e-300);
        if matches!(
            f,
            MatrixFunction::Log | MatrixFunction::Sqrt | MatrixFunction::InverseOnSupport
        ) {
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            if min < -1e-8 * max.max(1.0) {
                return Err(Error::NotPsd { min_eig: min });
            }
        }
        let mapped: Vec<f64> = vals
            .iter()
            .map(|&v| match f {
                MatrixFunction::Exp => v.exp2(),
                MatrixFunction::Log => {
                    if v > cut {
                        v.log2()
                    } else {
                        0.0
                    }
                }
                MatrixFunction::Sqrt => {
                    if v > cut {
                        v.sqrt()
                    } else {
                        0.0
                    }
                }
                MatrixFunction::InverseOnSupport => {
                    if v > cut {
                        1.0 / v
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        let out = reconstruct(&vecs, &mapped);
        Ok(Self {
            mat: out,
            subsystem_dims: self.subsystem_dims.clone(),
        })
    }

    /// Matrix square root on the support (natural scale, no base conversion).
    pub fn sqrtm(&self) -> Result<Self> {
        self.matrix_function(MatrixFunction::Sqrt)
    }

    /// Trace norm, the sum of absolute eigenvalues.
    pub fn trace_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|v| v.abs()).sum()
    }

    /// Spectral norm, the largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Orthogonal projector onto eigenspaces above the rank tolerance.
    pub fn support_projector(&self) -> Self {
        let (vals, vecs) = self.eigh();
        let max = vals.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
        let cut = RANK_TOLERANCE * max.max(1e-300);
        let mapped: Vec<f64> = vals.iter().map(|&v| if v > cut { 1.0 } else { 0.0 }).collect();
        Self {
            mat: reconstruct(&vecs, &mapped),
            subsystem_dims: self.subsystem_dims.clone(),
        }
    }

    /// Rank at the support tolerance.
    pub fn support_rank(&self) -> usize {
        let vals = self.eigenvalues();
        let max = vals.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
        let cut = RANK_TOLERANCE * max.max(1e-300);
        vals.iter().filter(|&&v| v > cut).count()
    }

    fn require_structure(&self) -> Result<Vec<usize>> {
        if self.subsystem_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "operation requires at least two declared subsystems".into(),
            ));
        }
        Ok(self.subsystem_dims.clone())
    }
}

/// Matrix functions applied through the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFunction {
    /// Base-two logarithm on the support.
    Log,
    /// Base-two exponential `2^A`.
    Exp,
    Sqrt,
    InverseOnSupport,
}

/// Positive semidefinite, unit-trace Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(HermitianOperator);

impl DensityOperator {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let min = op.min_eigenvalue();
        if min < -DENSITY_TOLERANCE {
            return Err(Error::NotDensity(format!("min eigenvalue {min:.3e}")));
        }
        let tr = op.trace();
        if (tr - 1.0).abs() > DENSITY_TOLERANCE {
            return Err(Error::NotDensity(format!("trace {tr}")));
        }
        Ok(Self(op))
    }

    /// Pure state from an (unnormalized) ket.
    pub fn pure(v: &Array1<Complex64>) -> Self {
        Self(HermitianOperator::projector(v))
    }

    /// Maximally mixed state.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self(HermitianOperator::identity(dim).scale(1.0 / dim as f64))
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.0
    }

    pub fn into_op(self) -> HermitianOperator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn with_subsystems(self, dims: Vec<usize>) -> Result<Self> {
        Ok(Self(self.0.with_subsystems(dims)?))
    }
}

impl std::ops::Deref for DensityOperator {
    type Target = HermitianOperator;
    fn deref(&self) -> &HermitianOperator {
        &self.0
    }
}

/// Completely positive map given by Kraus operators.
///
/// `trace_preserving` channels must satisfy `Σ K_i† K_i = I`; plain CP maps
/// carry no completeness requirement.
#[derive(Debug, Clone)]
pub struct QuantumChannel {
    kraus: Vec<CMat>,
    dim_in: usize,
    dim_out: usize,
    trace_preserving: bool,
}

impl QuantumChannel {
    pub fn new(kraus: Vec<CMat>, trace_preserving: bool) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidArgument("channel needs Kraus operators".into()));
        }
        let (dim_out, dim_in) = kraus[0].dim();
        for k in &kraus {
            if k.dim() != (dim_out, dim_in) {
                return Err(Error::DimensionMismatch("inconsistent Kraus shapes".into()));
            }
        }
        if trace_preserving {
            let mut acc = CMat::zeros((dim_in, dim_in));
            for k in &kraus {
                acc = acc + conj_transpose(k).dot(k);
            }
            let dev = (&acc - &CMat::eye(dim_in))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if dev > 1e-10 {
                return Err(Error::NotTracePreserving(dev));
            }
        }
        Ok(Self {
            kraus,
            dim_in,
            dim_out,
            trace_preserving,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kraus: vec![CMat::eye(dim)],
            dim_in: dim,
            dim_out: dim,
            trace_preserving: true,
        }
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    /// Apply the map to a Hermitian operator.
    pub fn apply(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        if x.dim() != self.dim_in {
            return Err(Error::DimensionMismatch("channel input".into()));
        }
        let mut out = CMat::zeros((self.dim_out, self.dim_out));
        for k in &self.kraus {
            let t = k.dot(x.matrix()).dot(&conj_transpose(k));
            out = out + t;
        }
        HermitianOperator::new(out, Vec::new())
    }

    /// Apply `N ⊗ N ⊗ … ⊗ N` (m factors) to an operator on the input power space.
    pub fn apply_power(&self, x: &HermitianOperator, m: usize) -> Result<HermitianOperator> {
        if x.dim() != self.dim_in.pow(m as u32) {
            return Err(Error::DimensionMismatch("channel power input".into()));
        }
        // Apply factor by factor; after applying to factor j the operator lives on
        // out^j ⊗ in^(m-j-1) ⊗ out-of-factor... we instead apply in sequence via
        // reshaping: treat factor j, contract Kraus on that index.
        let mut cur = x.matrix().clone();
        let mut dims_row: Vec<usize> = vec![self.dim_in; m];
        for j in 0..m {
            cur = apply_kraus_on_factor(&cur, &dims_row, j, &self.kraus, self.dim_out);
            dims_row[j] = self.dim_out;
        }
        HermitianOperator::new(cur, Vec::new())
    }
}

/// Quantum fidelity `F(ρ,σ) = ‖√ρ √σ‖₁`, symmetric in its arguments.
pub fn fidelity(rho: &HermitianOperator, sigma: &HermitianOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch("fidelity".into()));
    }
    for (name, op) in [("rho", rho), ("sigma", sigma)] {
        let min = op.min_eigenvalue();
        if min < -1e-8 * op.spectral_norm().max(1.0) {
            return Err(Error::NotPsd { min_eig: min })
                .map_err(|e| Error::InvalidArgument(format!("{name}: {e}")));
        }
    }
    let s1 = rho.sqrtm()?;
    let m = s1.matrix().dot(sigma.matrix()).dot(s1.matrix());
    let m = HermitianOperator::new(m, Vec::new())?;
    Ok(m.eigenvalues()
        .iter()
        .map(|&v| if v > 0.0 { v.sqrt() } else { 0.0 })
        .sum())
}

/// Random rank-`r` density operator from the Hilbert-Schmidt ensemble,
/// `ρ = GG†/tr(GG†)` with `G` a seeded `dim×rank` standard complex Gaussian.
pub fn random_density(dim: usize, rank: usize, seed: u64) -> Result<DensityOperator> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} out of range for dimension {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_ginibre(&mut rng, dim, rank);
    let gg = g.dot(&conj_transpose(&g));
    let tr: f64 = gg.diag().iter().map(|z| z.re).sum();
    let op = HermitianOperator::new(gg.mapv(|z| z / tr), Vec::new())?;
    DensityOperator::new(op)
}

/// Standard complex Gaussian matrix from the given generator.
pub fn random_ginibre<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_shape_fn((rows, cols), |_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    })
}

/// Seeded Haar-random unitary via QR of a Ginibre matrix.
pub fn random_unitary(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_ginibre(&mut rng, dim, dim);
    gram_schmidt(&g)
}

/// Random Hermitian operator with i.i.d. Gaussian entries (GUE-like scale).
pub fn random_hermitian(dim: usize, seed: u64) -> HermitianOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_ginibre(&mut rng, dim, dim);
    let h = (&g + &conj_transpose(&g)).mapv(|z| z * 0.5);
    HermitianOperator::new(h, Vec::new()).expect("symmetrized")
}

/// Maximally entangled state `Φ_d` on `d ⊗ d` as a density operator.
pub fn max_entangled(d: usize) -> DensityOperator {
    let mut v = Array1::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = Complex64::new(1.0, 0.0);
    }
    DensityOperator::pure(&v)
        .with_subsystems(vec![d, d])
        .expect("d*d structure")
}

/// Computational basis ket `|k⟩` in dimension `d`.
pub fn basis_ket(d: usize, k: usize) -> Array1<Complex64> {
    let mut v = Array1::zeros(d);
    v[k] = Complex64::new(1.0, 0.0);
    v
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

/// Matrix JSON format used by the CLI and tests: row-major `re`/`im` parts,
/// `im` optional.
#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsystems: Vec<usize>,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn from_operator(op: &HermitianOperator) -> Self {
        let n = op.dim();
        let re = (0..n)
            .map(|i| (0..n).map(|j| op.matrix()[(i, j)].re).collect())
            .collect();
        let im_mat: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| op.matrix()[(i, j)].im).collect())
            .collect();
        let has_im = im_mat.iter().flatten().any(|&x| x != 0.0);
        Self {
            dim: n,
            subsystems: op.subsystem_dims().to_vec(),
            re,
            im: if has_im { Some(im_mat) } else { None },
        }
    }

    pub fn to_operator(&self) -> Result<HermitianOperator> {
        let n = self.dim;
        let check = |m: &Vec<Vec<f64>>, name: &str| -> Result<()> {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} part is not {n}x{n}"
                )));
            }
            Ok(())
        };
        check(&self.re, "re")?;
        if let Some(im) = &self.im {
            check(im, "im")?;
        }
        let mat = CMat::from_shape_fn((n, n), |(i, j)| {
            Complex64::new(
                self.re[i][j],
                self.im.as_ref().map_or(0.0, |m| m[i][j]),
            )
        });
        HermitianOperator::new(mat, self.subsystems.clone())
    }
}

// ---------------------------------------------------------------------------
// Shared matrix helpers
// ---------------------------------------------------------------------------

pub(crate) fn conj_transpose(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

/// Hermitian eigendecomposition of a complex matrix, `A = V diag(λ) V†`.
///
/// LAPACK sees the row-major buffer as its transpose, so the raw call
/// diagonalizes `conj(A)`; conjugating the returned vectors restores the
/// usual convention. Pinned by `eigh_reconstructs`.
pub(crate) fn eigh_cmat(m: &CMat) -> (Array1<f64>, CMat) {
    let (vals, vecs) = m.eigh(UPLO::Lower).expect("hermitian eigendecomposition");
    (vals, vecs.mapv(|z| z.conj()))
}

pub(crate) fn kron_mat(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

fn reconstruct(vecs: &CMat, vals: &[f64]) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|z| z * v);
    }
    let mut out = scaled.dot(&conj_transpose(vecs));
    // clean float dust off hermiticity
    let adj = conj_transpose(&out);
    out = (&out + &adj).mapv(|z| z * 0.5);
    let _ = n;
    out
}

fn gram_schmidt(g: &CMat) -> CMat {
    let (n, m) = g.dim();
    let mut q = g.clone();
    for j in 0..m {
        for k in 0..j {
            let col_k = q.column(k).to_owned();
            let proj: Complex64 = col_k
                .iter()
                .zip(q.column(j).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let update: Vec<Complex64> =
                q.column(j).iter().zip(col_k.iter()).map(|(b, a)| b - proj * a).collect();
            for (i, u) in update.into_iter().enumerate() {
                q[(i, j)] = u;
            }
        }
        let norm: f64 = q.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        q.column_mut(j).mapv_inplace(|z| z / norm);
    }
    let _ = n;
    q
}

fn apply_kraus_on_factor(
    x: &CMat,
    dims: &[usize],
    factor: usize,
    kraus: &[CMat],
    dim_out: usize,
) -> CMat {
    let m = dims.len();
    let left: usize = dims[..factor].iter().product();
    let d = dims[factor];
    let right: usize = dims[factor + 1..].iter().product();
    let out_dim = left * dim_out * right;
    let mut out = CMat::zeros((out_dim, out_dim));
    // index layout: (l, f, r) row-major with strides
    for k in kraus {
        // apply K on the factor: Y = (I ⊗ K ⊗ I) X (I ⊗ K† ⊗ I)
        let mut t = CMat::zeros((out_dim, x.ncols()));
        for l in 0..left {
            for r in 0..right {
                for fo in 0..dim_out {
                    for fi in 0..d {
                        let coef = k[(fo, fi)];
                        if coef == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let src_row = (l * d + fi) * right + r;
                        let dst_row = (l * dim_out + fo) * right + r;
                        for c in 0..x.ncols() {
                            t[(dst_row, c)] += coef * x[(src_row, c)];
                        }
                    }
                }
            }
        }
        // right multiply by K† on the same factor of the column index
        for l in 0..left {
            for r in 0..right {
                for fo in 0..dim_out {
                    for fi in 0..d {
                        let coef = k[(fo, fi)].conj();
                        if coef == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let src_col = (l * d + fi) * right + r;
                        let dst_col = (l * dim_out + fo) * right + r;
                        for rr in 0..out_dim {
                            out[(rr, dst_col)] += t[(rr, src_col)] * coef;
                        }
                    }
                }
            }
        }
    }
    let _ = m;
    out
}

fn check_index(idx_1based: usize, len: usize) -> Result<usize> {
    if idx_1based == 0 || idx_1based > len {
        return Err(Error::InvalidArgument(format!(
            "subsystem index {idx_1based} out of range 1..={len}"
        )));
    }
    Ok(idx_1based - 1)
}

fn index_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

fn flatten(idx: &[usize], strides: &[usize]) -> usize {
    idx.iter().zip(strides).map(|(i, s)| i * s).sum()
}

struct MultiIndex {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl MultiIndex {
    fn new(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            next: Some(vec![0; dims.len()]),
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.clone()?;
        let mut n = cur.clone();
        let mut i = self.dims.len();
        loop {
            if i == 0 {
                self.next = None;
                break;
            }
            i -= 1;
            n[i] += 1;
            if n[i] < self.dims[i] {
                self.next = Some(n);
                break;
            }
            n[i] = 0;
        }
        Some(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_dev(a: &CMat, b: &CMat) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn construction_symmetrizes_and_rejects() {
        let m = CMat::from_shape_fn((2, 2), |(i, j)| c((i + 2 * j) as f64, 0.0));
        // asymmetry 1.0 -> rejected
        assert!(HermitianOperator::unstructured(m).is_err());
        let almost = CMat::from_shape_vec(
            (2, 2),
            vec![c(1.0, 0.0), c(0.5, 1e-10), c(0.5, -3e-10), c(2.0, 0.0)],
        )
        .unwrap();
        let h = HermitianOperator::unstructured(almost).unwrap();
        let dev = max_dev(&conj_transpose(h.matrix()), h.matrix());
        assert!(dev < 1e-12);
    }

    #[test]
    fn kron_identity_and_diag_cases() {
        let i2 = HermitianOperator::identity(2);
        let out = i2.kron(&i2);
        assert_eq!(out.dim(), 4);
        assert!(max_dev(out.matrix(), &CMat::eye(4)) == 0.0);
        assert_eq!(out.subsystem_dims(), &[2, 2]);

        let a = HermitianOperator::diagonal(&[1.0, 0.0]);
        let b = HermitianOperator::diagonal(&[0.0, 1.0]);
        let ab = a.kron(&b);
        let expect = HermitianOperator::diagonal(&[0.0, 1.0, 0.0, 0.0]);
        assert!(max_dev(ab.matrix(), expect.matrix()) == 0.0);
    }

    #[test]
    fn kron_block_structure_oracle() {
        // |0⟩⟨0| ⊗ ρ -> upper-left block is ρ; computed by direct indexing
        let rho = random_density(2, 2, 7).unwrap();
        let p0 = HermitianOperator::projector(&basis_ket(2, 0));
        let out = p0.kron(rho.op());
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    out.matrix()[(i, j)].re,
                    rho.matrix()[(i, j)].re,
                    epsilon = 1e-15
                );
                assert_abs_diff_eq!(
                    out.matrix()[(i, j)].im,
                    rho.matrix()[(i, j)].im,
                    epsilon = 1e-15
                );
                assert_eq!(out.matrix()[(i + 2, j + 2)], c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn kron_associativity() {
        // dyadic entries make the float products exact, so equality is bitwise
        let dyadic = |dim: usize, shift: i32| {
            let m = CMat::from_shape_fn((dim, dim), |(i, j)| {
                c(
                    ((i * dim + j) as f64 - shift as f64) / 16.0,
                    ((i as f64) - (j as f64)) / 8.0,
                )
            });
            let adj = conj_transpose(&m);
            HermitianOperator::unstructured((&m + &adj).mapv(|z| z * 0.5)).unwrap()
        };
        let a = dyadic(2, 1);
        let b = dyadic(3, 2);
        let d = dyadic(2, 0);
        let left = a.kron(&b).kron(&d);
        let right = a.kron(&b.kron(&d));
        assert_eq!(left.matrix(), right.matrix());
    }

    #[test]
    fn eigh_reconstructs() {
        let a = random_hermitian(5, 9);
        let (vals, vecs) = a.eigh();
        let mut scaled = vecs.clone();
        for (j, &v) in vals.iter().enumerate() {
            scaled.column_mut(j).mapv_inplace(|z| z * v);
        }
        let rec = scaled.dot(&conj_transpose(&vecs));
        let dev = max_dev(&rec, a.matrix());
        assert!(dev < 1e-12, "eigenvector convention drifted: {dev:.3e}");
    }

    #[test]
    fn tensor_power_contract() {
        let rho = random_density(3, 3, 11).unwrap();
        assert!(rho.op().tensor_power(0).is_err());
        let p1 = rho.op().tensor_power(1).unwrap();
        assert!(max_dev(p1.matrix(), rho.matrix()) == 0.0);

        let d = HermitianOperator::diagonal(&[0.3, 0.7]);
        let d2 = d.tensor_power(2).unwrap();
        let expect = HermitianOperator::diagonal(&[0.09, 0.21, 0.21, 0.49]);
        assert!(max_dev(d2.matrix(), expect.matrix()) < 1e-15);

        let p3 = rho.op().tensor_power(3).unwrap();
        assert_abs_diff_eq!(p3.trace(), rho.trace().powi(3), epsilon = 1e-10);
    }

    #[test]
    fn partial_transpose_product_and_involution() {
        let a = random_hermitian(2, 21);
        let b = random_hermitian(3, 22);
        let ab = a.kron(&b);
        let pt = ab.partial_transpose(2).unwrap();
        let bt = HermitianOperator::new(b.matrix().t().to_owned(), Vec::new()).unwrap();
        let expect = a.kron(&bt);
        assert!(max_dev(pt.matrix(), expect.matrix()) < 1e-14);

        let x = random_hermitian(6, 23).with_subsystems(vec![2, 3]).unwrap();
        let twice = x.partial_transpose(2).unwrap().partial_transpose(2).unwrap();
        assert!(max_dev(twice.matrix(), x.matrix()) == 0.0);

        assert!(random_hermitian(4, 4).partial_transpose(1).is_err());
    }

    #[test]
    fn partial_transpose_max_entangled() {
        let phi = max_entangled(2);
        let pt = phi.op().partial_transpose(2).unwrap();
        let mut eigs: Vec<f64> = pt.eigenvalues().to_vec();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = [-0.5, 0.5, 0.5, 0.5];
        for (e, x) in eigs.iter().zip(expect) {
            assert_abs_diff_eq!(*e, x, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(pt.trace_norm(), 2.0, epsilon = 1e-12);
        // trace and trace norm preserved on PSD ⊗ PSD
        let p = random_density(2, 2, 31).unwrap();
        let q = random_density(2, 1, 32).unwrap();
        let prod = p.op().kron(q.op());
        let ptp = prod.partial_transpose(2).unwrap();
        assert_abs_diff_eq!(ptp.trace(), prod.trace(), epsilon = 1e-12);
        assert_abs_diff_eq!(ptp.trace_norm(), prod.trace_norm(), epsilon = 1e-10);
    }

    #[test]
    fn partial_trace_cases() {
        let a = random_hermitian(2, 41);
        let b = random_hermitian(3, 42);
        let ab = a.kron(&b);
        let ta = ab.partial_trace(2).unwrap();
        let expect = a.scale(b.trace());
        assert!(max_dev(ta.matrix(), expect.matrix()) < 1e-13);

        let phi = max_entangled(3);
        let marg = phi.op().partial_trace(2).unwrap();
        let expect = HermitianOperator::identity(3).scale(1.0 / 3.0);
        assert!(max_dev(marg.matrix(), expect.matrix()) < 1e-13);

        let x = random_hermitian(6, 43).with_subsystems(vec![2, 3]).unwrap();
        assert_abs_diff_eq!(x.partial_trace(1).unwrap().trace(), x.trace(), epsilon = 1e-12);
    }

    #[test]
    fn matrix_functions() {
        let id = HermitianOperator::identity(3);
        let l = id.matrix_function(MatrixFunction::Log).unwrap();
        assert!(max_dev(l.matrix(), &CMat::zeros((3, 3))) == 0.0);

        let d = HermitianOperator::diagonal(&[4.0, 9.0]);
        let s = d.sqrtm().unwrap();
        assert!(max_dev(s.matrix(), HermitianOperator::diagonal(&[2.0, 3.0]).matrix()) < 1e-12);

        let a = random_density(4, 4, 51).unwrap();
        let log = a.matrix_function(MatrixFunction::Log).unwrap();
        let back = log.matrix_function(MatrixFunction::Exp).unwrap();
        assert!(max_dev(back.matrix(), a.matrix()) < 1e-10);
    }

    #[test]
    fn matrix_function_unitary_covariance() {
        for seed in 0..5u64 {
            let a = random_density(4, 4, 100 + seed).unwrap();
            let u = random_unitary(4, 200 + seed);
            let uau = HermitianOperator::new(
                u.dot(a.matrix()).dot(&conj_transpose(&u)),
                Vec::new(),
            )
            .unwrap();
            for f in [MatrixFunction::Log, MatrixFunction::Sqrt, MatrixFunction::Exp] {
                let lhs = uau.matrix_function(f).unwrap();
                let rhs = HermitianOperator::new(
                    u.dot(a.matrix_function(f).unwrap().matrix())
                        .dot(&conj_transpose(&u)),
                    Vec::new(),
                )
                .unwrap();
                assert!(max_dev(lhs.matrix(), rhs.matrix()) < 1e-10, "{f:?}");
            }
        }
    }

    #[test]
    fn norms_trivial_cases() {
        let d = HermitianOperator::diagonal(&[1.0, -1.0]);
        assert_abs_diff_eq!(d.trace_norm(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.spectral_norm(), 1.0, epsilon = 1e-14);
        let rho = random_density(5, 3, 61).unwrap();
        assert_abs_diff_eq!(rho.trace_norm(), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn support_projector_cases() {
        let mm = DensityOperator::maximally_mixed(4);
        let p = mm.support_projector();
        assert!(max_dev(p.matrix(), &CMat::eye(4)) < 1e-12);

        let pure = DensityOperator::pure(&basis_ket(3, 0));
        let p = pure.support_projector();
        assert!(max_dev(p.matrix(), pure.matrix()) < 1e-12);

        for seed in 0..20u64 {
            let rank = 1 + (seed as usize % 4);
            let rho = random_density(4, rank, 300 + seed).unwrap();
            assert_eq!(rho.support_rank(), rank, "seed {seed}");
        }
    }

    #[test]
    fn fidelity_cases() {
        let rho = random_density(3, 3, 71).unwrap();
        assert_abs_diff_eq!(fidelity(&rho, &rho).unwrap(), 1.0, epsilon = 1e-9);

        let p0 = HermitianOperator::projector(&basis_ket(2, 0));
        let p1 = HermitianOperator::projector(&basis_ket(2, 1));
        assert_abs_diff_eq!(fidelity(&p0, &p1).unwrap(), 0.0, epsilon = 1e-12);

        let mm = DensityOperator::maximally_mixed(2);
        assert_abs_diff_eq!(
            fidelity(&p0, &mm).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-10
        );

        // symmetry (rank-deficient arguments square the conditioning, hence 1e-8)
        let sig = random_density(3, 2, 72).unwrap();
        assert_abs_diff_eq!(
            fidelity(&rho, &sig).unwrap(),
            fidelity(&sig, &rho).unwrap(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn random_density_contract() {
        let a = random_density(4, 4, 5).unwrap();
        assert!(a.min_eigenvalue() > 0.0);
        let b = random_density(4, 4, 5).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(random_density(3, 4, 1).is_err());
        assert!(random_density(3, 0, 1).is_err());

        for seed in 0..100u64 {
            let rank = 1 + (seed as usize % 4);
            let rho = random_density(4, rank, seed).unwrap();
            let count = rho.eigenvalues().iter().filter(|&&v| v > 1e-10).count();
            assert_eq!(count, rank, "seed {seed}");
        }
    }

    #[test]
    fn matrix_json_round_trip() {
        let op = random_hermitian(3, 81).with_subsystems(vec![]).unwrap();
        let j = MatrixJson::from_operator(&op);
        let s = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&s).unwrap();
        let op2 = back.to_operator().unwrap();
        assert!(max_dev(op.matrix(), op2.matrix()) == 0.0);

        // im omitted defaults to zero
        let real = r#"{"dim":2,"re":[[1.0,0.5],[0.5,0.0]]}"#;
        let parsed: MatrixJson = serde_json::from_str(real).unwrap();
        let op3 = parsed.to_operator().unwrap();
        assert_eq!(op3.matrix()[(0, 1)], c(0.5, 0.0));
    }
}
