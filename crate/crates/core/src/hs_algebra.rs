//! Dense complex operators and the Hilbert–Schmidt (Liouville) space.
//!
//! Operators on a `d`-dimensional Hilbert space are mapped to `d²` vectors by
//! row stacking: the entry `a_ij` of `A` lands at position `i·d + j` of
//! `|A⟩⟩`. With this convention the superoperator `ρ ↦ X ρ Y` is the single
//! matrix `X ⊗ Yᵀ`, and every other module builds on that identity.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Absolute tolerance for Hermiticity and positivity predicates.
pub const HERMITIAN_TOL: f64 = 1e-8;

/// Eigenvalues of a PSD operator above `-PSD_CLAMP` are clamped to zero before
/// taking square roots; anything more negative is rejected.
pub const PSD_CLAMP: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Operator on a `d`-dimensional Hilbert space, stored as a dense `d×d`
/// complex matrix with entry `(i, j)` the coefficient of `|i⟩⟨j|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: DMatrix<C64>,
}

/// Which factor of an `ancilla ⊗ system` product to keep in a partial trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    Ancilla,
    System,
}

impl Operator {
    /// Wraps a square matrix with finite entries.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NonSquareMatrix {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("operator dimension must be at least 1".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { m })
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    /// Builds a `d×d` operator from row-major entries.
    pub fn from_row_slice(d: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    /// Builds an operator from real row-major entries.
    pub fn from_real_rows(d: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_slice(d, &c)
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d, d) }
    }

    /// `|i⟩⟨j|` in dimension `d`.
    pub fn ket_bra(d: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(d, d);
        m[(i, j)] = ONE;
        Self { m }
    }

    /// `|i⟩⟨i|` in dimension `d`.
    pub fn projector(d: usize, i: usize) -> Self {
        Self::ket_bra(d, i, i)
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure_state(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInput("state vector has zero or non-finite norm".into()));
        }
        let v = psi / C64::new(norm, 0.0);
        Ok(Self { m: &v * v.adjoint() })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::identity(d) * (1.0 / d as f64)
    }

    pub fn pauli_x() -> Self {
        Self { m: DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]) }
    }

    pub fn pauli_y() -> Self {
        Self { m: DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]) }
    }

    pub fn pauli_z() -> Self {
        Self { m: DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { m: self.m.transpose() }
    }

    pub fn conj(&self) -> Self {
        Self { m: self.m.map(|z| z.conj()) }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self { m: (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0) }
    }

    /// Largest entry modulus (the max norm used for all residuals).
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        max_abs(&(&self.m - self.m.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol
    }

    /// Hermitian within `tol` and no eigenvalue below `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && self.min_eigenvalue() >= -tol
    }

    pub fn unitarity_residual(&self) -> f64 {
        let d = self.dim();
        max_abs(&(self.m.adjoint() * &self.m - DMatrix::<C64>::identity(d, d)))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_residual() <= tol
    }

    /// Eigendecomposition of the Hermitian part, eigenvalues ascending with
    /// eigenvectors as matching columns.
    pub fn eigh(&self) -> (Vec<f64>, DMatrix<C64>) {
        eigh(&self.hermitian_part().m)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0.first().copied().unwrap_or(0.0)
    }

    /// `Re Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    /// `Re Tr(O ρ)` for an observable `O`.
    pub fn expectation(&self, observable: &Operator) -> f64 {
        (observable.matrix() * &self.m).trace().re
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Operator) -> Self {
        Self { m: &self.m * &other.m - &other.m * &self.m }
    }

    /// `A ⊗ B` with `A` the leading (most significant) factor.
    pub fn kron(&self, other: &Operator) -> Self {
        Self { m: self.m.kronecker(&other.m) }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { m: &self.m * c }
    }
}

impl From<Operator> for DMatrix<C64> {
    fn from(op: Operator) -> Self {
        op.m
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m + &rhs.m }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator { m: self.m + rhs.m }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m - &rhs.m }
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator { m: self.m - rhs.m }
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m * &rhs.m }
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator { m: self.m * rhs.m }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        Operator { m: &self.m * rhs }
    }
}

impl Mul<C64> for Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        Operator { m: self.m * rhs }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator { m: &self.m * C64::new(rhs, 0.0) }
    }
}

impl Mul<f64> for Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator { m: self.m * C64::new(rhs, 0.0) }
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { m: -self.m }
    }
}

/// Vector in Hilbert–Schmidt space, `|A⟩⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsVector {
    v: DVector<C64>,
}

impl HsVector {
    /// Wraps a vector whose length is a perfect square `d²`.
    pub fn new(v: DVector<C64>) -> Result<Self> {
        perfect_sqrt(v.len())?;
        Ok(Self { v })
    }

    pub(crate) fn from_vector_unchecked(v: DVector<C64>) -> Self {
        Self { v }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Dimension `d` of the underlying Hilbert space.
    pub fn hilbert_dim(&self) -> usize {
        perfect_sqrt(self.v.len()).expect("length checked on construction")
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.v
    }

    pub fn into_vector(self) -> DVector<C64> {
        self.v
    }

    /// `⟨⟨self|other⟩⟩ = Σ conj(a_k) b_k`.
    pub fn inner(&self, other: &HsVector) -> C64 {
        self.v.dotc(&other.v)
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }
}

/// Superoperator acting on `d²`-dimensional Hilbert–Schmidt space.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOp {
    m: DMatrix<C64>,
    d: usize,
}

impl SuperOp {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NonSquareMatrix {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let d = perfect_sqrt(m.nrows())?;
        if d == 0 {
            return Err(Error::InvalidInput("empty superoperator".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { m, d })
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>, d: usize) -> Self {
        debug_assert_eq!(m.nrows(), d * d);
        Self { m, d }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d * d, d * d), d }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d * d, d * d), d }
    }

    /// Hilbert-space dimension `d` (the matrix is `d²×d²`).
    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn apply(&self, v: &HsVector) -> Result<HsVector> {
        if v.len() != self.m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.m.ncols(),
                got: v.len(),
            });
        }
        Ok(HsVector { v: &self.m * &v.v })
    }

    /// Applies the superoperator to an operator, `devec(S |A⟩⟩)`.
    pub fn apply_op(&self, a: &Operator) -> Result<Operator> {
        let out = self.apply(&vectorize(a))?;
        Ok(devectorize_unchecked(&out.v, self.d))
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint(), d: self.d }
    }

    /// Matrix product `self · other` (apply `other` first).
    pub fn compose(&self, other: &SuperOp) -> Result<SuperOp> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        Ok(Self { m: &self.m * &other.m, d: self.d })
    }

    pub fn add(&self, other: &SuperOp) -> Result<SuperOp> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        Ok(Self { m: &self.m + &other.m, d: self.d })
    }

    /// `S^m` by binary exponentiation.
    pub fn pow(&self, mut m: u64) -> SuperOp {
        let n = self.m.nrows();
        let mut result = DMatrix::<C64>::identity(n, n);
        let mut base = self.m.clone();
        while m > 0 {
            if m & 1 == 1 {
                result = &result * &base;
            }
            m >>= 1;
            if m > 0 {
                base = &base * &base;
            }
        }
        Self { m: result, d: self.d }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }
}

fn perfect_sqrt(n: usize) -> Result<usize> {
    let r = (n as f64).sqrt().round() as usize;
    if r * r == n {
        Ok(r)
    } else {
        Err(Error::NotSquare(n))
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub(crate) fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Row-stacks `A` into `|A⟩⟩`.
pub fn vectorize(a: &Operator) -> HsVector {
    let d = a.dim();
    HsVector {
        v: DVector::from_fn(d * d, |k, _| a.m[(k / d, k % d)]),
    }
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &HsVector) -> Result<Operator> {
    let d = perfect_sqrt(v.len())?;
    Ok(devectorize_unchecked(&v.v, d))
}

pub(crate) fn devectorize_unchecked(v: &DVector<C64>, d: usize) -> Operator {
    Operator {
        m: DMatrix::from_fn(d, d, |i, j| v[i * d + j]),
    }
}

fn check_same_dim(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Hilbert–Schmidt inner product `Tr(A†B)`.
pub fn hs_inner(a: &Operator, b: &Operator) -> Result<C64> {
    check_same_dim(a, b)?;
    Ok(a.m.iter().zip(b.m.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// Natural representation `X ⊗ Yᵀ` of the map `ρ ↦ X ρ Y`.
pub fn sandwich(x: &Operator, y: &Operator) -> Result<SuperOp> {
    check_same_dim(x, y)?;
    Ok(SuperOp {
        m: x.m.kronecker(&y.m.transpose()),
        d: x.dim(),
    })
}

/// Partial trace of an `ancilla ⊗ system` operator.
pub fn partial_trace(rho_tot: &Operator, dims: (usize, usize), keep: Subsystem) -> Result<Operator> {
    let (da, ds) = dims;
    if da == 0 || ds == 0 || da * ds != rho_tot.dim() {
        return Err(Error::DimensionMismatch {
            expected: da * ds,
            got: rho_tot.dim(),
        });
    }
    let m = &rho_tot.m;
    let out = match keep {
        Subsystem::System => DMatrix::from_fn(ds, ds, |s, t| (0..da).map(|a| m[(a * ds + s, a * ds + t)]).sum()),
        Subsystem::Ancilla => DMatrix::from_fn(da, da, |a, b| (0..ds).map(|s| m[(a * ds + s, b * ds + s)]).sum()),
    };
    Ok(Operator { m: out })
}

/// Matrix exponential of a square operator (Padé scaling and squaring).
pub fn matrix_exp(a: &Operator) -> Result<Operator> {
    Ok(Operator { m: expm(&a.m)? })
}

pub(crate) fn expm(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(m.clone().exp())
}

/// Square root of a PSD operator via its Hermitian eigendecomposition.
pub fn psd_sqrt(a: &Operator) -> Result<Operator> {
    let (vals, vecs) = a.eigh();
    if let Some(&min) = vals.first() {
        if min < -PSD_CLAMP {
            return Err(Error::NotPsd {
                what: "operator",
                min_eigenvalue: min,
            });
        }
    }
    let roots = DVector::from_iterator(vals.len(), vals.iter().map(|&v| C64::new(v.max(0.0).sqrt(), 0.0)));
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * roots[j]);
    Ok(Operator { m: scaled * vecs.adjoint() })
}

fn check_state(rho: &Operator, what: &'static str) -> Result<()> {
    let residual = rho.hermiticity_residual();
    if residual > HERMITIAN_TOL {
        return Err(Error::NotHermitian { what, residual });
    }
    let min = rho.min_eigenvalue();
    if min < -HERMITIAN_TOL {
        return Err(Error::NotPsd {
            what,
            min_eigenvalue: min,
        });
    }
    let tr = rho.trace();
    if (tr - ONE).norm() > HERMITIAN_TOL {
        return Err(Error::InvalidInput(format!("{what} has trace {tr}, expected 1")));
    }
    Ok(())
}

/// Uhlmann fidelity `Tr √(√σ ρ √σ)` of two density operators.
pub fn fidelity(rho: &Operator, sigma: &Operator) -> Result<f64> {
    check_same_dim(rho, sigma)?;
    check_state(rho, "rho")?;
    check_state(sigma, "sigma")?;
    let s = psd_sqrt(&sigma.hermitian_part())?;
    let inner = (&(&s * rho) * &s).hermitian_part();
    let (vals, _) = inner.eigh();
    let f: f64 = vals.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Trace distance `½‖A − B‖₁` of two Hermitian operators.
pub fn trace_distance(a: &Operator, b: &Operator) -> Result<f64> {
    check_same_dim(a, b)?;
    let (vals, _) = (a - b).eigh();
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}
