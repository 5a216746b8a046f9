//! Spectral decomposition of a channel's natural representation,
//! eigenvalue classification, metastable-region detection and spectral
//! propagation of states.

use faer::Mat;
use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hs_algebra::{devectorize_unchecked, max_abs, vectorize, HsVector, Operator, SuperOp, I, ONE, ZERO};

/// Eigenvector matrices with a larger 2-norm condition number are treated as
/// defective.
pub const COND_LIMIT: f64 = 1e8;

/// Default tolerance for deciding that `|λ| = 1` or `λ = 1`.
pub const DEFAULT_EPS_UNIT: f64 = 1e-10;

/// Eigenvalues closer than this are treated as one degenerate cluster.
const CLUSTER_TOL: f64 = 1e-9;

/// `|Im λ|` below this counts as a real eigenvalue.
const REAL_TOL: f64 = 1e-10;

/// Post-processed eigenvectors must satisfy `Av = λv` to this relative
/// residual; otherwise the solver's vectors are kept.
pub const EIGVEC_TOL: f64 = 1e-8;

/// Conjugate partners must match to this tolerance.
pub const PAIR_TOL: f64 = 1e-10;

/// Automatic truncation only considers `|λ_l|` above this.
const MIN_METASTABLE_MODULUS: f64 = 0.5;

/// Biorthonormal eigendecomposition `Φ̂ = Σ λ_i |R_i⟩⟩⟨⟨L_i|`, sorted by
/// decreasing `|λ|` (ties: decreasing real part, then increasing imaginary
/// part).
#[derive(Clone, Debug)]
pub struct SpectralData {
    dim: usize,
    eigenvalues: Vec<C64>,
    right: Vec<HsVector>,
    left: Vec<HsVector>,
    cond_eigvec: f64,
    diagonalizable: bool,
}

impl SpectralData {
    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn right(&self) -> &[HsVector] {
        &self.right
    }

    /// Left eigenvectors; empty when the eigenvector matrix was singular.
    pub fn left(&self) -> &[HsVector] {
        &self.left
    }

    pub fn cond_eigvec(&self) -> f64 {
        self.cond_eigvec
    }

    pub fn diagonalizable(&self) -> bool {
        self.diagonalizable
    }

    /// `R_i` as an operator (0-based index).
    pub fn right_op(&self, i: usize) -> Operator {
        devectorize_unchecked(self.right[i].vector(), self.dim)
    }

    /// `L_i` as an operator (0-based index).
    pub fn left_op(&self, i: usize) -> Operator {
        devectorize_unchecked(self.left[i].vector(), self.dim)
    }

    fn require_diagonalizable(&self) -> Result<()> {
        if !self.diagonalizable || self.left.len() != self.right.len() {
            return Err(Error::NotDiagonalizable { cond: self.cond_eigvec });
        }
        Ok(())
    }

    /// `c_i = ⟨⟨L_i|ρ⟩⟩ = Tr(L_i† ρ)` for every mode.
    pub fn coefficients(&self, rho: &Operator) -> Result<Vec<C64>> {
        self.require_diagonalizable()?;
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rho.dim(),
            });
        }
        let v = vectorize(rho);
        Ok(self.left.iter().map(|l| l.inner(&v)).collect())
    }

    /// `max_ij |⟨⟨L_i|R_j⟩⟩ − δ_ij|`.
    pub fn biorthonormality_residual(&self) -> f64 {
        if self.left.len() != self.right.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for (i, l) in self.left.iter().enumerate() {
            for (j, r) in self.right.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((l.inner(r) - target).norm());
            }
        }
        worst
    }

    /// `Σ λ_i |R_i⟩⟩⟨⟨L_i|`.
    pub fn reconstruct(&self) -> Result<SuperOp> {
        self.require_diagonalizable()?;
        let n = self.len();
        let mut m = DMatrix::<C64>::zeros(n, n);
        for ((lam, r), l) in self.eigenvalues.iter().zip(&self.right).zip(&self.left) {
            m += (r.vector() * *lam) * l.vector().adjoint();
        }
        Ok(SuperOp::from_matrix_unchecked(m, self.dim))
    }

    /// Injects a decomposition assembled elsewhere. Lengths must agree and
    /// each vector must have length `d²`.
    pub fn from_parts(dim: usize, eigenvalues: Vec<C64>, right: Vec<HsVector>, left: Vec<HsVector>) -> Result<Self> {
        let n = dim * dim;
        if eigenvalues.len() != n || right.len() != n || left.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: eigenvalues.len().min(right.len()).min(left.len()),
            });
        }
        if let Some(bad) = right.iter().chain(&left).find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
        }
        let v = DMatrix::from_fn(n, n, |i, j| right[j].vector()[i]);
        let cond = condition_number(&v);
        Ok(Self {
            dim,
            eigenvalues,
            right,
            left,
            cond_eigvec: cond,
            diagonalizable: cond <= COND_LIMIT,
        })
    }
}

fn sort_key(z: C64) -> (i64, i64, i64) {
    let q = |x: f64| (x * 1e9).round() as i64;
    (-q(z.norm()), -q(z.re), q(z.im))
}

fn orthonormalize(vectors: &mut [DVector<C64>]) {
    for k in 0..vectors.len() {
        let original = vectors[k].clone();
        let mut v = original.clone();
        for _ in 0..2 {
            for prev in &vectors[..k] {
                let proj = prev.dotc(&v);
                v -= prev * proj;
            }
        }
        let norm = v.norm();
        // a collapsed vector signals a defective cluster; keep the solver's
        // vector so the condition number exposes it
        vectors[k] = if norm > 1e-8 { v / C64::new(norm, 0.0) } else { original };
    }
}

/// Hermitian and anti-Hermitian parts of `devec(v)` as vectors.
fn hermitian_candidates(v: &DVector<C64>, d: usize) -> [DVector<C64>; 2] {
    let a = devectorize_unchecked(v, d);
    let h1 = a.hermitian_part();
    let h2 = (&a - &a.adjoint()) * C64::new(0.0, -0.5);
    [vectorize(&h1).into_vector(), vectorize(&h2).into_vector()]
}

/// Fixes the overall sign of a Hermitian mode: the first clearly nonzero
/// diagonal entry (falling back to any entry in row-major order) is made
/// positive.
fn fix_sign(v: &mut DVector<C64>, d: usize) {
    let scale = v.norm().max(f64::MIN_POSITIVE);
    let pivot = (0..d)
        .map(|i| v[i * d + i].re)
        .find(|x| x.abs() > 1e-8 * scale)
        .or_else(|| v.iter().map(|z| if z.re.abs() > z.im.abs() { z.re } else { z.im }).find(|x| x.abs() > 1e-8 * scale));
    if let Some(p) = pivot {
        if p < 0.0 {
            v.neg_mut();
        }
    }
}

/// Replaces a basis of a real-eigenvalue eigenspace with a Hermitian
/// orthonormal basis of the same span. The span is closed under `†` because
/// channels preserve Hermiticity.
pub(crate) fn hermitian_basis(vectors: &[DVector<C64>], d: usize) -> Option<Vec<DVector<C64>>> {
    let k = vectors.len();
    let mut basis: Vec<DVector<C64>> = Vec::with_capacity(k);
    for v in vectors {
        for cand in hermitian_candidates(v, d) {
            if basis.len() == k {
                break;
            }
            let mut w = cand;
            for _ in 0..2 {
                for b in &basis {
                    // b and w are Hermitian, so the overlap is real
                    let proj = b.dotc(&w).re;
                    w -= b * C64::new(proj, 0.0);
                }
            }
            let norm = w.norm();
            if norm > 1e-6 {
                basis.push(w / C64::new(norm, 0.0));
            }
        }
    }
    if basis.len() == k {
        Some(basis)
    } else {
        None
    }
}

/// `‖Av − λv‖ / ‖v‖`, relative to the scale of `A`.
fn eigen_residual(a: &DMatrix<C64>, lam: C64, v: &DVector<C64>) -> f64 {
    let scale = max_abs(a).max(1.0) * v.norm();
    (a * v - v * lam).norm() / scale
}

fn condition_number(v: &DMatrix<C64>) -> f64 {
    let mut normalized = v.clone();
    for mut col in normalized.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= C64::new(n, 0.0);
        }
    }
    let sv = normalized.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Full non-Hermitian eigendecomposition of `Φ̂` with biorthonormal left
/// vectors taken from the inverse of the right-eigenvector matrix.
///
/// Degenerate clusters are re-orthonormalized; real-eigenvalue eigenspaces
/// get Hermitian representatives, a lone fixed point is scaled to unit trace
/// and every other real mode to unit norm with a pinned sign.
pub fn spectral_decompose(phi: &SuperOp) -> Result<SpectralData> {
    let d = phi.hilbert_dim();
    let n = d * d;
    let src = phi.matrix();
    let a = Mat::<faer::c64>::from_fn(n, n, |i, j| {
        let z = src[(i, j)];
        faer::c64::new(z.re, z.im)
    });
    let evd = a.eigen().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut modes: Vec<(C64, DVector<C64>)> = (0..n)
        .map(|k| {
            let lam = C64::new(s[k].re, s[k].im);
            let v = DVector::from_fn(n, |i, _| {
                let z = u[(i, k)];
                C64::new(z.re, z.im)
            });
            (lam, v)
        })
        .collect();
    if modes.iter().any(|(l, v)| !l.re.is_finite() || !l.im.is_finite() || v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::Eigensolver("non-finite eigenpair".into()));
    }
    modes.sort_by_key(|(l, _)| sort_key(*l));

    let eigenvalues: Vec<C64> = modes.iter().map(|(l, _)| *l).collect();
    let mut vectors: Vec<DVector<C64>> = modes.into_iter().map(|(_, v)| v).collect();

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eigenvalues[end] - eigenvalues[start]).norm() <= CLUSTER_TOL {
            end += 1;
        }
        let lam = eigenvalues[start];
        let is_real = lam.im.abs() <= REAL_TOL;
        let cluster = &mut vectors[start..end];
        if cluster.len() > 1 {
            let gs = {
                let mut c = cluster.to_vec();
                orthonormalize(&mut c);
                c
            };
            if gs.iter().all(|v| eigen_residual(src, lam, v) <= EIGVEC_TOL) {
                cluster.clone_from_slice(&gs);
            }
        }
        let mut hermitian = false;
        if is_real {
            if let Some(basis) = hermitian_basis(cluster, d) {
                if basis.iter().all(|v| eigen_residual(src, lam, v) <= EIGVEC_TOL) {
                    cluster.clone_from_slice(&basis);
                    hermitian = true;
                }
            }
        }
        if hermitian {
            for v in cluster.iter_mut() {
                fix_sign(v, d);
            }
            let is_fixed = (lam - ONE).norm() <= DEFAULT_EPS_UNIT;
            if cluster.len() == 1 && is_fixed {
                let tr: C64 = (0..d).map(|i| cluster[0][i * d + i]).sum();
                if tr.norm() > 1e-8 {
                    cluster[0] /= tr;
                }
            }
        } else {
            for v in cluster.iter_mut() {
                let nv = v.norm();
                *v /= C64::new(nv, 0.0);
            }
        }
        start = end;
    }

    let v = DMatrix::from_fn(n, n, |i, j| vectors[j][i]);
    let residual = vectors.iter().zip(&eigenvalues).map(|(v, l)| eigen_residual(src, *l, v)).fold(0.0, f64::max);
    let cond = if residual <= EIGVEC_TOL { condition_number(&v) } else { f64::INFINITY };
    let right: Vec<HsVector> = vectors.into_iter().map(HsVector::from_vector_unchecked).collect();

    let left = match v.try_inverse() {
        Some(inv) if cond.is_finite() => (0..n)
            .map(|i| {
                let mut l = DVector::from_fn(n, |k, _| inv[(i, k)].conj());
                if eigenvalues[i].im.abs() <= REAL_TOL {
                    let h = devectorize_unchecked(&l, d);
                    if h.hermiticity_residual() <= 1e-6 * h.max_abs().max(1.0) {
                        l = vectorize(&h.hermitian_part()).into_vector();
                    }
                }
                HsVector::from_vector_unchecked(l)
            })
            .collect(),
        _ => Vec::new(),
    };

    Ok(SpectralData {
        dim: d,
        diagonalizable: cond <= COND_LIMIT && !left.is_empty(),
        eigenvalues,
        right,
        left,
        cond_eigvec: cond,
    })
}

/// Eigenvalues from a complex Schur form, computed independently of
/// [`spectral_decompose`] and sorted the same way.
pub fn eigenvalues_via_schur(phi: &SuperOp) -> Result<Vec<C64>> {
    let schur = Schur::try_new(phi.matrix().clone(), 1e-15, 100_000)
        .ok_or_else(|| Error::Eigensolver("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut vals: Vec<C64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    vals.sort_by_key(|z| sort_key(*z));
    Ok(vals)
}

/// Per-eigenvalue label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum EigenClass {
    Fixed,
    Rotating { phase: f64 },
    Metastable,
    Decaying,
}

impl EigenClass {
    pub fn label(&self) -> &'static str {
        match self {
            EigenClass::Fixed => "fixed",
            EigenClass::Rotating { .. } => "rotating",
            EigenClass::Metastable => "metastable",
            EigenClass::Decaying => "decaying",
        }
    }
}

/// Window `μ″ ≪ m ≪ μ′` bounded by the last retained mode `λ_l` and the first
/// discarded one `λ_{l+1}` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetastableRegion {
    /// Number of unimodular (fixed plus rotating) eigenvalues.
    pub n: usize,
    pub n_fixed: usize,
    pub l: usize,
    pub mu_prime: f64,
    pub mu_double_prime: f64,
    pub gap_ratio: f64,
}

impl MetastableRegion {
    /// Geometric midpoint `round(√(μ′ μ″))`, at least 1.
    pub fn midpoint(&self) -> u64 {
        ((self.mu_prime * self.mu_double_prime).sqrt().round() as u64).max(1)
    }

    fn from_spectrum(eigs: &[C64], n: usize, n_fixed: usize, l: usize) -> Self {
        let log_l = eigs[l - 1].norm().ln().abs();
        let log_next = eigs[l].norm().ln().abs();
        Self {
            n,
            n_fixed,
            l,
            mu_prime: 1.0 / log_l,
            mu_double_prime: 1.0 / log_next,
            gap_ratio: log_next / log_l,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumClassification {
    pub classes: Vec<EigenClass>,
    pub n_fixed: usize,
    pub n_unimodular: usize,
    /// `None` when no truncation with a real gap exists.
    pub region: Option<MetastableRegion>,
}

/// Labels eigenvalues and locates the metastable region.
///
/// Without `l`, the truncation maximizes `|ln|λ_{l+1}|| / |ln|λ_l||` over
/// `n < l < d²` with `|λ_l| > 1/2`; a manual `l` (`n ≤ l < d²`) bypasses the
/// gap search.
pub fn classify_spectrum(sd: &SpectralData, eps_unit: f64, l: Option<usize>) -> Result<SpectrumClassification> {
    sd.require_diagonalizable()?;
    let eigs = sd.eigenvalues();
    let total = eigs.len();
    let unimodular: Vec<bool> = eigs.iter().map(|z| (z.norm() - 1.0).abs() <= eps_unit).collect();
    let n = unimodular.iter().filter(|&&u| u).count();
    if unimodular.iter().take(n).any(|u| !u) {
        return Err(Error::Inconsistent("unimodular eigenvalues are not sorted first".into()));
    }
    let n_fixed = eigs.iter().filter(|z| (**z - ONE).norm() <= eps_unit).count();

    let region = match l {
        Some(l) => {
            if l < n.max(1) || l >= total {
                return Err(Error::IndexOutOfRange {
                    index: l,
                    lo: n.max(1),
                    hi: total.saturating_sub(1),
                });
            }
            Some(MetastableRegion::from_spectrum(eigs, n, n_fixed, l))
        }
        None => {
            let mut best: Option<MetastableRegion> = None;
            for cand in (n + 1)..total {
                if eigs[cand - 1].norm() <= MIN_METASTABLE_MODULUS {
                    continue;
                }
                let region = MetastableRegion::from_spectrum(eigs, n, n_fixed, cand);
                if region.gap_ratio > 1.0 + 1e-6 && best.as_ref().is_none_or(|b| region.gap_ratio > b.gap_ratio) {
                    best = Some(region);
                }
            }
            best
        }
    };

    let classes = eigs
        .iter()
        .enumerate()
        .map(|(i, z)| {
            if (*z - ONE).norm() <= eps_unit {
                EigenClass::Fixed
            } else if unimodular[i] {
                EigenClass::Rotating { phase: z.arg() }
            } else if region.as_ref().is_some_and(|r| i < r.l) {
                EigenClass::Metastable
            } else {
                EigenClass::Decaying
            }
        })
        .collect();

    Ok(SpectrumClassification {
        classes,
        n_fixed,
        n_unimodular: n,
        region,
    })
}

fn power(lam: C64, m: u64) -> C64 {
    if m == 0 {
        return ONE;
    }
    let r = lam.norm();
    if r == 0.0 {
        return ZERO;
    }
    C64::from_polar(r.powf(m as f64), lam.arg() * m as f64)
}

/// `Σ_{i ≤ l} c_i λ_i^m R_i` with `c_i = Tr(L_i†ρ)`; `truncate_to = None`
/// keeps the full spectrum.
pub fn propagate(sd: &SpectralData, rho: &Operator, m: u64, truncate_to: Option<usize>) -> Result<Operator> {
    let coeffs = sd.coefficients(rho)?;
    let l = truncate_to.unwrap_or(sd.len());
    if l == 0 || l > sd.len() {
        return Err(Error::IndexOutOfRange {
            index: l,
            lo: 1,
            hi: sd.len(),
        });
    }
    let n = sd.len();
    let mut acc = DVector::<C64>::zeros(n);
    for ((r, c), &lambda) in sd.right.iter().zip(coeffs).zip(&sd.eigenvalues).take(l) {
        acc += r.vector() * (c * power(lambda, m));
    }
    Ok(devectorize_unchecked(&acc, sd.dim).hermitian_part())
}

/// One real-basis term of a spectral expansion.
#[derive(Clone, Debug)]
pub enum RealMode {
    /// Real eigenvalue with Hermitian `R`, `L`; coefficient `Tr(Lρ) λ^m`.
    Real {
        index: usize,
        lambda: f64,
        right: Operator,
        left: Operator,
    },
    /// Conjugate pair `λ, λ*` (`lambda` has `Im ≥ 0`) combined into
    /// `R′₁ = R + R†` and `R′₂ = i(R − R†)` with coefficients
    /// `|c| |λ|^m cos(mφ + δ)` and `|c| |λ|^m sin(mφ + δ)`.
    Pair {
        indices: (usize, usize),
        lambda: C64,
        right_cos: Operator,
        right_sin: Operator,
        left: Operator,
    },
}

/// Amplitude and phase of a mode for a given state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseData {
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug)]
pub struct RealModeSet {
    pub modes: Vec<RealMode>,
}

impl RealModeSet {
    /// `(|c_j|, δ_j)` per mode; real modes report `|c|` and `0` or `π`.
    pub fn phase_data(&self, rho: &Operator) -> Vec<PhaseData> {
        self.modes
            .iter()
            .map(|mode| {
                let c = match mode {
                    RealMode::Real { left, .. } => C64::new(rho.expectation(left), 0.0),
                    RealMode::Pair { left, .. } => hs_inner_unchecked(left, rho),
                };
                PhaseData {
                    amplitude: c.norm(),
                    phase: c.arg(),
                }
            })
            .collect()
    }

    /// Real coefficients at round `m`: one entry per real mode, two
    /// (cosine, sine) per pair.
    pub fn coefficients(&self, rho: &Operator, m: u64) -> Vec<Vec<f64>> {
        self.modes
            .iter()
            .map(|mode| match mode {
                RealMode::Real { lambda, left, .. } => vec![rho.expectation(left) * power(C64::new(*lambda, 0.0), m).re],
                RealMode::Pair { lambda, left, .. } => {
                    let c = hs_inner_unchecked(left, rho);
                    let amp = c.norm() * lambda.norm().powf(m as f64);
                    let angle = lambda.arg() * m as f64 + c.arg();
                    vec![amp * angle.cos(), amp * angle.sin()]
                }
            })
            .collect()
    }

    /// `Σ_j c′_j(m) R′_j` over the modes of the set.
    pub fn propagate(&self, rho: &Operator, m: u64) -> Operator {
        let coeffs = self.coefficients(rho, m);
        let d = rho.dim();
        let mut acc = Operator::zeros(d);
        for (mode, c) in self.modes.iter().zip(coeffs) {
            match mode {
                RealMode::Real { right, .. } => acc = &acc + &(right * c[0]),
                RealMode::Pair { right_cos, right_sin, .. } => {
                    acc = &(&acc + &(right_cos * c[0])) + &(right_sin * c[1]);
                }
            }
        }
        acc
    }
}

fn hs_inner_unchecked(a: &Operator, b: &Operator) -> C64 {
    a.matrix().iter().zip(b.matrix().iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Rewrites the modes at `indices` (0-based) in a Hermitian basis, pairing
/// complex eigenvalues with their conjugates.
pub fn real_modes(sd: &SpectralData, indices: &[usize]) -> Result<RealModeSet> {
    sd.require_diagonalizable()?;
    for &i in indices {
        if i >= sd.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                lo: 0,
                hi: sd.len() - 1,
            });
        }
    }
    let eigs = sd.eigenvalues();
    let mut used = vec![false; indices.len()];
    let mut modes = Vec::new();
    for a in 0..indices.len() {
        if used[a] {
            continue;
        }
        used[a] = true;
        let i = indices[a];
        let lam = eigs[i];
        if lam.im.abs() <= REAL_TOL {
            modes.push(RealMode::Real {
                index: i,
                lambda: lam.re,
                right: sd.right_op(i).hermitian_part(),
                left: sd.left_op(i).hermitian_part(),
            });
            continue;
        }
        let partner = (0..indices.len()).find(|&b| !used[b] && (eigs[indices[b]] - lam.conj()).norm() <= PAIR_TOL);
        let Some(b) = partner else {
            return Err(Error::UnpairedEigenvalue(lam));
        };
        used[b] = true;
        let j = indices[b];
        let (upper, lower) = if lam.im > 0.0 { (i, j) } else { (j, i) };
        // re-gauge the partner as R† / L† so the pair sums to a Hermitian term
        let r = sd.right_op(upper);
        let rd = r.adjoint();
        modes.push(RealMode::Pair {
            indices: (upper, lower),
            lambda: eigs[upper],
            right_cos: &r + &rd,
            right_sin: (&r - &rd) * I,
            left: sd.left_op(upper),
        });
    }
    Ok(RealModeSet { modes })
}

/// `‖A − B‖_max` for two superoperators.
pub fn superop_distance(a: &SuperOp, b: &SuperOp) -> f64 {
    max_abs(&(a.matrix() - b.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::QuantumChannel;
    use crate::hs_algebra::{sandwich, trace_distance};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn diagonal_superop(vals: &[f64]) -> SuperOp {
        let m = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&v| c(v, 0.0))));
        SuperOp::new(m).unwrap()
    }

    /// `ρ ↦ p UρU† + (1−p) ZUρU†Z` with `U = diag(e^{-iθ/2}, e^{iθ/2})`:
    /// coherences pick up `(2p − 1) e^{∓iθ}`.
    fn rotating_dephaser(p: f64, theta: f64) -> QuantumChannel {
        let u = Operator::from_row_slice(2, &[C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0)]).unwrap();
        let zu = &Operator::pauli_z() * &u;
        QuantumChannel::from_kraus(vec![u * p.sqrt(), zu * (1.0 - p).sqrt()]).unwrap()
    }

    #[test]
    fn identity_channel_spectrum() {
        let sd = spectral_decompose(&SuperOp::identity(2)).unwrap();
        assert!(sd.diagonalizable());
        assert!(sd.eigenvalues().iter().all(|z| (*z - ONE).norm() < 1e-14));
        assert!(sd.biorthonormality_residual() < 1e-12);
        assert!((sd.cond_eigvec() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hand_built_region() {
        let sd = spectral_decompose(&diagonal_superop(&[1.0, 0.999, 0.5, 0.1])).unwrap();
        let cls = classify_spectrum(&sd, DEFAULT_EPS_UNIT, None).unwrap();
        let r = cls.region.unwrap();
        assert_eq!((r.n, r.l), (1, 2));
        assert!((r.mu_prime - 1.0 / 0.999f64.ln().abs()).abs() < 1e-9);
        assert!((r.mu_prime - 999.4998).abs() < 1e-3);
        assert!((r.mu_double_prime - 1.0 / 0.5f64.ln().abs()).abs() < 1e-9);
        assert!((r.gap_ratio - 692.8).abs() < 0.1);
        assert_eq!(cls.classes[0], EigenClass::Fixed);
        assert_eq!(cls.classes[1], EigenClass::Metastable);
        assert_eq!(cls.classes[2], EigenClass::Decaying);
    }

    #[test]
    fn manual_truncation_bounds() {
        let sd = spectral_decompose(&diagonal_superop(&[1.0, 0.999, 0.5, 0.1])).unwrap();
        assert!(classify_spectrum(&sd, DEFAULT_EPS_UNIT, Some(4)).is_err());
        assert!(classify_spectrum(&sd, DEFAULT_EPS_UNIT, Some(0)).is_err());
        let r = classify_spectrum(&sd, DEFAULT_EPS_UNIT, Some(3)).unwrap().region.unwrap();
        assert!((r.mu_prime - 1.0 / 0.5f64.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn pure_unitary_channel_has_no_region() {
        let sd = spectral_decompose(&SuperOp::identity(2)).unwrap();
        let cls = classify_spectrum(&sd, DEFAULT_EPS_UNIT, None).unwrap();
        assert!(cls.region.is_none());
        assert_eq!(cls.n_fixed, 4);
    }

    #[test]
    fn rotating_points_are_labelled() {
        // unitary z-rotation: eigenvalues 1, 1, e^{±iθ}
        let ch = rotating_dephaser(1.0, 0.3);
        let sd = spectral_decompose(ch.natural()).unwrap();
        let cls = classify_spectrum(&sd, DEFAULT_EPS_UNIT, None).unwrap();
        assert_eq!(cls.n_fixed, 2);
        assert_eq!(cls.n_unimodular, 4);
        let phases: Vec<f64> = cls
            .classes
            .iter()
            .filter_map(|c| if let EigenClass::Rotating { phase } = c { Some(*phase) } else { None })
            .collect();
        assert_eq!(phases.len(), 2);
        assert!(phases.iter().all(|p| (p.abs() - 0.3).abs() < 1e-12));
    }

    #[test]
    fn defective_superop_is_flagged() {
        let mut m = DMatrix::<C64>::identity(4, 4) * c(0.5, 0.0);
        m[(0, 0)] = ONE;
        m[(1, 2)] = ONE;
        let sd = spectral_decompose(&SuperOp::new(m).unwrap()).unwrap();
        assert!(!sd.diagonalizable());
        assert!(matches!(classify_spectrum(&sd, DEFAULT_EPS_UNIT, None), Err(Error::NotDiagonalizable { .. })));
        assert!(propagate(&sd, &Operator::identity(2), 1, None).is_err());
    }

    #[test]
    fn propagate_resolution_of_identity_and_truncation_errors() {
        let ch = rotating_dephaser(0.9, 0.7);
        let sd = spectral_decompose(ch.natural()).unwrap();
        let rho = Operator::from_row_slice(2, &[c(0.6, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(0.4, 0.0)]).unwrap();
        let back = propagate(&sd, &rho, 0, None).unwrap();
        assert!((&back - &rho).max_abs() < 1e-10);
        let mixed = Operator::maximally_mixed(2);
        for m in [1, 7, 100] {
            assert!((&propagate(&sd, &mixed, m, None).unwrap() - &mixed).max_abs() < 1e-12);
        }
        assert!(propagate(&sd, &rho, 1, Some(0)).is_err());
        assert!(propagate(&sd, &rho, 1, Some(5)).is_err());
    }

    #[test]
    fn conjugate_pair_real_modes() {
        let ch = rotating_dephaser(0.995, std::f64::consts::PI / 8.0);
        let sd = spectral_decompose(ch.natural()).unwrap();
        let all: Vec<usize> = (0..4).collect();
        let set = real_modes(&sd, &all).unwrap();
        let pairs: Vec<&RealMode> = set.modes.iter().filter(|m| matches!(m, RealMode::Pair { .. })).collect();
        assert_eq!(pairs.len(), 1);
        if let RealMode::Pair { lambda, right_cos, right_sin, .. } = pairs[0] {
            assert!((lambda.norm() - 0.99).abs() < 1e-12);
            assert!((lambda.arg() - std::f64::consts::PI / 8.0).abs() < 1e-12);
            assert!(right_cos.is_hermitian(1e-8));
            assert!(right_sin.is_hermitian(1e-8));
        }
        let rho = Operator::from_row_slice(2, &[c(0.7, 0.0), c(0.1, 0.3), c(0.1, -0.3), c(0.3, 0.0)]).unwrap();
        for m in [1u64, 5, 20] {
            let via_real = set.propagate(&rho, m);
            let via_complex = propagate(&sd, &rho, m, None).unwrap();
            assert!((&via_real - &via_complex).max_abs() < 1e-10);
        }
    }

    #[test]
    fn unpaired_complex_eigenvalue_is_rejected() {
        let ch = rotating_dephaser(0.995, 0.4);
        let sd = spectral_decompose(ch.natural()).unwrap();
        let complex_idx = (0..4).find(|&i| sd.eigenvalues()[i].im.abs() > 1e-3).unwrap();
        assert!(matches!(real_modes(&sd, &[complex_idx]), Err(Error::UnpairedEigenvalue(_))));
    }

    #[test]
    fn real_modes_pass_through_hermitian() {
        let s = 0.5f64.sqrt();
        let ch = QuantumChannel::from_kraus(vec![Operator::identity(2) * (0.9f64.sqrt()), Operator::pauli_x() * (0.1f64.sqrt())]).unwrap();
        let _ = s;
        let sd = spectral_decompose(ch.natural()).unwrap();
        assert!(sd.eigenvalues().iter().all(|z| z.im.abs() < 1e-12));
        let set = real_modes(&sd, &[0, 1, 2, 3]).unwrap();
        for mode in &set.modes {
            match mode {
                RealMode::Real { right, left, .. } => {
                    assert!(right.is_hermitian(1e-8));
                    assert!(left.is_hermitian(1e-8));
                }
                RealMode::Pair { .. } => panic!("no complex eigenvalues expected"),
            }
        }
    }

    #[test]
    fn schur_route_agrees() {
        let ch = rotating_dephaser(0.8, 1.1);
        let a = spectral_decompose(ch.natural()).unwrap();
        let b = eigenvalues_via_schur(ch.natural()).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(&b) {
            assert!((*x - *y).norm() < 1e-10);
        }
    }

    #[test]
    fn reconstruction_and_trace_of_decaying_modes() {
        let x = Operator::pauli_x();
        let y = Operator::pauli_y();
        let k0 = Operator::identity(2) * 0.8f64.sqrt();
        let k1 = &x * 0.15f64.sqrt();
        let k2 = &y * 0.05f64.sqrt();
        let ch = QuantumChannel::from_kraus(vec![k0, k1, k2]).unwrap();
        let sd = spectral_decompose(ch.natural()).unwrap();
        assert!(sd.biorthonormality_residual() < 1e-8);
        assert!(superop_distance(&sd.reconstruct().unwrap(), ch.natural()) < 1e-8);
        for (i, lam) in sd.eigenvalues().iter().enumerate() {
            if lam.norm() < 1.0 - 1e-10 {
                assert!(sd.right_op(i).trace().norm() < 1e-8);
            }
        }
        // fixed point is the unit-trace maximally mixed state with dual 𝕀
        assert!((&sd.right_op(0) - &Operator::maximally_mixed(2)).max_abs() < 1e-10);
        assert!((&sd.left_op(0) - &Operator::identity(2)).max_abs() < 1e-10);
        let rho = Operator::projector(2, 0);
        for m in 0..64 {
            let a = propagate(&sd, &rho, m, None).unwrap();
            let b = ch.apply(&rho, m).unwrap();
            assert!(trace_distance(&a, &b).unwrap() < 1e-8);
        }
        let _ = sandwich(&x, &x);
    }
}
