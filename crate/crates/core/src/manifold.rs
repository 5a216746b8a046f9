//! Fixed-point structure of unital channels, the commutant of a Hamiltonian
//! pair, extreme metastable states with their dual observables, and the
//! metastable projector.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{validate_superop, QuantumChannel};
use crate::error::{Error, Result};
use crate::hs_algebra::{devectorize_unchecked, eigh, vectorize, Operator, SuperOp, ONE};
use crate::spectral::{hermitian_basis, MetastableRegion, SpectralData, DEFAULT_EPS_UNIT};

/// Commutation and fixed-point residual tolerance.
pub const COMMUTATION_TOL: f64 = 1e-8;

/// Singular values below this (relative to the largest) span the kernel.
const KERNEL_TOL: f64 = 1e-9;

/// Eigenvalue-1 tolerance used when collecting fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-8;

const GENERIC_SEED: u64 = 0x6d65_7461_7374_6162;
const GENERIC_ATTEMPTS: u64 = 16;

/// Basis of an operator algebra (fixed points or a commutant) together with
/// its minimal projections.
#[derive(Clone, Debug)]
pub struct FixedPointStructure {
    /// Hermitian basis; elements with nonzero trace are normalized to unit
    /// trace.
    pub basis: Vec<Operator>,
    /// Minimal projections `Π_j`, summing to `𝕀`.
    pub projections: Vec<Operator>,
    /// `rank Π_j`.
    pub block_dims: Vec<usize>,
    /// Unitary whose columns run through the ranges of `Π_1, Π_2, …` in
    /// order.
    pub transform: Operator,
    /// Dimension of the algebra as a vector space.
    pub algebra_dim: usize,
}

impl FixedPointStructure {
    /// Number of minimal projections `r`.
    pub fn r(&self) -> usize {
        self.projections.len()
    }

    /// `max ‖Π_j² − Π_j‖`, `‖Π_j† − Π_j‖` and `‖Σ Π_j − 𝕀‖` (max-norm).
    pub fn projection_residual(&self) -> f64 {
        let d = self.transform.dim();
        let mut sum = Operator::zeros(d);
        let mut worst = 0.0_f64;
        for p in &self.projections {
            worst = worst.max((&(p * p) - p).max_abs()).max(p.hermiticity_residual());
            sum = &sum + p;
        }
        worst.max((&sum - &Operator::identity(d)).max_abs())
    }
}

fn to_operators(vectors: Vec<DVector<C64>>, d: usize) -> Vec<Operator> {
    vectors.iter().map(|v| devectorize_unchecked(v, d).hermitian_part()).collect()
}

fn normalize_trace(op: Operator) -> Operator {
    let tr = op.trace().re;
    if tr.abs() > 1e-8 {
        &op * (1.0 / tr)
    } else {
        op
    }
}

/// Minimal projections of the *-algebra spanned by the Hermitian `basis`,
/// read off the eigenspaces of a generic element. An eigenspace projector
/// `Π` is accepted only if `Π X Π ∝ Π` for every basis element `X`.
fn minimal_projections(basis: &[Operator], d: usize) -> Result<(Vec<Operator>, Vec<usize>, Operator)> {
    if basis.is_empty() {
        return Err(Error::Empty);
    }
    for attempt in 0..GENERIC_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(GENERIC_SEED.wrapping_add(attempt));
        let mut generic = DMatrix::<C64>::zeros(d, d);
        for b in basis {
            generic += b.matrix() * C64::new(rng.random_range(-1.0..1.0), 0.0);
        }
        let (vals, vecs) = eigh(&generic);
        let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, v) in vals.iter().enumerate() {
            match groups.last_mut() {
                Some(g) if (v - vals[g[0]]).abs() <= 1e-7 * scale => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        let projections: Vec<Operator> = groups
            .iter()
            .map(|g| {
                let cols = DMatrix::from_fn(d, g.len(), |r, c| vecs[(r, g[c])]);
                Operator::from_matrix_unchecked(&cols * cols.adjoint())
            })
            .collect();
        let minimal = projections.iter().zip(&groups).all(|(p, g)| {
            basis.iter().all(|x| {
                let pxp = &(p * x) * p;
                let k = pxp.trace() / g.len() as f64;
                (&pxp - &(p * k)).max_abs() <= 1e-7 * x.max_abs().max(1.0)
            })
        });
        if minimal {
            let order: Vec<usize> = groups.iter().flatten().copied().collect();
            let w = DMatrix::from_fn(d, d, |r, c| vecs[(r, order[c])]);
            let dims = groups.iter().map(Vec::len).collect();
            return Ok((projections, dims, Operator::from_matrix_unchecked(w)));
        }
    }
    Err(Error::Inconsistent("no generic element separated the minimal projections".into()))
}

fn structure_from_basis(basis: Vec<Operator>, d: usize) -> Result<FixedPointStructure> {
    let algebra_dim = basis.len();
    let (projections, block_dims, transform) = minimal_projections(&basis, d)?;
    // an abelian algebra is spanned by its minimal projections, which give
    // the most readable basis
    let basis = if projections.len() == algebra_dim {
        projections.iter().map(|p| normalize_trace(p.clone())).collect()
    } else {
        basis
            .into_iter()
            .map(|b| {
                let b = if b.trace().re < -1e-8 { -b } else { b };
                normalize_trace(b)
            })
            .collect()
    };
    Ok(FixedPointStructure {
        basis,
        projections,
        block_dims,
        transform,
        algebra_dim,
    })
}

/// Fixed points of a unital channel: the eigenvalue-1 right eigenspace,
/// verified against the commutant criterion (every fixed point commutes with
/// every Kraus operator).
pub fn fixed_point_space(sd: &SpectralData, ch: &QuantumChannel) -> Result<FixedPointStructure> {
    let d = ch.dim();
    if sd.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: sd.dim() });
    }
    let report = validate_superop(ch.natural());
    if report.unital_residual > COMMUTATION_TOL {
        return Err(Error::NotUnital {
            residual: report.unital_residual,
        });
    }
    let vectors: Vec<DVector<C64>> = sd
        .eigenvalues()
        .iter()
        .zip(sd.right())
        .filter(|(l, _)| (**l - ONE).norm() <= FIXED_POINT_TOL)
        .map(|(_, r)| r.vector().clone())
        .collect();
    if vectors.is_empty() {
        return Err(Error::Inconsistent("channel has no eigenvalue 1".into()));
    }
    let basis = hermitian_basis(&vectors, d).ok_or_else(|| Error::Inconsistent("fixed-point space is not closed under adjoint".into()))?;
    let basis = to_operators(basis, d);
    for b in &basis {
        let drift = (&ch.natural().apply_op(b)? - b).max_abs();
        let comm = ch.kraus().iter().map(|k| b.commutator(k).max_abs()).fold(0.0, f64::max);
        if drift > COMMUTATION_TOL || comm > COMMUTATION_TOL {
            return Err(Error::Inconsistent(format!(
                "fixed point violates the commutation criterion (drift {drift:.3e}, commutator {comm:.3e})"
            )));
        }
    }
    structure_from_basis(basis, d)
}

/// Commutant `{X : [X,B] = [X,C] = 0}` as the joint kernel of the two
/// commutator maps on operator space, with its minimal projections.
pub fn commutant_projections(b: &Operator, c: &Operator) -> Result<FixedPointStructure> {
    let d = b.dim();
    if c.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: c.dim() });
    }
    for (what, op) in [("B", b), ("C", c)] {
        let residual = op.hermiticity_residual();
        if residual > COMMUTATION_TOL {
            return Err(Error::NotHermitian { what, residual });
        }
    }
    let n = d * d;
    let id = DMatrix::<C64>::identity(d, d);
    // row-stacked: vec(XA) = (𝕀 ⊗ Aᵀ) vec X, vec(AX) = (A ⊗ 𝕀) vec X
    let comm_map = |a: &DMatrix<C64>| id.kronecker(&a.transpose()) - a.kronecker(&id);
    let mut k = DMatrix::<C64>::zeros(2 * n, n);
    k.rows_mut(0, n).copy_from(&comm_map(b.matrix()));
    k.rows_mut(n, n).copy_from(&comm_map(c.matrix()));
    let svd = k.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Inconsistent("SVD returned no right singular vectors".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max).max(1.0);
    let kernel: Vec<DVector<C64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= KERNEL_TOL * smax)
        .map(|(i, _)| DVector::from_fn(n, |j, _| v_t[(i, j)].conj()))
        .collect();
    if kernel.is_empty() {
        // the identity always commutes; an empty kernel means the solve failed
        return Err(Error::Inconsistent("commutant kernel is empty".into()));
    }
    let basis = hermitian_basis(&kernel, d).ok_or_else(|| Error::Inconsistent("commutant kernel is not closed under adjoint".into()))?;
    let basis = to_operators(basis, d);
    for x in &basis {
        let r = x.commutator(b).max_abs().max(x.commutator(c).max_abs());
        if r > COMMUTATION_TOL * x.max_abs().max(1.0) {
            return Err(Error::Inconsistent(format!("kernel element fails to commute ({r:.3e})")));
        }
    }
    structure_from_basis(basis, d)
}

/// Extreme metastable states `ρ_v` and dual observables `P_v` with
/// `Tr(P_v ρ_u) = δ_vu`.
#[derive(Clone, Debug)]
pub struct MetastableManifold {
    pub ems: Vec<Operator>,
    pub duals: Vec<Operator>,
    /// Normalization `√(⟨⟨L|L⟩⟩⟨⟨R|R⟩⟩)` of the one-dimensional construction.
    pub h: Option<f64>,
    pub c_max: Option<f64>,
    pub c_min: Option<f64>,
    /// Set when the states come from midpoint propagation rather than the
    /// exact one-dimensional construction.
    pub approximate: bool,
}

/// Residuals of the manifold contract.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldResiduals {
    pub duality: f64,
    pub dual_sum: f64,
    pub min_dual_eigenvalue: f64,
    pub min_purity: f64,
}

impl MetastableManifold {
    pub fn residuals(&self) -> ManifoldResiduals {
        let d = self.ems.first().map_or(1, Operator::dim);
        let mut duality = 0.0_f64;
        for (v, p) in self.duals.iter().enumerate() {
            for (u, rho) in self.ems.iter().enumerate() {
                let target = if u == v { 1.0 } else { 0.0 };
                duality = duality.max((rho.expectation(p) - target).abs());
            }
        }
        let sum = self.duals.iter().fold(Operator::zeros(d), |acc, p| &acc + p);
        ManifoldResiduals {
            duality,
            dual_sum: (&sum - &Operator::identity(d)).max_abs(),
            min_dual_eigenvalue: self.duals.iter().map(Operator::min_eigenvalue).fold(f64::INFINITY, f64::min),
            min_purity: self.ems.iter().map(Operator::purity).fold(f64::INFINITY, f64::min),
        }
    }

    /// Weights `p_v = Tr(P_v ρ)`.
    pub fn weights(&self, rho: &Operator) -> Vec<f64> {
        self.duals.iter().map(|p| rho.expectation(p)).collect()
    }
}

/// One-dimensional manifold from a Hermitian metastable mode pair:
/// `ρ_{1,2} = ρ_fix + (c^{M,m}/h) R`, `P_1 = (hL − c^m 𝕀)/Δc`,
/// `P_2 = (−hL + c^M 𝕀)/Δc`, where `c^{M,m}` are the extreme eigenvalues of
/// `L` and `h = √(⟨⟨L|L⟩⟩⟨⟨R|R⟩⟩)`.
pub fn ems_from_modes(rho_fix: &Operator, r: &Operator, l: &Operator) -> Result<MetastableManifold> {
    let d = rho_fix.dim();
    for op in [r, l] {
        if op.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: op.dim() });
        }
    }
    for (what, op) in [("R", r), ("L", l)] {
        let residual = op.hermiticity_residual();
        if residual > 1e-8 * op.max_abs().max(1.0) {
            return Err(Error::NotHermitian { what, residual });
        }
    }
    let r = r.hermitian_part();
    let l = l.hermitian_part();
    let h = l.hs_norm() * r.hs_norm();
    let (vals, _) = l.eigh();
    let c_min = vals[0];
    let c_max = vals[vals.len() - 1];
    let spread = c_max - c_min;
    if spread <= 1e-12 * c_max.abs().max(c_min.abs()).max(1.0) || h <= 0.0 {
        return Err(Error::DegenerateSpread(spread));
    }
    let id = Operator::identity(d);
    let ems = vec![rho_fix + &(&r * (c_max / h)), rho_fix + &(&r * (c_min / h))];
    let hl = &l * h;
    let duals = vec![(&hl - &(&id * c_min)) * (1.0 / spread), (&(&id * c_max) - &hl) * (1.0 / spread)];
    Ok(MetastableManifold {
        ems,
        duals,
        h: Some(h),
        c_max: Some(c_max),
        c_min: Some(c_min),
        approximate: false,
    })
}

/// Exact qubit manifold from the first metastable mode of a channel with a
/// single fixed point.
pub fn ems_qubit(sd: &SpectralData) -> Result<MetastableManifold> {
    if sd.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: sd.dim() });
    }
    if !sd.diagonalizable() {
        return Err(Error::NotDiagonalizable { cond: sd.cond_eigvec() });
    }
    let eigs = sd.eigenvalues();
    let n_fixed = eigs.iter().filter(|z| (**z - ONE).norm() <= DEFAULT_EPS_UNIT).count();
    if n_fixed != 1 {
        return Err(Error::Inconsistent(format!("expected exactly one fixed point, found {n_fixed}")));
    }
    if eigs[1].im.abs() > 1e-10 {
        return Err(Error::ComplexEigenvalue(eigs[1]));
    }
    ems_from_modes(&sd.right_op(0).hermitian_part(), &sd.right_op(1), &sd.left_op(1))
}

/// `Φ^{m*}(seed)` for each seed at the region midpoint `m*`.
pub fn ems_candidates(ch: &QuantumChannel, region: Option<&MetastableRegion>, seeds: &[Operator]) -> Result<Vec<Operator>> {
    let region = region.ok_or_else(|| Error::NoMetastableRegion("no metastable region for EMS candidates".into()))?;
    let m = region.midpoint();
    seeds.iter().map(|s| ch.apply(s, m)).collect()
}

/// Approximate manifold from `l` candidate states: duals are the
/// combinations of the leading `l` left eigenvectors biorthogonal to the
/// candidates.
pub fn manifold_from_candidates(sd: &SpectralData, region: &MetastableRegion, candidates: Vec<Operator>) -> Result<MetastableManifold> {
    let l = region.l;
    if candidates.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: candidates.len(),
        });
    }
    let vecs: Vec<_> = candidates.iter().map(vectorize).collect();
    let g = DMatrix::from_fn(l, l, |i, u| sd.left()[i].inner(&vecs[u]));
    let inv = g.try_inverse().ok_or_else(|| Error::Inconsistent("candidate overlaps are singular".into()))?;
    let d = sd.dim();
    let duals = (0..l)
        .map(|v| {
            let mut acc = DVector::<C64>::zeros(d * d);
            for i in 0..l {
                // P_v = Σ_i conj(G⁻¹_{vi}) L_i gives ⟨⟨P_v|ρ_u⟩⟩ = δ_vu
                acc += sd.left()[i].vector() * inv[(v, i)].conj();
            }
            devectorize_unchecked(&acc, d).hermitian_part()
        })
        .collect();
    Ok(MetastableManifold {
        ems: candidates,
        duals,
        h: None,
        c_max: None,
        c_min: None,
        approximate: true,
    })
}

/// `Σ_v |ρ_v⟩⟩⟨⟨P_v|`.
pub fn mm_projector(mm: &MetastableManifold) -> Result<SuperOp> {
    let first = mm.ems.first().ok_or(Error::Empty)?;
    if mm.duals.len() != mm.ems.len() {
        return Err(Error::DimensionMismatch {
            expected: mm.ems.len(),
            got: mm.duals.len(),
        });
    }
    let d = first.dim();
    let n = d * d;
    let mut m = DMatrix::<C64>::zeros(n, n);
    for (rho, p) in mm.ems.iter().zip(&mm.duals) {
        m += vectorize(rho).vector() * vectorize(p).vector().adjoint();
    }
    SuperOp::new(m)
}

/// `c_i = Tr(L_i† ρ)` for `i = 1..=l`.
pub fn metastable_coefficients(sd: &SpectralData, rho: &Operator, l: usize) -> Result<Vec<C64>> {
    if l == 0 || l > sd.len() {
        return Err(Error::IndexOutOfRange { index: l, lo: 1, hi: sd.len() });
    }
    if (rho.trace() - ONE).norm() > 1e-8 {
        return Err(Error::InvalidInput("state must have unit trace".into()));
    }
    let mut c = sd.coefficients(rho)?;
    c.truncate(l);
    Ok(c)
}
