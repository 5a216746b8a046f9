//! Quantum channels in Kraus form with an eagerly cached natural
//! representation `Φ̂ = Σ_α M_α ⊗ M_α*`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hs_algebra::{devectorize_unchecked, max_abs, sandwich, vectorize, Operator, SuperOp, ONE, ZERO};

/// Construction rejects Kraus sets whose completeness residual exceeds this.
pub const TP_CONSTRUCTION_TOL: f64 = 1e-8;

/// Tolerance behind the pass/fail flags of a [`ValidityReport`].
pub const VALIDITY_TOL: f64 = 1e-10;

/// Unitarity tolerance for Stinespring dilations.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct QuantumChannel {
    dim: usize,
    kraus: Vec<Operator>,
    natural: SuperOp,
}

/// Residuals of the three channel properties, with pass flags at
/// [`VALIDITY_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub trace_preserving: bool,
    pub tp_residual: f64,
    pub completely_positive: bool,
    pub min_choi_eigenvalue: f64,
    pub unital: bool,
    pub unital_residual: f64,
}

impl ValidityReport {
    pub fn all_ok(&self) -> bool {
        self.trace_preserving && self.completely_positive && self.unital
    }

    /// Names of the failed properties.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.trace_preserving {
            out.push("trace_preserving");
        }
        if !self.completely_positive {
            out.push("completely_positive");
        }
        if !self.unital {
            out.push("unital");
        }
        out
    }

    fn from_residuals(tp_residual: f64, min_choi_eigenvalue: f64, unital_residual: f64) -> Self {
        Self {
            trace_preserving: tp_residual <= VALIDITY_TOL,
            tp_residual,
            completely_positive: min_choi_eigenvalue >= -VALIDITY_TOL,
            min_choi_eigenvalue,
            unital: unital_residual <= VALIDITY_TOL,
            unital_residual,
        }
    }
}

fn kraus_completeness_residual(ops: &[Operator]) -> f64 {
    let d = ops[0].dim();
    let mut sum = DMatrix::<C64>::zeros(d, d);
    for m in ops {
        sum += m.matrix().adjoint() * m.matrix();
    }
    max_abs(&(sum - DMatrix::<C64>::identity(d, d)))
}

impl QuantumChannel {
    /// Channel `ρ ↦ Σ_α M_α ρ M_α†`; fails when `Σ M_α†M_α` deviates from the
    /// identity by more than [`TP_CONSTRUCTION_TOL`].
    pub fn from_kraus(ops: Vec<Operator>) -> Result<Self> {
        let ch = Self::from_kraus_unchecked(ops)?;
        let residual = kraus_completeness_residual(&ch.kraus);
        if residual > TP_CONSTRUCTION_TOL {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(ch)
    }

    /// Same as [`from_kraus`](Self::from_kraus) without the completeness
    /// check. Used to inspect invalid Kraus sets through [`validate`](Self::validate).
    pub fn from_kraus_unchecked(ops: Vec<Operator>) -> Result<Self> {
        let first = ops.first().ok_or(Error::Empty)?;
        let dim = first.dim();
        let mut natural = DMatrix::<C64>::zeros(dim * dim, dim * dim);
        for m in &ops {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
            natural += m.matrix().kronecker(&m.matrix().map(|z| z.conj()));
        }
        Ok(Self {
            dim,
            kraus: ops,
            natural: SuperOp::from_matrix_unchecked(natural, dim),
        })
    }

    /// Channel `ρ ↦ Tr_a[U (|ψ⟩⟨ψ| ⊗ ρ) U†]` with Kraus operators
    /// `M_α = ⟨α|U|ψ⟩_a`. The joint space is ordered `ancilla ⊗ system`.
    pub fn from_joint_unitary(u: &Operator, ancilla_init: &Operator, d_a: usize, d_s: usize) -> Result<Self> {
        if u.dim() != d_a * d_s {
            return Err(Error::DimensionMismatch {
                expected: d_a * d_s,
                got: u.dim(),
            });
        }
        if ancilla_init.dim() != d_a {
            return Err(Error::DimensionMismatch {
                expected: d_a,
                got: ancilla_init.dim(),
            });
        }
        let residual = u.unitarity_residual();
        if residual > UNITARY_TOL {
            return Err(Error::NotUnitary { what: "joint unitary", residual });
        }
        let purity = ancilla_init.purity();
        if !ancilla_init.is_psd(1e-10) || (ancilla_init.trace() - ONE).norm() > 1e-10 || (purity - 1.0).abs() > 1e-10 {
            return Err(Error::MixedAncilla { purity });
        }
        let (vals, vecs) = ancilla_init.eigh();
        let top = vals.len() - 1;
        let psi = vecs.column(top).into_owned();

        let um = u.matrix();
        let kraus = (0..d_a)
            .map(|alpha| {
                let m = DMatrix::from_fn(d_s, d_s, |s, t| (0..d_a).map(|b| um[(alpha * d_s + s, b * d_s + t)] * psi[b]).sum());
                Operator::from_matrix_unchecked(m)
            })
            .collect();
        Self::from_kraus(kraus)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_kraus(vec![Operator::identity(d)]).expect("identity is trace preserving")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[Operator] {
        &self.kraus
    }

    /// Natural representation `Φ̂`.
    pub fn natural(&self) -> &SuperOp {
        &self.natural
    }

    /// `max |Σ M_α†M_α − 𝕀|`.
    pub fn tp_residual(&self) -> f64 {
        kraus_completeness_residual(&self.kraus)
    }

    /// Choi matrix `Σ_kl |k⟩⟨l| ⊗ Φ(|k⟩⟨l|)`.
    pub fn choi(&self) -> Operator {
        choi_matrix(&self.natural)
    }

    pub fn validate(&self) -> ValidityReport {
        let unital = self.natural.apply_op(&Operator::identity(self.dim)).expect("dims agree");
        let unital_residual = (&unital - &Operator::identity(self.dim)).max_abs();
        ValidityReport::from_residuals(self.tp_residual(), self.choi().min_eigenvalue(), unital_residual)
    }

    /// `Φ^m(ρ)` by `m` matrix–vector products with `Φ̂`, symmetrized to be
    /// Hermitian.
    pub fn apply(&self, rho: &Operator, m: u64) -> Result<Operator> {
        apply_power(&self.natural, rho, m)
    }

    /// The full operator `Φ̂^m` by binary exponentiation.
    pub fn power(&self, m: u64) -> SuperOp {
        self.natural.pow(m)
    }

    /// `self ∘ other`: apply `other` first. Kraus set `{A_i B_j}`.
    pub fn compose(&self, other: &QuantumChannel) -> Result<QuantumChannel> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let kraus = self
            .kraus
            .iter()
            .flat_map(|a| other.kraus.iter().map(move |b| a * b))
            .collect();
        let natural = self.natural.compose(&other.natural)?;
        Ok(Self {
            dim: self.dim,
            kraus,
            natural,
        })
    }
}

/// `devec(S^m |ρ⟩⟩)` by repeated matrix–vector products, symmetrized.
pub fn apply_power(s: &SuperOp, rho: &Operator, m: u64) -> Result<Operator> {
    let d = s.hilbert_dim();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho.dim(),
        });
    }
    if m == 0 {
        return Ok(rho.clone());
    }
    let mut cur = vectorize(rho).into_vector();
    let mut next = DVector::<C64>::zeros(d * d);
    for _ in 0..m {
        next.gemv(ONE, s.matrix(), &cur, ZERO);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(devectorize_unchecked(&cur, d).hermitian_part())
}

/// Choi matrix of a superoperator by reshuffling its natural representation:
/// `J[(k,i),(l,j)] = Φ̂[(i,j),(k,l)]`.
pub fn choi_matrix(s: &SuperOp) -> Operator {
    let d = s.hilbert_dim();
    let n = s.matrix();
    let j = DMatrix::from_fn(d * d, d * d, |row, col| {
        let (k, i) = (row / d, row % d);
        let (l, jj) = (col / d, col % d);
        n[(i * d + jj, k * d + l)]
    });
    Operator::from_matrix_unchecked(j)
}

/// Validity residuals for a bare superoperator (e.g. a sum of conditional
/// maps). Trace preservation is read off `Φ̂†|𝕀⟩⟩ = |𝕀⟩⟩`.
pub fn validate_superop(s: &SuperOp) -> ValidityReport {
    let d = s.hilbert_dim();
    let id = vectorize(&Operator::identity(d)).into_vector();
    let tp = s.matrix().adjoint() * &id - &id;
    let tp_residual = tp.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let unital = s.matrix() * &id - &id;
    let unital_residual = unital.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    ValidityReport::from_residuals(tp_residual, choi_matrix(s).min_eigenvalue(), unital_residual)
}

/// Natural representation of a single Kraus branch, `M ⊗ M*`.
pub fn branch_superop(m: &Operator) -> SuperOp {
    sandwich(m, &m.adjoint()).expect("square operator")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hs_algebra::{matrix_exp, trace_distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_unitary(d: usize, rng: &mut impl Rng) -> Operator {
        let a = Operator::new(DMatrix::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))).unwrap();
        matrix_exp(&(&a.hermitian_part() * c(0.0, -1.0))).unwrap()
    }

    #[test]
    fn identity_channel() {
        let ch = QuantumChannel::from_kraus(vec![Operator::identity(3)]).unwrap();
        assert_eq!(ch.natural(), &SuperOp::identity(3));
        let r = ch.validate();
        assert!(r.all_ok());
        assert!(r.tp_residual < 1e-14 && r.unital_residual < 1e-14);
        assert!(r.min_choi_eigenvalue > -1e-14);
    }

    #[test]
    fn bit_flip_channel() {
        let ch = QuantumChannel::from_kraus(vec![Operator::pauli_x()]).unwrap();
        let out = ch.apply(&Operator::projector(2, 0), 1).unwrap();
        assert!((&out - &Operator::projector(2, 1)).max_abs() < 1e-15);
        let twice = ch.compose(&ch).unwrap();
        assert!((twice.natural().max_abs() - 1.0).abs() < 1e-15);
        assert!(max_abs(&(twice.natural().matrix() - SuperOp::identity(2).matrix())) < 1e-14);
    }

    #[test]
    fn rejects_bad_kraus_sets() {
        assert!(matches!(QuantumChannel::from_kraus(vec![]), Err(Error::Empty)));
        assert!(matches!(
            QuantumChannel::from_kraus(vec![Operator::identity(2), Operator::identity(3)]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            QuantumChannel::from_kraus(vec![Operator::identity(2) * 1.1]),
            Err(Error::NotTracePreserving { .. })
        ));
    }

    #[test]
    fn dephasing_is_valid_and_unital() {
        let s = 0.5f64.sqrt();
        let ch = QuantumChannel::from_kraus(vec![Operator::identity(2) * s, Operator::pauli_z() * s]).unwrap();
        assert!(ch.validate().all_ok());
    }

    #[test]
    fn scaled_identity_fails_trace_preservation() {
        let ch = QuantumChannel::from_kraus_unchecked(vec![Operator::identity(2) * 1.1]).unwrap();
        let r = ch.validate();
        assert!(!r.trace_preserving);
        // ‖1.21·𝕀 − 𝕀‖_max
        assert!((r.tp_residual - 0.21).abs() < 1e-12);
        assert_eq!(r.failures(), vec!["trace_preserving", "unital"]);
    }

    #[test]
    fn non_cp_superop_is_flagged() {
        // transpose map: CPTP-looking but not completely positive
        let d = 2;
        let t = DMatrix::from_fn(4, 4, |row, col| {
            let (i, j) = (row / d, row % d);
            let (k, l) = (col / d, col % d);
            if i == l && j == k { ONE } else { ZERO }
        });
        let r = validate_superop(&SuperOp::new(t).unwrap());
        assert!(r.trace_preserving && r.unital);
        assert!(!r.completely_positive);
        assert!((r.min_choi_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_unitary_identity_and_swap() {
        let anc = Operator::projector(2, 0);
        let ch = QuantumChannel::from_joint_unitary(&Operator::identity(4), &anc, 2, 2).unwrap();
        assert!(max_abs(&(ch.natural().matrix() - SuperOp::identity(2).matrix())) < 1e-14);

        let mut swap = DMatrix::<C64>::zeros(4, 4);
        for a in 0..2 {
            for s in 0..2 {
                swap[(s * 2 + a, a * 2 + s)] = ONE;
            }
        }
        let swap = Operator::new(swap).unwrap();
        let ch = QuantumChannel::from_joint_unitary(&swap, &anc, 2, 2).unwrap();
        let rho = Operator::from_real_rows(2, &[0.3, 0.1, 0.1, 0.7]).unwrap();
        let out = ch.apply(&rho, 1).unwrap();
        assert!((&out - &Operator::projector(2, 0)).max_abs() < 1e-14);
    }

    #[test]
    fn joint_unitary_rejects_mixed_ancilla_and_non_unitary() {
        let mixed = Operator::maximally_mixed(2);
        assert!(matches!(
            QuantumChannel::from_joint_unitary(&Operator::identity(4), &mixed, 2, 2),
            Err(Error::MixedAncilla { .. })
        ));
        let anc = Operator::projector(2, 0);
        assert!(matches!(
            QuantumChannel::from_joint_unitary(&(Operator::identity(4) * 2.0), &anc, 2, 2),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn apply_zero_rounds_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(3, &mut rng);
        let ch = QuantumChannel::from_kraus(vec![u]).unwrap();
        let rho = Operator::maximally_mixed(3);
        assert_eq!(ch.apply(&rho, 0).unwrap(), rho);
        assert!(ch.apply(&Operator::identity(2), 1).is_err());
    }

    #[test]
    fn compose_matches_natural_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = QuantumChannel::from_kraus(vec![random_unitary(3, &mut rng)]).unwrap();
        let b = QuantumChannel::from_kraus(vec![random_unitary(3, &mut rng)]).unwrap();
        let ab = a.compose(&b).unwrap();
        let product = a.natural().matrix() * b.natural().matrix();
        assert!(max_abs(&(ab.natural().matrix() - product)) < 1e-12);
        // Kraus-built natural rep agrees with the cached product
        let rebuilt = QuantumChannel::from_kraus(ab.kraus().to_vec()).unwrap();
        assert!(max_abs(&(rebuilt.natural().matrix() - ab.natural().matrix())) < 1e-12);

        let id = QuantumChannel::identity(3);
        let same = id.compose(&a).unwrap();
        assert!(max_abs(&(same.natural().matrix() - a.natural().matrix())) < 1e-14);
    }

    #[test]
    fn repeated_application_matches_loop_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(2, &mut rng);
        let v = random_unitary(2, &mut rng);
        let p = 0.3f64;
        let ch = QuantumChannel::from_kraus(vec![u * p.sqrt(), v * (1.0 - p).sqrt()]).unwrap();
        let rho0 = Operator::from_real_rows(2, &[0.75, 0.25, 0.25, 0.25]).unwrap();
        let mut looped = rho0.clone();
        for m in 1..=64u64 {
            looped = ch.apply(&looped, 1).unwrap();
            let direct = ch.apply(&rho0, m).unwrap();
            assert!((&direct - &looped).max_abs() < 1e-10);
            assert!((direct.trace() - ONE).norm() < 1e-10);
        }
        let via_power = ch.power(64).apply_op(&rho0).unwrap();
        assert!(trace_distance(&via_power.hermitian_part(), &looped).unwrap() < 1e-10);
    }
}
