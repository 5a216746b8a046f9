//! Concrete physical models: Ramsey-interferometry (RIM) channels, nuclear
//! spin-bath and decoupling Hamiltonians, and dissipative conditional maps.
//!
//! Physical units: frequencies are angular, in rad/ms (a quoted `f` kHz
//! enters as `2π f`), times in ms and distances in nm.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::{branch_superop, choi_matrix, validate_superop, QuantumChannel, ValidityReport};
use crate::error::{Error, Result};
use crate::hs_algebra::{expm, matrix_exp, Operator, SuperOp};

const HERMITIAN_INPUT_TOL: f64 = 1e-10;

/// Most spins a bath Hamiltonian may hold (dimension 32).
pub const MAX_SPINS: usize = 5;

/// ¹³C gyromagnetic ratio, rad s⁻¹ T⁻¹.
pub const GAMMA_C13: f64 = 2.0 * PI * 10.7084e6;

const MU0_OVER_4PI: f64 = 1e-7;
const HBAR: f64 = 1.054_571_817e-34;

/// `kHz → rad/ms`.
pub fn khz(f: f64) -> f64 {
    2.0 * PI * f
}

/// Larmor frequency in rad/ms for a field in gauss.
pub fn larmor_frequency(gyromagnetic: f64, field_gauss: f64) -> f64 {
    // rad/s/T · 1e-4 T/G · 1e-3 s/ms
    gyromagnetic * field_gauss * 1e-7
}

/// `μ₀ħγ²/4π` in rad ms⁻¹ nm³, so `D = prefactor / r³` with `r` in nm.
pub fn dipolar_prefactor(gyromagnetic: f64) -> f64 {
    MU0_OVER_4PI * HBAR * gyromagnetic * gyromagnetic * 1e27 * 1e-3
}

/// Pure-dephasing RIM model `H = σ_z ⊗ B + γ 𝕀 ⊗ C` with phase difference
/// `Δφ = φ₁ − φ₂` and interrogation time `t`.
#[derive(Clone, Debug)]
pub struct RimSpec {
    pub b: Operator,
    pub c: Operator,
    pub gamma: f64,
    pub delta_phi: f64,
    pub t: f64,
}

impl RimSpec {
    pub fn new(b: Operator, c: Operator, gamma: f64, delta_phi: f64, t: f64) -> Result<Self> {
        let spec = Self {
            b,
            c,
            gamma,
            delta_phi,
            t,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    fn check(&self) -> Result<()> {
        if self.c.dim() != self.b.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.b.dim(),
                got: self.c.dim(),
            });
        }
        for (what, op) in [("B", &self.b), ("C", &self.c)] {
            let residual = op.hermiticity_residual();
            if residual > HERMITIAN_INPUT_TOL {
                return Err(Error::NotHermitian { what, residual });
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be finite and non-negative, got {}", self.gamma)));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::InvalidInput(format!("t must be positive, got {}", self.t)));
        }
        if !self.delta_phi.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// `U_α = exp(−it[(−1)^α B + γC])`.
    pub fn branch_unitaries(&self) -> Result<[Operator; 2]> {
        let gc = &self.c * self.gamma;
        let minus_it = C64::new(0.0, -self.t);
        let u0 = matrix_exp(&((&self.b + &gc) * minus_it))?;
        let u1 = matrix_exp(&((&gc - &self.b) * minus_it))?;
        Ok([u0, u1])
    }
}

/// Outcome-resolved (unnormalized) maps `Ê_0`, `Ê_1` of one measurement
/// cycle; their sum is the channel.
#[derive(Clone, Debug)]
pub struct ConditionalMaps {
    maps: [SuperOp; 2],
    kraus: Option<[Operator; 2]>,
}

impl ConditionalMaps {
    /// Maps `M_α ⊗ M_α*` of a two-outcome Kraus pair.
    pub fn from_kraus(k0: Operator, k1: Operator) -> Result<Self> {
        if k1.dim() != k0.dim() {
            return Err(Error::DimensionMismatch {
                expected: k0.dim(),
                got: k1.dim(),
            });
        }
        let maps = [branch_superop(&k0), branch_superop(&k1)];
        Ok(Self {
            maps,
            kraus: Some([k0, k1]),
        })
    }

    pub fn from_superops(e0: SuperOp, e1: SuperOp) -> Result<Self> {
        if e0.hilbert_dim() != e1.hilbert_dim() {
            return Err(Error::DimensionMismatch {
                expected: e0.hilbert_dim(),
                got: e1.hilbert_dim(),
            });
        }
        Ok(Self { maps: [e0, e1], kraus: None })
    }

    pub fn dim(&self) -> usize {
        self.maps[0].hilbert_dim()
    }

    pub fn maps(&self) -> &[SuperOp; 2] {
        &self.maps
    }

    pub fn kraus(&self) -> Option<&[Operator; 2]> {
        self.kraus.as_ref()
    }

    /// `Ê_0 + Ê_1`.
    pub fn channel_superop(&self) -> SuperOp {
        self.maps[0].add(&self.maps[1]).expect("maps share a dimension")
    }

    /// The summed channel with its Kraus form when one is known.
    pub fn channel(&self) -> Option<QuantumChannel> {
        self.kraus
            .as_ref()
            .and_then(|[k0, k1]| QuantumChannel::from_kraus_unchecked(vec![k0.clone(), k1.clone()]).ok())
    }

    /// Smallest Choi eigenvalue over both branches.
    pub fn min_choi_eigenvalue(&self) -> f64 {
        self.maps.iter().map(|m| choi_matrix(m).min_eigenvalue()).fold(f64::INFINITY, f64::min)
    }

    /// Validity of the summed channel with complete positivity required of
    /// each branch separately.
    pub fn validate(&self) -> ValidityReport {
        let mut report = validate_superop(&self.channel_superop());
        let branch_min = self.min_choi_eigenvalue();
        report.min_choi_eigenvalue = report.min_choi_eigenvalue.min(branch_min);
        report.completely_positive = report.min_choi_eigenvalue >= -crate::channel::VALIDITY_TOL;
        report
    }
}

/// RIM channel: `M_α = [U_0 − (−1)^α e^{iΔφ} U_1]/2`, natural representation
/// `(Û_0 + Û_1)/2`.
pub fn rim_channel(spec: &RimSpec) -> Result<(QuantumChannel, ConditionalMaps)> {
    spec.check()?;
    let [u0, u1] = spec.branch_unitaries()?;
    let phase = C64::from_polar(1.0, spec.delta_phi);
    let u1p = &u1 * phase;
    let m0 = (&u0 - &u1p) * 0.5;
    let m1 = (&u0 + &u1p) * 0.5;
    let maps = ConditionalMaps::from_kraus(m0.clone(), m1.clone())?;
    let channel = QuantumChannel::from_kraus(vec![m0, m1])?;
    Ok((channel, maps))
}

/// Ancilla rotation `exp(−i(cos φ σ_x + sin φ σ_y)θ/2)`.
pub fn rotation(phi: f64, theta: f64) -> Operator {
    let (s, c) = (theta / 2.0).sin_cos();
    let off = |p: f64| C64::from_polar(s, p) * C64::new(0.0, -1.0);
    Operator::from_row_slice(2, &[C64::new(c, 0.0), off(-phi), off(phi), C64::new(c, 0.0)]).expect("2x2")
}

/// `σ⁻ = |1⟩⟨0|`, which takes `|0⟩` to `|1⟩`.
pub fn sigma_minus() -> Operator {
    Operator::ket_bra(2, 1, 0)
}

/// Joint Hamiltonian `σ_z ⊗ B + γ 𝕀 ⊗ C` on ancilla ⊗ target.
pub fn rim_hamiltonian(spec: &RimSpec) -> Operator {
    Operator::pauli_z().kron(&spec.b) + Operator::identity(2).kron(&(&spec.c * spec.gamma))
}

/// Stinespring data for one RIM cycle: the joint unitary
/// `(R_{φ₂}(π/2) ⊗ 𝕀)·exp(−iHt)` and the ancilla state `R_{φ₁}(π/2)|0⟩⟨0|R†`.
pub fn rim_joint_unitary(spec: &RimSpec, phi1: f64, phi2: f64) -> Result<(Operator, Operator)> {
    spec.check()?;
    let d = spec.dim();
    let evolve = matrix_exp(&(rim_hamiltonian(spec) * C64::new(0.0, -spec.t)))?;
    let u = &rotation(phi2, PI / 2.0).kron(&Operator::identity(d)) * &evolve;
    let prep = rotation(phi1, PI / 2.0);
    let psi = DVector::from_fn(2, |i, _| prep.get(i, 0));
    Ok((u, Operator::pure_state(&psi)?))
}

/// `K` nuclear spins-½ with hyperfine vectors (rad/ms), positions (nm),
/// Larmor frequency (rad/ms) and gyromagnetic ratio (rad s⁻¹ T⁻¹).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub hyperfine: Vec<[f64; 3]>,
    #[serde(default)]
    pub positions: Vec<[f64; 3]>,
    #[serde(default)]
    pub larmor: f64,
    #[serde(default = "default_gyromagnetic")]
    pub gyromagnetic: f64,
}

fn default_gyromagnetic() -> f64 {
    GAMMA_C13
}

impl SpinSystem {
    pub fn k(&self) -> usize {
        self.hyperfine.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.k()
    }

    fn check(&self, need_positions: bool) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::Empty);
        }
        if k > MAX_SPINS {
            return Err(Error::InvalidInput(format!("at most {MAX_SPINS} spins supported, got {k}")));
        }
        if need_positions && self.positions.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.positions.len(),
            });
        }
        let finite = self.hyperfine.iter().chain(&self.positions).flatten().all(|x| x.is_finite());
        if !finite || !self.larmor.is_finite() || !self.gyromagnetic.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Displacement `r_j − r_k`, its length and `D_jk = μ₀ħγ²/(4π r³)`.
    pub fn dipolar(&self, j: usize, k: usize) -> Result<([f64; 3], f64, f64)> {
        let (a, b) = (self.positions[j], self.positions[k]);
        let r = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if len <= 1e-12 {
            return Err(Error::CoincidentPositions(j, k));
        }
        Ok((r, len, dipolar_prefactor(self.gyromagnetic) / len.powi(3)))
    }
}

/// `σ_a/2` acting on `site` of `k` spins (site 0 is the leftmost factor).
pub fn spin_op(k: usize, site: usize, axis: usize) -> Operator {
    let s = match axis {
        0 => Operator::pauli_x(),
        1 => Operator::pauli_y(),
        _ => Operator::pauli_z(),
    } * 0.5;
    (0..k).fold(Operator::identity(1), |acc, i| acc.kron(if i == site { &s } else { &IDENTITY2 }))
}

static IDENTITY2: std::sync::LazyLock<Operator> = std::sync::LazyLock::new(|| Operator::identity(2));

fn weighted_sum(k: usize, terms: impl IntoIterator<Item = (usize, usize, f64)>) -> Operator {
    let d = 1 << k;
    terms
        .into_iter()
        .filter(|(_, _, w)| *w != 0.0)
        .fold(Operator::zeros(d), |acc, (site, axis, w)| &acc + &(spin_op(k, site, axis) * w))
}

/// `B = Σ_k A_k·I_k`, `C = Σ_{k<j} D_jk [I_k·I_j − 3(I_k·r̂)(I_j·r̂)]`, plus
/// `ω_L Σ_k I_k^z` when `include_zeeman`.
pub fn spin_bath_hamiltonians(sys: &SpinSystem, include_zeeman: bool) -> Result<(Operator, Operator)> {
    sys.check(true)?;
    let k = sys.k();
    let d = sys.dim();
    let b = weighted_sum(k, sys.hyperfine.iter().enumerate().flat_map(|(s, a)| (0..3).map(move |ax| (s, ax, a[ax]))));
    let ops: Vec<[Operator; 3]> = (0..k).map(|s| [spin_op(k, s, 0), spin_op(k, s, 1), spin_op(k, s, 2)]).collect();
    let mut c = Operator::zeros(d);
    for i in 0..k {
        for j in (i + 1)..k {
            let (r, len, dij) = sys.dipolar(i, j)?;
            let n = [r[0] / len, r[1] / len, r[2] / len];
            let dot = (0..3).fold(Operator::zeros(d), |acc, a| &acc + &(&ops[i][a] * &ops[j][a]));
            let proj = |s: usize| (0..3).fold(Operator::zeros(d), |acc, a| &acc + &(&ops[s][a] * n[a]));
            let term = &dot - &(&(&proj(i) * &proj(j)) * 3.0);
            c = &c + &(term * dij);
        }
    }
    if include_zeeman {
        c = &c + &weighted_sum(k, (0..k).map(|s| (s, 2, sys.larmor)));
    }
    Ok((b.hermitian_part(), c.hermitian_part()))
}

/// First-harmonic decoupling model: `B = (2/π) Σ_k A⊥_k I⊥_k`,
/// `C = Δω Σ_k I_k^z`. Spins without transverse coupling are dropped from
/// `B` with a warning.
pub fn dd_effective_hamiltonians(sys: &SpinSystem, delta_omega: f64) -> Result<(Operator, Operator)> {
    sys.check(false)?;
    if !delta_omega.is_finite() {
        return Err(Error::NonFinite);
    }
    let k = sys.k();
    let mut terms = Vec::new();
    for (s, a) in sys.hyperfine.iter().enumerate() {
        let perp = a[0].hypot(a[1]);
        if perp == 0.0 {
            log::warn!("spin {s} has no transverse hyperfine component and is dropped from B");
            continue;
        }
        let xi = a[1].atan2(a[0]);
        let w = 2.0 / PI * perp;
        terms.push((s, 0, w * xi.cos()));
        terms.push((s, 1, w * xi.sin()));
    }
    let b = weighted_sum(k, terms);
    let c = weighted_sum(k, (0..k).map(|s| (s, 2, delta_omega)));
    Ok((b.hermitian_part(), c.hermitian_part()))
}

/// Target-space jump operators with non-negative rates.
#[derive(Clone, Debug, Default)]
pub struct LindbladSpec {
    pub jumps: Vec<(Operator, f64)>,
}

/// Row-stacked Lindblad generator for `H` and jumps `(L_k, Γ_k)`.
pub fn lindblad_generator(h: &Operator, jumps: &[(Operator, f64)]) -> Result<SuperOp> {
    let d = h.dim();
    let id = DMatrix::<C64>::identity(d, d);
    let mut gen = (h.matrix().kronecker(&id) - id.kronecker(&h.matrix().transpose())) * C64::new(0.0, -1.0);
    for (l, rate) in jumps {
        if l.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: l.dim() });
        }
        if !(rate.is_finite() && *rate >= 0.0) {
            return Err(Error::InvalidInput(format!("rates must be non-negative, got {rate}")));
        }
        let lm = l.matrix();
        let ldl = lm.adjoint() * lm;
        let term = lm.kronecker(&lm.conjugate()) - (ldl.kronecker(&id) + id.kronecker(&ldl.transpose())) * C64::new(0.5, 0.0);
        gen += term * C64::new(*rate, 0.0);
    }
    SuperOp::new(gen)
}

/// Conditional maps of one RIM cycle with the target additionally evolving
/// under the given jumps: prepare `R_{Δφ}(π/2)|0⟩`, evolve the composite
/// state for `t`, rotate with `R_0(π/2)`, project the ancilla onto `|α⟩` and
/// discard it.
pub fn dissipative_rim_maps(spec: &RimSpec, diss: &LindbladSpec) -> Result<ConditionalMaps> {
    spec.check()?;
    let d = spec.dim();
    let id_d = Operator::identity(d);
    let jumps: Vec<(Operator, f64)> = diss
        .jumps
        .iter()
        .map(|(l, g)| {
            if l.dim() != d {
                Err(Error::DimensionMismatch { expected: d, got: l.dim() })
            } else {
                Ok((Operator::identity(2).kron(l), *g))
            }
        })
        .collect::<Result<_>>()?;
    let gen = lindblad_generator(&rim_hamiltonian(spec), &jumps)?;
    let evolve = expm(&(gen.matrix() * C64::new(spec.t, 0.0)))?;

    let prep = rotation(spec.delta_phi, PI / 2.0);
    let psi = DMatrix::from_fn(2, 1, |i, _| prep.get(i, 0));
    let embed = psi.kronecker(id_d.matrix());
    let embed_hat = embed.kronecker(&embed.conjugate());
    let read = rotation(0.0, PI / 2.0);
    let maps = [0usize, 1].map(|alpha| {
        let bra = DMatrix::from_fn(1, 2, |_, j| read.get(alpha, j));
        let k = bra.kronecker(id_d.matrix());
        let k_hat = k.kronecker(&k.conjugate());
        SuperOp::from_matrix_unchecked(&k_hat * &evolve * &embed_hat, d)
    });
    let [e0, e1] = maps;
    ConditionalMaps::from_superops(e0, e1)
}

/// Projectors onto the eigenvectors of a Hermitian operator, in ascending
/// eigenvalue order.
pub fn eigenprojectors(h: &Operator) -> Vec<Operator> {
    let (_, vecs) = h.eigh();
    (0..h.dim())
        .map(|i| Operator::pure_state(&vecs.column(i).into_owned()).expect("unit eigenvector"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hs_algebra::{max_abs, trace_distance, ONE};
    use crate::manifold::commutant_projections;
    use crate::spectral::spectral_decompose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qubit_spec(gamma: f64, c: Operator) -> RimSpec {
        RimSpec::new(Operator::pauli_z(), c, gamma, PI / 2.0, 1.0).unwrap()
    }

    #[test]
    fn uncoupled_rim_is_identity() {
        let spec = RimSpec::new(Operator::zeros(2), Operator::zeros(2), 0.0, 0.7, 1.0).unwrap();
        let (ch, maps) = rim_channel(&spec).unwrap();
        let [m0, m1] = maps.kraus().unwrap();
        let e = C64::from_polar(1.0, 0.7);
        assert!((m0 - &(Operator::identity(2) * ((ONE - e) * 0.5))).max_abs() < 1e-14);
        assert!((m1 - &(Operator::identity(2) * ((ONE + e) * 0.5))).max_abs() < 1e-14);
        assert!(max_abs(&(ch.natural().matrix() - SuperOp::identity(2).matrix())) < 1e-14);
    }

    #[test]
    fn outcome_probability_closed_form() {
        let (_, maps) = rim_channel(&qubit_spec(0.0, Operator::zeros(2))).unwrap();
        let rho = maps.maps()[0].apply_op(&Operator::projector(2, 0)).unwrap();
        assert!((rho.trace().re - (1.0 + 2f64.sin()) / 2.0).abs() < 1e-14);
        assert!((rho.trace().re - 0.954_648_713_412_840_9).abs() < 1e-12);
    }

    #[test]
    fn natural_rep_is_average_of_branch_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [2, 3, 4] {
            let b = crate::hs_algebra::tests::random_operator(d, &mut rng).hermitian_part();
            let c = crate::hs_algebra::tests::random_operator(d, &mut rng).hermitian_part();
            let spec = RimSpec::new(b, c, 0.3, 1.1, 0.8).unwrap();
            let (ch, maps) = rim_channel(&spec).unwrap();
            let [u0, u1] = spec.branch_unitaries().unwrap();
            let avg = (branch_superop(&u0).matrix() + branch_superop(&u1).matrix()) * C64::new(0.5, 0.0);
            assert!(max_abs(&(ch.natural().matrix() - &avg)) < 1e-12);
            assert!(max_abs(&(maps.channel_superop().matrix() - &avg)) < 1e-12);
            let id = Operator::identity(d);
            assert!((&ch.apply(&id, 1).unwrap() - &id).max_abs() < 1e-12);
            assert!(maps.validate().all_ok());
        }
    }

    #[test]
    fn stinespring_route_agrees() {
        let spec = qubit_spec(0.05, Operator::pauli_x());
        let (ch, _) = rim_channel(&spec).unwrap();
        let (u, anc) = rim_joint_unitary(&spec, PI / 2.0, 0.0).unwrap();
        let joint = QuantumChannel::from_joint_unitary(&u, &anc, 2, 2).unwrap();
        assert!(max_abs(&(ch.natural().matrix() - joint.natural().matrix())) < 1e-12);
        for (a, b) in ch.kraus().iter().zip(joint.kraus()) {
            let pa = branch_superop(a);
            let pb = branch_superop(b);
            assert!(max_abs(&(pa.matrix() - pb.matrix())) < 1e-12);
        }
    }

    #[test]
    fn rotation_examples() {
        assert!((&rotation(0.3, 0.0) - &Operator::identity(2)).max_abs() < 1e-15);
        let minus_ix = Operator::pauli_x() * C64::new(0.0, -1.0);
        assert!((&rotation(0.0, PI) - &minus_ix).max_abs() < 1e-15);
        let phi1 = 0.9;
        let r = rotation(phi1, PI / 2.0);
        let s = 0.5f64.sqrt();
        assert!((r.get(0, 0) - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((r.get(1, 0) - C64::new(0.0, -1.0) * C64::from_polar(s, phi1)).norm() < 1e-15);
        for (phi, theta) in [(0.0, 1.0), (1.3, 2.2), (-0.4, 5.0)] {
            let gen = (Operator::pauli_x() * f64::cos(phi) + Operator::pauli_y() * f64::sin(phi)) * C64::new(0.0, -theta / 2.0);
            let via_exp = matrix_exp(&gen).unwrap();
            assert!((&rotation(phi, theta) - &via_exp).max_abs() < 1e-13);
            assert!(rotation(phi, theta).is_unitary(1e-12));
        }
    }

    fn two_spins() -> SpinSystem {
        SpinSystem {
            hyperfine: vec![[khz(0.3), 0.0, khz(0.5)], [0.0, khz(0.6), khz(0.65)]],
            positions: vec![[0.0, 0.0, 0.0], [0.5, 0.3, 0.6]],
            larmor: 0.0,
            gyromagnetic: GAMMA_C13,
        }
    }

    #[test]
    fn single_spin_bath() {
        let sys = SpinSystem {
            hyperfine: vec![[0.0, 0.0, 2.5]],
            positions: vec![[0.0; 3]],
            larmor: 0.0,
            gyromagnetic: GAMMA_C13,
        };
        let (b, c) = spin_bath_hamiltonians(&sys, false).unwrap();
        assert!((&b - &(Operator::pauli_z() * 1.25)).max_abs() < 1e-15);
        assert!(c.max_abs() == 0.0);
    }

    #[test]
    fn dipolar_bath_properties() {
        let sys = two_spins();
        let (b, c) = spin_bath_hamiltonians(&sys, false).unwrap();
        assert!(b.is_hermitian(1e-12) && c.is_hermitian(1e-12));
        assert!(c.trace().norm() < 1e-12);
        assert!(c.hs_norm() < 0.05 * b.hs_norm());
        assert!(b.commutator(&c).max_abs() > 1e-6);

        // relabelling the spins permutes the tensor factors of C
        let swapped = SpinSystem {
            hyperfine: vec![sys.hyperfine[1], sys.hyperfine[0]],
            positions: vec![sys.positions[1], sys.positions[0]],
            ..sys.clone()
        };
        let (_, c2) = spin_bath_hamiltonians(&swapped, false).unwrap();
        let swap = Operator::from_real_rows(4, &[1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 1.]).unwrap();
        let permuted = &(&swap * &c2) * &swap;
        assert!((&permuted - &c).max_abs() < 1e-14);

        let coincident = SpinSystem {
            positions: vec![[1.0; 3], [1.0; 3]],
            ..sys
        };
        assert!(matches!(spin_bath_hamiltonians(&coincident, false), Err(Error::CoincidentPositions(0, 1))));
    }

    #[test]
    fn dipolar_strength_for_carbon() {
        // two ¹³C nuclei 1 nm apart couple with μ₀ħγ²/4πr³ ≈ 2π·7.6 Hz
        let d = dipolar_prefactor(GAMMA_C13);
        assert!((d / khz(1.0) * 1e3 - 7.6).abs() < 0.05);
        assert!((larmor_frequency(GAMMA_C13, 200.0) / khz(1.0) - 214.17).abs() < 0.01);
    }

    #[test]
    fn dd_closed_forms() {
        let a = 3.0;
        let sys = SpinSystem {
            hyperfine: vec![[a, 0.0, 7.0]],
            positions: vec![],
            larmor: 0.0,
            gyromagnetic: GAMMA_C13,
        };
        let (b, c) = dd_effective_hamiltonians(&sys, 0.0).unwrap();
        assert!((&b - &(Operator::pauli_x() * (a / PI))).max_abs() < 1e-15);
        assert_eq!(c.max_abs(), 0.0);

        let sys2 = SpinSystem {
            hyperfine: vec![[khz(3.0), khz(4.0), 1.0], [khz(6.0), 0.0, 0.0]],
            ..sys
        };
        let (b, c) = dd_effective_hamiltonians(&sys2, 0.0).unwrap();
        assert_eq!(commutant_projections(&b, &c).unwrap().r(), 4);
        let (b, c) = dd_effective_hamiltonians(&sys2, 1.3).unwrap();
        assert!(b.commutator(&c).max_abs() > 1e-3);
    }

    #[test]
    fn dissipation_free_limit_matches_closed_system() {
        for (gamma, c) in [(0.05, Operator::pauli_x()), (0.3, Operator::pauli_y())] {
            let spec = qubit_spec(gamma, c);
            let (_, closed) = rim_channel(&spec).unwrap();
            let open = dissipative_rim_maps(&spec, &LindbladSpec::default()).unwrap();
            for (a, b) in closed.maps().iter().zip(open.maps()) {
                assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-10);
            }
            let zero_rate = LindbladSpec {
                jumps: vec![(Operator::pauli_z(), 0.0)],
            };
            let open = dissipative_rim_maps(&spec, &zero_rate).unwrap();
            assert!(max_abs(&(closed.maps()[1].matrix() - open.maps()[1].matrix())) < 1e-10);
        }
    }

    #[test]
    fn dephasing_keeps_diagonal_statistics() {
        let spec = qubit_spec(0.0, Operator::zeros(2));
        let (_, closed) = rim_channel(&spec).unwrap();
        let deph = LindbladSpec {
            jumps: vec![(Operator::pauli_z(), 0.2)],
        };
        let open = dissipative_rim_maps(&spec, &deph).unwrap();
        assert!(open.validate().all_ok());
        for i in 0..2 {
            let rho = Operator::projector(2, i);
            for a in 0..2 {
                let p_open = open.maps()[a].apply_op(&rho).unwrap().trace().re;
                let p_closed = closed.maps()[a].apply_op(&rho).unwrap().trace().re;
                assert!((p_open - p_closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relaxation_drives_population_to_one() {
        let spec = qubit_spec(0.05, Operator::pauli_x());
        let relax = LindbladSpec {
            jumps: vec![(sigma_minus(), 2.0)],
        };
        let maps = dissipative_rim_maps(&spec, &relax).unwrap();
        let report = maps.validate();
        assert!(report.trace_preserving && report.completely_positive && !report.unital);
        let ch = maps.channel_superop();
        let out = crate::channel::apply_power(&ch, &Operator::projector(2, 0), 50).unwrap();
        assert!(trace_distance(&out, &Operator::projector(2, 1)).unwrap() < 0.1);
    }

    #[test]
    fn resonant_dd_fixed_points() {
        let sys = SpinSystem {
            hyperfine: vec![[khz(5.0), 0.0, 0.0], [khz(3.6), khz(4.8), 0.0]],
            positions: vec![],
            larmor: 0.0,
            gyromagnetic: GAMMA_C13,
        };
        let (b, c) = dd_effective_hamiltonians(&sys, 0.0).unwrap();
        let spec = RimSpec::new(b, c, 1.0, PI / 2.0, 0.1).unwrap();
        let (ch, _) = rim_channel(&spec).unwrap();
        let sd = spectral_decompose(ch.natural()).unwrap();
        let ones = sd.eigenvalues().iter().filter(|z| (**z - ONE).norm() < 1e-8).count();
        assert_eq!(ones, 4);
    }

    #[test]
    fn eigenprojectors_resolve_identity() {
        let sys = two_spins();
        let (b, _) = spin_bath_hamiltonians(&sys, false).unwrap();
        let ps = eigenprojectors(&b);
        let sum = ps.iter().fold(Operator::zeros(4), |a, p| &a + p);
        assert!((&sum - &Operator::identity(4)).max_abs() < 1e-12);
    }
}
