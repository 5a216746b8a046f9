//! JSON experiment configuration.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::hs_algebra::Operator;
use crate::models::{
    dd_effective_hamiltonians, dissipative_rim_maps, eigenprojectors, khz, larmor_frequency, rim_channel, sigma_minus,
    spin_bath_hamiltonians, ConditionalMaps, LindbladSpec, RimSpec, SpinSystem, GAMMA_C13,
};
use crate::trajectory::{ClassThresholds, Observable, DEFAULT_BINS, DEFAULT_STEP_BUDGET};

/// Supported config schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    /// Free text, e.g. how the parameters were chosen.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub model: ModelConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Operator given by name or as rows of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OpSpec {
    Named(NamedOp),
    Matrix(Vec<Vec<[f64; 2]>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedOp {
    SigmaX,
    SigmaY,
    SigmaZ,
    /// `|1⟩⟨0|`.
    SigmaMinus,
    SigmaPlus,
    Zero,
}

impl OpSpec {
    pub fn build(&self) -> Result<Operator, String> {
        match self {
            OpSpec::Named(n) => Ok(match n {
                NamedOp::SigmaX => Operator::pauli_x(),
                NamedOp::SigmaY => Operator::pauli_y(),
                NamedOp::SigmaZ => Operator::pauli_z(),
                NamedOp::SigmaMinus => sigma_minus(),
                NamedOp::SigmaPlus => sigma_minus().adjoint(),
                NamedOp::Zero => Operator::zeros(2),
            }),
            OpSpec::Matrix(rows) => {
                let d = rows.len();
                if d == 0 || rows.iter().any(|r| r.len() != d) {
                    return Err("operator matrix must be square and non-empty".into());
                }
                let m = DMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j][0], rows[i][j][1]));
                Operator::new(m).map_err(|e| e.to_string())
            }
        }
    }

    pub fn from_operator(op: &Operator) -> Self {
        let d = op.dim();
        OpSpec::Matrix((0..d).map(|i| (0..d).map(|j| [op.get(i, j).re, op.get(i, j).im]).collect()).collect())
    }
}

fn named(n: NamedOp) -> OpSpec {
    OpSpec::Named(n)
}

fn default_b() -> OpSpec {
    named(NamedOp::SigmaZ)
}

fn default_c() -> OpSpec {
    named(NamedOp::SigmaX)
}

fn default_delta_phi() -> f64 {
    FRAC_PI_2
}

fn one() -> f64 {
    1.0
}

/// Nuclear spins in laboratory units: hyperfine vectors in kHz, positions
/// in nm, field in gauss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinsConfig {
    pub hyperfine_khz: Vec<[f64; 3]>,
    #[serde(default)]
    pub positions_nm: Vec<[f64; 3]>,
    #[serde(default)]
    pub field_gauss: f64,
    /// rad s⁻¹ T⁻¹.
    #[serde(default = "default_gyro")]
    pub gyromagnetic: f64,
}

fn default_gyro() -> f64 {
    GAMMA_C13
}

impl SpinsConfig {
    pub fn system(&self) -> SpinSystem {
        SpinSystem {
            hyperfine: self.hyperfine_khz.iter().map(|a| a.map(khz)).collect(),
            positions: self.positions_nm.clone(),
            larmor: larmor_frequency(self.gyromagnetic, self.field_gauss),
            gyromagnetic: self.gyromagnetic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub op: OpSpec,
    /// Rate in ms⁻¹ (with `t` in ms).
    pub rate: f64,
}

/// Model selection; times in ms, frequencies in rad/ms unless suffixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `H = σ_z ⊗ B + γ 𝕀 ⊗ C` with explicit `B`, `C` (any dimension).
    SingleQubit {
        #[serde(default = "default_b")]
        b: OpSpec,
        #[serde(default = "default_c")]
        c: OpSpec,
        gamma: f64,
        #[serde(default = "default_delta_phi")]
        delta_phi: f64,
        t: f64,
    },
    /// Hyperfine `B` and dipolar (plus optional Zeeman) `C`.
    SpinBath {
        spins: SpinsConfig,
        #[serde(default)]
        include_zeeman: bool,
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default = "default_delta_phi")]
        delta_phi: f64,
        t: f64,
    },
    /// Decoupled effective model; detuning absolute (rad/ms) or relative to
    /// the Larmor frequency.
    DdEffective {
        spins: SpinsConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_omega: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_omega_over_larmor: Option<f64>,
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default = "default_delta_phi")]
        delta_phi: f64,
        t: f64,
    },
    /// RIM cycle with Lindblad jumps acting on the target during `t`.
    Dissipative {
        #[serde(default = "default_b")]
        b: OpSpec,
        #[serde(default = "default_c")]
        c: OpSpec,
        gamma: f64,
        #[serde(default = "default_delta_phi")]
        delta_phi: f64,
        t: f64,
        #[serde(default)]
        jumps: Vec<JumpConfig>,
    },
    /// Two arbitrary measurement Kraus operators (not checked for validity).
    CustomKraus { kraus: [OpSpec; 2] },
}

/// A built model: the two conditional maps, the channel in Kraus form when
/// available, and the coupling operator `B` if the model has one.
pub struct BuiltModel {
    pub maps: ConditionalMaps,
    pub b: Option<Operator>,
    /// Pure-dephasing RIM channels are unital by construction.
    pub expect_unital: bool,
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::SingleQubit { .. } => "single_qubit",
            ModelConfig::SpinBath { .. } => "spin_bath",
            ModelConfig::DdEffective { .. } => "dd_effective",
            ModelConfig::Dissipative { .. } => "dissipative",
            ModelConfig::CustomKraus { .. } => "custom_kraus",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            ModelConfig::SingleQubit { gamma, .. }
            | ModelConfig::SpinBath { gamma, .. }
            | ModelConfig::DdEffective { gamma, .. }
            | ModelConfig::Dissipative { gamma, .. } => Some(*gamma),
            ModelConfig::CustomKraus { .. } => None,
        }
    }

    /// Copy with the coupling strength replaced.
    pub fn with_gamma(&self, g: f64) -> Option<Self> {
        let mut out = self.clone();
        match &mut out {
            ModelConfig::SingleQubit { gamma, .. }
            | ModelConfig::SpinBath { gamma, .. }
            | ModelConfig::DdEffective { gamma, .. }
            | ModelConfig::Dissipative { gamma, .. } => *gamma = g,
            ModelConfig::CustomKraus { .. } => return None,
        }
        Some(out)
    }

    pub fn build(&self) -> Result<BuiltModel, String> {
        let e = |err: crate::Error| err.to_string();
        let rim = |b: Operator, c: Operator, gamma: f64, delta_phi: f64, t: f64| -> Result<BuiltModel, String> {
            let spec = RimSpec::new(b.clone(), c, gamma, delta_phi, t).map_err(e)?;
            let (_, maps) = rim_channel(&spec).map_err(e)?;
            Ok(BuiltModel {
                maps,
                b: Some(b),
                expect_unital: true,
            })
        };
        match self {
            ModelConfig::SingleQubit {
                b,
                c,
                gamma,
                delta_phi,
                t,
            } => rim(b.build()?, c.build()?, *gamma, *delta_phi, *t),
            ModelConfig::SpinBath {
                spins,
                include_zeeman,
                gamma,
                delta_phi,
                t,
            } => {
                let (b, c) = spin_bath_hamiltonians(&spins.system(), *include_zeeman).map_err(e)?;
                rim(b, c, *gamma, *delta_phi, *t)
            }
            ModelConfig::DdEffective {
                spins,
                delta_omega,
                delta_omega_over_larmor,
                gamma,
                delta_phi,
                t,
            } => {
                let sys = spins.system();
                let dw = match (delta_omega, delta_omega_over_larmor) {
                    (Some(w), None) => *w,
                    (None, Some(f)) => f * sys.larmor,
                    (None, None) => 0.0,
                    (Some(_), Some(_)) => {
                        return Err("give at most one of delta_omega and delta_omega_over_larmor".into());
                    }
                };
                let (b, c) = dd_effective_hamiltonians(&sys, dw).map_err(e)?;
                rim(b, c, *gamma, *delta_phi, *t)
            }
            ModelConfig::Dissipative {
                b,
                c,
                gamma,
                delta_phi,
                t,
                jumps,
            } => {
                let b = b.build()?;
                let spec = RimSpec::new(b.clone(), c.build()?, *gamma, *delta_phi, *t).map_err(e)?;
                let diss = LindbladSpec {
                    jumps: jumps.iter().map(|j| Ok((j.op.build()?, j.rate))).collect::<Result<_, String>>()?,
                };
                let maps = dissipative_rim_maps(&spec, &diss).map_err(e)?;
                Ok(BuiltModel {
                    maps,
                    b: Some(b),
                    expect_unital: diss.jumps.iter().all(|(l, _)| l.is_hermitian(1e-12)),
                })
            }
            ModelConfig::CustomKraus { kraus } => {
                let maps = ConditionalMaps::from_kraus(kraus[0].build()?, kraus[1].build()?).map_err(e)?;
                Ok(BuiltModel {
                    maps,
                    b: None,
                    expect_unital: false,
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaScan {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl GammaScan {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        (0..self.steps)
            .map(|i| self.from + (self.to - self.from) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

/// Test hook: metastable modes supplied directly instead of computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmsInjection {
    pub rho_fix: OpSpec,
    pub r: OpSpec,
    pub l: OpSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_eps_unit")]
    pub eps_unit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_override: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_scan: Option<GammaScan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ems_injection: Option<EmsInjection>,
}

fn default_eps_unit() -> f64 {
    crate::spectral::DEFAULT_EPS_UNIT
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            eps_unit: default_eps_unit(),
            l_override: None,
            gamma_scan: None,
            ems_injection: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKeyword {
    MaximallyMixed,
}

/// Initial target state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Keyword(StateKeyword),
    Basis { basis: usize },
    Matrix(Vec<Vec<[f64; 2]>>),
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::Keyword(StateKeyword::MaximallyMixed)
    }
}

impl StateSpec {
    pub fn build(&self, d: usize) -> Result<Operator, String> {
        let rho = match self {
            StateSpec::Keyword(StateKeyword::MaximallyMixed) => Operator::maximally_mixed(d),
            StateSpec::Basis { basis } if *basis < d => Operator::projector(d, *basis),
            StateSpec::Basis { basis } => return Err(format!("basis state {basis} out of range for dimension {d}")),
            StateSpec::Matrix(rows) => OpSpec::Matrix(rows.clone()).build()?,
        };
        if rho.dim() != d {
            return Err(format!("initial state has dimension {}, model has {d}", rho.dim()));
        }
        Ok(rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Expectation,
    Fidelity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub kind: ObservableKind,
    pub op: OpSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Round counts with a histogram each.
    #[serde(default)]
    pub rounds: Vec<u64>,
    /// Rounds for class averages; defaults to `rounds`.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// First round of the polarization window (default 1, full record).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<u64>,
    #[serde(default)]
    pub initial_state: StateSpec,
    /// Defaults to `⟨σ_z⟩` for a qubit, otherwise fidelities with the
    /// eigenstates of `B`.
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    #[serde(default = "default_budget")]
    pub step_budget: u64,
    #[serde(default)]
    pub emit_trajectories: bool,
}

fn default_samples() -> u64 {
    10_000
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_thresholds() -> Vec<f64> {
    ClassThresholds::default().boundaries().to_vec()
}

fn default_budget() -> u64 {
    DEFAULT_STEP_BUDGET as u64
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            rounds: Vec::new(),
            checkpoints: Vec::new(),
            bins: default_bins(),
            seed: 0,
            thresholds: default_thresholds(),
            window_start: None,
            initial_state: StateSpec::default(),
            observables: Vec::new(),
            step_budget: default_budget(),
            emit_trajectories: false,
        }
    }
}

impl RunConfig {
    pub fn checkpoints(&self) -> &[u64] {
        if self.checkpoints.is_empty() {
            &self.rounds
        } else {
            &self.checkpoints
        }
    }

    pub fn m_max(&self) -> u64 {
        self.rounds.iter().chain(&self.checkpoints).copied().max().unwrap_or(0)
    }

    pub fn observables(&self, model: &BuiltModel) -> Result<Vec<Observable>, String> {
        let d = model.maps.dim();
        if !self.observables.is_empty() {
            return self
                .observables
                .iter()
                .map(|o| {
                    let op = o.op.build()?;
                    if op.dim() != d {
                        return Err(format!("observable {} has dimension {}, model has {d}", o.name, op.dim()));
                    }
                    Ok(match o.kind {
                        ObservableKind::Expectation => Observable::expectation(o.name.clone(), op),
                        ObservableKind::Fidelity => Observable::fidelity(o.name.clone(), op),
                    })
                })
                .collect();
        }
        if d == 2 {
            return Ok(vec![Observable::expectation("sigma_z", Operator::pauli_z())]);
        }
        let targets = match &model.b {
            Some(b) => eigenprojectors(b),
            None => (0..d).map(|k| Operator::projector(d, k)).collect(),
        };
        Ok(targets
            .into_iter()
            .enumerate()
            .map(|(k, p)| Observable::fidelity(format!("fidelity_{k}"), p))
            .collect())
    }
}

fn strictly_increasing_positive(v: &[u64]) -> bool {
    v.first().is_none_or(|&x| x > 0) && v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Structural checks independent of the command.
    pub fn check(&self) -> Result<(), String> {
        if self.schema != SCHEMA_VERSION {
            return Err(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        let run = &self.run;
        if !strictly_increasing_positive(&run.rounds) {
            return Err("rounds must be strictly increasing positive integers".into());
        }
        if !strictly_increasing_positive(&run.checkpoints) {
            return Err("checkpoints must be strictly increasing positive integers".into());
        }
        if run.samples == 0 {
            return Err("samples must be at least 1".into());
        }
        if run.bins < 2 {
            return Err("bins must be at least 2".into());
        }
        if run.window_start == Some(0) {
            return Err("window_start is 1-based".into());
        }
        ClassThresholds::new(run.thresholds.clone()).map_err(|e| e.to_string())?;
        if !(self.analysis.eps_unit.is_finite() && self.analysis.eps_unit > 0.0) {
            return Err("eps_unit must be positive".into());
        }
        if let Some(scan) = &self.analysis.gamma_scan {
            if scan.steps == 0 || !scan.from.is_finite() || !scan.to.is_finite() {
                return Err("gamma_scan needs finite bounds and at least one step".into());
            }
            if self.model.gamma().is_none() {
                return Err("gamma_scan requires a model with a coupling strength".into());
            }
        }
        Ok(())
    }
}
