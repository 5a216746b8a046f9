//! Monte Carlo unraveling of a two-outcome sequential channel into
//! measurement records, with polarization histograms, peak detection and
//! per-class observable curves.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hs_algebra::{devectorize_unchecked, fidelity, vectorize, Operator, SuperOp, ONE, ZERO};
use crate::models::ConditionalMaps;

/// `|p₀ + p₁ − 1|` above this aborts a trajectory.
pub const BRANCH_TOL: f64 = 1e-8;

/// Probabilities this far outside `[0, 1]` are clamped silently.
const CLAMP_TOL: f64 = 1e-12;

/// Default cap on `n_samples · m_max`.
pub const DEFAULT_STEP_BUDGET: u128 = 20_000_000_000;

/// Trajectories per reduction chunk; fixed so sums do not depend on the
/// thread count.
const CHUNK: usize = 64;

/// Longest record the exhaustive branch sum accepts.
pub const MAX_EXHAUSTIVE_ROUNDS: u64 = 20;

/// Quantity recorded at each checkpoint.
#[derive(Clone, Debug)]
pub enum Observable {
    /// `Tr(O ρ)` for Hermitian `O`.
    Expectation { name: String, op: Operator },
    /// Root fidelity `Tr√(√ρ σ √ρ)` with a target state `σ`.
    Fidelity { name: String, target: Operator },
}

impl Observable {
    pub fn expectation(name: impl Into<String>, op: Operator) -> Self {
        Observable::Expectation { name: name.into(), op }
    }

    pub fn fidelity(name: impl Into<String>, target: Operator) -> Self {
        Observable::Fidelity {
            name: name.into(),
            target,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Observable::Expectation { name, .. } | Observable::Fidelity { name, .. } => name,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Observable::Expectation { op, .. } => op.dim(),
            Observable::Fidelity { target, .. } => target.dim(),
        }
    }
}

/// Precomputed evaluation of an observable on a vectorized state.
enum Probe {
    /// `Σ_k w_k v_k` (a pure-target fidelity takes the square root).
    Linear { weights: Vec<C64>, sqrt: bool },
    General(Operator),
}

impl Probe {
    fn new(obs: &Observable) -> Self {
        let (op, sqrt) = match obs {
            Observable::Expectation { op, .. } => (op.clone(), false),
            Observable::Fidelity { target, .. } => {
                if (target.purity() - 1.0).abs() > 1e-10 {
                    return Probe::General(target.clone());
                }
                (target.clone(), true)
            }
        };
        // Tr(Oρ) = Σ_ij O_ji ρ_ij = ⟨vec Oᵀ, vec ρ⟩ without conjugation
        Probe::Linear {
            weights: vectorize(&op.transpose()).into_vector().iter().copied().collect(),
            sqrt,
        }
    }

    fn eval(&self, v: &[C64], d: usize) -> f64 {
        match self {
            Probe::Linear { weights, sqrt } => {
                let x: f64 = weights.iter().zip(v).map(|(w, z)| (w * z).re).sum();
                if *sqrt {
                    x.max(0.0).sqrt()
                } else {
                    x
                }
            }
            Probe::General(target) => {
                let rho = devectorize_unchecked(&DVector::from_column_slice(v), d).hermitian_part();
                fidelity(&rho, target).unwrap_or(f64::NAN)
            }
        }
    }
}

/// Packed outcome record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeBits {
    words: Vec<u64>,
    len: u64,
}

impl OutcomeBits {
    fn with_capacity(m: u64) -> Self {
        Self {
            words: Vec::with_capacity(m.div_ceil(64) as usize),
            len: 0,
        }
    }

    fn push(&mut self, bit: bool) {
        let slot = (self.len % 64) as u32;
        if slot == 0 {
            self.words.push(0);
        }
        if bit {
            *self.words.last_mut().expect("word pushed") |= 1 << slot;
        }
        self.len += 1;
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Outcome of round `k` (1-based).
    pub fn get(&self, k: u64) -> bool {
        let i = k - 1;
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    /// Number of `1` outcomes in the first `k` rounds.
    fn ones_prefix(&self, k: u64) -> u64 {
        let full = (k / 64) as usize;
        let mut n: u64 = self.words[..full].iter().map(|w| w.count_ones() as u64).sum();
        let rem = k % 64;
        if rem > 0 {
            n += (self.words[full] & ((1u64 << rem) - 1)).count_ones() as u64;
        }
        n
    }

    /// `1` outcomes among rounds `start..=end` (1-based).
    pub fn ones_in(&self, start: u64, end: u64) -> u64 {
        self.ones_prefix(end) - self.ones_prefix(start - 1)
    }

    /// Run-length encoding `[(outcome, run), …]`.
    pub fn run_lengths(&self) -> Vec<(u8, u64)> {
        let mut runs: Vec<(u8, u64)> = Vec::new();
        for k in 1..=self.len {
            let b = self.get(k) as u8;
            match runs.last_mut() {
                Some((v, n)) if *v == b => *n += 1,
                _ => runs.push((b, 1)),
            }
        }
        runs
    }
}

/// One sampled measurement record.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub outcomes: OutcomeBits,
    /// `X = (m₀ − m₁)/(2m)` over the whole record.
    pub polarization: f64,
    /// Checkpoint rounds, shared with the ensemble.
    pub checkpoints: Vec<u64>,
    /// `observables[k][j]`: observable `j` at checkpoint `k`.
    pub observables: Vec<Vec<f64>>,
    pub final_state: Operator,
}

impl TrajectoryRecord {
    pub fn m(&self) -> u64 {
        self.outcomes.len()
    }

    pub fn m0(&self) -> u64 {
        match self.m() {
            0 => 0,
            m => m - self.outcomes.ones_in(1, m),
        }
    }

    /// `X` over rounds `start..=end` (1-based, inclusive).
    pub fn polarization_in(&self, start: u64, end: u64) -> Result<f64> {
        if start == 0 || start > end || end > self.m() {
            return Err(Error::EmptyWindow);
        }
        let n = end - start + 1;
        let ones = self.outcomes.ones_in(start, end);
        Ok(polarization(n - ones, ones))
    }
}

fn polarization(m0: u64, m1: u64) -> f64 {
    (m0 as f64 - m1 as f64) / (2.0 * (m0 + m1) as f64)
}

/// How a branch acts on the row-major state matrix.
enum Update {
    /// Row-major `Ê_α`, applied as a `d² × d²` product.
    Superop([Vec<C64>; 2]),
    /// Row-major `M_α` and `M_α*`, applied as `M ρ M†` in `2d³` operations.
    Kraus { m: [Vec<C64>; 2], m_conj: [Vec<C64>; 2] },
}

/// Branch maps in a layout suited to repeated application, plus the trace
/// rows giving outcome probabilities.
struct Engine {
    d: usize,
    n: usize,
    update: Update,
    trace_rows: [Vec<C64>; 2],
}

fn row_major(m: &nalgebra::DMatrix<C64>) -> Vec<C64> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect()
}

impl Engine {
    fn new(maps: &ConditionalMaps) -> Self {
        let d = maps.dim();
        let n = d * d;
        // Tr devec(Êv) = Σ_i (Êv)_{i·d+i}
        let trace_row = |s: &SuperOp| {
            let m = s.matrix();
            (0..n).map(|j| (0..d).map(|i| m[(i * d + i, j)]).sum()).collect::<Vec<C64>>()
        };
        let update = match maps.kraus() {
            Some([k0, k1]) => Update::Kraus {
                m: [row_major(k0.matrix()), row_major(k1.matrix())],
                m_conj: [row_major(&k0.matrix().conjugate()), row_major(&k1.matrix().conjugate())],
            },
            None => Update::Superop([row_major(maps.maps()[0].matrix()), row_major(maps.maps()[1].matrix())]),
        };
        Self {
            d,
            n,
            update,
            trace_rows: [trace_row(&maps.maps()[0]), trace_row(&maps.maps()[1])],
        }
    }

    fn probabilities(&self, v: &[C64]) -> Result<f64> {
        let dot = |w: &[C64]| -> f64 { w.iter().zip(v).map(|(a, b)| a.re * b.re - a.im * b.im).sum() };
        let p0 = dot(&self.trace_rows[0]);
        let p1 = dot(&self.trace_rows[1]);
        let sum = p0 + p1;
        if !sum.is_finite() || (sum - 1.0).abs() > BRANCH_TOL {
            return Err(Error::InvalidMaps { sum });
        }
        if p0 < -CLAMP_TOL || p1 < -CLAMP_TOL {
            return Err(Error::InvalidMaps { sum: p0.min(p1) });
        }
        let (p0, p1) = (p0.max(0.0), p1.max(0.0));
        Ok(p0 / (p0 + p1))
    }

    /// `out = Ê_α v / Tr(Ê_α v)`; `scratch` holds `d²` entries.
    fn step(&self, alpha: usize, v: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let (d, n) = (self.d, self.n);
        match &self.update {
            Update::Superop(maps) => {
                let m = &maps[alpha];
                for (o, row) in out.iter_mut().zip(m.chunks_exact(n)) {
                    *o = dot(row, v);
                }
            }
            Update::Kraus { m, m_conj } => {
                let (m, mc) = (&m[alpha], &m_conj[alpha]);
                // scratch = M ρ
                for i in 0..d {
                    let mrow = &m[i * d..(i + 1) * d];
                    for k in 0..d {
                        scratch[i * d + k] = (0..d).fold(ZERO, |acc, j| acc + mrow[j] * v[j * d + k]);
                    }
                }
                // out = scratch M†, with (M†)_{kl} = conj(M_{lk})
                for i in 0..d {
                    let srow = &scratch[i * d..(i + 1) * d];
                    for l in 0..d {
                        out[i * d + l] = dot(srow, &mc[l * d..(l + 1) * d]);
                    }
                }
            }
        }
        let tr: f64 = (0..d).map(|i| out[i * d + i].re).sum();
        let inv = 1.0 / tr;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
}

#[inline]
fn dot(a: &[C64], b: &[C64]) -> C64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re - x.im * y.im;
        im += x.re * y.im + x.im * y.re;
    }
    C64::new(re, im)
}

/// Per-trajectory generator keyed by `(master_seed, index)`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn check_inputs(maps: &ConditionalMaps, rho0: &Operator, m: u64, checkpoints: &[u64], observables: &[Observable]) -> Result<()> {
    let d = maps.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: rho0.dim() });
    }
    if (rho0.trace() - ONE).norm() > 1e-8 {
        return Err(Error::InvalidInput("initial state must have unit trace".into()));
    }
    if !rho0.is_psd(1e-8) {
        return Err(Error::NotPsd {
            what: "initial state",
            min_eigenvalue: rho0.min_eigenvalue(),
        });
    }
    if m == 0 {
        return Err(Error::InvalidInput("at least one round is required".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints.first() == Some(&0) || checkpoints.last().is_some_and(|&c| c > m) {
        return Err(Error::InvalidInput("checkpoints must be strictly increasing within 1..=m".into()));
    }
    if let Some(o) = observables.iter().find(|o| o.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: o.dim() });
    }
    Ok(())
}

struct Sampler<'a> {
    engine: &'a Engine,
    probes: Vec<Probe>,
    rho0: Vec<C64>,
    m: u64,
    checkpoints: &'a [u64],
}

impl Sampler<'_> {
    /// Runs one trajectory, adding its checkpoint states to `state_sums`.
    fn run(&self, index: u64, rng: &mut ChaCha8Rng, state_sums: Option<&mut [Vec<C64>]>) -> Result<TrajectoryRecord> {
        let e = self.engine;
        let mut v = self.rho0.clone();
        let mut buf = vec![ZERO; e.n];
        let mut scratch = vec![ZERO; e.n];
        let mut bits = OutcomeBits::with_capacity(self.m);
        let mut observables = Vec::with_capacity(self.checkpoints.len());
        let mut next = 0;
        let mut sums = state_sums;
        for round in 1..=self.m {
            let p0 = e.probabilities(&v)?;
            let u: f64 = rng.random();
            let alpha = usize::from(u >= p0);
            e.step(alpha, &v, &mut buf, &mut scratch);
            std::mem::swap(&mut v, &mut buf);
            bits.push(alpha == 1);
            if next < self.checkpoints.len() && self.checkpoints[next] == round {
                observables.push(self.probes.iter().map(|p| p.eval(&v, e.d)).collect());
                if let Some(s) = sums.as_deref_mut() {
                    for (acc, z) in s[next].iter_mut().zip(&v) {
                        *acc += z;
                    }
                }
                next += 1;
            }
        }
        let ones = bits.ones_in(1, self.m);
        let final_state = devectorize_unchecked(&DVector::from_vec(v), e.d).hermitian_part();
        Ok(TrajectoryRecord {
            index,
            polarization: polarization(self.m - ones, ones),
            outcomes: bits,
            checkpoints: self.checkpoints.to_vec(),
            observables,
            final_state,
        })
    }
}

/// Samples one measurement record of `m` rounds.
pub fn sample_trajectory(
    maps: &ConditionalMaps,
    rho0: &Operator,
    m: u64,
    rng: &mut ChaCha8Rng,
    checkpoints: &[u64],
    observables: &[Observable],
) -> Result<TrajectoryRecord> {
    check_inputs(maps, rho0, m, checkpoints, observables)?;
    let engine = Engine::new(maps);
    let sampler = Sampler {
        engine: &engine,
        probes: observables.iter().map(Probe::new).collect(),
        rho0: vectorize(rho0).into_vector().iter().copied().collect(),
        m,
        checkpoints,
    };
    sampler.run(0, rng, None)
}

/// Ensemble parameters.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub m_max: u64,
    pub n_samples: u64,
    pub checkpoints: Vec<u64>,
    pub master_seed: u64,
    pub observables: Vec<Observable>,
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
    pub step_budget: u128,
}

impl EnsembleSpec {
    pub fn new(m_max: u64, n_samples: u64, checkpoints: Vec<u64>, master_seed: u64) -> Self {
        Self {
            m_max,
            n_samples,
            checkpoints,
            master_seed,
            observables: Vec::new(),
            threads: None,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn with_observables(mut self, observables: Vec<Observable>) -> Self {
        self.observables = observables;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub records: Vec<TrajectoryRecord>,
    pub checkpoints: Vec<u64>,
    /// Mean conditional state at each checkpoint.
    pub mean_states: Vec<Operator>,
    pub observable_names: Vec<String>,
    pub master_seed: u64,
    pub m_max: u64,
}

/// Samples `n_samples` independent records; record `i` uses the stream
/// `(master_seed, i)` and all sums run in index order, so the result does
/// not depend on the number of threads.
pub fn run_ensemble(maps: &ConditionalMaps, rho0: &Operator, spec: &EnsembleSpec) -> Result<EnsembleResult> {
    if spec.n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    let requested = spec.n_samples as u128 * spec.m_max as u128;
    if requested > spec.step_budget {
        return Err(Error::BudgetExceeded {
            requested,
            cap: spec.step_budget,
        });
    }
    check_inputs(maps, rho0, spec.m_max, &spec.checkpoints, &spec.observables)?;
    let engine = Engine::new(maps);
    let sampler = Sampler {
        engine: &engine,
        probes: spec.observables.iter().map(Probe::new).collect(),
        rho0: vectorize(rho0).into_vector().iter().copied().collect(),
        m: spec.m_max,
        checkpoints: &spec.checkpoints,
    };
    let n_chunks = spec.n_samples.div_ceil(CHUNK as u64);
    let run_chunk = |c: u64| -> Result<(Vec<TrajectoryRecord>, Vec<Vec<C64>>)> {
        let mut sums = vec![vec![ZERO; engine.n]; spec.checkpoints.len()];
        let lo = c * CHUNK as u64;
        let hi = (lo + CHUNK as u64).min(spec.n_samples);
        let records = (lo..hi)
            .map(|i| sampler.run(i, &mut trajectory_rng(spec.master_seed, i), Some(&mut sums)))
            .collect::<Result<Vec<_>>>()?;
        Ok((records, sums))
    };
    let chunks: Vec<_> = match spec.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            pool.install(|| (0..n_chunks).into_par_iter().map(run_chunk).collect::<Result<Vec<_>>>())?
        }
        None => (0..n_chunks).into_par_iter().map(run_chunk).collect::<Result<Vec<_>>>()?,
    };

    let mut totals = vec![vec![ZERO; engine.n]; spec.checkpoints.len()];
    let mut records = Vec::with_capacity(spec.n_samples as usize);
    for (recs, sums) in chunks {
        for (t, s) in totals.iter_mut().zip(&sums) {
            for (a, b) in t.iter_mut().zip(s) {
                *a += b;
            }
        }
        records.extend(recs);
    }
    let scale = C64::new(1.0 / spec.n_samples as f64, 0.0);
    let mean_states = totals
        .into_iter()
        .map(|t| devectorize_unchecked(&(DVector::from_vec(t) * scale), engine.d).hermitian_part())
        .collect();
    Ok(EnsembleResult {
        records,
        checkpoints: spec.checkpoints.clone(),
        mean_states,
        observable_names: spec.observables.iter().map(|o| o.name().to_string()).collect(),
        master_seed: spec.master_seed,
        m_max: spec.m_max,
    })
}

/// `Σ` over all `2^m` outcome records of the unnormalized conditional
/// states; equals `Φ^m(ρ₀)`.
pub fn exhaustive_branch_sum(maps: &ConditionalMaps, rho0: &Operator, m: u64) -> Result<Operator> {
    if m > MAX_EXHAUSTIVE_ROUNDS {
        return Err(Error::BudgetExceeded {
            requested: 1u128 << m,
            cap: 1u128 << MAX_EXHAUSTIVE_ROUNDS,
        });
    }
    if rho0.dim() != maps.dim() {
        return Err(Error::DimensionMismatch {
            expected: maps.dim(),
            got: rho0.dim(),
        });
    }
    fn descend(maps: &ConditionalMaps, v: &DVector<C64>, left: u64, acc: &mut DVector<C64>) {
        if left == 0 {
            *acc += v;
            return;
        }
        for e in maps.maps() {
            descend(maps, &(e.matrix() * v), left - 1, acc);
        }
    }
    let v0 = vectorize(rho0).into_vector();
    let mut acc = DVector::zeros(v0.len());
    descend(maps, &v0, m, &mut acc);
    Ok(devectorize_unchecked(&acc, maps.dim()))
}

/// Polarization histogram over `[−1/2, 1/2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Window of rounds the polarization was computed over.
    pub window: (u64, u64),
}

/// Default bin count.
pub const DEFAULT_BINS: usize = 81;

/// Peak prominence threshold as a fraction of the total count.
pub const DEFAULT_PEAK_PROMINENCE: f64 = 0.05;

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin of `x`; `x = 1/2` falls in the last bin.
    pub fn bin_of(bins: usize, x: f64) -> usize {
        (((x + 0.5) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    }

    /// 3-bin moving average with zero padding.
    pub fn smoothed(&self) -> Vec<f64> {
        let c = &self.counts;
        (0..c.len())
            .map(|i| {
                let left = if i > 0 { c[i - 1] } else { 0 };
                let right = c.get(i + 1).copied().unwrap_or(0);
                (left + c[i] + right) as f64 / 3.0
            })
            .collect()
    }

    /// Peaks of the smoothed counts with topographic prominence at least
    /// `fraction · total`; flat tops report their middle bin.
    pub fn peaks(&self, fraction: f64) -> Vec<usize> {
        let s = self.smoothed();
        let n = s.len();
        // zero padding on both sides mirrors the smoothing boundary
        let at = |i: isize| if i < 0 || i >= n as isize { 0.0 } else { s[i as usize] };
        let threshold = fraction * self.total() as f64;
        let mut peaks = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            let h = s[i];
            if h > at(i as isize - 1) && h > at(j as isize + 1) {
                let mut left_min = h;
                let mut k = i as isize - 1;
                loop {
                    let v = at(k);
                    left_min = left_min.min(v);
                    if k < 0 || v > h {
                        break;
                    }
                    k -= 1;
                }
                let mut right_min = h;
                let mut k = j as isize + 1;
                loop {
                    let v = at(k);
                    right_min = right_min.min(v);
                    if k >= n as isize || v > h {
                        break;
                    }
                    k += 1;
                }
                if h - left_min.max(right_min) >= threshold {
                    peaks.push((i + j) / 2);
                }
            }
            i = j + 1;
        }
        peaks
    }

    /// Bin centers of [`Histogram::peaks`].
    pub fn peak_positions(&self, fraction: f64) -> Vec<f64> {
        let centers = self.centers();
        self.peaks(fraction).into_iter().map(|i| centers[i]).collect()
    }

    /// Fraction of the total count in bins whose centers satisfy `|x| < r`.
    pub fn mass_within(&self, r: f64) -> f64 {
        let inside: u64 = self.centers().iter().zip(&self.counts).filter(|(c, _)| c.abs() < r).map(|(_, n)| n).sum();
        inside as f64 / self.total().max(1) as f64
    }
}

/// Histogram of `X` over the rounds `window = (start, end)` (1-based,
/// inclusive; default the whole record).
pub fn polarization_histogram(ens: &EnsembleResult, bins: usize, window: Option<(u64, u64)>) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::InvalidInput("at least two bins are required".into()));
    }
    let window = window.unwrap_or((1, ens.m_max));
    let mut counts = vec![0u64; bins];
    for r in &ens.records {
        let x = r.polarization_in(window.0, window.1)?;
        counts[Histogram::bin_of(bins, x)] += 1;
    }
    let edges = (0..=bins).map(|i| -0.5 + i as f64 / bins as f64).collect();
    Ok(Histogram { edges, counts, window })
}

/// Partition of `[−1/2, 1/2]` into polarization classes. Each boundary
/// value belongs to the class nearer `X = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    boundaries: Vec<f64>,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self {
            boundaries: vec![-0.15, 0.15],
        }
    }
}

impl ClassThresholds {
    /// Interior boundaries, strictly increasing inside `(−1/2, 1/2)`.
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.iter().any(|b| !b.is_finite() || *b <= -0.5 || *b >= 0.5) {
            return Err(Error::InvalidThresholds("boundaries must lie strictly inside (-0.5, 0.5)".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidThresholds("boundaries must be strictly increasing".into()));
        }
        Ok(Self { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_classes(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn classify(&self, x: f64) -> usize {
        self.boundaries.iter().filter(|&&b| if b < 0.0 { x >= b } else { x > b }).count()
    }

    /// Interval label such as `[-0.5,-0.15)`.
    pub fn label(&self, class: usize) -> String {
        let lo = if class == 0 { -0.5 } else { self.boundaries[class - 1] };
        let hi = if class == self.boundaries.len() { 0.5 } else { self.boundaries[class] };
        let open_lo = class > 0 && lo >= 0.0;
        let open_hi = class < self.boundaries.len() && hi < 0.0;
        format!(
            "{}{lo},{hi}{}",
            if open_lo { '(' } else { '[' },
            if open_hi { ')' } else { ']' }
        )
    }
}

/// Per-class mean of one observable at each checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCurves {
    pub checkpoints: Vec<u64>,
    pub labels: Vec<String>,
    /// `means[class][k]`; `NaN` for empty classes.
    pub means: Vec<Vec<f64>>,
    pub populations: Vec<Vec<u64>>,
}

/// Classifies every trajectory at each checkpoint by its polarization over
/// the record so far and averages the named observable within each class.
pub fn classify_and_average(ens: &EnsembleResult, thresholds: &ClassThresholds, observable: &str) -> Result<ClassCurves> {
    let j = ens
        .observable_names
        .iter()
        .position(|n| n == observable)
        .ok_or_else(|| Error::InvalidInput(format!("unknown observable '{observable}'")))?;
    let nc = thresholds.n_classes();
    let nk = ens.checkpoints.len();
    let mut sums = vec![vec![0.0; nk]; nc];
    let mut populations = vec![vec![0u64; nk]; nc];
    for r in &ens.records {
        for (k, &cp) in ens.checkpoints.iter().enumerate() {
            let class = thresholds.classify(r.polarization_in(1, cp)?);
            sums[class][k] += r.observables[k][j];
            populations[class][k] += 1;
        }
    }
    let means = sums
        .iter()
        .zip(&populations)
        .map(|(s, p)| s.iter().zip(p).map(|(v, &n)| if n == 0 { f64::NAN } else { v / n as f64 }).collect())
        .collect();
    Ok(ClassCurves {
        checkpoints: ens.checkpoints.clone(),
        labels: (0..nc).map(|c| thresholds.label(c)).collect(),
        means,
        populations,
    })
}
