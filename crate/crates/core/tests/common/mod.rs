#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use metachan::hs_algebra::{matrix_exp, Operator};
use metachan::models::{rim_channel, ConditionalMaps, RimSpec};
use metachan::channel::QuantumChannel;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// GUE-like Hermitian matrix with entries of order one.
pub fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> Operator {
    let a = DMatrix::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = (&a + a.adjoint()) * c(0.5, 0.0);
    Operator::new(h).unwrap()
}

pub fn random_unitary(d: usize, rng: &mut ChaCha8Rng) -> Operator {
    let h = random_hermitian(d, rng);
    matrix_exp(&h.scale(c(0.0, 3.0))).unwrap()
}

pub fn diag(entries: &[f64]) -> Operator {
    let d = entries.len();
    Operator::new(DMatrix::from_fn(d, d, |i, j| if i == j { c(entries[i], 0.0) } else { c(0.0, 0.0) })).unwrap()
}

/// `B = σ_z`, `C = σ_x`, `Δφ = π/2`, `t = 1`.
pub fn qubit_rim(gamma: f64) -> (QuantumChannel, ConditionalMaps, RimSpec) {
    let spec = RimSpec::new(Operator::pauli_z(), Operator::pauli_x(), gamma, FRAC_PI_2, 1.0).unwrap();
    let (ch, maps) = rim_channel(&spec).unwrap();
    (ch, maps, spec)
}

/// Prints the verdict line and returns whether it passed.
pub fn verdict(id: &str, ok: bool, detail: &str) -> bool {
    println!("criterion {id}: {} -- {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}
