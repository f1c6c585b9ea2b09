//! Dense statevector simulation.
//!
//! Basis index convention: qubit 0 is the most significant bit, so for a
//! two-qubit register the amplitude order is `|00⟩, |01⟩, |10⟩, |11⟩` with
//! the left label belonging to qubit 0.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 12;

/// Gate kinds understood by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    H,
    RX,
    RY,
    RZ,
    Phase,
    U3,
    CNOT,
    CRX,
    CRY,
    CRZ,
    ZZ,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::RX => "RX",
            GateKind::RY => "RY",
            GateKind::RZ => "RZ",
            GateKind::Phase => "PHASE",
            GateKind::U3 => "U3",
            GateKind::CNOT => "CNOT",
            GateKind::CRX => "CRX",
            GateKind::CRY => "CRY",
            GateKind::CRZ => "CRZ",
            GateKind::ZZ => "ZZ",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "H" => GateKind::H,
            "RX" => GateKind::RX,
            "RY" => GateKind::RY,
            "RZ" => GateKind::RZ,
            "PHASE" => GateKind::Phase,
            "U3" => GateKind::U3,
            "CNOT" => GateKind::CNOT,
            "CRX" => GateKind::CRX,
            "CRY" => GateKind::CRY,
            "CRZ" => GateKind::CRZ,
            "ZZ" => GateKind::ZZ,
            _ => return None,
        })
    }

    /// Number of wires the gate acts on.
    pub fn arity(self) -> usize {
        match self {
            GateKind::CNOT | GateKind::CRX | GateKind::CRY | GateKind::CRZ | GateKind::ZZ => 2,
            _ => 1,
        }
    }

    /// Number of angles the gate consumes.
    pub fn angle_count(self) -> usize {
        match self {
            GateKind::H | GateKind::CNOT => 0,
            GateKind::U3 => 3,
            _ => 1,
        }
    }
}

/// A pure state of `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The computational basis state `|0…0⟩`.
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::QubitBudget { requested: n_qubits });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amplitudes })
    }

    /// Wraps raw amplitudes. The length must be a power of two within budget;
    /// normalisation is the caller's responsibility.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Shape(alloc::format!("{len} amplitudes is not 2^n")));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(Error::QubitBudget { requested: n_qubits });
        }
        Ok(StateVector { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> Result<usize> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
        }
        Ok(1 << (self.n_qubits - 1 - qubit))
    }

    /// Applies `kind` on `targets` with already-resolved angles.
    ///
    /// For controlled kinds `targets[0]` is the control wire.
    pub fn apply_gate(&mut self, kind: GateKind, targets: &[usize], angles: &[f64]) -> Result<()> {
        if angles.len() != kind.angle_count() {
            return Err(Error::AngleCount {
                kind: kind.name(),
                expected: kind.angle_count(),
                got: angles.len(),
            });
        }
        if targets.len() != kind.arity() || (targets.len() == 2 && targets[0] == targets[1]) {
            return Err(Error::InvalidTargets { kind: kind.name(), targets: targets.len() });
        }
        match kind {
            GateKind::CNOT => {
                let (c, t) = (self.mask(targets[0])?, self.mask(targets[1])?);
                for i in 0..self.amplitudes.len() {
                    if i & c != 0 && i & t == 0 {
                        self.amplitudes.swap(i, i | t);
                    }
                }
            }
            GateKind::CRX | GateKind::CRY | GateKind::CRZ => {
                let base = match kind {
                    GateKind::CRX => GateKind::RX,
                    GateKind::CRY => GateKind::RY,
                    _ => GateKind::RZ,
                };
                let m = single_qubit_matrix(base, angles);
                let (c, t) = (self.mask(targets[0])?, self.mask(targets[1])?);
                self.apply_2x2(t, Some(c), &m);
            }
            GateKind::ZZ => {
                let (a, b) = (self.mask(targets[0])?, self.mask(targets[1])?);
                let half = 0.5 * angles[0];
                let same = Complex64::new(libm::cos(half), -libm::sin(half));
                let diff = same.conj();
                for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                    let parity = ((i & a != 0) as u8) ^ ((i & b != 0) as u8);
                    *amp *= if parity == 0 { same } else { diff };
                }
            }
            _ => {
                let m = single_qubit_matrix(kind, angles);
                let t = self.mask(targets[0])?;
                self.apply_2x2(t, None, &m);
            }
        }
        Ok(())
    }

    fn apply_2x2(&mut self, target: usize, control: Option<usize>, m: &[[Complex64; 2]; 2]) {
        for i in 0..self.amplitudes.len() {
            if i & target != 0 {
                continue;
            }
            if let Some(c) = control {
                if i & c == 0 {
                    continue;
                }
            }
            let j = i | target;
            let (a, b) = (self.amplitudes[i], self.amplitudes[j]);
            self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
            self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
        }
    }

    /// `⟨Z_qubit⟩`, in `[-1, 1]`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        let mask = self.mask(qubit)?;
        let value = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum::<f64>();
        Ok(value.clamp(-1.0, 1.0))
    }

    /// Born-rule probabilities of every basis state.
    pub fn born_probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn single_qubit_matrix(kind: GateKind, angles: &[f64]) -> [[Complex64; 2]; 2] {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let cis = |phi: f64| Complex64::new(libm::cos(phi), libm::sin(phi));
    match kind {
        GateKind::H => {
            let s = core::f64::consts::FRAC_1_SQRT_2;
            [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]]
        }
        GateKind::RX => {
            let (co, si) = (libm::cos(0.5 * angles[0]), libm::sin(0.5 * angles[0]));
            [[c(co, 0.0), c(0.0, -si)], [c(0.0, -si), c(co, 0.0)]]
        }
        GateKind::RY => {
            let (co, si) = (libm::cos(0.5 * angles[0]), libm::sin(0.5 * angles[0]));
            [[c(co, 0.0), c(-si, 0.0)], [c(si, 0.0), c(co, 0.0)]]
        }
        GateKind::RZ => [[cis(-0.5 * angles[0]), c(0.0, 0.0)], [c(0.0, 0.0), cis(0.5 * angles[0])]],
        GateKind::Phase => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), cis(angles[0])]],
        GateKind::U3 => {
            let (theta, phi, lambda) = (angles[0], angles[1], angles[2]);
            let (co, si) = (libm::cos(0.5 * theta), libm::sin(0.5 * theta));
            [
                [c(co, 0.0), -cis(lambda) * si],
                [cis(phi) * si, cis(phi + lambda) * co],
            ]
        }
        _ => unreachable!("two-qubit kind {:?} has no 2x2 matrix", kind),
    }
}

/// Per-qubit Pauli-Z measurement selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observable {
    flags: Vec<bool>,
}

impl Observable {
    pub fn new(flags: Vec<bool>) -> Result<Self> {
        if !flags.iter().any(|&f| f) {
            return Err(Error::Empty("observable flags"));
        }
        Ok(Observable { flags })
    }

    /// `Z` on every wire of an `n`-qubit register.
    pub fn all_z(n_qubits: usize) -> Self {
        Observable { flags: vec![true; n_qubits] }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    /// Expectations of the flagged wires, in wire order.
    pub fn measure(&self, state: &StateVector) -> Result<Vec<f64>> {
        if self.flags.len() != state.n_qubits() {
            return Err(Error::Shape(alloc::format!(
                "observable covers {} wires, state has {}",
                self.flags.len(),
                state.n_qubits()
            )));
        }
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(q, _)| state.expectation_z(q))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: Complex64, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-12 && (a.im - im).abs() < 1e-12
    }

    #[test]
    fn init_state_is_all_zeros_basis() {
        let s = StateVector::new(1).unwrap();
        assert_eq!(s.amplitudes(), &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let s = StateVector::new(2).unwrap();
        assert_eq!(s.amplitudes().len(), 4);
        assert_eq!(s.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm_sqr() == 0.0));
    }

    #[test]
    fn init_state_rejects_budget() {
        let err = StateVector::new(13).unwrap_err();
        assert_eq!(err, Error::QubitBudget { requested: 13 });
        assert!(alloc::format!("{err}").contains("qubit budget exceeded"));
        assert!(StateVector::new(0).is_err());
    }

    #[test]
    fn rx_pi_flips_with_phase() {
        let mut s = StateVector::new(1).unwrap();
        s.apply_gate(GateKind::RX, &[0], &[PI]).unwrap();
        assert!(close(s.amplitudes()[0], 0.0, 0.0));
        assert!(close(s.amplitudes()[1], 0.0, -1.0));
        assert!((s.expectation_z(0).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hadamard_and_bell() {
        let mut s = StateVector::new(1).unwrap();
        s.apply_gate(GateKind::H, &[0], &[]).unwrap();
        assert!(close(s.amplitudes()[0], FRAC_1_SQRT_2, 0.0));
        assert!(close(s.amplitudes()[1], FRAC_1_SQRT_2, 0.0));
        assert_eq!(s.born_probabilities().iter().map(|p| (p * 1e12).round()).collect::<Vec<_>>(), [0.5e12, 0.5e12]);

        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let mut bell = StateVector::from_amplitudes(vec![h, z, h, z]).unwrap();
        bell.apply_gate(GateKind::CNOT, &[0, 1], &[]).unwrap();
        assert!(close(bell.amplitudes()[0], FRAC_1_SQRT_2, 0.0));
        assert!(close(bell.amplitudes()[1], 0.0, 0.0));
        assert!(close(bell.amplitudes()[2], 0.0, 0.0));
        assert!(close(bell.amplitudes()[3], FRAC_1_SQRT_2, 0.0));
    }

    #[test]
    fn expectation_examples() {
        let s = StateVector::new(1).unwrap();
        assert_eq!(s.expectation_z(0).unwrap(), 1.0);
        let mut s = StateVector::new(1).unwrap();
        s.apply_gate(GateKind::RX, &[0], &[PI / 2.0]).unwrap();
        assert!(s.expectation_z(0).unwrap().abs() < 1e-12);
        assert!(matches!(s.expectation_z(1), Err(Error::QubitOutOfRange { .. })));
    }

    #[test]
    fn born_basis_state() {
        let s = StateVector::new(2).unwrap();
        assert_eq!(s.born_probabilities(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn angle_and_target_errors() {
        let mut s = StateVector::new(2).unwrap();
        assert!(matches!(
            s.apply_gate(GateKind::RX, &[0], &[]),
            Err(Error::AngleCount { expected: 1, got: 0, .. })
        ));
        assert!(matches!(
            s.apply_gate(GateKind::U3, &[0], &[1.0]),
            Err(Error::AngleCount { expected: 3, .. })
        ));
        assert!(matches!(s.apply_gate(GateKind::H, &[2], &[]), Err(Error::QubitOutOfRange { .. })));
        assert!(matches!(s.apply_gate(GateKind::CNOT, &[1, 1], &[]), Err(Error::InvalidTargets { .. })));
        assert!(matches!(s.apply_gate(GateKind::CNOT, &[1], &[]), Err(Error::InvalidTargets { .. })));
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let mut s = StateVector::new(2).unwrap();
        s.apply_gate(GateKind::RX, &[0], &[PI]).unwrap();
        // |10⟩ has index 2
        assert!((s.amplitudes()[2].norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn u3_matches_rz_ry_rz_up_to_phase() {
        let (t, p, l) = (0.7, -1.3, 2.1);
        let mut a = StateVector::new(1).unwrap();
        a.apply_gate(GateKind::H, &[0], &[]).unwrap();
        let mut b = a.clone();
        a.apply_gate(GateKind::U3, &[0], &[t, p, l]).unwrap();
        b.apply_gate(GateKind::RZ, &[0], &[l]).unwrap();
        b.apply_gate(GateKind::RY, &[0], &[t]).unwrap();
        b.apply_gate(GateKind::RZ, &[0], &[p]).unwrap();
        let overlap: Complex64 = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x.conj() * y).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zz_matches_cnot_rz_cnot() {
        let mut a = StateVector::new(2).unwrap();
        a.apply_gate(GateKind::H, &[0], &[]).unwrap();
        a.apply_gate(GateKind::RY, &[1], &[0.4]).unwrap();
        let mut b = a.clone();
        a.apply_gate(GateKind::ZZ, &[0, 1], &[0.9]).unwrap();
        b.apply_gate(GateKind::CNOT, &[0, 1], &[]).unwrap();
        b.apply_gate(GateKind::RZ, &[1], &[0.9]).unwrap();
        b.apply_gate(GateKind::CNOT, &[0, 1], &[]).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn observable_selects_flagged_wires() {
        let mut s = StateVector::new(3).unwrap();
        s.apply_gate(GateKind::RX, &[1], &[PI]).unwrap();
        let obs = Observable::new(vec![false, true, true]).unwrap();
        let m = obs.measure(&s).unwrap();
        assert!((m[0] + 1.0).abs() < 1e-12 && (m[1] - 1.0).abs() < 1e-12);
        assert!(Observable::new(vec![false, false]).is_err());
    }
}
