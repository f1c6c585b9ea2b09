//! Parametrised circuit templates, execution and parameter-shift gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::statevector::{GateKind, StateVector};

/// Where a gate angle comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleExpr {
    /// Trainable parameter slot, used verbatim.
    Param(usize),
    /// `scale · z[slot]` for a noise input slot.
    Input { slot: usize, scale: f64 },
    /// Second-order feature `2(π − z[a])(π − z[b])`.
    PairFeature { a: usize, b: usize },
    Const(f64),
}

impl AngleExpr {
    fn resolve(&self, params: &[f64], inputs: &[f64]) -> f64 {
        match *self {
            AngleExpr::Param(j) => params[j],
            AngleExpr::Input { slot, scale } => scale * inputs[slot],
            AngleExpr::PairFeature { a, b } => 2.0 * (PI - inputs[a]) * (PI - inputs[b]),
            AngleExpr::Const(v) => v,
        }
    }
}

impl core::fmt::Display for AngleExpr {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            AngleExpr::Param(j) => write!(f, "p{j}"),
            AngleExpr::Input { slot, scale: 1.0 } => write!(f, "z{slot}"),
            AngleExpr::Input { slot, scale } => write!(f, "{scale}*z{slot}"),
            AngleExpr::PairFeature { a, b } => write!(f, "zz(z{a},z{b})"),
            AngleExpr::Const(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    /// Control first for controlled kinds.
    pub targets: Vec<usize>,
    pub angles: Vec<AngleExpr>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>, angles: Vec<AngleExpr>) -> Result<Self> {
        if targets.len() != kind.arity() || (targets.len() == 2 && targets[0] == targets[1]) {
            return Err(Error::InvalidTargets { kind: kind.name(), targets: targets.len() });
        }
        if angles.len() != kind.angle_count() {
            return Err(Error::AngleCount {
                kind: kind.name(),
                expected: kind.angle_count(),
                got: angles.len(),
            });
        }
        Ok(Gate { kind, targets, angles })
    }

    pub(crate) fn fixed(kind: GateKind, targets: &[usize], angles: &[AngleExpr]) -> Self {
        Gate::new(kind, targets.to_vec(), angles.to_vec()).expect("well-formed built-in gate")
    }
}

/// Depth configuration a template was assembled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layering {
    pub layers: usize,
    pub reupload: bool,
}

impl Default for Layering {
    fn default() -> Self {
        Layering { layers: 1, reupload: false }
    }
}

/// An immutable gate list with symbolic parameter and input slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitTemplate {
    n_qubits: usize,
    gates: Vec<Gate>,
    param_slots: usize,
    input_slots: usize,
    layering: Layering,
}

impl CircuitTemplate {
    /// Validates wires and slot references. Every declared slot must be used
    /// by at least one gate.
    pub fn new(
        n_qubits: usize,
        gates: Vec<Gate>,
        param_slots: usize,
        input_slots: usize,
        layering: Layering,
    ) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::statevector::MAX_QUBITS {
            return Err(Error::QubitBudget { requested: n_qubits });
        }
        let mut params_seen = vec![false; param_slots];
        let mut inputs_seen = vec![false; input_slots];
        for gate in &gates {
            if gate.targets.len() != gate.kind.arity()
                || gate.angles.len() != gate.kind.angle_count()
                || (gate.targets.len() == 2 && gate.targets[0] == gate.targets[1])
            {
                return Err(Error::InvalidTargets { kind: gate.kind.name(), targets: gate.targets.len() });
            }
            if let Some(&q) = gate.targets.iter().find(|&&q| q >= n_qubits) {
                return Err(Error::QubitOutOfRange { qubit: q, n_qubits });
            }
            for angle in &gate.angles {
                let mut mark_input = |slot: usize| -> Result<()> {
                    *inputs_seen.get_mut(slot).ok_or(Error::SlotCount {
                        what: "input",
                        expected: input_slots,
                        got: slot + 1,
                    })? = true;
                    Ok(())
                };
                match *angle {
                    AngleExpr::Param(j) => {
                        *params_seen.get_mut(j).ok_or(Error::SlotCount {
                            what: "param",
                            expected: param_slots,
                            got: j + 1,
                        })? = true;
                    }
                    AngleExpr::Input { slot, .. } => mark_input(slot)?,
                    AngleExpr::PairFeature { a, b } => {
                        mark_input(a)?;
                        mark_input(b)?;
                    }
                    AngleExpr::Const(_) => {}
                }
            }
        }
        if params_seen.iter().any(|s| !s) {
            return Err(Error::InvalidSpec(String::from("unreferenced parameter slot")));
        }
        if inputs_seen.iter().any(|s| !s) {
            return Err(Error::InvalidSpec(String::from("unreferenced input slot")));
        }
        Ok(CircuitTemplate { n_qubits, gates, param_slots, input_slots, layering })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn param_count(&self) -> usize {
        self.param_slots
    }

    pub fn input_count(&self) -> usize {
        self.input_slots
    }

    pub fn layering(&self) -> Layering {
        self.layering
    }

    /// Number of two-qubit gates.
    pub fn entangler_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.arity() == 2).count()
    }

    fn check_slots(&self, params: &[f64], inputs: &[f64]) -> Result<()> {
        if params.len() != self.param_slots {
            return Err(Error::SlotCount { what: "param", expected: self.param_slots, got: params.len() });
        }
        if inputs.len() != self.input_slots {
            return Err(Error::SlotCount { what: "input", expected: self.input_slots, got: inputs.len() });
        }
        Ok(())
    }

    /// Final state after applying all gates to `|0…0⟩`.
    pub fn state(&self, params: &[f64], inputs: &[f64]) -> Result<StateVector> {
        self.check_slots(params, inputs)?;
        self.evolve(params, inputs, None)
    }

    // `shift` adds a constant to one angle occurrence: (gate index, angle index, delta).
    fn evolve(&self, params: &[f64], inputs: &[f64], shift: Option<(usize, usize, f64)>) -> Result<StateVector> {
        let mut state = StateVector::new(self.n_qubits)?;
        let mut angles = [0.0f64; 3];
        for (g, gate) in self.gates.iter().enumerate() {
            let n = gate.angles.len();
            for (k, expr) in gate.angles.iter().enumerate() {
                angles[k] = expr.resolve(params, inputs);
                if let Some((sg, sk, delta)) = shift {
                    if sg == g && sk == k {
                        angles[k] += delta;
                    }
                }
            }
            state.apply_gate(gate.kind, &gate.targets, &angles[..n])?;
        }
        Ok(state)
    }

    fn outputs(&self, state: &StateVector) -> Vec<f64> {
        (0..self.n_qubits).map(|q| state.expectation_z(q).expect("qubit in range")).collect()
    }

    /// Per-qubit `⟨Z⟩` after running the circuit from `|0…0⟩`.
    pub fn run(&self, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
        let state = self.state(params, inputs)?;
        Ok(self.outputs(&state))
    }

    /// Analytic Jacobian `∂⟨Z_q⟩/∂θ_j` by parameter-shift rules.
    ///
    /// Single-generator gates (RX, RY, RZ, PHASE, ZZ and each U3 angle, since
    /// U3(θ,φ,λ) ∝ RZ(φ)RY(θ)RZ(λ)) use the two-term rule with shift π/2.
    /// Controlled rotations have generator spectrum {0, ±1/2} and use the
    /// four-term rule with shifts ±π/2, ±3π/2.
    pub fn parameter_shift_jacobian(&self, params: &[f64], inputs: &[f64]) -> Result<Jacobian> {
        self.check_slots(params, inputs)?;
        let rows = self.n_qubits;
        let cols = self.param_slots;
        let mut data = vec![0.0; rows * cols];
        let c_plus = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
        let c_minus = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
        for (g, gate) in self.gates.iter().enumerate() {
            for (k, expr) in gate.angles.iter().enumerate() {
                let AngleExpr::Param(j) = *expr else { continue };
                let eval = |delta: f64| -> Result<Vec<f64>> {
                    Ok(self.outputs(&self.evolve(params, inputs, Some((g, k, delta)))?))
                };
                let grad: Vec<f64> = match gate.kind {
                    GateKind::CRX | GateKind::CRY | GateKind::CRZ => {
                        let (p1, m1) = (eval(FRAC_PI_2)?, eval(-FRAC_PI_2)?);
                        let (p3, m3) = (eval(3.0 * FRAC_PI_2)?, eval(-3.0 * FRAC_PI_2)?);
                        (0..rows)
                            .map(|q| c_plus * (p1[q] - m1[q]) - c_minus * (p3[q] - m3[q]))
                            .collect()
                    }
                    GateKind::H | GateKind::CNOT => unreachable!("angle-free gate"),
                    _ => {
                        let (p, m) = (eval(FRAC_PI_2)?, eval(-FRAC_PI_2)?);
                        (0..rows).map(|q| 0.5 * (p[q] - m[q])).collect()
                    }
                };
                for q in 0..rows {
                    data[q * cols + j] += grad[q];
                }
            }
        }
        Ok(Jacobian { rows, cols, data })
    }

    /// Textual dump, one gate per line: `KIND targets angle-refs`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# qubits={} params={} inputs={} layers={} reupload={}",
            self.n_qubits, self.param_slots, self.input_slots, self.layering.layers, self.layering.reupload
        );
        for gate in &self.gates {
            out.push_str(gate.kind.name());
            for t in &gate.targets {
                let _ = write!(out, " {t}");
            }
            for a in &gate.angles {
                let _ = write!(out, " {a}");
            }
            out.push('\n');
        }
        out
    }
}

/// Row-major `outputs × params` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// `Jᵀ · upstream`.
    pub fn vjp(&self, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.rows {
            return Err(Error::Shape(format!("vjp upstream {} vs {} rows", upstream.len(), self.rows)));
        }
        let mut out = vec![0.0; self.cols];
        for (r, u) in upstream.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += u * self.data[r * self.cols + c];
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper over [`CircuitTemplate::run`].
pub fn run_circuit(template: &CircuitTemplate, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
    template.run(params, inputs)
}

/// Convenience wrapper over [`CircuitTemplate::parameter_shift_jacobian`].
pub fn parameter_shift_grad(template: &CircuitTemplate, params: &[f64], inputs: &[f64]) -> Result<Jacobian> {
    template.parameter_shift_jacobian(params, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kind: GateKind) -> CircuitTemplate {
        let g = Gate::new(kind, vec![0], vec![AngleExpr::Param(0)]).unwrap();
        CircuitTemplate::new(1, vec![g], 1, 0, Layering::default()).unwrap()
    }

    #[test]
    fn empty_template_outputs_ones() {
        let t = CircuitTemplate::new(4, vec![], 0, 0, Layering::default()).unwrap();
        assert_eq!(t.run(&[], &[]).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn rx_layer_flips_selected_wires() {
        let gates = (0..4).map(|q| Gate::new(GateKind::RX, vec![q], vec![AngleExpr::Param(q)]).unwrap()).collect();
        let t = CircuitTemplate::new(4, gates, 4, 0, Layering::default()).unwrap();
        let out = t.run(&[PI, 0.0, PI, 0.0], &[]).unwrap();
        for (o, e) in out.iter().zip([-1.0, 1.0, -1.0, 1.0]) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_rx_shift_gradients() {
        let t = single(GateKind::RX);
        assert!(t.parameter_shift_jacobian(&[0.0], &[]).unwrap().get(0, 0).abs() < 1e-12);
        let g = t.parameter_shift_jacobian(&[FRAC_PI_2], &[]).unwrap().get(0, 0);
        assert!((g + 1.0).abs() < 1e-12);
    }

    #[test]
    fn slot_mismatch_is_rejected() {
        let t = single(GateKind::RY);
        assert!(matches!(t.run(&[], &[]), Err(Error::SlotCount { what: "param", .. })));
        assert!(matches!(t.run(&[0.1], &[0.2]), Err(Error::SlotCount { what: "input", .. })));
    }

    #[test]
    fn template_validation() {
        let g = Gate::new(GateKind::RX, vec![3], vec![AngleExpr::Param(0)]).unwrap();
        assert!(matches!(
            CircuitTemplate::new(2, vec![g], 1, 0, Layering::default()),
            Err(Error::QubitOutOfRange { .. })
        ));
        let g = Gate::new(GateKind::RX, vec![0], vec![AngleExpr::Param(1)]).unwrap();
        assert!(CircuitTemplate::new(2, vec![g], 1, 0, Layering::default()).is_err());
        assert!(CircuitTemplate::new(2, vec![], 1, 0, Layering::default()).is_err());
        assert!(Gate::new(GateKind::CRX, vec![0], vec![AngleExpr::Const(0.0)]).is_err());
    }

    #[test]
    fn controlled_rotation_four_term_rule() {
        // H on control, then CRY(θ): ⟨Z_1⟩ = ½(1 + cos θ), derivative −½ sin θ.
        let gates = vec![
            Gate::new(GateKind::H, vec![0], vec![]).unwrap(),
            Gate::new(GateKind::CRY, vec![0, 1], vec![AngleExpr::Param(0)]).unwrap(),
        ];
        let t = CircuitTemplate::new(2, gates, 1, 0, Layering::default()).unwrap();
        for theta in [0.0, 0.3, 1.7, -2.4] {
            let g = t.parameter_shift_jacobian(&[theta], &[]).unwrap().get(1, 0);
            assert!((g + 0.5 * libm::sin(theta)).abs() < 1e-12, "θ={theta}: {g}");
        }
    }

    #[test]
    fn vjp_contracts_rows() {
        let j = Jacobian { rows: 2, cols: 3, data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        assert_eq!(j.vjp(&[1.0, -1.0]).unwrap(), vec![-3.0, -3.0, -3.0]);
        assert!(j.vjp(&[1.0]).is_err());
    }

    #[test]
    fn dump_format() {
        let gates = vec![
            Gate::new(GateKind::H, vec![0], vec![]).unwrap(),
            Gate::new(GateKind::RZ, vec![0], vec![AngleExpr::Input { slot: 0, scale: 2.0 }]).unwrap(),
            Gate::new(GateKind::CRX, vec![0, 1], vec![AngleExpr::Param(0)]).unwrap(),
            Gate::new(GateKind::RZ, vec![1], vec![AngleExpr::PairFeature { a: 0, b: 1 }]).unwrap(),
        ];
        let t = CircuitTemplate::new(2, gates, 1, 2, Layering::default()).unwrap();
        assert_eq!(
            t.dump(),
            "# qubits=2 params=1 inputs=2 layers=1 reupload=false\nH 0\nRZ 0 2*z0\nCRX 0 1 p0\nRZ 1 zz(z0,z1)\n"
        );
    }
}
