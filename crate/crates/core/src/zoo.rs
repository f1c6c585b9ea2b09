//! The higher-order embedding and the eight calculation-layer architectures.
//!
//! Gate content of each calculation layer (n wires, chain = 0→1→…→n−1,
//! ring = chain plus n−1→0):
//!
//! | id          | rotations per wire | entanglers            |
//! |-------------|--------------------|-----------------------|
//! | MaticI      | RX                 | CNOT ring             |
//! | MaticII     | U3                 | CNOT ring             |
//! | Nikoloska   | RX then PHASE      | CNOT chain            |
//! | Romero      | RY                 | CNOT chain            |
//! | CircuitI    | U3                 | CNOT chain            |
//! | CircuitII   | U3                 | CR chain (trainable)  |
//! | CircuitIII  | RY                 | CR chain (trainable)  |
//! | CircuitIV   | RY                 | CR chain + CR n−1→0   |

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::circuit::{AngleExpr, CircuitTemplate, Gate, Layering};
use crate::error::{Error, Result};
use crate::statevector::GateKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArchitectureId {
    MaticI,
    MaticII,
    Nikoloska,
    Romero,
    CircuitI,
    CircuitII,
    CircuitIII,
    CircuitIV,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 8] = [
        ArchitectureId::MaticI,
        ArchitectureId::MaticII,
        ArchitectureId::Nikoloska,
        ArchitectureId::Romero,
        ArchitectureId::CircuitI,
        ArchitectureId::CircuitII,
        ArchitectureId::CircuitIII,
        ArchitectureId::CircuitIV,
    ];

    /// Config identifier, e.g. `circuit_iii`.
    pub fn id(self) -> &'static str {
        match self {
            ArchitectureId::MaticI => "matic_i",
            ArchitectureId::MaticII => "matic_ii",
            ArchitectureId::Nikoloska => "nikoloska",
            ArchitectureId::Romero => "romero",
            ArchitectureId::CircuitI => "circuit_i",
            ArchitectureId::CircuitII => "circuit_ii",
            ArchitectureId::CircuitIII => "circuit_iii",
            ArchitectureId::CircuitIV => "circuit_iv",
        }
    }

    /// Human-readable label for plots.
    pub fn label(self) -> &'static str {
        match self {
            ArchitectureId::MaticI => "Matic I",
            ArchitectureId::MaticII => "Matic II",
            ArchitectureId::Nikoloska => "Nikoloska",
            ArchitectureId::Romero => "Romero",
            ArchitectureId::CircuitI => "Circuit I",
            ArchitectureId::CircuitII => "Circuit II",
            ArchitectureId::CircuitIII => "Circuit III",
            ArchitectureId::CircuitIV => "Circuit IV",
        }
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        ArchitectureId::ALL.into_iter().find(|a| a.id() == s).ok_or_else(|| {
            let valid: Vec<&str> = ArchitectureId::ALL.iter().map(|a| a.id()).collect();
            Error::InvalidSpec(format!("unknown architecture `{s}`; valid ids: {}", valid.join(", ")))
        })
    }
}

/// Which wire pairs receive a ZZ feature term in the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairTopology {
    /// Every pair `i < j`.
    #[default]
    Full,
    /// Only neighbours `(i, i+1)`.
    Adjacent,
}

/// Rotation axis of the trainable controlled entanglers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrAxis {
    #[default]
    X,
    Y,
    Z,
}

impl CrAxis {
    fn kind(self) -> GateKind {
        match self {
            CrAxis::X => GateKind::CRX,
            CrAxis::Y => GateKind::CRY,
            CrAxis::Z => GateKind::CRZ,
        }
    }
}

/// A gate run with its slot usage, before assembly into a template.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub gates: Vec<Gate>,
    pub param_slots: usize,
    pub input_slots: usize,
}

/// Higher-order embedding: H on every wire, `RZ(2 z_i)` on wire i, then for
/// each pair `CNOT(i,j) · RZ(2(π−z_i)(π−z_j)) on j · CNOT(i,j)`.
pub fn build_embedding(n_qubits: usize, input_dim: usize, topology: PairTopology) -> Result<Fragment> {
    if n_qubits < 2 {
        return Err(Error::InvalidSpec(format!("embedding needs at least 2 qubits, got {n_qubits}")));
    }
    if input_dim != n_qubits {
        return Err(Error::SlotCount { what: "embedding input", expected: n_qubits, got: input_dim });
    }
    let mut gates = Vec::new();
    for q in 0..n_qubits {
        gates.push(Gate::fixed(GateKind::H, &[q], &[]));
    }
    for q in 0..n_qubits {
        gates.push(Gate::fixed(GateKind::RZ, &[q], &[AngleExpr::Input { slot: q, scale: 2.0 }]));
    }
    for i in 0..n_qubits {
        for j in i + 1..n_qubits {
            if topology == PairTopology::Adjacent && j != i + 1 {
                continue;
            }
            gates.push(Gate::fixed(GateKind::CNOT, &[i, j], &[]));
            gates.push(Gate::fixed(GateKind::RZ, &[j], &[AngleExpr::PairFeature { a: i, b: j }]));
            gates.push(Gate::fixed(GateKind::CNOT, &[i, j], &[]));
        }
    }
    Ok(Fragment { gates, param_slots: 0, input_slots: n_qubits })
}

/// One calculation layer whose parameters are numbered from `param_offset`.
pub fn build_calculation_layer(
    arch: ArchitectureId,
    n_qubits: usize,
    param_offset: usize,
    cr_axis: CrAxis,
) -> Result<Fragment> {
    use ArchitectureId::*;
    if n_qubits < 2 {
        return Err(Error::InvalidSpec(format!("calculation layer needs at least 2 qubits, got {n_qubits}")));
    }
    let mut gates = Vec::new();
    let mut next = param_offset;
    let mut param = || {
        let p = AngleExpr::Param(next);
        next += 1;
        p
    };
    for q in 0..n_qubits {
        match arch {
            MaticI => gates.push(Gate::fixed(GateKind::RX, &[q], &[param()])),
            Romero | CircuitIII | CircuitIV => gates.push(Gate::fixed(GateKind::RY, &[q], &[param()])),
            Nikoloska => {
                gates.push(Gate::fixed(GateKind::RX, &[q], &[param()]));
                gates.push(Gate::fixed(GateKind::Phase, &[q], &[param()]));
            }
            MaticII | CircuitI | CircuitII => {
                let angles = [param(), param(), param()];
                gates.push(Gate::fixed(GateKind::U3, &[q], &angles));
            }
        }
    }
    let chain = (0..n_qubits - 1).map(|i| (i, i + 1));
    match arch {
        MaticI | MaticII => {
            for (c, t) in chain.chain(core::iter::once((n_qubits - 1, 0))) {
                gates.push(Gate::fixed(GateKind::CNOT, &[c, t], &[]));
            }
        }
        Nikoloska | Romero | CircuitI => {
            for (c, t) in chain {
                gates.push(Gate::fixed(GateKind::CNOT, &[c, t], &[]));
            }
        }
        CircuitII | CircuitIII => {
            for (c, t) in chain {
                gates.push(Gate::fixed(cr_axis.kind(), &[c, t], &[param()]));
            }
        }
        CircuitIV => {
            for (c, t) in chain.chain(core::iter::once((n_qubits - 1, 0))) {
                gates.push(Gate::fixed(cr_axis.kind(), &[c, t], &[param()]));
            }
        }
    }
    Ok(Fragment { gates, param_slots: next - param_offset, input_slots: 0 })
}

/// Full description of an assembled PQC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PqcSpec {
    pub arch: ArchitectureId,
    pub n_qubits: usize,
    pub layers: usize,
    pub reupload: bool,
    pub topology: PairTopology,
    pub cr_axis: CrAxis,
}

impl Default for PqcSpec {
    fn default() -> Self {
        PqcSpec {
            arch: ArchitectureId::CircuitIII,
            n_qubits: 4,
            layers: 1,
            reupload: false,
            topology: PairTopology::Full,
            cr_axis: CrAxis::X,
        }
    }
}

impl PqcSpec {
    pub fn new(arch: ArchitectureId, n_qubits: usize, layers: usize, reupload: bool) -> Self {
        PqcSpec { arch, n_qubits, layers, reupload, ..PqcSpec::default() }
    }
}

/// Embedding followed by `layers` calculation layers with independent
/// parameters; with `reupload` every calculation layer is preceded by its own
/// embedding block over the same noise inputs.
pub fn assemble_pqc(spec: &PqcSpec) -> Result<CircuitTemplate> {
    if spec.layers == 0 {
        return Err(Error::InvalidSpec(format!("layers must be >= 1, got {}", spec.layers)));
    }
    let embedding = build_embedding(spec.n_qubits, spec.n_qubits, spec.topology)?;
    let mut gates = Vec::new();
    let mut params = 0;
    for layer in 0..spec.layers {
        if layer == 0 || spec.reupload {
            gates.extend(embedding.gates.iter().cloned());
        }
        let calc = build_calculation_layer(spec.arch, spec.n_qubits, params, spec.cr_axis)?;
        params += calc.param_slots;
        gates.extend(calc.gates);
    }
    CircuitTemplate::new(
        spec.n_qubits,
        gates,
        params,
        embedding.input_slots,
        Layering { layers: spec.layers, reupload: spec.reupload },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn template(arch: ArchitectureId, layers: usize, reupload: bool) -> CircuitTemplate {
        assemble_pqc(&PqcSpec::new(arch, 4, layers, reupload)).unwrap()
    }

    #[test]
    fn embedding_two_qubits_at_zero() {
        let frag = build_embedding(2, 2, PairTopology::Full).unwrap();
        let kinds: Vec<GateKind> = frag.gates.iter().map(|g| g.kind).collect();
        use GateKind::*;
        assert_eq!(kinds, [H, H, RZ, RZ, CNOT, RZ, CNOT]);
        let pair = frag.gates[5].angles[0];
        assert_eq!(pair, AngleExpr::PairFeature { a: 0, b: 1 });
        // at z = 0: RZ(0), RZ(0), RZ(2π²)
        let z = [0.0, 0.0];
        assert_eq!(2.0 * z[0], 0.0);
        let resolved = 2.0 * (PI - z[0]) * (PI - z[1]);
        assert!((resolved - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn embedding_counts() {
        let frag = build_embedding(4, 4, PairTopology::Full).unwrap();
        assert_eq!(frag.input_slots, 4);
        assert_eq!(frag.param_slots, 0);
        assert_eq!(frag.gates.len(), 4 + 4 + 6 * 3);
        let adj = build_embedding(4, 4, PairTopology::Adjacent).unwrap();
        assert_eq!(adj.gates.len(), 4 + 4 + 3 * 3);
        assert!(build_embedding(4, 3, PairTopology::Full).is_err());
        assert!(build_embedding(1, 1, PairTopology::Full).is_err());
    }

    #[test]
    fn calculation_layer_param_counts() {
        use ArchitectureId::*;
        let expect = [
            (MaticI, 4, 4),
            (MaticII, 12, 4),
            (Nikoloska, 8, 3),
            (Romero, 4, 3),
            (CircuitI, 12, 3),
            (CircuitII, 15, 3),
            (CircuitIII, 7, 3),
            (CircuitIV, 8, 4),
        ];
        for (arch, params, entanglers) in expect {
            let frag = build_calculation_layer(arch, 4, 0, CrAxis::X).unwrap();
            assert_eq!(frag.param_slots, params, "{arch}");
            let ent = frag.gates.iter().filter(|g| g.kind.arity() == 2).count();
            assert_eq!(ent, entanglers, "{arch}");
        }
    }

    #[test]
    fn matic_i_is_rx_and_cnot_ring() {
        let frag = build_calculation_layer(ArchitectureId::MaticI, 4, 0, CrAxis::X).unwrap();
        assert!(frag.gates[..4].iter().all(|g| g.kind == GateKind::RX));
        let ring: Vec<Vec<usize>> = frag.gates[4..].iter().map(|g| g.targets.clone()).collect();
        assert_eq!(ring, [[0, 1], [1, 2], [2, 3], [3, 0]]);
        assert!(frag.gates[4..].iter().all(|g| g.kind == GateKind::CNOT));
    }

    #[test]
    fn circuit_iv_adds_first_last_entangler() {
        let iii = template(ArchitectureId::CircuitIII, 1, false);
        let iv = template(ArchitectureId::CircuitIV, 1, false);
        assert_eq!(iv.entangler_count(), iii.entangler_count() + 1);
        let last = iv.gates().last().unwrap();
        assert_eq!(last.kind, GateKind::CRX);
        assert_eq!(last.targets, [3, 0]);
    }

    #[test]
    fn layering_scales_params() {
        for arch in ArchitectureId::ALL {
            let one = template(arch, 1, false).param_count();
            assert_eq!(template(arch, 2, false).param_count(), 2 * one);
            assert_eq!(template(arch, 3, true).param_count(), 3 * one);
        }
    }

    #[test]
    fn reupload_repeats_embedding() {
        let l2 = template(ArchitectureId::CircuitIII, 2, false);
        let l2re = template(ArchitectureId::CircuitIII, 2, true);
        let h = |t: &CircuitTemplate| t.gates().iter().filter(|g| g.kind == GateKind::H).count();
        assert_eq!(h(&l2), 4);
        assert_eq!(h(&l2re), 8);
        assert_eq!(l2re.input_count(), 4);
        assert_eq!(l2re.layering(), Layering { layers: 2, reupload: true });
        assert!(assemble_pqc(&PqcSpec::new(ArchitectureId::Romero, 4, 0, false)).is_err());
    }

    #[test]
    fn param_count_examples() {
        assert_eq!(template(ArchitectureId::MaticI, 1, false).param_count(), 4);
        assert_eq!(template(ArchitectureId::Romero, 1, false).param_count(), 4);
        assert_eq!(template(ArchitectureId::CircuitII, 1, false).param_count(), 15);
    }

    #[test]
    fn parse_ids() {
        assert_eq!("circuit_iii".parse::<ArchitectureId>().unwrap(), ArchitectureId::CircuitIII);
        let err = "circuit_v".parse::<ArchitectureId>().unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("matic_i") && msg.contains("circuit_iv"), "{msg}");
    }

    #[test]
    fn cr_axis_is_configurable() {
        let spec = PqcSpec { cr_axis: CrAxis::Z, ..PqcSpec::default() };
        let t = assemble_pqc(&spec).unwrap();
        assert!(t.gates().iter().any(|g| g.kind == GateKind::CRZ));
        assert!(!t.gates().iter().any(|g| g.kind == GateKind::CRX));
    }
}
