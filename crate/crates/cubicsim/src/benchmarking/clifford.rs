//! The single-qubit (24-element) and two-qubit (11520-element) Clifford
//! groups, with exact lookup tables and decompositions into the physical
//! primitives: calibrated π / π·2⁻¹ pulses, virtual Z rotations, and the
//! three native two-qubit gates.
//!
//! # Representation and lookup
//!
//! Every element is stored as its unitary matrix together with a canonical
//! key: the matrix is phase-fixed by its first largest-magnitude entry and
//! the entries rounded on a 2⁻²⁰ grid. Group elements have entries drawn from
//! a small discrete set (gaps ≳ 0.2), so the rounding can never merge two
//! distinct elements; the keys give exact product and inverse lookup.
//!
//! # Decompositions
//!
//! Single-qubit Cliffords decompose as Z(ζ)·P with ζ a virtual (zero-cost)
//! Z rotation and P a product of at most two calibrated pulses from the
//! six-pulse alphabet {π@0, π@π/2, π/2@{0, π/2, π, 3π/2}}. A pulse plus a
//! virtual Z already covers every non-diagonal Clifford (Z(a)·R(θ,φ) spans
//! the full two-sided gauge class of R(θ,φ)), so the search finds 4 pulse-free
//! diagonal elements and 20 one-pulse elements.
//!
//! # Two-qubit class structure
//!
//! With native CZ, iSWAP and SWAP the 11520 elements split into the standard
//! four classes, each built from single-qubit layers around at most one
//! native gate:
//!
//! * C₁⊗C₁ (576),
//! * (C₁⊗C₁)·CZ·(S₁⊗S₁) (5184),
//! * (C₁⊗C₁)·iSWAP·(S₁⊗S₁) (5184),
//! * (C₁⊗C₁)·SWAP (576),
//!
//! where S₁ = {I, V, V²} with V = S·H (the order-3 axis cycler). S₁ is a
//! transversal of the left cosets of the 8-element Z-axis-preserving
//! subgroup — the stabilizer of CZ/iSWAP under local right-multiplication —
//! which is exactly the condition for the 11520 products above to be
//! distinct; the table build panics on any collision, so the construction is
//! verified on every run.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4};

use crate::gates::{fsim_unitary, FsimTarget, SqAngle};
use crate::linalg::{C64, C_ONE, C_ZERO};

/// The three native two-qubit Clifford gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TwoQubitGate {
    Cz,
    Iswap,
    Swap,
}

impl TwoQubitGate {
    /// Ideal 4×4 unitary in the (gg, ge, eg, ee) basis.
    pub fn unitary(self) -> Matrix4<C64> {
        let t = self.target();
        fsim_unitary(t.theta_sw, t.theta_cp)
    }

    /// The FSim angles realizing this gate.
    pub fn target(self) -> FsimTarget {
        match self {
            TwoQubitGate::Cz => FsimTarget::CZ,
            TwoQubitGate::Iswap => FsimTarget::ISWAP,
            TwoQubitGate::Swap => FsimTarget::SWAP,
        }
    }

    /// Whether the gate exchanges the two qubits' frames (θ_sw = π).
    pub fn swaps_frames(self) -> bool {
        !matches!(self, TwoQubitGate::Cz)
    }
}

/// One physical pulse: a calibrated rotation angle at an equatorial azimuth.
#[derive(Debug, Clone, Copy)]
pub struct SqPulse {
    pub angle: SqAngle,
    pub azimuth: f64,
}

impl SqPulse {
    /// Ideal qubit-subspace unitary R(θ, φ) = exp(−iθ/2·σ_φ).
    pub fn matrix(&self) -> Matrix2<C64> {
        let theta = match self.angle {
            SqAngle::Pi => PI,
            SqAngle::PiHalf => FRAC_PI_2,
        };
        rotation2(theta, self.azimuth)
    }
}

/// R(θ, φ) on one qubit.
fn rotation2(theta: f64, phi: f64) -> Matrix2<C64> {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    Matrix2::new(
        c,
        C64::new(0.0, -s) * C64::new(0.0, -phi).exp(),
        C64::new(0.0, -s) * C64::new(0.0, phi).exp(),
        c,
    )
}

/// Virtual Z(ζ) = diag(1, e^{iζ}) on one qubit.
fn z2(zeta: f64) -> Matrix2<C64> {
    Matrix2::new(C_ONE, C_ZERO, C_ZERO, C64::new(0.0, zeta).exp())
}

/// The six-pulse decomposition alphabet.
const ALPHABET: [SqPulse; 6] = [
    SqPulse { angle: SqAngle::Pi, azimuth: 0.0 },
    SqPulse { angle: SqAngle::Pi, azimuth: FRAC_PI_2 },
    SqPulse { angle: SqAngle::PiHalf, azimuth: 0.0 },
    SqPulse { angle: SqAngle::PiHalf, azimuth: FRAC_PI_2 },
    SqPulse { angle: SqAngle::PiHalf, azimuth: PI },
    SqPulse { angle: SqAngle::PiHalf, azimuth: 3.0 * FRAC_PI_2 },
];

type Key = Vec<(i64, i64)>;

/// Canonical global-phase-invariant key of a unitary's entries.
fn canonical_key(entries: &[C64]) -> Key {
    const SCALE: f64 = (1u64 << 20) as f64;
    let max = entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = entries
        .iter()
        .find(|z| z.norm() >= max - 1e-6)
        .expect("non-empty matrix");
    let phase = pivot / C64::new(pivot.norm(), 0.0);
    entries
        .iter()
        .map(|z| {
            let w = z / phase;
            ((w.re * SCALE).round() as i64, (w.im * SCALE).round() as i64)
        })
        .collect()
}

fn key2(m: &Matrix2<C64>) -> Key {
    canonical_key(m.as_slice())
}

fn key4(m: &Matrix4<C64>) -> Key {
    canonical_key(m.as_slice())
}

/// One single-qubit Clifford: its matrix and its physical decomposition
/// Z(virtual_z)·Π pulses (temporal order, at most two pulses), equal to the
/// matrix up to global phase.
#[derive(Debug, Clone)]
pub struct Clifford1 {
    pub matrix: Matrix2<C64>,
    pub pulses: Vec<SqPulse>,
    pub virtual_z: f64,
}

/// The 24-element single-qubit Clifford group with exact lookup tables.
pub struct CliffordGroup1 {
    pub elements: Vec<Clifford1>,
    index: HashMap<Key, usize>,
    inverse: Vec<usize>,
}

impl CliffordGroup1 {
    fn build() -> Self {
        let h = Matrix2::new(C_ONE, C_ONE, C_ONE, -C_ONE) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let s = Matrix2::new(C_ONE, C_ZERO, C_ZERO, C64::new(0.0, 1.0));

        // Closure under the generators {H, S}.
        let mut matrices: Vec<Matrix2<C64>> = vec![Matrix2::identity()];
        let mut index = HashMap::new();
        index.insert(key2(&matrices[0]), 0);
        let mut cursor = 0;
        while cursor < matrices.len() {
            let m = matrices[cursor];
            for g in [&h, &s] {
                let prod = g * m;
                let key = key2(&prod);
                if !index.contains_key(&key) {
                    index.insert(key, matrices.len());
                    matrices.push(prod);
                }
            }
            cursor += 1;
        }
        assert_eq!(matrices.len(), 24, "single-qubit Clifford group closure");

        let elements: Vec<Clifford1> = matrices
            .iter()
            .map(|m| {
                let (pulses, virtual_z) =
                    decompose1(m).expect("every Clifford decomposes into <= 2 pulses");
                Clifford1 { matrix: *m, pulses, virtual_z }
            })
            .collect();
        let inverse = matrices
            .iter()
            .map(|m| *index.get(&key2(&m.adjoint())).expect("group is closed under inverse"))
            .collect();
        Self { elements, index, inverse }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// Index of the element equal to `m` up to global phase.
    pub fn find(&self, m: &Matrix2<C64>) -> Option<usize> {
        self.index.get(&key2(m)).copied()
    }

    pub fn inverse(&self, i: usize) -> usize {
        self.inverse[i]
    }

    /// Index of the identity.
    pub fn identity(&self) -> usize {
        self.find(&Matrix2::identity()).expect("identity is in the group")
    }
}

/// Minimal decomposition of a 2×2 Clifford as Z(ζ)·(pulse product).
fn decompose1(u: &Matrix2<C64>) -> Option<(Vec<SqPulse>, f64)> {
    let check = |product: &Matrix2<C64>| -> Option<f64> {
        // Residual u·P† must be diagonal: then u = e^{iγ}·Z(ζ)·P.
        let r = u * product.adjoint();
        if r[(0, 1)].norm() < 1e-9 && r[(1, 0)].norm() < 1e-9 {
            Some(r[(1, 1)].arg() - r[(0, 0)].arg())
        } else {
            None
        }
    };
    if let Some(z) = check(&Matrix2::identity()) {
        return Some((vec![], z));
    }
    for p in ALPHABET {
        if let Some(z) = check(&p.matrix()) {
            return Some((vec![p], z));
        }
    }
    for p in ALPHABET {
        for q in ALPHABET {
            // Temporal order p then q: matrix product M(q)·M(p).
            if let Some(z) = check(&(q.matrix() * p.matrix())) {
                return Some((vec![p, q], z));
            }
        }
    }
    None
}

/// One two-qubit Clifford: its 4×4 matrix and its physical decomposition
/// (temporal order): optional S₁ layer, optional native gate, then a C₁
/// layer. Layer entries are (cubic, transmon) indices into [`CliffordGroup1`].
#[derive(Debug, Clone)]
pub struct Clifford2 {
    pub matrix: Matrix4<C64>,
    /// S₁ pre-layer (applied first), present only in the CZ/iSWAP classes.
    pub pre: Option<(usize, usize)>,
    pub gate: Option<TwoQubitGate>,
    /// C₁ post-layer (applied last).
    pub post: (usize, usize),
}

/// The 11520-element two-qubit Clifford group with exact lookup tables.
pub struct CliffordGroup2 {
    pub elements: Vec<Clifford2>,
    index: HashMap<Key, usize>,
    inverse: Vec<usize>,
}

impl CliffordGroup2 {
    fn build(c1: &CliffordGroup1) -> Self {
        // S₁ = {I, V, V²}, V = S·H.
        let s_mat = Matrix2::new(C_ONE, C_ZERO, C_ZERO, C64::new(0.0, 1.0));
        let h_mat = Matrix2::new(C_ONE, C_ONE, C_ONE, -C_ONE)
            * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let v = s_mat * h_mat;
        let s1: Vec<usize> = [Matrix2::identity(), v, v * v]
            .iter()
            .map(|m| c1.find(m).expect("S1 elements are Cliffords"))
            .collect();

        let mut elements: Vec<Clifford2> = Vec::with_capacity(11520);
        let mut index: HashMap<Key, usize> = HashMap::with_capacity(11520);
        let mut insert = |e: Clifford2| {
            let key = key4(&e.matrix);
            let next = elements.len();
            let prev = index.insert(key, next);
            assert!(prev.is_none(), "two-qubit Clifford class construction collided");
            elements.push(e);
        };

        let kron_c1: Vec<Matrix4<C64>> = c1
            .elements
            .iter()
            .flat_map(|a| c1.elements.iter().map(|b| a.matrix.kronecker(&b.matrix)))
            .collect();
        let n1 = c1.len();
        let kron = |ia: usize, ib: usize| &kron_c1[ia * n1 + ib];

        // C₁⊗C₁ class.
        for ia in 0..n1 {
            for ib in 0..n1 {
                insert(Clifford2 {
                    matrix: *kron(ia, ib),
                    pre: None,
                    gate: None,
                    post: (ia, ib),
                });
            }
        }
        // CZ and iSWAP classes.
        for gate in [TwoQubitGate::Cz, TwoQubitGate::Iswap] {
            let gm = gate.unitary();
            for &sa in &s1 {
                for &sb in &s1 {
                    let right = gm * kron(sa, sb);
                    for ia in 0..n1 {
                        for ib in 0..n1 {
                            insert(Clifford2 {
                                matrix: kron(ia, ib) * right,
                                pre: Some((sa, sb)),
                                gate: Some(gate),
                                post: (ia, ib),
                            });
                        }
                    }
                }
            }
        }
        // SWAP class.
        let swap = TwoQubitGate::Swap.unitary();
        for ia in 0..n1 {
            for ib in 0..n1 {
                insert(Clifford2 {
                    matrix: kron(ia, ib) * swap,
                    pre: None,
                    gate: Some(TwoQubitGate::Swap),
                    post: (ia, ib),
                });
            }
        }
        assert_eq!(elements.len(), 11520, "two-qubit Clifford group size");

        let inverse = elements
            .iter()
            .map(|e| {
                *index
                    .get(&key4(&e.matrix.adjoint()))
                    .expect("group is closed under inverse")
            })
            .collect();
        Self { elements, index, inverse }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// Index of the element equal to `m` up to global phase.
    pub fn find(&self, m: &Matrix4<C64>) -> Option<usize> {
        self.index.get(&key4(m)).copied()
    }

    pub fn inverse(&self, i: usize) -> usize {
        self.inverse[i]
    }

    pub fn identity(&self) -> usize {
        self.find(&Matrix4::identity()).expect("identity is in the group")
    }
}

/// The single-qubit Clifford group (built once per process).
pub fn clifford1() -> &'static CliffordGroup1 {
    static GROUP: OnceLock<CliffordGroup1> = OnceLock::new();
    GROUP.get_or_init(CliffordGroup1::build)
}

/// The two-qubit Clifford group (built once per process).
pub fn clifford2() -> &'static CliffordGroup2 {
    static GROUP: OnceLock<CliffordGroup2> = OnceLock::new();
    GROUP.get_or_init(|| CliffordGroup2::build(clifford1()))
}

/// Ideal matrix of a single-qubit element rebuilt from its physical
/// decomposition (pulses then virtual Z), for decomposition soundness checks.
pub(crate) fn compose1(e: &Clifford1) -> Matrix2<C64> {
    let mut m = Matrix2::identity();
    for p in &e.pulses {
        m = p.matrix() * m;
    }
    z2(e.virtual_z) * m
}

/// Ideal matrix of a two-qubit element rebuilt from its layers and gate.
pub(crate) fn compose2(e: &Clifford2, c1: &CliffordGroup1) -> Matrix4<C64> {
    let layer = |(ia, ib): (usize, usize)| {
        compose1(&c1.elements[ia]).kronecker(&compose1(&c1.elements[ib]))
    };
    let mut m = match e.pre {
        Some(pair) => layer(pair),
        None => Matrix4::identity(),
    };
    if let Some(g) = e.gate {
        m = g.unitary() * m;
    }
    layer(e.post) * m
}

/// Distance between two unitaries up to global phase (Frobenius norm after
/// optimal phase alignment).
pub(crate) fn phase_distance<const N: usize>(
    a: &nalgebra::SMatrix<C64, N, N>,
    b: &nalgebra::SMatrix<C64, N, N>,
) -> f64 {
    let overlap = (b.adjoint() * a).trace();
    let phase = if overlap.norm() > 1e-12 {
        overlap / C64::new(overlap.norm(), 0.0)
    } else {
        C_ONE
    };
    (a - b * phase).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_qubit_group_is_complete_and_decomposed() {
        let g = clifford1();
        assert_eq!(g.len(), 24);
        let mut pulse_free = 0;
        for e in &g.elements {
            assert!(e.pulses.len() <= 2);
            if e.pulses.is_empty() {
                pulse_free += 1;
            }
            // Decomposition soundness: rebuilt matrix equals the element.
            let d = phase_distance(&compose1(e), &e.matrix);
            assert!(d < 1e-12, "decomposition deviates by {d:.3e}");
        }
        // The 4 diagonal (virtual-Z-only) Cliffords need no pulse at all.
        assert_eq!(pulse_free, 4);
    }

    #[test]
    fn single_qubit_inverse_and_closure() {
        let g = clifford1();
        for i in 0..g.len() {
            let prod = g.elements[i].matrix * g.elements[g.inverse(i)].matrix;
            assert_eq!(g.find(&prod), Some(g.identity()));
        }
        for i in 0..g.len() {
            for j in 0..g.len() {
                let prod = g.elements[i].matrix * g.elements[j].matrix;
                assert!(g.find(&prod).is_some(), "product {i}*{j} left the table");
            }
        }
    }

    #[test]
    fn two_qubit_group_is_complete() {
        let g = clifford2();
        assert_eq!(g.len(), 11520);
        assert_eq!(g.inverse(g.identity()), g.identity());
    }

    #[test]
    fn two_qubit_closure_and_inverse_sampled() {
        let g = clifford2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let i = rng.gen_range(0..g.len());
            let j = rng.gen_range(0..g.len());
            let prod = g.elements[i].matrix * g.elements[j].matrix;
            assert!(g.find(&prod).is_some(), "product {i}*{j} left the table");
        }
        for _ in 0..200 {
            let i = rng.gen_range(0..g.len());
            let prod = g.elements[i].matrix * g.elements[g.inverse(i)].matrix;
            assert_eq!(g.find(&prod), Some(g.identity()));
        }
    }

    #[test]
    fn two_qubit_decompositions_sound_sampled() {
        let g = clifford2();
        let c1 = clifford1();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let i = rng.gen_range(0..g.len());
            let e = &g.elements[i];
            let d = phase_distance(&compose2(e, c1), &e.matrix);
            assert!(d < 1e-12, "element {i} decomposition deviates by {d:.3e}");
        }
    }

    #[test]
    fn native_gates_are_cliffords() {
        let g = clifford2();
        for gate in [TwoQubitGate::Cz, TwoQubitGate::Iswap, TwoQubitGate::Swap] {
            assert!(g.find(&gate.unitary()).is_some());
        }
    }
}
