//! Spin system description, Zeeman product basis, polarization operators,
//! the weak-coupling Hamiltonian and the observer transition table.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * Qubit 0 is the observer spin; qubits 1..n-1 are the work register.
//! * Basis index `b = b_0 b_1 .. b_{n-1}` with qubit 0 as the most
//!   significant bit; `|0>` is the lower-energy spin state.
//! * A work label is the n-1 bit string of the work register, qubit 1 most
//!   significant.
//! * The observer line for work label `s` sits at
//!   `nu_0 + sum_j J_0j (1/2 - bit_j(s))` Hz.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::matrix::{kron_all, C64, CMat, ONE};

pub const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum SpinError {
    #[error("a spin system needs at least 2 qubits (one observer plus work), got {0}")]
    TooFewQubits(usize),
    #[error("expected {expected} resonance offsets, got {got}")]
    OffsetCount { expected: usize, got: usize },
    #[error("coupling ({0}, {0}) pairs a spin with itself")]
    SelfCoupling(usize),
    #[error("coupling ({0}, {1}) listed more than once")]
    DuplicateCoupling(usize, usize),
    #[error("coupling ({0}, {1}) references a spin outside 0..{2}")]
    CouplingOutOfRange(usize, usize, usize),
    #[error("linewidth must be positive, got {0} Hz")]
    NonPositiveLinewidth(f64),
    #[error("linewidth {linewidth} Hz does not resolve the smallest coupling; need < {limit} Hz")]
    LinewidthTooBroad { linewidth: f64, limit: f64 },
    #[error("expected {expected} qubit names, got {got}")]
    NameCount { expected: usize, got: usize },
    #[error("observer lines for work labels {a} and {b} collide at {freq} Hz within the linewidth")]
    FrequencyCollision { a: BitLabel, b: BitLabel, freq: f64 },
    #[error("expected one operator factor per qubit ({expected}), got {got}")]
    FactorCount { expected: usize, got: usize },
    #[error("more than one operator factor names qubit {0}")]
    DuplicateFactor(usize),
    #[error("operator factor names qubit {0}, outside 0..{1}")]
    FactorOutOfRange(usize, usize),
    #[error("molecule file: {0}")]
    MoleculeParse(String),
}

/// Bit string of fixed width, printed most significant bit first.
///
/// Used both for full basis labels (width = n qubits) and for work-register
/// labels (width = n - 1).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitLabel {
    bits: u16,
    width: u8,
}

impl BitLabel {
    pub fn new(bits: u16, width: u8) -> Self {
        assert!(width >= 1 && width <= 12, "label width out of range");
        assert!(bits < (1 << width), "bits do not fit the label width");
        BitLabel { bits, width }
    }

    pub fn bits(&self) -> u16 {
        self.bits
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn index(&self) -> usize {
        self.bits as usize
    }

    /// Bit at `pos`, counting from the most significant (pos 0).
    pub fn bit(&self, pos: u8) -> u8 {
        assert!(pos < self.width);
        ((self.bits >> (self.width - 1 - pos)) & 1) as u8
    }

    pub fn popcount(&self) -> u32 {
        self.bits.count_ones()
    }

    /// All labels of a given width, in index order.
    pub fn all(width: u8) -> impl Iterator<Item = BitLabel> {
        (0..(1u16 << width)).map(move |b| BitLabel::new(b, width))
    }

    /// Full basis label from an observer bit and a work label.
    pub fn with_observer(observer: u8, work: BitLabel) -> BitLabel {
        assert!(observer <= 1);
        BitLabel::new(((observer as u16) << work.width) | work.bits, work.width + 1)
    }

    /// Work-register part of a full basis label (drops the observer bit).
    pub fn work_part(&self) -> BitLabel {
        assert!(self.width >= 2);
        BitLabel::new(self.bits & ((1 << (self.width - 1)) - 1), self.width - 1)
    }

    pub fn observer_bit(&self) -> u8 {
        self.bit(0)
    }
}

impl fmt::Display for BitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for pos in 0..self.width {
            write!(f, "{}", self.bit(pos))?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitLabel({self})")
    }
}

#[derive(Debug, Error)]
#[error("bad bit label {0:?}: labels are 1-12 characters of 0/1")]
pub struct BitLabelParseError(String);

impl FromStr for BitLabel {
    type Err = BitLabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s.len() > 12 {
            return Err(BitLabelParseError(s.to_string()));
        }
        let mut bits = 0u16;
        for c in s.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(BitLabelParseError(s.to_string())),
                };
        }
        Ok(BitLabel::new(bits, s.len() as u8))
    }
}

/// Physical description of the register: offsets in each spin's own rotating
/// frame, scalar couplings, and the Lorentzian linewidth used for spectrum
/// synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    n_qubits: usize,
    offsets_hz: Vec<f64>,
    couplings_hz: BTreeMap<(usize, usize), f64>,
    linewidth_hz: f64,
    names: Option<Vec<String>>,
}

impl SpinSystem {
    pub fn new(
        n_qubits: usize,
        offsets_hz: Vec<f64>,
        couplings: Vec<(usize, usize, f64)>,
        linewidth_hz: f64,
        names: Option<Vec<String>>,
    ) -> Result<Self, SpinError> {
        if n_qubits < 2 {
            return Err(SpinError::TooFewQubits(n_qubits));
        }
        if offsets_hz.len() != n_qubits {
            return Err(SpinError::OffsetCount {
                expected: n_qubits,
                got: offsets_hz.len(),
            });
        }
        if let Some(ref names) = names {
            if names.len() != n_qubits {
                return Err(SpinError::NameCount {
                    expected: n_qubits,
                    got: names.len(),
                });
            }
        }
        let mut map = BTreeMap::new();
        for (i, j, value) in couplings {
            if i == j {
                return Err(SpinError::SelfCoupling(i));
            }
            if i >= n_qubits || j >= n_qubits {
                return Err(SpinError::CouplingOutOfRange(i, j, n_qubits));
            }
            let key = (i.min(j), i.max(j));
            if map.insert(key, value).is_some() {
                return Err(SpinError::DuplicateCoupling(key.0, key.1));
            }
        }
        if linewidth_hz <= 0.0 {
            return Err(SpinError::NonPositiveLinewidth(linewidth_hz));
        }
        let min_j = map
            .values()
            .map(|j| j.abs())
            .filter(|j| *j > 0.0)
            .fold(f64::INFINITY, f64::min);
        if min_j.is_finite() && linewidth_hz >= min_j / 2.0 {
            return Err(SpinError::LinewidthTooBroad {
                linewidth: linewidth_hz,
                limit: min_j / 2.0,
            });
        }
        Ok(SpinSystem {
            n_qubits,
            offsets_hz,
            couplings_hz: map,
            linewidth_hz,
            names,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_work(&self) -> usize {
        self.n_qubits - 1
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn work_dim(&self) -> usize {
        1 << (self.n_qubits - 1)
    }

    pub fn offset_hz(&self, qubit: usize) -> f64 {
        self.offsets_hz[qubit]
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    /// J coupling between two spins; absent pairs are zero.
    pub fn coupling_hz(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let key = (i.min(j), i.max(j));
        self.couplings_hz.get(&key).copied().unwrap_or(0.0)
    }

    pub fn couplings_hz(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.couplings_hz
    }

    pub fn linewidth_hz(&self) -> f64 {
        self.linewidth_hz
    }

    pub fn name(&self, qubit: usize) -> Option<&str> {
        self.names.as_ref().map(|n| n[qubit].as_str())
    }

    /// Offset of the centered proton pair (qubits 1 and 2), used by
    /// jump-and-return delays. Requires nu_1 = -nu_2 within 1e-6 Hz and a
    /// nonzero splitting.
    pub fn centered_pair_nu(&self) -> Result<f64, CenteredPairError> {
        if self.n_qubits < 3 {
            return Err(CenteredPairError {
                nu1: self.offsets_hz.get(1).copied().unwrap_or(f64::NAN),
                nu2: f64::NAN,
            });
        }
        let nu1 = self.offsets_hz[1];
        let nu2 = self.offsets_hz[2];
        if (nu1 + nu2).abs() > 1e-6 || nu1.abs() < 1e-6 {
            return Err(CenteredPairError { nu1, nu2 });
        }
        Ok(nu1.abs())
    }

    /// Sign of qubit 1's offset within the centered pair; the selective
    /// pulse expansions depend on which proton sits upfield.
    pub fn pair_qubit1_positive(&self) -> Result<bool, CenteredPairError> {
        self.centered_pair_nu()?;
        Ok(self.offsets_hz[1] > 0.0)
    }

    pub fn work_labels(&self) -> impl Iterator<Item = BitLabel> {
        BitLabel::all(self.n_work() as u8)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SpinError> {
        let raw: MoleculeFile =
            toml::from_str(text).map_err(|e| SpinError::MoleculeParse(e.to_string()))?;
        let couplings = raw
            .couplings_hz
            .into_iter()
            .map(|c| {
                if c.0.len() != 3 {
                    return Err(SpinError::MoleculeParse(format!(
                        "coupling entries are [i, j, value], got {} elements",
                        c.0.len()
                    )));
                }
                let i = c.0[0];
                let j = c.0[1];
                if i.fract() != 0.0 || j.fract() != 0.0 || i < 0.0 || j < 0.0 || i > 64.0 || j > 64.0
                {
                    return Err(SpinError::MoleculeParse(format!(
                        "coupling indices must be small non-negative integers, got [{i}, {j}]"
                    )));
                }
                Ok((i as usize, j as usize, c.0[2]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        SpinSystem::new(
            raw.n_qubits,
            raw.offsets_hz,
            couplings,
            raw.linewidth_hz,
            raw.names,
        )
    }
}

#[derive(Debug, Error)]
#[error("qubits 1 and 2 must sit at opposite offsets (nu1 = -nu2 != 0); got nu1 = {nu1} Hz, nu2 = {nu2} Hz")]
pub struct CenteredPairError {
    pub nu1: f64,
    pub nu2: f64,
}

#[derive(Deserialize)]
struct MoleculeFile {
    n_qubits: usize,
    offsets_hz: Vec<f64>,
    #[serde(default)]
    couplings_hz: Vec<CouplingRow>,
    linewidth_hz: f64,
    #[serde(default)]
    names: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct CouplingRow(Vec<f64>);

/// Single-spin polarization operators in the product basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarizationKind {
    /// |0><0|
    Proj0,
    /// |1><1|
    Proj1,
    /// |0><1|
    Plus,
    /// |1><0|
    Minus,
    X,
    Y,
    Z,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarizationOperator {
    pub kind: PolarizationKind,
    pub qubit: usize,
}

impl PolarizationOperator {
    pub fn new(kind: PolarizationKind, qubit: usize) -> Self {
        PolarizationOperator { kind, qubit }
    }
}

/// The 2x2 realization of a polarization operator.
pub fn single_spin_matrix(kind: PolarizationKind) -> CMat {
    let h = C64::new(0.5, 0.0);
    let ih = C64::new(0.0, 0.5);
    let mut m = CMat::zeros((2, 2));
    match kind {
        PolarizationKind::Proj0 => m[(0, 0)] = ONE,
        PolarizationKind::Proj1 => m[(1, 1)] = ONE,
        PolarizationKind::Plus => m[(0, 1)] = ONE,
        PolarizationKind::Minus => m[(1, 0)] = ONE,
        PolarizationKind::X => {
            m[(0, 1)] = h;
            m[(1, 0)] = h;
        }
        PolarizationKind::Y => {
            m[(0, 1)] = -ih;
            m[(1, 0)] = ih;
        }
        PolarizationKind::Z => {
            m[(0, 0)] = h;
            m[(1, 1)] = -h;
        }
        PolarizationKind::Unit => {
            m[(0, 0)] = ONE;
            m[(1, 1)] = ONE;
        }
    }
    m
}

/// Kronecker product of one polarization factor per qubit, in qubit-index
/// order. Every qubit must be named exactly once (identity permitted).
pub fn product_operator(
    n_qubits: usize,
    factors: &[PolarizationOperator],
) -> Result<CMat, SpinError> {
    if factors.len() != n_qubits {
        return Err(SpinError::FactorCount {
            expected: n_qubits,
            got: factors.len(),
        });
    }
    let mut slots: Vec<Option<PolarizationKind>> = vec![None; n_qubits];
    for f in factors {
        if f.qubit >= n_qubits {
            return Err(SpinError::FactorOutOfRange(f.qubit, n_qubits));
        }
        if slots[f.qubit].replace(f.kind).is_some() {
            return Err(SpinError::DuplicateFactor(f.qubit));
        }
    }
    let mats: Vec<CMat> = slots
        .into_iter()
        .map(|k| single_spin_matrix(k.expect("all slots filled")))
        .collect();
    Ok(kron_all(&mats))
}

/// Product operator with identity on every qubit except the listed ones.
pub fn sparse_product_operator(
    n_qubits: usize,
    named: &[(usize, PolarizationKind)],
) -> Result<CMat, SpinError> {
    let mut factors: Vec<PolarizationOperator> = (0..n_qubits)
        .map(|q| PolarizationOperator::new(PolarizationKind::Unit, q))
        .collect();
    for &(q, kind) in named {
        if q >= n_qubits {
            return Err(SpinError::FactorOutOfRange(q, n_qubits));
        }
        factors[q] = PolarizationOperator::new(kind, q);
    }
    product_operator(n_qubits, &factors)
}

/// Weak-coupling Hamiltonian in angular frequency units:
/// `H = sum_i 2 pi nu_i Iz_i + sum_{i<j} 2 pi J_ij Iz_i Iz_j`.
/// Diagonal in the product basis.
pub fn build_hamiltonian(sys: &SpinSystem) -> CMat {
    let n = sys.n_qubits();
    let mut h = CMat::zeros((sys.dim(), sys.dim()));
    for i in 0..n {
        let iz = sparse_product_operator(n, &[(i, PolarizationKind::Z)]).expect("valid qubit");
        h = h + iz.mapv(|z| z * C64::new(TWO_PI * sys.offset_hz(i), 0.0));
    }
    for (&(i, j), &jij) in sys.couplings_hz() {
        let izz =
            sparse_product_operator(n, &[(i, PolarizationKind::Z), (j, PolarizationKind::Z)])
                .expect("valid qubits");
        h = h + izz.mapv(|z| z * C64::new(TWO_PI * jij, 0.0));
    }
    h
}

/// Zeeman part only (offsets, no couplings), for delays tagged as
/// jump-and-return segments.
pub fn build_zeeman_hamiltonian(sys: &SpinSystem) -> CMat {
    let n = sys.n_qubits();
    let mut h = CMat::zeros((sys.dim(), sys.dim()));
    for i in 0..n {
        let iz = sparse_product_operator(n, &[(i, PolarizationKind::Z)]).expect("valid qubit");
        h = h + iz.mapv(|z| z * C64::new(TWO_PI * sys.offset_hz(i), 0.0));
    }
    h
}

/// Real diagonal of a Hamiltonian that is diagonal in the product basis.
pub fn hamiltonian_diag(h: &CMat) -> Vec<f64> {
    h.diag().iter().map(|z| z.re).collect()
}

/// One observer transition per work label.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    entries: Vec<TransitionEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEntry {
    pub work_label: BitLabel,
    pub frequency_hz: f64,
}

impl TransitionTable {
    pub fn entries(&self) -> &[TransitionEntry] {
        &self.entries
    }

    pub fn frequency_of(&self, label: BitLabel) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.work_label == label)
            .map(|e| e.frequency_hz)
    }

    /// Nearest table entry to a frequency, with the distance in Hz.
    pub fn nearest(&self, freq_hz: f64) -> (TransitionEntry, f64) {
        let mut best = self.entries[0];
        let mut dist = (best.frequency_hz - freq_hz).abs();
        for e in &self.entries[1..] {
            let d = (e.frequency_hz - freq_hz).abs();
            if d < dist {
                best = *e;
                dist = d;
            }
        }
        (best, dist)
    }

    pub fn max_abs_frequency(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.frequency_hz.abs())
            .fold(0.0, f64::max)
    }

    pub fn all_positive(&self) -> bool {
        self.entries.iter().all(|e| e.frequency_hz > 0.0)
    }
}

/// Observer-qubit transition frequencies as eigenvalue differences of the
/// Hamiltonian between `|0, s>` and `|1, s>` for every work label `s`.
pub fn transition_table(sys: &SpinSystem) -> Result<TransitionTable, SpinError> {
    let h = build_hamiltonian(sys);
    let diag = hamiltonian_diag(&h);
    let entries: Vec<TransitionEntry> = sys
        .work_labels()
        .map(|work| {
            let lo = BitLabel::with_observer(0, work).index();
            let hi = BitLabel::with_observer(1, work).index();
            TransitionEntry {
                work_label: work,
                frequency_hz: (diag[lo] - diag[hi]) / TWO_PI,
            }
        })
        .collect();
    for a in 0..entries.len() {
        for b in (a + 1)..entries.len() {
            let gap = (entries[a].frequency_hz - entries[b].frequency_hz).abs();
            if gap < sys.linewidth_hz() {
                return Err(SpinError::FrequencyCollision {
                    a: entries[a].work_label,
                    b: entries[b].work_label,
                    freq: entries[a].frequency_hz,
                });
            }
        }
    }
    Ok(TransitionTable { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{max_abs_diff, identity};

    fn benzofuran() -> SpinSystem {
        SpinSystem::new(
            3,
            vec![20.0, 323.0, -323.0],
            vec![(0, 1, -3.84), (0, 2, 8.01), (1, 2, 8.07)],
            0.6,
            None,
        )
        .unwrap()
    }

    fn phenol() -> SpinSystem {
        SpinSystem::new(
            4,
            vec![20.0, 280.0, -280.0, 0.0],
            vec![
                (0, 1, 5.23),
                (0, 2, 8.85),
                (0, 3, 19.1),
                (1, 2, 9.76),
                (1, 3, -2.4),
                (2, 3, 6.81),
            ],
            0.5,
            None,
        )
        .unwrap()
    }

    /// Independent route: per-basis-state sum with Iz eigenvalues
    /// m_i = 1/2 - bit_i(b).
    fn diag_oracle(sys: &SpinSystem) -> Vec<f64> {
        let n = sys.n_qubits();
        BitLabel::all(n as u8)
            .map(|b| {
                let m = |q: usize| 0.5 - b.bit(q as u8) as f64;
                let mut e = 0.0;
                for i in 0..n {
                    e += TWO_PI * sys.offset_hz(i) * m(i);
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        e += TWO_PI * sys.coupling_hz(i, j) * m(i) * m(j);
                    }
                }
                e
            })
            .collect()
    }

    #[test]
    fn polarization_matrices_are_the_standard_ones() {
        let z = single_spin_matrix(PolarizationKind::Z);
        assert_eq!(z[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(z[(1, 1)], C64::new(-0.5, 0.0));
        let y = single_spin_matrix(PolarizationKind::Y);
        assert_eq!(y[(0, 1)], C64::new(0.0, -0.5));
        assert_eq!(y[(1, 0)], C64::new(0.0, 0.5));
        let p = single_spin_matrix(PolarizationKind::Plus);
        assert_eq!(p[(0, 1)], ONE);
        // x = (plus + minus)/2, y = (plus - minus)/2i, z = (proj0 - proj1)/2
        let plus = single_spin_matrix(PolarizationKind::Plus);
        let minus = single_spin_matrix(PolarizationKind::Minus);
        let x = single_spin_matrix(PolarizationKind::X);
        assert!(max_abs_diff(&x, &((&plus + &minus).mapv(|v| v * C64::new(0.5, 0.0)))) < 1e-15);
    }

    #[test]
    fn product_operator_single_qubit_z() {
        let m = product_operator(1, &[PolarizationOperator::new(PolarizationKind::Z, 0)]).unwrap();
        assert_eq!(m[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(m[(1, 1)], C64::new(-0.5, 0.0));
    }

    #[test]
    fn product_operator_bell_projector_pattern() {
        // proj0 proj0 + proj1 proj1 + plus plus + minus minus has ones at the
        // four corners of the 4x4 matrix.
        let n = 2;
        let mk = |a: PolarizationKind, b: PolarizationKind| {
            product_operator(
                n,
                &[
                    PolarizationOperator::new(a, 0),
                    PolarizationOperator::new(b, 1),
                ],
            )
            .unwrap()
        };
        let m = mk(PolarizationKind::Proj0, PolarizationKind::Proj0)
            + mk(PolarizationKind::Proj1, PolarizationKind::Proj1)
            + mk(PolarizationKind::Plus, PolarizationKind::Plus)
            + mk(PolarizationKind::Minus, PolarizationKind::Minus);
        let mut expected = CMat::zeros((4, 4));
        expected[(0, 0)] = ONE;
        expected[(0, 3)] = ONE;
        expected[(3, 0)] = ONE;
        expected[(3, 3)] = ONE;
        assert!(max_abs_diff(&m, &expected) < 1e-15);
    }

    #[test]
    fn product_operator_all_identity() {
        let factors: Vec<_> = (0..3)
            .map(|q| PolarizationOperator::new(PolarizationKind::Unit, q))
            .collect();
        let m = product_operator(3, &factors).unwrap();
        assert!(max_abs_diff(&m, &identity(8)) < 1e-15);
    }

    #[test]
    fn product_operator_rejects_wrong_factor_count() {
        let err = product_operator(2, &[PolarizationOperator::new(PolarizationKind::Z, 0)]);
        assert!(matches!(err, Err(SpinError::FactorCount { .. })));
        let err = product_operator(
            2,
            &[
                PolarizationOperator::new(PolarizationKind::Z, 0),
                PolarizationOperator::new(PolarizationKind::Z, 0),
            ],
        );
        assert!(matches!(err, Err(SpinError::DuplicateFactor(0))));
    }

    #[test]
    fn product_operator_is_multiplicative() {
        // kron(a1 b1, a2 b2) = kron(a1, a2) . kron(b1, b2) on a few fixed cases
        let kinds = [
            PolarizationKind::X,
            PolarizationKind::Y,
            PolarizationKind::Z,
            PolarizationKind::Plus,
        ];
        for &a1 in &kinds {
            for &a2 in &kinds {
                for &b1 in &kinds {
                    for &b2 in &kinds {
                        let lhs = kron_all(&[
                            single_spin_matrix(a1).dot(&single_spin_matrix(b1)),
                            single_spin_matrix(a2).dot(&single_spin_matrix(b2)),
                        ]);
                        let rhs = kron_all(&[single_spin_matrix(a1), single_spin_matrix(a2)])
                            .dot(&kron_all(&[single_spin_matrix(b1), single_spin_matrix(b2)]));
                        assert!(max_abs_diff(&lhs, &rhs) < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn hamiltonian_of_empty_system_is_zero() {
        let sys = SpinSystem::new(2, vec![0.0, 0.0], vec![], 0.1, None).unwrap();
        let h = build_hamiltonian(&sys);
        assert!(crate::matrix::max_abs(&h) < 1e-15);
    }

    #[test]
    fn hamiltonian_is_real_diagonal() {
        let h = build_hamiltonian(&benzofuran());
        for ((i, j), z) in h.indexed_iter() {
            if i != j {
                assert_eq!(z.norm(), 0.0, "off-diagonal at ({i},{j})");
            } else {
                assert_eq!(z.im, 0.0);
            }
        }
    }

    #[test]
    fn hamiltonian_matches_per_state_sum_three_qubits() {
        let sys = benzofuran();
        let h = build_hamiltonian(&sys);
        let diag = hamiltonian_diag(&h);
        let oracle = diag_oracle(&sys);
        for (a, b) in diag.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // spot value: |000> has m = +1/2 everywhere
        let e000 = TWO_PI * ((20.0 + 323.0 - 323.0) * 0.5 + (-3.84 + 8.01 + 8.07) * 0.25);
        assert!((diag[0] - e000).abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_matches_per_state_sum_four_qubits() {
        let sys = phenol();
        let diag = hamiltonian_diag(&build_hamiltonian(&sys));
        let oracle = diag_oracle(&sys);
        for (a, b) in diag.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn transition_table_two_qubit_splitting() {
        let sys = SpinSystem::new(2, vec![0.0, 0.0], vec![(0, 1, 10.0)], 0.4, None).unwrap();
        let table = transition_table(&sys).unwrap();
        let f0 = table.frequency_of("0".parse().unwrap()).unwrap();
        let f1 = table.frequency_of("1".parse().unwrap()).unwrap();
        assert!((f0 - 5.0).abs() < 1e-12);
        assert!((f1 + 5.0).abs() < 1e-12);
    }

    #[test]
    fn transition_table_matches_half_sum_formula() {
        // combinatorial route: nu_0 + sum_j J_0j (1/2 - bit_j)
        for sys in [benzofuran(), phenol()] {
            let table = transition_table(&sys).unwrap();
            for e in table.entries() {
                let mut f = sys.offset_hz(0);
                for j in 1..sys.n_qubits() {
                    f += sys.coupling_hz(0, j) * (0.5 - e.work_label.bit(j as u8 - 1) as f64);
                }
                assert!(
                    (f - e.frequency_hz).abs() < 1e-9,
                    "label {}: {} vs {}",
                    e.work_label,
                    f,
                    e.frequency_hz
                );
            }
            assert_eq!(table.entries().len(), sys.work_dim());
        }
    }

    #[test]
    fn transition_table_detects_degenerate_lines() {
        let sys = SpinSystem::new(
            3,
            vec![0.0, 100.0, -100.0],
            vec![(0, 1, 8.0), (0, 2, 8.0), (1, 2, 5.0)],
            0.5,
            None,
        )
        .unwrap();
        let err = transition_table(&sys);
        assert!(matches!(err, Err(SpinError::FrequencyCollision { .. })));
    }

    #[test]
    fn molecule_file_round_trip_and_validation() {
        let text = r#"
n_qubits = 3
names = ["F", "H1", "H2"]
offsets_hz = [20.0, 323.0, -323.0]
couplings_hz = [[0, 1, -3.84], [0, 2, 8.01], [1, 2, 8.07]]
linewidth_hz = 0.6
"#;
        let sys = SpinSystem::from_toml_str(text).unwrap();
        assert_eq!(sys.n_qubits(), 3);
        assert_eq!(sys.coupling_hz(2, 1), 8.07);
        assert_eq!(sys.name(0), Some("F"));

        let bad = text.replace("linewidth_hz = 0.6", "linewidth_hz = 5.0");
        assert!(matches!(
            SpinSystem::from_toml_str(&bad),
            Err(SpinError::LinewidthTooBroad { .. })
        ));
        assert!(SpinSystem::from_toml_str("n_qubits = 1").is_err());
    }

    #[test]
    fn centered_pair_detection() {
        assert!((benzofuran().centered_pair_nu().unwrap() - 323.0).abs() < 1e-12);
        assert!(benzofuran().pair_qubit1_positive().unwrap());
        let sys = SpinSystem::new(3, vec![0.0, 100.0, -90.0], vec![(1, 2, 5.0)], 0.5, None).unwrap();
        assert!(sys.centered_pair_nu().is_err());
    }

    #[test]
    fn bit_label_display_parse() {
        let l: BitLabel = "010".parse().unwrap();
        assert_eq!(l.to_string(), "010");
        assert_eq!(l.bit(0), 0);
        assert_eq!(l.bit(1), 1);
        assert_eq!(l.index(), 2);
        assert_eq!(BitLabel::with_observer(1, l).to_string(), "1010");
        assert!("01x".parse::<BitLabel>().is_err());
        assert!("".parse::<BitLabel>().is_err());
    }
}
