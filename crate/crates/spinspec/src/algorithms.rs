//! Pulse programs and gate-level reference states for the demo algorithms:
//! Grover search on two work qubits, approximate quantum counting,
//! Bernstein-Vazirani string determination (2- and 3-bit), and Hogg's
//! single-step 1-SAT / maximally constrained 3-SAT search.
//!
//! Every builder returns both the compiled pulse program and an
//! independently composed ideal state, plus the line set the observer
//! spectrum is expected to show.

use std::fmt;

use thiserror::Error;

use crate::compiler::{
    compile_circuit, compile_gate, ideal_unitary, selective_x_pi, selective_y90, x90_pair,
    CompileError, GateSpec,
};
use crate::engine::{AngleExpr, EngineError, Phase, PulseEvent, PulseProgram};
use crate::matrix::{kron_all, C64, CMat};
use crate::spin::{BitLabel, SpinSystem};

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("work register is {have} qubits but the algorithm input needs {need}")]
    WidthMismatch { need: usize, have: usize },
    #[error("formula not runnable as a pulse program: {0}")]
    UnsupportedFormula(String),
    #[error("bad formula {text:?}: {msg}")]
    FormulaParse { text: String, msg: String },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Expected observer-spectrum content: work labels and their normalized
/// intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedReadout {
    lines: Vec<(BitLabel, f64)>,
}

impl ExpectedReadout {
    /// Normalizes the weights to unit sum; the line set must be nonempty.
    pub fn new(mut lines: Vec<(BitLabel, f64)>) -> ExpectedReadout {
        assert!(!lines.is_empty(), "a readout has at least one line");
        let total: f64 = lines.iter().map(|(_, w)| w).sum();
        assert!(total > 0.0);
        for (_, w) in &mut lines {
            *w /= total;
        }
        lines.sort_by_key(|(l, _)| *l);
        ExpectedReadout { lines }
    }

    pub fn uniform(labels: impl IntoIterator<Item = BitLabel>) -> ExpectedReadout {
        ExpectedReadout::new(labels.into_iter().map(|l| (l, 1.0)).collect())
    }

    pub fn single(label: BitLabel) -> ExpectedReadout {
        ExpectedReadout::new(vec![(label, 1.0)])
    }

    pub fn lines(&self) -> &[(BitLabel, f64)] {
        &self.lines
    }

    pub fn labels(&self) -> Vec<BitLabel> {
        self.lines.iter().map(|(l, _)| *l).collect()
    }

    pub fn intensity_of(&self, label: BitLabel) -> Option<f64> {
        self.lines
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, w)| *w)
    }
}

impl fmt::Display for ExpectedReadout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .lines
            .iter()
            .map(|(l, w)| format!("{l}:{w:.4}"))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// A ready-to-run algorithm instance.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub name: String,
    pub program: PulseProgram,
    /// Gate-level reference state of the work register (global phase
    /// arbitrary).
    pub ideal_state: Vec<C64>,
    pub expected: ExpectedReadout,
}

impl AlgorithmRun {
    pub fn ideal_populations(&self) -> Vec<f64> {
        self.ideal_state.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn apply_matrix(m: &CMat, v: &[C64]) -> Vec<C64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * v[c]).sum())
        .collect()
}

fn ground_state(dim: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[0] = C64::new(1.0, 0.0);
    v
}

/// Compose the ideal unitaries of a gate list (applied left to right) onto
/// `|0..0>`.
fn ideal_state_of(sys: &SpinSystem, gates: &[GateSpec]) -> Result<Vec<C64>, AlgorithmError> {
    let mut state = ground_state(sys.work_dim());
    for gate in gates {
        state = apply_matrix(&ideal_unitary(sys, gate)?, &state);
    }
    Ok(state)
}

fn require_work_width(sys: &SpinSystem, need: usize) -> Result<(), AlgorithmError> {
    if sys.n_work() != need {
        return Err(AlgorithmError::WidthMismatch {
            need,
            have: sys.n_work(),
        });
    }
    Ok(())
}

// --- Grover ------------------------------------------------------------------

/// One-iteration search on two work qubits: H, the sign oracle on the
/// searched pattern, then the inversion-about-mean H U00 H.
pub fn grover_program(target: BitLabel, sys: &SpinSystem) -> Result<AlgorithmRun, AlgorithmError> {
    require_work_width(sys, 2)?;
    if target.width() != 2 {
        return Err(AlgorithmError::WidthMismatch {
            need: 2,
            have: target.width() as usize,
        });
    }
    let gates = vec![
        GateSpec::Hadamard {
            targets: vec![1, 2],
        },
        GateSpec::PhaseGate { pattern: target },
        GateSpec::Hadamard {
            targets: vec![1, 2],
        },
        GateSpec::PhaseGate {
            pattern: "00".parse().unwrap(),
        },
        GateSpec::Hadamard {
            targets: vec![1, 2],
        },
    ];
    let circuit = compile_circuit(sys, format!("grover target={target}"), &gates)?;
    Ok(AlgorithmRun {
        name: format!("grover target={target}"),
        program: circuit.program,
        ideal_state: ideal_state_of(sys, &gates)?,
        expected: ExpectedReadout::single(target),
    })
}

// --- approximate counting ------------------------------------------------------

/// The four two-bit oracles, named by their truth table (f(0), f(1)).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountOracle {
    F00,
    F01,
    F10,
    F11,
}

impl CountOracle {
    pub fn as_str(&self) -> &'static str {
        match self {
            CountOracle::F00 => "f00",
            CountOracle::F01 => "f01",
            CountOracle::F10 => "f10",
            CountOracle::F11 => "f11",
        }
    }

    /// Number of satisfying inputs of the oracle function.
    pub fn count(&self) -> usize {
        match self {
            CountOracle::F00 => 0,
            CountOracle::F01 | CountOracle::F10 => 1,
            CountOracle::F11 => 2,
        }
    }

    pub fn all() -> [CountOracle; 4] {
        [
            CountOracle::F00,
            CountOracle::F01,
            CountOracle::F10,
            CountOracle::F11,
        ]
    }
}

impl std::str::FromStr for CountOracle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f00" => Ok(CountOracle::F00),
            "f01" => Ok(CountOracle::F01),
            "f10" => Ok(CountOracle::F10),
            "f11" => Ok(CountOracle::F11),
            other => Err(format!(
                "bad oracle {other:?}; expected f00, f01, f10 or f11"
            )),
        }
    }
}

impl fmt::Display for CountOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gates realizing the controlled oracle `c-U_f` (control qubit 1). Each is
/// a plain controlled phase gate or a z rotation, up to global phase.
fn controlled_oracle_gates(f: CountOracle) -> Vec<GateSpec> {
    match f {
        // f identically 0: U_f = -I on the target, controlled form is
        // sigma_z on the control
        CountOracle::F00 => vec![GateSpec::ZRotation {
            target: 1,
            angle: AngleExpr::PI,
        }],
        CountOracle::F01 => vec![GateSpec::PhaseGate {
            pattern: "10".parse().unwrap(),
        }],
        CountOracle::F10 => vec![GateSpec::PhaseGate {
            pattern: "11".parse().unwrap(),
        }],
        CountOracle::F11 => vec![],
    }
}

/// Line sets of the final counting states: `|00>` for count 0, `|10>` for
/// count 2, all four lines with equal weight for count 1.
fn counting_expected(f: CountOracle) -> ExpectedReadout {
    match f {
        CountOracle::F00 => ExpectedReadout::single("00".parse().unwrap()),
        CountOracle::F11 => ExpectedReadout::single("10".parse().unwrap()),
        CountOracle::F01 | CountOracle::F10 => ExpectedReadout::uniform(BitLabel::all(2)),
    }
}

/// One controlled iteration of the counting circuit: superpositions on
/// control (qubit 1) and target (qubit 2), `c-U_f`, the inverse
/// pseudo-Hadamard on the target, the controlled inversion `c-U_0` (the
/// `U10` phase gate), and a final Hadamard on the control.
pub fn counting_program(f: CountOracle, sys: &SpinSystem) -> Result<AlgorithmRun, AlgorithmError> {
    require_work_width(sys, 2)?;
    let name = format!("counting oracle={f}");

    // gate-level reference
    let mut gates = vec![
        GateSpec::Hadamard { targets: vec![1] },
        GateSpec::PseudoHadamard {
            target: 2,
            inverse: false,
        },
    ];
    gates.extend(controlled_oracle_gates(f));
    gates.push(GateSpec::PseudoHadamard {
        target: 2,
        inverse: true,
    });
    gates.push(GateSpec::PhaseGate {
        pattern: "10".parse().unwrap(),
    });
    gates.push(GateSpec::Hadamard { targets: vec![1] });
    let ideal_state = ideal_state_of(sys, &gates)?;

    // pulse realization: the opening superpositions collapse to one hard
    // pulse (h and H agree on |0>); the closing Hadamard on the control is
    // a z pi followed by a pseudo-Hadamard
    let mut program = PulseProgram::identity(name.clone());
    program
        .events
        .push(PulseEvent::pulse(&[1, 2], AngleExpr::PI_2, Phase::Y));
    for gate in controlled_oracle_gates(f) {
        program.extend(compile_gate(sys, &gate)?.program);
    }
    program.extend(
        compile_gate(
            sys,
            &GateSpec::PseudoHadamard {
                target: 2,
                inverse: true,
            },
        )?
        .program,
    );
    program.extend(
        compile_gate(
            sys,
            &GateSpec::PhaseGate {
                pattern: "10".parse().unwrap(),
            },
        )?
        .program,
    );
    program.extend(
        compile_gate(
            sys,
            &GateSpec::ZRotation {
                target: 1,
                angle: AngleExpr::PI,
            },
        )?
        .program,
    );
    program.extend(
        compile_gate(
            sys,
            &GateSpec::PseudoHadamard {
                target: 1,
                inverse: false,
            },
        )?
        .program,
    );

    Ok(AlgorithmRun {
        name,
        program,
        ideal_state,
        expected: counting_expected(f),
    })
}

// --- Bernstein-Vazirani --------------------------------------------------------

/// Single-query string determination: Hadamards, the z-string oracle
/// `U_a = prod sigma_z^{a_j}`, Hadamards again; the spectrum shows `a`.
pub fn bv_program(a: BitLabel, sys: &SpinSystem) -> Result<AlgorithmRun, AlgorithmError> {
    if a.width() as usize != sys.n_work() {
        return Err(AlgorithmError::WidthMismatch {
            need: sys.n_work(),
            have: a.width() as usize,
        });
    }
    let all_work: Vec<usize> = (1..sys.n_qubits()).collect();
    let marked: Vec<usize> = (0..a.width())
        .filter(|&pos| a.bit(pos) == 1)
        .map(|pos| pos as usize + 1)
        .collect();
    let mut gates = vec![GateSpec::Hadamard {
        targets: all_work.clone(),
    }];
    if !marked.is_empty() {
        gates.push(GateSpec::PauliZString { qubits: marked });
    }
    gates.push(GateSpec::Hadamard { targets: all_work });
    let circuit = compile_circuit(sys, format!("bv string={a}"), &gates)?;
    Ok(AlgorithmRun {
        name: format!("bv string={a}"),
        program: circuit.program,
        ideal_state: ideal_state_of(sys, &gates)?,
        expected: ExpectedReadout::single(a),
    })
}

// --- Hogg's search --------------------------------------------------------------

/// One clause of a 1-SAT conjunction: a single variable, possibly negated.
/// Variable `i` reads work-label bit `i - 1`; an assignment satisfies `V_i`
/// when that bit is 1 and `~V_i` when it is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clause {
    pub var: usize,
    pub negated: bool,
}

/// Conjunction of single-variable clauses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatFormula {
    clauses: Vec<Clause>,
}

impl SatFormula {
    pub fn new(clauses: Vec<Clause>) -> SatFormula {
        SatFormula { clauses }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn m(&self) -> usize {
        self.clauses.len()
    }

    /// Number of clauses the assignment violates.
    pub fn conflicts(&self, assignment: BitLabel) -> u32 {
        self.clauses
            .iter()
            .filter(|c| {
                let bit = assignment.bit(c.var as u8 - 1);
                if c.negated {
                    bit == 1
                } else {
                    bit == 0
                }
            })
            .count() as u32
    }

    pub fn solutions(&self, width: u8) -> Vec<BitLabel> {
        BitLabel::all(width)
            .filter(|s| self.conflicts(*s) == 0)
            .collect()
    }

    /// Parse a conjunction like `V3&~V2&V1`.
    pub fn parse(text: &str) -> Result<SatFormula, AlgorithmError> {
        let bad = |msg: &str| AlgorithmError::FormulaParse {
            text: text.to_string(),
            msg: msg.to_string(),
        };
        let mut clauses = Vec::new();
        for term in text.split('&') {
            let term = term.trim();
            let (negated, rest) = match term.strip_prefix('~') {
                Some(rest) => (true, rest.trim()),
                None => (false, term),
            };
            let var: usize = rest
                .strip_prefix('V')
                .ok_or_else(|| bad("each term is V<i> or ~V<i>"))?
                .parse()
                .map_err(|_| bad("each term is V<i> or ~V<i>"))?;
            if !(1..=3).contains(&var) {
                return Err(bad("variables are V1, V2, V3"));
            }
            clauses.push(Clause { var, negated });
        }
        if clauses.is_empty() {
            return Err(bad("empty formula"));
        }
        Ok(SatFormula { clauses })
    }
}

impl fmt::Display for SatFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clauses
            .iter()
            .map(|c| format!("{}V{}", if c.negated { "~" } else { "" }, c.var))
            .collect();
        write!(f, "{}", parts.join("&"))
    }
}

/// Phase-adjustment matrix: diagonal over assignments, entry `i^c` for odd
/// clause counts and `sqrt(2) cos((2c-1) pi/4)` for even ones.
pub fn hogg_phase_matrix(formula: &SatFormula, n: usize) -> CMat {
    let dim = 1usize << n;
    let mut r = CMat::zeros((dim, dim));
    let odd = formula.m() % 2 == 1;
    for s in BitLabel::all(n as u8) {
        let c = formula.conflicts(s);
        r[(s.index(), s.index())] = if odd {
            C64::new(0.0, 1.0).powu(c)
        } else {
            let v = std::f64::consts::SQRT_2
                * ((2.0 * c as f64 - 1.0) * std::f64::consts::FRAC_PI_4).cos();
            C64::new(v, 0.0)
        };
    }
    r
}

/// Amplitude-mixing matrix with entries depending only on the Hamming
/// distance between assignments.
pub fn hogg_mixing_matrix(m: usize, n: usize) -> CMat {
    let dim = 1usize << n;
    let mut u = CMat::zeros((dim, dim));
    let odd = m % 2 == 1;
    for r in 0..dim {
        for s in 0..dim {
            let d = ((r ^ s) as u32).count_ones();
            u[(r, s)] = if odd {
                let scale = 2f64.powf(-(n as f64) / 2.0);
                let phase =
                    C64::from_polar(1.0, (n as f64 - m as f64) * std::f64::consts::FRAC_PI_4);
                phase * C64::new(0.0, -1.0).powu(d) * C64::new(scale, 0.0)
            } else {
                let v = 2f64.powf(-((n as f64 - 1.0) / 2.0))
                    * ((n as f64 - m as f64 + 1.0 - 2.0 * d as f64) * std::f64::consts::FRAC_PI_4)
                        .cos();
                C64::new(v, 0.0)
            };
        }
    }
    u
}

fn hadamard_n(n: usize) -> CMat {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut h1 = CMat::zeros((2, 2));
    h1[(0, 0)] = s;
    h1[(0, 1)] = s;
    h1[(1, 0)] = s;
    h1[(1, 1)] = -s;
    kron_all(&vec![h1; n])
}

/// Same mixing matrix through its Hadamard-diagonal-Hadamard factorization:
/// `U = H Gamma H` with `Gamma` depending on the assignment weight.
pub fn hogg_mixing_via_gamma(m: usize, n: usize) -> CMat {
    let dim = 1usize << n;
    let mut gamma = CMat::zeros((dim, dim));
    let odd = m % 2 == 1;
    for r in 0..dim {
        let h = (r as u32).count_ones();
        gamma[(r, r)] = if odd {
            C64::new(0.0, 1.0).powu(h)
                * C64::from_polar(1.0, -(m as f64) * std::f64::consts::FRAC_PI_4)
        } else {
            let v = std::f64::consts::SQRT_2
                * ((m as f64 - 2.0 * h as f64 - 1.0) * std::f64::consts::FRAC_PI_4).cos();
            C64::new(v, 0.0)
        };
    }
    let hn = hadamard_n(n);
    hn.dot(&gamma).dot(&hn)
}

/// Final state `U R H^{(x)n} |0..0>` of the single-step search.
pub fn hogg_oracle_state(formula: &SatFormula, n: usize) -> Vec<C64> {
    let dim = 1usize << n;
    let state = apply_matrix(&hadamard_n(n), &ground_state(dim));
    let state = apply_matrix(&hogg_phase_matrix(formula, n), &state);
    apply_matrix(&hogg_mixing_matrix(formula.m(), n), &state)
}

/// Reduced pulse sequence of the single-step search on three work qubits.
///
/// For one clause: a selective `(pi)_x` on the clause variable when it is
/// positive, then `(pi/2)_y` on the two other qubits. For three clauses
/// covering all variables: `(pi/2)_{+-x}` per qubit (sign by clause
/// polarity), then hard `(pi/2)_{-y}` and `(pi/2)_x` on all three.
pub fn hogg_program(
    formula: &SatFormula,
    sys: &SpinSystem,
) -> Result<AlgorithmRun, AlgorithmError> {
    require_work_width(sys, 3)?;
    let name = format!("hogg formula={formula}");
    let m = formula.m();
    let mut vars: Vec<usize> = formula.clauses().iter().map(|c| c.var).collect();
    vars.sort_unstable();
    vars.dedup();
    if !(m == 1 || (m == 3 && vars == [1, 2, 3])) {
        return Err(AlgorithmError::UnsupportedFormula(format!(
            "{formula}: pulse sequences cover one clause or three clauses naming every variable"
        )));
    }

    let mut events: Vec<PulseEvent> = Vec::new();
    if m == 1 {
        let clause = formula.clauses()[0];
        if !clause.negated {
            if clause.var <= 2 {
                events.extend(selective_x_pi(sys, clause.var)?);
            } else {
                events.push(PulseEvent::pulse(&[clause.var], AngleExpr::PI, Phase::X));
            }
        }
        for q in 1..=3usize {
            if q == clause.var {
                continue;
            }
            if q <= 2 {
                events.extend(selective_y90(sys, q, false)?);
            } else {
                events.push(PulseEvent::pulse(&[q], AngleExpr::PI_2, Phase::Y));
            }
        }
    } else {
        let polarity = |q: usize| {
            formula
                .clauses()
                .iter()
                .find(|c| c.var == q)
                .map(|c| !c.negated)
                .expect("all variables present")
        };
        let (p1, p2, p3) = (polarity(1), polarity(2), polarity(3));
        if p1 == p2 {
            let phase = if p1 { Phase::X } else { Phase::MinusX };
            if p1 == p3 {
                events.push(PulseEvent::pulse(&[1, 2, 3], AngleExpr::PI_2, phase));
            } else {
                events.push(PulseEvent::pulse(&[1, 2], AngleExpr::PI_2, phase));
                events.push(PulseEvent::pulse(&[3], AngleExpr::PI_2, phase.opposite()));
            }
        } else {
            events.extend(x90_pair(sys, p1)?);
            events.push(PulseEvent::pulse(
                &[3],
                AngleExpr::PI_2,
                if p3 { Phase::X } else { Phase::MinusX },
            ));
        }
        events.push(PulseEvent::pulse(
            &[1, 2, 3],
            AngleExpr::PI_2,
            Phase::MinusY,
        ));
        events.push(PulseEvent::pulse(&[1, 2, 3], AngleExpr::PI_2, Phase::X));
    }

    let solutions = formula.solutions(3);
    assert!(
        !solutions.is_empty(),
        "one- and three-clause conjunctions are satisfiable"
    );
    Ok(AlgorithmRun {
        name,
        program: PulseProgram::new(format!("hogg {formula}"), events),
        ideal_state: hogg_oracle_state(formula, 3),
        expected: ExpectedReadout::uniform(solutions),
    })
}

// --- dispatch -------------------------------------------------------------------

/// Which algorithm to run, with its input.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmSpec {
    Grover { target: BitLabel },
    Counting { oracle: CountOracle },
    BernsteinVazirani { string: BitLabel },
    Hogg { formula: SatFormula },
}

impl AlgorithmSpec {
    pub fn build(&self, sys: &SpinSystem) -> Result<AlgorithmRun, AlgorithmError> {
        match self {
            AlgorithmSpec::Grover { target } => grover_program(*target, sys),
            AlgorithmSpec::Counting { oracle } => counting_program(*oracle, sys),
            AlgorithmSpec::BernsteinVazirani { string } => bv_program(*string, sys),
            AlgorithmSpec::Hogg { formula } => hogg_program(formula, sys),
        }
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmSpec::Grover { target } => write!(f, "grover target={target}"),
            AlgorithmSpec::Counting { oracle } => write!(f, "count oracle={oracle}"),
            AlgorithmSpec::BernsteinVazirani { string } => write!(f, "bv string={string}"),
            AlgorithmSpec::Hogg { formula } => write!(f, "hogg formula={formula}"),
        }
    }
}

/// Number of differing bit positions; equals `|r| + |s| - 2 |r AND s|`.
pub fn hamming_distance(r: BitLabel, s: BitLabel) -> Result<u32, AlgorithmError> {
    if r.width() != s.width() {
        return Err(AlgorithmError::WidthMismatch {
            need: r.width() as usize,
            have: s.width() as usize,
        });
    }
    Ok((r.bits() ^ s.bits()).count_ones())
}
