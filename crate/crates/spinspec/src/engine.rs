//! Deviation density matrices and their evolution under pulse-program
//! events: hard pulses, free-evolution delays, crusher gradients and ideal
//! transition-selective rotations.
//!
//! Rotation convention: a pulse of angle `theta` about axis `a` applies
//! `U = exp(-i theta I_a)` and states transform as `rho -> U rho U^dag`.
//! Events in a program run left to right (first listed, first applied).
//!
//! Text format, one event per line:
//!
//! ```text
//! # program: grover x=11
//! pulse targets=1,2 angle=pi/2 phase=-y
//! delay t=0.06195786864931846
//! delay t=1/(4*nu) mode=zeeman
//! grad
//! tpulse from=000 to=100 angle=pi
//! ```
//!
//! `nu` resolves against the spin system's centered proton pair at run time.
//! Formatting a parsed program reproduces the canonical text exactly, and
//! parsing formatted text reproduces the program value exactly.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::matrix::{dagger, identity, kron_all, max_abs, C64, CMat};
use crate::spin::{
    build_hamiltonian, build_zeeman_hamiltonian, hamiltonian_diag, BitLabel, CenteredPairError,
    SpinSystem, TWO_PI,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("hard pulse needs a nonempty target set")]
    EmptyTargets,
    #[error("target qubit {0} outside 0..{1}")]
    TargetOutOfRange(usize, usize),
    #[error("delay duration must be non-negative, got {0} s")]
    NegativeDuration(f64),
    #[error("transition {from} <-> {to} is not single-quantum (labels must differ in exactly one bit)")]
    NotSingleQuantum { from: BitLabel, to: BitLabel },
    #[error("label {label} has width {got}, expected {expected} qubits")]
    LabelWidth {
        label: BitLabel,
        got: u8,
        expected: u8,
    },
    #[error("deviation matrix is {got}x{got}, expected {expected}x{expected} for {n} qubits")]
    DimensionMismatch { got: usize, expected: usize, n: usize },
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("a gradient event has no unitary")]
    GradientNotUnitary,
    #[error(transparent)]
    CenteredPair(#[from] CenteredPairError),
}

/// Pulse phase axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    X,
    MinusX,
    Y,
    MinusY,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::X => "x",
            Phase::MinusX => "-x",
            Phase::Y => "y",
            Phase::MinusY => "-y",
        }
    }

    pub fn opposite(&self) -> Phase {
        match self {
            Phase::X => Phase::MinusX,
            Phase::MinusX => Phase::X,
            Phase::Y => Phase::MinusY,
            Phase::MinusY => Phase::Y,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pulse angle, kept symbolic for exact text round-trips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleExpr {
    /// `num * pi / den`
    PiRatio { num: u16, den: u16 },
    /// radians
    Literal(f64),
}

impl AngleExpr {
    pub const PI: AngleExpr = AngleExpr::PiRatio { num: 1, den: 1 };
    pub const PI_2: AngleExpr = AngleExpr::PiRatio { num: 1, den: 2 };
    pub const PI_4: AngleExpr = AngleExpr::PiRatio { num: 1, den: 4 };

    pub fn radians(&self) -> f64 {
        match *self {
            AngleExpr::PiRatio { num, den } => std::f64::consts::PI * num as f64 / den as f64,
            AngleExpr::Literal(v) => v,
        }
    }
}

impl fmt::Display for AngleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AngleExpr::PiRatio { num: 1, den: 1 } => write!(f, "pi"),
            AngleExpr::PiRatio { num, den: 1 } => write!(f, "{num}*pi"),
            AngleExpr::PiRatio { num: 1, den } => write!(f, "pi/{den}"),
            AngleExpr::PiRatio { num, den } => write!(f, "{num}*pi/{den}"),
            AngleExpr::Literal(v) => write!(f, "{v}"),
        }
    }
}

/// Delay length, either literal seconds or a fraction of the proton
/// splitting (`1/(k*nu)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayExpr {
    Seconds(f64),
    /// `1/(k*nu)` with `nu` the centered-pair offset magnitude.
    OverNu(u16),
}

impl DelayExpr {
    pub fn resolve(&self, sys: &SpinSystem) -> Result<f64, EngineError> {
        match *self {
            DelayExpr::Seconds(t) => Ok(t),
            DelayExpr::OverNu(k) => Ok(1.0 / (k as f64 * sys.centered_pair_nu()?)),
        }
    }
}

impl fmt::Display for DelayExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DelayExpr::Seconds(t) => write!(f, "{t}"),
            DelayExpr::OverNu(k) => write!(f, "1/({k}*nu)"),
        }
    }
}

/// One event of a pulse program.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseEvent {
    HardPulse {
        targets: BTreeSet<usize>,
        angle: AngleExpr,
        phase: Phase,
    },
    Delay {
        t: DelayExpr,
        /// Marks jump-and-return segments: in zeeman-only mode these delays
        /// drop the J couplings and keep only the offsets.
        zeeman: bool,
    },
    Gradient,
    TransitionPulse {
        from: BitLabel,
        to: BitLabel,
        angle: AngleExpr,
        phase: Phase,
    },
}

impl PulseEvent {
    pub fn pulse(targets: &[usize], angle: AngleExpr, phase: Phase) -> PulseEvent {
        PulseEvent::HardPulse {
            targets: targets.iter().copied().collect(),
            angle,
            phase,
        }
    }

    pub fn delay_s(t: f64) -> PulseEvent {
        PulseEvent::Delay {
            t: DelayExpr::Seconds(t),
            zeeman: false,
        }
    }

    pub fn zeeman_delay(k: u16) -> PulseEvent {
        PulseEvent::Delay {
            t: DelayExpr::OverNu(k),
            zeeman: true,
        }
    }
}

impl fmt::Display for PulseEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PulseEvent::HardPulse {
                targets,
                angle,
                phase,
            } => {
                let list: Vec<String> = targets.iter().map(|t| t.to_string()).collect();
                write!(f, "pulse targets={} angle={angle} phase={phase}", list.join(","))
            }
            PulseEvent::Delay { t, zeeman } => {
                write!(f, "delay t={t}")?;
                if *zeeman {
                    write!(f, " mode=zeeman")?;
                }
                Ok(())
            }
            PulseEvent::Gradient => write!(f, "grad"),
            PulseEvent::TransitionPulse {
                from,
                to,
                angle,
                phase,
            } => {
                write!(f, "tpulse from={from} to={to} angle={angle}")?;
                if *phase != Phase::X {
                    write!(f, " phase={phase}")?;
                }
                Ok(())
            }
        }
    }
}

/// Ordered list of pulse events; an empty list is the identity program.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseProgram {
    pub label: String,
    pub events: Vec<PulseEvent>,
}

impl PulseProgram {
    pub fn new(label: impl Into<String>, events: Vec<PulseEvent>) -> Self {
        PulseProgram {
            label: label.into(),
            events,
        }
    }

    pub fn identity(label: impl Into<String>) -> Self {
        PulseProgram::new(label, Vec::new())
    }

    pub fn extend(&mut self, other: PulseProgram) {
        self.events.extend(other.events);
    }

    pub fn has_gradient(&self) -> bool {
        self.events.iter().any(|e| matches!(e, PulseEvent::Gradient))
    }

    pub fn parse(text: &str) -> Result<PulseProgram, ProgramParseError> {
        parse_program(text)
    }
}

impl fmt::Display for PulseProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.label.is_empty() {
            writeln!(f, "# program: {}", self.label)?;
        }
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
#[error("pulse program line {line}: {msg}")]
pub struct ProgramParseError {
    pub line: usize,
    pub msg: String,
}

fn perr(line: usize, msg: impl Into<String>) -> ProgramParseError {
    ProgramParseError {
        line,
        msg: msg.into(),
    }
}

fn parse_phase(s: &str, line: usize) -> Result<Phase, ProgramParseError> {
    match s {
        "x" => Ok(Phase::X),
        "-x" => Ok(Phase::MinusX),
        "y" => Ok(Phase::Y),
        "-y" => Ok(Phase::MinusY),
        _ => Err(perr(line, format!("bad phase {s:?}; expected x, -x, y or -y"))),
    }
}

fn parse_angle(s: &str, line: usize) -> Result<AngleExpr, ProgramParseError> {
    let expr = if let Some(rest) = s.strip_prefix("pi") {
        // "pi", "pi/4"
        let den = if rest.is_empty() {
            1
        } else if let Some(d) = rest.strip_prefix('/') {
            d.parse::<u16>().map_err(|_| perr(line, format!("bad angle {s:?}")))?
        } else {
            return Err(perr(line, format!("bad angle {s:?}")));
        };
        AngleExpr::PiRatio { num: 1, den }
    } else if let Some((num, tail)) = s.split_once("*pi") {
        // "3*pi/2", "2*pi"
        let num = num
            .parse::<u16>()
            .map_err(|_| perr(line, format!("bad angle {s:?}")))?;
        let den = if tail.is_empty() {
            1
        } else if let Some(d) = tail.strip_prefix('/') {
            d.parse::<u16>().map_err(|_| perr(line, format!("bad angle {s:?}")))?
        } else {
            return Err(perr(line, format!("bad angle {s:?}")));
        };
        AngleExpr::PiRatio { num, den }
    } else {
        let v = s
            .parse::<f64>()
            .map_err(|_| perr(line, format!("bad angle {s:?}")))?;
        AngleExpr::Literal(v)
    };
    let rad = expr.radians();
    if !(rad.is_finite() && rad > 0.0 && rad <= TWO_PI) {
        return Err(perr(line, format!("angle {s:?} outside (0, 2*pi]")));
    }
    if let AngleExpr::PiRatio { den, .. } = expr {
        if den == 0 {
            return Err(perr(line, format!("bad angle {s:?}")));
        }
    }
    Ok(expr)
}

fn parse_delay_expr(s: &str, line: usize) -> Result<DelayExpr, ProgramParseError> {
    if let Some(inner) = s.strip_prefix("1/(").and_then(|r| r.strip_suffix("*nu)")) {
        let k = inner
            .parse::<u16>()
            .map_err(|_| perr(line, format!("bad delay {s:?}")))?;
        if k == 0 {
            return Err(perr(line, format!("bad delay {s:?}")));
        }
        return Ok(DelayExpr::OverNu(k));
    }
    let t = s
        .parse::<f64>()
        .map_err(|_| perr(line, format!("bad delay {s:?}")))?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(perr(line, format!("delay {s:?} must be finite and non-negative")));
    }
    Ok(DelayExpr::Seconds(t))
}

fn kv<'a>(word: &'a str, key: &str, line: usize) -> Result<&'a str, ProgramParseError> {
    word.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| perr(line, format!("expected {key}=..., got {word:?}")))
}

fn parse_program(text: &str) -> Result<PulseProgram, ProgramParseError> {
    let mut label = String::new();
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let n = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(l) = rest.trim_start().strip_prefix("program:") {
                label = l.trim().to_string();
            }
            continue;
        }
        let mut words = line.split_whitespace();
        let head = words.next().expect("nonempty line");
        let event = match head {
            "pulse" => {
                let t = kv(words.next().ok_or_else(|| perr(n, "pulse needs targets="))?, "targets", n)?;
                let mut targets = BTreeSet::new();
                for part in t.split(',') {
                    let q: usize = part
                        .parse()
                        .map_err(|_| perr(n, format!("bad target {part:?}")))?;
                    if q > 11 {
                        return Err(perr(n, format!("target {q} out of range")));
                    }
                    targets.insert(q);
                }
                if targets.is_empty() {
                    return Err(perr(n, "pulse needs at least one target"));
                }
                let a = kv(words.next().ok_or_else(|| perr(n, "pulse needs angle="))?, "angle", n)?;
                let p = kv(words.next().ok_or_else(|| perr(n, "pulse needs phase="))?, "phase", n)?;
                if let Some(extra) = words.next() {
                    return Err(perr(n, format!("unexpected {extra:?}")));
                }
                PulseEvent::HardPulse {
                    targets,
                    angle: parse_angle(a, n)?,
                    phase: parse_phase(p, n)?,
                }
            }
            "delay" => {
                let t = kv(words.next().ok_or_else(|| perr(n, "delay needs t="))?, "t", n)?;
                let zeeman = match words.next() {
                    None => false,
                    Some(w) => {
                        let m = kv(w, "mode", n)?;
                        if m != "zeeman" {
                            return Err(perr(n, format!("bad delay mode {m:?}")));
                        }
                        true
                    }
                };
                if let Some(extra) = words.next() {
                    return Err(perr(n, format!("unexpected {extra:?}")));
                }
                PulseEvent::Delay {
                    t: parse_delay_expr(t, n)?,
                    zeeman,
                }
            }
            "grad" => {
                if let Some(extra) = words.next() {
                    return Err(perr(n, format!("unexpected {extra:?}")));
                }
                PulseEvent::Gradient
            }
            "tpulse" => {
                let from = kv(words.next().ok_or_else(|| perr(n, "tpulse needs from="))?, "from", n)?;
                let to = kv(words.next().ok_or_else(|| perr(n, "tpulse needs to="))?, "to", n)?;
                let a = kv(words.next().ok_or_else(|| perr(n, "tpulse needs angle="))?, "angle", n)?;
                let phase = match words.next() {
                    None => Phase::X,
                    Some(w) => parse_phase(kv(w, "phase", n)?, n)?,
                };
                if let Some(extra) = words.next() {
                    return Err(perr(n, format!("unexpected {extra:?}")));
                }
                let from: BitLabel = from
                    .parse()
                    .map_err(|e| perr(n, format!("{e}")))?;
                let to: BitLabel = to.parse().map_err(|e| perr(n, format!("{e}")))?;
                if from.width() != to.width() {
                    return Err(perr(n, "tpulse labels must have equal width"));
                }
                if (from.bits() ^ to.bits()).count_ones() != 1 {
                    return Err(perr(n, "tpulse labels must differ in exactly one bit"));
                }
                PulseEvent::TransitionPulse {
                    from,
                    to,
                    angle: parse_angle(a, n)?,
                    phase,
                }
            }
            other => return Err(perr(n, format!("unknown event {other:?}"))),
        };
        events.push(event);
    }
    Ok(PulseProgram { label, events })
}

/// 2x2 rotation `exp(-i angle I_axis)`.
pub fn rotation2(phase: Phase, angle: f64) -> CMat {
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let mut m = CMat::zeros((2, 2));
    match phase {
        Phase::X | Phase::MinusX => {
            let sign = if phase == Phase::X { 1.0 } else { -1.0 };
            m[(0, 0)] = C64::new(c, 0.0);
            m[(1, 1)] = C64::new(c, 0.0);
            m[(0, 1)] = C64::new(0.0, -sign * s);
            m[(1, 0)] = C64::new(0.0, -sign * s);
        }
        Phase::Y | Phase::MinusY => {
            let sign = if phase == Phase::Y { 1.0 } else { -1.0 };
            m[(0, 0)] = C64::new(c, 0.0);
            m[(1, 1)] = C64::new(c, 0.0);
            m[(0, 1)] = C64::new(-sign * s, 0.0);
            m[(1, 0)] = C64::new(sign * s, 0.0);
        }
    }
    m
}

/// Evolution-kernel mode for delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionMode {
    /// Every delay evolves under the full Hamiltonian.
    Full,
    /// Delays tagged `mode=zeeman` drop the couplings; all other delays keep
    /// the full Hamiltonian.
    ZeemanOnly,
}

impl EvolutionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvolutionMode::Full => "full",
            EvolutionMode::ZeemanOnly => "zeeman",
        }
    }
}

impl std::str::FromStr for EvolutionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(EvolutionMode::Full),
            "zeeman" | "zeeman-only" => Ok(EvolutionMode::ZeemanOnly),
            other => Err(format!("bad mode {other:?}; expected full or zeeman")),
        }
    }
}

/// 2^n x 2^n Hermitian deviation matrix (traceless in general).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationMatrix {
    n_qubits: usize,
    data: CMat,
}

impl DeviationMatrix {
    pub fn new(n_qubits: usize, data: CMat) -> Result<Self, EngineError> {
        let dim = 1usize << n_qubits;
        if data.nrows() != dim || data.ncols() != dim {
            return Err(EngineError::DimensionMismatch {
                got: data.nrows(),
                expected: dim,
                n: n_qubits,
            });
        }
        let defect = crate::matrix::hermiticity_defect(&data);
        if defect > 1e-10 {
            return Err(EngineError::NotHermitian(defect));
        }
        Ok(DeviationMatrix { n_qubits, data })
    }

    pub fn zeros(n_qubits: usize) -> Self {
        DeviationMatrix {
            n_qubits,
            data: CMat::zeros((1 << n_qubits, 1 << n_qubits)),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn into_data(self) -> CMat {
        self.data
    }

    pub fn trace(&self) -> C64 {
        crate::matrix::trace(&self.data)
    }

    /// tr(rho^2), real for Hermitian input.
    pub fn purity(&self) -> f64 {
        self.data
            .iter()
            .zip(dagger(&self.data).t().iter())
            .map(|(a, b)| (a * b).re)
            .sum::<f64>()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.data.diag().iter().map(|z| z.re).collect()
    }

    /// Population difference across the observer transition for each work
    /// label: `rho[(0,s),(0,s)] - rho[(1,s),(1,s)]`.
    pub fn work_populations(&self) -> Vec<f64> {
        let half = self.dim() / 2;
        (0..half)
            .map(|s| self.data[(s, s)].re - self.data[(s + half, s + half)].re)
            .collect()
    }

    fn conjugated(&self, u: &CMat) -> DeviationMatrix {
        DeviationMatrix {
            n_qubits: self.n_qubits,
            data: u.dot(&self.data).dot(&dagger(u)),
        }
    }

    /// Scaled sum, used by preparation-by-subtraction schemes.
    pub fn linear_combination(terms: &[(f64, &DeviationMatrix)]) -> DeviationMatrix {
        assert!(!terms.is_empty());
        let n = terms[0].1.n_qubits;
        let mut data = CMat::zeros(terms[0].1.data.raw_dim());
        for (w, m) in terms {
            assert_eq!(m.n_qubits, n);
            data = data + m.data.mapv(|z| z * C64::new(*w, 0.0));
        }
        DeviationMatrix { n_qubits: n, data }
    }
}

/// Unitary of a hard pulse on the full register.
pub fn hard_pulse_unitary(
    n_qubits: usize,
    targets: &BTreeSet<usize>,
    angle: f64,
    phase: Phase,
) -> Result<CMat, EngineError> {
    if targets.is_empty() {
        return Err(EngineError::EmptyTargets);
    }
    for &t in targets {
        if t >= n_qubits {
            return Err(EngineError::TargetOutOfRange(t, n_qubits));
        }
    }
    let factors: Vec<CMat> = (0..n_qubits)
        .map(|q| {
            if targets.contains(&q) {
                rotation2(phase, angle)
            } else {
                identity(2)
            }
        })
        .collect();
    Ok(kron_all(&factors))
}

/// Instantaneous rotation `exp(-i angle sum_k I_phase^k)` on the target set.
pub fn apply_hard_pulse(
    rho: &DeviationMatrix,
    targets: &BTreeSet<usize>,
    angle: f64,
    phase: Phase,
) -> Result<DeviationMatrix, EngineError> {
    let u = hard_pulse_unitary(rho.n_qubits(), targets, angle, phase)?;
    Ok(rho.conjugated(&u))
}

/// Free evolution `rho -> exp(-iHt) rho exp(+iHt)` for a Hamiltonian that is
/// diagonal in the product basis.
pub fn apply_delay(
    rho: &DeviationMatrix,
    duration_s: f64,
    hamiltonian: &CMat,
) -> Result<DeviationMatrix, EngineError> {
    if duration_s < 0.0 {
        return Err(EngineError::NegativeDuration(duration_s));
    }
    let diag = hamiltonian_diag(hamiltonian);
    assert_eq!(diag.len(), rho.dim(), "Hamiltonian dimension mismatch");
    let mut data = rho.data().clone();
    for ((r, c), z) in data.indexed_iter_mut() {
        let phase = -(diag[r] - diag[c]) * duration_s;
        *z *= C64::from_polar(1.0, phase);
    }
    Ok(DeviationMatrix {
        n_qubits: rho.n_qubits(),
        data,
    })
}

pub fn delay_unitary(dim: usize, duration_s: f64, hamiltonian: &CMat) -> CMat {
    let diag = hamiltonian_diag(hamiltonian);
    let mut u = CMat::zeros((dim, dim));
    for i in 0..dim {
        u[(i, i)] = C64::from_polar(1.0, -diag[i] * duration_s);
    }
    u
}

/// Coherence order of element (r, c): signed number of up-flips minus
/// down-flips between the two labels.
fn coherence_order(r: usize, c: usize) -> i32 {
    (c.count_ones() as i32) - (r.count_ones() as i32)
}

/// Crusher gradient: zeroes every element of nonzero coherence order.
/// Populations and zero-quantum elements survive.
pub fn apply_gradient(rho: &DeviationMatrix) -> DeviationMatrix {
    let mut data = rho.data().clone();
    for ((r, c), z) in data.indexed_iter_mut() {
        if coherence_order(r, c) != 0 {
            *z = crate::matrix::ZERO;
        }
    }
    DeviationMatrix {
        n_qubits: rho.n_qubits(),
        data,
    }
}

/// Unitary of an ideal two-level rotation embedded in the full space:
/// identity outside the subspace spanned by the transition pair.
pub fn transition_pulse_unitary(
    n_qubits: usize,
    from: BitLabel,
    to: BitLabel,
    angle: f64,
    phase: Phase,
) -> Result<CMat, EngineError> {
    if from.width() as usize != n_qubits {
        return Err(EngineError::LabelWidth {
            label: from,
            got: from.width(),
            expected: n_qubits as u8,
        });
    }
    if to.width() as usize != n_qubits {
        return Err(EngineError::LabelWidth {
            label: to,
            got: to.width(),
            expected: n_qubits as u8,
        });
    }
    if (from.bits() ^ to.bits()).count_ones() != 1 {
        return Err(EngineError::NotSingleQuantum { from, to });
    }
    let r = rotation2(phase, angle);
    let mut u = identity(1 << n_qubits);
    let (a, b) = (from.index(), to.index());
    u[(a, a)] = r[(0, 0)];
    u[(a, b)] = r[(0, 1)];
    u[(b, a)] = r[(1, 0)];
    u[(b, b)] = r[(1, 1)];
    Ok(u)
}

/// Ideal transition-selective rotation on a single-quantum transition.
pub fn apply_transition_pulse(
    rho: &DeviationMatrix,
    from: BitLabel,
    to: BitLabel,
    angle: f64,
    phase: Phase,
) -> Result<DeviationMatrix, EngineError> {
    let u = transition_pulse_unitary(rho.n_qubits(), from, to, angle, phase)?;
    Ok(rho.conjugated(&u))
}

/// Pre-resolved Hamiltonians for a program run.
pub struct Kernels {
    pub full: CMat,
    pub zeeman: CMat,
}

impl Kernels {
    pub fn for_system(sys: &SpinSystem) -> Kernels {
        Kernels {
            full: build_hamiltonian(sys),
            zeeman: build_zeeman_hamiltonian(sys),
        }
    }

    fn pick(&self, tagged_zeeman: bool, mode: EvolutionMode) -> &CMat {
        if tagged_zeeman && mode == EvolutionMode::ZeemanOnly {
            &self.zeeman
        } else {
            &self.full
        }
    }
}

/// Apply one event to a state.
pub fn apply_event(
    rho: &DeviationMatrix,
    event: &PulseEvent,
    sys: &SpinSystem,
    kernels: &Kernels,
    mode: EvolutionMode,
) -> Result<DeviationMatrix, EngineError> {
    match event {
        PulseEvent::HardPulse {
            targets,
            angle,
            phase,
        } => apply_hard_pulse(rho, targets, angle.radians(), *phase),
        PulseEvent::Delay { t, zeeman } => {
            apply_delay(rho, t.resolve(sys)?, kernels.pick(*zeeman, mode))
        }
        PulseEvent::Gradient => Ok(apply_gradient(rho)),
        PulseEvent::TransitionPulse {
            from,
            to,
            angle,
            phase,
        } => apply_transition_pulse(rho, *from, *to, angle.radians(), *phase),
    }
}

/// Left-to-right application of a program's events.
pub fn run_program(
    rho: &DeviationMatrix,
    program: &PulseProgram,
    sys: &SpinSystem,
    mode: EvolutionMode,
) -> Result<DeviationMatrix, EngineError> {
    let kernels = Kernels::for_system(sys);
    let mut state = rho.clone();
    for event in &program.events {
        state = apply_event(&state, event, sys, &kernels, mode)?;
    }
    Ok(state)
}

/// Unitary of a single non-gradient event.
pub fn event_unitary(
    event: &PulseEvent,
    sys: &SpinSystem,
    kernels: &Kernels,
    mode: EvolutionMode,
) -> Result<CMat, EngineError> {
    match event {
        PulseEvent::HardPulse {
            targets,
            angle,
            phase,
        } => hard_pulse_unitary(sys.n_qubits(), targets, angle.radians(), *phase),
        PulseEvent::Delay { t, zeeman } => Ok(delay_unitary(
            sys.dim(),
            t.resolve(sys)?,
            kernels.pick(*zeeman, mode),
        )),
        PulseEvent::Gradient => Err(EngineError::GradientNotUnitary),
        PulseEvent::TransitionPulse {
            from,
            to,
            angle,
            phase,
        } => transition_pulse_unitary(sys.n_qubits(), *from, *to, angle.radians(), *phase),
    }
}

/// Ordered product of event unitaries (first event rightmost), on the full
/// register. Fails on gradients.
pub fn program_unitary(
    program: &PulseProgram,
    sys: &SpinSystem,
    mode: EvolutionMode,
) -> Result<CMat, EngineError> {
    let kernels = Kernels::for_system(sys);
    let mut u = identity(sys.dim());
    for event in &program.events {
        u = event_unitary(event, sys, &kernels, mode)?.dot(&u);
    }
    Ok(u)
}

/// Normalized overlap tr(a b) / sqrt(tr(a^2) tr(b^2)) between two deviation
/// matrices.
pub fn state_overlap(a: &DeviationMatrix, b: &DeviationMatrix) -> f64 {
    let dot = a
        .data()
        .iter()
        .zip(dagger(b.data()).t().iter())
        .map(|(x, y)| (x * y).re)
        .sum::<f64>();
    let na = a.purity().sqrt();
    let nb = b.purity().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Utility used in tests and state prep: is the matrix all zero.
pub fn is_zero(m: &CMat) -> bool {
    max_abs(m) == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{max_abs_diff, ONE, ZERO};
    use crate::spin::{sparse_product_operator, PolarizationKind, SpinSystem};
    use proptest::prelude::*;

    fn two_proton_system() -> SpinSystem {
        // a bare coupled pair, indices 0 and 1
        SpinSystem::new(2, vec![0.0, 0.0], vec![(0, 1, 8.07)], 0.4, None).unwrap()
    }

    fn dev(n: usize, m: CMat) -> DeviationMatrix {
        DeviationMatrix::new(n, m).unwrap()
    }

    fn op(n: usize, named: &[(usize, PolarizationKind)]) -> CMat {
        sparse_product_operator(n, named).unwrap()
    }

    /// Taylor-series matrix exponential with scaling and squaring; test
    /// oracle, independent of the diagonal fast path.
    fn expm(m: &CMat) -> CMat {
        let norm = m.iter().map(|z| z.norm()).sum::<f64>();
        let squarings = norm.log2().ceil().max(0.0) as u32 + 1;
        let scaled = m.mapv(|z| z / C64::new(2f64.powi(squarings as i32), 0.0));
        let mut result = identity(m.nrows());
        let mut term = identity(m.nrows());
        for k in 1..30 {
            term = term.dot(&scaled).mapv(|z| z / C64::new(k as f64, 0.0));
            result = result + &term;
        }
        for _ in 0..squarings {
            result = result.dot(&result);
        }
        result
    }

    #[test]
    fn pi_pulse_inverts_longitudinal_state() {
        let rho = dev(2, op(2, &[(0, PolarizationKind::Z)]));
        let out = apply_hard_pulse(&rho, &[0].into_iter().collect(), std::f64::consts::PI, Phase::X)
            .unwrap();
        let expected = op(2, &[(0, PolarizationKind::Z)]).mapv(|z| -z);
        assert!(max_abs_diff(out.data(), &expected) < 1e-12);
    }

    #[test]
    fn y90_on_observer_creates_transverse_terms() {
        // Iz0 * proj0(1) -> Ix0 * proj0(1)
        let rho = dev(
            2,
            op(2, &[(0, PolarizationKind::Z), (1, PolarizationKind::Proj0)]),
        );
        let out = apply_hard_pulse(
            &rho,
            &[0].into_iter().collect(),
            std::f64::consts::FRAC_PI_2,
            Phase::Y,
        )
        .unwrap();
        let expected = op(2, &[(0, PolarizationKind::X), (1, PolarizationKind::Proj0)]);
        assert!(max_abs_diff(out.data(), &expected) < 1e-12);
    }

    #[test]
    fn full_rotation_acts_as_identity_on_states() {
        let rho = dev(
            2,
            op(2, &[(0, PolarizationKind::X), (1, PolarizationKind::Z)]),
        );
        let out = apply_hard_pulse(&rho, &[0, 1].into_iter().collect(), TWO_PI, Phase::MinusY)
            .unwrap();
        assert!(max_abs_diff(out.data(), rho.data()) < 1e-10);
    }

    #[test]
    fn empty_target_set_is_rejected() {
        let rho = DeviationMatrix::zeros(2);
        let err = apply_hard_pulse(&rho, &BTreeSet::new(), 1.0, Phase::X);
        assert!(matches!(err, Err(EngineError::EmptyTargets)));
    }

    #[test]
    fn zero_delay_leaves_state_unchanged() {
        let sys = two_proton_system();
        let h = build_hamiltonian(&sys);
        let rho = dev(2, op(2, &[(0, PolarizationKind::X)]));
        let out = apply_delay(&rho, 0.0, &h).unwrap();
        assert!(max_abs_diff(out.data(), rho.data()) < 1e-15);
        assert!(matches!(
            apply_delay(&rho, -1.0, &h),
            Err(EngineError::NegativeDuration(_))
        ));
    }

    #[test]
    fn j_evolution_for_half_period_gives_antiphase_term() {
        // Ix evolves to 2 Iy Iz under pure J coupling for t = 1/(2J),
        // cross-checked against a dense matrix exponential.
        let sys = two_proton_system();
        let j = sys.coupling_hz(0, 1);
        let tau = 1.0 / (2.0 * j);
        let h = build_hamiltonian(&sys);
        let rho = dev(2, op(2, &[(0, PolarizationKind::X)]));
        let out = apply_delay(&rho, tau, &h).unwrap();

        let antiphase = op(2, &[(0, PolarizationKind::Y), (1, PolarizationKind::Z)])
            .mapv(|z| z * C64::new(2.0, 0.0));
        assert!(max_abs_diff(out.data(), &antiphase) < 1e-10);

        let u = expm(&h.mapv(|z| z * C64::new(0.0, -tau)));
        let oracle = u.dot(rho.data()).dot(&dagger(&u));
        assert!(max_abs_diff(out.data(), &oracle) < 1e-9);
    }

    #[test]
    fn quarter_nu_delay_is_a_z90_pair() {
        // Under the Zeeman Hamiltonian with nu1 = -nu2 = nu, a delay of
        // 1/(4 nu) rotates qubit 1 by +pi/2 and qubit 2 by -pi/2 about z.
        let sys = SpinSystem::new(
            3,
            vec![0.0, 323.0, -323.0],
            vec![(1, 2, 8.07)],
            0.4,
            None,
        )
        .unwrap();
        let hz = build_zeeman_hamiltonian(&sys);
        let t = 1.0 / (4.0 * 323.0);
        let u = delay_unitary(8, t, &hz);
        // phases exp(-i 2pi nu t m1) exp(+i 2pi nu t m2) = z90 on 1, -z90 on 2
        let expected = {
            let mut m = identity(8);
            for b in 0..8usize {
                let m1 = 0.5 - ((b >> 1) & 1) as f64;
                let m2 = 0.5 - (b & 1) as f64;
                let phase = -std::f64::consts::FRAC_PI_2 * m1 + std::f64::consts::FRAC_PI_2 * m2;
                m[(b, b)] = C64::from_polar(1.0, phase);
            }
            m
        };
        assert!(max_abs_diff(&u, &expected) < 1e-12);
    }

    #[test]
    fn gradient_keeps_populations_and_zero_quantum_only() {
        let n = 2;
        // mixed state with single-, zero- and double-quantum elements
        let mut m = CMat::zeros((4, 4));
        m[(0, 0)] = ONE; // population, survives
        m[(1, 2)] = ONE; // zero-quantum (01 <-> 10), survives
        m[(2, 1)] = ONE;
        m[(0, 1)] = ONE; // single-quantum, dies
        m[(1, 0)] = ONE;
        m[(0, 3)] = ONE; // double-quantum, dies
        m[(3, 0)] = ONE;
        let out = apply_gradient(&dev(n, m));
        // brute-force classifier: keep iff popcounts match
        for ((r, c), z) in out.data().indexed_iter() {
            let keep = (r.count_ones()) == (c.count_ones());
            if keep {
                continue;
            }
            assert_eq!(*z, ZERO, "element ({r},{c}) should be crushed");
        }
        assert_eq!(out.data()[(1, 2)], ONE);
        assert_eq!(out.data()[(0, 0)], ONE);
        assert_eq!(out.data()[(0, 1)], ZERO);
        assert_eq!(out.data()[(0, 3)], ZERO);
    }

    #[test]
    fn gradient_zeroes_pure_transverse_state() {
        let rho = dev(2, op(2, &[(0, PolarizationKind::X)]));
        let out = apply_gradient(&rho);
        assert!(max_abs(out.data()) < 1e-15);
    }

    #[test]
    fn transition_pi_pulse_swaps_the_pair_populations() {
        // equilibrium-like diagonal on 3 qubits
        let mut m = CMat::zeros((8, 8));
        for b in 0..8usize {
            m[(b, b)] = C64::new((3.0 - 2.0 * b.count_ones() as f64) / 2.0, 0.0);
        }
        let rho = dev(3, m);
        let from: BitLabel = "000".parse().unwrap();
        let to: BitLabel = "100".parse().unwrap();
        let out = apply_transition_pulse(&rho, from, to, std::f64::consts::PI, Phase::X).unwrap();
        assert!((out.data()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((out.data()[(4, 4)].re - 1.5).abs() < 1e-12);
        // all other populations untouched
        for b in [1usize, 2, 3, 5, 6, 7] {
            assert!((out.data()[(b, b)] - rho.data()[(b, b)]).norm() < 1e-12);
        }
        // two pi pulses restore
        let back = apply_transition_pulse(&out, from, to, std::f64::consts::PI, Phase::X).unwrap();
        assert!(max_abs_diff(&CMat::from_diag(&back.data().diag().to_owned()),
                             &CMat::from_diag(&rho.data().diag().to_owned())) < 1e-10);
    }

    #[test]
    fn transition_pulse_angle_zero_is_identity() {
        let rho = dev(2, op(2, &[(0, PolarizationKind::Z)]));
        let out = apply_transition_pulse(
            &rho,
            "00".parse().unwrap(),
            "10".parse().unwrap(),
            0.0,
            Phase::X,
        )
        .unwrap();
        assert!(max_abs_diff(out.data(), rho.data()) < 1e-15);
    }

    #[test]
    fn transition_pulse_rejects_multi_bit_flips() {
        let rho = DeviationMatrix::zeros(2);
        let err = apply_transition_pulse(
            &rho,
            "00".parse().unwrap(),
            "11".parse().unwrap(),
            1.0,
            Phase::X,
        );
        assert!(matches!(err, Err(EngineError::NotSingleQuantum { .. })));
    }

    #[test]
    fn empty_program_is_identity() {
        let sys = two_proton_system();
        let rho = dev(2, op(2, &[(0, PolarizationKind::Z)]));
        let out = run_program(&rho, &PulseProgram::identity("noop"), &sys, EvolutionMode::Full)
            .unwrap();
        assert!(max_abs_diff(out.data(), rho.data()) < 1e-15);
    }

    #[test]
    fn hard_pulse_pair_makes_uniform_work_populations() {
        // (pi/2)[-y] then (pi)[x] on both work qubits of a 3-qubit register:
        // the work-register populations become uniform.
        let sys = SpinSystem::new(
            3,
            vec![20.0, 323.0, -323.0],
            vec![(0, 1, -3.84), (0, 2, 8.01), (1, 2, 8.07)],
            0.6,
            None,
        )
        .unwrap();
        // subsystem pseudopure-like start: Iz0 * |00><00| on work register
        let mut m = CMat::zeros((8, 8));
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(4, 4)] = C64::new(-0.5, 0.0);
        let rho = dev(3, m);
        let program = PulseProgram::new(
            "hadamard-pair",
            vec![
                PulseEvent::pulse(&[1, 2], AngleExpr::PI_2, Phase::MinusY),
                PulseEvent::pulse(&[1, 2], AngleExpr::PI, Phase::X),
            ],
        );
        let out = run_program(&rho, &program, &sys, EvolutionMode::ZeemanOnly).unwrap();
        let pops = out.work_populations();
        for p in &pops {
            assert!((p - 0.25).abs() < 1e-12, "populations {pops:?}");
        }
    }

    #[test]
    fn program_text_round_trips() {
        let text = "# program: demo\n\
                    pulse targets=1,2 angle=pi/2 phase=-y\n\
                    delay t=0.061951\n\
                    delay t=1/(4*nu) mode=zeeman\n\
                    grad\n\
                    tpulse from=000 to=100 angle=pi\n";
        let program = PulseProgram::parse(text).unwrap();
        assert_eq!(program.label, "demo");
        assert_eq!(program.events.len(), 5);
        assert_eq!(program.to_string(), text);
        let again = PulseProgram::parse(&program.to_string()).unwrap();
        assert_eq!(again, program);
    }

    #[test]
    fn program_parse_errors_carry_line_numbers() {
        let err = PulseProgram::parse("pulse targets=1 angle=pi\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = PulseProgram::parse("grad\npulse targets= angle=pi phase=x\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(PulseProgram::parse("delay t=-1\n").is_err());
        assert!(PulseProgram::parse("pulse targets=1 angle=3*pi phase=x\n").is_err());
        assert!(PulseProgram::parse("tpulse from=00 to=11 angle=pi\n").is_err());
    }

    #[test]
    fn gradient_has_no_unitary() {
        let sys = two_proton_system();
        let program = PulseProgram::new("g", vec![PulseEvent::Gradient]);
        assert!(matches!(
            program_unitary(&program, &sys, EvolutionMode::Full),
            Err(EngineError::GradientNotUnitary)
        ));
    }

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 1 << n;
        let mut m = CMat::zeros((dim, dim));
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let h = &m + &dagger(&m);
        h.mapv(|z| z * C64::new(0.5, 0.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pulses_preserve_purity_and_hermiticity(seed in 0u64..1000, angle in 0.01f64..6.28) {
            let rho = dev(2, random_hermitian(2, seed));
            let out = apply_hard_pulse(&rho, &[0, 1].into_iter().collect(), angle, Phase::Y).unwrap();
            prop_assert!((out.purity() - rho.purity()).abs() < 1e-9);
            prop_assert!(crate::matrix::hermiticity_defect(out.data()) < 1e-10);
            prop_assert!((out.trace() - rho.trace()).norm() < 1e-10);
        }

        #[test]
        fn delays_are_additive(seed in 0u64..1000, t1 in 0.0f64..0.1, t2 in 0.0f64..0.1) {
            let sys = two_proton_system();
            let h = build_hamiltonian(&sys);
            let rho = dev(2, random_hermitian(2, seed));
            let a = apply_delay(&apply_delay(&rho, t1, &h).unwrap(), t2, &h).unwrap();
            let b = apply_delay(&rho, t1 + t2, &h).unwrap();
            prop_assert!(max_abs_diff(a.data(), b.data()) < 1e-9);
        }

        #[test]
        fn opposite_phase_pulses_cancel(seed in 0u64..1000, angle in 0.01f64..6.28) {
            let rho = dev(2, random_hermitian(2, seed));
            let fwd = apply_hard_pulse(&rho, &[0].into_iter().collect(), angle, Phase::X).unwrap();
            let back = apply_hard_pulse(&fwd, &[0].into_iter().collect(), angle, Phase::MinusX).unwrap();
            prop_assert!(max_abs_diff(back.data(), rho.data()) < 1e-9);
        }

        #[test]
        fn gradient_is_idempotent(seed in 0u64..1000) {
            let rho = dev(2, random_hermitian(2, seed));
            let once = apply_gradient(&rho);
            let twice = apply_gradient(&once);
            prop_assert!(max_abs_diff(once.data(), twice.data()) < 1e-15);
        }

        #[test]
        fn parsed_programs_round_trip(
            angle_den in prop::sample::select(vec![1u16, 2, 4]),
            t in 0.0f64..1.0,
            k in prop::sample::select(vec![4u16, 8]),
            label in "[a-z0-9 _-]{0,16}",
        ) {
            let program = PulseProgram::new(
                label.trim().to_string(),
                vec![
                    PulseEvent::pulse(&[1, 2], AngleExpr::PiRatio { num: 1, den: angle_den }, Phase::MinusY),
                    PulseEvent::Delay { t: DelayExpr::Seconds(t), zeeman: false },
                    PulseEvent::Delay { t: DelayExpr::OverNu(k), zeeman: true },
                    PulseEvent::Gradient,
                ],
            );
            let text = program.to_string();
            let parsed = PulseProgram::parse(&text).unwrap();
            prop_assert_eq!(parsed, program);
        }
    }
}
