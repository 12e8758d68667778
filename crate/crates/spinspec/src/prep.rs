//! Initial-state preparation: thermal equilibrium and the subsystem
//! pseudopure state built by pair-of-pseudopure-states (POPS) subtraction.
//!
//! POPS runs two experiments: (i) equilibrium and (ii) equilibrium followed
//! by a transition-selective pi pulse on the `|00..0> <-> |10..0>` observer
//! transition. Half the difference of the two population distributions is
//! exactly `Iz^0 |0..0><0..0|`: the work register pseudopure in both
//! observer domains.

use crate::engine::{apply_transition_pulse, DeviationMatrix, EngineError, Phase};
use crate::matrix::{C64, CMat};
use crate::spin::{sparse_product_operator, BitLabel, PolarizationKind, SpinSystem};

/// `sum_i Iz^i` on `n` qubits: diagonal entries `(n - 2 popcount(b)) / 2`.
pub fn longitudinal_sum(n_qubits: usize) -> CMat {
    let dim = 1usize << n_qubits;
    let mut m = CMat::zeros((dim, dim));
    for i in 0..n_qubits {
        m = m + sparse_product_operator(n_qubits, &[(i, PolarizationKind::Z)])
            .expect("valid qubit index");
    }
    m
}

/// Thermal equilibrium deviation state with equal unit weights per spin.
pub fn equilibrium_state(sys: &SpinSystem) -> DeviationMatrix {
    DeviationMatrix::new(sys.n_qubits(), longitudinal_sum(sys.n_qubits()))
        .expect("equilibrium is Hermitian")
}

/// How a prepared state was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepMethod {
    Equilibrium,
    Pops,
}

impl PrepMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrepMethod::Equilibrium => "equilibrium",
            PrepMethod::Pops => "pops",
        }
    }
}

impl std::str::FromStr for PrepMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equilibrium" => Ok(PrepMethod::Equilibrium),
            "pops" => Ok(PrepMethod::Pops),
            other => Err(format!("bad method {other:?}; expected equilibrium or pops")),
        }
    }
}

/// One constituent experiment of a subtraction scheme.
#[derive(Debug, Clone)]
pub struct PopsComponent {
    pub description: String,
    pub state: DeviationMatrix,
    /// Weight in the subtraction.
    pub weight: f64,
}

/// A prepared initial state plus the experiments it came from.
#[derive(Debug, Clone)]
pub struct PreparedState {
    pub rho: DeviationMatrix,
    pub method: PrepMethod,
    pub components: Vec<PopsComponent>,
}

impl PreparedState {
    pub fn equilibrium(sys: &SpinSystem) -> PreparedState {
        PreparedState {
            rho: equilibrium_state(sys),
            method: PrepMethod::Equilibrium,
            components: Vec::new(),
        }
    }
}

/// The observer transition pulsed by POPS: `|00..0> <-> |10..0>`.
pub fn pops_transition(sys: &SpinSystem) -> (BitLabel, BitLabel) {
    let n = sys.n_qubits() as u8;
    let work_ground = BitLabel::new(0, n - 1);
    (
        BitLabel::with_observer(0, work_ground),
        BitLabel::with_observer(1, work_ground),
    )
}

/// Prepare `Iz^0 |0..0><0..0|` by POPS: half the difference between the
/// equilibrium populations and the populations after a selective pi pulse on
/// the `|00..0> <-> |10..0>` transition.
pub fn pops_prepare(sys: &SpinSystem) -> Result<PreparedState, EngineError> {
    let equilibrium = equilibrium_state(sys);
    let (from, to) = pops_transition(sys);
    let inverted = apply_transition_pulse(&equilibrium, from, to, std::f64::consts::PI, Phase::X)?;
    let rho = DeviationMatrix::linear_combination(&[(0.5, &equilibrium), (-0.5, &inverted)]);
    Ok(PreparedState {
        rho,
        method: PrepMethod::Pops,
        components: vec![
            PopsComponent {
                description: "equilibrium".to_string(),
                state: equilibrium,
                weight: 0.5,
            },
            PopsComponent {
                description: format!("equilibrium + selective pi on {from} <-> {to}"),
                state: inverted,
                weight: -0.5,
            },
        ],
    })
}

/// The ideal subsystem pseudopure state `Iz^0 |0..0><0..0|`, for checks.
pub fn ideal_subsystem_pps(sys: &SpinSystem) -> CMat {
    let dim = sys.dim();
    let mut m = CMat::zeros((dim, dim));
    m[(0, 0)] = C64::new(0.5, 0.0);
    let upper = dim / 2;
    m[(upper, upper)] = C64::new(-0.5, 0.0);
    m
}
