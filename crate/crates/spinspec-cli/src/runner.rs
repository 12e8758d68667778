//! Experiment execution: prepared state, pulse program, acquisition,
//! decoding, artifact files and the PASS/FAIL summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use spinspec::acquisition::{
    acquire_1d, acquire_2d, decode_peaks_1d, decode_peaks_2d, format_peaks_1d, format_peaks_2d,
    format_spectrum_1d, format_spectrum_2d, AcquisitionParams, Spectrum1D,
};
use spinspec::algorithms::{AlgorithmSpec, CountOracle, ExpectedReadout, SatFormula};
use spinspec::compiler::{compile_circuit, gate_fidelity, parse_circuit};
use spinspec::engine::{run_program, EvolutionMode, PulseProgram};
use spinspec::prep::{pops_prepare, PreparedState, PrepMethod};
use spinspec::spin::{transition_table, BitLabel, SpinSystem};

use crate::manifest::{resolve_input, Dimension, ExperimentCase, ExperimentKind, Manifest};
use crate::report::{compare_readout, CompareReport, DecodedLine};

/// Outcome of one experiment case.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub name: String,
    pub decoded: String,
    pub expected: String,
    /// Empty when the case has no expected readout (plain programs).
    pub report: Option<CompareReport>,
    pub out_dir: PathBuf,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.report.as_ref().map(|r| r.pass).unwrap_or(true)
    }

    pub fn summary_row(&self) -> String {
        match &self.report {
            Some(r) => format!(
                "{}: decoded: {}, expected: {}, {}",
                self.name,
                self.decoded,
                self.expected,
                r.verdict()
            ),
            None => format!("{}: decoded: {}", self.name, self.decoded),
        }
    }
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn prepared_state_report(prep: &PreparedState, sys: &SpinSystem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# prepared state");
    let _ = writeln!(out, "method: {}", prep.method.as_str());
    let _ = writeln!(out, "qubits: {}", sys.n_qubits());
    for c in &prep.components {
        let _ = writeln!(out, "component: {} (weight {})", c.description, c.weight);
    }
    if prep.method == PrepMethod::Pops {
        let ideal = spinspec::prep::ideal_subsystem_pps(sys);
        let dev = spinspec::matrix::max_abs_diff(prep.rho.data(), &ideal);
        let _ = writeln!(out, "deviation_from_ideal_pps: {dev:.3e}");
    }
    let _ = writeln!(out, "diagonal:");
    for (b, p) in prep.rho.diagonal().iter().enumerate() {
        let label = BitLabel::new(b as u16, sys.n_qubits() as u8);
        let _ = writeln!(out, "{label} {p}");
    }
    out
}

struct BuiltCase {
    name: String,
    program: PulseProgram,
    expected: Option<ExpectedReadout>,
    prep: PreparedState,
    fidelity_report: Option<String>,
}

fn build_case(
    case: &ExperimentCase,
    sys: &SpinSystem,
    base: &Path,
    mode: EvolutionMode,
) -> Result<BuiltCase> {
    match &case.kind {
        ExperimentKind::Algorithm(spec) => {
            let run = spec.build(sys)?;
            Ok(BuiltCase {
                name: run.name,
                program: run.program,
                expected: Some(run.expected),
                prep: pops_prepare(sys)?,
                fidelity_report: None,
            })
        }
        ExperimentKind::Pops => {
            let work_ground = BitLabel::new(0, sys.n_work() as u8);
            Ok(BuiltCase {
                name: "pops preparation".into(),
                program: PulseProgram::identity("identity"),
                expected: Some(ExpectedReadout::single(work_ground)),
                prep: pops_prepare(sys)?,
                fidelity_report: None,
            })
        }
        ExperimentKind::Equilibrium => Ok(BuiltCase {
            name: "equilibrium spectrum".into(),
            program: PulseProgram::identity("identity"),
            expected: Some(ExpectedReadout::uniform(sys.work_labels())),
            prep: PreparedState::equilibrium(sys),
            fidelity_report: None,
        }),
        ExperimentKind::Program(path) => {
            let path = resolve_input(path, base)?;
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading program {}", path.display()))?;
            let program = PulseProgram::parse(&text).map_err(|e| anyhow!("{e}"))?;
            Ok(BuiltCase {
                name: format!("program {}", path.display()),
                program,
                expected: None,
                prep: pops_prepare(sys)?,
                fidelity_report: None,
            })
        }
        ExperimentKind::Circuit(path) => {
            let path = resolve_input(path, base)?;
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading circuit {}", path.display()))?;
            let gates = parse_circuit(&text)?;
            let circuit = compile_circuit(sys, format!("circuit {}", path.display()), &gates)?;
            let mut report = String::new();
            let _ = writeln!(report, "# per-gate fidelity against the ideal unitary");
            let _ = writeln!(report, "# columns: gate zeeman full");
            for cg in &circuit.gates {
                let z = gate_fidelity(&cg.program, sys, EvolutionMode::ZeemanOnly, &cg.ideal_work)?;
                let f = gate_fidelity(&cg.program, sys, EvolutionMode::Full, &cg.ideal_work)?;
                let _ = writeln!(report, "{} {z:.12} {f:.12}", cg.name);
            }
            let whole_z =
                gate_fidelity(&circuit.program, sys, EvolutionMode::ZeemanOnly, &circuit.ideal_work)?;
            let whole_f =
                gate_fidelity(&circuit.program, sys, EvolutionMode::Full, &circuit.ideal_work)?;
            let _ = writeln!(report, "whole-circuit {whole_z:.12} {whole_f:.12}");
            let _ = mode;
            Ok(BuiltCase {
                name: format!("circuit {}", path.display()),
                program: circuit.program,
                expected: None,
                prep: pops_prepare(sys)?,
                fidelity_report: Some(report),
            })
        }
    }
}

fn decoded_lines_1d(spectrum: &Spectrum1D) -> Vec<DecodedLine> {
    spectrum
        .peaks
        .iter()
        .map(|p| DecodedLine {
            label: p.label,
            frequency_hz: p.frequency_hz,
            magnitude: p.magnitude,
        })
        .collect()
}

fn describe_lines(lines: &[DecodedLine]) -> String {
    if lines.is_empty() {
        return "(none)".into();
    }
    let total: f64 = lines.iter().map(|l| l.magnitude).sum();
    let parts: Vec<String> = lines
        .iter()
        .map(|l| match l.label {
            Some(label) => format!("{label}:{:.4}", l.magnitude / total),
            None => format!("?@{:.2}Hz", l.frequency_hz),
        })
        .collect();
    parts.join(" ")
}

/// Run one case and write its artifacts under `out_dir/<slug>/`.
pub fn run_case(
    manifest: &Manifest,
    case: &ExperimentCase,
    base: &Path,
    out_root: &Path,
) -> Result<CaseOutcome> {
    let molecule_path = resolve_input(&manifest.molecule, base)?;
    let molecule_text = fs::read_to_string(&molecule_path)
        .with_context(|| format!("reading molecule {}", molecule_path.display()))?;
    let sys = SpinSystem::from_toml_str(&molecule_text)?;
    let table = transition_table(&sys)?;

    let built = build_case(case, &sys, base, manifest.mode)?;
    let out_dir = out_root.join(case.slug());
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let params = match manifest.dimension {
        Dimension::OneD => manifest.acquisition.apply(AcquisitionParams::default_1d(&sys)?),
        Dimension::TwoD => manifest.acquisition.apply(AcquisitionParams::default_2d(&sys)?),
    };
    let program_text = built.program.to_string();
    let input_hash = sha256_hex(&[
        molecule_text.as_bytes(),
        program_text.as_bytes(),
        format!("{params:?}").as_bytes(),
        manifest.mode.as_str().as_bytes(),
        manifest.dimension.as_str().as_bytes(),
        format!("{}", manifest.threshold).as_bytes(),
    ]);

    fs::write(out_dir.join("program.pprog"), &program_text)?;
    fs::write(
        out_dir.join("prepared_state.txt"),
        prepared_state_report(&built.prep, &sys),
    )?;
    if let Some(report) = &built.fidelity_report {
        fs::write(out_dir.join("fidelity.txt"), report)?;
    }

    let (decoded, decoded_desc) = match manifest.dimension {
        Dimension::OneD => {
            let rho = run_program(&built.prep.rho, &built.program, &sys, manifest.mode)?;
            let mut spectrum = acquire_1d(&rho, &sys, &params)?;
            spectrum.peaks = decode_peaks_1d(
                &spectrum.frequencies_hz,
                &spectrum.values,
                &table,
                sys.linewidth_hz(),
                manifest.threshold,
            )?;
            spectrum.meta.label = built.name.clone();
            spectrum
                .meta
                .extra
                .push(("inputs_sha256".into(), input_hash.clone()));
            fs::write(out_dir.join("spectrum_1d.txt"), format_spectrum_1d(&spectrum))?;
            fs::write(out_dir.join("peaks.txt"), format_peaks_1d(&spectrum.peaks))?;
            let decoded = decoded_lines_1d(&spectrum);
            let desc = describe_lines(&decoded);
            (decoded, desc)
        }
        Dimension::TwoD => {
            let mut spectrum = acquire_2d(
                &built.prep.rho,
                &built.program,
                &sys,
                &params,
                manifest.mode,
            )?;
            spectrum.peaks = decode_peaks_2d(
                &spectrum.f1_hz,
                &spectrum.f2_hz,
                &spectrum.values,
                &table,
                sys.linewidth_hz(),
                manifest.threshold,
            )?;
            spectrum.meta.label = built.name.clone();
            spectrum
                .meta
                .extra
                .push(("inputs_sha256".into(), input_hash.clone()));
            fs::write(out_dir.join("spectrum_2d.txt"), format_spectrum_2d(&spectrum))?;
            fs::write(out_dir.join("peaks.txt"), format_peaks_2d(&spectrum.peaks))?;
            // cross-peaks: inputs must all be the pseudopure ground label,
            // outputs are compared against the expected line set
            let ground = BitLabel::new(0, sys.n_work() as u8);
            let decoded: Vec<DecodedLine> = spectrum
                .peaks
                .iter()
                .map(|p| DecodedLine {
                    label: match (p.input, p.output) {
                        (Some(i), Some(o)) if i == ground => Some(o),
                        _ => None,
                    },
                    frequency_hz: p.f2_hz,
                    magnitude: p.magnitude,
                })
                .collect();
            let desc = spectrum
                .peaks
                .iter()
                .map(|p| {
                    format!(
                        "({},{})",
                        p.input.map(|l| l.to_string()).unwrap_or("?".into()),
                        p.output.map(|l| l.to_string()).unwrap_or("?".into())
                    )
                })
                .collect::<Vec<_>>()
                .join(" ");
            (decoded, if desc.is_empty() { "(none)".into() } else { desc })
        }
    };

    let (report, expected_desc) = match &built.expected {
        Some(expected) => (
            Some(compare_readout(&decoded, expected, manifest.intensity_tol)),
            expected.to_string(),
        ),
        None => (None, "n/a".into()),
    };

    let mut summary = String::new();
    let _ = writeln!(summary, "experiment: {}", built.name);
    let _ = writeln!(summary, "molecule: {}", molecule_path.display());
    let _ = writeln!(summary, "mode: {}", manifest.mode.as_str());
    let _ = writeln!(summary, "dimension: {}", manifest.dimension.as_str());
    let _ = writeln!(summary, "inputs_sha256: {input_hash}");
    let _ = writeln!(summary, "decoded: {decoded_desc}");
    let _ = writeln!(summary, "expected: {expected_desc}");
    match &report {
        Some(r) => {
            let _ = writeln!(summary, "result: {}", r.verdict());
            for d in &r.diffs {
                let _ = writeln!(summary, "diff: {d}");
            }
        }
        None => {
            let _ = writeln!(summary, "result: n/a (no expected readout)");
        }
    }
    fs::write(out_dir.join("summary.txt"), &summary)?;

    Ok(CaseOutcome {
        name: built.name,
        decoded: decoded_desc,
        expected: expected_desc,
        report,
        out_dir,
    })
}

/// Run every case of a manifest; cases run in parallel, outcomes return in
/// manifest order.
pub fn run_manifest(manifest: &Manifest, base: &Path, out_root: &Path) -> Result<Vec<CaseOutcome>> {
    manifest
        .cases
        .par_iter()
        .map(|case| run_case(manifest, case, base, out_root))
        .collect()
}

/// Options for the built-in battery over every tabulated algorithm case.
#[derive(Debug, Clone)]
pub struct BatteryOptions {
    /// Molecule with a 2-qubit work register.
    pub molecule3: PathBuf,
    /// Molecule with a 3-qubit work register.
    pub molecule4: PathBuf,
    pub mode: EvolutionMode,
    pub dimension: Dimension,
    pub threshold: f64,
}

fn battery_cases() -> Vec<(bool, AlgorithmSpec)> {
    // bool: true when the case runs on the 3-spin molecule
    let mut cases = Vec::new();
    for target in BitLabel::all(2) {
        cases.push((true, AlgorithmSpec::Grover { target }));
    }
    for oracle in CountOracle::all() {
        cases.push((true, AlgorithmSpec::Counting { oracle }));
    }
    for string in BitLabel::all(2) {
        cases.push((true, AlgorithmSpec::BernsteinVazirani { string }));
    }
    for string in BitLabel::all(3) {
        cases.push((false, AlgorithmSpec::BernsteinVazirani { string }));
    }
    for text in [
        "V1", "~V1", "V2", "~V2", "V3", "~V3",
    ] {
        cases.push((
            false,
            AlgorithmSpec::Hogg {
                formula: SatFormula::parse(text).unwrap(),
            },
        ));
    }
    for bits in 0..8u8 {
        let terms: Vec<String> = (1..=3usize)
            .rev()
            .map(|var| {
                let neg = (bits >> (var - 1)) & 1 == 1;
                format!("{}V{var}", if neg { "~" } else { "" })
            })
            .collect();
        cases.push((
            false,
            AlgorithmSpec::Hogg {
                formula: SatFormula::parse(&terms.join("&")).unwrap(),
            },
        ));
    }
    cases
}

/// Run the full battery: every search target, every counting oracle, every
/// 2- and 3-bit string, and every tabulated 1-SAT / 3-SAT formula. Returns
/// outcomes in deterministic order and writes one summary file.
pub fn run_battery(options: &BatteryOptions, out_root: &Path) -> Result<Vec<CaseOutcome>> {
    let cases = battery_cases();
    let outcomes: Result<Vec<CaseOutcome>> = cases
        .par_iter()
        .map(|(small, spec)| {
            let molecule = if *small {
                options.molecule3.clone()
            } else {
                options.molecule4.clone()
            };
            let manifest = Manifest {
                molecule,
                mode: options.mode,
                dimension: options.dimension,
                out_dir: None,
                threshold: options.threshold,
                intensity_tol: 0.05,
                cases: vec![ExperimentCase {
                    kind: ExperimentKind::Algorithm(spec.clone()),
                }],
                acquisition: Default::default(),
            };
            run_case(
                &manifest,
                &manifest.cases[0],
                Path::new("."),
                out_root,
            )
        })
        .collect();
    let outcomes = outcomes?;
    let mut summary = String::new();
    for o in &outcomes {
        let _ = writeln!(summary, "{}", o.summary_row());
    }
    fs::write(out_root.join("battery_summary.txt"), &summary)?;
    Ok(outcomes)
}
