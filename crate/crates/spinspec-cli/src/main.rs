use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use spinspec::acquisition::{
    acquire_1d, decode_peaks_1d, decode_peaks_2d, format_peaks_1d, format_peaks_2d,
    format_spectrum_1d, parse_spectrum_text, process_fid_1d, AcquisitionParams, ParsedSpectrum,
};
use spinspec::compiler::{compile_circuit, gate_fidelity, parse_circuit};
use spinspec::engine::EvolutionMode;
use spinspec::matrix::C64;
use spinspec::prep::{pops_prepare, PrepMethod, PreparedState};
use spinspec::spin::{transition_table, SpinSystem};

use spinspec_cli::manifest::resolve_input;
use spinspec_cli::{run_battery, run_manifest, BatteryOptions, Dimension, Manifest};

/// Spectral-readout simulator for small NMR quantum registers.
#[derive(Parser)]
#[command(name = "spinspec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare an initial state and write its observer spectrum.
    Prepare {
        /// Molecule description file (TOML).
        #[arg(long)]
        molecule: PathBuf,
        /// equilibrium or pops.
        #[arg(long, default_value = "pops")]
        method: String,
        /// Output directory.
        #[arg(long, default_value = "out/prepare")]
        out: PathBuf,
    },
    /// Compile a gate-circuit file to a pulse program with a fidelity report.
    Compile {
        #[arg(long)]
        molecule: PathBuf,
        /// Gate circuit file, one gate per line.
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, default_value = "out/compile")]
        out: PathBuf,
    },
    /// Run the experiment(s) described by a manifest file.
    Run {
        /// Manifest path (omit with --all-tables).
        manifest: Option<PathBuf>,
        /// Run the built-in battery over every tabulated case instead.
        #[arg(long)]
        all_tables: bool,
        /// Override the manifest output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the evolution mode (full | zeeman).
        #[arg(long)]
        mode: Option<String>,
        /// Override the peak threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// 3-spin molecule for --all-tables.
        #[arg(long)]
        molecule3: Option<PathBuf>,
        /// 4-spin molecule for --all-tables.
        #[arg(long)]
        molecule4: Option<PathBuf>,
    },
    /// Run the built-in battery over every tabulated case.
    Battery {
        #[arg(long)]
        molecule3: Option<PathBuf>,
        #[arg(long)]
        molecule4: Option<PathBuf>,
        #[arg(long, default_value = "out/battery")]
        out: PathBuf,
        #[arg(long, default_value = "zeeman")]
        mode: String,
        #[arg(long, default_value = "1d")]
        dimension: String,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
    },
    /// Re-decode the peaks of a stored spectrum file.
    Decode {
        /// Spectrum file written by prepare/run.
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long)]
        molecule: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Peak list output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_molecule(path: &Path) -> Result<SpinSystem> {
    let resolved = resolve_input(path, Path::new("."))?;
    let text = std::fs::read_to_string(&resolved)
        .with_context(|| format!("reading molecule {}", resolved.display()))?;
    Ok(SpinSystem::from_toml_str(&text)?)
}

fn default_molecule(name: &str, explicit: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    let candidate = PathBuf::from("molecules").join(name);
    if candidate.exists() {
        return Ok(candidate);
    }
    if let Ok(dir) = std::env::var("SPINSPEC_MOLECULES") {
        let env_path = Path::new(&dir).join(name);
        if env_path.exists() {
            return Ok(env_path);
        }
    }
    Err(anyhow!(
        "molecule {name} not found; pass --molecule3/--molecule4 or set SPINSPEC_MOLECULES"
    ))
}

fn cmd_prepare(molecule: &Path, method: &str, out: &Path) -> Result<()> {
    let sys = load_molecule(molecule)?;
    let method: PrepMethod = method.parse().map_err(|e: String| anyhow!(e))?;
    let prep = match method {
        PrepMethod::Pops => pops_prepare(&sys)?,
        PrepMethod::Equilibrium => PreparedState::equilibrium(&sys),
    };
    std::fs::create_dir_all(out)?;
    let params = AcquisitionParams::default_1d(&sys)?;

    // acquire the component experiments and combine their FIDs, keeping the
    // state-level result as a cross-check
    let spectrum = if prep.components.is_empty() {
        acquire_1d(&prep.rho, &sys, &params)?
    } else {
        let mut combined = vec![C64::new(0.0, 0.0); params.n_t2];
        for c in &prep.components {
            let s = acquire_1d(&c.state, &sys, &params)?;
            for (acc, v) in combined.iter_mut().zip(&s.fid) {
                *acc += v * C64::new(c.weight, 0.0);
            }
        }
        let via_fids = process_fid_1d(&combined, &sys, &params)?;
        let direct = acquire_1d(&prep.rho, &sys, &params)?;
        let max_dev = via_fids
            .values
            .iter()
            .zip(&direct.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if max_dev > 1e-9 {
            return Err(anyhow!(
                "FID-subtraction spectrum deviates from the state-level spectrum by {max_dev:.3e}"
            ));
        }
        via_fids
    };

    let mut report = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(report, "# prepared state");
    let _ = writeln!(report, "method: {}", prep.method.as_str());
    for c in &prep.components {
        let _ = writeln!(report, "component: {} (weight {})", c.description, c.weight);
    }
    let _ = writeln!(report, "diagonal:");
    for (b, p) in prep.rho.diagonal().iter().enumerate() {
        let label = spinspec::spin::BitLabel::new(b as u16, sys.n_qubits() as u8);
        let _ = writeln!(report, "{label} {p}");
    }
    std::fs::write(out.join("prepared_state.txt"), report)?;
    std::fs::write(out.join("spectrum_1d.txt"), format_spectrum_1d(&spectrum))?;
    std::fs::write(out.join("peaks.txt"), format_peaks_1d(&spectrum.peaks))?;
    println!(
        "prepared {} state; spectrum shows {} line(s); artifacts in {}",
        prep.method.as_str(),
        spectrum.peaks.len(),
        out.display()
    );
    Ok(())
}

fn cmd_compile(molecule: &Path, circuit: &Path, out: &Path) -> Result<()> {
    let sys = load_molecule(molecule)?;
    let text = std::fs::read_to_string(circuit)
        .with_context(|| format!("reading circuit {}", circuit.display()))?;
    let gates = parse_circuit(&text)?;
    let compiled = compile_circuit(&sys, format!("circuit {}", circuit.display()), &gates)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("program.pprog"), compiled.program.to_string())?;
    let mut report = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(report, "# per-gate fidelity against the ideal unitary");
    let _ = writeln!(report, "# columns: gate zeeman full");
    for cg in &compiled.gates {
        let z = gate_fidelity(&cg.program, &sys, EvolutionMode::ZeemanOnly, &cg.ideal_work)?;
        let f = gate_fidelity(&cg.program, &sys, EvolutionMode::Full, &cg.ideal_work)?;
        let _ = writeln!(report, "{} {z:.12} {f:.12}", cg.name);
    }
    let z = gate_fidelity(
        &compiled.program,
        &sys,
        EvolutionMode::ZeemanOnly,
        &compiled.ideal_work,
    )?;
    let f = gate_fidelity(
        &compiled.program,
        &sys,
        EvolutionMode::Full,
        &compiled.ideal_work,
    )?;
    let _ = writeln!(report, "whole-circuit {z:.12} {f:.12}");
    std::fs::write(out.join("fidelity.txt"), &report)?;
    println!(
        "compiled {} gate(s), {} events; whole-circuit fidelity zeeman {z:.9}, full {f:.6}",
        compiled.gates.len(),
        compiled.program.events.len()
    );
    Ok(())
}

fn cmd_run(
    manifest_path: Option<PathBuf>,
    all_tables: bool,
    out: Option<PathBuf>,
    mode: Option<String>,
    threshold: Option<f64>,
    molecule3: Option<PathBuf>,
    molecule4: Option<PathBuf>,
) -> Result<()> {
    if all_tables {
        let options = BatteryOptions {
            molecule3: default_molecule("fluoronitrobenzofuran.toml", molecule3)?,
            molecule4: default_molecule("difluoronitrophenol.toml", molecule4)?,
            mode: mode
                .as_deref()
                .unwrap_or("zeeman")
                .parse()
                .map_err(|e: String| anyhow!(e))?,
            dimension: Dimension::OneD,
            threshold: threshold.unwrap_or(0.1),
        };
        let out_root = out.unwrap_or_else(|| PathBuf::from("out/battery"));
        std::fs::create_dir_all(&out_root)?;
        let outcomes = run_battery(&options, &out_root)?;
        let mut failures = 0;
        for o in &outcomes {
            println!("{}", o.summary_row());
            if !o.passed() {
                failures += 1;
            }
        }
        println!("battery: {}/{} passed", outcomes.len() - failures, outcomes.len());
        if failures > 0 {
            return Err(anyhow!("{failures} battery case(s) failed"));
        }
        return Ok(());
    }

    let manifest_path =
        manifest_path.ok_or_else(|| anyhow!("pass a manifest path or --all-tables"))?;
    let (mut manifest, base) = Manifest::load(&manifest_path)?;
    if let Some(m) = mode {
        manifest.mode = m.parse().map_err(|e: String| anyhow!(e))?;
    }
    if let Some(t) = threshold {
        manifest.threshold = t;
    }
    let out_root = out
        .or_else(|| manifest.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out/run"));
    std::fs::create_dir_all(&out_root)?;
    let outcomes = run_manifest(&manifest, &base, &out_root)?;
    let mut failures = 0;
    for o in &outcomes {
        println!("{}", o.summary_row());
        if !o.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(anyhow!("{failures} case(s) failed"));
    }
    Ok(())
}

fn cmd_decode(spectrum: &Path, molecule: &Path, threshold: f64, out: Option<PathBuf>) -> Result<()> {
    let sys = load_molecule(molecule)?;
    let table = transition_table(&sys)?;
    let text = std::fs::read_to_string(spectrum)
        .with_context(|| format!("reading spectrum {}", spectrum.display()))?;
    let rendered = match parse_spectrum_text(&text)? {
        ParsedSpectrum::OneD(s) => {
            let peaks = decode_peaks_1d(
                &s.frequencies_hz,
                &s.values,
                &table,
                sys.linewidth_hz(),
                threshold,
            )?;
            format_peaks_1d(&peaks)
        }
        ParsedSpectrum::TwoD(s) => {
            let peaks = decode_peaks_2d(
                &s.f1_hz,
                &s.f2_hz,
                &s.values,
                &table,
                sys.linewidth_hz(),
                threshold,
            )?;
            format_peaks_2d(&peaks)
        }
    };
    match out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Prepare {
            molecule,
            method,
            out,
        } => cmd_prepare(&molecule, &method, &out),
        Command::Compile {
            molecule,
            circuit,
            out,
        } => cmd_compile(&molecule, &circuit, &out),
        Command::Run {
            manifest,
            all_tables,
            out,
            mode,
            threshold,
            molecule3,
            molecule4,
        } => cmd_run(manifest, all_tables, out, mode, threshold, molecule3, molecule4),
        Command::Battery {
            molecule3,
            molecule4,
            out,
            mode,
            dimension,
            threshold,
        } => {
            let options = BatteryOptions {
                molecule3: default_molecule("fluoronitrobenzofuran.toml", molecule3)?,
                molecule4: default_molecule("difluoronitrophenol.toml", molecule4)?,
                mode: mode.parse().map_err(|e: String| anyhow!(e))?,
                dimension: dimension.parse().map_err(|e: String| anyhow!(e))?,
                threshold,
            };
            std::fs::create_dir_all(&out)?;
            let outcomes = run_battery(&options, &out)?;
            let mut failures = 0;
            for o in &outcomes {
                println!("{}", o.summary_row());
                if !o.passed() {
                    failures += 1;
                }
            }
            println!(
                "battery: {}/{} passed",
                outcomes.len() - failures,
                outcomes.len()
            );
            if failures > 0 {
                return Err(anyhow!("{failures} battery case(s) failed"));
            }
            Ok(())
        }
        Command::Decode {
            spectrum,
            molecule,
            threshold,
            out,
        } => cmd_decode(&spectrum, &molecule, threshold, out),
    }
}
