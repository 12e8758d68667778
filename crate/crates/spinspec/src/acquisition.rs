//! Observer-qubit signal synthesis and processing: 1D and 2D FIDs,
//! exponential apodization, zero-filling, FFT, and peak decoding back to
//! work-register labels.
//!
//! Detection keeps only observer single-quantum elements (equal work labels
//! on both sides); work-register coherences turn into multiple-quantum
//! terms that are invisible to the receiver. Each retained element rings at
//! its transition-table frequency and damps at the configured linewidth.
//!
//! 1D spectra are complex (quadrature) and peaks are picked on |Re|, which
//! keeps maxima within a bin of the line positions. 2D data are cosine
//! modulated in t1, processed in magnitude mode, and searched on the
//! non-negative omega-1 half plane when every table line is positive (the
//! negative half is the redundant mirror image).

use std::fmt::Write as _;

use rustfft::FftPlanner;
use thiserror::Error;

use crate::engine::{
    apply_delay, apply_gradient, apply_hard_pulse, run_program, DeviationMatrix, EngineError,
    EvolutionMode, Phase, PulseProgram,
};
use crate::matrix::C64;
use crate::spin::{
    build_hamiltonian, transition_table, BitLabel, SpinError, SpinSystem, TransitionTable, TWO_PI,
};

pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum AcquireError {
    #[error("peak threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("zero-fill size {zero_fill} smaller than acquired size {acquired}")]
    ZeroFillTooSmall { zero_fill: usize, acquired: usize },
    #[error("spectral width {sw_hz} Hz does not cover the transition at {line_hz} Hz")]
    SpectralWidthTooSmall { sw_hz: f64, line_hz: f64 },
    #[error("acquisition sizes must be nonzero")]
    EmptyAcquisition,
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("spectrum file: {0}")]
    FileFormat(String),
}

/// Sampling and processing parameters.
///
/// `dwell_s` applies to both dimensions; the t1 fields are ignored by 1D
/// acquisition. The apodization rate is the Lorentzian linewidth in angular
/// units (`pi * linewidth`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionParams {
    pub n_t2: usize,
    pub n_t1: usize,
    pub dwell_s: f64,
    pub zero_fill_t2: usize,
    pub zero_fill_t1: usize,
    pub apod_rate: f64,
}

impl AcquisitionParams {
    /// Spectral width = 4 x (largest line + 2 linewidths), one transient of
    /// 4096 points zero-filled to 8192.
    pub fn default_1d(sys: &SpinSystem) -> Result<AcquisitionParams, AcquireError> {
        let table = transition_table(sys)?;
        let sw = 4.0 * (table.max_abs_frequency() + 2.0 * sys.linewidth_hz());
        Ok(AcquisitionParams {
            n_t2: 4096,
            n_t1: 0,
            dwell_s: 1.0 / sw,
            zero_fill_t2: 8192,
            zero_fill_t1: 0,
            apod_rate: std::f64::consts::PI * sys.linewidth_hz(),
        })
    }

    /// 256 x 16 acquired points (matching the 1D experiment's total),
    /// zero-filled to 1024 x 256.
    pub fn default_2d(sys: &SpinSystem) -> Result<AcquisitionParams, AcquireError> {
        let table = transition_table(sys)?;
        let sw = 4.0 * (table.max_abs_frequency() + 2.0 * sys.linewidth_hz());
        Ok(AcquisitionParams {
            n_t2: 256,
            n_t1: 16,
            dwell_s: 1.0 / sw,
            zero_fill_t2: 1024,
            zero_fill_t1: 256,
            apod_rate: std::f64::consts::PI * sys.linewidth_hz(),
        })
    }

    pub fn spectral_width(&self) -> f64 {
        1.0 / self.dwell_s
    }

    fn validate(&self, table: &TransitionTable, two_d: bool) -> Result<(), AcquireError> {
        if self.n_t2 == 0 || (two_d && self.n_t1 == 0) {
            return Err(AcquireError::EmptyAcquisition);
        }
        if self.zero_fill_t2 < self.n_t2 {
            return Err(AcquireError::ZeroFillTooSmall {
                zero_fill: self.zero_fill_t2,
                acquired: self.n_t2,
            });
        }
        if two_d && self.zero_fill_t1 < self.n_t1 {
            return Err(AcquireError::ZeroFillTooSmall {
                zero_fill: self.zero_fill_t1,
                acquired: self.n_t1,
            });
        }
        let sw = self.spectral_width();
        for e in table.entries() {
            if e.frequency_hz.abs() >= sw / 2.0 {
                return Err(AcquireError::SpectralWidthTooSmall {
                    sw_hz: sw,
                    line_hz: e.frequency_hz,
                });
            }
        }
        Ok(())
    }
}

/// Complex amplitude of one observer line after the detection pulse.
#[derive(Debug, Clone, Copy)]
pub struct LineAmplitude {
    pub work_label: BitLabel,
    pub frequency_hz: f64,
    pub amplitude: C64,
}

/// Apply the `(pi/2)_y` detection pulse to the observer and read the
/// single-quantum element of every observer transition.
pub fn line_amplitudes(
    rho: &DeviationMatrix,
    sys: &SpinSystem,
    table: &TransitionTable,
) -> Result<Vec<LineAmplitude>, AcquireError> {
    let _ = sys;
    let pulsed = apply_hard_pulse(
        rho,
        &[0usize].into_iter().collect(),
        std::f64::consts::FRAC_PI_2,
        Phase::Y,
    )?;
    let half = pulsed.dim() / 2;
    Ok(table
        .entries()
        .iter()
        .map(|e| {
            let s = e.work_label.index();
            LineAmplitude {
                work_label: e.work_label,
                frequency_hz: e.frequency_hz,
                amplitude: pulsed.data()[(s + half, s)],
            }
        })
        .collect())
}

/// Population difference across each observer transition: the exact line
/// intensities behind the synthesized spectrum.
pub fn population_line_intensities(
    rho: &DeviationMatrix,
    table: &TransitionTable,
) -> Vec<(BitLabel, f64)> {
    let pops = rho.work_populations();
    table
        .entries()
        .iter()
        .map(|e| (e.work_label, pops[e.work_label.index()]))
        .collect()
}

/// Sum of damped complex exponentials, one per observer line.
pub fn synthesize_fid(lines: &[LineAmplitude], n: usize, dwell: f64, apod: f64) -> Vec<C64> {
    let mut fid = vec![C64::new(0.0, 0.0); n];
    for line in lines {
        if line.amplitude.norm() == 0.0 {
            continue;
        }
        let step = C64::from_polar((-apod * dwell).exp(), TWO_PI * line.frequency_hz * dwell);
        let mut factor = C64::new(1.0, 0.0);
        for value in fid.iter_mut() {
            *value += line.amplitude * factor;
            factor *= step;
        }
    }
    fid
}

fn fft_in_place(data: &mut [C64], planner: &mut FftPlanner<f64>) {
    let fft = planner.plan_fft_forward(data.len());
    fft.process(data);
}

/// Reorder an FFT output so frequencies run from -sw/2 to +sw/2.
fn fftshift(data: &mut [C64]) {
    let n = data.len();
    data.rotate_right(n / 2);
}

fn frequency_axis(n: usize, sw: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (i as f64 - (n / 2) as f64) * sw / n as f64)
        .collect()
}

/// One decoded line of a 1D spectrum; `label` is empty for maxima that sit
/// too far from every table frequency (artifacts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak1D {
    pub label: Option<BitLabel>,
    pub frequency_hz: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SpectrumMeta {
    pub label: String,
    pub warning: Option<String>,
    /// Free-form key/value pairs recorded in the file header.
    pub extra: Vec<(String, String)>,
}

/// Complex 1D spectrum with its acquisition record and decoded peaks.
#[derive(Debug, Clone)]
pub struct Spectrum1D {
    pub frequencies_hz: Vec<f64>,
    pub values: Vec<C64>,
    /// Acquired (damped, pre-zero-fill) FID samples.
    pub fid: Vec<C64>,
    pub peaks: Vec<Peak1D>,
    pub sw_hz: f64,
    pub meta: SpectrumMeta,
}

impl Spectrum1D {
    pub fn bin_width(&self) -> f64 {
        self.sw_hz / self.values.len() as f64
    }

    /// Energy of the zero-filled time data; zero-padding adds nothing, so
    /// this equals the acquired FID energy.
    pub fn time_energy(&self) -> f64 {
        self.fid.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn spectrum_energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

/// Pick local maxima of |Re| above `threshold x tallest` and assign each to
/// the nearest table frequency within half a linewidth.
pub fn decode_peaks_1d(
    frequencies: &[f64],
    values: &[C64],
    table: &TransitionTable,
    linewidth_hz: f64,
    threshold: f64,
) -> Result<Vec<Peak1D>, AcquireError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(AcquireError::BadThreshold(threshold));
    }
    let signal: Vec<f64> = values.iter().map(|z| z.re.abs()).collect();
    let tallest = signal.iter().copied().fold(0.0, f64::max);
    if tallest <= 0.0 {
        return Ok(Vec::new());
    }
    let cut = threshold * tallest;
    let mut peaks = Vec::new();
    for i in 1..signal.len().saturating_sub(1) {
        if signal[i] < cut || signal[i] < signal[i - 1] || signal[i] <= signal[i + 1] {
            continue;
        }
        let (entry, dist) = table.nearest(frequencies[i]);
        let label = (dist <= linewidth_hz / 2.0).then_some(entry.work_label);
        peaks.push(Peak1D {
            label,
            frequency_hz: frequencies[i],
            magnitude: signal[i],
        });
    }
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    Ok(peaks)
}

/// Detect the observer and synthesize its 1D spectrum: `(pi/2)_y` pulse,
/// damped FID, zero-fill, FFT, peak decode.
pub fn acquire_1d(
    rho: &DeviationMatrix,
    sys: &SpinSystem,
    params: &AcquisitionParams,
) -> Result<Spectrum1D, AcquireError> {
    let table = transition_table(sys)?;
    params.validate(&table, false)?;
    let lines = line_amplitudes(rho, sys, &table)?;
    let total: f64 = lines.iter().map(|l| l.amplitude.norm()).sum();
    let warning =
        (total < 1e-12).then(|| "no observer polarization: spectrum is empty".to_string());

    let fid = synthesize_fid(&lines, params.n_t2, params.dwell_s, params.apod_rate);
    let mut spectrum = process_fid_1d(&fid, sys, params)?;
    spectrum.meta = SpectrumMeta {
        label: String::new(),
        warning,
        extra: vec![
            ("mode".into(), "complex; peaks picked on |re|".into()),
            (
                "window_t2".into(),
                format!("exp rate={} (synthesis damping)", params.apod_rate),
            ),
        ],
    };
    Ok(spectrum)
}

/// Zero-fill / FFT / decode an already-synthesized (damped) FID; used by
/// subtraction schemes that combine FIDs before transforming.
pub fn process_fid_1d(
    fid: &[C64],
    sys: &SpinSystem,
    params: &AcquisitionParams,
) -> Result<Spectrum1D, AcquireError> {
    let table = transition_table(sys)?;
    if fid.len() > params.zero_fill_t2 {
        return Err(AcquireError::ZeroFillTooSmall {
            zero_fill: params.zero_fill_t2,
            acquired: fid.len(),
        });
    }
    let mut padded = fid.to_vec();
    padded.resize(params.zero_fill_t2, C64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    fft_in_place(&mut padded, &mut planner);
    fftshift(&mut padded);
    let frequencies = frequency_axis(params.zero_fill_t2, params.spectral_width());
    let peaks = decode_peaks_1d(
        &frequencies,
        &padded,
        &table,
        sys.linewidth_hz(),
        DEFAULT_PEAK_THRESHOLD,
    )?;
    Ok(Spectrum1D {
        frequencies_hz: frequencies,
        values: padded,
        fid: fid.to_vec(),
        peaks,
        sw_hz: params.spectral_width(),
        meta: SpectrumMeta::default(),
    })
}

/// One decoded cross-peak of a 2D spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak2D {
    pub input: Option<BitLabel>,
    pub output: Option<BitLabel>,
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub magnitude: f64,
}

/// Magnitude-mode 2D spectrum: input labels along f1, output labels along
/// f2.
#[derive(Debug, Clone)]
pub struct Spectrum2D {
    pub f1_hz: Vec<f64>,
    pub f2_hz: Vec<f64>,
    /// Full complex grid, f1 on rows.
    pub values: ndarray::Array2<C64>,
    pub peaks: Vec<Peak2D>,
    pub sw1_hz: f64,
    pub sw2_hz: f64,
    /// Energy of the windowed zero-filled time grid, for Parseval checks.
    pub time_energy: f64,
    pub meta: SpectrumMeta,
}

impl Spectrum2D {
    pub fn spectrum_energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn bin_widths(&self) -> (f64, f64) {
        (
            self.sw1_hz / self.f1_hz.len() as f64,
            self.sw2_hz / self.f2_hz.len() as f64,
        )
    }
}

/// Pick 2D local maxima of the magnitude above `threshold x tallest`.
/// When every table line is positive the search is restricted to f1 >= 0;
/// cosine-modulated data is symmetric in f1 and the negative half repeats
/// the same peaks.
pub fn decode_peaks_2d(
    f1: &[f64],
    f2: &[f64],
    values: &ndarray::Array2<C64>,
    table: &TransitionTable,
    linewidth_hz: f64,
    threshold: f64,
) -> Result<Vec<Peak2D>, AcquireError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(AcquireError::BadThreshold(threshold));
    }
    let mag = values.mapv(|z| z.norm());
    let restrict_f1 = table.all_positive();
    let mut tallest = 0.0f64;
    for (r, &freq) in f1.iter().enumerate() {
        if restrict_f1 && freq < 0.0 {
            continue;
        }
        for c in 0..f2.len() {
            tallest = tallest.max(mag[(r, c)]);
        }
    }
    if tallest <= 0.0 {
        return Ok(Vec::new());
    }
    let cut = threshold * tallest;
    let mut peaks = Vec::new();
    for r in 1..f1.len().saturating_sub(1) {
        if restrict_f1 && f1[r] < 0.0 {
            continue;
        }
        for c in 1..f2.len().saturating_sub(1) {
            let v = mag[(r, c)];
            if v < cut {
                continue;
            }
            // strict on trailing neighbors so a flat top yields one peak
            if v < mag[(r - 1, c)]
                || v <= mag[(r + 1, c)]
                || v < mag[(r, c - 1)]
                || v <= mag[(r, c + 1)]
                || v < mag[(r - 1, c - 1)]
                || v <= mag[(r + 1, c + 1)]
                || v < mag[(r - 1, c + 1)]
                || v <= mag[(r + 1, c - 1)]
            {
                continue;
            }
            let (e1, d1) = table.nearest(f1[r]);
            let (e2, d2) = table.nearest(f2[c]);
            peaks.push(Peak2D {
                input: (d1 <= linewidth_hz / 2.0).then_some(e1.work_label),
                output: (d2 <= linewidth_hz / 2.0).then_some(e2.work_label),
                f1_hz: f1[r],
                f2_hz: f2[c],
                magnitude: v,
            });
        }
    }
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    Ok(peaks)
}

/// Two-dimensional correlation experiment. For each t1 increment the
/// observer magnetization is flipped out, evolves freely for t1, is flipped
/// back, a gradient crushes the transverse rest, the computation program
/// runs, and the observer is detected. Cosine t1 modulation, magnitude
/// processing.
pub fn acquire_2d(
    initial: &DeviationMatrix,
    program: &PulseProgram,
    sys: &SpinSystem,
    params: &AcquisitionParams,
    mode: EvolutionMode,
) -> Result<Spectrum2D, AcquireError> {
    let table = transition_table(sys)?;
    params.validate(&table, true)?;
    let h_full = build_hamiltonian(sys);
    let observer: std::collections::BTreeSet<usize> = [0usize].into_iter().collect();

    let mut raw = ndarray::Array2::<C64>::zeros((params.n_t1, params.n_t2));
    let mut any_signal = false;
    for k1 in 0..params.n_t1 {
        let t1 = k1 as f64 * params.dwell_s;
        let rho = apply_hard_pulse(initial, &observer, std::f64::consts::FRAC_PI_2, Phase::Y)?;
        let rho = apply_delay(&rho, t1, &h_full)?;
        let rho = apply_hard_pulse(&rho, &observer, std::f64::consts::FRAC_PI_2, Phase::MinusY)?;
        let rho = apply_gradient(&rho);
        let rho = run_program(&rho, program, sys, mode)?;
        let lines = line_amplitudes(&rho, sys, &table)?;
        if lines.iter().any(|l| l.amplitude.norm() > 1e-12) {
            any_signal = true;
        }
        let fid = synthesize_fid(&lines, params.n_t2, params.dwell_s, params.apod_rate);
        for (k2, v) in fid.into_iter().enumerate() {
            raw[(k1, k2)] = v;
        }
    }

    // t1 damping plus a half-cosine roll-off against truncation ringing
    for k1 in 0..params.n_t1 {
        let t1 = k1 as f64 * params.dwell_s;
        let window = (-params.apod_rate * t1).exp()
            * (std::f64::consts::FRAC_PI_2 * k1 as f64 / params.n_t1 as f64).cos();
        for k2 in 0..params.n_t2 {
            raw[(k1, k2)] *= C64::new(window, 0.0);
        }
    }

    let mut grid = ndarray::Array2::<C64>::zeros((params.zero_fill_t1, params.zero_fill_t2));
    for k1 in 0..params.n_t1 {
        for k2 in 0..params.n_t2 {
            grid[(k1, k2)] = raw[(k1, k2)];
        }
    }
    let time_energy: f64 = grid.iter().map(|z| z.norm_sqr()).sum();

    let mut planner = FftPlanner::new();
    for mut row in grid.rows_mut() {
        let mut buf: Vec<C64> = row.to_vec();
        fft_in_place(&mut buf, &mut planner);
        fftshift(&mut buf);
        for (i, v) in buf.into_iter().enumerate() {
            row[i] = v;
        }
    }
    for c in 0..params.zero_fill_t2 {
        let mut buf: Vec<C64> = (0..params.zero_fill_t1).map(|r| grid[(r, c)]).collect();
        fft_in_place(&mut buf, &mut planner);
        fftshift(&mut buf);
        for (r, v) in buf.into_iter().enumerate() {
            grid[(r, c)] = v;
        }
    }

    let f1 = frequency_axis(params.zero_fill_t1, params.spectral_width());
    let f2 = frequency_axis(params.zero_fill_t2, params.spectral_width());
    let peaks = decode_peaks_2d(
        &f1,
        &f2,
        &grid,
        &table,
        sys.linewidth_hz(),
        DEFAULT_PEAK_THRESHOLD,
    )?;
    Ok(Spectrum2D {
        f1_hz: f1,
        f2_hz: f2,
        values: grid,
        peaks,
        sw1_hz: params.spectral_width(),
        sw2_hz: params.spectral_width(),
        time_energy,
        meta: SpectrumMeta {
            label: String::new(),
            warning: (!any_signal)
                .then(|| "no observer polarization: spectrum is empty".to_string()),
            extra: vec![
                ("mode".into(), "magnitude of cosine-modulated data".into()),
                (
                    "window_t1".into(),
                    format!("exp rate={} x half-cosine", params.apod_rate),
                ),
                (
                    "window_t2".into(),
                    format!("exp rate={} (synthesis damping)", params.apod_rate),
                ),
            ],
        },
    })
}

// --- spectrum files -------------------------------------------------------------

fn header_lines(meta: &SpectrumMeta, out: &mut String) {
    if !meta.label.is_empty() {
        let _ = writeln!(out, "# label: {}", meta.label);
    }
    if let Some(w) = &meta.warning {
        let _ = writeln!(out, "# warning: {w}");
    }
    for (k, v) in &meta.extra {
        let _ = writeln!(out, "# {k}: {v}");
    }
}

/// Delimited text rendering: header comments, then one row per bin with
/// frequency, real, imaginary and magnitude columns.
pub fn format_spectrum_1d(s: &Spectrum1D) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# spinspec spectrum v1");
    let _ = writeln!(out, "# kind: 1d");
    let _ = writeln!(out, "# points: {}", s.values.len());
    let _ = writeln!(out, "# sw_hz: {}", s.sw_hz);
    header_lines(&s.meta, &mut out);
    let _ = writeln!(out, "# columns: freq_hz re im mag");
    for (f, v) in s.frequencies_hz.iter().zip(&s.values) {
        let _ = writeln!(out, "{f} {} {} {}", v.re, v.im, v.norm());
    }
    out
}

pub fn format_spectrum_2d(s: &Spectrum2D) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# spinspec spectrum v1");
    let _ = writeln!(out, "# kind: 2d");
    let _ = writeln!(out, "# points_f1: {}", s.f1_hz.len());
    let _ = writeln!(out, "# points_f2: {}", s.f2_hz.len());
    let _ = writeln!(out, "# sw1_hz: {}", s.sw1_hz);
    let _ = writeln!(out, "# sw2_hz: {}", s.sw2_hz);
    header_lines(&s.meta, &mut out);
    let _ = writeln!(out, "# columns: f1_hz f2_hz re im mag");
    for (r, f1) in s.f1_hz.iter().enumerate() {
        for (c, f2) in s.f2_hz.iter().enumerate() {
            let v = s.values[(r, c)];
            let _ = writeln!(out, "{f1} {f2} {} {} {}", v.re, v.im, v.norm());
        }
    }
    out
}

/// Decoded-peak sidecar: labels (or `?` for artifacts), positions and
/// heights.
pub fn format_peaks_1d(peaks: &[Peak1D]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# spinspec peaks v1");
    let _ = writeln!(out, "# kind: 1d");
    let _ = writeln!(out, "# columns: label freq_hz magnitude");
    for p in peaks {
        let label = p
            .label
            .map(|l| l.to_string())
            .unwrap_or_else(|| "?".to_string());
        let _ = writeln!(out, "{label} {} {}", p.frequency_hz, p.magnitude);
    }
    out
}

pub fn format_peaks_2d(peaks: &[Peak2D]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# spinspec peaks v1");
    let _ = writeln!(out, "# kind: 2d");
    let _ = writeln!(out, "# columns: in_label out_label f1_hz f2_hz magnitude");
    for p in peaks {
        let i = p
            .input
            .map(|l| l.to_string())
            .unwrap_or_else(|| "?".to_string());
        let o = p
            .output
            .map(|l| l.to_string())
            .unwrap_or_else(|| "?".to_string());
        let _ = writeln!(out, "{i} {o} {} {} {}", p.f1_hz, p.f2_hz, p.magnitude);
    }
    out
}

/// A spectrum file of either dimensionality, read back from text.
#[derive(Debug, Clone)]
pub enum ParsedSpectrum {
    OneD(Spectrum1D),
    TwoD(Spectrum2D),
}

/// Parse the delimited spectrum format (either kind).
pub fn parse_spectrum_text(text: &str) -> Result<ParsedSpectrum, AcquireError> {
    let bad = AcquireError::FileFormat;
    let mut kind: Option<String> = None;
    let mut sw: Option<f64> = None;
    let mut sw1: Option<f64> = None;
    let mut sw2: Option<f64> = None;
    let mut meta = SpectrumMeta::default();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((key, value)) = rest.split_once(':') {
                let key = key.trim();
                let value = value.trim().to_string();
                match key {
                    "kind" => kind = Some(value),
                    "sw_hz" => sw = value.parse().ok(),
                    "sw1_hz" => sw1 = value.parse().ok(),
                    "sw2_hz" => sw2 = value.parse().ok(),
                    "label" => meta.label = value,
                    "warning" => meta.warning = Some(value),
                    "columns" | "points" | "points_f1" | "points_f2" => {}
                    other => meta.extra.push((other.to_string(), value)),
                }
            }
            continue;
        }
        let nums: Result<Vec<f64>, _> = line.split_whitespace().map(|w| w.parse()).collect();
        let nums = nums.map_err(|_| bad(format!("line {}: bad number", idx + 1)))?;
        rows.push(nums);
    }
    match kind.as_deref() {
        Some("1d") => {
            let sw = sw.ok_or_else(|| bad("missing sw_hz header".into()))?;
            if rows.is_empty() {
                return Err(bad("no data rows".into()));
            }
            let mut frequencies = Vec::with_capacity(rows.len());
            let mut values = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                if row.len() != 4 {
                    return Err(bad(format!("row {}: expected 4 columns", i + 1)));
                }
                frequencies.push(row[0]);
                values.push(C64::new(row[1], row[2]));
            }
            Ok(ParsedSpectrum::OneD(Spectrum1D {
                frequencies_hz: frequencies,
                values,
                fid: Vec::new(),
                peaks: Vec::new(),
                sw_hz: sw,
                meta,
            }))
        }
        Some("2d") => {
            let sw1 = sw1.ok_or_else(|| bad("missing sw1_hz header".into()))?;
            let sw2 = sw2.ok_or_else(|| bad("missing sw2_hz header".into()))?;
            if rows.is_empty() {
                return Err(bad("no data rows".into()));
            }
            let mut f1: Vec<f64> = Vec::new();
            let mut f2: Vec<f64> = Vec::new();
            for row in &rows {
                if row.len() != 5 {
                    return Err(bad("2d rows have 5 columns".into()));
                }
                if f1.last() != Some(&row[0]) {
                    f1.push(row[0]);
                }
                if f1.len() == 1 {
                    f2.push(row[1]);
                }
            }
            if f1.len() * f2.len() != rows.len() {
                return Err(bad("rows do not form a rectangular grid".into()));
            }
            let mut values = ndarray::Array2::<C64>::zeros((f1.len(), f2.len()));
            for (i, row) in rows.iter().enumerate() {
                values[(i / f2.len(), i % f2.len())] = C64::new(row[2], row[3]);
            }
            Ok(ParsedSpectrum::TwoD(Spectrum2D {
                f1_hz: f1,
                f2_hz: f2,
                values,
                peaks: Vec::new(),
                sw1_hz: sw1,
                sw2_hz: sw2,
                time_energy: 0.0,
                meta,
            }))
        }
        Some(other) => Err(bad(format!("unknown kind {other:?}"))),
        None => Err(bad("missing kind header".into())),
    }
}
