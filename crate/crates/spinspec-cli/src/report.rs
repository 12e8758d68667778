//! Decoded-vs-expected comparison for experiment summaries.

use spinspec::algorithms::ExpectedReadout;
use spinspec::spin::BitLabel;

/// Result of comparing a decoded line list to an expected readout.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub pass: bool,
    pub diffs: Vec<String>,
}

impl CompareReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Decoded line: assigned label (if any), position, height.
#[derive(Debug, Clone, Copy)]
pub struct DecodedLine {
    pub label: Option<BitLabel>,
    pub frequency_hz: f64,
    pub magnitude: f64,
}

/// Set equality on assigned labels, no artifacts above threshold, and
/// normalized intensities within the relative tolerance.
pub fn compare_readout(
    decoded: &[DecodedLine],
    expected: &ExpectedReadout,
    intensity_tol: f64,
) -> CompareReport {
    let mut diffs = Vec::new();
    for line in decoded {
        if line.label.is_none() {
            diffs.push(format!(
                "artifact peak at {:.4} Hz (height {:.4e})",
                line.frequency_hz, line.magnitude
            ));
        }
    }
    let mut assigned: Vec<(BitLabel, f64)> = decoded
        .iter()
        .filter_map(|l| l.label.map(|lab| (lab, l.magnitude)))
        .collect();
    assigned.sort_by_key(|(l, _)| *l);
    // merge duplicates (a label should only be decoded once)
    for w in assigned.windows(2) {
        if w[0].0 == w[1].0 {
            diffs.push(format!("line {} decoded more than once", w[0].0));
        }
    }
    let total: f64 = assigned.iter().map(|(_, m)| m).sum();
    for (label, want) in expected.lines() {
        match assigned.iter().find(|(l, _)| l == label) {
            None => diffs.push(format!("missing line {label}")),
            Some((_, magnitude)) => {
                if total > 0.0 {
                    let got = magnitude / total;
                    let rel = (got - want).abs() / want;
                    if rel > intensity_tol {
                        diffs.push(format!(
                            "line {label}: intensity {got:.4} vs expected {want:.4} (rel dev {rel:.3})"
                        ));
                    }
                }
            }
        }
    }
    for (label, _) in &assigned {
        if expected.intensity_of(*label).is_none() {
            diffs.push(format!("unexpected line {label}"));
        }
    }
    CompareReport {
        pass: diffs.is_empty(),
        diffs,
    }
}
