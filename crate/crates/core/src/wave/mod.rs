//! VCD parsing, fixed-cadence sampling, waveform-table rendering, and
//! recovery of functions and transitions from traces.

mod recover;
mod vcd;

pub use recover::{
    recover_function, recover_transitions, validate_transitions, PartialFunction, TransitionCheck,
    TransitionObservation, TransitionSignals,
};
pub use vcd::{parse_vcd, VcdDocument, VcdError, VcdVar, FS_PER_NS};

use thiserror::Error;

use crate::verilog::interp::Logic;

/// Sampling cadence of waveform problems.
pub const SAMPLE_STEP_NS: u64 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum WaveError {
    #[error(transparent)]
    Vcd(#[from] VcdError),
    #[error("signal `{0}` is not declared (or is ambiguous) in the VCD")]
    UnknownSignal(String),
    #[error("trace has no column `{0}`")]
    MissingColumn(String),
    #[error("assignment {assignment} observed with output {first} and later {second}")]
    Contradiction { assignment: usize, first: bool, second: bool },
    #[error("sampling step must be positive")]
    ZeroStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Combinational,
    Sequential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveformTrace {
    pub names: Vec<String>,
    pub times_ns: Vec<u64>,
    /// `samples[row][column]`.
    pub samples: Vec<Vec<Logic>>,
    pub kind: TraceKind,
}

impl WaveformTrace {
    pub fn column(&self, name: &str) -> Result<usize, WaveError> {
        self.names.iter().position(|n| n == name).ok_or_else(|| WaveError::MissingColumn(name.to_string()))
    }

    pub fn rows(&self) -> usize {
        self.times_ns.len()
    }
}

/// Samples each selected signal at 0, step, 2·step, … up to `until_ns`
/// (default: the last value change). The value at a sample time is the last
/// change at or before it; signals not yet dumped read as X. Columns are
/// named by the last path component of each selector.
pub fn sample_trace(
    vcd: &VcdDocument,
    selectors: &[&str],
    step_ns: u64,
    until_ns: Option<u64>,
    kind: TraceKind,
) -> Result<WaveformTrace, WaveError> {
    if step_ns == 0 {
        return Err(WaveError::ZeroStep);
    }
    let idx: Vec<usize> = selectors
        .iter()
        .map(|s| vcd.find(s).ok_or_else(|| WaveError::UnknownSignal(s.to_string())))
        .collect::<Result<_, _>>()?;
    let ids: Vec<&str> = idx.iter().map(|&i| vcd.vars[i].id.as_str()).collect();
    let until_fs = until_ns.map_or_else(|| vcd.last_change_fs(), |u| u * FS_PER_NS);
    let mut current: Vec<Logic> = idx.iter().map(|&i| Logic::unknown(vcd.vars[i].width)).collect();
    let mut changes = vcd.changes.iter().peekable();
    let mut times_ns = Vec::new();
    let mut samples = Vec::new();
    let mut t = 0u64;
    while t * FS_PER_NS <= until_fs {
        while let Some(&&(ct, vi, v)) = changes.peek() {
            if ct > t * FS_PER_NS {
                break;
            }
            let id = vcd.vars[vi].id.as_str();
            for (k, sid) in ids.iter().enumerate() {
                if *sid == id {
                    current[k] = v;
                }
            }
            changes.next();
        }
        times_ns.push(t);
        samples.push(current.clone());
        t += step_ns;
    }
    let names = selectors.iter().map(|s| s.rsplit('.').next().unwrap_or(s).to_string()).collect();
    Ok(WaveformTrace { names, times_ns, samples, kind })
}

fn cell_text(v: &Logic) -> String {
    if v.width == 1 {
        v.symbol().to_string()
    } else {
        v.bits()
    }
}

/// Fixed-width commented table: time column 8 and signal columns 10 wide
/// for combinational traces, 16 and 16 for sequential ones.
pub fn render_waveform_table(trace: &WaveformTrace) -> String {
    let (tw, sw) = match trace.kind {
        TraceKind::Combinational => (8, 10),
        TraceKind::Sequential => (16, 16),
    };
    let mut out = format!("// {:<tw$}", "time");
    for n in &trace.names {
        out += &format!("{n:<sw$}");
    }
    out.push('\n');
    for (t, row) in trace.times_ns.iter().zip(&trace.samples) {
        out += &format!("// {:<tw$}", format!("{t}ns"));
        for v in row {
            out += &format!("{:<sw$}", cell_text(v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> VcdDocument {
        parse_vcd(
            "$timescale 1ns $end $scope module tb $end $var reg 1 ! a $end $var wire 1 \" q $end $upscope $end $enddefinitions $end
#0 0!
#5 1! 1\"
#12 0!
",
        )
        .unwrap()
    }

    #[test]
    fn samples_last_write_wins_and_x_before_dump() {
        let t = sample_trace(&doc(), &["a", "q"], 5, None, TraceKind::Combinational).unwrap();
        assert_eq!(t.times_ns, vec![0, 5, 10]);
        assert_eq!(t.samples[0][1], Logic::unknown(1));
        assert_eq!(t.samples[1], vec![Logic::bit(true), Logic::bit(true)]);
        assert_eq!(t.samples[2][0], Logic::bit(true));
        let again = sample_trace(&doc(), &["a", "q"], 5, None, TraceKind::Combinational).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn unknown_signal() {
        assert_eq!(
            sample_trace(&doc(), &["nope"], 5, None, TraceKind::Combinational).unwrap_err(),
            WaveError::UnknownSignal("nope".into())
        );
    }

    #[test]
    fn table_format() {
        let t = sample_trace(&doc(), &["a", "q"], 5, Some(5), TraceKind::Combinational).unwrap();
        let text = render_waveform_table(&t);
        assert_eq!(text, "// time    a         q         \n// 0ns     0         x         \n// 5ns     1         1         \n");
        let s = WaveformTrace { kind: TraceKind::Sequential, ..t };
        assert!(render_waveform_table(&s).starts_with("// time            a               q"));
    }
}
