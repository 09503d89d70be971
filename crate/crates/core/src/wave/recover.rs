use std::collections::{BTreeMap, BTreeSet};

use super::{WaveError, WaveformTrace};
use crate::boolean::{CellValue, FunctionSpec};
use crate::fsm::{FsmGraph, FsmKind};
use crate::verilog::interp::Logic;

/// Input assignments observed in a trace and the output seen for each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialFunction {
    pub var_names: Vec<String>,
    /// Assignment index (first variable is the MSB) to observed output.
    pub observed: BTreeMap<usize, bool>,
}

impl PartialFunction {
    pub fn is_complete(&self) -> bool {
        self.observed.len() == 1 << self.var_names.len()
    }

    /// Assignments where the observation disagrees with a ONE or ZERO cell.
    pub fn disagreements(&self, spec: &FunctionSpec) -> Vec<usize> {
        self.observed
            .iter()
            .filter(|&(&a, &v)| match spec.cell(a) {
                CellValue::One => !v,
                CellValue::Zero => v,
                CellValue::DontCare => false,
            })
            .map(|(&a, _)| a)
            .collect()
    }
}

fn known_bit(v: &Logic) -> Option<bool> {
    v.known_value().map(|b| b & 1 == 1)
}

/// Rows with any unknown input or output are skipped.
pub fn recover_function(trace: &WaveformTrace, inputs: &[&str], output: &str) -> Result<PartialFunction, WaveError> {
    let cols: Vec<usize> = inputs.iter().map(|n| trace.column(n)).collect::<Result<_, _>>()?;
    let out_col = trace.column(output)?;
    let mut observed = BTreeMap::new();
    'rows: for row in &trace.samples {
        let mut a = 0usize;
        for &c in &cols {
            let Some(b) = known_bit(&row[c]) else { continue 'rows };
            a = (a << 1) | usize::from(b);
        }
        let Some(o) = known_bit(&row[out_col]) else { continue };
        match observed.insert(a, o) {
            Some(prev) if prev != o => {
                return Err(WaveError::Contradiction { assignment: a, first: prev, second: o });
            }
            _ => {}
        }
    }
    Ok(PartialFunction { var_names: inputs.iter().map(|s| s.to_string()).collect(), observed })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionSignals<'a> {
    pub clock: &'a str,
    pub reset: &'a str,
    pub reset_active_high: bool,
    pub input: &'a str,
    pub output: &'a str,
}

/// What happened at one rising clock edge: reset and input as set up before
/// the edge, output as seen right after it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransitionObservation {
    pub reset: bool,
    pub input: u64,
    pub output: Option<bool>,
}

/// One observation per rising edge visible in the trace. Edges whose reset
/// or input is unknown are dropped.
pub fn recover_transitions(
    trace: &WaveformTrace,
    signals: &TransitionSignals<'_>,
) -> Result<Vec<TransitionObservation>, WaveError> {
    let clk = trace.column(signals.clock)?;
    let rst = trace.column(signals.reset)?;
    let inp = trace.column(signals.input)?;
    let out = trace.column(signals.output)?;
    let obs = trace
        .samples
        .windows(2)
        .filter(|w| known_bit(&w[0][clk]) == Some(false) && known_bit(&w[1][clk]) == Some(true))
        .filter_map(|w| {
            let reset = known_bit(&w[0][rst])? == signals.reset_active_high;
            let input = w[0][inp].known_value()?;
            Some(TransitionObservation { reset, input, output: known_bit(&w[1][out]) })
        })
        .collect();
    Ok(obs)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionCheck {
    pub mismatches: Vec<String>,
    /// Distinct (state, input) transitions exercised.
    pub covered: usize,
    pub total: usize,
}

impl TransitionCheck {
    pub fn consistent(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn complete(&self) -> bool {
        self.covered == self.total
    }
}

/// Replays observations against `fsm`. The state is unknown until the first
/// reset edge; afterwards every observed output must match the machine.
pub fn validate_transitions(fsm: &FsmGraph, observations: &[TransitionObservation]) -> TransitionCheck {
    let mut state: Option<usize> = None;
    let mut covered = BTreeSet::new();
    let mut mismatches = Vec::new();
    for (k, o) in observations.iter().enumerate() {
        if o.input as usize >= fsm.num_inputs() {
            mismatches.push(format!("edge {k}: input {} out of range", o.input));
            state = None;
            continue;
        }
        let input = o.input as u32;
        let next = if o.reset {
            fsm.reset_state
        } else if let Some(s) = state {
            covered.insert((s, input));
            fsm.next_state(s, input)
        } else {
            continue;
        };
        let expected = match fsm.kind() {
            FsmKind::Moore => fsm.output(next, 0),
            FsmKind::Mealy => fsm.output(next, input),
        };
        if o.output != Some(expected) {
            mismatches.push(format!("edge {k}: output {:?}, expected {expected}", o.output));
        }
        state = Some(next);
    }
    TransitionCheck { mismatches, covered: covered.len(), total: fsm.num_states() * fsm.num_inputs() }
}
