//! Problem instances (prompt, derivation, verified solution) for Karnaugh
//! maps, truth tables, state machines and waveforms, plus fingerprinting,
//! deduplication and dataset files.

mod dataset;
mod fingerprint;
pub(crate) mod pipeline;
mod text;

pub use dataset::{read_dataset, write_dataset, DatasetError, DatasetRecord, RecordKind};
pub use fingerprint::{
    canonical_order, code_fingerprint, fsm_fingerprint, function_fingerprint, normalize_code, parse_templates, repair_fingerprint,
    Fingerprint, FingerprintDb,
    FingerprintError, Rejection, BENCHMARK_PREFIX, RECORD_PREFIX,
};
pub use pipeline::{
    decontaminate_and_dedup, derive_seed, generate, rewrite_instructions, sample_for_verification, GenConfig,
    GenOutput, KindStats, RejectionEntry, RewriteReport, simulate_instances, REWRITE_SYSTEM_PROMPT,
};
pub use text::number_word;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boolean::{
    derive_sop, render_kmap, render_truth_table, sample_function_spec, sample_mutations, BoolError,
    DEFAULT_DC_PROBABILITY,
};
use crate::fsm::{
    alphabetic_names, encode_states, generate_fsm, render_edge_list, render_transition_table, EncodingScheme,
    FsmError, FsmKind, SignalNames, TableLabels,
};
use crate::verilog::interp::{parse_module, run_testbench, InterpError, RunOutcome};
use crate::verilog::{
    emit_fsm_module, emit_sop_module, EmitError, FsmEmitOptions, FsmInterface, FsmStyle, Provenance, ResetStyle,
    TestbenchSpec, VerilogArtifact, DEFAULT_MODULE_NAME,
};
use crate::wave::{
    parse_vcd, recover_transitions, render_waveform_table, sample_trace, validate_transitions, TraceKind,
    TransitionSignals, WaveError, SAMPLE_STEP_NS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProblemKind {
    Kmap,
    TruthTable,
    FsmTable,
    FsmEdgeList,
    WaveComb,
    WaveSeq,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::Kmap,
        ProblemKind::TruthTable,
        ProblemKind::FsmTable,
        ProblemKind::FsmEdgeList,
        ProblemKind::WaveComb,
        ProblemKind::WaveSeq,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ProblemKind::Kmap => "KMAP",
            ProblemKind::TruthTable => "TRUTH_TABLE",
            ProblemKind::FsmTable => "FSM_TABLE",
            ProblemKind::FsmEdgeList => "FSM_EDGE_LIST",
            ProblemKind::WaveComb => "WAVE_COMB",
            ProblemKind::WaveSeq => "WAVE_SEQ",
        }
    }

    /// Lower-case tag used in record ids.
    pub fn slug(self) -> String {
        self.tag().to_ascii_lowercase()
    }

    fn index(self) -> u64 {
        ProblemKind::ALL.iter().position(|&k| k == self).unwrap_or(0) as u64
    }

    fn is_function(self) -> bool {
        matches!(self, ProblemKind::Kmap | ProblemKind::TruthTable | ProblemKind::WaveComb)
    }

    /// Edge lists and waveforms are set off from the instruction by a blank line.
    fn blank_before_representation(self) -> bool {
        matches!(self, ProblemKind::FsmEdgeList | ProblemKind::WaveComb | ProblemKind::WaveSeq)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ProblemKind {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        ProblemKind::ALL.into_iter().find(|k| k.tag() == up).ok_or_else(|| ForgeError::Params(format!("unknown kind `{s}`")))
    }
}

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error(transparent)]
    Bool(#[from] BoolError),
    #[error(transparent)]
    Fsm(#[from] FsmError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error("{kind} solution failed its testbench: {detail}")]
    Verification { kind: ProblemKind, detail: String },
    #[error("waveform does not pin down the machine: {0}")]
    Underidentified(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("{kind}: only {accepted} of {wanted} instances after {attempts} attempts")]
    Exhausted { kind: ProblemKind, accepted: usize, wanted: usize, attempts: usize },
}

/// Weighted choice over a finite set of options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Categorical<T: Ord>(pub BTreeMap<T, f64>);

impl<T: Ord + Copy + fmt::Debug> Categorical<T> {
    pub fn uniform(values: &[T]) -> Self {
        Self(values.iter().map(|&v| (v, 1.0)).collect())
    }

    fn validate(&self, what: &str) -> Result<(), ForgeError> {
        let ok = self.0.values().all(|w| w.is_finite() && *w >= 0.0) && self.0.values().sum::<f64>() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ForgeError::Params(format!("{what}: weights must be non-negative with a positive sum")))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> T {
        let total: f64 = self.0.values().sum();
        let mut x = rng.gen::<f64>() * total;
        let mut last = None;
        for (&v, &w) in &self.0 {
            if w <= 0.0 {
                continue;
            }
            if x < w {
                return v;
            }
            x -= w;
            last = Some(v);
        }
        last.expect("validated distribution has a positive weight")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindChoice {
    Moore,
    Mealy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetChoice {
    SyncHigh,
    SyncLow,
    AsyncHigh,
    AsyncLow,
}

impl ResetChoice {
    pub fn style(self) -> ResetStyle {
        match self {
            ResetChoice::SyncHigh => ResetStyle::sync_high(),
            ResetChoice::SyncLow => ResetStyle::sync_low(),
            ResetChoice::AsyncHigh => ResetStyle::async_high(),
            ResetChoice::AsyncLow => ResetStyle::async_low(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingChoice {
    Binary,
    OneHot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleChoice {
    OutEdge,
    /// Forces one-hot encoding.
    InEdge,
}

/// How an FSM_TABLE problem presents its machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableVariant {
    /// Named states, full clocked machine.
    StateTable,
    /// Binary codes, next-state and output logic only.
    StateAssigned,
    /// Named states with a given one-hot code, next-state and output logic only.
    OneHotLogic,
}

/// What the prompt shows for a machine problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Presentation {
    StateTable,
    StateAssigned,
    OneHotLogic,
    EdgeList,
    Waveform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeParams {
    pub dc_probability: f64,
    /// Share of function problems drawn over three variables (the rest use four).
    pub three_var_fraction: f64,
    pub kmap_max_swaps: usize,
    /// State counts for table and edge-list machines, chosen uniformly.
    pub fsm_states: Vec<usize>,
    pub fsm_input_widths: Vec<u32>,
    /// State counts for waveform machines (1-bit input).
    pub wave_states: Vec<usize>,
    /// Random cycles after full coverage in waveform machines.
    pub wave_tail_cycles: usize,
    pub machine_kind: Categorical<KindChoice>,
    pub reset: Categorical<ResetChoice>,
    pub encoding: Categorical<EncodingChoice>,
    pub style: Categorical<StyleChoice>,
    pub table_variant: Categorical<TableVariant>,
}

impl Default for ForgeParams {
    fn default() -> Self {
        Self {
            dc_probability: DEFAULT_DC_PROBABILITY,
            three_var_fraction: 0.25,
            kmap_max_swaps: 2,
            fsm_states: vec![3, 4, 5, 6],
            fsm_input_widths: vec![1, 2],
            wave_states: vec![3, 4, 5],
            wave_tail_cycles: 4,
            machine_kind: Categorical::uniform(&[KindChoice::Moore, KindChoice::Mealy]),
            reset: Categorical::uniform(&[
                ResetChoice::SyncHigh,
                ResetChoice::SyncLow,
                ResetChoice::AsyncHigh,
                ResetChoice::AsyncLow,
            ]),
            encoding: Categorical::uniform(&[EncodingChoice::Binary, EncodingChoice::OneHot]),
            style: Categorical::uniform(&[StyleChoice::OutEdge, StyleChoice::InEdge]),
            table_variant: Categorical::uniform(&[
                TableVariant::StateTable,
                TableVariant::StateAssigned,
                TableVariant::OneHotLogic,
            ]),
        }
    }
}

impl ForgeParams {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |m: &str| Err(ForgeError::Params(m.to_string()));
        if !(0.0..1.0).contains(&self.dc_probability) {
            return bad("dc_probability must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.three_var_fraction) {
            return bad("three_var_fraction must lie in [0, 1]");
        }
        if self.fsm_states.is_empty() || self.fsm_states.iter().any(|&n| !(2..=crate::fsm::MAX_STATES).contains(&n)) {
            return bad("fsm_states must be non-empty values in 2..=16");
        }
        if self.wave_states.is_empty() || self.wave_states.iter().any(|&n| !(2..=crate::fsm::MAX_STATES).contains(&n)) {
            return bad("wave_states must be non-empty values in 2..=16");
        }
        if self.fsm_input_widths.is_empty() || self.fsm_input_widths.iter().any(|&w| !(1..=2).contains(&w)) {
            return bad("fsm_input_widths must be non-empty values in 1..=2");
        }
        self.machine_kind.validate("machine_kind")?;
        self.reset.validate("reset")?;
        self.encoding.validate("encoding")?;
        self.style.validate("style")?;
        self.table_variant.validate("table_variant")
    }
}

/// One generated problem with its verified solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub kind: ProblemKind,
    pub presentation: Option<Presentation>,
    pub instruction: String,
    /// Map, table, edge list or waveform, as comment lines.
    pub representation: String,
    pub header: String,
    pub reasoning: String,
    pub artifact: VerilogArtifact,
    pub testbench: TestbenchSpec,
    pub seed: u64,
    pub fingerprint: Fingerprint,
}

impl ProblemInstance {
    pub fn prompt(&self) -> String {
        let gap = if self.kind.blank_before_representation() { "\n" } else { "" };
        format!("{}\n{gap}{}\n{}\n", self.instruction, self.representation, self.header)
    }

    pub fn solution(&self) -> String {
        self.artifact.module_text()
    }

    pub fn response(&self) -> String {
        format!("{}```\n{}```\n", self.reasoning, self.solution())
    }

    pub fn to_record(&self, id: &str) -> DatasetRecord {
        DatasetRecord {
            id: id.to_string(),
            kind: RecordKind::from(self.kind),
            prompt: self.prompt(),
            response: self.response(),
            seed: self.seed,
            fingerprint: self.fingerprint.to_string(),
        }
    }
}

const VAR_NAME_SETS: [[&str; 4]; 3] = [["a", "b", "c", "d"], ["w", "x", "y", "z"], ["x1", "x2", "x3", "x4"]];
const MACHINE_PORT_NAMES: [(&str, &str); 2] = [("x", "z"), ("in", "out")];

fn pick<T: Copy>(values: &[T], rng: &mut impl Rng) -> T {
    *values.choose(rng).expect("validated non-empty")
}

/// Runs the solution against its testbench in the interpreter.
fn verify(kind: ProblemKind, art: &VerilogArtifact, tb: &TestbenchSpec, record: bool) -> Result<RunOutcome, ForgeError> {
    let module = parse_module(&art.module_text())?;
    let run = run_testbench(&module, tb, record)?;
    if !run.passed() {
        let detail = run.mismatches.first().cloned().unwrap_or_else(|| format!("{} failures", run.failures));
        return Err(ForgeError::Verification { kind, detail });
    }
    Ok(run)
}

fn waveform_table(run: &RunOutcome, tb: &TestbenchSpec, kind: TraceKind) -> Result<(String, crate::wave::WaveformTrace), ForgeError> {
    let rec = run.recording.as_ref().expect("recorded run");
    let vcd = parse_vcd(&rec.to_vcd("tb")).map_err(WaveError::from)?;
    let order = tb.signal_order();
    let selectors: Vec<&str> = order.iter().map(String::as_str).collect();
    let trace = sample_trace(&vcd, &selectors, SAMPLE_STEP_NS, None, kind)?;
    Ok((render_waveform_table(&trace), trace))
}

/// Builds one instance of `kind` from `seed`. The solution is checked against
/// its testbench before returning.
pub fn forge_problem(kind: ProblemKind, params: &ForgeParams, seed: u64) -> Result<ProblemInstance, ForgeError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if kind.is_function() {
        forge_function(kind, params, &mut rng, seed)
    } else {
        forge_machine(kind, params, &mut rng, seed)
    }
}

fn forge_function(kind: ProblemKind, params: &ForgeParams, rng: &mut ChaCha8Rng, seed: u64) -> Result<ProblemInstance, ForgeError> {
    let n = if rng.gen_bool(params.three_var_fraction) { 3 } else { 4 };
    let dc = if kind == ProblemKind::WaveComb { 0.0 } else { params.dc_probability };
    let names: Vec<String> = pick(&VAR_NAME_SETS, rng)[..n].iter().map(|s| s.to_string()).collect();
    let spec = sample_function_spec(n, rng.gen(), dc)?.with_var_names(names.clone())?;
    let output = match kind {
        ProblemKind::Kmap => "out",
        ProblemKind::TruthTable => "f",
        _ => "q",
    };
    let sop = derive_sop(&spec);
    let art = emit_sop_module(&sop, &spec, &names, output, DEFAULT_MODULE_NAME)?;
    let tb = TestbenchSpec::for_artifact(&art, rng.gen(), None)?;
    let run = verify(kind, &art, &tb, kind == ProblemKind::WaveComb)?;
    let representation = match kind {
        ProblemKind::Kmap => render_kmap(&spec, &sample_mutations(n, rng.gen(), params.kmap_max_swaps))?.render(),
        ProblemKind::TruthTable => render_truth_table(&spec, output).lines().map(|l| format!("//{l}\n")).collect(),
        _ => waveform_table(&run, &tb, TraceKind::Combinational)?.0,
    };
    Ok(ProblemInstance {
        kind,
        presentation: None,
        instruction: text::function_instruction(kind, &spec),
        representation,
        header: art.header(),
        reasoning: text::function_reasoning(kind, &spec, &sop),
        fingerprint: function_fingerprint(&spec),
        artifact: art,
        testbench: tb,
        seed,
    })
}

fn forge_machine(kind: ProblemKind, params: &ForgeParams, rng: &mut ChaCha8Rng, seed: u64) -> Result<ProblemInstance, ForgeError> {
    let (n, w) = if kind == ProblemKind::WaveSeq {
        (pick(&params.wave_states, rng), 1)
    } else {
        (pick(&params.fsm_states, rng), pick(&params.fsm_input_widths, rng))
    };
    let fkind = match params.machine_kind.sample(rng) {
        KindChoice::Moore => FsmKind::Moore,
        KindChoice::Mealy => FsmKind::Mealy,
    };
    let base = generate_fsm(n, w, fkind, rng.gen())?;
    // Move the reset state to a random slot so it is not always `A`.
    let r = rng.gen_range(0..n);
    let mut order: Vec<usize> = (0..n).collect();
    order.swap(0, r);
    let fsm = base.permute_states(&order)?.with_state_names(alphabetic_names(n))?;

    let presentation = match kind {
        ProblemKind::FsmTable => match params.table_variant.sample(rng) {
            TableVariant::StateTable => Presentation::StateTable,
            TableVariant::StateAssigned => Presentation::StateAssigned,
            TableVariant::OneHotLogic => Presentation::OneHotLogic,
        },
        ProblemKind::FsmEdgeList => Presentation::EdgeList,
        _ => Presentation::Waveform,
    };
    let (input, output) = pick(&MACHINE_PORT_NAMES, rng);
    let mut opts = FsmEmitOptions {
        signals: SignalNames { input: input.into(), output: output.into(), ..Default::default() },
        ..Default::default()
    };
    let scheme = match presentation {
        Presentation::StateAssigned => {
            opts.signals = SignalNames::default();
            opts.interface = FsmInterface::NextStateOnly;
            opts.state_var = opts.signals.present.clone();
            opts.next_var = opts.signals.next.clone();
            EncodingScheme::Binary
        }
        Presentation::OneHotLogic => {
            opts.style = FsmStyle::InEdge;
            opts.interface = FsmInterface::NextStateOnly;
            EncodingScheme::OneHot
        }
        _ => {
            opts.reset = params.reset.sample(rng).style();
            match params.style.sample(rng) {
                StyleChoice::InEdge => {
                    opts.style = FsmStyle::InEdge;
                    EncodingScheme::OneHot
                }
                StyleChoice::OutEdge => match params.encoding.sample(rng) {
                    EncodingChoice::Binary => EncodingScheme::Binary,
                    EncodingChoice::OneHot => EncodingScheme::OneHot,
                },
            }
        }
    };
    let enc = encode_states(&fsm, scheme);
    let art = emit_fsm_module(&fsm, &enc, &opts, DEFAULT_MODULE_NAME)?;
    let tail = (kind == ProblemKind::WaveSeq).then_some(params.wave_tail_cycles);
    let tb = TestbenchSpec::for_artifact(&art, rng.gen(), tail)?;
    let run = verify(kind, &art, &tb, kind == ProblemKind::WaveSeq)?;

    let representation = match presentation {
        Presentation::StateTable | Presentation::OneHotLogic => render_transition_table(&fsm, TableLabels::Names),
        Presentation::StateAssigned => render_transition_table(&fsm, TableLabels::Encoded(&enc, &opts.signals)),
        Presentation::EdgeList => render_edge_list(&fsm, &opts.signals),
        Presentation::Waveform => {
            let (table, trace) = waveform_table(&run, &tb, TraceKind::Sequential)?;
            let sig = TransitionSignals {
                clock: &opts.clock,
                reset: &opts.reset.name,
                reset_active_high: opts.reset.active_high,
                input: &opts.signals.input,
                output: &opts.signals.output,
            };
            let check = validate_transitions(&fsm, &recover_transitions(&trace, &sig)?);
            if !check.consistent() || !check.complete() {
                return Err(ForgeError::Underidentified(format!(
                    "{} of {} transitions visible, {} mismatches",
                    check.covered,
                    check.total,
                    check.mismatches.len()
                )));
            }
            table
        }
    };
    let mt = text::MachineText {
        presentation,
        fsm: &fsm,
        encoding: &enc,
        reset: &opts.reset,
        input: &opts.signals.input,
        output: &opts.signals.output,
        next_var: &opts.next_var,
        one_hot_logic: opts.style == FsmStyle::InEdge,
        body: &art.body,
    };
    let instruction = text::machine_instruction(&mt);
    let reasoning = text::machine_reasoning(&mt);
    debug_assert!(matches!(art.provenance, Provenance::Fsm { .. }));
    Ok(ProblemInstance {
        kind,
        presentation: Some(presentation),
        instruction,
        representation,
        header: art.header(),
        reasoning,
        fingerprint: fsm_fingerprint(&fsm),
        artifact: art,
        testbench: tb,
        seed,
    })
}
