//! Instruction sentences and derivation text for each problem family.

use std::fmt::Write as _;

use crate::boolean::{bit_string, CellValue, FunctionSpec, SopExpr};
use crate::fsm::{input_label, FsmGraph, FsmKind, StateEncoding};
use crate::verilog::{in_edge_terms, mealy_output_terms, moore_output_states, out_edge_next_expr, ResetStyle};

use super::{Presentation, ProblemKind};

const FSM_CODE_LEAD: &str = "Finally, below is the Verilog code for the finite state machine:\n";

pub fn number_word(n: usize) -> String {
    const WORDS: [&str; 17] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
        "thirteen", "fourteen", "fifteen", "sixteen",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

fn input_phrase(w: u32) -> String {
    if w == 1 {
        "one input".to_string()
    } else {
        format!("a {w}-bit input")
    }
}

fn kind_word(k: FsmKind) -> &'static str {
    match k {
        FsmKind::Moore => "Moore",
        FsmKind::Mealy => "Mealy",
    }
}

fn reset_sentence(reset: &ResetStyle, state: &str) -> String {
    format!(
        "Reset is an active-{} {} reset to state {state}.",
        if reset.active_high { "high" } else { "low" },
        if reset.synchronous { "synchronous" } else { "asynchronous" }
    )
}

pub fn function_instruction(kind: ProblemKind, spec: &FunctionSpec) -> String {
    let has_dc = spec.cells().contains(&CellValue::DontCare);
    let base = match kind {
        ProblemKind::Kmap => "Implement the circuit described by the Karnaugh map below.",
        ProblemKind::TruthTable => "Create a combinational circuit that implements the truth table below.",
        _ => "This is a combinational circuit. Read the simulation waveforms to determine what the circuit does, then implement it.",
    };
    if has_dc {
        format!("{base} Entries marked x are don't-cares, so the output may take either value there.")
    } else {
        base.to_string()
    }
}

/// Truth table, minterm list, SOP, and the lead-in to the code block.
pub fn function_reasoning(kind: ProblemKind, spec: &FunctionSpec, sop: &SopExpr) -> String {
    let mut out = String::new();
    let names: Vec<String> = spec.var_names().iter().map(|n| format!("'{n}'")).collect();
    let table = crate::boolean::render_truth_table(spec, "f");
    match kind {
        ProblemKind::Kmap => {
            let _ = writeln!(out, "The input variables are: [{}].", names.join(", "));
            let _ = writeln!(out, "Based on the Karnaugh map, I can transform in to the following truth table:\n{table}");
        }
        ProblemKind::TruthTable => {
            let _ = writeln!(out, "The input variables are: [{}].", names.join(", "));
        }
        _ => {
            let _ = writeln!(out, "Based on the simulation waveform, I can transform in to the following truth table:\n{table}");
        }
    }
    if spec.cells().contains(&CellValue::DontCare) {
        out += "Rows whose output is x are don't-cares; I set them to 0, so they add no minterm.\n";
    }
    out += "The minterms (when output is 1) are:\n";
    for (m, term) in spec.minterms().zip(&sop.terms) {
        let bits: Vec<String> = spec.assignment_bits(m).iter().map(|&b| u8::from(b).to_string()).collect();
        let _ = writeln!(out, "({}) => {}", bits.join(","), sop.term_text(term));
    }
    let _ = writeln!(out, "This corresponds to the following minterms logic:\n`{sop}`\n");
    out += match kind {
        ProblemKind::Kmap => "Finally, based on the above logic equation, I can now write the Verilog code that could be described by the Karnaugh map:\n",
        _ => "Finally, based on the above logic equation, I can now write the Verilog code:\n",
    };
    out
}

/// What the machine prompt shows and what the module implements.
pub struct MachineText<'a> {
    pub presentation: Presentation,
    pub fsm: &'a FsmGraph,
    pub encoding: &'a StateEncoding,
    pub reset: &'a ResetStyle,
    pub input: &'a str,
    pub output: &'a str,
    pub next_var: &'a str,
    pub one_hot_logic: bool,
    /// Module body, used to quote the exact output and next-state expressions.
    pub body: &'a str,
}

fn encoding_clause(enc: &StateEncoding) -> &'static str {
    match enc.scheme {
        crate::fsm::EncodingScheme::OneHot => " using one-hot encoding",
        _ => "",
    }
}

fn one_hot_listing(m: &MachineText<'_>) -> String {
    let codes: Vec<String> =
        (0..m.fsm.num_states()).map(|s| format!("{}={}", m.fsm.state_names[s], m.encoding.literal(s))).collect();
    codes.join(", ")
}

pub fn machine_instruction(m: &MachineText<'_>) -> String {
    let fsm = m.fsm;
    let n = number_word(fsm.num_states());
    let kind = kind_word(fsm.kind());
    let reset_state = &fsm.state_names[fsm.reset_state];
    match m.presentation {
        Presentation::StateTable => format!(
            "The following is the state transition table for a {kind} state machine with {}, one output, and {n} states. Implement this state machine in Verilog{}. {}",
            input_phrase(fsm.input_width),
            encoding_clause(m.encoding),
            reset_sentence(m.reset, reset_state)
        ),
        Presentation::StateAssigned => format!(
            "Given the state-assigned table shown below, implement the logic functions {}[{}:0] and {}.",
            m.next_var,
            m.encoding.width - 1,
            m.output
        ),
        Presentation::OneHotLogic => format!(
            "The following is the state transition table for a {kind} state machine with {}, one output, and {n} states. Use the following one-hot state encoding: {}. Derive state transition and output logic equations by inspection assuming a one-hot encoding. Implement only the state transition logic and output logic (the combinational logic portion) for this state machine.",
            input_phrase(fsm.input_width),
            one_hot_listing(m)
        ),
        Presentation::EdgeList => match fsm.kind() {
            FsmKind::Moore => format!(
                "This is a Moore state machine with {n} states, {}, and one output. Implement this state machine in Verilog{}. {}",
                input_phrase(fsm.input_width),
                encoding_clause(m.encoding),
                reset_sentence(m.reset, reset_state)
            ),
            FsmKind::Mealy => format!(
                "The following diagram is a Mealy machine. Implement in Verilog{}. Resets into state {reset_state} and reset is {}.",
                encoding_clause(m.encoding),
                m.reset.describe()
            ),
        },
        Presentation::Waveform => {
            "This is a sequential circuit. Read the simulation waveforms to determine what the circuit does, then implement it."
                .to_string()
        }
    }
}

/// Right-hand side of `assign <lhs> = ...;` in `body`.
fn assign_rhs<'b>(body: &'b str, lhs: &str) -> Option<&'b str> {
    let prefix = format!("assign {lhs} = ");
    body.lines().find_map(|l| l.trim().strip_prefix(prefix.as_str())).map(|r| r.trim_end_matches(';'))
}

fn transitions_only_table(fsm: &FsmGraph) -> String {
    let w = fsm.input_width;
    let heads: Vec<String> =
        (0..fsm.num_inputs() as u32).map(|i| format!("next state in={}", input_label(i, w))).collect();
    let mut out = format!("// state | {}\n", heads.join(", "));
    for s in 0..fsm.num_states() {
        let next: Vec<&str> =
            (0..fsm.num_inputs() as u32).map(|i| fsm.state_names[fsm.next_state(s, i)].as_str()).collect();
        let _ = writeln!(out, "// {} | {}", fsm.state_names[s], next.join(", "));
    }
    out
}

fn out_edge_lines(m: &MachineText<'_>) -> String {
    (0..m.fsm.num_states())
        .map(|s| format!("{}: next = {};\n", m.fsm.state_names[s], out_edge_next_expr(m.fsm, s, m.input)))
        .collect()
}

fn in_edge_lines(m: &MachineText<'_>) -> String {
    let fsm = m.fsm;
    let mut out = String::new();
    for t in 0..fsm.num_states() {
        let name = &fsm.state_names[t];
        let cells: Vec<String> = in_edge_terms(fsm, t)
            .into_iter()
            .map(|(s, i)| format!("({}, {}={})", fsm.state_names[s], m.input, input_label(i, fsm.input_width)))
            .collect();
        let cells = if cells.is_empty() { "none".to_string() } else { cells.join(" ") };
        let logic = assign_rhs(m.body, &format!("{}[{name}]", m.next_var)).unwrap_or("1'b0");
        let _ = writeln!(
            out,
            "Next state is {name} on the following (row, column): {cells}. This correspond to the following logic: `{logic}`."
        );
    }
    out
}

fn output_lines(m: &MachineText<'_>) -> String {
    let fsm = m.fsm;
    let listed: Vec<String> = match fsm.kind() {
        FsmKind::Moore => moore_output_states(fsm).into_iter().map(|s| fsm.state_names[s].clone()).collect(),
        FsmKind::Mealy => mealy_output_terms(fsm)
            .into_iter()
            .map(|(s, i)| {
                format!("({}, {})", fsm.state_names[s], crate::verilog::input_condition(m.input, fsm.input_width, i))
            })
            .collect(),
    };
    let listed = if listed.is_empty() { "none".to_string() } else { listed.join(", ") };
    let rhs = assign_rhs(m.body, m.output).unwrap_or("1'b0");
    format!("The output is 1 for states: {listed}.\nThus the output logic is: `assign {} = {rhs};`.\n", m.output)
}

fn state_codes(fsm: &FsmGraph, enc: &StateEncoding) -> String {
    let codes: Vec<String> = (0..fsm.num_states())
        .map(|s| format!("{}={}", fsm.state_names[s], bit_string(enc.codes[s], enc.width)))
        .collect();
    codes.join(", ")
}

pub fn machine_reasoning(m: &MachineText<'_>) -> String {
    let fsm = m.fsm;
    let named = crate::fsm::render_transition_table(fsm, crate::fsm::TableLabels::Names);
    let next_logic = if m.one_hot_logic { in_edge_lines(m) } else { out_edge_lines(m) };
    let mut out = String::new();
    match m.presentation {
        Presentation::StateAssigned => {
            let _ = writeln!(out, "Label the present states in row order: {}.", state_codes(fsm, m.encoding));
            let _ = writeln!(out, "The state transition is as follows:\n{named}");
            let _ = writeln!(out, "The transition logic is then:\n{next_logic}");
        }
        Presentation::StateTable | Presentation::OneHotLogic if m.one_hot_logic => {
            out += "Based on the state transition table, we can obtain the next state from observing the row (previous state) and column (input).\n";
            let _ = writeln!(out, "{next_logic}");
        }
        Presentation::StateTable | Presentation::OneHotLogic => {
            let _ = writeln!(out, "From the state transition table, the state transition logic is as follows:\n{next_logic}");
        }
        Presentation::EdgeList => {
            let _ = write!(out, "From the transition diagram, we have the following transition logic:\n{}", transitions_only_table(fsm));
            let _ = writeln!(out, "Thus the state transition logic is as follows:\n{next_logic}");
        }
        Presentation::Waveform => {
            let _ = writeln!(out, "From the waveform, we have the following transition logic and output logic:\n{named}");
            let _ = writeln!(out, "Thus the state transition logic is as follows:\n{next_logic}");
        }
    }
    out += &output_lines(m);
    out.push('\n');
    out += FSM_CODE_LEAD;
    out
}
