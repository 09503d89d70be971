use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ArtifactStyle, Port, Provenance, VerilogArtifact};
use crate::boolean::{FunctionSpec, SopExpr};
use crate::fsm::{EncodingScheme, FsmGraph, FsmKind, FsmOutputs, SignalNames, StateEncoding};

const INDENT: &str = "        ";

#[derive(Debug, Error, PartialEq)]
pub enum EmitError {
    #[error("in-edge emission requires one-hot encoding, got {0:?}")]
    StyleEncoding(EncodingScheme),
    #[error("SOP binds {expected} variables but {got} port names were given")]
    PortCount { expected: usize, got: usize },
    #[error("encoding covers {got} states, machine has {expected}")]
    EncodingSize { expected: usize, got: usize },
    #[error("port name {0:?} is used twice")]
    DuplicatePort(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmStyle {
    /// `case` over the current state, one arm per source state.
    OutEdge,
    /// One assign per next-state bit, ORing the incoming edges.
    InEdge,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResetStyle {
    pub synchronous: bool,
    pub active_high: bool,
    pub name: String,
}

impl ResetStyle {
    pub fn sync_high() -> Self {
        Self { synchronous: true, active_high: true, name: "reset".into() }
    }

    pub fn async_high() -> Self {
        Self { synchronous: false, active_high: true, name: "areset".into() }
    }

    pub fn async_low() -> Self {
        Self { synchronous: false, active_high: false, name: "aresetn".into() }
    }

    pub fn sync_low() -> Self {
        Self { synchronous: true, active_high: false, name: "resetn".into() }
    }

    /// Level driven on the reset port to assert it.
    pub fn asserted_level(&self) -> u64 {
        u64::from(self.active_high)
    }

    /// Prose used in problem statements.
    pub fn describe(&self) -> String {
        format!(
            "{} active-{}",
            if self.synchronous { "synchronous" } else { "asynchronous" },
            if self.active_high { "high" } else { "low" }
        )
    }

    fn condition(&self) -> String {
        if self.active_high {
            self.name.clone()
        } else {
            format!("!{}", self.name)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmInterface {
    /// Clocked machine with its own state register.
    Full,
    /// Combinational next-state and output logic; the present state is an input port.
    NextStateOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmEmitOptions {
    pub style: FsmStyle,
    pub reset: ResetStyle,
    pub interface: FsmInterface,
    pub signals: SignalNames,
    pub clock: String,
    /// Present-state signal; an input port under [`FsmInterface::NextStateOnly`].
    pub state_var: String,
    /// Next-state signal; an output port under [`FsmInterface::NextStateOnly`].
    pub next_var: String,
}

impl Default for FsmEmitOptions {
    fn default() -> Self {
        Self {
            style: FsmStyle::OutEdge,
            reset: ResetStyle::sync_high(),
            interface: FsmInterface::Full,
            signals: SignalNames::default(),
            clock: "clk".into(),
            state_var: "state".into(),
            next_var: "next_state".into(),
        }
    }
}

/// SOP as a single continuous assignment. `input_names` override the
/// expression's variable names positionally.
pub fn emit_sop_module(
    expr: &SopExpr,
    spec: &FunctionSpec,
    input_names: &[String],
    output_name: &str,
    module_name: &str,
) -> Result<VerilogArtifact, EmitError> {
    if input_names.len() != expr.num_vars() || spec.num_vars() != expr.num_vars() {
        return Err(EmitError::PortCount { expected: expr.num_vars(), got: input_names.len() });
    }
    let renamed = SopExpr { var_names: input_names.to_vec(), terms: expr.terms.clone() };
    let mut ports: Vec<Port> = input_names.iter().map(|n| Port::input(n.clone(), 1)).collect();
    ports.push(Port::output(output_name, 1));
    check_unique(&ports)?;
    let spec = spec.with_var_names(input_names.to_vec()).map_err(|_| EmitError::DuplicatePort(input_names.join(",")))?;
    Ok(VerilogArtifact {
        module_name: module_name.to_string(),
        ports,
        body: format!("{INDENT}assign {output_name} = {renamed};\n"),
        style: ArtifactStyle::Sop,
        provenance: Provenance::Function(spec),
    })
}

fn check_unique(ports: &[Port]) -> Result<(), EmitError> {
    for (i, p) in ports.iter().enumerate() {
        if ports[..i].iter().any(|q| q.name == p.name) {
            return Err(EmitError::DuplicatePort(p.name.clone()));
        }
    }
    Ok(())
}

/// Condition under which input signal `name` (width `w`) equals `value`:
/// `x` / `~x` for one bit, `(x == 2'd1)` otherwise.
pub fn input_condition(name: &str, w: u32, value: u32) -> String {
    if w == 1 {
        if value == 1 {
            name.to_string()
        } else {
            format!("~{name}")
        }
    } else {
        format!("({name} == {w}'d{value})")
    }
}

/// Right-hand side of an out-edge case arm, e.g. `x ? C : D`.
pub fn out_edge_next_expr(fsm: &FsmGraph, state: usize, input_name: &str) -> String {
    let name = |s: usize| fsm.state_names[s].as_str();
    let w = fsm.input_width;
    if w == 1 {
        return format!("{input_name} ? {} : {}", name(fsm.next_state(state, 1)), name(fsm.next_state(state, 0)));
    }
    let last = fsm.num_inputs() as u32 - 1;
    let mut parts: Vec<String> = (0..last)
        .map(|i| format!("{} ? {} : ", input_condition(input_name, w, i), name(fsm.next_state(state, i))))
        .collect();
    parts.push(name(fsm.next_state(state, last)).to_string());
    parts.concat()
}

/// States whose Moore output is 1, in state order.
pub fn moore_output_states(fsm: &FsmGraph) -> Vec<usize> {
    match &fsm.outputs {
        FsmOutputs::Moore(o) => (0..fsm.num_states()).filter(|&s| o[s]).collect(),
        FsmOutputs::Mealy(_) => Vec::new(),
    }
}

/// (state, input) edges whose Mealy output is 1, in state-then-input order.
pub fn mealy_output_terms(fsm: &FsmGraph) -> Vec<(usize, u32)> {
    match &fsm.outputs {
        FsmOutputs::Mealy(o) => fsm.pairs().filter(|&(s, i)| o[s][i as usize]).collect(),
        FsmOutputs::Moore(_) => Vec::new(),
    }
}

/// Incoming (source, input) edges of `target`, in source-then-input order.
pub fn in_edge_terms(fsm: &FsmGraph, target: usize) -> Vec<(usize, u32)> {
    fsm.pairs().filter(|&(s, i)| fsm.next_state(s, i) == target).collect()
}

fn or_join(parts: Vec<String>) -> String {
    if parts.is_empty() {
        "1'b0".to_string()
    } else {
        format!("( {} )", parts.join(" || "))
    }
}

/// Output expression in either comparison (`state == A`) or one-hot bit (`state[A]`) form.
fn output_expr(fsm: &FsmGraph, state_var: &str, input_name: &str, one_hot_bits: bool) -> String {
    let sel = |s: usize| {
        if one_hot_bits {
            format!("{state_var}[{}]", fsm.state_names[s])
        } else {
            format!("{state_var} == {}", fsm.state_names[s])
        }
    };
    match fsm.kind() {
        FsmKind::Moore => or_join(moore_output_states(fsm).into_iter().map(sel).collect()),
        FsmKind::Mealy => or_join(
            mealy_output_terms(fsm)
                .into_iter()
                .map(|(s, i)| format!("( {} & {} )", sel(s), input_condition(input_name, fsm.input_width, i)))
                .collect(),
        ),
    }
}

pub fn emit_fsm_module(
    fsm: &FsmGraph,
    encoding: &StateEncoding,
    options: &FsmEmitOptions,
    module_name: &str,
) -> Result<VerilogArtifact, EmitError> {
    if options.style == FsmStyle::InEdge && encoding.scheme != EncodingScheme::OneHot {
        return Err(EmitError::StyleEncoding(encoding.scheme));
    }
    if encoding.codes.len() != fsm.num_states() {
        return Err(EmitError::EncodingSize { expected: fsm.num_states(), got: encoding.codes.len() });
    }
    let sig = &options.signals;
    let width = encoding.width;
    let range = if width > 1 { format!("[{}:0] ", width - 1) } else { String::new() };
    let w = fsm.input_width as usize;
    let full = options.interface == FsmInterface::Full;

    let mut ports = Vec::new();
    if full {
        ports.push(Port::input(options.clock.clone(), 1));
        ports.push(Port::input(options.reset.name.clone(), 1));
        ports.push(Port::input(sig.input.clone(), w));
    } else {
        ports.push(Port::input(sig.input.clone(), w));
        ports.push(Port::input(options.state_var.clone(), width));
        match options.style {
            FsmStyle::OutEdge => ports.push(Port::output_reg(options.next_var.clone(), width)),
            FsmStyle::InEdge => ports.push(Port::output(options.next_var.clone(), width)),
        }
    }
    ports.push(Port::output(sig.output.clone(), 1));
    check_unique(&ports)?;

    let state = options.state_var.as_str();
    let next = options.next_var.as_str();
    let mut body = String::new();
    match options.style {
        FsmStyle::OutEdge => {
            let params: Vec<String> =
                (0..fsm.num_states()).map(|s| format!("{}={}", fsm.state_names[s], encoding.literal(s))).collect();
            body += &format!("{INDENT}parameter {};\n", params.join(", "));
            if full {
                body += &format!("{INDENT}reg {range}{state};\n{INDENT}reg {range}{next};\n");
            }
            body += &format!("{INDENT}always_comb begin\n{INDENT}{INDENT}case ({state})\n");
            for s in 0..fsm.num_states() {
                body += &format!(
                    "{INDENT}{INDENT}{INDENT}{}: {next} = {};\n",
                    fsm.state_names[s],
                    out_edge_next_expr(fsm, s, &sig.input)
                );
            }
            body += &format!("{INDENT}{INDENT}{INDENT}default: {next} = 'x;\n{INDENT}{INDENT}endcase\n{INDENT}end\n");
        }
        FsmStyle::InEdge => {
            let params: Vec<String> =
                (0..fsm.num_states()).map(|s| format!("{}={s}", fsm.state_names[s])).collect();
            body += &format!("{INDENT}parameter {};\n", params.join(", "));
            if full {
                body += &format!("{INDENT}reg {range}{state};\n{INDENT}wire {range}{next};\n");
            }
            for t in 0..fsm.num_states() {
                let terms: Vec<String> = in_edge_terms(fsm, t)
                    .into_iter()
                    .map(|(s, i)| {
                        format!("{state}[{}] & {}", fsm.state_names[s], input_condition(&sig.input, fsm.input_width, i))
                    })
                    .collect();
                let rhs = if terms.is_empty() { "1'b0".to_string() } else { terms.join(" || ") };
                body += &format!("{INDENT}assign {next}[{}] = {rhs};\n", fsm.state_names[t]);
            }
        }
    }
    if full {
        let r = &options.reset;
        let sens = if r.synchronous {
            format!("posedge {}", options.clock)
        } else {
            let edge = if r.active_high { "posedge" } else { "negedge" };
            format!("posedge {}, {edge} {}", options.clock, r.name)
        };
        let reset_value = match options.style {
            FsmStyle::OutEdge => fsm.state_names[fsm.reset_state].clone(),
            FsmStyle::InEdge => encoding.literal(fsm.reset_state),
        };
        body += &format!(
            "{INDENT}always @({sens}) begin\n{INDENT}{INDENT}if ({}) {state} <= {reset_value};\n{INDENT}{INDENT}else {state} <= {next};\n{INDENT}end\n",
            r.condition()
        );
    }
    let one_hot_bits = options.style == FsmStyle::InEdge;
    body += &format!("{INDENT}assign {} = {};\n", sig.output, output_expr(fsm, state, &sig.input, one_hot_bits));

    let style = match options.style {
        FsmStyle::OutEdge => ArtifactStyle::FsmOutEdge,
        FsmStyle::InEdge => ArtifactStyle::FsmInEdgeOneHot,
    };
    Ok(VerilogArtifact {
        module_name: module_name.to_string(),
        ports,
        body,
        style,
        provenance: Provenance::Fsm { graph: fsm.clone(), encoding: encoding.clone(), options: options.clone() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolean::{default_var_names, derive_sop};
    use crate::fsm::{encode_states, FsmGraph};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn sop_single_minterm() {
        let spec = FunctionSpec::from_minterms(3, &[0], &[]).unwrap();
        let art = emit_sop_module(&derive_sop(&spec), &spec, &default_var_names(3), "out", "top_module").unwrap();
        let text = art.module_text();
        assert!(text.contains("assign out = (~a & ~b & ~c);"), "{text}");
        assert!(text.starts_with("module top_module (\n    input a,\n"));
        assert!(text.ends_with("endmodule\n"));
    }

    #[test]
    fn sop_constant_zero() {
        let spec = FunctionSpec::from_minterms(3, &[], &[]).unwrap();
        let art = emit_sop_module(&derive_sop(&spec), &spec, &default_var_names(3), "out", "top_module").unwrap();
        assert!(art.body.contains("assign out = 1'b0;"));
    }

    #[test]
    fn sop_port_mismatch() {
        let spec = FunctionSpec::from_minterms(3, &[1], &[]).unwrap();
        let err = emit_sop_module(&derive_sop(&spec), &spec, &names(&["a", "b"]), "out", "m").unwrap_err();
        assert_eq!(err, EmitError::PortCount { expected: 3, got: 2 });
    }

    fn appendix_mealy() -> FsmGraph {
        FsmGraph::new(
            names(&["A", "B", "C", "D"]),
            0,
            1,
            vec![vec![3, 2], vec![2, 1], vec![2, 3], vec![2, 1]],
            FsmOutputs::Mealy(vec![vec![false, true], vec![true, false], vec![false, false], vec![true, false]]),
            0,
        )
        .unwrap()
    }

    #[test]
    fn mealy_out_edge_matches_appendix_lines() {
        let fsm = appendix_mealy();
        let enc = encode_states(&fsm, EncodingScheme::Binary);
        let opts = FsmEmitOptions { reset: ResetStyle::async_high(), ..Default::default() };
        let text = emit_fsm_module(&fsm, &enc, &opts, "top_module").unwrap().module_text();
        assert!(text.contains("parameter A=2'b00, B=2'b01, C=2'b10, D=2'b11;"));
        assert!(text.contains("A: next_state = x ? C : D;"));
        assert!(text.contains("always @(posedge clk, posedge areset) begin"));
        assert!(text.contains("if (areset) state <= A;"));
        assert!(text.contains("assign z = ( ( state == A & x ) || ( state == B & ~x ) || ( state == D & ~x ) );"));
    }

    #[test]
    fn moore_in_edge_matches_appendix_lines() {
        let fsm = FsmGraph::new(
            names(&["A", "B", "C", "D"]),
            0,
            1,
            vec![vec![1, 0], vec![1, 2], vec![3, 0], vec![1, 2]],
            FsmOutputs::Moore(vec![false, true, true, false]),
            0,
        )
        .unwrap();
        let enc = encode_states(&fsm, EncodingScheme::OneHot);
        let opts = FsmEmitOptions {
            style: FsmStyle::InEdge,
            interface: FsmInterface::NextStateOnly,
            signals: SignalNames { input: "in".into(), output: "out".into(), ..Default::default() },
            ..Default::default()
        };
        let art = emit_fsm_module(&fsm, &enc, &opts, "top_module").unwrap();
        let text = art.module_text();
        assert!(text.contains("assign next_state[A] = state[A] & in || state[C] & in;"));
        assert!(text.contains("assign next_state[B] = state[A] & ~in || state[B] & ~in || state[D] & ~in;"));
        assert!(text.contains("assign next_state[D] = state[C] & ~in;"));
        assert!(text.contains("assign out = ( state[B] || state[C] );"));
        assert!(text.contains("input [3:0] state"));
        assert!(!text.contains("always"));
    }

    #[test]
    fn in_edge_requires_one_hot() {
        let fsm = appendix_mealy();
        let enc = encode_states(&fsm, EncodingScheme::Binary);
        let opts = FsmEmitOptions { style: FsmStyle::InEdge, ..Default::default() };
        assert_eq!(
            emit_fsm_module(&fsm, &enc, &opts, "m").unwrap_err(),
            EmitError::StyleEncoding(EncodingScheme::Binary)
        );
    }

    #[test]
    fn two_bit_input_conditions() {
        assert_eq!(input_condition("x", 2, 3), "(x == 2'd3)");
        assert_eq!(input_condition("x", 1, 0), "~x");
        let fsm = FsmGraph::new(
            names(&["A", "B"]),
            0,
            2,
            vec![vec![0, 1, 1, 0], vec![1, 0, 0, 0]],
            FsmOutputs::Moore(vec![false, true]),
            0,
        )
        .unwrap();
        assert_eq!(out_edge_next_expr(&fsm, 0, "x"), "(x == 2'd0) ? A : (x == 2'd1) ? B : (x == 2'd2) ? B : A");
    }

    #[test]
    fn active_low_async_reset() {
        let fsm = appendix_mealy();
        let enc = encode_states(&fsm, EncodingScheme::OneHot);
        let opts = FsmEmitOptions { style: FsmStyle::InEdge, reset: ResetStyle::async_low(), ..Default::default() };
        let text = emit_fsm_module(&fsm, &enc, &opts, "m").unwrap().module_text();
        assert!(text.contains("always @(posedge clk, negedge aresetn) begin"));
        assert!(text.contains("if (!aresetn) state <= 4'b0001;"));
        assert!(text.contains("wire [3:0] next_state;"));
    }
}
