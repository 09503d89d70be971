//! Verilog emission for SOP functions and state machines, paired testbenches,
//! and an interpreter for the emitted subset.

mod emit;
pub mod interp;
mod testbench;

pub use emit::{
    emit_fsm_module, emit_sop_module, in_edge_terms, input_condition, mealy_output_terms, moore_output_states,
    out_edge_next_expr, EmitError, FsmEmitOptions, FsmInterface, FsmStyle, ResetStyle,
};
pub use testbench::{
    comb_plan_for_fsm, default_tail, emit_testbench, seq_cycles, CombStep, SeqCycle, StimulusPlan, Testbench,
    TestbenchMode, TestbenchSpec, CLOCK_PERIOD_NS, COMB_STEP_NS,
};

use serde::{Deserialize, Serialize};

use crate::boolean::FunctionSpec;
use crate::fsm::{FsmGraph, StateEncoding};

pub const DEFAULT_MODULE_NAME: &str = "top_module";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub width: usize,
    pub is_reg: bool,
}

impl Port {
    pub fn input(name: impl Into<String>, width: usize) -> Self {
        Self { name: name.into(), direction: Direction::Input, width, is_reg: false }
    }

    pub fn output(name: impl Into<String>, width: usize) -> Self {
        Self { name: name.into(), direction: Direction::Output, width, is_reg: false }
    }

    pub fn output_reg(name: impl Into<String>, width: usize) -> Self {
        Self { name: name.into(), direction: Direction::Output, width, is_reg: true }
    }

    fn declaration(&self) -> String {
        let dir = match self.direction {
            Direction::Input => "input",
            Direction::Output if self.is_reg => "output reg",
            Direction::Output => "output",
        };
        if self.width > 1 {
            format!("{dir} [{}:0] {}", self.width - 1, self.name)
        } else {
            format!("{dir} {}", self.name)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArtifactStyle {
    Sop,
    FsmOutEdge,
    FsmInEdgeOneHot,
}

/// The object an artifact was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Function(FunctionSpec),
    Fsm {
        graph: FsmGraph,
        encoding: StateEncoding,
        options: FsmEmitOptions,
    },
}

/// Emitted module text with its port metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerilogArtifact {
    pub module_name: String,
    pub ports: Vec<Port>,
    /// Module body between the port list and `endmodule`.
    pub body: String,
    pub style: ArtifactStyle,
    pub provenance: Provenance,
}

impl VerilogArtifact {
    /// `module name (` ... `);` with one port per line.
    pub fn header(&self) -> String {
        header_text(&self.module_name, &self.ports)
    }

    pub fn module_text(&self) -> String {
        format!("{}\n{}endmodule\n", self.header(), self.body)
    }

    /// Same design under another module name.
    pub fn renamed(&self, module_name: &str) -> Self {
        Self { module_name: module_name.to_string(), ..self.clone() }
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }
}

pub fn header_text(module_name: &str, ports: &[Port]) -> String {
    let decls: Vec<String> = ports.iter().map(|p| format!("    {}", p.declaration())).collect();
    format!("module {module_name} (\n{}\n);", decls.join(",\n"))
}

#[cfg(test)]
mod tests {
    use super::interp::{parse_module, run_testbench};
    use super::*;
    use crate::boolean::{default_var_names, derive_sop, sample_function_spec};
    use crate::fsm::{encode_states, generate_fsm, EncodingScheme, FsmKind};

    fn passes(art: &VerilogArtifact, seed: u64) {
        let m = parse_module(&art.module_text()).unwrap_or_else(|e| panic!("{e}\n{}", art.module_text()));
        let tb = TestbenchSpec::for_artifact(art, seed, None).unwrap();
        let out = run_testbench(&m, &tb, false).unwrap();
        assert!(out.passed(), "{:?}\n{}", out.mismatches, art.module_text());
        assert_eq!(out.checks, tb.check_count());
    }

    #[test]
    fn generated_sop_modules_pass() {
        for seed in 0..50 {
            let spec = sample_function_spec(3 + (seed as usize % 2), seed, 0.15).unwrap();
            let names = default_var_names(spec.num_vars());
            passes(&emit_sop_module(&derive_sop(&spec), &spec, &names, "out", DEFAULT_MODULE_NAME).unwrap(), seed);
        }
    }

    #[test]
    fn generated_fsm_modules_pass_in_every_style() {
        let resets = [ResetStyle::sync_high(), ResetStyle::async_high(), ResetStyle::async_low(), ResetStyle::sync_low()];
        for seed in 0..40u64 {
            let kind = if seed % 2 == 0 { FsmKind::Moore } else { FsmKind::Mealy };
            let n = [4, 6, 10][seed as usize % 3];
            let w = 1 + (seed as u32 / 3) % 2;
            let fsm = generate_fsm(n, w, kind, seed).unwrap();
            for scheme in [EncodingScheme::Binary, EncodingScheme::OneHot] {
                let enc = encode_states(&fsm, scheme);
                for style in [FsmStyle::OutEdge, FsmStyle::InEdge] {
                    if style == FsmStyle::InEdge && scheme != EncodingScheme::OneHot {
                        continue;
                    }
                    for interface in [FsmInterface::Full, FsmInterface::NextStateOnly] {
                        let opts = FsmEmitOptions {
                            style,
                            interface,
                            reset: resets[seed as usize % 4].clone(),
                            ..Default::default()
                        };
                        passes(&emit_fsm_module(&fsm, &enc, &opts, DEFAULT_MODULE_NAME).unwrap(), seed);
                    }
                }
            }
        }
    }
}
