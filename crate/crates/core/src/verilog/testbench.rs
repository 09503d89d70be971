use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::emit::{EmitError, FsmInterface};
use super::{Port, Provenance, VerilogArtifact};
use crate::boolean::{bit_string, CellValue};
use crate::fsm::{covering_stimulus, simulate_fsm, FsmGraph, FsmKind, Stimulus, StateEncoding};

/// Spacing between combinational stimulus steps.
pub const COMB_STEP_NS: u64 = 5;
pub const CLOCK_PERIOD_NS: u64 = 10;

/// Inputs applied at one step and the expected outputs, aligned with
/// [`TestbenchSpec::driven`] and [`TestbenchSpec::checked`]. `None` skips the check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombStep {
    pub drive: Vec<u64>,
    pub expect: Vec<Option<u64>>,
}

/// Inputs applied before a rising edge and outputs expected at the
/// following falling edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqCycle {
    pub drive: Vec<u64>,
    pub expect: Vec<Option<u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StimulusPlan {
    Combinational { step_ns: u64, steps: Vec<CombStep> },
    Sequential { clock: String, period_ns: u64, cycles: Vec<SeqCycle> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestbenchSpec {
    pub dut: String,
    /// Driven ports, clock excluded.
    pub driven: Vec<Port>,
    pub checked: Vec<Port>,
    pub plan: StimulusPlan,
    pub vcd_path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TestbenchMode {
    /// `module tb` that dumps a VCD when configured and calls `$finish`.
    Standalone,
    /// `module <name> (output reg done)` for instantiation inside a batch top.
    Embedded { module_name: String, tag: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Testbench {
    pub spec: TestbenchSpec,
    pub text: String,
}

/// Builds the paired testbench for `artifact` and renders it standalone,
/// dumping to `wave.vcd`.
pub fn emit_testbench(artifact: &VerilogArtifact, rng_seed: u64) -> Result<Testbench, EmitError> {
    let mut spec = TestbenchSpec::for_artifact(artifact, rng_seed, None)?;
    spec.vcd_path = Some("wave.vcd".into());
    let text = spec.render(&TestbenchMode::Standalone);
    Ok(Testbench { spec, text })
}

fn literal(value: u64, width: usize) -> String {
    format!("{width}'b{}", bit_string(value, width))
}

/// Exhaustive (state, input) plan for a next-state-only module.
pub fn comb_plan_for_fsm(fsm: &FsmGraph, encoding: &StateEncoding) -> Vec<CombStep> {
    fsm.pairs()
        .map(|(s, i)| {
            let next = fsm.next_state(s, i);
            CombStep {
                drive: vec![u64::from(i), encoding.codes[s]],
                expect: vec![Some(encoding.codes[next]), Some(u64::from(fsm.output(s, i)))],
            }
        })
        .collect()
}

/// Random cycles appended after full transition coverage: 2·n·2^w.
pub fn default_tail(fsm: &FsmGraph) -> usize {
    2 * fsm.num_states() * fsm.num_inputs()
}

/// Cycle plan for a clocked machine from a stimulus sequence. The expected
/// output is sampled after the edge with the cycle's input still applied.
pub fn seq_cycles(fsm: &FsmGraph, stimuli: &[Stimulus], reset_level: u64) -> Vec<SeqCycle> {
    let steps = simulate_fsm(fsm, stimuli).expect("stimulus is generated within range");
    stimuli
        .iter()
        .zip(steps.iter().skip(1))
        .map(|(st, after)| {
            let out = match fsm.kind() {
                FsmKind::Moore => fsm.output(after.state, 0),
                FsmKind::Mealy => fsm.output(after.state, st.input),
            };
            let reset = if st.reset { reset_level } else { 1 - reset_level };
            SeqCycle { drive: vec![reset, u64::from(st.input)], expect: vec![Some(u64::from(out))] }
        })
        .collect()
}

impl TestbenchSpec {
    /// Plan derived from the artifact's provenance. `tail` overrides the
    /// number of random cycles after coverage for clocked machines.
    pub fn for_artifact(artifact: &VerilogArtifact, rng_seed: u64, tail: Option<usize>) -> Result<Self, EmitError> {
        let inputs: Vec<Port> = artifact.inputs().cloned().collect();
        let checked: Vec<Port> = artifact.outputs().cloned().collect();
        let dut = artifact.module_name.clone();
        match &artifact.provenance {
            Provenance::Function(spec) => {
                let n = spec.num_vars();
                let steps = (0..1usize << n)
                    .map(|a| CombStep {
                        drive: (0..n).map(|v| ((a >> (n - 1 - v)) & 1) as u64).collect(),
                        expect: vec![match spec.cell(a) {
                            CellValue::One => Some(1),
                            CellValue::Zero => Some(0),
                            CellValue::DontCare => None,
                        }],
                    })
                    .collect();
                Ok(Self {
                    dut,
                    driven: inputs,
                    checked,
                    plan: StimulusPlan::Combinational { step_ns: COMB_STEP_NS, steps },
                    vcd_path: None,
                })
            }
            Provenance::Fsm { graph, encoding, options } => match options.interface {
                FsmInterface::NextStateOnly => Ok(Self {
                    dut,
                    driven: inputs,
                    checked,
                    plan: StimulusPlan::Combinational {
                        step_ns: COMB_STEP_NS,
                        steps: comb_plan_for_fsm(graph, encoding),
                    },
                    vcd_path: None,
                }),
                FsmInterface::Full => {
                    let tail = tail.unwrap_or_else(|| default_tail(graph));
                    let stimuli = covering_stimulus(graph, tail, rng_seed);
                    let cycles = seq_cycles(graph, &stimuli, options.reset.asserted_level());
                    let driven = inputs.into_iter().filter(|p| p.name != options.clock).collect();
                    Ok(Self {
                        dut,
                        driven,
                        checked,
                        plan: StimulusPlan::Sequential {
                            clock: options.clock.clone(),
                            period_ns: CLOCK_PERIOD_NS,
                            cycles,
                        },
                        vcd_path: None,
                    })
                }
            },
        }
    }

    pub fn clock(&self) -> Option<&str> {
        match &self.plan {
            StimulusPlan::Sequential { clock, .. } => Some(clock),
            StimulusPlan::Combinational { .. } => None,
        }
    }

    /// Signal order used for waveform tables: clock, driven ports, checked ports.
    pub fn signal_order(&self) -> Vec<String> {
        self.clock()
            .map(str::to_string)
            .into_iter()
            .chain(self.driven.iter().map(|p| p.name.clone()))
            .chain(self.checked.iter().map(|p| p.name.clone()))
            .collect()
    }

    pub fn check_count(&self) -> usize {
        let count = |e: &[Option<u64>]| e.iter().filter(|v| v.is_some()).count();
        match &self.plan {
            StimulusPlan::Combinational { steps, .. } => steps.iter().map(|s| count(&s.expect)).sum(),
            StimulusPlan::Sequential { cycles, .. } => cycles.iter().map(|c| count(&c.expect)).sum(),
        }
    }

    pub fn render(&self, mode: &TestbenchMode) -> String {
        let (module_line, tag, embedded) = match mode {
            TestbenchMode::Standalone => ("module tb;".to_string(), "tb".to_string(), false),
            TestbenchMode::Embedded { module_name, tag } => {
                (format!("module {module_name} (output reg done);"), tag.clone(), true)
            }
        };
        let mut t = String::new();
        t += "`timescale 1ns/1ps\n";
        t += &module_line;
        t += "\n";
        let decl = |p: &Port, kind: &str| {
            if p.width > 1 {
                format!("    {kind} [{}:0] {};\n", p.width - 1, p.name)
            } else {
                format!("    {kind} {};\n", p.name)
            }
        };
        if let Some(clk) = self.clock() {
            t += &format!("    reg {clk};\n");
        }
        for p in &self.driven {
            t += &decl(p, "reg");
        }
        for p in &self.checked {
            t += &decl(p, "wire");
        }
        t += "    integer checks;\n    integer failures;\n";
        let conns: Vec<String> = self
            .clock()
            .into_iter()
            .map(str::to_string)
            .chain(self.driven.iter().map(|p| p.name.clone()))
            .chain(self.checked.iter().map(|p| p.name.clone()))
            .map(|n| format!(".{n}({n})"))
            .collect();
        t += &format!("    {} dut ({});\n", self.dut, conns.join(", "));
        if let StimulusPlan::Sequential { clock, period_ns, .. } = &self.plan {
            t += &format!("    always #{} {clock} = ~{clock};\n", period_ns / 2);
        }
        t += "    initial begin\n        checks = 0;\n        failures = 0;\n";
        if embedded {
            t += "        done = 0;\n";
        } else if let Some(path) = &self.vcd_path {
            t += &format!("        $dumpfile(\"{path}\");\n        $dumpvars(1, tb);\n");
        }
        match &self.plan {
            StimulusPlan::Combinational { step_ns, steps } => {
                for (i, step) in steps.iter().enumerate() {
                    self.drive_lines(&mut t, &step.drive);
                    t += "        #1;\n";
                    self.check_lines(&mut t, &tag, i, &step.expect);
                    t += &format!("        #{};\n", step_ns - 1);
                }
            }
            StimulusPlan::Sequential { clock, cycles, .. } => {
                t += &format!("        {clock} = 0;\n");
                for (i, cycle) in cycles.iter().enumerate() {
                    self.drive_lines(&mut t, &cycle.drive);
                    t += &format!("        @(negedge {clock});\n");
                    self.check_lines(&mut t, &tag, i, &cycle.expect);
                }
            }
        }
        let _ = writeln!(t, "        $display(\"TB {tag} checks=%0d failures=%0d\", checks, failures);");
        if embedded {
            t += "        done = 1;\n";
        } else {
            t += "        if (failures == 0) $display(\"PASS\");\n        else $display(\"FAIL\");\n        $finish;\n";
        }
        t += "    end\nendmodule\n";
        t
    }

    fn drive_lines(&self, t: &mut String, drive: &[u64]) {
        let parts: Vec<String> =
            self.driven.iter().zip(drive).map(|(p, &v)| format!("{} = {};", p.name, literal(v, p.width))).collect();
        let _ = writeln!(t, "        {}", parts.join(" "));
    }

    fn check_lines(&self, t: &mut String, tag: &str, index: usize, expect: &[Option<u64>]) {
        for (p, e) in self.checked.iter().zip(expect) {
            let Some(v) = e else { continue };
            let lit = literal(*v, p.width);
            let _ = writeln!(
                t,
                "        checks = checks + 1; if ({n} !== {lit}) begin failures = failures + 1; $display(\"MISMATCH {tag} step={index} {n}=%b expected={lit}\", {n}); end",
                n = p.name
            );
        }
    }
}
