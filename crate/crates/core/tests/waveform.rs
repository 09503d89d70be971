use vforge::boolean::{default_var_names, derive_sop, sample_function_spec};
use vforge::fsm::{encode_states, generate_fsm, EncodingScheme, FsmKind};
use vforge::sim::{run_batch, SimulatorConfig, Simulator};
use vforge::verilog::interp::{parse_module, run_testbench};
use vforge::verilog::{emit_fsm_module, emit_sop_module, FsmEmitOptions, ResetStyle, TestbenchSpec, DEFAULT_MODULE_NAME};
use vforge::wave::{
    parse_vcd, recover_function, recover_transitions, sample_trace, validate_transitions, TraceKind,
    TransitionSignals, SAMPLE_STEP_NS,
};

#[test]
fn interpreter_traces_recover_the_source_function() {
    for seed in 0..30 {
        let spec = sample_function_spec(4, seed, 0.15).unwrap();
        let names = default_var_names(4);
        let art = emit_sop_module(&derive_sop(&spec), &spec, &names, "q", DEFAULT_MODULE_NAME).unwrap();
        let tb = TestbenchSpec::for_artifact(&art, seed, None).unwrap();
        let run = run_testbench(&parse_module(&art.module_text()).unwrap(), &tb, true).unwrap();
        let vcd = parse_vcd(&run.recording.unwrap().to_vcd("tb")).unwrap();
        let trace = sample_trace(&vcd, &["a", "b", "c", "d", "q"], SAMPLE_STEP_NS, None, TraceKind::Combinational).unwrap();
        assert_eq!(trace.rows(), 16);
        let f = recover_function(&trace, &["a", "b", "c", "d"], "q").unwrap();
        assert!(f.is_complete());
        assert!(f.disagreements(&spec).is_empty());
    }
}

#[test]
fn interpreter_traces_recover_the_source_machine() {
    let resets = [ResetStyle::sync_high(), ResetStyle::async_high(), ResetStyle::async_low()];
    for seed in 0..30u64 {
        let kind = if seed % 2 == 0 { FsmKind::Moore } else { FsmKind::Mealy };
        let fsm = generate_fsm(4 + 2 * (seed as usize % 2), 1, kind, seed).unwrap();
        let enc = encode_states(&fsm, EncodingScheme::Binary);
        let reset = resets[seed as usize % 3].clone();
        let opts = FsmEmitOptions { reset: reset.clone(), ..Default::default() };
        let art = emit_fsm_module(&fsm, &enc, &opts, DEFAULT_MODULE_NAME).unwrap();
        let tb = TestbenchSpec::for_artifact(&art, seed, None).unwrap();
        let run = run_testbench(&parse_module(&art.module_text()).unwrap(), &tb, true).unwrap();
        assert!(run.passed());
        let vcd = parse_vcd(&run.recording.unwrap().to_vcd("tb")).unwrap();
        let cols = ["clk", reset.name.as_str(), "x", "z"];
        let trace = sample_trace(&vcd, &cols, SAMPLE_STEP_NS, None, TraceKind::Sequential).unwrap();
        let sig = TransitionSignals {
            clock: "clk",
            reset: &reset.name,
            reset_active_high: reset.active_high,
            input: "x",
            output: "z",
        };
        let obs = recover_transitions(&trace, &sig).unwrap();
        let check = validate_transitions(&fsm, &obs);
        assert!(check.consistent(), "{:?}", check.mismatches);
        assert!(check.complete());
    }
}

#[test]
fn simulator_traces_recover_the_source_machine() {
    let Ok(cfg) = SimulatorConfig::detect() else { return };
    let sim = Simulator::new(cfg);
    let mut items = Vec::new();
    let mut machines = Vec::new();
    for seed in 0..4u64 {
        let kind = if seed % 2 == 0 { FsmKind::Moore } else { FsmKind::Mealy };
        let fsm = generate_fsm(4, 1, kind, seed).unwrap();
        let enc = encode_states(&fsm, EncodingScheme::OneHot);
        let art = emit_fsm_module(&fsm, &enc, &FsmEmitOptions::default(), DEFAULT_MODULE_NAME).unwrap();
        let tb = TestbenchSpec::for_artifact(&art, seed, None).unwrap();
        items.push((art, tb));
        machines.push(fsm);
    }
    let verdicts = run_batch(&sim, &items, true).unwrap();
    for (v, fsm) in verdicts.iter().zip(&machines) {
        assert!(v.passed());
        let vcd = parse_vcd(v.vcd.as_ref().unwrap()).unwrap();
        let sel: Vec<String> = ["clk", "reset", "x", "z"].iter().map(|s| format!("{}.{s}", v.scope)).collect();
        let sel: Vec<&str> = sel.iter().map(String::as_str).collect();
        let trace = sample_trace(&vcd, &sel, SAMPLE_STEP_NS, None, TraceKind::Sequential).unwrap();
        let sig = TransitionSignals { clock: "clk", reset: "reset", reset_active_high: true, input: "x", output: "z" };
        let check = validate_transitions(fsm, &recover_transitions(&trace, &sig).unwrap());
        assert!(check.consistent(), "{:?}", check.mismatches);
        assert!(check.complete());
    }
}
