use std::collections::HashSet;

use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use vforge::boolean::{
    derive_sop, eval_sop, gray_sequence, render_kmap, sample_function_spec, sample_mutations, CellValue, FunctionSpec,
};
use vforge::eval::{extract_code, pass_at_k_exact, Extraction};
use vforge::forge::{
    code_fingerprint, forge_problem, fsm_fingerprint, function_fingerprint, repair_fingerprint, ForgeParams,
    ProblemKind,
};
use vforge::fsm::{
    encode_states, generate_fsm, render_edge_list, render_transition_table, simulate_fsm, EncodingScheme, FsmGraph,
    FsmKind, FsmOutputs, SignalNames, Stimulus, TableLabels,
};
use vforge::verilog::interp::{parse_module, run_testbench, Simulator};
use vforge::verilog::{
    emit_fsm_module, emit_sop_module, FsmEmitOptions, FsmInterface, FsmStyle, ResetStyle, TestbenchSpec,
    DEFAULT_MODULE_NAME,
};
use vforge::wave::{
    parse_vcd, recover_function, recover_transitions, sample_trace, validate_transitions, TraceKind,
    TransitionSignals, SAMPLE_STEP_NS,
};

fn kind_of(mealy: bool) -> FsmKind {
    if mealy {
        FsmKind::Mealy
    } else {
        FsmKind::Moore
    }
}

fn machine() -> impl Strategy<Value = FsmGraph> {
    (2usize..=8, 1u32..=2, any::<bool>(), any::<u64>())
        .prop_map(|(n, w, mealy, seed)| generate_fsm(n, w, kind_of(mealy), seed).unwrap())
}

fn small_machine() -> impl Strategy<Value = FsmGraph> {
    (2usize..=5, 1u32..=2, any::<bool>(), any::<u64>())
        .prop_map(|(n, w, mealy, seed)| generate_fsm(n, w, kind_of(mealy), seed).unwrap())
}

fn function() -> impl Strategy<Value = FunctionSpec> {
    (3usize..=4, any::<u64>(), 0.0f64..0.5).prop_map(|(n, seed, dc)| sample_function_spec(n, seed, dc).unwrap())
}

/// Reset-preserving isomorphism by brute force over permutations.
fn isomorphic(a: &FsmGraph, b: &FsmGraph) -> bool {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    if a.num_states() != b.num_states() || a.input_width != b.input_width || a.kind() != b.kind() {
        return false;
    }
    perms(a.num_states()).into_iter().any(|phi| {
        phi[a.reset_state] == b.reset_state
            && a.pairs().all(|(s, i)| {
                phi[a.next_state(s, i)] == b.next_state(phi[s], i) && a.output(s, i) == b.output(phi[s], i)
            })
    })
}

// Test-only readers for the two machine formats.

fn parse_table(text: &str, input_width: u32, reset: &str) -> FsmGraph {
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.trim_start_matches("// ").split(" | ").collect())
        .collect();
    let names: Vec<String> = rows.iter().map(|r| r[0].to_string()).collect();
    let idx = |n: &str| names.iter().position(|x| x == n).expect("known state");
    let transitions = rows.iter().map(|r| r[1].split(", ").map(idx).collect()).collect();
    let bits = |s: &str| s.split(", ").map(|b| b == "1").collect::<Vec<bool>>();
    let outputs = if rows[0][2].contains(',') {
        FsmOutputs::Mealy(rows.iter().map(|r| bits(r[2])).collect())
    } else {
        FsmOutputs::Moore(rows.iter().map(|r| bits(r[2])[0]).collect())
    };
    FsmGraph::new(names.clone(), idx(reset), input_width, transitions, outputs, 0).unwrap()
}

fn parse_edges(text: &str, kind: FsmKind, input_width: u32, reset: &str) -> FsmGraph {
    struct Edge {
        src: String,
        input: u32,
        out: bool,
        dst: String,
    }
    let edges: Vec<Edge> = text
        .lines()
        .map(|l| {
            let l = l.trim_start_matches("// ");
            let (lhs, dst) = l.split_once("--> ").unwrap();
            let (head, label) = lhs.split_once(" --").unwrap();
            let (src, moore_out) = match head.split_once(" (z=") {
                Some((s, o)) => (s, Some(o.starts_with('1'))),
                None => (head, None),
            };
            let (cond, mealy_out) = match label.split_once(" (z=") {
                Some((c, o)) => (c, Some(o.starts_with('1'))),
                None => (label, None),
            };
            let input = u32::from_str_radix(cond.trim_start_matches("x="), 2).unwrap();
            Edge { src: src.into(), input, out: moore_out.or(mealy_out).unwrap(), dst: dst.into() }
        })
        .collect();
    let mut names: Vec<String> = Vec::new();
    for e in &edges {
        if !names.contains(&e.src) {
            names.push(e.src.clone());
        }
    }
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    let slots = 1usize << input_width;
    let mut trans = vec![vec![usize::MAX; slots]; names.len()];
    let mut outs = vec![vec![false; slots]; names.len()];
    for e in &edges {
        trans[idx(&e.src)][e.input as usize] = idx(&e.dst);
        outs[idx(&e.src)][e.input as usize] = e.out;
    }
    let outputs = match kind {
        FsmKind::Moore => FsmOutputs::Moore(outs.iter().map(|o| o[0]).collect()),
        FsmKind::Mealy => FsmOutputs::Mealy(outs),
    };
    FsmGraph::new(names.clone(), idx(reset), input_width, trans, outputs, 0).unwrap()
}

fn comb_outputs(art_text: &str, fsm: &FsmGraph, codes: &[u64]) -> Vec<(u64, bool)> {
    let m = parse_module(art_text).unwrap();
    let mut sim = Simulator::new(&m).unwrap();
    fsm.pairs()
        .map(|(s, i)| {
            sim.set_inputs(&[("x", i as u64), ("state", codes[s])]).unwrap();
            let next = sim.get("next_state").unwrap().known_value().unwrap();
            let z = sim.get("z").unwrap().known_value().unwrap() == 1;
            (next, z)
        })
        .collect()
}

fn binomial_f(n: u64, k: u64) -> BigRational {
    BigRational::from_integer(vforge::eval::binomial(n, k).into())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sop_agrees_with_cells(spec in function()) {
        let sop = derive_sop(&spec);
        for x in 0..1usize << spec.num_vars() {
            let v = eval_sop(&sop, &spec.assignment_bits(x)).unwrap();
            prop_assert_eq!(v, spec.cell(x) == CellValue::One, "assignment {}", x);
        }
    }

    #[test]
    fn kmap_readback_after_mutations(spec in function(), mseed in any::<u64>(), swaps in 0usize..6) {
        let muts = sample_mutations(spec.num_vars(), mseed, swaps);
        let view = render_kmap(&spec, &muts).unwrap();
        prop_assert_eq!(&view.mutation_log, &muts);
        let mut seen = HashSet::new();
        for (r, &rl) in view.row_labels.iter().enumerate() {
            for (c, &cl) in view.col_labels.iter().enumerate() {
                let a = view.assignment_at(rl, cl);
                prop_assert!(seen.insert(a));
                prop_assert_eq!(view.grid[r][c], spec.cell(a));
            }
        }
        prop_assert_eq!(seen.len(), 1 << spec.num_vars());
    }

    #[test]
    fn samplers_and_renderers_are_seed_deterministic(seed in any::<u64>(), k in 0usize..6) {
        let kind = ProblemKind::ALL[k];
        let params = ForgeParams::default();
        let a = serde_json::to_string(&forge_problem(kind, &params, seed).unwrap().to_record("r")).unwrap();
        let b = serde_json::to_string(&forge_problem(kind, &params, seed).unwrap().to_record("r")).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(sample_function_spec(4, seed, 0.15).unwrap(), sample_function_spec(4, seed, 0.15).unwrap());
        prop_assert_eq!(generate_fsm(5, 2, FsmKind::Mealy, seed).unwrap(), generate_fsm(5, 2, FsmKind::Mealy, seed).unwrap());
    }

    #[test]
    fn machines_are_total_and_reachable(fsm in machine()) {
        let n = fsm.num_states();
        prop_assert_eq!(fsm.pairs().count(), n << fsm.input_width);
        prop_assert!(fsm.transitions.iter().all(|row| row.len() == fsm.num_inputs() && row.iter().all(|&t| t < n)));
        let mut r = fsm.reachable();
        r.sort_unstable();
        prop_assert_eq!(r, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn encodings_are_injective(fsm in machine()) {
        for scheme in [EncodingScheme::Binary, EncodingScheme::OneHot] {
            let enc = encode_states(&fsm, scheme);
            let distinct: HashSet<u64> = enc.codes.iter().copied().collect();
            prop_assert_eq!(distinct.len(), fsm.num_states());
            prop_assert!(enc.codes.iter().all(|&c| c >> enc.width == 0));
            if scheme == EncodingScheme::OneHot {
                prop_assert!(enc.codes.iter().all(|c| c.count_ones() == 1));
            }
        }
    }

    #[test]
    fn table_and_edge_list_roundtrip(fsm in machine()) {
        let reset = fsm.state_names[fsm.reset_state].clone();
        let table = render_transition_table(&fsm, TableLabels::Names);
        let from_table = parse_table(&table, fsm.input_width, &reset);
        prop_assert_eq!(from_table.kind(), fsm.kind());
        let edges = render_edge_list(&fsm, &SignalNames::default());
        let from_edges = parse_edges(&edges, fsm.kind(), fsm.input_width, &reset);
        prop_assert_eq!(fsm_fingerprint(&from_edges), fsm_fingerprint(&fsm));
        prop_assert_eq!(&from_edges.state_names, &fsm.state_names);
        prop_assert_eq!(fsm_fingerprint(&from_table), fsm_fingerprint(&fsm));
        prop_assert_eq!(&from_table.state_names, &fsm.state_names);
    }

    #[test]
    fn function_fingerprint_ignores_names_and_views(spec in function(), mseed in any::<u64>()) {
        let fp = function_fingerprint(&spec);
        let renamed = spec.with_var_names(["p", "q", "r", "s"][..spec.num_vars()].iter().map(|s| s.to_string()).collect()).unwrap();
        prop_assert_eq!(function_fingerprint(&renamed), fp);
        let view = render_kmap(&spec, &sample_mutations(spec.num_vars(), mseed, 4)).unwrap();
        let mut cells = vec![CellValue::Zero; 1 << spec.num_vars()];
        for (r, &rl) in view.row_labels.iter().enumerate() {
            for (c, &cl) in view.col_labels.iter().enumerate() {
                cells[view.assignment_at(rl, cl)] = view.grid[r][c];
            }
        }
        let back = FunctionSpec::new(view.var_names.clone(), cells, 0).unwrap();
        prop_assert_eq!(function_fingerprint(&back), fp);
    }

    #[test]
    fn function_fingerprint_sees_every_cell(spec in function(), cell in 0usize..16, to in 0u8..2) {
        let cell = cell % (1 << spec.num_vars());
        let mut cells = spec.cells().to_vec();
        let old = cells[cell];
        cells[cell] = [CellValue::Zero, CellValue::One, CellValue::DontCare].into_iter().filter(|&v| v != old).nth(to as usize).unwrap();
        let changed = FunctionSpec::new(spec.var_names().to_vec(), cells, 0).unwrap();
        prop_assert_ne!(function_fingerprint(&changed), function_fingerprint(&spec));
    }

    #[test]
    fn fsm_fingerprint_ignores_names_and_order(fsm in machine(), pseed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order: Vec<usize> = (0..fsm.num_states()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(pseed));
        let permuted = fsm.permute_states(&order).unwrap();
        let names = (0..fsm.num_states()).map(|i| format!("S{i}")).collect();
        prop_assert_eq!(fsm_fingerprint(&permuted.with_state_names(names).unwrap()), fsm_fingerprint(&fsm));
    }

    #[test]
    fn fsm_fingerprint_sees_every_change(fsm in small_machine(), slot in any::<prop::sample::Index>(), target in any::<prop::sample::Index>(), flip in any::<bool>()) {
        let pairs: Vec<(usize, u32)> = fsm.pairs().collect();
        let (s, i) = pairs[slot.index(pairs.len())];
        let mut changed = fsm.clone();
        if flip {
            match &mut changed.outputs {
                FsmOutputs::Moore(o) => o[s] = !o[s],
                FsmOutputs::Mealy(o) => o[s][i as usize] = !o[s][i as usize],
            }
        } else {
            let others: Vec<usize> = (0..fsm.num_states()).filter(|&t| t != fsm.next_state(s, i)).collect();
            changed.transitions[s][i as usize] = others[target.index(others.len())];
        }
        // A rewired edge can strand a state; such graphs are not valid machines.
        prop_assume!(changed.validate().is_ok());
        let same = fsm_fingerprint(&changed) == fsm_fingerprint(&fsm);
        prop_assert_eq!(same, isomorphic(&changed, &fsm));
    }

    #[test]
    fn code_fingerprints_track_code_not_layout(body in "[a-z]{1,8}", comment in "[a-z ]{0,20}") {
        let a = format!("module m;\n  wire {body};\nendmodule\n");
        let b = format!("module m; // {comment}\nwire   {body};  /* {comment} */ endmodule");
        prop_assert_eq!(code_fingerprint(&a), code_fingerprint(&b));
        prop_assert_ne!(code_fingerprint(&a), code_fingerprint(&format!("module m; wire {body}x; endmodule")));
        let c = format!("module m; wire {body}, y; endmodule");
        prop_assert_eq!(repair_fingerprint(&a, &c), repair_fingerprint(&b, &c));
        prop_assert_ne!(repair_fingerprint(&a, &c), repair_fingerprint(&c, &a));
    }

    #[test]
    fn extract_code_is_total(text in ".{0,400}") {
        match extract_code(&text, "module top_module(input a, output b);") {
            Extraction::Code(c) => prop_assert!(c.contains("endmodule")),
            Extraction::Empty => {}
        }
    }

    #[test]
    fn extract_code_total_on_verilogish_text(parts in prop::collection::vec(prop::sample::select(vec![
        "module ", "top_module", "(", ")", ";", "endmodule", "```", "```verilog", "\n", " ", "assign", "// x", "#(", "foo",
    ]), 0..40)) {
        let text: String = parts.concat();
        if let Extraction::Code(c) = extract_code(&text, "module top_module;") {
            prop_assert!(c.contains("endmodule"));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gray_sequence_is_a_hamiltonian_cycle(m in 1usize..=4) {
        let seq = gray_sequence(m).unwrap();
        prop_assert_eq!(seq.len(), 1 << m);
        prop_assert_eq!(seq.iter().collect::<HashSet<_>>().len(), seq.len());
        for k in 0..seq.len() {
            let (a, b) = (&seq[k], &seq[(k + 1) % seq.len()]);
            prop_assert_eq!(a.chars().zip(b.chars()).filter(|(x, y)| x != y).count(), 1);
        }
    }

    #[test]
    fn pass_at_k_is_monotone(n in 1u64..40, c in 0u64..40, k in 1u64..40) {
        let c = c.min(n);
        let k = k.min(n);
        let p = pass_at_k_exact(n, c, k).unwrap();
        prop_assert!(p >= BigRational::zero() && p <= BigRational::one());
        if k < n {
            prop_assert!(pass_at_k_exact(n, c, k + 1).unwrap() >= p);
        }
        if c < n {
            prop_assert!(pass_at_k_exact(n, c + 1, k).unwrap() >= p);
        }
    }

    #[test]
    fn pass_at_k_endpoints(n in 1u64..60, c in 0u64..60) {
        let c = c.min(n);
        prop_assert_eq!(pass_at_k_exact(n, c, n).unwrap() == BigRational::one(), c >= 1);
        prop_assert_eq!(pass_at_k_exact(n, c, 1).unwrap(), BigRational::new(c.into(), n.into()));
    }

    #[test]
    fn pass_at_k_product_identity((n, c, k) in (1u64..60).prop_flat_map(|n| (Just(n), 1..=n))
        .prop_flat_map(|(n, k)| (Just(n), 0..=n - k, Just(k))))
    {
        let prod = (0..k).fold(BigRational::one(), |acc, i| acc * BigRational::new((n - c - i).into(), (n - i).into()));
        prop_assert_eq!(pass_at_k_exact(n, c, k).unwrap(), BigRational::one() - prod);
        let ratio = binomial_f(n - c, k) / binomial_f(n, k);
        prop_assert_eq!(pass_at_k_exact(n, c, k).unwrap(), BigRational::one() - ratio);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn emission_styles_agree_on_every_pair(fsm in machine()) {
        let onehot = encode_states(&fsm, EncodingScheme::OneHot);
        let binary = encode_states(&fsm, EncodingScheme::Binary);
        let expect: Vec<(usize, bool)> = fsm.pairs().map(|(s, i)| (fsm.next_state(s, i), fsm.output(s, i))).collect();
        for (style, enc) in [(FsmStyle::OutEdge, &binary), (FsmStyle::OutEdge, &onehot), (FsmStyle::InEdge, &onehot)] {
            let opts = FsmEmitOptions { style, interface: FsmInterface::NextStateOnly, ..Default::default() };
            let art = emit_fsm_module(&fsm, enc, &opts, DEFAULT_MODULE_NAME).unwrap();
            let got = comb_outputs(&art.module_text(), &fsm, &enc.codes);
            let decoded: Vec<(usize, bool)> = got.iter().map(|&(code, z)| (enc.state_of(code).unwrap(), z)).collect();
            prop_assert_eq!(&decoded, &expect, "{:?} {:?}", style, enc.scheme);
        }
    }

    #[test]
    fn clocked_emissions_track_the_reference_walk(fsm in machine(), seed in any::<u64>(), r in 0usize..4) {
        let reset = [ResetStyle::sync_high(), ResetStyle::sync_low(), ResetStyle::async_high(), ResetStyle::async_low()][r].clone();
        let walk: Vec<Stimulus> = vforge::fsm::covering_stimulus(&fsm, 8, seed);
        prop_assert!(simulate_fsm(&fsm, &walk).is_ok());
        for (style, scheme) in [(FsmStyle::OutEdge, EncodingScheme::Binary), (FsmStyle::InEdge, EncodingScheme::OneHot)] {
            let opts = FsmEmitOptions { style, reset: reset.clone(), ..Default::default() };
            let art = emit_fsm_module(&fsm, &encode_states(&fsm, scheme), &opts, DEFAULT_MODULE_NAME).unwrap();
            let tb = TestbenchSpec::for_artifact(&art, seed, None).unwrap();
            let run = run_testbench(&parse_module(&art.module_text()).unwrap(), &tb, false).unwrap();
            prop_assert!(run.passed(), "{:?}", run.mismatches);
        }
    }

    #[test]
    fn combinational_waves_conserve_the_function(spec in function(), seed in any::<u64>()) {
        let names: Vec<String> = vforge::boolean::default_var_names(spec.num_vars());
        let art = emit_sop_module(&derive_sop(&spec), &spec, &names, "q", DEFAULT_MODULE_NAME).unwrap();
        let tb = TestbenchSpec::for_artifact(&art, seed, None).unwrap();
        let run = run_testbench(&parse_module(&art.module_text()).unwrap(), &tb, true).unwrap();
        let vcd = parse_vcd(&run.recording.unwrap().to_vcd("tb")).unwrap();
        let mut cols: Vec<&str> = names.iter().map(String::as_str).collect();
        cols.push("q");
        let trace = sample_trace(&vcd, &cols, SAMPLE_STEP_NS, None, TraceKind::Combinational).unwrap();
        let f = recover_function(&trace, &cols[..spec.num_vars()], "q").unwrap();
        prop_assert!(f.is_complete());
        prop_assert!(f.disagreements(&spec).is_empty());
    }

    #[test]
    fn sequential_waves_conserve_the_machine(n in 2usize..=6, mealy in any::<bool>(), seed in any::<u64>(), r in 0usize..4) {
        let fsm = generate_fsm(n, 1, kind_of(mealy), seed).unwrap();
        let reset = [ResetStyle::sync_high(), ResetStyle::sync_low(), ResetStyle::async_high(), ResetStyle::async_low()][r].clone();
        let opts = FsmEmitOptions { reset: reset.clone(), ..Default::default() };
        let art = emit_fsm_module(&fsm, &encode_states(&fsm, EncodingScheme::Binary), &opts, DEFAULT_MODULE_NAME).unwrap();
        let tb = TestbenchSpec::for_artifact(&art, seed, None).unwrap();
        let run = run_testbench(&parse_module(&art.module_text()).unwrap(), &tb, true).unwrap();
        let vcd = parse_vcd(&run.recording.unwrap().to_vcd("tb")).unwrap();
        let trace = sample_trace(&vcd, &["clk", reset.name.as_str(), "x", "z"], SAMPLE_STEP_NS, None, TraceKind::Sequential).unwrap();
        let sig = TransitionSignals { clock: "clk", reset: &reset.name, reset_active_high: reset.active_high, input: "x", output: "z" };
        let check = validate_transitions(&fsm, &recover_transitions(&trace, &sig).unwrap());
        prop_assert!(check.consistent(), "{:?}", check.mismatches);
        prop_assert!(check.complete());
    }
}

#[test]
fn isomorphism_oracle_sanity() {
    let fsm = generate_fsm(4, 1, FsmKind::Moore, 3).unwrap();
    let p = fsm.permute_states(&[3, 1, 0, 2]).unwrap();
    assert!(isomorphic(&fsm, &p));
    let mut other = fsm.clone();
    if let FsmOutputs::Moore(o) = &mut other.outputs {
        o.iter_mut().for_each(|b| *b = !*b);
    }
    assert!(!isomorphic(&fsm, &other));
}
