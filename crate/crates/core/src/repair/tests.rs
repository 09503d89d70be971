use std::collections::HashSet;

use super::*;
use crate::forge::{code_fingerprint, normalize_code, FingerprintDb, BENCHMARK_PREFIX};
use crate::judge::Functional;
use crate::provider::{ResponseScript, ScriptRule, ScriptedFailure, ScriptedProvider};

const SHIFT_OK: &str = "module top_module(input clk, input load, input [3:0] d, output reg [3:0] q);\n  always @(posedge clk) if (load) q <= d; else q <= {1'b0, q[3:1]};\nendmodule\n";
const SHIFT_BAD: &str = "module top_module(input clk, input load, input [3:0] d, output reg [3:0] q);\n  always @(posedge clk) if (load) q <= d; else q <= {q[2:0], 1'b0};\nendmodule\n";
const CAT_OK: &str = "module top_module(input [7:0] a, input [7:0] b, output [15:0] y);\n  assign y = {a, b};\nendmodule\n";
const CAT_BAD: &str = "module top_module(input [7:0] a, input [7:0] b, output [15:0] y);\n  assign y = {b, a};\nendmodule\n";
const COUNTER: &str = "module counter_up(input clk, input rst, output reg [3:0] q);\n  always @(posedge clk) if (rst) q <= 4'd0; else q <= q + 1;\nendmodule\n";
const COUNTER_BAD: &str = "module counter_up(input clk, input rst, output reg [3:0] q);\n  always @(posedge clk) if (rst) q <= 4'd3; else q <= q + 1;\nendmodule\n";

const SHIFT_REPORT: &str = "Error Type: shifting operation\n\nCategory: Sequential: shift registers\n\nDescription:\nThe register shifts left instead of right.\n1. Find the shift.\n2. Shift a zero in at the top.\n";
const CAT_REPORT: &str = "Error Type: Incorrect vector concatenation\nCategory: Combinatorial: wiring\nDescription:\nThe halves are swapped.\n1. Put a first.\n";

/// Passes code whose normalized text is listed; anything without
/// `endmodule` fails to compile.
struct ListJudge {
    passing: HashSet<String>,
}

impl ListJudge {
    fn new(passing: &[&str]) -> Self {
        Self { passing: passing.iter().map(|c| normalize_code(c)).collect() }
    }
}

impl CodeJudge for ListJudge {
    fn judge(&self, code: &str, _tb: &Testbench) -> Result<Judgement, JudgeError> {
        let syntax_ok = self.syntax_ok(code)?;
        let pass = self.passing.contains(&normalize_code(code));
        Ok(Judgement {
            syntax_ok,
            functional: syntax_ok.then_some(if pass { Functional::Pass } else { Functional::Fail }),
            log: if pass { "Mismatches: 0".into() } else { "Mismatches: 4".into() },
        })
    }

    fn syntax_ok(&self, code: &str) -> Result<bool, JudgeError> {
        Ok(code.contains("endmodule"))
    }
}

fn rule(contains: &[&str], response: &str) -> ScriptRule {
    ScriptRule {
        contains: contains.iter().map(|s| s.to_string()).collect(),
        pattern: None,
        response: Some(response.to_string()),
        fail: None,
    }
}

fn fenced(code: &str) -> String {
    format!("Here is the fix:\n```verilog\n{code}```\n")
}

fn injection_answer(desc: &str, bad: &str, hint: &str, good: &str) -> String {
    format!("**Input:**\n{desc}\n\nErroneous Implementation:\n```verilog\n{bad}```\n\nHints for Fixing:\n{hint}\n\n**Output:**\n```verilog\n{good}```\n")
}

struct Fixture {
    _dir: tempfile::TempDir,
    pairs: Vec<CodePair>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let tb = dir.path().join("tb.v");
    fs::write(&tb, "module tb;\n  top_module dut();\nendmodule\n").unwrap();
    let pair = |id: &str, problem: &str, correct: &str, erroneous: &str| CodePair {
        id: id.into(),
        problem: problem.into(),
        correct: correct.into(),
        erroneous: erroneous.into(),
        testbench_path: tb.clone(),
    };
    Fixture {
        pairs: vec![
            pair("shift4", "Build a 4-bit right shift register with load.", SHIFT_OK, SHIFT_BAD),
            pair("concat16", "Concatenate a and b with a in the upper half.", CAT_OK, CAT_BAD),
        ],
        _dir: dir,
    }
}

fn verified(f: &Fixture, judge: &dyn CodeJudge) -> Vec<VerifiedPair> {
    f.pairs.iter().map(|p| verify_pair(p.clone(), judge).unwrap().unwrap()).collect()
}

/// Shift report validates; the concatenation report's fix is the broken code.
fn script() -> ResponseScript {
    ResponseScript {
        rules: vec![
            rule(&["Generate a detail error report", "right shift register"], SHIFT_REPORT),
            rule(&["Generate a detail error report", "Concatenate a and b"], CAT_REPORT),
            rule(&["Now fix the erroneous implementation", "shifting operation"], &fenced(SHIFT_OK)),
            rule(&["Now fix the erroneous implementation", "concatenation"], &fenced(CAT_BAD)),
            rule(&["Inject the above error", "shifting operation", "module counter_up"], "Injection not possible: the counter has no shift."),
            rule(
                &["Inject the above error", "shifting operation", "module sreg"],
                &injection_answer(
                    "A shift register that should shift right.",
                    "module sreg(input clk, input si, output [3:0] q);\n  reg [3:0] r;\n  always @(posedge clk) r <= {r[2:0], si};\n  assign q = r;\nendmodule\n",
                    "1. Fix the shifting logic so bits move right.",
                    "module sreg(input clk, input si, output [3:0] q);\n  reg [3:0] r;\n  always @(posedge clk) r <= {si, r[3:1]};\n  assign q = r;\nendmodule\n",
                ),
            ),
            rule(
                &["Inject the above error", "shifting operation", "module mux"],
                &injection_answer(
                    "A truncated mux.",
                    "module mux(input s, input a, input b, output y);\n  assign y = s ? a : b;\n",
                    "1. Finish the module.",
                    "module mux(input s, input a, input b, output y);\n  assign y = s ? b : a;\nendmodule\n",
                ),
            ),
        ],
        default: None,
    }
}

fn seeds() -> Vec<SeedCode> {
    [("counter_up", COUNTER), ("sreg", "module sreg(input clk, input si, output [3:0] q);\n  reg [3:0] r;\n  always @(posedge clk) r <= {si, r[3:1]};\n  assign q = r;\nendmodule\n"), ("mux", "module mux(input s, input a, input b, output y);\n  assign y = s ? b : a;\nendmodule\n")]
        .into_iter()
        .map(|(id, code)| SeedCode { id: id.into(), code: code.into() })
        .collect()
}

fn cfg() -> RepairConfig {
    RepairConfig { seed: 11, ..RepairConfig::default() }
}

#[test]
fn ingestion_checks_both_sides() {
    let f = fixture();
    let judge = ListJudge::new(&[SHIFT_OK, CAT_OK]);
    assert_eq!(verified(&f, &judge).len(), 2);
    let flipped = CodePair { correct: SHIFT_BAD.into(), erroneous: SHIFT_OK.into(), ..f.pairs[0].clone() };
    assert!(matches!(verify_pair(flipped, &judge).unwrap(), Err(PairRejection::CorrectFails(_))));
    let both_pass = CodePair { erroneous: CAT_OK.into(), ..f.pairs[1].clone() };
    assert_eq!(verify_pair(both_pass, &judge).unwrap().unwrap_err(), PairRejection::ErroneousPasses);
    let missing = CodePair { testbench_path: "/nonexistent/tb.v".into(), ..f.pairs[0].clone() };
    assert!(matches!(verify_pair(missing, &judge).unwrap(), Err(PairRejection::Testbench(_))));
}

#[test]
fn load_pairs_resolves_testbench_paths() {
    let dir = tempfile::tempdir().unwrap();
    let line = serde_json::json!({"id": "p", "problem": "x", "correct": "c", "erroneous": "e", "testbench_path": "tbs/p.v"});
    fs::write(dir.path().join("pairs.jsonl"), format!("{line}\n\n")).unwrap();
    let pairs = load_pairs(&dir.path().join("pairs.jsonl")).unwrap();
    assert_eq!(pairs[0].testbench_path, dir.path().join("tbs/p.v"));
    fs::write(dir.path().join("bad.jsonl"), "{\"id\": \"p\", \"extra\": 1}\n").unwrap();
    assert!(matches!(load_pairs(&dir.path().join("bad.jsonl")), Err(RepairError::Parse { line: 1, .. })));
}

#[test]
fn report_fields_come_from_the_answer() {
    let f = fixture();
    let judge = ListJudge::new(&[SHIFT_OK, CAT_OK]);
    let v = verified(&f, &judge);
    let provider = ScriptedProvider::new(script()).unwrap();
    let r = build_error_report(&v[0], &provider, &cfg()).unwrap();
    assert_eq!((r.error_type.as_str(), r.category.as_str()), ("shifting operation", "Sequential: shift registers"));
    assert!(r.description.ends_with("Shift a zero in at the top.") && !r.validated);
    let r = build_error_report(&v[1], &provider, &cfg()).unwrap();
    assert_eq!(r.category, "Combinatorial: wiring");
    let sent = &provider.requests()[0].user;
    assert!(sent.contains(SHIFT_BAD.trim_end()) && sent.contains(SHIFT_OK.trim_end()) && sent.ends_with("Output:\n"));
}

#[test]
fn unreadable_report_gets_one_retry() {
    let f = fixture();
    let judge = ListJudge::new(&[SHIFT_OK, CAT_OK]);
    let v = verified(&f, &judge);
    let retry_ok = ScriptedProvider::new(ResponseScript {
        rules: vec![rule(&["Answer again using exactly these headings"], SHIFT_REPORT)],
        default: Some("The code is wrong somewhere.".into()),
    })
    .unwrap();
    assert_eq!(build_error_report(&v[0], &retry_ok, &cfg()).unwrap().error_type, "shifting operation");
    assert_eq!(retry_ok.calls(), 2);
    assert_eq!(retry_ok.requests()[1].request_id, "report:shift4:1");

    let never = ScriptedProvider::new(ResponseScript { rules: vec![], default: Some("no idea".into()) }).unwrap();
    assert!(matches!(build_error_report(&v[0], &never, &cfg()), Err(RepairError::Unparseable { .. })));
    assert_eq!(never.calls(), 2);

    let down = ScriptedProvider::new(ResponseScript {
        rules: vec![ScriptRule { contains: vec![], pattern: None, response: None, fail: Some(ScriptedFailure::Timeout) }],
        default: None,
    })
    .unwrap();
    assert!(build_error_report(&v[0], &down, &cfg()).unwrap_err().is_item_level());
}

#[test]
fn self_consistency_accepts_working_fix_only() {
    let f = fixture();
    let judge = ListJudge::new(&[SHIFT_OK, CAT_OK]);
    let v = verified(&f, &judge);
    let provider = ScriptedProvider::new(script()).unwrap();
    let good = build_error_report(&v[0], &provider, &cfg()).unwrap();
    let ok = self_consistency_check(good, &v[0], &provider, &judge, &cfg()).unwrap().unwrap();
    assert!(ok.report().validated);
    let bad = build_error_report(&v[1], &provider, &cfg()).unwrap();
    let rej = self_consistency_check(bad, &v[1], &provider, &judge, &cfg()).unwrap().unwrap_err();
    assert!(!rej.report.validated && rej.verdict.starts_with("FAIL"));
    assert_eq!(rej.fix.as_deref().map(normalize_code), Some(normalize_code(CAT_BAD)));
}

#[test]
fn injection_builds_record_or_skips() {
    let f = fixture();
    let judge = ListJudge::new(&[SHIFT_OK, CAT_OK]);
    let v = verified(&f, &judge);
    let provider = ScriptedProvider::new(script()).unwrap();
    let rep = build_error_report(&v[0], &provider, &cfg()).unwrap();
    let ok = self_consistency_check(rep, &v[0], &provider, &judge, &cfg()).unwrap().unwrap();
    let seeds = seeds();
    let InjectOutcome::Record(r) = inject_error(&ok, &seeds[1], &provider, &cfg()).unwrap() else { panic!() };
    assert_eq!(r.hints, "1. Fix the shifting logic so bits move right.");
    assert!(r.erroneous.contains("{r[2:0], si}") && r.repaired.contains("{si, r[3:1]}") && !r.repaired_from_seed);
    assert_eq!((r.report_id.as_str(), r.seed_id.as_str()), ("shift4#report", "sreg"));
    let d = r.to_dataset("repair-00000", 11);
    assert_eq!(d.kind, crate::forge::RecordKind::Repair);
    assert!(d.prompt.contains("\n\nErroneous Implementation:\n```\nmodule sreg") && d.response.starts_with("```\nmodule sreg"));
    assert!(matches!(inject_error(&ok, &seeds[0], &provider, &cfg()).unwrap(), InjectOutcome::Skipped { .. }));
}

#[test]
fn counter_answer_without_output_falls_back_to_seed() {
    let f = fixture();
    let judge = ListJudge::new(&[SHIFT_OK, CAT_OK]);
    let v = verified(&f, &judge);
    let answer = format!("Problem Description:\nAn up counter that must reset to zero.\n\nErroneous Implementation:\n```verilog\n{COUNTER_BAD}```\nHints for Fixing:\n1. Reset to 4'd0 rather than 4'd3.\n");
    let provider = ScriptedProvider::new(ResponseScript {
        rules: vec![rule(&["Inject the above error"], &answer), rule(&["Now fix"], &fenced(SHIFT_OK))],
        default: Some(SHIFT_REPORT.into()),
    })
    .unwrap();
    let rep = build_error_report(&v[0], &provider, &cfg()).unwrap();
    let ok = self_consistency_check(rep, &v[0], &provider, &judge, &cfg()).unwrap().unwrap();
    let counter = SeedCode { id: "counter_up".into(), code: COUNTER.into() };
    let InjectOutcome::Record(r) = inject_error(&ok, &counter, &provider, &cfg()).unwrap() else { panic!() };
    assert!(r.erroneous.contains("q <= 4'd3;") && r.repaired.contains("q <= 4'd0;") && r.repaired_from_seed);
    assert_eq!(r.problem, "An up counter that must reset to zero.");
}

fn record(id: &str, bad: &str, good: &str) -> RepairRecord {
    RepairRecord {
        id: id.into(),
        problem: "p".into(),
        erroneous: bad.into(),
        hints: "h".into(),
        repaired: good.into(),
        report_id: "r".into(),
        seed_id: "s".into(),
        repaired_from_seed: false,
    }
}

#[test]
fn filter_counts_each_reason() {
    let judge = ListJudge::new(&[]);
    let mut db = FingerprintDb::new();
    db.insert(code_fingerprint(CAT_OK), format!("{BENCHMARK_PREFIX}concat16"));
    let recs = vec![
        record("a", COUNTER_BAD, COUNTER),
        record("truncated", "module counter_up(input clk);\n  always", COUNTER),
        record("copy", COUNTER_BAD, &format!("// same code\n{COUNTER}")),
        record("same", COUNTER, COUNTER),
        record("bench", CAT_BAD, CAT_OK),
    ];
    let (kept, stats, why) = filter_repair_records(recs, &mut db, &judge).unwrap();
    assert_eq!(kept.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), vec!["a"]);
    assert_eq!(stats, FilterStats { input: 5, syntax: 1, unchanged: 1, contaminated: 1, dup: 1, kept: 1 });
    let reasons: Vec<&str> = why.iter().map(|r| r.reason.as_str()).collect();
    assert_eq!(reasons, vec!["SYNTAX", "DUP of a", "UNCHANGED", "CONTAMINATED by concat16"]);
}

#[test]
fn pipeline_is_deterministic_and_only_injects_validated_reports() {
    let judge = ListJudge::new(&[SHIFT_OK, CAT_OK]);
    let run = || {
        let f = fixture();
        let provider = ScriptedProvider::new(script()).unwrap();
        let mut db = FingerprintDb::with_benchmark_templates();
        let out = run_repair(f.pairs.clone(), &seeds(), &provider, &judge, &mut db, &cfg()).unwrap();
        let injected_for: HashSet<String> = provider
            .requests()
            .iter()
            .filter(|r| r.request_id.starts_with("inject:"))
            .map(|r| r.request_id.split(':').nth(1).unwrap().to_string())
            .collect();
        (out, injected_for)
    };
    let (a, injected_for) = run();
    let (b, _) = run();
    assert_eq!(serde_json::to_string(&a.dataset()).unwrap(), serde_json::to_string(&b.dataset()).unwrap());
    assert_eq!(a.funnel, b.funnel);

    let validated: HashSet<&str> = a.reports.iter().filter(|r| r.validated).map(|r| r.id.as_str()).collect();
    assert_eq!(validated, HashSet::from(["shift4#report"]));
    assert!(injected_for.iter().all(|id| validated.contains(id.as_str())));
    assert!(a.records.iter().all(|r| validated.contains(r.report_id.as_str())));

    let f = &a.funnel;
    assert_eq!((f.pairs, f.pairs_verified, f.reports_built, f.reports_validated, f.reports_rejected), (2, 2, 2, 1, 1));
    assert_eq!((f.injections, f.skipped, f.raw_samples), (3, 1, 2));
    assert_eq!((f.filter.syntax, f.final_records()), (1, 1));
    assert!(f.to_string().starts_with("funnel: reports 1 -> raw samples 2 -> final 1\n"));
    assert_eq!(a.dataset()[0].id, "repair-00000");
    assert!(a.rejections.iter().any(|r| r.subject == "concat16#report" && r.reason.starts_with("SELF-CONSISTENCY FAIL")));
}
