//! Targeted repair data: error reports from (correct, erroneous) pairs,
//! self-consistency validation, injection into seed code, filtering.

mod parse;
mod pipeline;
pub mod prompts;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{extract_code, module_header, Extraction};
use crate::forge::{repair_fingerprint, DatasetRecord, RecordKind};
use crate::judge::{CodeJudge, JudgeError, Judgement, Testbench};
use crate::provider::{CompletionRequest, ProviderError, TextProvider};

pub use parse::{declines_injection, parse_injection, parse_report, InjectionFields, ReportFields};
pub use pipeline::{filter_repair_records, run_repair, FilterStats, RepairConfig, RepairFunnel, RepairOutput};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("unreadable {what} answer for {subject} after retry")]
    Unparseable { what: &'static str, subject: String },
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
}

impl RepairError {
    /// Failures that concern one item rather than the whole run.
    pub fn is_item_level(&self) -> bool {
        matches!(self, RepairError::Provider(_) | RepairError::Unparseable { .. })
    }
}

/// One line of the ingestion file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodePair {
    pub id: String,
    pub problem: String,
    pub correct: String,
    pub erroneous: String,
    pub testbench_path: PathBuf,
}

fn jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RepairError> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RepairError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Testbench paths resolve against the ingestion file's directory.
pub fn load_pairs(path: &Path) -> Result<Vec<CodePair>, RepairError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs: Vec<CodePair> = jsonl(path)?;
    for p in &mut pairs {
        p.testbench_path = base.join(&p.testbench_path);
    }
    Ok(pairs)
}

/// A pair whose correct side passes and erroneous side fails its testbench.
#[derive(Clone, Debug)]
pub struct VerifiedPair {
    pair: CodePair,
    testbench: Testbench,
}

impl VerifiedPair {
    pub fn pair(&self) -> &CodePair {
        &self.pair
    }

    pub fn testbench(&self) -> &Testbench {
        &self.testbench
    }
}

/// Why ingestion refused a pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PairRejection {
    Testbench(String),
    CorrectFails(String),
    ErroneousPasses,
}

impl fmt::Display for PairRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairRejection::Testbench(e) => write!(f, "testbench unusable: {e}"),
            PairRejection::CorrectFails(log) => write!(f, "correct solution fails: {log}"),
            PairRejection::ErroneousPasses => f.write_str("erroneous completion passes"),
        }
    }
}

fn judgement_summary(j: &Judgement) -> String {
    let verdict = match (j.syntax_ok, j.functional) {
        (false, _) => "does not compile".to_string(),
        (true, Some(f)) => format!("{f:?}").to_uppercase(),
        (true, None) => "no verdict".to_string(),
    };
    let last = j.log.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    format!("{verdict}; {last}")
}

pub fn verify_pair(pair: CodePair, judge: &dyn CodeJudge) -> Result<Result<VerifiedPair, PairRejection>, RepairError> {
    let testbench = match Testbench::load(&pair.testbench_path) {
        Ok(tb) => tb,
        Err(e) => return Ok(Err(PairRejection::Testbench(e.to_string()))),
    };
    let good = judge.judge(&pair.correct, &testbench)?;
    if !good.passed() {
        return Ok(Err(PairRejection::CorrectFails(judgement_summary(&good))));
    }
    if judge.judge(&pair.erroneous, &testbench)?.passed() {
        return Ok(Err(PairRejection::ErroneousPasses));
    }
    Ok(Ok(VerifiedPair { pair, testbench }))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub id: String,
    pub source_pair: String,
    pub error_type: String,
    pub category: String,
    pub description: String,
    pub validated: bool,
}

impl ErrorReport {
    /// Text placed in the fix and injection prompts.
    pub fn render(&self) -> String {
        format!("Error Type: {}\nCategory: {}\nDescription:\n{}", self.error_type, self.category, self.description)
    }
}

/// A report that survived the self-consistency check. Only
/// [`self_consistency_check`] builds one, so injection cannot see an
/// unvalidated report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedReport(ErrorReport);

impl ValidatedReport {
    pub fn report(&self) -> &ErrorReport {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportRejection {
    pub report: ErrorReport,
    pub fix: Option<String>,
    pub verdict: String,
}

fn request(cfg: &RepairConfig, user: String, id: String) -> CompletionRequest {
    CompletionRequest {
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        ..CompletionRequest::new(prompts::SYSTEM, user, id)
    }
}

/// Asks once, then once more with `reminder` appended if `read` rejects
/// the answer.
fn ask_parsed<T>(
    provider: &dyn TextProvider,
    cfg: &RepairConfig,
    user: String,
    reminder: &str,
    id: &str,
    what: &'static str,
    read: impl Fn(&str) -> Option<T>,
) -> Result<T, RepairError> {
    let first = provider.complete(&request(cfg, user.clone(), format!("{id}:0")))?;
    if let Some(v) = read(&first.text) {
        return Ok(v);
    }
    for attempt in 1..=cfg.format_retries {
        let again = provider.complete(&request(cfg, format!("{user}{reminder}"), format!("{id}:{attempt}")))?;
        if let Some(v) = read(&again.text) {
            return Ok(v);
        }
    }
    Err(RepairError::Unparseable { what, subject: id.to_string() })
}

pub fn build_error_report(
    pair: &VerifiedPair,
    provider: &dyn TextProvider,
    cfg: &RepairConfig,
) -> Result<ErrorReport, RepairError> {
    let p = &pair.pair;
    let user = prompts::fill(
        prompts::ERROR_REPORT,
        &[("problem description", &p.problem), ("error code", &p.erroneous), ("correct code", &p.correct)],
    );
    let id = format!("report:{}", p.id);
    let f = ask_parsed(provider, cfg, user, prompts::REPORT_FORMAT_REMINDER, &id, "error report", parse_report)?;
    Ok(ErrorReport {
        id: format!("{}#report", p.id),
        source_pair: p.id.clone(),
        error_type: f.error_type,
        category: f.category,
        description: f.description,
        validated: false,
    })
}

/// Has the provider fix the erroneous code using only the report, then
/// runs the fix against the pair's testbench.
pub fn self_consistency_check(
    report: ErrorReport,
    pair: &VerifiedPair,
    provider: &dyn TextProvider,
    judge: &dyn CodeJudge,
    cfg: &RepairConfig,
) -> Result<Result<ValidatedReport, ReportRejection>, RepairError> {
    assert!(!report.validated, "report {} is already validated", report.id);
    let p = &pair.pair;
    let user = prompts::fill(
        prompts::SELF_CONSISTENCY,
        &[("problem description", &p.problem), ("error code", &p.erroneous), ("error report", &report.render())],
    );
    let answer = provider.complete(&request(cfg, user, format!("fix:{}", report.id)))?;
    let header = module_header(&p.erroneous).unwrap_or_default();
    let Extraction::Code(fix) = extract_code(&answer.text, header) else {
        return Ok(Err(ReportRejection { report, fix: None, verdict: "no code in fix".into() }));
    };
    let j = judge.judge(&fix, &pair.testbench)?;
    if j.passed() {
        Ok(Ok(ValidatedReport(ErrorReport { validated: true, ..report })))
    } else {
        Ok(Err(ReportRejection { report, fix: Some(fix), verdict: judgement_summary(&j) }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCode {
    pub id: String,
    pub code: String,
}

/// A directory of `.v` files (id = file stem, name order) or a JSONL file
/// of `{id, code}` lines.
pub fn load_seed_codes(path: &Path) -> Result<Vec<SeedCode>, RepairError> {
    if !path.is_dir() {
        return jsonl(path);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("v" | "sv")))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|f| {
            let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(SeedCode { id, code: fs::read_to_string(&f)? })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub id: String,
    pub problem: String,
    pub erroneous: String,
    pub hints: String,
    pub repaired: String,
    pub report_id: String,
    pub seed_id: String,
    /// The answer had no corrected module, so the seed code stands in.
    pub repaired_from_seed: bool,
}

impl RepairRecord {
    pub fn prompt(&self) -> String {
        format!(
            "{}\n\nErroneous Implementation:\n```\n{}\n```\n\nHints for Fixing:\n{}\n",
            self.problem.trim_end(),
            self.erroneous.trim_end(),
            self.hints.trim_end()
        )
    }

    pub fn response(&self) -> String {
        format!("```\n{}\n```\n", self.repaired.trim_end())
    }

    pub fn to_dataset(&self, id: &str, seed: u64) -> DatasetRecord {
        DatasetRecord {
            id: id.to_string(),
            kind: RecordKind::Repair,
            prompt: self.prompt(),
            response: self.response(),
            seed,
            fingerprint: repair_fingerprint(&self.erroneous, &self.repaired).to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InjectOutcome {
    Record(RepairRecord),
    /// The provider judged the error impossible to inject here.
    Skipped { reason: String },
}

pub fn inject_error(
    report: &ValidatedReport,
    seed: &SeedCode,
    provider: &dyn TextProvider,
    cfg: &RepairConfig,
) -> Result<InjectOutcome, RepairError> {
    let r = report.report();
    debug_assert!(r.validated);
    let user = prompts::fill(prompts::INJECTION, &[("error report", &r.render()), ("code snippet", &seed.code)]);
    let id = format!("inject:{}:{}", r.id, seed.id);
    let read = |text: &str| -> Option<Result<InjectionFields, String>> {
        match parse_injection(text) {
            Some(f) => Some(Ok(f)),
            None if declines_injection(text) => {
                Some(Err(text.lines().find(|l| declines_injection(l)).unwrap_or(text).trim().to_string()))
            }
            None => None,
        }
    };
    let fields = match ask_parsed(provider, cfg, user, prompts::INJECTION_FORMAT_REMINDER, &id, "injection", read)? {
        Ok(f) => f,
        Err(reason) => return Ok(InjectOutcome::Skipped { reason }),
    };
    let (repaired, repaired_from_seed) = match fields.repaired {
        Some(code) => (code, false),
        None => (seed.code.clone(), true),
    };
    Ok(InjectOutcome::Record(RepairRecord {
        id: format!("{}/{}", r.id, seed.id),
        problem: fields.description,
        erroneous: fields.erroneous,
        hints: fields.hints,
        repaired,
        report_id: r.id.clone(),
        seed_id: seed.id.clone(),
        repaired_from_seed,
    }))
}

#[cfg(test)]
mod tests;
