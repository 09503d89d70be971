//! Completion evaluation: prompt formatting, code extraction, simulator
//! judging and pass@k aggregation.

mod extract;
mod passk;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{CodeJudge, Functional, JudgeError, Testbench};

pub use extract::{extract_code, module_header, Extraction};
pub use passk::{binomial, pass_at_k, pass_at_k_exact, to_f64, PassAtKError};

pub const DEFAULT_KS: [u64; 3] = [1, 5, 10];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    PassAtK(#[from] PassAtKError),
    #[error("completions for unknown task `{0}`")]
    UnknownTask(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One benchmark problem. Field aliases accept the usual benchmark JSONL
/// names (`detail_description`, `prompt`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTask {
    pub task_id: String,
    #[serde(alias = "detail_description")]
    pub description: String,
    /// Module header shown to the model and prepended to body-only output.
    #[serde(alias = "prompt")]
    pub header: String,
    /// Testbench file or directory; relative paths resolve against the
    /// task file's directory.
    pub testbench: PathBuf,
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

pub fn format_prompt(task: &EvalTask) -> String {
    format!("{}\n\n{}", task.description.trim(), task.header.trim())
}

pub fn load_tasks(path: &Path) -> Result<Vec<EvalTask>, EvalError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut tasks = Vec::new();
    for (k, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut task: EvalTask = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: e.to_string(),
        })?;
        task.testbench = base.join(&task.testbench);
        task.reference = task.reference.map(|r| base.join(r));
        tasks.push(task);
    }
    Ok(tasks)
}

/// Raw responses per task, ordered by sample index.
pub type Completions = BTreeMap<String, Vec<(u32, String)>>;

/// Reads `<task_id>/<idx>.v` files under `dir`.
pub fn load_completion_dir(dir: &Path) -> Result<Completions, EvalError> {
    let mut out = Completions::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let task_id = entry.file_name().to_string_lossy().into_owned();
        let mut samples = Vec::new();
        for f in fs::read_dir(entry.path())? {
            let p = f?.path();
            let idx = (p.extension().and_then(|e| e.to_str()) == Some("v"))
                .then(|| p.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u32>().ok()))
                .flatten();
            if let Some(idx) = idx {
                samples.push((idx, fs::read_to_string(&p)?));
            }
        }
        samples.sort_by_key(|(i, _)| *i);
        out.insert(task_id, samples);
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    task_id: String,
    sample: u32,
    completion: String,
}

/// Reads a JSONL manifest of `{task_id, sample, completion}` lines.
pub fn load_completion_manifest(path: &Path) -> Result<Completions, EvalError> {
    let mut out = Completions::new();
    for (k, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: ManifestLine = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: e.to_string(),
        })?;
        out.entry(m.task_id).or_default().push((m.sample, m.completion));
    }
    for samples in out.values_mut() {
        samples.sort_by_key(|(i, _)| *i);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SyntaxVerdict {
    Pass,
    Fail,
    EmptyExtraction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResult {
    pub task_id: String,
    pub sample: u32,
    pub code: Option<String>,
    pub syntax: SyntaxVerdict,
    /// Present only when `syntax` is `Pass`.
    pub functional: Option<Functional>,
    pub log: String,
}

impl SampleResult {
    pub fn passed(&self) -> bool {
        self.functional == Some(Functional::Pass)
    }
}

pub fn judge_sample(
    task: &EvalTask,
    tb: &Testbench,
    sample: u32,
    response: &str,
    judge: &dyn CodeJudge,
) -> Result<SampleResult, EvalError> {
    let base = SampleResult {
        task_id: task.task_id.clone(),
        sample,
        code: None,
        syntax: SyntaxVerdict::EmptyExtraction,
        functional: None,
        log: String::new(),
    };
    let Extraction::Code(code) = extract_code(response, &task.header) else {
        return Ok(base);
    };
    let j = judge.judge(&code, tb)?;
    Ok(SampleResult {
        code: Some(code),
        syntax: if j.syntax_ok { SyntaxVerdict::Pass } else { SyntaxVerdict::Fail },
        functional: j.functional,
        log: j.log,
        ..base
    })
}

/// Judges every completion in parallel. Results come back in task order,
/// then sample order, whatever the scheduling.
pub fn evaluate(
    tasks: &[EvalTask],
    completions: &Completions,
    judge: &dyn CodeJudge,
) -> Result<Vec<SampleResult>, EvalError> {
    let known: BTreeSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    if let Some(extra) = completions.keys().find(|k| !known.contains(k.as_str())) {
        return Err(EvalError::UnknownTask(extra.clone()));
    }
    let mut jobs = Vec::new();
    for task in tasks {
        let Some(samples) = completions.get(&task.task_id) else {
            warn!("no completions for {}", task.task_id);
            continue;
        };
        let tb = Testbench::load(&task.testbench)?;
        jobs.extend(samples.iter().map(|(i, text)| (task, tb.clone(), *i, text)));
    }
    jobs.par_iter().map(|(task, tb, i, text)| judge_sample(task, tb, *i, text, judge)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTally {
    pub task_id: String,
    pub n: u64,
    pub c: u64,
    pub c_syntax: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub tasks: Vec<TaskTally>,
    /// Macro average over tasks; `None` when k exceeds some task's n.
    pub pass_at_k: BTreeMap<u64, Option<f64>>,
    pub syntax_at_k: BTreeMap<u64, Option<f64>>,
}

fn tally(results: &[SampleResult]) -> Vec<TaskTally> {
    let mut by_task: BTreeMap<&str, TaskTally> = BTreeMap::new();
    let mut order = Vec::new();
    for r in results {
        let t = by_task.entry(&r.task_id).or_insert_with(|| {
            order.push(r.task_id.as_str());
            TaskTally { task_id: r.task_id.clone(), n: 0, c: 0, c_syntax: 0 }
        });
        t.n += 1;
        t.c += u64::from(r.passed());
        t.c_syntax += u64::from(r.syntax == SyntaxVerdict::Pass);
    }
    order.into_iter().map(|id| by_task.remove(id).expect("tallied")).collect()
}

/// Exact mean over tasks of pass@k with `count` picking c or c_syntax.
fn macro_average(tasks: &[TaskTally], k: u64, count: impl Fn(&TaskTally) -> u64) -> Result<Option<f64>, EvalError> {
    if tasks.is_empty() || tasks.iter().any(|t| k > t.n) {
        return Ok(None);
    }
    let mut sum = BigRational::zero();
    for t in tasks {
        sum += pass_at_k_exact(t.n, count(t), k)?;
    }
    Ok(Some(to_f64(&(sum / BigRational::from_integer((tasks.len() as u64).into())))))
}

pub fn summarize(results: &[SampleResult], ks: &[u64]) -> Result<EvalSummary, EvalError> {
    let tasks = tally(results);
    let ns: BTreeSet<u64> = tasks.iter().map(|t| t.n).collect();
    if ns.len() > 1 {
        warn!("sample counts differ across tasks: {ns:?}");
    }
    let mut pass_at_k = BTreeMap::new();
    let mut syntax_at_k = BTreeMap::new();
    for &k in ks {
        pass_at_k.insert(k, macro_average(&tasks, k, |t| t.c)?);
        syntax_at_k.insert(k, macro_average(&tasks, k, |t| t.c_syntax)?);
    }
    Ok(EvalSummary { tasks, pass_at_k, syntax_at_k })
}

/// Several result sets (e.g. two sampling temperatures) side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub sets: Vec<(String, EvalSummary)>,
    /// Set with the highest aggregate, per k.
    pub best_set: BTreeMap<u64, Option<(String, f64)>>,
    /// Mean over tasks of the best set for that task, per k. Only tasks
    /// present in every set count.
    pub best_per_task: BTreeMap<u64, Option<f64>>,
}

pub fn compare(sets: Vec<(String, EvalSummary)>, ks: &[u64]) -> Result<Comparison, EvalError> {
    let mut best_set = BTreeMap::new();
    let mut best_per_task = BTreeMap::new();
    for &k in ks {
        let best = sets
            .iter()
            .filter_map(|(label, s)| s.pass_at_k.get(&k).copied().flatten().map(|v| (label.clone(), v)))
            .fold(None::<(String, f64)>, |acc, (l, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((l, v)),
            });
        best_set.insert(k, best);

        let common: Vec<&str> = sets.first().map_or_else(Vec::new, |(_, s)| {
            s.tasks
                .iter()
                .map(|t| t.task_id.as_str())
                .filter(|id| sets.iter().all(|(_, o)| o.tasks.iter().any(|t| t.task_id == *id)))
                .collect()
        });
        let mut per_task = Vec::new();
        for id in &common {
            let mut best: Option<BigRational> = None;
            for (_, s) in &sets {
                let t = s.tasks.iter().find(|t| t.task_id == *id).expect("common task");
                if k > t.n {
                    best = None;
                    break;
                }
                let v = pass_at_k_exact(t.n, t.c, k)?;
                best = Some(best.map_or(v.clone(), |b| b.max(v)));
            }
            per_task.push(best);
        }
        let value = if per_task.is_empty() || per_task.iter().any(Option::is_none) {
            None
        } else {
            let n = per_task.len() as u64;
            let sum = per_task.into_iter().flatten().fold(BigRational::zero(), |a, b| a + b);
            Some(to_f64(&(sum / BigRational::from_integer(n.into()))))
        };
        best_per_task.insert(k, value);
    }
    Ok(Comparison { sets, best_set, best_per_task })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.1}", 100.0 * v))
}

pub fn render_summary(s: &EvalSummary) -> String {
    let mut out = String::new();
    let samples: u64 = s.tasks.iter().map(|t| t.n).sum();
    let _ = writeln!(out, "tasks {}  samples {samples}", s.tasks.len());
    let _ = writeln!(out, "{:>8} {:>9} {:>9}", "k", "func %", "syntax %");
    for (k, v) in &s.pass_at_k {
        let _ = writeln!(out, "{:>8} {:>9} {:>9}", format!("pass@{k}"), pct(*v), pct(s.syntax_at_k[k]));
    }
    out
}

pub fn render_comparison(c: &Comparison) -> String {
    let mut out = String::new();
    for (label, s) in &c.sets {
        let _ = writeln!(out, "[{label}]\n{}", render_summary(s));
    }
    for (k, best) in &c.best_set {
        let set = best.as_ref().map_or_else(|| "-".to_string(), |(l, v)| format!("{} ({l})", pct(Some(*v))));
        let _ = writeln!(out, "pass@{k}: best set {set}, best per task {}", pct(c.best_per_task[k]));
    }
    out
}

pub fn write_results(results: &[SampleResult], path: &Path) -> Result<(), EvalError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<SampleResult>, EvalError> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
