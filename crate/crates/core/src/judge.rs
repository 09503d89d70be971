//! Judging arbitrary Verilog against a user-supplied testbench: compile
//! verdict, functional verdict from the run output, and a log excerpt.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sim::{SimError, Simulator};

/// Matches the conventions of common benchmark testbenches
/// ("Mismatches: 3 in 100 samples") and of the ones this crate renders.
pub const DEFAULT_FAILURE_PATTERN: &str =
    r"(?m)(Mismatches: *[1-9]|has [1-9][0-9]* mismatch|failures=[1-9]|^MISMATCH\b|\bFAIL(ED)?\b|\bTIMEOUT\b|^ERROR\b)";

const EXCERPT_LINES: usize = 40;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("testbench {path}: {msg}")]
    Testbench { path: PathBuf, msg: String },
    #[error("bad pattern: {0}")]
    Pattern(#[from] regex::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    /// A run fails when any stdout line matches this.
    pub failure_pattern: String,
    /// When set, a run also needs one line matching this to pass.
    pub success_pattern: Option<String>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self { failure_pattern: DEFAULT_FAILURE_PATTERN.into(), success_pattern: None }
    }
}

/// Testbench sources plus the module to elaborate as root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Testbench {
    pub sources: Vec<(String, String)>,
    pub top: String,
}

impl Testbench {
    /// A single file, or every `.v`/`.sv` file of a directory in name order.
    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let err = |msg: String| JudgeError::Testbench { path: path.to_path_buf(), msg };
        let files: Vec<PathBuf> = if path.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| err(e.to_string()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("v" | "sv")))
                .collect();
            v.sort();
            v
        } else {
            vec![path.to_path_buf()]
        };
        let mut sources = Vec::new();
        for (i, f) in files.iter().enumerate() {
            let text = fs::read_to_string(f).map_err(|e| err(format!("{}: {e}", f.display())))?;
            let ext = f.extension().and_then(|e| e.to_str()).unwrap_or("v");
            sources.push((format!("tb{i}.{ext}"), text));
        }
        Self::from_sources(sources).map_err(|m| err(m))
    }

    pub fn from_text(text: impl Into<String>) -> Result<Self, String> {
        Self::from_sources(vec![("tb0.v".into(), text.into())])
    }

    fn from_sources(sources: Vec<(String, String)>) -> Result<Self, String> {
        let all: String = sources.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join("\n");
        let top = root_module(&all).ok_or("no root module found")?;
        Ok(Self { sources, top })
    }
}

/// The declared module that no other module in `text` instantiates; the
/// last declared one when that is ambiguous.
pub fn root_module(text: &str) -> Option<String> {
    let decl = Regex::new(r"(?m)^\s*module\s+([A-Za-z_][A-Za-z0-9_$]*)").expect("static regex");
    let names: Vec<String> = decl.captures_iter(text).map(|c| c[1].to_string()).collect();
    let instantiated = |name: &str| {
        let inst = Regex::new(&format!(r"(?m)^\s*{}\s*(#\s*\(|[A-Za-z_][A-Za-z0-9_$]*\s*\()", regex::escape(name)))
            .expect("escaped name");
        inst.is_match(text)
    };
    let roots: Vec<&String> = names.iter().filter(|n| !instantiated(n)).collect();
    match roots.as_slice() {
        [only] => Some(only.to_string()),
        _ => names.last().cloned(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Functional {
    Pass,
    Fail,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub syntax_ok: bool,
    /// `None` exactly when `syntax_ok` is false.
    pub functional: Option<Functional>,
    pub log: String,
}

impl Judgement {
    pub fn passed(&self) -> bool {
        self.functional == Some(Functional::Pass)
    }
}

/// Anything that can compile and test code. Repair and evaluation go
/// through this so tests can stand in a table-driven judge.
pub trait CodeJudge: Send + Sync {
    fn judge(&self, code: &str, tb: &Testbench) -> Result<Judgement, JudgeError>;

    fn syntax_ok(&self, code: &str) -> Result<bool, JudgeError>;
}

/// Simulator-backed judge. Verdicts are memoised by content hash, since
/// the repair pipeline checks the same pair more than once.
pub struct SimJudge {
    sim: Simulator,
    failure: Regex,
    success: Option<Regex>,
    cache: Mutex<HashMap<[u8; 32], Judgement>>,
}

impl SimJudge {
    pub fn new(sim: Simulator, config: &JudgeConfig) -> Result<Self, JudgeError> {
        Ok(Self {
            sim,
            failure: Regex::new(&config.failure_pattern)?,
            success: config.success_pattern.as_deref().map(Regex::new).transpose()?,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    fn key(code: &str, tb: &Testbench) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(code.as_bytes());
        for (name, text) in &tb.sources {
            h.update([0]);
            h.update(name.as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
        }
        h.update([0]);
        h.update(tb.top.as_bytes());
        h.finalize().into()
    }

    fn verdict(&self, stdout: &str, success: bool, timed_out: bool) -> Functional {
        if timed_out {
            Functional::Timeout
        } else if success
            && !self.failure.is_match(stdout)
            && self.success.as_ref().is_none_or(|re| re.is_match(stdout))
        {
            Functional::Pass
        } else {
            Functional::Fail
        }
    }
}

fn excerpt(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines.len().saturating_sub(EXCERPT_LINES);
    lines[start..].join("\n")
}

impl CodeJudge for SimJudge {
    fn judge(&self, code: &str, tb: &Testbench) -> Result<Judgement, JudgeError> {
        let key = Self::key(code, tb);
        if let Some(j) = self.cache.lock().expect("judge cache").get(&key) {
            return Ok(j.clone());
        }
        let mut sources: Vec<(&str, &str)> = vec![("dut.v", code)];
        sources.extend(tb.sources.iter().map(|(n, t)| (n.as_str(), t.as_str())));
        let run = self.sim.run(&sources, &tb.top, &[])?;
        let judgement = match &run.run {
            None => Judgement { syntax_ok: false, functional: None, log: excerpt(&run.compile.log()) },
            Some(r) => Judgement {
                syntax_ok: true,
                functional: Some(self.verdict(&r.stdout, r.success, r.timed_out)),
                log: excerpt(&r.log()),
            },
        };
        self.cache.lock().expect("judge cache").insert(key, judgement.clone());
        Ok(judgement)
    }

    fn syntax_ok(&self, code: &str) -> Result<bool, JudgeError> {
        Ok(self.sim.syntax_check(code)?.is_ok())
    }
}
