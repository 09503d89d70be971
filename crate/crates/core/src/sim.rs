//! External simulator orchestration: command templates, per-job work
//! directories, a bounded process pool, timeouts, and batched testbench runs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::verilog::{TestbenchMode, TestbenchSpec, VerilogArtifact};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulator tool `{0}` not found on PATH")]
    ToolMissing(String),
    #[error("empty command template for {0}")]
    EmptyTemplate(&'static str),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Icarus,
    Verilator,
    Custom,
}

/// Command templates are argument vectors. `{sources}` expands to every
/// source file; `{top}`, `{out}` and `{workdir}` expand in place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    pub backend: Backend,
    pub lint_cmd: Vec<String>,
    pub compile_cmd: Vec<String>,
    pub run_cmd: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_jobs")]
    pub max_jobs: usize,
    /// Parent directory for per-job work directories; system temp when unset.
    #[serde(default)]
    pub work_root: Option<PathBuf>,
    /// Testbenches per compiled batch.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_timeout() -> u64 {
    30
}

fn default_jobs() -> usize {
    8
}

fn default_batch() -> usize {
    64
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl SimulatorConfig {
    pub fn icarus() -> Self {
        Self {
            backend: Backend::Icarus,
            lint_cmd: strings(&["iverilog", "-g2012", "-t", "null", "{sources}"]),
            compile_cmd: strings(&["iverilog", "-g2012", "-o", "{out}", "-s", "{top}", "{sources}"]),
            run_cmd: strings(&["vvp", "-n", "{out}"]),
            timeout_secs: default_timeout(),
            max_jobs: default_jobs(),
            work_root: None,
            batch_size: default_batch(),
        }
    }

    pub fn verilator() -> Self {
        let common = ["--timing", "-Wno-fatal", "-Wno-lint", "-Wno-style"];
        let mut lint = strings(&["verilator-cli", "--lint-only"]);
        lint.extend(strings(&common));
        lint.push("{sources}".into());
        let mut compile = strings(&["verilator-cli", "--binary", "--trace"]);
        compile.extend(strings(&common));
        compile.extend(strings(&[
            "-MAKEFLAGS",
            "PYTHON3=python3 VM_PARALLEL_BUILDS=0 OPT_FAST=-O0 OPT_SLOW=-O0 OPT_GLOBAL=-O0",
            "--Mdir",
            "obj",
            "-o",
            "{out}",
            "--top-module",
            "{top}",
            "{sources}",
        ]));
        Self {
            backend: Backend::Verilator,
            lint_cmd: lint,
            compile_cmd: compile,
            run_cmd: strings(&["{workdir}/obj/{out}"]),
            timeout_secs: 120,
            max_jobs: default_jobs(),
            work_root: None,
            batch_size: 100,
        }
    }

    /// Icarus when `iverilog` and `vvp` are on PATH, else Verilator.
    pub fn detect() -> Result<Self, SimError> {
        if find_on_path("iverilog").is_some() && find_on_path("vvp").is_some() {
            Ok(Self::icarus())
        } else if find_on_path("verilator-cli").is_some() {
            Ok(Self::verilator())
        } else {
            Err(SimError::ToolMissing("iverilog".into()))
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

pub fn find_on_path(tool: &str) -> Option<PathBuf> {
    if tool.contains('/') {
        return Path::new(tool).is_file().then(|| PathBuf::from(tool));
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(tool)).find(|p| p.is_file())
}

/// Counting semaphore bounding concurrent external processes.
#[derive(Debug)]
pub struct ProcessPool {
    available: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a ProcessPool);

impl ProcessPool {
    pub fn new(slots: usize) -> Self {
        Self { available: Mutex::new(slots.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("pool lock poisoned");
        while *n == 0 {
            n = self.cv.wait(n).expect("pool lock poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("pool lock poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmdOutput {
    pub success: bool,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
}

impl CmdOutput {
    pub fn log(&self) -> String {
        format!("{}{}", self.stdout, self.stderr)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SyntaxVerdict {
    Ok,
    Diagnostics(String),
}

impl SyntaxVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, SyntaxVerdict::Ok)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimRun {
    pub compile: CmdOutput,
    /// `None` when compilation failed.
    pub run: Option<CmdOutput>,
    /// Contents of requested output files that exist after the run.
    pub files: Vec<(String, String)>,
}

impl SimRun {
    pub fn compiled(&self) -> bool {
        self.compile.success
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }
}

/// Handle to the configured simulator with its process pool.
#[derive(Clone, Debug)]
pub struct Simulator {
    config: SimulatorConfig,
    pool: Arc<ProcessPool>,
}

impl Simulator {
    pub fn new(config: SimulatorConfig) -> Self {
        let pool = Arc::new(ProcessPool::new(config.max_jobs));
        Self { config, pool }
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.config
    }

    /// Fails with [`SimError::ToolMissing`] if any template's program is absent.
    pub fn check_tools(&self) -> Result<(), SimError> {
        for cmd in [&self.config.lint_cmd, &self.config.compile_cmd] {
            let prog = cmd.first().ok_or(SimError::EmptyTemplate("tool check"))?;
            if find_on_path(prog).is_none() {
                return Err(SimError::ToolMissing(prog.clone()));
            }
        }
        Ok(())
    }

    fn workdir(&self) -> Result<tempfile::TempDir, SimError> {
        let b = tempfile::Builder::new().prefix("vforge-").tempdir_in(
            self.config.work_root.clone().unwrap_or_else(std::env::temp_dir),
        );
        Ok(b?)
    }

    fn exec(
        &self,
        template: &[String],
        what: &'static str,
        dir: &Path,
        sources: &[String],
        top: &str,
        timeout: Duration,
    ) -> Result<CmdOutput, SimError> {
        let args = expand(template, sources, top, "sim", dir);
        let (prog, rest) = args.split_first().ok_or(SimError::EmptyTemplate(what))?;
        let stdout_path = dir.join(format!("{what}.stdout"));
        let stderr_path = dir.join(format!("{what}.stderr"));
        let _permit = self.pool.acquire();
        debug!("{what}: {}", args.join(" "));
        let mut child = match Command::new(prog)
            .args(rest)
            .current_dir(dir)
            .stdin(Stdio::null())
            .stdout(fs::File::create(&stdout_path)?)
            .stderr(fs::File::create(&stderr_path)?)
            .spawn()
        {
            Ok(c) => c,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(SimError::ToolMissing(prog.clone())),
            Err(e) => return Err(e.into()),
        };
        let (success, timed_out) = match child.wait_timeout(timeout)? {
            Some(status) => (status.success(), false),
            None => {
                warn!("{what} exceeded {}s, killing", timeout.as_secs());
                child.kill()?;
                child.wait()?;
                (false, true)
            }
        };
        let read = |p: &Path| fs::read(p).map(|b| String::from_utf8_lossy(&b).into_owned());
        Ok(CmdOutput { success, timed_out, stdout: read(&stdout_path)?, stderr: read(&stderr_path)? })
    }

    /// Parse-only check of one source text.
    pub fn syntax_check(&self, source: &str) -> Result<SyntaxVerdict, SimError> {
        let dir = self.workdir()?;
        fs::write(dir.path().join("check.v"), source)?;
        let out = self.exec(
            &self.config.lint_cmd,
            "lint",
            dir.path(),
            &["check.v".into()],
            "",
            self.config.timeout(),
        )?;
        Ok(if out.success { SyntaxVerdict::Ok } else { SyntaxVerdict::Diagnostics(out.log()) })
    }

    /// Compiles and runs `sources` (file name, text) with `top` as the root
    /// module, then reads back `collect` files from the work directory.
    pub fn run(&self, sources: &[(&str, &str)], top: &str, collect: &[&str]) -> Result<SimRun, SimError> {
        self.run_scaled(sources, top, collect, 1)
    }

    fn run_scaled(
        &self,
        sources: &[(&str, &str)],
        top: &str,
        collect: &[&str],
        scale: u32,
    ) -> Result<SimRun, SimError> {
        let dir = self.workdir()?;
        let mut names = Vec::new();
        for (name, text) in sources {
            fs::write(dir.path().join(name), text)?;
            names.push(name.to_string());
        }
        let timeout = self.config.timeout() * scale;
        let compile = self.exec(&self.config.compile_cmd, "compile", dir.path(), &names, top, timeout)?;
        if !compile.success {
            return Ok(SimRun { compile, run: None, files: Vec::new() });
        }
        let run = self.exec(&self.config.run_cmd, "run", dir.path(), &names, top, timeout)?;
        let files = collect
            .iter()
            .filter_map(|f| fs::read(dir.path().join(f)).ok().map(|b| (f.to_string(), String::from_utf8_lossy(&b).into_owned())))
            .collect();
        Ok(SimRun { compile, run: Some(run), files })
    }
}

fn expand(template: &[String], sources: &[String], top: &str, out: &str, dir: &Path) -> Vec<String> {
    let workdir = dir.display().to_string();
    template
        .iter()
        .flat_map(|a| {
            if a == "{sources}" {
                sources.to_vec()
            } else {
                vec![a.replace("{top}", top).replace("{out}", out).replace("{workdir}", &workdir)]
            }
        })
        .collect()
}

// ---------------------------------------------------------------- batches

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BatchStatus {
    Passed,
    Failed,
    /// The summary line never printed (crash, timeout, or missing done).
    NoReport,
    CompileError(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchVerdict {
    pub status: BatchStatus,
    pub checks: usize,
    pub failures: usize,
    pub mismatches: Vec<String>,
    /// VCD of the whole batch when dumping was requested; instance `i`
    /// lives under scope `u{i}`.
    pub vcd: Option<Arc<String>>,
    /// Scope of this item inside the batch VCD.
    pub scope: String,
}

impl BatchVerdict {
    pub fn passed(&self) -> bool {
        self.status == BatchStatus::Passed
    }
}

const BATCH_VCD: &str = "batch.vcd";

/// Runs each artifact against its testbench. Testbenches are compiled
/// together in batches of `batch_size`; a batch that fails to compile is
/// retried one item at a time so a single bad module cannot mask others.
pub fn run_batch(
    sim: &Simulator,
    items: &[(VerilogArtifact, TestbenchSpec)],
    dump_vcd: bool,
) -> Result<Vec<BatchVerdict>, SimError> {
    let size = sim.config.batch_size.max(1);
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(size) {
        let verdicts = run_one_batch(sim, chunk, dump_vcd)?;
        let compile_failed = verdicts.iter().all(|v| matches!(v.status, BatchStatus::CompileError(_)));
        if compile_failed && chunk.len() > 1 {
            for item in chunk {
                out.extend(run_one_batch(sim, std::slice::from_ref(item), dump_vcd)?);
            }
        } else {
            out.extend(verdicts);
        }
    }
    Ok(out)
}

fn run_one_batch(
    sim: &Simulator,
    items: &[(VerilogArtifact, TestbenchSpec)],
    dump_vcd: bool,
) -> Result<Vec<BatchVerdict>, SimError> {
    let mut src = String::new();
    for (i, (art, tb)) in items.iter().enumerate() {
        let dut = format!("top_module_b{i}");
        src += &art.renamed(&dut).module_text();
        let tb = TestbenchSpec { dut, vcd_path: None, ..tb.clone() };
        src += &tb.render(&TestbenchMode::Embedded { module_name: format!("tb_b{i}"), tag: format!("b{i}") });
    }
    let n = items.len();
    src += "`timescale 1ns/1ps\nmodule batch_top;\n";
    src += &format!("    wire [{}:0] done;\n", n - 1);
    for i in 0..n {
        src += &format!("    tb_b{i} u{i} (.done(done[{i}]));\n");
    }
    src += "    initial begin\n";
    if dump_vcd {
        src += &format!("        $dumpfile(\"{BATCH_VCD}\");\n        $dumpvars(0, batch_top);\n");
    }
    src += "        wait (&done);\n        #1 $finish;\n    end\nendmodule\n";

    let scale = (n as u32).div_ceil(16).max(1);
    let run = sim.run_scaled(&[("batch.v", &src)], "batch_top", &[BATCH_VCD], scale)?;
    let scope = |i: usize| format!("u{i}");
    let Some(result) = &run.run else {
        let log = run.compile.log();
        return Ok((0..n)
            .map(|i| BatchVerdict {
                status: BatchStatus::CompileError(log.clone()),
                checks: 0,
                failures: 0,
                mismatches: Vec::new(),
                vcd: None,
                scope: scope(i),
            })
            .collect());
    };
    let vcd = run.file(BATCH_VCD).map(|s| Arc::new(s.to_string()));
    let summary = Regex::new(r"^TB b(\d+) checks=(\d+) failures=(\d+)").expect("static regex");
    let mismatch = Regex::new(r"^MISMATCH b(\d+) (.*)$").expect("static regex");
    let mut verdicts: Vec<BatchVerdict> = (0..n)
        .map(|i| BatchVerdict {
            status: BatchStatus::NoReport,
            checks: 0,
            failures: 0,
            mismatches: Vec::new(),
            vcd: vcd.clone(),
            scope: scope(i),
        })
        .collect();
    for line in result.stdout.lines() {
        if let Some(c) = summary.captures(line) {
            let i: usize = c[1].parse().unwrap_or(usize::MAX);
            if let Some(v) = verdicts.get_mut(i) {
                v.checks = c[2].parse().unwrap_or(0);
                v.failures = c[3].parse().unwrap_or(0);
                v.status = if v.failures == 0 { BatchStatus::Passed } else { BatchStatus::Failed };
            }
        } else if let Some(c) = mismatch.captures(line) {
            if let Some(v) = c[1].parse::<usize>().ok().and_then(|i| verdicts.get_mut(i)) {
                v.mismatches.push(c[2].to_string());
            }
        }
    }
    if result.timed_out {
        for v in verdicts.iter_mut().filter(|v| v.status == BatchStatus::NoReport) {
            v.mismatches.push("TIMEOUT".into());
        }
    }
    Ok(verdicts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_expansion() {
        let t = strings(&["tool", "-o", "{out}", "-s", "{top}", "{sources}", "{workdir}/x"]);
        let got = expand(&t, &["a.v".into(), "b.v".into()], "tb", "sim", Path::new("/w"));
        assert_eq!(got, strings(&["tool", "-o", "sim", "-s", "tb", "a.v", "b.v", "/w/x"]));
    }

    #[test]
    fn missing_tool_is_distinct() {
        let mut cfg = SimulatorConfig::icarus();
        cfg.lint_cmd = strings(&["definitely-not-a-simulator-xyz", "{sources}"]);
        let sim = Simulator::new(cfg);
        assert!(matches!(sim.syntax_check("module m; endmodule"), Err(SimError::ToolMissing(_))));
        assert!(matches!(sim.check_tools(), Err(SimError::ToolMissing(_))));
    }

    #[test]
    fn timeout_kills_process() {
        let mut cfg = SimulatorConfig::icarus();
        cfg.lint_cmd = strings(&["sleep", "5"]);
        cfg.timeout_secs = 1;
        let sim = Simulator::new(cfg);
        let dir = sim.workdir().unwrap();
        let out = sim.exec(&sim.config.lint_cmd, "lint", dir.path(), &[], "", Duration::from_millis(200)).unwrap();
        assert!(out.timed_out && !out.success);
    }

    #[test]
    fn pool_bounds_concurrency() {
        let pool = Arc::new(ProcessPool::new(2));
        let active = Arc::new(Mutex::new((0usize, 0usize)));
        std::thread::scope(|s| {
            for _ in 0..6 {
                let (pool, active) = (pool.clone(), active.clone());
                s.spawn(move || {
                    let _p = pool.acquire();
                    {
                        let mut a = active.lock().unwrap();
                        a.0 += 1;
                        a.1 = a.1.max(a.0);
                    }
                    std::thread::sleep(Duration::from_millis(20));
                    active.lock().unwrap().0 -= 1;
                });
            }
        });
        assert!(active.lock().unwrap().1 <= 2);
    }
}
