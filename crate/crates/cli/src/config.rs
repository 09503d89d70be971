//! Config file schema. Every section rejects unknown keys; command-line
//! flags override file values and the merged result is logged per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vforge::eval::DEFAULT_KS;
use vforge::forge::{ForgeParams, GenConfig, ProblemKind};
use vforge::judge::JudgeConfig;
use vforge::provider::ProviderConfig;
use vforge::repair::RepairConfig;
use vforge::sim::{Backend, SimulatorConfig};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Bounds worker threads and concurrent simulator processes.
    pub jobs: Option<usize>,
    pub simulator: SimSection,
    pub provider: ProviderConfig,
    pub gen: GenSection,
    pub repair: RepairSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unprintable config: {e}\n"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Auto,
    Icarus,
    Verilator,
    Custom,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub preset: Preset,
    /// Directory prepended to bare tool names in the command templates.
    pub tool_dir: Option<PathBuf>,
    pub lint_cmd: Option<Vec<String>>,
    pub compile_cmd: Option<Vec<String>>,
    pub run_cmd: Option<Vec<String>>,
    pub timeout_secs: Option<u64>,
    pub max_jobs: Option<usize>,
    pub batch_size: Option<usize>,
    pub work_root: Option<PathBuf>,
}

impl SimSection {
    pub fn resolve(&self) -> Result<SimulatorConfig, CliError> {
        let mut cfg = match self.preset {
            Preset::Auto => SimulatorConfig::detect().map_err(|e| CliError::ToolMissing(e.to_string()))?,
            Preset::Icarus => SimulatorConfig::icarus(),
            Preset::Verilator => SimulatorConfig::verilator(),
            Preset::Custom => {
                let (Some(l), Some(c), Some(r)) = (&self.lint_cmd, &self.compile_cmd, &self.run_cmd) else {
                    return Err(CliError::Config("custom simulator needs lint_cmd, compile_cmd and run_cmd".into()));
                };
                SimulatorConfig {
                    backend: Backend::Custom,
                    lint_cmd: l.clone(),
                    compile_cmd: c.clone(),
                    run_cmd: r.clone(),
                    ..SimulatorConfig::icarus()
                }
            }
        };
        if let Some(v) = &self.lint_cmd {
            cfg.lint_cmd = v.clone();
        }
        if let Some(v) = &self.compile_cmd {
            cfg.compile_cmd = v.clone();
        }
        if let Some(v) = &self.run_cmd {
            cfg.run_cmd = v.clone();
        }
        if let Some(dir) = &self.tool_dir {
            for cmd in [&mut cfg.lint_cmd, &mut cfg.compile_cmd, &mut cfg.run_cmd] {
                if let Some(prog) = cmd.first_mut().filter(|p| !p.contains('/') && !p.contains('{')) {
                    *prog = dir.join(&*prog).display().to_string();
                }
            }
        }
        cfg.timeout_secs = self.timeout_secs.unwrap_or(cfg.timeout_secs);
        cfg.max_jobs = self.max_jobs.unwrap_or(cfg.max_jobs);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.work_root = self.work_root.clone().or(cfg.work_root);
        Ok(cfg)
    }

    /// Writes a resolved config back so the log shows concrete commands.
    pub fn pin(&mut self, cfg: &SimulatorConfig) {
        self.preset = match cfg.backend {
            Backend::Icarus => Preset::Icarus,
            Backend::Verilator => Preset::Verilator,
            Backend::Custom => Preset::Custom,
        };
        self.tool_dir = None;
        self.lint_cmd = Some(cfg.lint_cmd.clone());
        self.compile_cmd = Some(cfg.compile_cmd.clone());
        self.run_cmd = Some(cfg.run_cmd.clone());
        self.timeout_secs = Some(cfg.timeout_secs);
        self.max_jobs = Some(cfg.max_jobs);
        self.batch_size = Some(cfg.batch_size);
        self.work_root = cfg.work_root.clone();
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VerifyMode {
    /// Only the built-in interpreter gate that every instance passes.
    #[default]
    None,
    /// External simulator on a seeded sample.
    Sample,
    /// External simulator on every instance.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub counts: BTreeMap<ProblemKind, usize>,
    pub params: ForgeParams,
    pub chunk_size: usize,
    pub max_attempt_factor: usize,
    pub verify: VerifyMode,
    pub verify_fraction: f64,
    /// Share of instructions paraphrased by the provider.
    pub rewrite_fraction: f64,
    pub use_templates: bool,
    pub db: Vec<PathBuf>,
    pub save_db: Option<PathBuf>,
    pub output: PathBuf,
    pub rejections: Option<PathBuf>,
}

impl Default for GenSection {
    fn default() -> Self {
        let g = GenConfig::default();
        Self {
            counts: g.counts,
            params: g.params,
            chunk_size: g.chunk_size,
            max_attempt_factor: g.max_attempt_factor,
            verify: VerifyMode::None,
            verify_fraction: 0.05,
            rewrite_fraction: 0.0,
            use_templates: true,
            db: Vec::new(),
            save_db: None,
            output: "dataset.jsonl".into(),
            rejections: None,
        }
    }
}

impl GenSection {
    pub fn gen_config(&self, seed: u64) -> GenConfig {
        GenConfig {
            seed,
            counts: self.counts.clone(),
            params: self.params.clone(),
            chunk_size: self.chunk_size,
            max_attempt_factor: self.max_attempt_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairSection {
    pub pairs: Option<PathBuf>,
    /// Directory of `.v` files or JSONL of `{id, code}`.
    pub seeds: Option<PathBuf>,
    pub seeds_per_report: usize,
    pub format_retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub judge: JudgeConfig,
    pub use_templates: bool,
    pub db: Vec<PathBuf>,
    pub save_db: Option<PathBuf>,
    pub output: PathBuf,
    pub reports: Option<PathBuf>,
    pub rejections: Option<PathBuf>,
}

impl Default for RepairSection {
    fn default() -> Self {
        let r = RepairConfig::default();
        Self {
            pairs: None,
            seeds: None,
            seeds_per_report: r.seeds_per_report,
            format_retries: r.format_retries,
            temperature: r.temperature,
            max_tokens: r.max_tokens,
            judge: JudgeConfig::default(),
            use_templates: true,
            db: Vec::new(),
            save_db: None,
            output: "repair.jsonl".into(),
            reports: None,
            rejections: None,
        }
    }
}

impl RepairSection {
    pub fn repair_config(&self, seed: u64) -> RepairConfig {
        RepairConfig {
            seed,
            seeds_per_report: self.seeds_per_report,
            format_retries: self.format_retries,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tasks: Option<PathBuf>,
    /// `<task_id>/<idx>.v` layout.
    pub completions: Option<PathBuf>,
    /// JSONL of `{task_id, sample, completion}`; alternative to `completions`.
    pub manifest: Option<PathBuf>,
    pub ks: Vec<u64>,
    pub judge: JudgeConfig,
    pub results: PathBuf,
    pub summary: Option<PathBuf>,
    pub label: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            tasks: None,
            completions: None,
            manifest: None,
            ks: DEFAULT_KS.to_vec(),
            judge: JudgeConfig::default(),
            results: "results.jsonl".into(),
            summary: None,
            label: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        for bad in ["sed = 1", "[gen]\ncount = 3", "[simulator]\npreset = \"auto\"\nbogus = 1", "[eval.judge]\npattern = \"x\""] {
            assert!(toml::from_str::<RunConfig>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str(
            "seed = 7\n[gen]\ncounts = { KMAP = 10 }\nverify = \"sample\"\n[provider]\ntype = \"scripted\"\nscript = \"s.json\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.gen.counts.len(), 1);
        assert_eq!(c.gen.verify, VerifyMode::Sample);
        assert_eq!(c.gen.verify_fraction, 0.05);
        assert_eq!(c.eval.ks, vec![1, 5, 10]);
        assert_eq!(c.provider, ProviderConfig::Scripted { script: "s.json".into() });
        let again: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn tool_dir_prefixes_bare_programs() {
        let s = SimSection { preset: Preset::Icarus, tool_dir: Some("/opt/iv/bin".into()), ..SimSection::default() };
        let cfg = s.resolve().unwrap();
        assert_eq!(cfg.compile_cmd[0], "/opt/iv/bin/iverilog");
        assert_eq!(cfg.run_cmd[0], "/opt/iv/bin/vvp");
    }
}
