use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use vforge::eval::{
    compare, evaluate, load_completion_dir, load_completion_manifest, load_tasks, read_results, render_comparison,
    render_summary, summarize, write_results, EvalError,
};
use vforge::forge::{
    code_fingerprint, generate, parse_templates, read_dataset, rewrite_instructions, sample_for_verification,
    simulate_instances, write_dataset, ForgeError, GenConfig, FingerprintDb, ProblemInstance, ProblemKind,
    RejectionEntry, BENCHMARK_PREFIX, RECORD_PREFIX,
};
use vforge::judge::{JudgeConfig, JudgeError, SimJudge};
use vforge::provider::{build_provider, ProviderError, TextProvider};
use vforge::repair::{load_pairs, load_seed_codes, run_repair, RepairError};
use vforge::sim::{SimError, Simulator};

use crate::config::{RunConfig, VerifyMode};
use crate::{CliError, EvalArgs, FingerprintCmd, GenArgs, RepairArgs};

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::ToolMissing(t) => CliError::ToolMissing(t),
        other => CliError::Other(other.into()),
    }
}

fn judge_error(e: JudgeError) -> CliError {
    match e {
        JudgeError::Sim(s) => sim_error(s),
        JudgeError::Pattern(p) => CliError::Config(p.to_string()),
        other => CliError::Other(other.into()),
    }
}

fn provider_error(e: ProviderError) -> CliError {
    CliError::Config(format!("provider: {e}"))
}

/// Resolves and checks the simulator, pinning the concrete commands into
/// the config so the logged copy is reproducible.
fn simulator(cfg: &mut RunConfig) -> Result<Simulator, CliError> {
    let resolved = cfg.simulator.resolve()?;
    let sim = Simulator::new(resolved.clone());
    sim.check_tools().map_err(sim_error)?;
    cfg.simulator.pin(&resolved);
    Ok(sim)
}

fn provider(cfg: &RunConfig) -> Result<Option<Box<dyn TextProvider>>, CliError> {
    build_provider(&cfg.provider).map_err(provider_error)
}

/// Logs the resolved config and writes it next to `out`.
fn record_config(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let text = cfg.to_toml();
    info!("resolved config:\n{text}");
    let path = PathBuf::from(format!("{}.config.toml", out.display()));
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_db(use_templates: bool, extra: &[PathBuf]) -> Result<FingerprintDb, CliError> {
    let mut db = if use_templates { FingerprintDb::with_benchmark_templates() } else { FingerprintDb::new() };
    for p in extra {
        let more = FingerprintDb::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        db.merge(&more);
    }
    Ok(db)
}

fn write_lines<T: std::fmt::Display>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for i in items {
        writeln!(f, "{i}").context("writing")?;
    }
    f.flush().context("writing")?;
    Ok(())
}

fn check_fraction(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} {v} is outside [0, 1]")))
    }
}

pub fn gen(mut cfg: RunConfig, a: GenArgs) -> Result<(), CliError> {
    if !a.kind.is_empty() {
        let count = a.count.ok_or_else(|| CliError::Config("--kind needs --count".into()))?;
        let kinds: Vec<ProblemKind> = a
            .kind
            .iter()
            .map(|k| k.parse().map_err(|e: ForgeError| CliError::Config(e.to_string())))
            .collect::<Result<_, _>>()?;
        cfg.gen.counts = kinds.into_iter().map(|k| (k, count)).collect();
    } else if a.all {
        cfg.gen.counts = GenConfig::default().counts;
    }
    let g = &mut cfg.gen;
    g.output = a.out.unwrap_or(g.output.clone());
    g.verify = a.verify.unwrap_or(g.verify);
    g.verify_fraction = a.verify_fraction.unwrap_or(g.verify_fraction);
    g.rewrite_fraction = a.rewrite_fraction.unwrap_or(g.rewrite_fraction);
    g.db.extend(a.db);
    g.use_templates &= !a.no_templates;
    g.save_db = a.save_db.or(g.save_db.take());
    g.rejections = a.rejections.or(g.rejections.take());
    check_fraction("verify_fraction", cfg.gen.verify_fraction)?;
    check_fraction("rewrite_fraction", cfg.gen.rewrite_fraction)?;
    cfg.gen.params.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let sim = match cfg.gen.verify {
        VerifyMode::None => None,
        _ => Some(simulator(&mut cfg)?),
    };
    let provider = if cfg.gen.rewrite_fraction > 0.0 {
        let p = provider(&cfg)?;
        if p.is_none() {
            warn!("rewrite_fraction is {} but no provider is configured; instructions stay templated", cfg.gen.rewrite_fraction);
        }
        p
    } else {
        None
    };
    record_config(&cfg, &cfg.gen.output)?;

    let mut db = load_db(cfg.gen.use_templates, &cfg.gen.db)?;
    let out = generate(&cfg.gen.gen_config(cfg.seed), &mut db).map_err(|e| match e {
        ForgeError::Params(m) => CliError::Config(m),
        other => CliError::Other(other.into()),
    })?;
    let (ids, mut instances): (Vec<String>, Vec<ProblemInstance>) = out.instances.into_iter().unzip();

    if let Some(p) = &provider {
        let r = rewrite_instructions(&mut instances, p.as_ref(), cfg.gen.rewrite_fraction, cfg.seed)
            .map_err(|e| CliError::Other(e.into()))?;
        info!("instruction rewrites: {} selected, {} rewritten, {} kept", r.selected, r.rewritten, r.kept_original.len());
    }

    if let Some(sim) = &sim {
        let picked: Vec<usize> = match cfg.gen.verify {
            VerifyMode::Full => (0..instances.len()).collect(),
            _ => sample_for_verification(instances.len(), cfg.gen.verify_fraction, cfg.seed),
        };
        let refs: Vec<&ProblemInstance> = picked.iter().map(|&i| &instances[i]).collect();
        info!("simulating {} of {} instances", refs.len(), instances.len());
        let verdicts = simulate_instances(sim, &refs).map_err(sim_error)?;
        let failed: Vec<&str> =
            picked.iter().zip(&verdicts).filter(|(_, v)| !v.passed()).map(|(&i, _)| ids[i].as_str()).collect();
        println!("external verification: {} of {} passed", verdicts.len() - failed.len(), verdicts.len());
        if !failed.is_empty() {
            return Err(CliError::Verification(format!(
                "{} instance(s) failed their testbench: {}",
                failed.len(),
                failed.iter().take(20).copied().collect::<Vec<_>>().join(", ")
            )));
        }
    }

    let records: Vec<_> = ids.iter().zip(&instances).map(|(id, inst)| inst.to_record(id)).collect();
    write_dataset(&records, &cfg.gen.output).map_err(|e| CliError::Other(e.into()))?;
    if let Some(p) = &cfg.gen.rejections {
        write_lines(p, &out.rejections)?;
    }
    if let Some(p) = &cfg.gen.save_db {
        db.save(p).map_err(|e| CliError::Other(e.into()))?;
    }

    println!("{:<14} {:>9} {:>9} {:>7} {:>13} {:>7}", "kind", "generated", "emitted", "dup", "contaminated", "failed");
    let mut total = [0usize; 5];
    for (kind, s) in &out.stats {
        let row = [s.attempts - s.failed, s.accepted, s.dup, s.contaminated, s.failed];
        println!("{:<14} {:>9} {:>9} {:>7} {:>13} {:>7}", kind.tag(), row[0], row[1], row[2], row[3], row[4]);
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    println!("{:<14} {:>9} {:>9} {:>7} {:>13} {:>7}", "total", total[0], total[1], total[2], total[3], total[4]);
    println!("wrote {} records to {}", records.len(), cfg.gen.output.display());
    Ok(())
}

fn repair_error(e: RepairError) -> CliError {
    match e {
        RepairError::Judge(j) => judge_error(j),
        RepairError::Parse { .. } => CliError::Config(e.to_string()),
        other => CliError::Other(other.into()),
    }
}

pub fn repair(mut cfg: RunConfig, a: RepairArgs) -> Result<(), CliError> {
    let r = &mut cfg.repair;
    r.pairs = a.pairs.or(r.pairs.take());
    r.seeds = a.seeds.or(r.seeds.take());
    r.seeds_per_report = a.seeds_per_report.unwrap_or(r.seeds_per_report);
    r.output = a.out.unwrap_or(r.output.clone());
    r.reports = a.reports.or(r.reports.take());
    r.rejections = a.rejections.or(r.rejections.take());
    r.db.extend(a.db);
    r.use_templates &= !a.no_templates;
    r.save_db = a.save_db.or(r.save_db.take());
    let pairs_path = cfg.repair.pairs.clone().ok_or_else(|| CliError::Config("repair needs --pairs".into()))?;

    let provider = provider(&cfg)?
        .ok_or_else(|| CliError::Config("repair needs a provider: set [provider] or pass --mock-script".into()))?;
    let sim = simulator(&mut cfg)?;
    let judge = SimJudge::new(sim, &cfg.repair.judge).map_err(judge_error)?;
    record_config(&cfg, &cfg.repair.output)?;

    let pairs = load_pairs(&pairs_path).map_err(repair_error)?;
    let seeds = match &cfg.repair.seeds {
        Some(p) => load_seed_codes(p).map_err(repair_error)?,
        None => {
            warn!("no --seeds given; reports are validated but nothing is injected");
            Vec::new()
        }
    };
    let mut db = load_db(cfg.repair.use_templates, &cfg.repair.db)?;
    let out = run_repair(pairs, &seeds, provider.as_ref(), &judge, &mut db, &cfg.repair.repair_config(cfg.seed))
        .map_err(repair_error)?;

    write_dataset(&out.dataset(), &cfg.repair.output).map_err(|e| CliError::Other(e.into()))?;
    if let Some(p) = &cfg.repair.reports {
        let lines: Vec<String> =
            out.reports.iter().map(serde_json::to_string).collect::<Result<_, _>>().context("encoding reports")?;
        write_lines(p, &lines)?;
    }
    if let Some(p) = &cfg.repair.rejections {
        write_lines(p, &out.rejections)?;
    }
    for r in &out.rejections {
        info!("rejected {r}");
    }
    if let Some(p) = &cfg.repair.save_db {
        db.save(p).map_err(|e| CliError::Other(e.into()))?;
    }
    println!("{}", out.funnel);
    println!("wrote {} records to {}", out.records.len(), cfg.repair.output.display());
    Ok(())
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Judge(j) => judge_error(j),
        EvalError::Parse { .. } | EvalError::UnknownTask(_) | EvalError::PassAtK(_) => CliError::Config(e.to_string()),
        other => CliError::Other(other.into()),
    }
}

fn write_summary<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(value).context("encoding summary")?;
        fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<(), CliError> {
    let e = &mut cfg.eval;
    e.tasks = a.tasks.or(e.tasks.take());
    e.completions = a.completions.or(e.completions.take());
    e.manifest = a.manifest.or(e.manifest.take());
    if !a.ks.is_empty() {
        e.ks = a.ks;
    }
    e.judge = JudgeConfig {
        failure_pattern: a.failure_pattern.unwrap_or(e.judge.failure_pattern.clone()),
        success_pattern: a.success_pattern.or(e.judge.success_pattern.take()),
    };
    e.results = a.results.unwrap_or(e.results.clone());
    e.summary = a.summary.or(e.summary.take());
    if let Some(k) = cfg.eval.ks.iter().find(|&&k| k == 0) {
        return Err(CliError::Config(format!("k={k} is not a valid budget")));
    }

    if !a.compare.is_empty() {
        let mut sets = Vec::new();
        for spec in &a.compare {
            let (label, path) =
                spec.split_once('=').ok_or_else(|| CliError::Config(format!("--compare wants LABEL=PATH, got `{spec}`")))?;
            let results = read_results(Path::new(path)).map_err(eval_error)?;
            sets.push((label.to_string(), summarize(&results, &cfg.eval.ks).map_err(eval_error)?));
        }
        let c = compare(sets, &cfg.eval.ks).map_err(eval_error)?;
        print!("{}", render_comparison(&c));
        return write_summary(cfg.eval.summary.as_deref(), &c);
    }

    let tasks_path = cfg.eval.tasks.clone().ok_or_else(|| CliError::Config("eval needs --tasks".into()))?;
    let completions = match (&cfg.eval.completions, &cfg.eval.manifest) {
        (Some(d), _) => load_completion_dir(d).map_err(eval_error)?,
        (None, Some(m)) => load_completion_manifest(m).map_err(eval_error)?,
        (None, None) => return Err(CliError::Config("eval needs --completions or --manifest".into())),
    };
    let tasks = load_tasks(&tasks_path).map_err(eval_error)?;
    let sim = simulator(&mut cfg)?;
    let judge = SimJudge::new(sim, &cfg.eval.judge).map_err(judge_error)?;
    record_config(&cfg, &cfg.eval.results)?;

    let results = evaluate(&tasks, &completions, &judge).map_err(eval_error)?;
    write_results(&results, &cfg.eval.results).map_err(eval_error)?;
    let summary = summarize(&results, &cfg.eval.ks).map_err(eval_error)?;
    print!("{}", render_summary(&summary));
    write_summary(cfg.eval.summary.as_deref(), &summary)
}

pub fn fingerprint(cmd: FingerprintCmd) -> Result<(), CliError> {
    let io = |e: vforge::forge::FingerprintError| CliError::Other(e.into());
    let open = |p: &Path| FingerprintDb::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())));
    match cmd {
        FingerprintCmd::Init { out, templates } => {
            let mut db = FingerprintDb::with_benchmark_templates();
            for t in &templates {
                let text = fs::read_to_string(t).with_context(|| format!("reading {}", t.display()))?;
                let parsed = parse_templates(&text).map_err(|e| CliError::Config(format!("{}: {e}", t.display())))?;
                for (name, fp) in parsed {
                    db.insert(fp, format!("{BENCHMARK_PREFIX}{name}"));
                }
            }
            db.save(&out).map_err(io)?;
            println!("{} entries written to {}", db.len(), out.display());
        }
        FingerprintCmd::AddCode { db: path, label, files } => {
            let mut db = if path.exists() { open(&path)? } else { FingerprintDb::new() };
            let mut added = 0;
            for f in &files {
                let code = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
                let name = label.clone().unwrap_or_else(|| f.file_stem().unwrap_or_default().to_string_lossy().into_owned());
                added += usize::from(db.insert(code_fingerprint(&code), format!("{BENCHMARK_PREFIX}{name}")));
            }
            db.save(&path).map_err(io)?;
            println!("added {added} of {} files", files.len());
        }
        FingerprintCmd::AddDataset { db: path, dataset } => {
            let mut db = if path.exists() { open(&path)? } else { FingerprintDb::new() };
            let records = read_dataset(&dataset).map_err(|e| CliError::Config(e.to_string()))?;
            let mut added = 0;
            for r in &records {
                let fp = r.fingerprint.parse().map_err(|e| CliError::Config(format!("record {}: {e}", r.id)))?;
                added += usize::from(db.insert(fp, format!("{RECORD_PREFIX}{}", r.id)));
            }
            db.save(&path).map_err(io)?;
            println!("added {added} of {} records", records.len());
        }
        FingerprintCmd::Check { db: path, templates, dataset } => {
            let mut db = open(&path)?;
            if templates {
                db.merge(&FingerprintDb::with_benchmark_templates());
            }
            let records = read_dataset(&dataset).map_err(|e| CliError::Config(e.to_string()))?;
            let mut hits = Vec::new();
            for r in &records {
                let fp = r.fingerprint.parse().map_err(|e| CliError::Config(format!("record {}: {e}", r.id)))?;
                if let Some(label) = db.get(&fp) {
                    hits.push(RejectionEntry { subject: r.id.clone(), reason: label.to_string() });
                }
            }
            for h in &hits {
                println!("{h}");
            }
            println!("{} of {} records hit the database", hits.len(), records.len());
            if !hits.is_empty() {
                return Err(CliError::Verification(format!("{} fingerprint hits", hits.len())));
            }
        }
        FingerprintCmd::Stats { db: path } => {
            let db = open(&path)?;
            let mut by_prefix: BTreeMap<String, usize> = BTreeMap::new();
            for (_, label) in db.entries() {
                let prefix = label.split_once(':').map_or("(none)", |(p, _)| p);
                *by_prefix.entry(prefix.to_string()).or_default() += 1;
            }
            for (p, n) in by_prefix {
                println!("{p:<12} {n}");
            }
            println!("{:<12} {}", "total", db.len());
        }
    }
    Ok(())
}
