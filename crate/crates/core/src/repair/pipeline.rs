use std::fmt;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_error_report, inject_error, self_consistency_check, verify_pair, CodePair, ErrorReport, InjectOutcome,
    RepairError, RepairRecord, SeedCode, ValidatedReport,
};
use crate::forge::{
    code_fingerprint, normalize_code, repair_fingerprint, DatasetRecord, FingerprintDb, Rejection, RejectionEntry,
    BENCHMARK_PREFIX,
};
use crate::forge::pipeline::splitmix64;
use crate::judge::CodeJudge;
use crate::provider::TextProvider;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    pub seed: u64,
    /// Seed snippets drawn per validated report.
    pub seeds_per_report: usize,
    /// Re-asks with a format reminder before an answer counts as unreadable.
    pub format_retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self { seed: 0, seeds_per_report: 3, format_retries: 1, temperature: 0.0, max_tokens: 2048 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub syntax: usize,
    pub unchanged: usize,
    pub contaminated: usize,
    pub dup: usize,
    pub kept: usize,
}

/// Counts at every step; the headline shape is reports, raw samples, final.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairFunnel {
    pub pairs: usize,
    pub pairs_verified: usize,
    pub reports_built: usize,
    pub report_failures: usize,
    pub reports_validated: usize,
    pub reports_rejected: usize,
    pub injections: usize,
    pub skipped: usize,
    pub injection_failures: usize,
    pub raw_samples: usize,
    pub filter: FilterStats,
}

impl RepairFunnel {
    pub fn final_records(&self) -> usize {
        self.filter.kept
    }
}

impl fmt::Display for RepairFunnel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "funnel: reports {} -> raw samples {} -> final {}",
            self.reports_validated,
            self.raw_samples,
            self.final_records()
        )?;
        writeln!(f, "  pairs        {} in, {} verified", self.pairs, self.pairs_verified)?;
        writeln!(
            f,
            "  reports      {} built, {} unreadable or failed, {} validated, {} rejected",
            self.reports_built, self.report_failures, self.reports_validated, self.reports_rejected
        )?;
        writeln!(
            f,
            "  injections   {} asked, {} skipped, {} failed, {} samples",
            self.injections, self.skipped, self.injection_failures, self.raw_samples
        )?;
        write!(
            f,
            "  filter       SYNTAX {}, UNCHANGED {}, CONTAMINATED {}, DUP {}, kept {}",
            self.filter.syntax, self.filter.unchanged, self.filter.contaminated, self.filter.dup, self.filter.kept
        )
    }
}

/// Drops records with a code block that does not compile, records whose
/// two blocks are the same code, benchmark hits and duplicates. Syntax
/// checks run in parallel; the fingerprint pass runs in input order.
pub fn filter_repair_records(
    records: Vec<RepairRecord>,
    db: &mut FingerprintDb,
    judge: &dyn CodeJudge,
) -> Result<(Vec<RepairRecord>, FilterStats, Vec<RejectionEntry>), RepairError> {
    let compiles: Vec<bool> = records
        .par_iter()
        .map(|r| Ok(judge.syntax_ok(&r.erroneous)? && judge.syntax_ok(&r.repaired)?))
        .collect::<Result<_, RepairError>>()?;
    let mut stats = FilterStats { input: records.len(), ..FilterStats::default() };
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    let mut reject = |r: &RepairRecord, reason: String| rejected.push(RejectionEntry { subject: r.id.clone(), reason });
    for (r, ok) in records.into_iter().zip(compiles) {
        if !ok {
            stats.syntax += 1;
            reject(&r, "SYNTAX".into());
            continue;
        }
        if normalize_code(&r.erroneous) == normalize_code(&r.repaired) {
            stats.unchanged += 1;
            reject(&r, "UNCHANGED".into());
            continue;
        }
        let hit = [code_fingerprint(&r.erroneous), code_fingerprint(&r.repaired)]
            .iter()
            .find_map(|fp| db.benchmark_hit(fp).map(str::to_string));
        if let Some(name) = hit {
            stats.contaminated += 1;
            reject(&r, format!("CONTAMINATED by {name}"));
            continue;
        }
        match db.admit(&r.id, repair_fingerprint(&r.erroneous, &r.repaired)) {
            Ok(()) => kept.push(r),
            Err(e) => {
                match e {
                    Rejection::Dup { .. } => stats.dup += 1,
                    Rejection::Contaminated { .. } => stats.contaminated += 1,
                }
                reject(&r, e.to_string());
            }
        }
    }
    stats.kept = kept.len();
    Ok((kept, stats, rejected))
}

#[derive(Clone, Debug)]
pub struct RepairOutput {
    /// Filtered records in emission order.
    pub records: Vec<RepairRecord>,
    /// Every report built, validated or not.
    pub reports: Vec<ErrorReport>,
    pub funnel: RepairFunnel,
    pub rejections: Vec<RejectionEntry>,
    seed: u64,
}

impl RepairOutput {
    pub fn dataset(&self) -> Vec<DatasetRecord> {
        self.records.iter().enumerate().map(|(i, r)| r.to_dataset(&format!("repair-{i:05}"), self.seed)).collect()
    }
}

fn pick_seeds(seeds: &[SeedCode], k: usize, base: u64, report_index: usize) -> Vec<&SeedCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(base) ^ report_index as u64));
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    order.shuffle(&mut rng);
    order.into_iter().take(k).map(|i| &seeds[i]).collect()
}

/// Report, validate, inject, filter. Benchmark pair code is added to `db`
/// as contamination entries before filtering.
pub fn run_repair(
    pairs: Vec<CodePair>,
    seeds: &[SeedCode],
    provider: &dyn TextProvider,
    judge: &dyn CodeJudge,
    db: &mut FingerprintDb,
    cfg: &RepairConfig,
) -> Result<RepairOutput, RepairError> {
    let mut funnel = RepairFunnel { pairs: pairs.len(), ..RepairFunnel::default() };
    let mut rejections = Vec::new();
    for p in &pairs {
        for code in [&p.correct, &p.erroneous] {
            db.insert(code_fingerprint(code), format!("{BENCHMARK_PREFIX}{}", p.id));
        }
    }

    let checked: Vec<_> = pairs
        .into_par_iter()
        .map(|p| {
            let id = p.id.clone();
            verify_pair(p, judge).map(|r| (id, r))
        })
        .collect::<Result<_, _>>()?;
    let mut verified = Vec::new();
    for (id, r) in checked {
        match r {
            Ok(v) => verified.push(v),
            Err(why) => rejections.push(RejectionEntry { subject: id, reason: format!("PAIR {why}") }),
        }
    }
    funnel.pairs_verified = verified.len();

    let built: Vec<Result<ErrorReport, RepairError>> =
        verified.par_iter().map(|v| build_error_report(v, provider, cfg)).collect();
    let mut reports = Vec::new();
    let mut to_check = Vec::new();
    for (v, r) in verified.iter().zip(built) {
        match r {
            Ok(rep) => to_check.push((v, rep)),
            Err(e) if e.is_item_level() => {
                funnel.report_failures += 1;
                rejections.push(RejectionEntry { subject: v.pair().id.clone(), reason: format!("REPORT {e}") });
            }
            Err(e) => return Err(e),
        }
    }
    funnel.reports_built = to_check.len();

    let validated_or_not: Vec<_> = to_check
        .into_par_iter()
        .map(|(v, rep)| {
            let id = rep.id.clone();
            (id, self_consistency_check(rep, v, provider, judge, cfg))
        })
        .collect();
    let mut validated: Vec<ValidatedReport> = Vec::new();
    for (id, r) in validated_or_not {
        match r {
            Ok(Ok(ok)) => {
                reports.push(ok.report().clone());
                validated.push(ok);
            }
            Ok(Err(rej)) => {
                funnel.reports_rejected += 1;
                rejections.push(RejectionEntry { subject: id, reason: format!("SELF-CONSISTENCY {}", rej.verdict) });
                reports.push(rej.report);
            }
            Err(e) if e.is_item_level() => {
                funnel.reports_rejected += 1;
                rejections.push(RejectionEntry { subject: id, reason: format!("SELF-CONSISTENCY {e}") });
            }
            Err(e) => return Err(e),
        }
    }
    funnel.reports_validated = validated.len();
    if seeds.is_empty() && !validated.is_empty() {
        warn!("no seed code given; nothing to inject into");
    }

    let jobs: Vec<(&ValidatedReport, &SeedCode)> = validated
        .iter()
        .enumerate()
        .flat_map(|(i, r)| pick_seeds(seeds, cfg.seeds_per_report, cfg.seed, i).into_iter().map(move |s| (r, s)))
        .collect();
    funnel.injections = jobs.len();
    let injected: Vec<_> = jobs.par_iter().map(|(r, s)| inject_error(r, s, provider, cfg)).collect();
    let mut raw = Vec::new();
    for ((r, s), out) in jobs.iter().zip(injected) {
        let subject = format!("{}/{}", r.report().id, s.id);
        match out {
            Ok(InjectOutcome::Record(rec)) => raw.push(rec),
            Ok(InjectOutcome::Skipped { reason }) => {
                funnel.skipped += 1;
                rejections.push(RejectionEntry { subject, reason: format!("SKIP {reason}") });
            }
            Err(e) if e.is_item_level() => {
                funnel.injection_failures += 1;
                rejections.push(RejectionEntry { subject, reason: format!("INJECT {e}") });
            }
            Err(e) => return Err(e),
        }
    }
    funnel.raw_samples = raw.len();

    let (records, stats, filtered) = filter_repair_records(raw, db, judge)?;
    funnel.filter = stats;
    rejections.extend(filtered);
    info!("{funnel}");
    Ok(RepairOutput { records, reports, funnel, rejections, seed: cfg.seed })
}
