//! Corpus generation: parallel forging, sequential dedup/decontamination,
//! instruction rewriting and external-simulator spot checks.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forge_problem, DatasetRecord, FingerprintDb, ForgeError, ForgeParams, ProblemInstance, ProblemKind};
use crate::provider::{CompletionRequest, TextProvider};
use crate::sim::{run_batch, BatchVerdict, SimError, Simulator};

pub const REWRITE_SYSTEM_PROMPT: &str = "You edit the wording of hardware design exercises. Rephrase the instruction you are given without changing its meaning: keep every signal name, state name, encoding and reset detail. Reply with the rephrased instruction only, as plain text.";

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-attempt seed, independent of thread count and chunking.
pub fn derive_seed(base: u64, kind: ProblemKind, attempt: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ kind.index()) ^ attempt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    /// Accepted instances wanted per kind.
    pub counts: BTreeMap<ProblemKind, usize>,
    pub params: ForgeParams,
    /// Attempts forged in parallel before each sequential screening pass.
    pub chunk_size: usize,
    /// Give up on a kind after `max_attempt_factor · count + 1000` attempts.
    pub max_attempt_factor: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        let counts = [
            (ProblemKind::Kmap, 6250),
            (ProblemKind::TruthTable, 6250),
            (ProblemKind::FsmTable, 4000),
            (ProblemKind::FsmEdgeList, 4000),
            (ProblemKind::WaveComb, 4000),
            (ProblemKind::WaveSeq, 4000),
        ];
        Self {
            seed: 0,
            counts: counts.into_iter().collect(),
            params: ForgeParams::default(),
            chunk_size: 512,
            max_attempt_factor: 20,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct KindStats {
    pub attempts: usize,
    pub accepted: usize,
    pub dup: usize,
    pub contaminated: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RejectionEntry {
    /// Record id, or kind and seed for instances that never got one.
    pub subject: String,
    pub reason: String,
}

impl fmt::Display for RejectionEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.subject, self.reason)
    }
}

#[derive(Debug, Default)]
pub struct GenOutput {
    /// Accepted instances with their record ids, grouped by kind in
    /// [`ProblemKind::ALL`] order.
    pub instances: Vec<(String, ProblemInstance)>,
    pub rejections: Vec<RejectionEntry>,
    pub stats: BTreeMap<ProblemKind, KindStats>,
}

impl GenOutput {
    pub fn records(&self) -> Vec<DatasetRecord> {
        self.instances.iter().map(|(id, inst)| inst.to_record(id)).collect()
    }
}

/// Forges until every kind reaches its count. Forging runs on the current
/// rayon pool; screening against `db` is sequential in attempt order, so the
/// output depends only on the config and the initial db.
pub fn generate(config: &GenConfig, db: &mut FingerprintDb) -> Result<GenOutput, ForgeError> {
    config.params.validate()?;
    let mut out = GenOutput::default();
    let chunk = config.chunk_size.max(1) as u64;
    for kind in ProblemKind::ALL {
        let want = config.counts.get(&kind).copied().unwrap_or(0);
        if want == 0 {
            continue;
        }
        let budget = (want * config.max_attempt_factor + 1000) as u64;
        let mut stats = KindStats::default();
        let mut next = 0u64;
        while stats.accepted < want {
            if next >= budget {
                return Err(ForgeError::Exhausted { kind, accepted: stats.accepted, wanted: want, attempts: stats.attempts });
            }
            let end = (next + chunk).min(budget);
            let forged: Vec<(u64, Result<ProblemInstance, ForgeError>)> = (next..end)
                .into_par_iter()
                .map(|a| {
                    let s = derive_seed(config.seed, kind, a);
                    (s, forge_problem(kind, &config.params, s))
                })
                .collect();
            next = end;
            for (seed, result) in forged {
                if stats.accepted == want {
                    break;
                }
                stats.attempts += 1;
                let inst = match result {
                    Ok(i) => i,
                    Err(e) => {
                        stats.failed += 1;
                        out.rejections.push(RejectionEntry { subject: format!("{kind} seed={seed}"), reason: format!("FAILED {e}") });
                        continue;
                    }
                };
                let id = format!("{}-{:05}", kind.slug(), stats.accepted);
                match db.admit(&id, inst.fingerprint) {
                    Ok(()) => {
                        stats.accepted += 1;
                        out.instances.push((id, inst));
                    }
                    Err(rej) => {
                        match rej {
                            super::Rejection::Dup { .. } => stats.dup += 1,
                            super::Rejection::Contaminated { .. } => stats.contaminated += 1,
                        }
                        out.rejections.push(RejectionEntry { subject: format!("{kind} seed={seed}"), reason: rej.to_string() });
                    }
                }
            }
        }
        log::info!(
            "{kind}: {} accepted from {} attempts ({} dup, {} contaminated, {} failed)",
            stats.accepted,
            stats.attempts,
            stats.dup,
            stats.contaminated,
            stats.failed
        );
        out.stats.insert(kind, stats);
    }
    Ok(out)
}

/// Drops records whose fingerprint is already in `db` and adds the rest.
/// Order is preserved.
pub fn decontaminate_and_dedup(
    records: impl IntoIterator<Item = DatasetRecord>,
    db: &mut FingerprintDb,
) -> (Vec<DatasetRecord>, Vec<RejectionEntry>) {
    let mut kept = Vec::new();
    let mut log = Vec::new();
    for r in records {
        let fp = match r.fingerprint.parse() {
            Ok(fp) => fp,
            Err(_) => {
                log.push(RejectionEntry { subject: r.id.clone(), reason: format!("BAD_FINGERPRINT {}", r.fingerprint) });
                continue;
            }
        };
        match db.admit(&r.id, fp) {
            Ok(()) => kept.push(r),
            Err(rej) => log.push(RejectionEntry { subject: r.id.clone(), reason: rej.to_string() }),
        }
    }
    (kept, log)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RewriteReport {
    pub selected: usize,
    pub rewritten: usize,
    /// (instance index, reason) for selected instances left unchanged.
    pub kept_original: Vec<(usize, String)>,
}

/// A usable paraphrase is non-empty prose: no module header, code fence or
/// comment line that could pass for a representation block.
fn acceptable_rewrite(text: &str) -> bool {
    let t = text.trim();
    !t.is_empty() && !t.contains("```") && !t.contains("module ") && !t.lines().any(|l| l.trim_start().starts_with("//"))
}

/// Replaces the instruction of exactly `⌊fraction·N⌋` instances, chosen by a
/// seeded shuffle, with a provider paraphrase. Representations and headers
/// are untouched. Provider failures keep the original text.
pub fn rewrite_instructions(
    instances: &mut [ProblemInstance],
    provider: &dyn TextProvider,
    fraction: f64,
    seed: u64,
) -> Result<RewriteReport, ForgeError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ForgeError::Params(format!("rewrite fraction {fraction} outside [0, 1]")));
    }
    let k = (fraction * instances.len() as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..instances.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    let replies: Vec<(usize, Result<String, String>)> = chosen
        .par_iter()
        .map(|&i| {
            let user = format!("<instruction>\n{}\n</instruction>", instances[i].instruction);
            let req = CompletionRequest::new(REWRITE_SYSTEM_PROMPT, user, format!("rewrite-{seed}-{i}"));
            let reply = match provider.complete(&req) {
                Ok(c) if c.truncated => Err("truncated".to_string()),
                Ok(c) if acceptable_rewrite(&c.text) => Ok(c.text.trim().to_string()),
                Ok(_) => Err("unusable paraphrase".to_string()),
                Err(e) => Err(e.to_string()),
            };
            (i, reply)
        })
        .collect();
    let mut report = RewriteReport { selected: k, ..Default::default() };
    for (i, reply) in replies {
        match reply {
            Ok(text) => {
                instances[i].instruction = text;
                report.rewritten += 1;
            }
            Err(why) => {
                log::warn!("instruction rewrite for instance {i} kept the original: {why}");
                report.kept_original.push((i, why));
            }
        }
    }
    Ok(report)
}

/// Sorted indices of `⌈fraction·n⌉` items chosen by a seeded shuffle.
pub fn sample_for_verification(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

/// Runs instances through the external simulator in batches.
pub fn simulate_instances(sim: &Simulator, instances: &[&ProblemInstance]) -> Result<Vec<BatchVerdict>, SimError> {
    let items: Vec<_> = instances.iter().map(|i| (i.artifact.clone(), i.testbench.clone())).collect();
    run_batch(sim, &items, false)
}
