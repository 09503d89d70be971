//! Canonical fingerprints of the semantic objects behind problems, and the
//! database used for deduplication and decontamination.
//!
//! Functions hash their cell vector (variable names dropped, so renaming and
//! map mutations are invisible). Machines hash a BFS relabeling from the
//! reset state, visiting inputs in ascending order, so state names and
//! state order are invisible.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::boolean::{CellValue, FunctionSpec};
use crate::fsm::{FsmGraph, FsmKind, FsmOutputs};

const BENCHMARK_TEMPLATES: &str = include_str!("../../data/benchmark_templates.txt");

pub const BENCHMARK_PREFIX: &str = "benchmark:";
pub const RECORD_PREFIX: &str = "record:";

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid fingerprint `{0}`")]
    Hex(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint([u8; 32]);

impl Fingerprint {
    fn of(canonical: &str) -> Self {
        Self(Sha256::digest(canonical.as_bytes()).into())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &hex::encode(self.0)[..12])
    }
}

impl FromStr for Fingerprint {
    type Err = FingerprintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| FingerprintError::Hex(s.to_string()))?;
        Ok(Self(out))
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn cells_text(cells: impl Iterator<Item = CellValue>) -> String {
    cells.map(CellValue::symbol).collect()
}

pub fn function_fingerprint(spec: &FunctionSpec) -> Fingerprint {
    Fingerprint::of(&format!("function:{}:{}", spec.num_vars(), cells_text(spec.cells().iter().copied())))
}

/// Source text with comments removed and whitespace runs collapsed, so
/// reformatting or re-commenting a module does not change its hash.
pub fn normalize_code(code: &str) -> String {
    let mut out = String::with_capacity(code.len());
    let mut rest = code;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("//") {
            rest = r.find('\n').map_or("", |i| &r[i..]);
            out.push(' ');
        } else if let Some(r) = rest.strip_prefix("/*") {
            rest = r.find("*/").map_or("", |i| &r[i + 2..]);
            out.push(' ');
        } else {
            let c = rest.chars().next().expect("non-empty");
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn code_fingerprint(code: &str) -> Fingerprint {
    Fingerprint::of(&format!("code:{}", normalize_code(code)))
}

/// Identity of a repair sample: the broken and fixed code, normalized.
pub fn repair_fingerprint(erroneous: &str, repaired: &str) -> Fingerprint {
    Fingerprint::of(&format!("repair:{}\n{}", normalize_code(erroneous), normalize_code(repaired)))
}

/// States in BFS discovery order from the reset state.
pub fn canonical_order(fsm: &FsmGraph) -> Vec<usize> {
    let mut label = vec![usize::MAX; fsm.num_states()];
    let mut order = vec![fsm.reset_state];
    label[fsm.reset_state] = 0;
    let mut queue = VecDeque::from([fsm.reset_state]);
    while let Some(s) = queue.pop_front() {
        for i in 0..fsm.num_inputs() as u32 {
            let t = fsm.next_state(s, i);
            if label[t] == usize::MAX {
                label[t] = order.len();
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    order
}

pub fn fsm_fingerprint(fsm: &FsmGraph) -> Fingerprint {
    let order = canonical_order(fsm);
    let mut label = vec![usize::MAX; fsm.num_states()];
    for (l, &s) in order.iter().enumerate() {
        label[s] = l;
    }
    let kind = match fsm.kind() {
        FsmKind::Moore => "moore",
        FsmKind::Mealy => "mealy",
    };
    let rows: Vec<String> = order
        .iter()
        .map(|&s| {
            let next: Vec<String> = (0..fsm.num_inputs() as u32).map(|i| label[fsm.next_state(s, i)].to_string()).collect();
            let out: String = match &fsm.outputs {
                FsmOutputs::Moore(o) => u8::from(o[s]).to_string(),
                FsmOutputs::Mealy(o) => o[s].iter().map(|&b| if b { '1' } else { '0' }).collect(),
            };
            format!("{}/{out}", next.join(","))
        })
        .collect();
    Fingerprint::of(&format!("machine:{kind}:{}:{}:{}", fsm.input_width, order.len(), rows.join(";")))
}

/// Why an item was refused by [`FingerprintDb::admit`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    /// Same object as an earlier record.
    Dup { first: String },
    /// Same object as a benchmark template.
    Contaminated { template: String },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Dup { first } => write!(f, "DUP of {first}"),
            Rejection::Contaminated { template } => write!(f, "CONTAMINATED by {template}"),
        }
    }
}

/// Fingerprint → label. Labels starting with `benchmark:` mark template
/// entries; everything else counts as an earlier record.
#[derive(Clone, Debug, Default)]
pub struct FingerprintDb {
    entries: HashMap<Fingerprint, String>,
}

impl FingerprintDb {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped benchmark templates, expanded over every variable order
    /// (functions) and every reset state that reaches all states (machines).
    pub fn with_benchmark_templates() -> Self {
        let mut db = Self::new();
        for (name, fp) in parse_templates(BENCHMARK_TEMPLATES).expect("shipped template file parses") {
            db.insert(fp, format!("{BENCHMARK_PREFIX}{name}"));
        }
        db
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, fp: &Fingerprint) -> Option<&str> {
        self.entries.get(fp).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Fingerprint, &str)> {
        self.entries.iter().map(|(f, l)| (f, l.as_str()))
    }

    pub fn contains(&self, fp: &Fingerprint) -> bool {
        self.entries.contains_key(fp)
    }

    /// Inserts unless present; returns whether the entry is new.
    pub fn insert(&mut self, fp: Fingerprint, label: impl Into<String>) -> bool {
        use std::collections::hash_map::Entry;
        match self.entries.entry(fp) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(label.into());
                true
            }
        }
    }

    /// Membership check and insertion in one step.
    pub fn admit(&mut self, id: &str, fp: Fingerprint) -> Result<(), Rejection> {
        if let Some(label) = self.entries.get(&fp) {
            return Err(match label.strip_prefix(BENCHMARK_PREFIX) {
                Some(t) => Rejection::Contaminated { template: t.to_string() },
                None => Rejection::Dup { first: label.strip_prefix(RECORD_PREFIX).unwrap_or(label).to_string() },
            });
        }
        self.entries.insert(fp, format!("{RECORD_PREFIX}{id}"));
        Ok(())
    }

    pub fn benchmark_hit(&self, fp: &Fingerprint) -> Option<&str> {
        self.get(fp).and_then(|l| l.strip_prefix(BENCHMARK_PREFIX))
    }

    /// Reads `hex label` lines; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self, FingerprintError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, FingerprintError> {
        let mut db = Self::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (hex, label) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let fp = hex.parse().map_err(|_| FingerprintError::Parse { line: k + 1, msg: format!("bad hash `{hex}`") })?;
            db.insert(fp, label.trim());
        }
        Ok(db)
    }

    /// Writes entries sorted by hash.
    pub fn save(&self, path: &Path) -> Result<(), FingerprintError> {
        let mut entries: Vec<_> = self.entries.iter().collect();
        entries.sort();
        let mut out = BufWriter::new(fs::File::create(path)?);
        for (fp, label) in entries {
            writeln!(out, "{fp} {label}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn merge(&mut self, other: &FingerprintDb) {
        for (fp, label) in &other.entries {
            self.insert(*fp, label.clone());
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Cell vector of `cells` after reordering variables so that new variable
/// `j` is old variable `perm[j]`.
fn permute_cells(cells: &[CellValue], n: usize, perm: &[usize]) -> Vec<CellValue> {
    (0..1usize << n)
        .map(|new_idx| {
            let old_idx = (0..n).fold(0usize, |acc, j| {
                let bit = (new_idx >> (n - 1 - j)) & 1;
                acc | (bit << (n - 1 - perm[j]))
            });
            cells[old_idx]
        })
        .collect()
}

/// Every fingerprint a template should block.
pub fn parse_templates(text: &str) -> Result<Vec<(String, Fingerprint)>, FingerprintError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| FingerprintError::Parse { line: k + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("function") if fields.len() == 4 => {
                let vars: Vec<String> = fields[2].split(',').map(str::to_string).collect();
                let cells: Vec<CellValue> = fields[3]
                    .chars()
                    .map(|c| CellValue::from_symbol(c).ok_or_else(|| err(format!("bad cell `{c}`"))))
                    .collect::<Result<_, _>>()?;
                let n = vars.len();
                let spec = FunctionSpec::new(vars, cells, 0).map_err(|e| err(e.to_string()))?;
                for perm in permutations(n) {
                    let cells = permute_cells(spec.cells(), n, &perm);
                    let p = FunctionSpec::new(spec.var_names().to_vec(), cells, 0).map_err(|e| err(e.to_string()))?;
                    out.push((fields[1].to_string(), function_fingerprint(&p)));
                }
            }
            Some("machine") if fields.len() >= 5 => {
                let graph = parse_machine(&fields[2..]).map_err(err)?;
                for reset in 0..graph.num_states() {
                    let g = FsmGraph { reset_state: reset, ..graph.clone() };
                    if g.validate().is_ok() {
                        out.push((fields[1].to_string(), fsm_fingerprint(&g)));
                    }
                }
            }
            _ => return Err(err(format!("unrecognised template line `{line}`"))),
        }
    }
    Ok(out)
}

fn parse_machine(fields: &[&str]) -> Result<FsmGraph, String> {
    let kind = match fields[0] {
        "moore" => FsmKind::Moore,
        "mealy" => FsmKind::Mealy,
        other => return Err(format!("unknown machine kind `{other}`")),
    };
    let width: u32 = fields[1].parse().map_err(|_| format!("bad width `{}`", fields[1]))?;
    let rows: Vec<(&str, &str, &str)> = fields[2..]
        .iter()
        .map(|r| {
            let (name, rest) = r.split_once(':').ok_or(format!("bad row `{r}`"))?;
            let (next, out) = rest.split_once('/').ok_or(format!("bad row `{r}`"))?;
            Ok((name, next, out))
        })
        .collect::<Result<_, String>>()?;
    let names: Vec<String> = rows.iter().map(|r| r.0.to_string()).collect();
    let index = |n: &str| names.iter().position(|m| m == n).ok_or(format!("unknown state `{n}`"));
    let transitions =
        rows.iter().map(|r| r.1.split(',').map(index).collect::<Result<Vec<_>, _>>()).collect::<Result<Vec<_>, _>>()?;
    let bits = |s: &str| s.chars().map(|c| c == '1').collect::<Vec<bool>>();
    let outputs = match kind {
        FsmKind::Moore => FsmOutputs::Moore(rows.iter().map(|r| r.2 == "1").collect()),
        FsmKind::Mealy => FsmOutputs::Mealy(rows.iter().map(|r| bits(r.2)).collect()),
    };
    let graph = FsmGraph { state_names: names, reset_state: 0, input_width: width, transitions, outputs, seed: 0 };
    graph.validate().map_err(|e| e.to_string())?;
    Ok(graph)
}
