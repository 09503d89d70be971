//! Random Moore/Mealy state machines, their text renderings and a reference
//! interpreter.
//!
//! Generation follows a tree-first construction: a random tree rooted at the
//! reset state guarantees reachability, and the remaining input slots of every
//! state are filled with uniformly random successors.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boolean::bit_string;

pub const MAX_STATES: usize = 16;
const MAX_GENERATION_ATTEMPTS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum FsmError {
    #[error("state count {0} out of range 2..=16")]
    StateCount(usize),
    #[error("input width {0} out of range 1..=2")]
    InputWidth(u32),
    #[error("input value {value} does not fit in {width} bits")]
    InputRange { value: u32, width: u32 },
    #[error("state {0} out of range")]
    StateIndex(usize),
    #[error("expected {expected} state names, got {got}")]
    NameCount { expected: usize, got: usize },
    #[error("machine is malformed: {0}")]
    Malformed(String),
    #[error("no machine with non-constant output after {0} attempts")]
    Exhausted(usize),
    #[error("encoding codes must be distinct and of uniform width")]
    Encoding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmKind {
    Moore,
    Mealy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FsmOutputs {
    /// One output bit per state.
    Moore(Vec<bool>),
    /// One output bit per (state, input).
    Mealy(Vec<Vec<bool>>),
}

/// A deterministic, total, fully reachable state machine with a 1-bit output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmGraph {
    pub state_names: Vec<String>,
    pub reset_state: usize,
    pub input_width: u32,
    /// `transitions[state][input]` is the successor state.
    pub transitions: Vec<Vec<usize>>,
    pub outputs: FsmOutputs,
    pub seed: u64,
}

impl FsmGraph {
    /// Validates and builds a machine from explicit parts.
    pub fn new(
        state_names: Vec<String>,
        reset_state: usize,
        input_width: u32,
        transitions: Vec<Vec<usize>>,
        outputs: FsmOutputs,
        seed: u64,
    ) -> Result<Self, FsmError> {
        let g = Self { state_names, reset_state, input_width, transitions, outputs, seed };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), FsmError> {
        let n = self.num_states();
        if !(2..=MAX_STATES).contains(&n) {
            return Err(FsmError::StateCount(n));
        }
        if !(1..=2).contains(&self.input_width) {
            return Err(FsmError::InputWidth(self.input_width));
        }
        if self.state_names.len() != n {
            return Err(FsmError::NameCount { expected: n, got: self.state_names.len() });
        }
        if self.reset_state >= n {
            return Err(FsmError::StateIndex(self.reset_state));
        }
        let slots = self.num_inputs();
        for row in &self.transitions {
            if row.len() != slots || row.iter().any(|&t| t >= n) {
                return Err(FsmError::Malformed("transition table is not total".into()));
            }
        }
        match &self.outputs {
            FsmOutputs::Moore(o) if o.len() != n => return Err(FsmError::Malformed("moore outputs".into())),
            FsmOutputs::Mealy(o) if o.len() != n || o.iter().any(|r| r.len() != slots) => {
                return Err(FsmError::Malformed("mealy outputs".into()))
            }
            _ => {}
        }
        if self.reachable().len() != n {
            return Err(FsmError::Malformed("unreachable states".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> FsmKind {
        match self.outputs {
            FsmOutputs::Moore(_) => FsmKind::Moore,
            FsmOutputs::Mealy(_) => FsmKind::Mealy,
        }
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn num_inputs(&self) -> usize {
        1 << self.input_width
    }

    pub fn next_state(&self, state: usize, input: u32) -> usize {
        self.transitions[state][input as usize]
    }

    /// Output while in `state` with `input` applied. Moore machines ignore
    /// the input.
    pub fn output(&self, state: usize, input: u32) -> bool {
        match &self.outputs {
            FsmOutputs::Moore(o) => o[state],
            FsmOutputs::Mealy(o) => o[state][input as usize],
        }
    }

    /// States in BFS discovery order from the reset state, inputs ascending.
    pub fn reachable(&self) -> Vec<usize> {
        let n = self.num_states();
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([self.reset_state]);
        seen[self.reset_state] = true;
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for &t in &self.transitions[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        order
    }

    /// Every state paired with every input value.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        (0..self.num_states()).flat_map(move |s| (0..self.num_inputs() as u32).map(move |i| (s, i)))
    }

    /// Moves state `i` to position `order.iter().position(i)`. Names travel
    /// with their states.
    pub fn permute_states(&self, order: &[usize]) -> Result<Self, FsmError> {
        let n = self.num_states();
        let mut new_index = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || new_index[old] != usize::MAX {
                return Err(FsmError::Malformed("not a permutation".into()));
            }
            new_index[old] = new;
        }
        if order.len() != n {
            return Err(FsmError::Malformed("not a permutation".into()));
        }
        let transitions = order.iter().map(|&old| self.transitions[old].iter().map(|&t| new_index[t]).collect()).collect();
        let outputs = match &self.outputs {
            FsmOutputs::Moore(o) => FsmOutputs::Moore(order.iter().map(|&old| o[old]).collect()),
            FsmOutputs::Mealy(o) => FsmOutputs::Mealy(order.iter().map(|&old| o[old].clone()).collect()),
        };
        Ok(Self {
            state_names: order.iter().map(|&old| self.state_names[old].clone()).collect(),
            reset_state: new_index[self.reset_state],
            input_width: self.input_width,
            transitions,
            outputs,
            seed: self.seed,
        })
    }

    pub fn with_state_names(&self, names: Vec<String>) -> Result<Self, FsmError> {
        if names.len() != self.num_states() {
            return Err(FsmError::NameCount { expected: self.num_states(), got: names.len() });
        }
        Ok(Self { state_names: names, ..self.clone() })
    }

    fn has_constant_output(&self) -> bool {
        let all: Vec<bool> = match &self.outputs {
            FsmOutputs::Moore(o) => o.clone(),
            FsmOutputs::Mealy(o) => o.iter().flatten().copied().collect(),
        };
        !(all.contains(&true) && all.contains(&false))
    }
}

/// Alphabetic state names `A, B, ...`.
pub fn alphabetic_names(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect()
}

/// Random rooted tree over `n` nodes as a parent map. Node 0 is the root and
/// every other node's parent has a smaller index.
pub fn generate_random_tree(n: usize, rng_seed: u64) -> Result<Vec<Option<usize>>, FsmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    bounded_tree(n, usize::MAX, &mut rng)
}

fn bounded_tree(n: usize, max_children: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Option<usize>>, FsmError> {
    if n < 2 {
        return Err(FsmError::StateCount(n));
    }
    let mut parent = vec![None; n];
    let mut children = vec![0usize; n];
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| children[u] < max_children).collect();
        let p = *open.choose(rng).expect("each node adds at least one open slot");
        parent[v] = Some(p);
        children[p] += 1;
    }
    Ok(parent)
}

/// Generates a random machine with `n` states and a `w`-bit input.
///
/// The tree edges become transitions on randomly chosen input slots of the
/// parent; the remaining slots get uniform random successors. Outputs are
/// random per state (Moore) or per edge (Mealy) and resampled until they are
/// not constant.
pub fn generate_fsm(n: usize, w: u32, kind: FsmKind, rng_seed: u64) -> Result<FsmGraph, FsmError> {
    if !(2..=MAX_STATES).contains(&n) {
        return Err(FsmError::StateCount(n));
    }
    if !(1..=2).contains(&w) {
        return Err(FsmError::InputWidth(w));
    }
    let slots = 1usize << w;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let parent = bounded_tree(n, slots, &mut rng)?;

    let mut transitions: Vec<Vec<Option<usize>>> = vec![vec![None; slots]; n];
    for (v, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            let free: Vec<usize> = (0..slots).filter(|&i| transitions[p][i].is_none()).collect();
            let slot = *free.choose(&mut rng).expect("tree respects the out-degree bound");
            transitions[p][slot] = Some(v);
        }
    }
    let transitions: Vec<Vec<usize>> = transitions
        .into_iter()
        .map(|row| row.into_iter().map(|t| t.unwrap_or_else(|| rng.gen_range(0..n))).collect())
        .collect();

    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let outputs = match kind {
            FsmKind::Moore => FsmOutputs::Moore((0..n).map(|_| rng.gen()).collect()),
            FsmKind::Mealy => FsmOutputs::Mealy((0..n).map(|_| (0..slots).map(|_| rng.gen()).collect()).collect()),
        };
        let g = FsmGraph {
            state_names: alphabetic_names(n),
            reset_state: 0,
            input_width: w,
            transitions: transitions.clone(),
            outputs,
            seed: rng_seed,
        };
        if !g.has_constant_output() {
            debug_assert!(g.validate().is_ok());
            return Ok(g);
        }
    }
    Err(FsmError::Exhausted(MAX_GENERATION_ATTEMPTS))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncodingScheme {
    Binary,
    OneHot,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEncoding {
    pub scheme: EncodingScheme,
    pub width: usize,
    pub codes: Vec<u64>,
}

impl StateEncoding {
    pub fn explicit(width: usize, codes: Vec<u64>) -> Result<Self, FsmError> {
        let mut sorted = codes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != codes.len() || width == 0 || width > 32 || codes.iter().any(|&c| c >> width != 0) {
            return Err(FsmError::Encoding);
        }
        Ok(Self { scheme: EncodingScheme::Explicit, width, codes })
    }

    pub fn code_str(&self, state: usize) -> String {
        bit_string(self.codes[state], self.width)
    }

    /// `4'b0001` style literal.
    pub fn literal(&self, state: usize) -> String {
        format!("{}'b{}", self.width, self.code_str(state))
    }

    pub fn state_of(&self, code: u64) -> Option<usize> {
        self.codes.iter().position(|&c| c == code)
    }
}

pub fn encode_states(fsm: &FsmGraph, scheme: EncodingScheme) -> StateEncoding {
    let n = fsm.num_states();
    match scheme {
        EncodingScheme::OneHot => StateEncoding { scheme, width: n, codes: (0..n).map(|i| 1u64 << i).collect() },
        EncodingScheme::Binary | EncodingScheme::Explicit => {
            let width = (usize::BITS - (n - 1).leading_zeros()).max(1) as usize;
            StateEncoding { scheme: EncodingScheme::Binary, width, codes: (0..n as u64).collect() }
        }
    }
}

/// Signal names used when rendering encoded tables and edge lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalNames {
    pub input: String,
    pub output: String,
    pub present: String,
    pub next: String,
}

impl Default for SignalNames {
    fn default() -> Self {
        Self { input: "x".into(), output: "z".into(), present: "y".into(), next: "Y".into() }
    }
}

pub fn input_label(value: u32, width: u32) -> String {
    bit_string(value as u64, width as usize)
}

/// Row labelling for [`render_transition_table`].
#[derive(Clone, Copy, Debug)]
pub enum TableLabels<'a> {
    Names,
    Encoded(&'a StateEncoding, &'a SignalNames),
}

/// Transition table as comment lines, one row per state in index order:
///
/// ```text
/// // state | Next state in=0, Next state in=1 | Output
/// // A | C, D | 1
/// ```
pub fn render_transition_table(fsm: &FsmGraph, labels: TableLabels<'_>) -> String {
    let w = fsm.input_width;
    let inputs: Vec<u32> = (0..fsm.num_inputs() as u32).collect();
    let name = |s: usize| match labels {
        TableLabels::Names => fsm.state_names[s].clone(),
        TableLabels::Encoded(enc, _) => enc.code_str(s),
    };
    let mut out = String::new();
    let header = match labels {
        TableLabels::Names => {
            let next: Vec<String> = inputs.iter().map(|&i| format!("Next state in={}", input_label(i, w))).collect();
            let output = match fsm.kind() {
                FsmKind::Moore => "Output".to_string(),
                FsmKind::Mealy => {
                    inputs.iter().map(|&i| format!("Output in={}", input_label(i, w))).collect::<Vec<_>>().join(", ")
                }
            };
            format!("// state | {} | {}", next.join(", "), output)
        }
        TableLabels::Encoded(enc, sig) => {
            let hi = enc.width - 1;
            let next: Vec<String> = inputs
                .iter()
                .map(|&i| format!("Next state {}[{hi}:0] {}={}", sig.next, sig.input, input_label(i, w)))
                .collect();
            let output = match fsm.kind() {
                FsmKind::Moore => format!("Output {}", sig.output),
                FsmKind::Mealy => inputs
                    .iter()
                    .map(|&i| format!("Output {} {}={}", sig.output, sig.input, input_label(i, w)))
                    .collect::<Vec<_>>()
                    .join(", "),
            };
            format!("// Present state {}[{hi}:0] | {} | {}", sig.present, next.join(", "), output)
        }
    };
    out.push_str(&header);
    out.push('\n');
    for s in 0..fsm.num_states() {
        let next: Vec<String> = inputs.iter().map(|&i| name(fsm.next_state(s, i))).collect();
        let output = match fsm.kind() {
            FsmKind::Moore => bit(fsm.output(s, 0)).to_string(),
            FsmKind::Mealy => inputs.iter().map(|&i| bit(fsm.output(s, i)).to_string()).collect::<Vec<_>>().join(", "),
        };
        out.push_str(&format!("// {} | {} | {}\n", name(s), next.join(", "), output));
    }
    out
}

/// Edge list as comment lines, one per (state, input):
///
/// ```text
/// // D (out=0) --x=1--> D        (Moore)
/// // A --x=0 (z=0)--> D          (Mealy)
/// ```
pub fn render_edge_list(fsm: &FsmGraph, signals: &SignalNames) -> String {
    let w = fsm.input_width;
    let mut out = String::new();
    for (s, i) in fsm.pairs() {
        let src = &fsm.state_names[s];
        let dst = &fsm.state_names[fsm.next_state(s, i)];
        let cond = format!("{}={}", signals.input, input_label(i, w));
        let o = bit(fsm.output(s, i));
        let line = match fsm.kind() {
            FsmKind::Moore => format!("// {src} ({}={o}) --{cond}--> {dst}", signals.output),
            FsmKind::Mealy => format!("// {src} --{cond} ({}={o})--> {dst}", signals.output),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn bit(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

/// One clock cycle of stimulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub reset: bool,
    pub input: u32,
}

impl Stimulus {
    pub fn input(input: u32) -> Self {
        Self { reset: false, input }
    }

    pub fn reset() -> Self {
        Self { reset: true, input: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimStep {
    pub state: usize,
    /// Moore: output of `state`. Mealy: output of the edge taken into
    /// `state`; `None` for the initial entry.
    pub output: Option<bool>,
}

/// Interprets `fsm` over a stimulus sequence starting from the reset state.
/// Returns one entry for the initial state plus one per cycle.
pub fn simulate_fsm(fsm: &FsmGraph, stimuli: &[Stimulus]) -> Result<Vec<SimStep>, FsmError> {
    let mut state = fsm.reset_state;
    let initial = match fsm.kind() {
        FsmKind::Moore => Some(fsm.output(state, 0)),
        FsmKind::Mealy => None,
    };
    let mut out = vec![SimStep { state, output: initial }];
    for st in stimuli {
        if st.input as usize >= fsm.num_inputs() {
            return Err(FsmError::InputRange { value: st.input, width: fsm.input_width });
        }
        let next = if st.reset { fsm.reset_state } else { fsm.next_state(state, st.input) };
        let output = match fsm.kind() {
            FsmKind::Moore => fsm.output(next, 0),
            FsmKind::Mealy => fsm.output(state, st.input),
        };
        state = next;
        out.push(SimStep { state, output: Some(output) });
    }
    Ok(out)
}

/// Stimulus that asserts reset for one cycle, then walks the machine until
/// every (state, input) transition has been taken at least once, then appends
/// `tail` random cycles. Unreachable uncovered transitions from the current
/// state are reached through an extra reset cycle.
pub fn covering_stimulus(fsm: &FsmGraph, tail: usize, rng_seed: u64) -> Vec<Stimulus> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = fsm.num_states();
    let slots = fsm.num_inputs();
    let mut covered = vec![vec![false; slots]; n];
    let mut remaining = n * slots;
    let mut out = vec![Stimulus::reset()];
    let mut state = fsm.reset_state;
    while remaining > 0 {
        let uncovered: Vec<u32> = (0..slots as u32).filter(|&i| !covered[state][i as usize]).collect();
        if let Some(&i) = uncovered.choose(&mut rng) {
            covered[state][i as usize] = true;
            remaining -= 1;
            out.push(Stimulus::input(i));
            state = fsm.next_state(state, i);
            continue;
        }
        match path_to_uncovered(fsm, state, &covered) {
            Some(path) => {
                for i in path {
                    if !covered[state][i as usize] {
                        covered[state][i as usize] = true;
                        remaining -= 1;
                    }
                    out.push(Stimulus::input(i));
                    state = fsm.next_state(state, i);
                }
            }
            None => {
                out.push(Stimulus::reset());
                state = fsm.reset_state;
            }
        }
    }
    for _ in 0..tail {
        let i = rng.gen_range(0..slots as u32);
        out.push(Stimulus::input(i));
    }
    out
}

/// Shortest input sequence from `start` to a state that still has an
/// uncovered input slot.
fn path_to_uncovered(fsm: &FsmGraph, start: usize, covered: &[Vec<bool>]) -> Option<Vec<u32>> {
    let n = fsm.num_states();
    let mut prev: Vec<Option<(usize, u32)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        if s != start && covered[s].iter().any(|c| !c) {
            let mut path = Vec::new();
            let mut cur = s;
            while let Some((p, i)) = prev[cur] {
                path.push(i);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for i in 0..fsm.num_inputs() as u32 {
            let t = fsm.next_state(s, i);
            if !seen[t] {
                seen[t] = true;
                prev[t] = Some((s, i));
                queue.push_back(t);
            }
        }
    }
    None
}
