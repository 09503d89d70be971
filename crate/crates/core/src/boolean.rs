//! Boolean function specifications and their renderings.
//!
//! A [`FunctionSpec`] is the seed of every Karnaugh-map, truth-table and
//! combinational-waveform problem. Assignment index `i` binds variable `j`
//! to bit `n-1-j` of `i`, so the first variable is the most significant bit
//! and ascending indices give the usual truth-table row order.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejection-sampling budget for non-constant functions.
pub const MAX_SAMPLE_ATTEMPTS: usize = 100;

/// Default don't-care probability for sampled cells.
pub const DEFAULT_DC_PROBABILITY: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum BoolError {
    #[error("variable count {0} out of range ({1})")]
    VariableCount(usize, &'static str),
    #[error("don't-care probability {0} must lie in [0, 1)")]
    DcProbability(f64),
    #[error("expected {expected} cells, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error("duplicate or empty variable name {0:?}")]
    VariableName(String),
    #[error("assignment has {got} bits, expression binds {expected} variables")]
    AssignmentLength { expected: usize, got: usize },
    #[error("no non-constant function after {0} attempts")]
    SamplingExhausted(usize),
    #[error("bit count {0} out of range 1..=4")]
    GrayWidth(usize),
    #[error("invalid map mutation {0:?} for a {1}x{2} map")]
    Mutation(KMapMutation, usize, usize),
}

/// Value of one truth-table cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellValue {
    Zero,
    One,
    DontCare,
}

impl CellValue {
    pub fn symbol(self) -> char {
        match self {
            CellValue::Zero => '0',
            CellValue::One => '1',
            CellValue::DontCare => 'x',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '0' => Some(CellValue::Zero),
            '1' => Some(CellValue::One),
            'x' | 'X' | 'd' | 'D' => Some(CellValue::DontCare),
            _ => None,
        }
    }
}

/// An n-variable Boolean function with per-cell values in {0, 1, x}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    var_names: Vec<String>,
    cells: Vec<CellValue>,
    seed: u64,
}

impl FunctionSpec {
    /// Builds a spec from explicit cells. Accepts 2..=5 variables and does not
    /// require the function to be non-constant.
    pub fn new(var_names: Vec<String>, cells: Vec<CellValue>, seed: u64) -> Result<Self, BoolError> {
        let n = var_names.len();
        if !(2..=5).contains(&n) {
            return Err(BoolError::VariableCount(n, "2..=5"));
        }
        for (i, name) in var_names.iter().enumerate() {
            if name.is_empty() || var_names[..i].contains(name) {
                return Err(BoolError::VariableName(name.clone()));
            }
        }
        if cells.len() != 1 << n {
            return Err(BoolError::CellCount { expected: 1 << n, got: cells.len() });
        }
        Ok(Self { var_names, cells, seed })
    }

    /// Spec over default names `a, b, c, ...` whose ONE cells are `minterms`
    /// and whose don't-care cells are `dont_cares`.
    pub fn from_minterms(n: usize, minterms: &[usize], dont_cares: &[usize]) -> Result<Self, BoolError> {
        let mut cells = vec![CellValue::Zero; 1 << n.min(5)];
        for &m in minterms {
            if let Some(c) = cells.get_mut(m) {
                *c = CellValue::One;
            }
        }
        for &d in dont_cares {
            if let Some(c) = cells.get_mut(d) {
                *c = CellValue::DontCare;
            }
        }
        Self::new(default_var_names(n), cells, 0)
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn cells(&self) -> &[CellValue] {
        &self.cells
    }

    pub fn cell(&self, assignment: usize) -> CellValue {
        self.cells[assignment]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_constant(&self) -> bool {
        !(self.cells.contains(&CellValue::One) && self.cells.contains(&CellValue::Zero))
    }

    /// Same cells under new variable names.
    pub fn with_var_names(&self, names: Vec<String>) -> Result<Self, BoolError> {
        Self::new(names, self.cells.clone(), self.seed)
    }

    pub fn minterms(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, c)| **c == CellValue::One).map(|(i, _)| i)
    }

    /// Bits of `assignment`, first variable first.
    pub fn assignment_bits(&self, assignment: usize) -> Vec<bool> {
        assignment_bits(assignment, self.num_vars())
    }
}

pub fn default_var_names(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
}

pub fn assignment_bits(assignment: usize, n: usize) -> Vec<bool> {
    (0..n).map(|j| (assignment >> (n - 1 - j)) & 1 == 1).collect()
}

pub fn assignment_index(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Samples a non-constant function over `n ∈ {3, 4}` variables.
///
/// Every cell is drawn independently: don't-care with probability
/// `dc_probability`, otherwise one or zero with equal probability.
pub fn sample_function_spec(n: usize, rng_seed: u64, dc_probability: f64) -> Result<FunctionSpec, BoolError> {
    if !(3..=4).contains(&n) {
        return Err(BoolError::VariableCount(n, "3..=4"));
    }
    if !(0.0..1.0).contains(&dc_probability) {
        return Err(BoolError::DcProbability(dc_probability));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let cells: Vec<CellValue> = (0..1usize << n)
            .map(|_| {
                if rng.gen::<f64>() < dc_probability {
                    CellValue::DontCare
                } else if rng.gen::<bool>() {
                    CellValue::One
                } else {
                    CellValue::Zero
                }
            })
            .collect();
        let spec = FunctionSpec { var_names: default_var_names(n), cells, seed: rng_seed };
        if !spec.is_constant() {
            return Ok(spec);
        }
    }
    Err(BoolError::SamplingExhausted(MAX_SAMPLE_ATTEMPTS))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

/// Sum-of-products expression bound to an ordered variable list.
/// An empty term list is the constant-0 function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SopExpr {
    pub var_names: Vec<String>,
    pub terms: Vec<Vec<Literal>>,
}

impl SopExpr {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, assignment: &[bool]) -> Result<bool, BoolError> {
        if assignment.len() != self.var_names.len() {
            return Err(BoolError::AssignmentLength { expected: self.var_names.len(), got: assignment.len() });
        }
        Ok(self
            .terms
            .iter()
            .any(|term| term.iter().all(|lit| assignment[lit.var] == lit.positive)))
    }

    /// One term rendered as `(~a & b & ~c)`.
    pub fn term_text(&self, term: &[Literal]) -> String {
        let lits: Vec<String> = term
            .iter()
            .map(|l| {
                let name = &self.var_names[l.var];
                if l.positive {
                    name.clone()
                } else {
                    format!("~{name}")
                }
            })
            .collect();
        format!("({})", lits.join(" & "))
    }
}

impl fmt::Display for SopExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("1'b0");
        }
        let parts: Vec<String> = self.terms.iter().map(|t| self.term_text(t)).collect();
        f.write_str(&parts.join(" | "))
    }
}

/// Full-minterm SOP: one product term per ONE cell in ascending order.
/// Don't-care cells contribute no term.
pub fn derive_sop(spec: &FunctionSpec) -> SopExpr {
    let n = spec.num_vars();
    let terms = spec
        .minterms()
        .map(|m| {
            assignment_bits(m, n)
                .into_iter()
                .enumerate()
                .map(|(var, positive)| Literal { var, positive })
                .collect()
        })
        .collect();
    SopExpr { var_names: spec.var_names().to_vec(), terms }
}

pub fn eval_sop(expr: &SopExpr, assignment: &[bool]) -> Result<bool, BoolError> {
    expr.eval(assignment)
}

/// Reflected Gray codes over `m` bits as integers.
pub fn gray_codes(m: usize) -> Result<Vec<u32>, BoolError> {
    if !(1..=4).contains(&m) {
        return Err(BoolError::GrayWidth(m));
    }
    Ok((0..1u32 << m).map(|i| i ^ (i >> 1)).collect())
}

/// Reflected Gray sequence over `m` bits as bit strings.
pub fn gray_sequence(m: usize) -> Result<Vec<String>, BoolError> {
    Ok(gray_codes(m)?.into_iter().map(|c| bit_string(c as u64, m)).collect())
}

pub fn bit_string(value: u64, width: usize) -> String {
    (0..width).rev().map(|b| if (value >> b) & 1 == 1 { '1' } else { '0' }).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KMapMutation {
    Transpose,
    /// Swap rows `i` and `i + 1`.
    SwapRows(usize),
    /// Swap columns `i` and `i + 1`.
    SwapCols(usize),
}

/// A Karnaugh-map rendering of a [`FunctionSpec`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KMapView {
    pub var_names: Vec<String>,
    /// Variable indices on the row axis, most significant first.
    pub row_vars: Vec<usize>,
    pub col_vars: Vec<usize>,
    /// Row label codes; bit `k` from the top corresponds to `row_vars[k]`.
    pub row_labels: Vec<u32>,
    pub col_labels: Vec<u32>,
    pub grid: Vec<Vec<CellValue>>,
    pub mutation_log: Vec<KMapMutation>,
}

impl KMapView {
    /// Unmutated view: the first `ceil(n/2)` variables on rows, Gray labels on
    /// both axes.
    pub fn new(spec: &FunctionSpec) -> Self {
        let n = spec.num_vars();
        let r = n.div_ceil(2);
        let row_vars: Vec<usize> = (0..r).collect();
        let col_vars: Vec<usize> = (r..n).collect();
        let row_labels = gray_codes(row_vars.len()).expect("row width within gray range");
        let col_labels = gray_codes(col_vars.len()).expect("col width within gray range");
        let mut view = Self {
            var_names: spec.var_names().to_vec(),
            row_vars,
            col_vars,
            row_labels,
            col_labels,
            grid: Vec::new(),
            mutation_log: Vec::new(),
        };
        view.grid = view
            .row_labels
            .iter()
            .map(|&rl| view.col_labels.iter().map(|&cl| spec.cell(view.assignment_at(rl, cl))).collect())
            .collect();
        view
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    /// Assignment index addressed by a (row label, column label) pair.
    pub fn assignment_at(&self, row_label: u32, col_label: u32) -> usize {
        let n = self.var_names.len();
        let mut idx = 0usize;
        let mut place = |vars: &[usize], label: u32| {
            let w = vars.len();
            for (k, &v) in vars.iter().enumerate() {
                if (label >> (w - 1 - k)) & 1 == 1 {
                    idx |= 1 << (n - 1 - v);
                }
            }
        };
        place(&self.row_vars, row_label);
        place(&self.col_vars, col_label);
        idx
    }

    pub fn apply(&mut self, mutation: KMapMutation) -> Result<(), BoolError> {
        let (rows, cols) = (self.rows(), self.cols());
        match mutation {
            KMapMutation::Transpose => {
                std::mem::swap(&mut self.row_vars, &mut self.col_vars);
                std::mem::swap(&mut self.row_labels, &mut self.col_labels);
                self.grid = (0..cols).map(|c| (0..rows).map(|r| self.grid[r][c]).collect()).collect();
            }
            KMapMutation::SwapRows(i) => {
                if i + 1 >= rows {
                    return Err(BoolError::Mutation(mutation, rows, cols));
                }
                self.row_labels.swap(i, i + 1);
                self.grid.swap(i, i + 1);
            }
            KMapMutation::SwapCols(i) => {
                if i + 1 >= cols {
                    return Err(BoolError::Mutation(mutation, rows, cols));
                }
                self.col_labels.swap(i, i + 1);
                for row in &mut self.grid {
                    row.swap(i, i + 1);
                }
            }
        }
        self.mutation_log.push(mutation);
        Ok(())
    }

    /// Map rendered as comment lines, e.g.
    ///
    /// ```text
    /// //     c
    /// // ab   0   1
    /// // 00 | 1 | 0
    /// ```
    pub fn render(&self) -> String {
        let row_head: String = self.row_vars.iter().map(|&v| self.var_names[v].as_str()).collect();
        let col_head: String = self.col_vars.iter().map(|&v| self.var_names[v].as_str()).collect();
        let rw = self.row_vars.len().max(row_head.len());
        let cw = self.col_vars.len();
        let mut out = format!("//{}{}\n", " ".repeat(rw + 3), col_head);
        out.push_str(&format!("// {row_head:<rw$}"));
        for &cl in &self.col_labels {
            out.push_str("   ");
            out.push_str(&bit_string(cl as u64, cw));
        }
        out.push('\n');
        for (r, &rl) in self.row_labels.iter().enumerate() {
            let mut line = format!("// {:<rw$}", bit_string(rl as u64, self.row_vars.len()));
            for cell in &self.grid[r] {
                line.push_str(" | ");
                line.push_str(&format!("{:<cw$}", cell.symbol()));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Renders `spec` as a Karnaugh map with `mutations` applied in order.
pub fn render_kmap(spec: &FunctionSpec, mutations: &[KMapMutation]) -> Result<KMapView, BoolError> {
    let mut view = KMapView::new(spec);
    for &m in mutations {
        view.apply(m)?;
    }
    Ok(view)
}

/// Draws a mutation sequence for a map over `n` variables: an optional
/// transpose followed by up to `max_swaps` adjacent row or column swaps.
pub fn sample_mutations(n: usize, rng_seed: u64, max_swaps: usize) -> Vec<KMapMutation> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let r = n.div_ceil(2);
    let (mut rows, mut cols) = (1usize << r, 1usize << (n - r));
    let mut out = Vec::new();
    if rng.gen_bool(0.5) {
        out.push(KMapMutation::Transpose);
        std::mem::swap(&mut rows, &mut cols);
    }
    let swaps = rng.gen_range(0..=max_swaps);
    for _ in 0..swaps {
        if rng.gen_bool(0.5) {
            out.push(KMapMutation::SwapRows(rng.gen_range(0..rows - 1)));
        } else {
            out.push(KMapMutation::SwapCols(rng.gen_range(0..cols - 1)));
        }
    }
    out
}

/// Truth table with a header row and `2^n` rows in ascending order:
///
/// ```text
///  a | b | c | f
///  0 | 0 | 0 | 1
/// ```
pub fn render_truth_table(spec: &FunctionSpec, output_name: &str) -> String {
    let mut out = String::new();
    let mut header: Vec<&str> = spec.var_names().iter().map(String::as_str).collect();
    header.push(output_name);
    out.push(' ');
    out.push_str(&header.join(" | "));
    out.push('\n');
    for (i, cell) in spec.cells().iter().enumerate() {
        let mut row: Vec<String> =
            spec.assignment_bits(i).into_iter().map(|b| if b { "1" } else { "0" }.to_string()).collect();
        row.push(cell.symbol().to_string());
        out.push(' ');
        out.push_str(&row.join(" | "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_minterm() -> FunctionSpec {
        FunctionSpec::from_minterms(3, &[0], &[]).unwrap()
    }

    #[test]
    fn sampled_spec_has_total_cells() {
        let s = sample_function_spec(3, 1, DEFAULT_DC_PROBABILITY).unwrap();
        assert_eq!(s.cells().len(), 8);
        assert!(!s.is_constant());
        assert_eq!(sample_function_spec(4, 9, 0.3).unwrap().cells().len(), 16);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_function_spec(3, 42, 0.15).unwrap();
        let b = sample_function_spec(3, 42, 0.15).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_rejects_bad_parameters() {
        assert!(matches!(sample_function_spec(2, 0, 0.1), Err(BoolError::VariableCount(..))));
        assert!(matches!(sample_function_spec(5, 0, 0.1), Err(BoolError::VariableCount(..))));
        assert!(matches!(sample_function_spec(3, 0, 1.0), Err(BoolError::DcProbability(_))));
        assert!(matches!(sample_function_spec(3, 0, -0.1), Err(BoolError::DcProbability(_))));
    }

    #[test]
    fn constructor_validates() {
        assert!(FunctionSpec::new(default_var_names(3), vec![CellValue::Zero; 7], 0).is_err());
        assert!(FunctionSpec::new(vec!["a".into(), "a".into()], vec![CellValue::Zero; 4], 0).is_err());
        assert!(FunctionSpec::new(default_var_names(6), vec![CellValue::Zero; 64], 0).is_err());
    }

    #[test]
    fn sop_of_single_minterm() {
        let sop = derive_sop(&single_minterm());
        assert_eq!(sop.to_string(), "(~a & ~b & ~c)");
        assert!(sop.eval(&[false, false, false]).unwrap());
        assert!(!sop.eval(&[true, true, true]).unwrap());
    }

    #[test]
    fn empty_sop_is_constant_zero() {
        let spec = FunctionSpec::from_minterms(3, &[], &[]).unwrap();
        let sop = derive_sop(&spec);
        assert!(sop.is_zero());
        assert_eq!(sop.to_string(), "1'b0");
        for i in 0..8 {
            assert!(!sop.eval(&assignment_bits(i, 3)).unwrap());
        }
    }

    #[test]
    fn full_sop_is_constant_one() {
        let spec = FunctionSpec::from_minterms(3, &(0..8).collect::<Vec<_>>(), &[]).unwrap();
        let sop = derive_sop(&spec);
        for i in 0..8 {
            assert!(sop.eval(&assignment_bits(i, 3)).unwrap());
        }
    }

    #[test]
    fn dont_cares_contribute_no_terms() {
        let spec = FunctionSpec::from_minterms(3, &[1], &[2, 3]).unwrap();
        assert_eq!(derive_sop(&spec).terms.len(), 1);
    }

    #[test]
    fn eval_checks_length() {
        let sop = derive_sop(&single_minterm());
        assert_eq!(sop.eval(&[true]), Err(BoolError::AssignmentLength { expected: 3, got: 1 }));
    }

    #[test]
    fn gray_sequences() {
        assert_eq!(gray_sequence(1).unwrap(), vec!["0", "1"]);
        assert_eq!(gray_sequence(2).unwrap(), vec!["00", "01", "11", "10"]);
        assert!(gray_sequence(0).is_err());
        assert!(gray_sequence(5).is_err());
    }

    #[test]
    fn kmap_appendix_layout() {
        let view = render_kmap(&single_minterm(), &[]).unwrap();
        assert_eq!(
            view.render(),
            "//     c\n// ab   0   1\n// 00 | 1 | 0\n// 01 | 0 | 0\n// 11 | 0 | 0\n// 10 | 0 | 0\n"
        );
    }

    #[test]
    fn kmap_transpose_is_involution() {
        let spec = sample_function_spec(4, 3, 0.2).unwrap();
        let base = KMapView::new(&spec);
        let twice = render_kmap(&spec, &[KMapMutation::Transpose, KMapMutation::Transpose]).unwrap();
        assert_eq!(base.grid, twice.grid);
        assert_eq!(base.row_labels, twice.row_labels);
        assert_eq!(twice.mutation_log.len(), 2);
    }

    #[test]
    fn kmap_rejects_out_of_range_swap() {
        let spec = single_minterm();
        assert!(render_kmap(&spec, &[KMapMutation::SwapCols(1)]).is_err());
        assert!(render_kmap(&spec, &[KMapMutation::SwapRows(3)]).is_err());
    }

    #[test]
    fn truth_table_rows() {
        let tt = render_truth_table(&single_minterm(), "f");
        let lines: Vec<&str> = tt.lines().collect();
        assert_eq!(lines[0], " a | b | c | f");
        assert_eq!(lines[1], " 0 | 0 | 0 | 1");
        assert_eq!(lines[8], " 1 | 1 | 1 | 0");
        assert_eq!(lines.len(), 9);
        let four = sample_function_spec(4, 5, 0.15).unwrap();
        assert_eq!(render_truth_table(&four, "f").lines().count(), 17);
    }

    #[test]
    fn truth_table_marks_dont_cares() {
        let spec = FunctionSpec::from_minterms(3, &[0], &[7]).unwrap();
        assert!(render_truth_table(&spec, "f").ends_with(" 1 | 1 | 1 | x\n"));
    }
}
