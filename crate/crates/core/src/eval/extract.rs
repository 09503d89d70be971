//! Pulling a module out of free-form model output.

use std::sync::LazyLock;

use regex::Regex;

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bmodule\s+[A-Za-z_][A-Za-z0-9_$]*\s*[#(;]").expect("static regex"));
static END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bendmodule\b").expect("static regex"));

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extraction {
    Code(String),
    /// Nothing that could be Verilog; judged as a syntax failure.
    Empty,
}

impl Extraction {
    pub fn code(&self) -> Option<&str> {
        match self {
            Extraction::Code(c) => Some(c),
            Extraction::Empty => None,
        }
    }
}

/// Body of the first fenced block with its language tag removed. An
/// unclosed fence runs to the end of the text.
fn first_fence(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body = after.find('\n').map_or("", |i| &after[i + 1..]);
    Some(body.find("```").map_or(body, |close| &body[..close]))
}

/// First fenced block if any, then the span from the first module header
/// to the last `endmodule`. Without a header the fallback header is
/// prepended. A missing `endmodule` is appended either way. Unfenced text with
/// neither keyword is prose and yields [`Extraction::Empty`].
pub fn extract_code(response: &str, fallback_header: &str) -> Extraction {
    let fenced = first_fence(response);
    let text = fenced.unwrap_or(response);
    let start = HEADER.find(text).map(|m| m.start());
    let end = END.find_iter(text).last().map(|m| m.end());
    if fenced.is_none() && start.is_none() && end.is_none() {
        return Extraction::Empty;
    }
    let slice = &text[start.unwrap_or(0)..end.filter(|&e| e > start.unwrap_or(0)).unwrap_or(text.len())];
    let slice = slice.trim_matches('\n').trim_end();
    if slice.trim().is_empty() {
        return Extraction::Empty;
    }
    let tail = if end.is_some_and(|e| e > start.unwrap_or(0)) { "" } else { "\nendmodule" };
    if start.is_some() {
        return Extraction::Code(format!("{slice}{tail}\n"));
    }
    let header = fallback_header.trim();
    if header.is_empty() {
        return Extraction::Empty;
    }
    Extraction::Code(format!("{header}\n{slice}{tail}\n"))
}

/// Text from the first module header through the `;` that closes it.
pub fn module_header(code: &str) -> Option<&str> {
    let start = HEADER.find(code)?.start();
    let mut depth = 0i32;
    for (i, c) in code[start..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ';' if depth <= 0 => return Some(&code[start..=start + i]),
            _ => {}
        }
    }
    None
}
