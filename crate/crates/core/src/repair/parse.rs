//! Heading-based readers for provider answers.

use regex::Regex;

/// `Heading:` at line start, tolerating markdown decoration such as
/// `**Error Type:**`, `### Hints for Fixing`, or a `2.` list number.
fn heading(name: &str) -> Regex {
    Regex::new(&format!(r"(?im)^[ \t>#*_]*(?:\d+\.\s*)?[*_]*{name}[*_ \t]*(?::[*_ \t]*|$)"))
        .expect("heading regex")
}

fn clean(s: &str) -> String {
    s.trim().trim_matches('*').trim().to_string()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFields {
    pub error_type: String,
    pub category: String,
    pub description: String,
}

/// Reads `Error Type:`, `Category:` and `Description:`; the description
/// runs to the end of the answer.
pub fn parse_report(text: &str) -> Option<ReportFields> {
    let line_after = |re: Regex| {
        re.find(text).map(|m| clean(text[m.end()..].lines().next().unwrap_or_default())).filter(|s| !s.is_empty())
    };
    let error_type = line_after(heading("error type"))?;
    let category = line_after(heading("category"))?;
    let desc = heading("description").find(text)?;
    let description = text[desc.end()..].trim().to_string();
    (!description.is_empty()).then_some(ReportFields { error_type, category, description })
}

/// `(start, end, body)` of each fenced block.
fn fences(text: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(open) = text[from..].find("```").map(|i| from + i) {
        let Some(nl) = text[open..].find('\n').map(|i| open + i + 1) else { break };
        let Some(close) = text[nl..].find("```").map(|i| nl + i) else { break };
        out.push((open, close + 3, &text[nl..close]));
        from = close + 3;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjectionFields {
    pub description: String,
    pub erroneous: String,
    pub hints: String,
    /// Corrected module when the answer includes one.
    pub repaired: Option<String>,
}

fn strip_intro_headings(s: &str) -> String {
    let intro = heading(r"(?:input|problem description|description)");
    let mut s = s.trim();
    while let Some(m) = intro.find(s).filter(|m| m.start() == 0) {
        s = s[m.end()..].trim_start();
    }
    s.trim().to_string()
}

pub fn parse_injection(text: &str) -> Option<InjectionFields> {
    let blocks = fences(text);
    let err_head = heading("erroneous implementation").find(text);
    let code_from = err_head.map_or(0, |m| m.end());
    let &(e_start, e_end, erroneous) = blocks.iter().find(|(s, _, _)| *s >= code_from)?;
    let intro_end = err_head.map_or(e_start, |m| m.start());
    let description = strip_intro_headings(&text[..intro_end]);

    let hints_head = heading("hints for fixing").find_at(text, e_end)?;
    let output_head = heading("output").find_at(text, hints_head.end());
    let hints_end = output_head.map_or(text.len(), |m| m.start());
    let hints = text[hints_head.end()..hints_end].trim().to_string();
    let repaired = output_head
        .and_then(|m| blocks.iter().find(|(s, _, _)| *s >= m.end()))
        .map(|(_, _, body)| body.to_string());

    (!description.is_empty() && !erroneous.trim().is_empty() && !hints.is_empty()).then(|| InjectionFields {
        description,
        erroneous: erroneous.to_string(),
        hints,
        repaired,
    })
}

/// The provider said the error does not fit the seed module.
pub fn declines_injection(text: &str) -> bool {
    let re = Regex::new(
        r"(?i)(not possible to inject|cannot be injected|can't be injected|unable to inject|injection (is )?not possible)",
    )
    .expect("static regex");
    re.is_match(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REPORT: &str = "Error Type: shifting operation\n\nCategory: Sequential: shift registers\n\nDescription:\nThe shift feeds q[0] back into q[3].\n1. Find the shift.\n2. Shift in a zero.\n";

    #[test]
    fn report_fields() {
        let r = parse_report(REPORT).unwrap();
        assert_eq!(r.error_type, "shifting operation");
        assert_eq!(r.category, "Sequential: shift registers");
        assert!(r.description.starts_with("The shift feeds") && r.description.ends_with("zero."));
    }

    #[test]
    fn report_with_markdown_headings() {
        let md = "**Error Type:** Incorrect vector concatenation\n**Category:** Combinatorial: wiring\n### Description:\nSwap the halves.";
        let r = parse_report(md).unwrap();
        assert_eq!(r.error_type, "Incorrect vector concatenation");
        assert_eq!(r.category, "Combinatorial: wiring");
        assert_eq!(r.description, "Swap the halves.");
    }

    #[test]
    fn report_missing_field_is_none() {
        assert_eq!(parse_report("Error Type: x\nDescription:\ny"), None);
        assert_eq!(parse_report("Error Type: x\nCategory: c\nDescription:\n   "), None);
        assert_eq!(parse_report("free text"), None);
    }

    const INJECTED: &str = "**Input:**\nYou are given an up counter whose reset value is wrong.\n\nErroneous Implementation:\n```verilog\nmodule counter_up(input clk, input rst, output reg [3:0] q);\n  always @(posedge clk) if (rst) q <= 4'd3; else q <= q + 1;\nendmodule\n```\nIn this erroneous implementation the reset value is 3.\n\nHints for Fixing:\n1. Check the initialization value.\n2. Reset to 4'd0.\n\n**Output:**\n```verilog\nmodule counter_up(input clk, input rst, output reg [3:0] q);\n  always @(posedge clk) if (rst) q <= 4'd0; else q <= q + 1;\nendmodule\n```\n";

    #[test]
    fn injection_sections() {
        let f = parse_injection(INJECTED).unwrap();
        assert_eq!(f.description, "You are given an up counter whose reset value is wrong.");
        assert!(f.erroneous.contains("q <= 4'd3;") && f.erroneous.ends_with("endmodule\n"));
        assert_eq!(f.hints, "1. Check the initialization value.\n2. Reset to 4'd0.");
        assert!(f.repaired.unwrap().contains("q <= 4'd0;"));
    }

    #[test]
    fn injection_without_output_block() {
        let cut = &INJECTED[..INJECTED.find("**Output:**").unwrap()];
        let f = parse_injection(cut).unwrap();
        assert_eq!(f.repaired, None);
        assert!(f.hints.ends_with("Reset to 4'd0."));
    }

    #[test]
    fn injection_missing_pieces() {
        assert_eq!(parse_injection("no code at all"), None);
        let no_hints = INJECTED.replace("Hints for Fixing:", "Notes:");
        assert_eq!(parse_injection(&no_hints), None);
        let unclosed = "Problem\nErroneous Implementation:\n```verilog\nmodule m;\n";
        assert_eq!(parse_injection(unclosed), None);
    }

    #[test]
    fn decline_phrases() {
        assert!(declines_injection("It is not possible to inject this error into the module."));
        assert!(declines_injection("Injection not possible."));
        assert!(!declines_injection(INJECTED));
    }
}
