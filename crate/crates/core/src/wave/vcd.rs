use std::collections::HashMap;

use thiserror::Error;

use crate::verilog::interp::Logic;

#[derive(Debug, Error, PartialEq)]
pub enum VcdError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("value change references undeclared id `{0}`")]
    UndeclaredId(String),
    #[error("time went backwards from {prev} to {got}")]
    TimeRegression { prev: u64, got: u64 },
    #[error("unsupported VCD construct: {0}")]
    Unsupported(String),
    #[error("bad value `{0}`")]
    BadValue(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VcdVar {
    pub id: String,
    /// Dot-joined scope path plus the reference name.
    pub name: String,
    pub width: u32,
    pub kind: String,
}

/// Declarations plus the value-change stream. Times are in femtoseconds so
/// documents with different timescales compare directly.
#[derive(Clone, Debug, PartialEq)]
pub struct VcdDocument {
    pub timescale_fs: u64,
    pub vars: Vec<VcdVar>,
    /// (time in fs, index into `vars`, value), in file order.
    pub changes: Vec<(u64, usize, Logic)>,
}

pub const FS_PER_NS: u64 = 1_000_000;

fn parse_timescale(text: &str) -> Result<u64, VcdError> {
    let t: String = text.split_whitespace().collect();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let num: u64 = num.parse().map_err(|_| VcdError::MalformedHeader(format!("timescale `{text}`")))?;
    let unit_fs = match unit {
        "s" => 1_000_000_000_000_000,
        "ms" => 1_000_000_000_000,
        "us" => 1_000_000_000,
        "ns" => 1_000_000,
        "ps" => 1_000,
        "fs" => 1,
        _ => return Err(VcdError::MalformedHeader(format!("timescale unit `{unit}`"))),
    };
    if !matches!(num, 1 | 10 | 100) {
        return Err(VcdError::MalformedHeader(format!("timescale `{text}`")));
    }
    Ok(num * unit_fs)
}

/// Parses a scalar symbol or a `b`-prefixed vector body into a value of `width` bits.
fn parse_value(bits: &str, width: u32) -> Result<Logic, VcdError> {
    let bad = || VcdError::BadValue(bits.to_string());
    if bits.is_empty() || bits.len() > 64 {
        return Err(bad());
    }
    let (mut val, mut x) = (0u64, 0u64);
    for c in bits.chars() {
        val <<= 1;
        x <<= 1;
        match c {
            '0' => {}
            '1' => val |= 1,
            'x' | 'X' | 'z' | 'Z' => x |= 1,
            _ => return Err(bad()),
        }
    }
    // Left-extend: x/z extend as x, 0/1 extend with 0.
    let len = bits.len() as u32;
    if len < width && x >> (len - 1) & 1 == 1 {
        let fill = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 } & !((1u64 << len) - 1);
        x |= fill;
    }
    Ok(Logic { width, val, x }.resize(width))
}

fn until_end(tokens: &mut std::str::SplitWhitespace<'_>, what: &str) -> Result<Vec<String>, VcdError> {
    let mut body = Vec::new();
    loop {
        match tokens.next() {
            Some("$end") => return Ok(body),
            Some(t) => body.push(t.to_string()),
            None => return Err(VcdError::MalformedHeader(format!("unterminated {what}"))),
        }
    }
}

pub fn parse_vcd(text: &str) -> Result<VcdDocument, VcdError> {
    let mut tokens = text.split_whitespace();
    let mut scopes: Vec<String> = Vec::new();
    let mut vars = Vec::new();
    let mut ids: HashMap<String, Vec<usize>> = HashMap::new();
    let mut timescale_fs = None;

    loop {
        let Some(tok) = tokens.next() else {
            return Err(VcdError::MalformedHeader("missing $enddefinitions".into()));
        };
        match tok {
            "$date" | "$version" | "$comment" => {
                until_end(&mut tokens, tok)?;
            }
            "$timescale" => {
                let body = until_end(&mut tokens, tok)?;
                timescale_fs = Some(parse_timescale(&body.join(""))?);
            }
            "$scope" => {
                let body = until_end(&mut tokens, tok)?;
                let name = body.get(1).ok_or_else(|| VcdError::MalformedHeader("$scope without name".into()))?;
                scopes.push(name.clone());
            }
            "$upscope" => {
                until_end(&mut tokens, tok)?;
                scopes.pop().ok_or_else(|| VcdError::MalformedHeader("unbalanced $upscope".into()))?;
            }
            "$var" => {
                let body = until_end(&mut tokens, tok)?;
                if body.len() < 4 {
                    return Err(VcdError::MalformedHeader(format!("$var {}", body.join(" "))));
                }
                let kind = body[0].clone();
                if matches!(kind.as_str(), "real" | "realtime" | "event") {
                    return Err(VcdError::Unsupported(format!("$var type `{kind}`")));
                }
                let width: u32 = body[1].parse().map_err(|_| VcdError::MalformedHeader(format!("width `{}`", body[1])))?;
                if width == 0 || width > 64 {
                    return Err(VcdError::Unsupported(format!("width {width}")));
                }
                let id = body[2].clone();
                let mut path = scopes.clone();
                path.push(body[3].clone());
                ids.entry(id.clone()).or_default().push(vars.len());
                vars.push(VcdVar { id, name: path.join("."), width, kind });
            }
            "$enddefinitions" => {
                until_end(&mut tokens, tok)?;
                break;
            }
            other if other.starts_with('$') => {
                return Err(VcdError::Unsupported(format!("header command `{other}`")));
            }
            other => return Err(VcdError::MalformedHeader(format!("unexpected `{other}` in header"))),
        }
    }
    let timescale_fs = timescale_fs.unwrap_or(FS_PER_NS);

    let mut changes = Vec::new();
    let mut now = 0u64;
    let push = |id: &str, bits: &str, now: u64, changes: &mut Vec<(u64, usize, Logic)>| {
        let idx = ids.get(id).ok_or_else(|| VcdError::UndeclaredId(id.to_string()))?;
        for &i in idx {
            let v = parse_value(bits, vars[i].width)?;
            changes.push((now, i, v));
        }
        Ok::<(), VcdError>(())
    };
    while let Some(tok) = tokens.next() {
        let first = tok.as_bytes()[0];
        match first {
            b'#' => {
                let t: u64 = tok[1..].parse().map_err(|_| VcdError::BadValue(tok.to_string()))?;
                let t = t * timescale_fs;
                if t < now {
                    return Err(VcdError::TimeRegression { prev: now / timescale_fs, got: t / timescale_fs });
                }
                now = t;
            }
            b'$' => match tok {
                "$dumpvars" | "$dumpall" | "$dumpon" | "$dumpoff" | "$end" => {}
                "$comment" => {
                    until_end(&mut tokens, tok)?;
                }
                _ => return Err(VcdError::Unsupported(format!("command `{tok}`"))),
            },
            b'0' | b'1' | b'x' | b'X' | b'z' | b'Z' => push(&tok[1..], &tok[..1], now, &mut changes)?,
            b'b' | b'B' => {
                let id = tokens.next().ok_or_else(|| VcdError::BadValue(tok.to_string()))?;
                push(id, &tok[1..], now, &mut changes)?;
            }
            b'r' | b'R' => return Err(VcdError::Unsupported("real value changes".into())),
            _ => return Err(VcdError::BadValue(tok.to_string())),
        }
    }
    Ok(VcdDocument { timescale_fs, vars, changes })
}

impl VcdDocument {
    /// Index of the variable whose full name equals `selector` or ends with
    /// `.selector`. Several matches sharing one id count as one.
    pub fn find(&self, selector: &str) -> Option<usize> {
        let suffix = format!(".{selector}");
        let mut hits = self.vars.iter().enumerate().filter(|(_, v)| v.name == selector || v.name.ends_with(&suffix));
        let (first, v) = hits.next()?;
        if hits.any(|(_, w)| w.id != v.id) {
            return None;
        }
        Some(first)
    }

    pub fn last_change_fs(&self) -> u64 {
        self.changes.iter().map(|c| c.0).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "$timescale 1ns $end
$scope module tb $end
$var reg 1 ! a $end
$upscope $end
$enddefinitions $end
#0
0!
#5
1!
";

    #[test]
    fn minimal_document() {
        let d = parse_vcd(MINIMAL).unwrap();
        assert_eq!(d.vars.len(), 1);
        assert_eq!(d.vars[0].name, "tb.a");
        assert_eq!(d.changes.len(), 2);
        assert_eq!(d.changes[1], (5 * FS_PER_NS, 0, Logic::bit(true)));
    }

    #[test]
    fn picosecond_timescale_and_vectors() {
        let text = "$version x $end\n$timescale 1ps $end\n $scope module tb $end\n  $var wire 3 \" s $end\n $upscope $end\n$enddefinitions $end\n#0\n$dumpvars\nbx \"\n$end\n#5000\nb10 \"\n";
        let d = parse_vcd(text).unwrap();
        assert_eq!(d.changes[0].2, Logic::unknown(3));
        assert_eq!(d.changes[1], (5 * FS_PER_NS, 0, Logic::new(3, 2)));
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_vcd("$var wire 1 ! a $end\n#0\n1!"), Err(VcdError::MalformedHeader(_))));
        let bad_id = MINIMAL.replace("1!\n", "1?\n");
        assert_eq!(parse_vcd(&bad_id).unwrap_err(), VcdError::UndeclaredId("?".into()));
        let regress = format!("{MINIMAL}#3\n0!\n");
        assert_eq!(parse_vcd(&regress).unwrap_err(), VcdError::TimeRegression { prev: 5, got: 3 });
        let real = MINIMAL.replace("$var reg 1 ! a $end", "$var real 64 ! a $end");
        assert!(matches!(parse_vcd(&real), Err(VcdError::Unsupported(_))));
        let rval = format!("{MINIMAL}r1.5 !\n");
        assert!(matches!(parse_vcd(&rval), Err(VcdError::Unsupported(_))));
    }

    #[test]
    fn find_by_suffix() {
        let text = "$scope module top $end $scope module u0 $end $var wire 1 ! clk $end $upscope $end $scope module u1 $end $var wire 1 \" clk $end $upscope $end $upscope $end $enddefinitions $end";
        let d = parse_vcd(text).unwrap();
        assert_eq!(d.find("u1.clk"), Some(1));
        assert_eq!(d.find("clk"), None);
        assert_eq!(d.find("top.u0.clk"), Some(0));
    }
}
