//! The line grammar shared by configuration, scenario and parameter files:
//! `[kind arg]` section headers, `key = value` entries, `#` comments.

use std::fmt;

/// A parse or validation problem, tied to a 1-based line when one applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for Diagnostic {}

/// A non-empty line with its comment stripped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub no: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub kind: String,
    pub arg: Option<String>,
    pub line: usize,
    pub body: Vec<Line>,
}

/// Meaningful lines of a file: comments stripped, blanks dropped.
pub fn lines(text: &str) -> Vec<Line> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let t = raw.split('#').next().unwrap_or("").trim();
            (!t.is_empty()).then(|| Line { no: i + 1, text: t.to_string() })
        })
        .collect()
}

pub fn sections(text: &str) -> Result<Vec<Section>, Diagnostic> {
    let mut out: Vec<Section> = Vec::new();
    for l in lines(text) {
        if let Some(inner) = l.text.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| Diagnostic::new(l.no, "unterminated section header"))?;
            let mut parts = inner.split_whitespace();
            let kind = parts.next().ok_or_else(|| Diagnostic::new(l.no, "empty section header"))?;
            let arg = parts.next().map(str::to_string);
            if parts.next().is_some() {
                return Err(Diagnostic::new(l.no, "section header takes at most one argument"));
            }
            out.push(Section { kind: kind.to_string(), arg, line: l.no, body: Vec::new() });
        } else {
            match out.last_mut() {
                Some(s) => s.body.push(l),
                None => return Err(Diagnostic::new(l.no, "content before the first section header")),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// The `key = value` entries of a section, checked against `allowed`.
#[derive(Debug, Clone)]
pub struct Fields {
    pub header_line: usize,
    entries: Vec<Entry>,
}

impl Fields {
    pub fn parse(sec: &Section, allowed: &[&str]) -> Result<Self, Diagnostic> {
        let mut entries: Vec<Entry> = Vec::new();
        for l in &sec.body {
            let (k, v) = l
                .text
                .split_once('=')
                .ok_or_else(|| Diagnostic::new(l.no, format!("expected `key = value` in [{}]", sec.kind)))?;
            let key = k.trim().to_string();
            if !allowed.contains(&key.as_str()) {
                return Err(Diagnostic::new(l.no, format!("unknown key `{key}` in [{}]", sec.kind)));
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(Diagnostic::new(l.no, format!("duplicate key `{key}`")));
            }
            entries.push(Entry { line: l.no, key, value: v.trim().to_string() });
        }
        Ok(Self { header_line: sec.line, entries })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry, Diagnostic> {
        self.get(key).ok_or_else(|| Diagnostic::new(self.header_line, format!("missing key `{key}`")))
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }
}

impl Entry {
    pub fn err(&self, msg: impl fmt::Display) -> Diagnostic {
        Diagnostic::new(self.line, format!("`{}`: {msg}", self.key))
    }

    /// Decimal, or hex with a `0x` prefix.
    pub fn u64(&self) -> Result<u64, Diagnostic> {
        parse_u64(&self.value).ok_or_else(|| self.err(format!("`{}` is not a number", self.value)))
    }

    /// Hex with or without a `0x` prefix.
    pub fn hex_u64(&self) -> Result<u64, Diagnostic> {
        let v = self.value.strip_prefix("0x").unwrap_or(&self.value);
        u64::from_str_radix(&v.replace('_', ""), 16).map_err(|_| self.err(format!("`{}` is not hex", self.value)))
    }

    pub fn f64(&self) -> Result<f64, Diagnostic> {
        self.value.parse::<f64>().map_err(|_| self.err(format!("`{}` is not a number", self.value)))
    }

    pub fn narrow<T: TryFrom<u64>>(&self) -> Result<T, Diagnostic> {
        T::try_from(self.u64()?).map_err(|_| self.err("value out of range"))
    }

    pub fn on_off(&self) -> Result<bool, Diagnostic> {
        match self.value.as_str() {
            "on" => Ok(true),
            "off" => Ok(false),
            v => Err(self.err(format!("expected on|off, got `{v}`"))),
        }
    }
}

pub fn parse_u64(s: &str) -> Option<u64> {
    let s = s.replace('_', "");
    match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

/// `key=value` words after a leading verb, as in `flipbit region=a bit=3`.
pub fn word_args(words: &[&str], allowed: &[&str]) -> Result<Vec<(String, String)>, String> {
    let mut out: Vec<(String, String)> = Vec::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| format!("expected key=value, got `{w}`"))?;
        if !allowed.contains(&k) {
            return Err(format!("unknown argument `{k}`"));
        }
        if out.iter().any(|(o, _)| o == k) {
            return Err(format!("duplicate argument `{k}`"));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn arg_u64(args: &[(String, String)], key: &str) -> Result<Option<u64>, String> {
    match args.iter().find(|(k, _)| k == key) {
        None => Ok(None),
        Some((_, v)) => parse_u64(v).map(Some).ok_or_else(|| format!("`{key}`: `{v}` is not a number")),
    }
}

pub fn arg_str<'a>(args: &'a [(String, String)], key: &str) -> Option<&'a str> {
    args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_fields() {
        let t = "# header\n[shield]\nregisters = 4 # trailing\n\n[region a]\nbase = 0x10\n";
        let s = sections(t).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[1].kind.as_str(), s[1].arg.as_deref(), s[1].line), ("region", Some("a"), 5));
        let f = Fields::parse(&s[0], &["registers"]).unwrap();
        assert_eq!(f.require("registers").unwrap().u64().unwrap(), 4);
        assert_eq!(Fields::parse(&s[1], &["base"]).unwrap().get("base").unwrap().hex_u64().unwrap(), 0x10);
        let e = Fields::parse(&s[1], &["size"]).unwrap_err();
        assert_eq!(e.line, 6);
    }

    #[test]
    fn structural_errors_carry_lines() {
        assert_eq!(sections("x = 1").unwrap_err().line, 1);
        assert_eq!(sections("\n[a b c]").unwrap_err().line, 2);
        assert_eq!(sections("[a").unwrap_err().line, 1);
        let s = sections("[a]\nk = 1\nk = 2").unwrap();
        assert_eq!(Fields::parse(&s[0], &["k"]).unwrap_err().line, 3);
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_u64("0x1_000"), Some(4096));
        assert_eq!(parse_u64("12"), Some(12));
        assert_eq!(parse_u64("x"), None);
    }
}
