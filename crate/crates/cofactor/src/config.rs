//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names of a subcommand, with `_` and `-`
//! interchangeable. Lines starting with `#` are comments. Boolean flags take
//! `true` or `false`.

use std::path::Path;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub line: u64,
}

pub fn parse_config(text: &str) -> Result<Vec<ConfigEntry>> {
    let mut out: Vec<ConfigEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            return Err(HarnessError::parse(line, format!("expected key = value, got {s:?}")));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(HarnessError::parse(line, format!("bad key {:?}", k.trim())));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(HarnessError::parse(line, format!("{key} already set on line {}", prev.line)));
        }
        out.push(ConfigEntry { key, value: v.trim().to_string(), line });
    }
    Ok(out)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Vec<ConfigEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text)
}

/// Renders entries as command-line flags.
pub fn to_flags(entries: &[ConfigEntry]) -> Vec<String> {
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        match e.value.as_str() {
            "true" => out.push(format!("--{}", e.key)),
            "false" => {}
            v => out.push(format!("--{}={v}", e.key)),
        }
    }
    out
}

/// Splices the entries of a `--config FILE` flag into `argv` right after the
/// subcommand, so that flags given on the command line come later and win.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            match it.next() {
                Some(p) => path = Some(p),
                None => return Err(HarnessError::Validation("--config needs a file".into())),
            }
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let flags = to_flags(&load_config(&path)?);
    let at = rest.iter().skip(1).position(|a| !a.starts_with('-')).map_or(rest.len(), |i| i + 2);
    rest.splice(at..at, flags);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let e = parse_config("# study\nrank_tol = 1e-3\n\n n = 500,1000 \nstrict=true\n").unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("rank-tol", "1e-3", 2));
        assert_eq!(to_flags(&e), ["--rank-tol=1e-3", "--n=500,1000", "--strict"]);
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(parse_config("a = 1\nb\n"), Err(HarnessError::Parse { line: 2, .. })));
        assert!(matches!(parse_config("a = 1\na = 2\n"), Err(HarnessError::Parse { line: 2, .. })));
        assert!(matches!(parse_config("a b = 1\n"), Err(HarnessError::Parse { line: 1, .. })));
    }

    #[test]
    fn config_flags_precede_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "seed = 3\ntrials = 4\n").unwrap();
        let argv: Vec<String> = ["cofactor", "--config", path.to_str().unwrap(), "recover-experiment", "--seed", "9"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_config(argv).unwrap();
        assert_eq!(out[1..], ["recover-experiment", "--seed=3", "--trials=4", "--seed", "9"]);
    }
}
