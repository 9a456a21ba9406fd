//! `--config PATH` expansion.
//!
//! The file holds one flag per line, either `--flag value` or `flag=value`;
//! a bare `--flag` (or `flag=true`) sets a switch and `flag=false` is
//! skipped. Blank lines and lines starting with `#` are ignored. File flags
//! are inserted right after the subcommand, so flags given on the command
//! line take precedence.

use std::fs;

/// Replaces `--config PATH` in `args` by the flags read from `PATH`.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let file_args = parse_config(&text)?;
    // Insert after the subcommand: the first argument past the program name
    // that is not a flag.
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(rest.len(), |i| i + 2);
    rest.splice(at..at, file_args);
    Ok(rest)
}

/// Flags from the text of a config file.
pub fn parse_config(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = if line.starts_with("--") {
            match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k.to_string(), Some(v.trim().to_string())),
                None => match line.split_once('=') {
                    Some((k, v)) => (k.to_string(), Some(v.trim().to_string())),
                    None => (line.to_string(), None),
                },
            }
        } else if let Some((k, v)) = line.split_once('=') {
            (format!("--{}", k.trim()), Some(v.trim().to_string()))
        } else {
            return Err(format!("config line {}: expected `--flag value` or `flag=value`", no + 1));
        };
        if key == "--config" {
            return Err(format!("config line {}: nested --config is not supported", no + 1));
        }
        match value.as_deref() {
            Some("true") | None => out.push(key),
            Some("false") => {}
            Some(v) => {
                out.push(key);
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}
