//! TOML configuration. Each `[subcommand]` table maps long flag names to
//! values; `[global]` holds flags shared by every subcommand. Values from
//! the file are appended after the command line, so they take precedence.

use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::Value;

fn flag_args(table: &toml::Table, out: &mut Vec<String>) -> Result<()> {
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Boolean(true) => out.push(flag),
            Value::Boolean(false) => {}
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                out.push(flag);
                out.push(parts.join(","));
            }
            other => {
                out.push(flag);
                out.push(scalar(other)?);
            }
        }
    }
    Ok(())
}

fn scalar(v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        other => bail!("unsupported config value {other}"),
    })
}

/// Flags contributed by `path` for `subcommand`.
pub fn config_args(path: &Path, subcommand: &str) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let mut out = Vec::new();
    for section in ["global", subcommand] {
        match doc.get(section) {
            Some(Value::Table(t)) => flag_args(t, &mut out)?,
            Some(_) => bail!("{}: [{section}] must be a table", path.display()),
            None => {}
        }
    }
    Ok(out)
}
