//! `--config file.json` support: every key becomes a flag inserted right
//! after the subcommand, so flags given on the command line win.

use std::ffi::OsString;

use anyhow::{bail, Context, Result};
use serde_json::Value;

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(p.into());
        }
    }
    None
}

fn scalar(v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        // [a, b] pairs become `a:b`
        Value::Array(items) if items.len() == 2 && items.iter().all(Value::is_number) => {
            format!("{}:{}", scalar(&items[0])?, scalar(&items[1])?)
        }
        other => bail!("unsupported config value {other}"),
    })
}

fn value_token(key: &str, v: &Value) -> Result<String> {
    match v {
        Value::Array(_) if key == "window" => scalar(v),
        Value::Array(items) => Ok(items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",")),
        other => scalar(other),
    }
}

pub fn tokens(cfg: &Value) -> Result<Vec<OsString>> {
    let Value::Object(map) = cfg else {
        bail!("config must be a JSON object");
    };
    let mut out = Vec::new();
    for (key, v) in map {
        if v.is_null() || key == "config" {
            continue;
        }
        out.push(format!("--{}", key.replace('_', "-")).into());
        out.push(value_token(key, v).with_context(|| format!("config key '{key}'"))?.into());
    }
    Ok(out)
}

pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let cfg: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.to_string_lossy()))?;
    let extra = tokens(&cfg)?;
    // insert after the program name and subcommand
    let at = argv.len().min(2);
    let mut out = argv[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}
