//! `--config` files: one `key = value` per line, `#` starts a comment.
//! Keys are long flag names without the dashes. Flags on the command line
//! win over the file.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", idx + 1);
        };
        let key = key.trim().replace('_', "-");
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            bail!("config line {}: duplicate key {key}", idx + 1);
        }
    }
    Ok(out)
}

/// Path given with `--config`, looked up before clap runs so that its
/// values can fill in required flags.
fn config_path(args: &[String]) -> Option<&str> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            return iter.next().map(String::as_str);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p);
        }
    }
    None
}

/// Appends config values for flags of the chosen subcommand that are not
/// already on the command line. Keys no subcommand knows are an error; keys
/// that belong to another subcommand are ignored so one file can serve all.
pub fn merge_config(args: Vec<String>, cmd: &Command) -> Result<(Vec<String>, BTreeMap<String, String>)> {
    let Some(path) = config_path(&args) else {
        return Ok((args, BTreeMap::new()));
    };
    let text = std::fs::read_to_string(Path::new(path)).with_context(|| format!("reading config {path}"))?;
    let values = parse_config(&text).with_context(|| format!("in {path}"))?;

    let known = |name: &str| {
        cmd.get_arguments().any(|a| a.get_long() == Some(name))
            || cmd
                .get_subcommands()
                .any(|s| s.get_arguments().any(|a| a.get_long() == Some(name)))
    };
    if let Some(bad) = values.keys().find(|k| !known(k) || k.as_str() == "config") {
        bail!("config {path}: unknown key {bad}");
    }
    let Some(sub) = args
        .iter()
        .skip(1)
        .find_map(|a| cmd.get_subcommands().find(|s| s.get_name() == a))
    else {
        return Ok((args, values));
    };

    let mut merged = args.clone();
    for (key, value) in &values {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        let flag = format!("--{key}");
        let given = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        if arg.get_action().takes_values() {
            merged.push(flag);
            merged.push(value.clone());
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => merged.push(flag),
                "false" | "no" | "0" => {}
                other => bail!("config {path}: {key} expects true or false, got {other:?}"),
            }
        }
    }
    Ok((merged, values))
}
