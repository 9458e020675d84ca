//! `key=value` config files merged into the command line.
//!
//! Each key names a long flag (`train-n=1000` is `--train-n 1000`). File
//! values are inserted right after the subcommand, ahead of the user's own
//! flags, and every flag keeps its last occurrence, so the command line
//! wins. Keys that belong to other subcommands are ignored.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::error::{CliError, CliResult};

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value, got {raw:?}", n + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config(format!("config line {}: empty key", n + 1)));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn long_flags(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments().filter_map(|a| a.get_long()).map(str::to_string).collect()
}

/// Returns `args` with the config file's values spliced in.
pub fn merge_config(cmd: &Command, args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut config_path = None;
    let mut sub_index = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config_path = args.get(i + 1).cloned();
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.into());
        } else if sub_index.is_none() && !a.starts_with('-') {
            sub_index = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(sub_index)) = (config_path, sub_index) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let pairs = parse_config(&text)?;

    let sub_name = args[sub_index].to_string_lossy().to_string();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let accepted = long_flags(sub);
    let known: BTreeSet<String> = cmd.get_subcommands().flat_map(long_flags).collect();
    let mut injected = Vec::new();
    for (key, value) in pairs {
        if key == "config" {
            return Err(CliError::Config("config files cannot include other config files".into()));
        }
        if accepted.contains(&key) {
            injected.push(OsString::from(format!("--{key}")));
            injected.push(OsString::from(value));
        } else if !known.contains(&key) {
            return Err(CliError::Config(format!("{}: unknown key {key:?}", path.display())));
        }
    }
    let mut merged = args[..=sub_index].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[sub_index + 1..]);
    Ok(merged)
}
