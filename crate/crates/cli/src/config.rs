use std::ffi::OsString;
use std::path::Path;

use clap::{Arg, Command};

use crate::error::{data, usage, CliResult};

/// Options of the root command that consume the following token.
const ROOT_VALUE_FLAGS: [&str; 3] = ["--config", "--threads", "--dump-model"];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(tok) = it.next() {
        let s = tok.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn subcommand_position(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if ROOT_VALUE_FLAGS.contains(&s.as_ref()) {
            i += 2;
            continue;
        }
        if !s.starts_with('-') {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn given_on_command_line(argv: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefixed = format!("--{long}=");
    argv.iter().any(|t| {
        let s = t.to_string_lossy();
        s == flag || s.starts_with(&prefixed)
    })
}

fn find_arg<'a>(cmd: &'a Command, long: &str) -> Option<&'a Arg> {
    cmd.get_arguments().find(|a| a.get_long() == Some(long))
}

fn tokens_for(arg: &Arg, key: &str, value: &str) -> CliResult<Vec<OsString>> {
    if arg.get_action().takes_values() {
        return Ok(vec![format!("--{key}={value}").into()]);
    }
    match value {
        "true" => Ok(vec![format!("--{key}").into()]),
        "false" => Ok(Vec::new()),
        other => Err(usage(format!("config key {key}: expected true or false, found {other:?}"))),
    }
}

/// Returns `argv` with config-file settings spliced in as flags wherever the
/// same flag is absent from the command line.
pub fn expand(argv: Vec<OsString>, root: &Command) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| data(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let entries = parse_config(&text)?;
    let sub_pos = subcommand_position(&argv);
    let sub = sub_pos.and_then(|p| root.find_subcommand(argv[p].to_string_lossy().as_ref()));
    let mut root_tokens = Vec::new();
    let mut sub_tokens = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(usage("config files cannot include other config files"));
        }
        if given_on_command_line(&argv, &key) {
            continue;
        }
        if let Some(arg) = sub.and_then(|s| find_arg(s, &key)) {
            sub_tokens.extend(tokens_for(arg, &key, &value)?);
        } else if let Some(arg) = find_arg(root, &key) {
            root_tokens.extend(tokens_for(arg, &key, &value)?);
        } else {
            return Err(usage(format!("unknown config key {key:?}")));
        }
    }
    let mut out = Vec::with_capacity(argv.len() + root_tokens.len() + sub_tokens.len());
    let mut argv = argv.into_iter();
    out.extend(argv.next());
    out.extend(root_tokens);
    let split = sub_pos.map_or(usize::MAX, |p| p - 1);
    for (i, tok) in argv.enumerate() {
        out.push(tok);
        if i == split {
            out.append(&mut sub_tokens);
        }
    }
    Ok(out)
}
