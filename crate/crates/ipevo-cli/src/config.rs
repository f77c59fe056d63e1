//! `--config file.toml`: keys mirror the long flags (`n_grid` or `n-grid`),
//! plus an optional `command`. Flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

pub const COMMANDS: [&str; 5] = ["simulate", "evolve", "metric", "verify", "render"];

fn value_text(key: &str, v: &toml::Value) -> Result<Option<String>, String> {
    Ok(match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(_) => None,
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, String> = items
                .iter()
                .map(|x| match value_text(key, x)? {
                    Some(s) => Ok(s),
                    None => Err(format!("config key {key:?}: arrays must hold strings or numbers")),
                })
                .collect();
            Some(parts?.join(","))
        }
        _ => return Err(format!("config key {key:?}: unsupported value type")),
    })
}

fn given(args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    args.iter().filter_map(|a| a.to_str()).any(|a| a == flag || a.starts_with(&eq))
}

/// Pull `--config` out of `args` and splice the file's flags in after the
/// subcommand name.
pub fn expand(mut args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        match args[i].to_str() {
            Some("--config") => {
                if i + 1 >= args.len() {
                    return Err("--config needs a file".into());
                }
                path = Some(args.remove(i + 1));
                args.remove(i);
            }
            Some(a) if a.starts_with("--config=") => {
                path = Some(OsString::from(&a["--config=".len()..]));
                args.remove(i);
            }
            _ => i += 1,
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| format!("{}: {e}", Path::new(&path).display()))?;
    let table: toml::Table = text.parse().map_err(|e| format!("{}: {e}", Path::new(&path).display()))?;

    let mut pos = args.iter().position(|a| a.to_str().is_some_and(|s| COMMANDS.contains(&s)));
    if pos.is_none() {
        match table.get("command") {
            Some(toml::Value::String(c)) => {
                args.insert(1, c.into());
                pos = Some(1);
            }
            _ => return Err("no subcommand given on the command line or as `command` in the config".into()),
        }
    }
    let mut insert = pos.unwrap() + 1;
    for (key, v) in &table {
        if key == "command" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if given(&args, &flag) {
            continue;
        }
        match value_text(key, v)? {
            Some(s) => {
                args.insert(insert, flag.into());
                args.insert(insert + 1, s.into());
                insert += 2;
            }
            None => {
                if v.as_bool() == Some(true) {
                    args.insert(insert, flag.into());
                    insert += 1;
                }
            }
        }
    }
    Ok(args)
}
