//! Config files and run manifests.
//!
//! A config file is TOML. Top-level `seed`, `threads` and `out` set the
//! global flags; a `[command]` table sets that command's flags by their long
//! names. Flags given on the command line win over the file. A manifest is a
//! config file for exactly one command, plus an informational `[manifest]`
//! table, so `euslm --config manifest.toml <command>` repeats a run.

use std::ffi::OsString;
use std::path::Path;

use clap::{Arg, CommandFactory};
use serde::Serialize;

use crate::args::{Cli, GlobalArgs};
use crate::CliError;

const GLOBAL_KEYS: [&str; 3] = ["seed", "threads", "out"];
const MANIFEST_TABLE: &str = "manifest";

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn subcommand_name(argv: &[OsString]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if let Some(flag) = s.strip_prefix("--") {
            if !flag.contains('=') && (flag == "config" || GLOBAL_KEYS.contains(&flag)) {
                it.next();
            }
            continue;
        }
        if s.starts_with('-') {
            continue;
        }
        return Some(s.into_owned());
    }
    None
}

fn given(argv: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefix = format!("--{key}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&prefix)
    })
}

fn scalar(v: &toml::Value) -> Result<String, String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(format!("unsupported value {other}")),
    }
}

fn flag_args(arg: &Arg, key: &str, value: &toml::Value) -> Result<Vec<OsString>, String> {
    let flag = OsString::from(format!("--{key}"));
    if !arg.get_action().takes_values() {
        return match value {
            toml::Value::Boolean(true) => Ok(vec![flag]),
            toml::Value::Boolean(false) => Ok(Vec::new()),
            _ => Err("expected true or false".into()),
        };
    }
    match value {
        toml::Value::Array(items) => {
            let items: Vec<String> = items.iter().map(scalar).collect::<Result<_, _>>()?;
            if arg.get_value_delimiter().is_some() {
                Ok(vec![flag, items.join(",").into()])
            } else {
                Ok(std::iter::once(flag).chain(items.into_iter().map(OsString::from)).collect())
            }
        }
        v => Ok(vec![flag, scalar(v)?.into()]),
    }
}

fn settable(cmd: &clap::Command) -> Vec<Arg> {
    cmd.get_arguments().filter(|a| a.get_long().is_some_and(|l| !matches!(l, "help" | "version" | "config"))).cloned().collect()
}

/// Appends the flags a `--config` file sets and the command line does not.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;

    let root = Cli::command();
    let globals = settable(&root);
    let active = subcommand_name(&argv);
    let mut extra = Vec::new();
    for (key, value) in &table {
        if let toml::Value::Table(section) = value {
            if key == MANIFEST_TABLE {
                continue;
            }
            let sub = root.find_subcommand(key).ok_or_else(|| CliError::Usage(format!("unknown config section [{key}]")))?;
            let args = settable(sub);
            for (k, v) in section {
                let arg = args.iter().find(|a| a.get_long() == Some(k)).ok_or_else(|| CliError::Usage(format!("unknown config key `{k}` in section [{key}]")))?;
                if active.as_deref() == Some(key.as_str()) && !given(&argv, k) {
                    extra.extend(flag_args(arg, k, v).map_err(|e| CliError::Usage(format!("config key `{k}` in [{key}]: {e}")))?);
                }
            }
        } else {
            let arg = globals
                .iter()
                .find(|a| a.get_long() == Some(key) && GLOBAL_KEYS.contains(&key.as_str()))
                .ok_or_else(|| CliError::Usage(format!("unknown config key `{key}`")))?;
            if !given(&argv, key) {
                extra.extend(flag_args(arg, key, value).map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))?);
            }
        }
    }
    if active.is_none() {
        return Ok(argv);
    }
    let mut out = argv;
    out.extend(extra);
    Ok(out)
}

#[derive(Serialize)]
struct ManifestInfo<'a> {
    command: &'a str,
    version: &'a str,
}

/// The resolved configuration of a run in config-file form.
pub fn manifest<T: Serialize>(command: &str, global: &GlobalArgs, args: &T) -> Result<String, CliError> {
    let ser = |e: toml::ser::Error| CliError::Usage(format!("cannot serialize configuration: {e}"));
    let mut table = toml::Table::try_from(global).map_err(ser)?;
    table.insert(MANIFEST_TABLE.into(), toml::Value::try_from(ManifestInfo { command, version: env!("CARGO_PKG_VERSION") }).map_err(ser)?);
    table.insert(command.into(), toml::Value::try_from(args).map_err(ser)?);
    toml::to_string(&table).map_err(ser)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn finds_subcommand_after_global_flags() {
        assert_eq!(subcommand_name(&os(&["euslm", "--seed", "3", "--out=x", "stats", "--corpus", "c"])).as_deref(), Some("stats"));
        assert_eq!(subcommand_name(&os(&["euslm", "--threads", "2"])), None);
    }

    #[test]
    fn command_line_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 9\n[split]\nratios = [0.5, 0.5]\ncorpus = \"a.txt\"\n[stats]\ncorpus = \"b.txt\"\n").unwrap();
        let p = path.to_str().unwrap();
        let argv = expand(os(&["euslm", "--config", p, "split", "--corpus", "z.txt"])).unwrap();
        let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(argv[6..], ["--seed", "9", "--ratios", "0.5,0.5"]);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[vocab-train]\ntarget-sise = 10\n").unwrap();
        let err = expand(os(&["euslm", "--config", path.to_str().unwrap(), "vocab-train"])).unwrap_err();
        assert!(err.to_string().contains("target-sise"), "{err}");
        std::fs::write(&path, "[vocab_train]\n").unwrap();
        assert!(expand(os(&["euslm", "--config", path.to_str().unwrap(), "stats"])).is_err());
        std::fs::write(&path, "verbose = true\n").unwrap();
        assert!(expand(os(&["euslm", "--config", path.to_str().unwrap(), "stats"])).is_err());
    }
}
