//! `key = value` config files, merged into argv ahead of the user's flags
//! so that explicit flags win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses one `key = value` per line; `#` starts a comment.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{}`", n + 1, raw.trim());
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.push((key, value.to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Result<Option<(OsString, usize)>> {
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let Some(p) = args.get(i + 1) else {
                bail!("--config needs a path");
            };
            return Ok(Some((p.clone(), i)));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some((OsString::from(p), i)));
        }
    }
    Ok(None)
}

/// Index of the subcommand name in argv, skipping a leading `--config PATH`.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Returns argv with the config file's entries spliced in right after the
/// subcommand, as `--key=value`.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some((path, _)) = config_path(&args)? else {
        return Ok(args);
    };
    let Some(sub) = subcommand_index(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("in config file {}", path.display()))?;
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    out.extend(entries.into_iter().map(|(k, v)| OsString::from(format!("--{k}={v}"))));
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_spacing() {
        let e = parse("# header\nlambda = 0.2  # inline\n\niters=50\nstep_mode = gp\n").unwrap();
        assert_eq!(
            e,
            vec![
                ("lambda".into(), "0.2".into()),
                ("iters".into(), "50".into()),
                ("step-mode".into(), "gp".into())
            ]
        );
        assert!(parse("no equals sign").is_err());
        assert!(parse(" = 3").is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "lambda = 0.5\n").unwrap();
        let p = path.to_str().unwrap();
        let args = os(&["tvlearn", "--config", p, "denoise", "--lambda", "0.1"]);
        let out = expand(args).unwrap();
        let strs: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(strs, ["tvlearn", "--config", p, "denoise", "--lambda=0.5", "--lambda", "0.1"]);
    }

    #[test]
    fn no_config_is_identity() {
        let args = os(&["tvlearn", "denoise"]);
        assert_eq!(expand(args.clone()).unwrap(), args);
    }
}
