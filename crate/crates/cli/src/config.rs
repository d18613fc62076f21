//! `--config <json>` support: the file's keys become flags placed before the
//! user's own, so explicit flags override them.

use std::fs;

use serde_json::Value;

use crate::args::{GLOBAL_FLAGS, SUBCOMMANDS};

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    let mut found = None;
    while let Some(a) = it.next() {
        if a == "--config" {
            found = it.next().cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            found = Some(v.to_string());
        }
    }
    found
}

fn to_flags(key: &str, value: &Value) -> Result<Vec<String>, String> {
    let flag = format!("--{}", key.replace('_', "-"));
    Ok(match value {
        Value::Bool(true) => vec![flag],
        Value::Bool(false) | Value::Null => vec![],
        Value::Number(n) => vec![flag, n.to_string()],
        Value::String(s) => vec![flag, s.clone()],
        Value::Array(items) => {
            let parts = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    _ => Err(format!(
                        "config key '{key}': list items must be strings or numbers"
                    )),
                })
                .collect::<Result<Vec<_>, _>>()?;
            vec![flag, parts.join(",")]
        }
        Value::Object(_) => {
            return Err(format!("config key '{key}': nested objects are not flags"))
        }
    })
}

/// Returns `argv` with the config file's flags spliced in: global flags
/// right after the program name, the rest right after the subcommand.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let json: Value =
        serde_json::from_str(&text).map_err(|e| format!("config {path} is not valid JSON: {e}"))?;
    let Value::Object(map) = json else {
        return Err(format!("config {path} must hold a JSON object"));
    };
    let mut global = Vec::new();
    let mut local = Vec::new();
    for (k, v) in &map {
        if k == "config" {
            continue;
        }
        if GLOBAL_FLAGS.contains(&k.as_str()) {
            global.extend(to_flags(k, v)?);
        } else {
            local.extend(to_flags(k, v)?);
        }
    }
    let sub = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str()));
    let mut out = Vec::with_capacity(argv.len() + global.len() + local.len());
    for (i, a) in argv.into_iter().enumerate() {
        out.push(a);
        if i == 0 {
            out.append(&mut global);
        }
        if Some(i) == sub {
            out.append(&mut local);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_are_spliced_before_user_flags() {
        let dir = std::env::temp_dir().join(format!("hsrecon-config-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        fs::write(
            &path,
            r#"{"seed": 3, "epochs": 5, "loss_weights": [1, 0, 0], "ensemble": true}"#,
        )
        .unwrap();
        let argv: Vec<String> = [
            "hsrecon",
            "train",
            "--epochs",
            "7",
            "--config",
            path.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let out = expand(argv).unwrap();
        assert_eq!(&out[..3], ["hsrecon", "--seed", "3"]);
        assert_eq!(out[3], "train");
        let user = out.iter().rposition(|a| a == "--epochs").unwrap();
        assert_eq!(out[user + 1], "7");
        assert!(out.iter().position(|a| a == "--epochs").unwrap() < user);
        assert!(out.contains(&"1,0,0".to_string()) && out.contains(&"--ensemble".to_string()));
        fs::remove_dir_all(&dir).unwrap();
    }
}
