//! Config files: JSON merged over the defaults of a profile.

use std::path::Path;

use serde_json::{Map, Value};
use xlmimo::harness::{Profile, RunConfig};

use crate::CliError;

/// Keys every config file must set.
pub const REQUIRED_KEYS: [&str; 2] = ["version", "M"];

/// Line of the first occurrence of `"key"` in `text`, 1-based.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

fn at_line(text: &str, key: &str) -> String {
    match line_of(text, key) {
        Some(n) => format!(" (line {n})"),
        None => String::new(),
    }
}

/// Values that are enums tagged by a `kind` key; they replace the default
/// whole instead of merging.
const TAGGED: [&str; 1] = ["data.train_snr"];

/// Overlays `file` on `base`. Objects merge key by key; anything else,
/// including arrays and tagged values, replaces the default outright. Keys
/// absent from `base` are rejected.
fn merge(base: &mut Value, file: &Value, path: &str, text: &str) -> Result<(), CliError> {
    match (base, file) {
        (Value::Object(b), Value::Object(f)) if !TAGGED.contains(&path) => {
            for (k, v) in f {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &here, text)?,
                    None => {
                        return Err(CliError::Config(format!("unknown key \"{here}\"{}", at_line(text, k))));
                    }
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v.clone();
            Ok(())
        }
    }
}

/// Resolves the run configuration from an optional file, the `--profile`
/// flag and the `--seed` override.
///
/// The profile is taken from the flag, else from the file's `profile` key,
/// else `desk`.
pub fn resolve(path: Option<&Path>, profile: Option<Profile>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let (text, file) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!("{}: malformed JSON at line {}: {e}", p.display(), e.line()))
            })?;
            (text, Some(value))
        }
        None => (String::new(), None),
    };
    let file_profile = match file.as_ref().and_then(|v| v.get("profile")) {
        Some(Value::String(s)) => Some(
            Profile::parse(s)
                .ok_or_else(|| CliError::Config(format!("unknown profile \"{s}\"{}", at_line(&text, "profile"))))?,
        ),
        Some(_) => return Err(CliError::Config(format!("\"profile\" must be a string{}", at_line(&text, "profile")))),
        None => None,
    };
    let profile = profile.or(file_profile).unwrap_or(Profile::Desk);
    let mut value = serde_json::to_value(RunConfig::for_profile(profile)).expect("config serialises");
    if let Some(f) = &file {
        let obj: &Map<String, Value> = f
            .as_object()
            .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
        for key in REQUIRED_KEYS {
            if !obj.contains_key(key) {
                return Err(CliError::Config(format!("missing required key \"{key}\"")));
            }
        }
        merge(&mut value, f, "", &text)?;
        value["profile"] = serde_json::to_value(profile).expect("profile serialises");
    }
    let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let key = path.rsplit('.').next().unwrap_or("").to_string();
        CliError::Config(format!("invalid value for \"{path}\"{}: {}", at_line(&text, &key), e.inner()))
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn err(text: &str) -> String {
        resolve(Some(write(text).path()), None, None).unwrap_err().to_string()
    }

    #[test]
    fn defaults_without_file() {
        let c = resolve(None, Some(Profile::Paper), Some(7)).unwrap();
        assert_eq!(c.antennas, 256);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn partial_file_merges_over_profile() {
        let f = write(r#"{"version": 1, "M": 16, "model": {"kind": "xlcnet", "features": 8, "ffn_hidden": 32}, "data": {"train_snr": {"kind": "fixed", "snr_db": 5}}}"#);
        let c = resolve(Some(f.path()), None, None).unwrap();
        assert_eq!((c.antennas, c.model.features, c.model.heads), (16, 8, 4));
        assert_eq!(c.model.kind, xlmimo::model::ModelKind::Xlcnet);
        assert_eq!(c.data.train_snr, xlmimo::harness::SnrPolicy::Fixed { snr_db: 5.0 });
        assert_eq!(c.data.n_train, 2000);
    }

    #[test]
    fn missing_m_is_named() {
        assert!(err(r#"{"version": 1}"#).contains("\"M\""));
    }

    #[test]
    fn unknown_key_reports_path_and_line() {
        let e = err("{\n  \"version\": 1,\n  \"M\": 64,\n  \"train\": {\n    \"epochz\": 3\n  }\n}");
        assert!(e.contains("train.epochz") && e.contains("line 5"), "{e}");
    }

    #[test]
    fn bad_type_reports_path() {
        let e = err("{\"version\": 1, \"M\": 64,\n\"train\": {\"batch_size\": \"many\"}}");
        assert!(e.contains("train.batch_size") && e.contains("line 2"), "{e}");
    }

    #[test]
    fn resolved_config_reparses_identically() {
        let c = resolve(None, None, None).unwrap();
        let f = write(&serde_json::to_string_pretty(&c).unwrap());
        assert_eq!(resolve(Some(f.path()), None, None).unwrap(), c);
    }
}
