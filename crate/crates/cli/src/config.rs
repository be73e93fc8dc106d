//! Layering of defaults, an optional JSON config file and command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use unate::{Error, Result};

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                b.insert(k, v);
            }
        }
        (b, o) => *b = o,
    }
}

/// `base`, then the keys of `file`, then every flag that was given.
pub fn resolve<C: Serialize + DeserializeOwned>(
    base: &C,
    file: Option<&Path>,
    flags: &impl Serialize,
) -> Result<C> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let from_file: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if !from_file.is_object() {
            return Err(Error::Parse(format!(
                "{}: config must be a JSON object",
                path.display()
            )));
        }
        merge(&mut value, from_file);
    }
    merge(
        &mut value,
        serde_json::to_value(flags).expect("flags serialize"),
    );
    serde_json::from_value(value).map_err(|e| Error::Validation(format!("config: {e}")))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use unate::training::PretrainConfig;

    #[derive(Serialize)]
    struct Flags {
        #[serde(skip_serializing_if = "Option::is_none")]
        epochs: Option<usize>,
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"epochs": 5, "dim": 8}"#).unwrap();
        let c: PretrainConfig = resolve(
            &PretrainConfig::default(),
            Some(&file),
            &Flags { epochs: Some(2) },
        )
        .unwrap();
        assert_eq!((c.epochs, c.dim, c.batch_size), (2, 8, 128));
        let c: PretrainConfig = resolve(
            &PretrainConfig::default(),
            Some(&file),
            &Flags { epochs: None },
        )
        .unwrap();
        assert_eq!(c.epochs, 5);

        std::fs::write(&file, r#"{"epohcs": 5}"#).unwrap();
        let e = resolve(
            &PretrainConfig::default(),
            Some(&file),
            &Flags { epochs: None },
        );
        assert!(matches!(e, Err(Error::Validation(_))));
        std::fs::write(&file, "[1]").unwrap();
        assert!(matches!(
            resolve(
                &PretrainConfig::default(),
                Some(&file),
                &Flags { epochs: None }
            ),
            Err(Error::Parse(_))
        ));
    }
}
