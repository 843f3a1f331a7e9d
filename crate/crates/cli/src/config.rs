//! JSON configuration files and flag overrides.
//!
//! Precedence: command-line flags, then the config file, then built-in
//! defaults. The seed has one extra layer: `RCGAN_SEED` is consulted only
//! when neither a flag nor the config file sets it.

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use std::path::Path;

pub const SEED_ENV: &str = "RCGAN_SEED";

pub type Object = Map<String, Value>;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            anyhow!("file not found: {}", path.display())
        } else {
            anyhow!(e).context(format!("reading {}", path.display()))
        }
    })
}

/// The JSON object in `path`, or an empty object.
pub fn load_object(path: Option<&Path>) -> Result<Object> {
    let Some(path) = path else { return Ok(Map::new()) };
    let text = read_text(path)?;
    match serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("{}: expected a JSON object", path.display()),
    }
}

/// Reads a typed JSON file. Schema errors name the field as a JSON pointer.
pub fn load_typed<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow!("{}: at {}: {}", path.display(), pointer(e.path()), e.inner()))
}

pub fn parse<T: DeserializeOwned>(value: Value, origin: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| anyhow!("{origin}: at {}: {}", pointer(e.path()), e.inner()))
}

pub fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push_str("(root)");
    }
    out
}

pub fn set(obj: &mut Object, key: &str, value: Option<impl Into<Value>>) {
    if let Some(v) = value {
        obj.insert(key.to_string(), v.into());
    }
}

/// The nested object under `key`, created if absent.
pub fn section<'a>(obj: &'a mut Object, key: &str) -> Result<&'a mut Object> {
    obj.entry(key).or_insert_with(|| Value::Object(Map::new())).as_object_mut().ok_or_else(|| anyhow!("/{key} must be an object"))
}

/// Applies the seed precedence to `obj["seed"]`.
pub fn resolve_seed_with(obj: &mut Object, flag: Option<u64>, env: Option<&str>) -> Result<()> {
    if let Some(seed) = flag {
        obj.insert("seed".into(), seed.into());
    } else if !obj.contains_key("seed") {
        if let Some(raw) = env {
            let seed: u64 =
                raw.trim().parse().map_err(|_| anyhow!("{SEED_ENV} must be an unsigned integer, got `{raw}`"))?;
            obj.insert("seed".into(), seed.into());
        }
    }
    Ok(())
}

pub fn resolve_seed(obj: &mut Object, flag: Option<u64>) -> Result<()> {
    let env = match std::env::var(SEED_ENV) {
        Ok(v) => Some(v),
        Err(std::env::VarError::NotPresent) => None,
        Err(e) => bail!("{SEED_ENV}: {e}"),
    };
    resolve_seed_with(obj, flag, env.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Cfg {
        seed: u64,
        widths: Vec<usize>,
        inner: Inner,
    }

    #[derive(Debug, Default, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Inner {
        rate: f64,
    }

    impl Default for Cfg {
        fn default() -> Self {
            Self { seed: 0, widths: vec![4], inner: Inner::default() }
        }
    }

    fn obj(v: Value) -> Object {
        v.as_object().unwrap().clone()
    }

    fn seed_of(mut o: Object, flag: Option<u64>, env: Option<&str>) -> u64 {
        resolve_seed_with(&mut o, flag, env).unwrap();
        parse::<Cfg>(Value::Object(o), "test").unwrap().seed
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(seed_of(obj(json!({"seed": 3})), Some(5), Some("7")), 5);
        assert_eq!(seed_of(obj(json!({"seed": 3})), None, Some("7")), 3);
        assert_eq!(seed_of(Map::new(), None, Some("7")), 7);
        assert_eq!(seed_of(Map::new(), None, None), 0);
        assert!(resolve_seed_with(&mut Map::new(), None, Some("-1")).is_err());
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let err = parse::<Cfg>(json!({"widths": [1, "x"]}), "cfg").unwrap_err().to_string();
        assert!(err.contains("/widths/1"), "{err}");
        let err = parse::<Cfg>(json!({"inner": {"rate": true}}), "cfg").unwrap_err().to_string();
        assert!(err.contains("/inner/rate"), "{err}");
        let err = parse::<Cfg>(json!({"sed": 1}), "cfg").unwrap_err().to_string();
        assert!(err.contains("sed"), "{err}");
    }

    #[test]
    fn pointer_escapes() {
        let err = parse::<std::collections::BTreeMap<String, u8>>(json!({"a/b~c": 300}), "m").unwrap_err().to_string();
        assert!(err.contains("/a~1b~0c"), "{err}");
    }

    #[test]
    fn sections_nest() {
        let mut o = Map::new();
        set(section(&mut o, "inner").unwrap(), "rate", Some(0.5));
        set(&mut o, "seed", None::<u64>);
        assert_eq!(parse::<Cfg>(Value::Object(o), "t").unwrap().inner.rate, 0.5);
        let mut bad = obj(json!({"inner": 3}));
        assert!(section(&mut bad, "inner").is_err());
    }
}
