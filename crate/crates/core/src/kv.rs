//! Canonical `key=value` text used for config files, checkpoint metadata and
//! run manifests. Keys are sorted on output; `#` starts a comment line.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type KvMap = BTreeMap<String, String>;

pub fn parse(text: &str) -> Result<KvMap> {
    let mut out = KvMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
        let k = k.trim();
        if k.is_empty() || k.chars().any(|c| c.is_whitespace() || c == '=') {
            return Err(Error::Malformed(format!("line {}: invalid key {k:?}", lineno + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Malformed(format!("line {}: duplicate key {k:?}", lineno + 1)));
        }
    }
    Ok(out)
}

pub fn render(map: &KvMap) -> String {
    let mut s = String::new();
    for (k, v) in map {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}

/// Typed lookup with a default when the key is absent.
pub fn get_or<T: std::str::FromStr>(map: &KvMap, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| Error::Config(format!("{key}={v}: {e}"))),
    }
}

pub fn get<T: std::str::FromStr>(map: &KvMap, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let v = map.get(key).ok_or_else(|| Error::Config(format!("missing key {key:?}")))?;
    v.parse().map_err(|e| Error::Config(format!("{key}={v}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_canonically() {
        let m = parse("# comment\n b = 2\na=1\n\nc = x y\n").unwrap();
        assert_eq!(render(&m), "a=1\nb=2\nc=x y\n");
        assert_eq!(parse(&render(&m)).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse("novalue\n").is_err());
        assert!(parse("a=1\na=2\n").is_err());
        assert!(parse("=3\n").is_err());
        assert!(parse("a b=3\n").is_err());
    }

    #[test]
    fn typed_access() {
        let m = parse("x=0.25\nn=7\n").unwrap();
        assert_eq!(get::<f64>(&m, "x").unwrap(), 0.25);
        assert_eq!(get_or::<usize>(&m, "missing", 3).unwrap(), 3);
        assert!(get::<usize>(&m, "x").is_err());
    }
}
