//! Flat `key = value` configuration file mirroring the long flags.

use std::collections::BTreeMap;

use anyhow::{bail, Result};

pub const KEYS: [&str; 9] = ["gamma", "seed", "out", "format", "dataset", "input", "replications", "degrees", "devices"];

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", k + 1);
        };
        let key = key.trim().trim_start_matches("--").to_string();
        if !KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key `{key}` (known: {})", k + 1, KEYS.join(", "));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}
