//! Configs shipped with the binary.

use std::path::Path;

use anyhow::{bail, Context};

use crate::config::{parse_config, ExperimentConfig};

pub const PRESETS: &[(&str, &str)] = &[
    ("synthetic_fig1a", include_str!("../presets/synthetic_fig1a.toml")),
    ("synthetic_fig1b", include_str!("../presets/synthetic_fig1b.toml")),
    ("synthetic_fig1c", include_str!("../presets/synthetic_fig1c.toml")),
    ("synthetic_fig2", include_str!("../presets/synthetic_fig2.toml")),
    ("table1", include_str!("../presets/table1.toml")),
    ("fmnist_fig3a", include_str!("../presets/fmnist_fig3a.toml")),
    ("fmnist_fig3b", include_str!("../presets/fmnist_fig3b.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> anyhow::Result<ExperimentConfig> {
    let text = preset_text(name).with_context(|| format!("no preset named `{name}`"))?;
    Ok(parse_config(text)?)
}

/// Read `spec` as a file if it exists, otherwise as a preset name (a
/// trailing `.toml` / `.cfg` and any directories are ignored).
pub fn load_config(spec: &str) -> anyhow::Result<ExperimentConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return parse_config(&text).with_context(|| format!("in {spec}"));
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    if preset_text(stem).is_some() {
        return preset(stem);
    }
    let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
    bail!("`{spec}` is neither a file nor a preset (presets: {})", names.join(", "))
}
