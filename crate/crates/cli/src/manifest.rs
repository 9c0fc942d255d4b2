//! Run manifests: every output directory gets exactly one `manifest.txt`
//! recording the resolved parameters so the run is reproducible from the
//! manifest alone.

use std::fmt::Write as _;
use std::path::Path;

use shadowlane_core::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    /// Fully resolved parameters, sorted by key.
    pub params: Vec<(String, String)>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            params: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            duration_s: 0.0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version = {}", self.version);
        let _ = writeln!(out, "subcommand = {}", self.subcommand);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "duration_s = {:.3}", self.duration_s);
        let mut params = self.params.clone();
        params.sort();
        for (k, v) in &params {
            let _ = writeln!(out, "param.{k} = {v}");
        }
        for i in &self.inputs {
            let _ = writeln!(out, "input = {i}");
        }
        for o in &self.outputs {
            let _ = writeln!(out, "output = {o}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut m = Self::new("", 0);
        m.version.clear();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                format: "manifest".into(),
                line: ln + 1,
                detail: "expected key = value".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            let bad = |detail: String| Error::Parse {
                format: "manifest".into(),
                line: ln + 1,
                detail,
            };
            match k {
                "version" => m.version = v.into(),
                "subcommand" => m.subcommand = v.into(),
                "seed" => m.seed = v.parse().map_err(|e| bad(format!("seed: {e}")))?,
                "duration_s" => {
                    m.duration_s = v.parse().map_err(|e| bad(format!("duration: {e}")))?
                }
                "input" => m.inputs.push(v.into()),
                "output" => m.outputs.push(v.into()),
                _ => match k.strip_prefix("param.") {
                    Some(p) => m.params.push((p.into(), v.into())),
                    None => return Err(bad(format!("unknown key {k}"))),
                },
            }
        }
        Ok(m)
    }

    /// Write into `dir`, replacing any previous manifest there.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}
