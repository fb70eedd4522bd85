//! Versioned plain-text checkpoints.
//!
//! ```text
//! ddn-checkpoint v1
//! config {"feature_lens":[1,300,300],...}
//! profile {"name":"mit",...}
//! target capacity
//! tensor embed.0.weight 64 1
//! 0.0123 -0.2 ...
//! tensor embed.0.bias 64 1
//! ...
//! ```
//!
//! Tensors follow [`DdnParams::layers`] order, weight before bias, values
//! row-major on one line in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{NormProfile, Target};
use crate::error::{Error, Result};
use crate::model::{Ddn, DdnConfig, DdnParams};

pub const MAGIC: &str = "ddn-checkpoint v1";

/// A trained model plus what is needed to feed it and read its output.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Ddn,
    pub profile: NormProfile,
    pub target: Target,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "config {}", json(&self.model.config)).unwrap();
        writeln!(out, "profile {}", json(&self.profile)).unwrap();
        writeln!(out, "target {}", json(&self.target).trim_matches('"')).unwrap();
        for (name, layer) in self.model.params.layers() {
            let (r, c) = layer.weight.shape();
            tensor(&mut out, &format!("{name}.weight"), r, c, layer.weight.as_slice());
            tensor(&mut out, &format!("{name}.bias"), layer.bias.len(), 1, &layer.bias);
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut r = Cursor {
            lines: text.lines().collect(),
            pos: 0,
            origin,
        };
        let (n, magic) = r.next("header")?;
        if magic != MAGIC {
            return Err(r.fail(n, format!("expected `{MAGIC}`, found `{magic}`")));
        }
        let (n, config) = r.field("config")?;
        let config: DdnConfig = serde_json::from_str(config).map_err(|e| r.fail(n, e.to_string()))?;
        config.validate().map_err(|e| r.fail(n, e.to_string()))?;
        let (n, profile) = r.field("profile")?;
        let profile: NormProfile = serde_json::from_str(profile).map_err(|e| r.fail(n, e.to_string()))?;
        profile.validate().map_err(|e| r.fail(n, e.to_string()))?;
        let (n, target) = r.field("target")?;
        let target: Target = serde_json::from_value(serde_json::Value::String(target.to_string()))
            .map_err(|e| r.fail(n, e.to_string()))?;

        let mut params = DdnParams::zeros(&config);
        let names: Vec<String> = params.layers().into_iter().map(|(name, _)| name).collect();
        for (name, layer) in names.iter().zip(params.layers_mut()) {
            r.tensor(&format!("{name}.weight"), layer.weight.as_mut_slice())?;
            r.tensor(&format!("{name}.bias"), &mut layer.bias)?;
        }
        if let Some(extra) = r.lines[r.pos..].iter().position(|l| !l.trim().is_empty()) {
            return Err(r.fail(r.pos + extra + 1, "trailing content".into()));
        }
        let model = Ddn::new(config, params)?;
        Ok(Checkpoint { model, profile, target })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_text(&text, path)
    }
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn fail(&self, line: usize, message: String) -> Error {
        Error::Format {
            path: self.origin.to_path_buf(),
            message: format!("line {line}: {message}"),
        }
    }

    /// Next line and its 1-based number.
    fn next(&mut self, want: &str) -> Result<(usize, &'a str)> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.fail(self.pos + 1, format!("unexpected end of file, expected {want}")))?;
        self.pos += 1;
        Ok((self.pos, line))
    }

    /// Value of a `key value` line.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next(key)?;
        l.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|v| (n, v))
            .ok_or_else(|| self.fail(n, format!("expected `{key} ...`")))
    }

    fn tensor(&mut self, label: &str, buf: &mut [f64]) -> Result<()> {
        let (n, head) = self.field("tensor")?;
        let shape: Option<(usize, usize)> = match head.split(' ').collect::<Vec<_>>().as_slice() {
            [l, r, c] if *l == label => r.parse().ok().zip(c.parse().ok()),
            _ => None,
        };
        let (r, c) =
            shape.ok_or_else(|| self.fail(n, format!("expected `tensor {label} <rows> <cols>`, found `{head}`")))?;
        if r * c != buf.len() {
            return Err(self.fail(n, format!("{label}: shape {r}x{c} does not fit {} values", buf.len())));
        }
        let (n, values) = self.next("values")?;
        let parsed: Vec<f64> = values
            .split(' ')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.fail(n, format!("{label}: {e}")))?;
        if parsed.len() != buf.len() {
            return Err(self.fail(n, format!("{label}: {} values, expected {}", parsed.len(), buf.len())));
        }
        buf.copy_from_slice(&parsed);
        Ok(())
    }
}

fn tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    writeln!(out, "tensor {name} {rows} {cols}").unwrap();
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config types serialize")
}
