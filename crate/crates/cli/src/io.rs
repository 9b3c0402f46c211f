use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use recheck_core::corpus::{parse_conll, TaggedSentence};
use recheck_core::ranking::TOOL_VERSION;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// `-` reads stdin.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    open_input(path)?
        .read_to_string(&mut s)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(s)
}

/// `-` writes stdout.
pub fn create_output(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

pub fn read_conll(path: &Path) -> Result<Vec<TaggedSentence>> {
    parse_conll(open_input(path)?).with_context(|| format!("in {}", path.display()))
}

/// Command name, its arguments, and their hash.
pub struct Provenance {
    command: &'static str,
    args: BTreeMap<String, Value>,
}

impl Provenance {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            args: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.args.insert(name.to_string(), value.into());
        self
    }

    pub fn path(self, name: &str, value: &Path) -> Self {
        let v = value.display().to_string();
        self.arg(name, v)
    }

    pub fn config_hash(&self) -> String {
        let v = json!({ "command": self.command, "args": self.args });
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn header(&self, schema: &str) -> Value {
        json!({
            "schema": schema,
            "tool_version": TOOL_VERSION,
            "command": self.command,
            "config_hash": self.config_hash(),
            "args": self.args,
        })
    }

    /// Provenance for files with no room for a header. Outputs are listed by
    /// file name; they sit next to the sidecar.
    pub fn write_sidecar(&self, path: &Path, outputs: &[PathBuf]) -> Result<()> {
        let mut v = self.header("recheck/provenance/v1");
        v["outputs"] = outputs
            .iter()
            .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
            .collect();
        let mut w = create_output(path)?;
        writeln!(w, "{}", serde_json::to_string_pretty(&v)?)?;
        w.flush()?;
        Ok(())
    }
}
