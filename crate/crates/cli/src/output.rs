//! Deterministic file output: CSV tables with `#` metadata and JSON, each
//! written to a temporary file and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nvsim::trace::{format_g, CSV_DIGITS};
use serde::Serialize;

pub struct Writer {
    pub dir: PathBuf,
    /// Version stamp added to every file when set.
    pub stamp: Option<String>,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: PathBuf, stamp: bool) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            stamp: stamp.then(|| env!("CARGO_PKG_VERSION").to_string()),
            written: Vec::new(),
        })
    }

    fn write_atomic(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        self.written.push(path);
        Ok(())
    }

    fn stamped(&self, mut meta: BTreeMap<String, String>) -> BTreeMap<String, String> {
        if let Some(v) = &self.stamp {
            meta.insert("nvsim_version".into(), v.clone());
        }
        meta
    }

    /// CSV with the given header and numeric rows.
    pub fn table(&mut self, name: &str, meta: BTreeMap<String, String>, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
        let mut out = String::new();
        for (k, v) in self.stamped(meta) {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "{}", header.join(","));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|x| format_g(*x, CSV_DIGITS)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        self.write_atomic(name, &out)
    }

    pub fn spectrum(&mut self, name: &str, trace: &nvsim::SpectrumTrace) -> std::io::Result<()> {
        let mut t = trace.clone();
        t.metadata = self.stamped(t.metadata);
        self.write_atomic(name, &t.to_csv())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut v = serde_json::to_value(value).map_err(std::io::Error::other)?;
        if let (Some(s), Some(obj)) = (&self.stamp, v.as_object_mut()) {
            obj.insert("nvsim_version".into(), s.clone().into());
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write_atomic(name, &text)
    }
}

pub fn meta<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
