use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use spsim::analysis::Histogram;
use spsim::Result;

/// `out/<run-id>/{tags,results,report}`.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(output_dir: &Path, run_id: &str) -> Result<Self> {
        let root = output_dir.join(run_id);
        for sub in ["tags", "results", "report"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root })
    }

    pub fn tags(&self, name: &str) -> PathBuf {
        self.root.join("tags").join(name)
    }

    pub fn results(&self, name: &str) -> PathBuf {
        self.root.join("results").join(name)
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("report").join(name)
    }
}

pub fn to_json<T: Serialize>(metadata: &Value, result: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&json!({ "metadata": metadata, "result": result }))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, metadata: &Value, result: &T) -> Result<()> {
    fs::write(path, to_json(metadata, result)?)?;
    Ok(())
}

pub fn write_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    hist.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes `result` under `results/` when a run directory is given, else
/// prints it.
pub fn emit<T: Serialize>(dir: Option<&RunDir>, name: &str, metadata: &Value, result: &T) -> Result<()> {
    match dir {
        Some(d) => write_json(&d.results(&format!("{name}.json")), metadata, result),
        None => {
            print!("{}", to_json(metadata, result)?);
            Ok(())
        }
    }
}
