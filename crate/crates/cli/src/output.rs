//! Output files. Every path is claimed before any computation starts, so a
//! run never dies halfway because its last file already exists.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::ValueEnum;
use serde_json::{json, Value};

use geophase_core::config::ModelConfig;
use geophase_core::experiments::write_table;

use crate::{Common, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Outputs {
    dir: PathBuf,
    format: Format,
    force: bool,
    config: Value,
    planned: Vec<PathBuf>,
}

fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

impl Outputs {
    pub fn new(common: &Common, config: &ModelConfig) -> Self {
        Outputs {
            dir: common.out.clone(),
            format: common.format,
            force: common.force,
            config: config.to_json(),
            planned: Vec::new(),
        }
    }

    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}.{ext}"))
    }

    fn table_ext(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    /// Declares a table file; its extension follows `--format`.
    pub fn table(&mut self, stem: &str) {
        let p = self.path(stem, self.table_ext());
        self.planned.push(p);
    }

    pub fn json(&mut self, stem: &str) {
        let p = self.path(stem, "json");
        self.planned.push(p);
    }

    /// Creates the directory and refuses to replace files without `--force`.
    pub fn ready(&self) -> Result<(), Failure> {
        if !self.force {
            if let Some(p) = self.planned.iter().find(|p| p.exists()) {
                return Err(Failure::Usage(format!("{} exists; pass --force to replace it", p.display())));
            }
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| io_failure(&self.dir, e))
    }

    fn open(&self, path: PathBuf) -> Result<(PathBuf, BufWriter<File>), Failure> {
        let mut o = OpenOptions::new();
        o.write(true);
        if self.force {
            o.create(true).truncate(true);
        } else {
            o.create_new(true);
        }
        let f = o.open(&path).map_err(|e| io_failure(&path, e))?;
        Ok((path, BufWriter::new(f)))
    }

    pub fn write_table(&self, stem: &str, columns: &[String], rows: &[Vec<f64>]) -> Result<(), Failure> {
        let (path, mut w) = self.open(self.path(stem, self.table_ext()))?;
        match self.format {
            Format::Csv => write_table(&mut w, &self.config, columns, rows)?,
            Format::Json => {
                let doc = json!({ "config": self.config, "columns": columns, "rows": rows });
                serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Failure::Usage(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| io_failure(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Writes `doc` with the resolved config under `resolved_config`.
    pub fn write_json(&self, stem: &str, doc: &Value) -> Result<(), Failure> {
        let (path, mut w) = self.open(self.path(stem, "json"))?;
        let mut doc = doc.clone();
        if let Value::Object(m) = &mut doc {
            m.insert("resolved_config".into(), self.config.clone());
        }
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Failure::Usage(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| io_failure(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}
