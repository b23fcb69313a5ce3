//! All file output of a run goes through one [`Output`], on the calling
//! thread, after the parallel work has been reduced.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

/// A CSV table: header plus rows of already formatted fields.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let mut w =
            csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(File::create(self.path(name))?);
        w.write_record(&table.header)?;
        for r in &table.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.path(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// `manifest.toml`: subcommand, seed, versions, files written and the
    /// resolved config.
    pub fn write_manifest(&mut self, subcommand: &str, config: &ExperimentConfig) -> Result<()> {
        let mut t = toml::Table::new();
        t.insert("subcommand".into(), subcommand.into());
        t.insert("seed".into(), toml::Value::Integer(config.run.seed as i64));
        t.insert("spdr_version".into(), env!("CARGO_PKG_VERSION").into());
        t.insert("core_version".into(), spdr_core::VERSION.into());
        t.insert("files".into(), toml::Value::Array(self.files.iter().map(|f| f.as_str().into()).collect()));
        let cfg = toml::Value::try_from(config).expect("configs always serialize");
        t.insert("config".into(), cfg);
        std::fs::write(self.path("manifest.toml"), toml::to_string(&t).expect("manifest serializes"))?;
        Ok(())
    }
}
