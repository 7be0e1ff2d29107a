use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliError;

/// Output directory of one run; remembers what was written for the manifest.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn note(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.note(name);
        Ok(())
    }

    /// Whitespace-separated columns with a `#` header, for gnuplot.
    pub fn dat(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut s = format!("# {}\n", header.join(" "));
        for r in rows {
            let cols: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            s.push_str(&cols.join(" "));
            s.push('\n');
        }
        self.text(name, &s)
    }

    /// Writes through a temporary file so a crash never leaves a torn file.
    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let tmp = self.path(&format!(".{name}.tmp"));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, self.path(name))?;
        self.note(name);
        Ok(())
    }

    /// The config itself plus comment lines; parsing it back gives the
    /// config that reproduces this run.
    pub fn manifest(&mut self, cfg: &RunConfig, status: &str) -> Result<(), CliError> {
        self.note("manifest.txt");
        let mut body = format!("# dimers {} {}\n", env!("CARGO_PKG_VERSION"), cfg.command.name());
        body.push_str(&cfg.to_text());
        body.push_str(&format!("# status={status}\n"));
        body.push_str(&format!("# files={}\n", self.files.join(",")));
        let tmp = self.path(".manifest.txt.tmp");
        fs::write(&tmp, body)?;
        fs::rename(&tmp, self.path("manifest.txt"))?;
        Ok(())
    }
}

pub fn f(x: f64) -> String {
    x.to_string()
}
