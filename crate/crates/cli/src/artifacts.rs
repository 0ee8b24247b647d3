//! Output files: provenance headers, staged writes and CSV helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::TempDir;

use crate::config::RunConfig;
use crate::error::CliError;

/// Config hash and seeds stamped on every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub config_sha256: String,
    pub split_seed: u64,
    pub permutation_seed: u64,
    pub simulate_seed: u64,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            tool: format!("tempfield {}", env!("CARGO_PKG_VERSION")),
            config_sha256: config.hash(),
            split_seed: config.split.seed,
            permutation_seed: config.diagnostics.permutation_seed,
            simulate_seed: config.simulate.seed,
        }
    }

    fn lines(&self) -> [String; 2] {
        [
            format!("{} config_sha256={}", self.tool, self.config_sha256),
            format!(
                "seeds split={} permutation={} simulate={}",
                self.split_seed, self.permutation_seed, self.simulate_seed
            ),
        ]
    }

    /// `# `-prefixed lines for CSV and text files.
    pub fn comment(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    pub fn xml_comment(&self) -> String {
        let [a, b] = self.lines();
        format!("<!-- {a} {b} -->\n")
    }

    /// JSON object `{"provenance": …, key: value}`.
    pub fn json<V: Serialize>(&self, key: &str, value: &V) -> String {
        let mut map = serde_json::Map::new();
        map.insert("provenance".into(), serde_json::to_value(self).expect("serializable"));
        map.insert(key.into(), serde_json::to_value(value).expect("serializable"));
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("serializable");
        s.push('\n');
        s
    }
}

/// Files written to a hidden directory inside the target and moved into
/// place only on [`Staging::commit`]. Dropping an uncommitted staging area
/// deletes everything written so far.
pub struct Staging {
    target: PathBuf,
    dir: TempDir,
    files: Vec<PathBuf>,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(target).map_err(CliError::output(target))?;
        let dir = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(target)
            .map_err(CliError::output(target))?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            files: Vec::new(),
        })
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// `name` may contain subdirectories.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.dir.path().join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::output(parent))?;
        }
        fs::write(&path, contents).map_err(CliError::output(self.target.join(name)))?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    /// Moves every staged file into the target; returns their final paths.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            let dest = self.target.join(rel);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).map_err(CliError::output(parent))?;
            }
            fs::rename(self.dir.path().join(rel), &dest).map_err(CliError::output(&dest))?;
            done.push(dest);
        }
        Ok(done)
    }
}

/// Fixed six-decimal rendering used in every CSV.
pub fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    // avoid "-0.000000" flickering with the sign of tiny values
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Builds a CSV document that starts with the provenance header.
pub struct CsvDoc {
    head: String,
    body: csv::Writer<Vec<u8>>,
}

impl CsvDoc {
    pub fn new(prov: &Provenance, columns: &[&str]) -> Self {
        let mut body = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        body.write_record(columns).expect("in-memory csv write");
        Self {
            head: prov.comment(),
            body,
        }
    }

    /// Extra `# ` comment line placed above the column names.
    pub fn note(mut self, line: &str) -> Self {
        self.head.push_str(&format!("# {line}\n"));
        self
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        self.body
            .write_record(fields.iter().map(|f| f.as_ref()))
            .expect("in-memory csv write");
    }

    pub fn finish(self) -> String {
        let bytes = self.body.into_inner().expect("in-memory csv flush");
        self.head + &String::from_utf8(bytes).expect("csv output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::new(&RunConfig::default())
    }

    #[test]
    fn csv_has_header_notes_and_escaping() {
        let mut doc = CsvDoc::new(&prov(), &["a", "b"]).note("fold_fraction=0");
        doc.row(&["x,y", "2"]);
        let text = doc.finish();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# tempfield"));
        assert!(lines[1].starts_with("# seeds split=1"));
        assert_eq!(lines[2], "# fold_fraction=0");
        assert_eq!(lines[3], "a,b");
        assert_eq!(lines[4], "\"x,y\",2");
    }

    #[test]
    fn negative_zero_is_normalized() {
        assert_eq!(num(-1e-9), "0.000000");
        assert_eq!(num(-0.5), "-0.500000");
    }

    #[test]
    fn uncommitted_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        {
            let mut s = Staging::new(&target).unwrap();
            s.write("a.csv", "x").unwrap();
            s.write("sub/b.csv", "y").unwrap();
        }
        assert_eq!(fs::read_dir(&target).unwrap().count(), 0);
        let mut s = Staging::new(&target).unwrap();
        s.write("sub/b.csv", "y").unwrap();
        let done = s.commit().unwrap();
        assert_eq!(done, vec![target.join("sub/b.csv")]);
        assert_eq!(fs::read_to_string(target.join("sub/b.csv")).unwrap(), "y");
        let names: Vec<_> = fs::read_dir(&target).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("sub")]);
    }
}
