use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// Output files assembled in memory and written only once the whole run has
/// succeeded.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

/// A CSV table; cells are written with the shortest round-trip formatting, so
/// equal values always produce equal bytes.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[String]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn with_columns(header: &[&str]) -> Self {
        Self::new(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    pub fn row(&mut self, values: &[f64]) {
        self.writer.write_record(values.iter().map(|v| v.to_string())).expect("in-memory write");
    }

    pub fn text_row(&mut self, cells: &[String]) {
        self.writer.write_record(cells).expect("in-memory write");
    }

    fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

impl Artifacts {
    pub fn add_table(&mut self, name: impl Into<String>, table: Table) {
        self.files.push((name.into(), table.into_bytes()));
    }

    pub fn add_json(&mut self, name: impl Into<String>, value: &impl Serialize) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable summary");
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes each file to a hidden temporary next to its target, then
    /// renames it into place.
    pub fn commit(self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.files {
            let target = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, &bytes)?;
            fs::rename(&tmp, &target)?;
        }
        Ok(())
    }
}
