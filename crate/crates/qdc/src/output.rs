//! CSV and JSON artifacts. Floats use the shortest representation that parses
//! back to the same bits; every file is written to a temporary sibling and
//! renamed into place, and a failed run removes whatever it already wrote.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

/// Shortest round-trip text for `x`; non-finite values become `nan`, `inf`
/// or `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// Accumulates CSV text with a fixed header.
#[derive(Debug, Clone)]
pub struct Csv {
    columns: usize,
    text: String,
}

/// One CSV field.
pub enum Field {
    F(f64),
    /// Missing value, written as an empty field.
    Missing,
    U(u64),
    B(bool),
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::F(x)
    }
}

impl From<Option<f64>> for Field {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Field::Missing, Field::F)
    }
}

impl From<usize> for Field {
    fn from(x: usize) -> Self {
        Field::U(x as u64)
    }
}

impl From<u64> for Field {
    fn from(x: u64) -> Self {
        Field::U(x)
    }
}

impl From<bool> for Field {
    fn from(x: bool) -> Self {
        Field::B(x)
    }
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { columns: header.len(), text }
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = Field>) {
        let mut n = 0;
        for f in fields {
            if n > 0 {
                self.text.push(',');
            }
            match f {
                Field::F(x) => self.text.push_str(&fmt_f64(x)),
                Field::Missing => {}
                Field::U(u) => write!(self.text, "{u}").expect("write to string"),
                Field::B(b) => self.text.push(if b { '1' } else { '0' }),
            }
            n += 1;
        }
        assert_eq!(n, self.columns, "CSV row width");
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[macro_export]
macro_rules! csv_row {
    ($csv:expr, $($x:expr),+ $(,)?) => {
        $csv.row([$($crate::output::Field::from($x)),+])
    };
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Files written by one run; dropped without [`OutputSet::commit`] they are
/// deleted again.
#[derive(Debug, Default)]
pub struct OutputSet {
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: PathBuf, contents: &[u8]) -> io::Result<()> {
        write_atomic(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

/// `<prefix>.<suffix>` as a path.
pub fn artifact_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.{suffix}"))
}
