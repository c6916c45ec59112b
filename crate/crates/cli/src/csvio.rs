//! Versioned CSV files.
//!
//! Every file starts with a comment line `# nmr-qrc <kind> v<version>`
//! followed by a fixed header row. Readers reject other kinds, other
//! versions and unexpected headers.

use crate::error::CliError;
use std::path::Path;

pub struct Schema {
    pub kind: &'static str,
    pub version: u32,
    pub header: &'static [&'static str],
}

pub const TRACES: Schema = Schema {
    kind: "traces",
    version: 1,
    header: &["k", "l", "m", "t_seconds", "signal"],
};

pub const METRICS: Schema = Schema {
    kind: "metrics",
    version: 1,
    header: &["task", "M", "mse", "digitized_errors"],
};

pub const PREDICTIONS: Schema = Schema {
    kind: "predictions",
    version: 1,
    header: &["task", "M", "instance", "inputs", "target", "prediction"],
};

pub const MSE_VS_M: Schema = Schema {
    kind: "mse-vs-m",
    version: 1,
    header: &["series", "M", "mse"],
};

pub const SURFACE: Schema = Schema {
    kind: "surface",
    version: 1,
    header: &["s1", "s2", "target", "prediction"],
};

impl Schema {
    pub fn version_line(&self) -> String {
        format!("# nmr-qrc {} v{}", self.kind, self.version)
    }
}

/// Renders a CSV document in memory.
pub fn render<I, R>(schema: &Schema, rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut out = schema.version_line().into_bytes();
    out.push(b'\n');
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(schema.header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Parses a CSV document, checking the version line and header.
pub fn parse(schema: &Schema, path: &Path, text: &str) -> Result<Vec<csv::StringRecord>, CliError> {
    let fail = |message: String| CliError::Format {
        path: path.to_path_buf(),
        message,
    };
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end_matches('\r');
    let prefix = format!("# nmr-qrc {} v", schema.kind);
    let version = first
        .strip_prefix(&prefix)
        .ok_or_else(|| fail(format!("missing `{prefix}N` version line")))?;
    if version != schema.version.to_string() {
        return Err(fail(format!(
            "unsupported {} CSV version v{version} (this build reads v{})",
            schema.kind, schema.version
        )));
    }
    let mut r = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let header = r.headers().map_err(|e| fail(e.to_string()))?;
    if header.iter().ne(schema.header.iter().copied()) {
        return Err(fail(format!(
            "header `{}` does not match `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            schema.header.join(",")
        )));
    }
    r.records()
        .map(|rec| rec.map_err(|e| fail(e.to_string())))
        .collect()
}

pub fn read(schema: &Schema, path: &Path) -> Result<Vec<csv::StringRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(schema, path, &text)
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
