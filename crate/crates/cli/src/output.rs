use serde::Serialize;
use sha2::{Digest, Sha256};
use shockhopf::profile::fmt17;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

/// One CSV cell: floats at 17 significant digits, everything else verbatim.
pub enum Cell {
    F(f64),
    I(i64),
    S(&'static str),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::F(v) => f.write_str(&fmt17(*v)),
            Cell::I(v) => write!(f, "{v}"),
            Cell::S(v) => f.write_str(v),
        }
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}
