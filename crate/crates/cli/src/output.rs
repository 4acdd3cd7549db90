use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::Format;
use crate::CliError;

/// One long-format result: `stage,quantity,value`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantity {
    pub stage: String,
    pub quantity: String,
    pub value: f64,
}

impl Quantity {
    pub fn new(stage: impl Into<String>, quantity: impl Into<String>, value: f64) -> Self {
        Quantity {
            stage: stage.into(),
            quantity: quantity.into(),
            value,
        }
    }
}

pub fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Writes `rows` as CSV with a header, or as a JSON array.
pub fn emit<T: Serialize>(rows: &[T], format: Format, w: &mut dyn Write) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut cw = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut *w);
            for r in rows {
                cw.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
            }
            cw.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, rows).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_unix_newlines() {
        let mut buf = Vec::new();
        emit(&[Quantity::new("a", "p", 0.5)], Format::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "stage,quantity,value\na,p,0.5\n");
    }
}
