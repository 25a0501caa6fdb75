//! CSV emission with a trailing checksum comment line, and small helpers
//! for run artifacts.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Accumulates CSV text; `finish` appends `# sha256=<hex>` of everything
/// written so far, so artifacts are self-checking and byte-reproducible.
#[derive(Debug, Default)]
pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn new(header: &str) -> Self {
        let mut w = CsvWriter { buf: String::new() };
        let _ = writeln!(w.buf, "{header}");
        w
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.buf, "{}", cells.join(","));
    }

    pub fn finish(mut self) -> String {
        let digest = Sha256::digest(self.buf.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        let _ = writeln!(self.buf, "# sha256={hex}");
        self.buf
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.finish())?;
        Ok(())
    }
}

/// Checks the trailing checksum line of a CSV produced by `CsvWriter`.
pub fn verify_checksum(text: &str) -> bool {
    let Some(idx) = text.rfind("# sha256=") else {
        return false;
    };
    let body = &text[..idx];
    let tail = text[idx..].trim_end();
    let digest = Sha256::digest(body.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    tail == format!("# sha256={hex}")
}

/// Formats a float with the shortest representation that round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_roundtrip() {
        let mut w = CsvWriter::new("a,b");
        w.row(&["1".into(), "2.5".into()]);
        w.row(&[fmt_f64(1.0 / 3.0), fmt_f64(-0.0)]);
        let text = w.finish();
        assert!(verify_checksum(&text));
        let tampered = text.replace("2.5", "2.6");
        assert!(!verify_checksum(&tampered));
        // byte identical for identical input
        let mut w2 = CsvWriter::new("a,b");
        w2.row(&["1".into(), "2.5".into()]);
        w2.row(&[fmt_f64(1.0 / 3.0), fmt_f64(-0.0)]);
        assert_eq!(text, w2.finish());
    }
}
