use std::path::Path;

use super::schemes::Scheme;
use crate::error::{Error, Result};

/// Column schema of the NMSE table: scheme tag, channel profile name, SNR in
/// dB, ensemble NMSE in dB (floor -300 for exact estimates) and the number
/// of evaluated grids.
pub const NMSE_CSV_HEADER: &str = "scheme,profile,snr_db,nmse_db,n";

#[derive(Clone, Debug, PartialEq)]
pub struct NmseRow {
    pub scheme: Scheme,
    pub profile: String,
    pub snr_db: f64,
    pub nmse_db: f64,
    pub n: usize,
}

/// NMSE results keyed by (scheme, profile, snr_db), in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricTable {
    rows: Vec<NmseRow>,
}

impl MetricTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; a repeated key is rejected.
    pub fn push(&mut self, row: NmseRow) -> Result<()> {
        if self.get(row.scheme, &row.profile, row.snr_db).is_some() {
            return Err(Error::invalid(format!(
                "duplicate row for ({}, {}, {} dB)",
                row.scheme, row.profile, row.snr_db
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[NmseRow] {
        &self.rows
    }

    pub fn get(&self, scheme: Scheme, profile: &str, snr_db: f64) -> Option<&NmseRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.profile == profile && r.snr_db == snr_db)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{NMSE_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.scheme, r.profile, r.snr_db, r.nmse_db, r.n));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(NMSE_CSV_HEADER) {
            return Err(Error::format(path, format!("expected header `{NMSE_CSV_HEADER}`")));
        }
        let mut table = Self::new();
        for (i, line) in lines.enumerate() {
            let bad = |what: &str| Error::format(path, format!("line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let row = NmseRow {
                scheme: f[0].parse().map_err(|_| bad("unknown scheme"))?,
                profile: f[1].to_string(),
                snr_db: f[2].parse().map_err(|_| bad("bad snr_db"))?,
                nmse_db: f[3].parse().map_err(|_| bad("bad nmse_db"))?,
                n: f[4].parse().map_err(|_| bad("bad n"))?,
            };
            table.push(row).map_err(|e| bad(&e.to_string()))?;
        }
        Ok(table)
    }
}
