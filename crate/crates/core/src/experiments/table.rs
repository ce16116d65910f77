//! Result tables and their CSV form.
//!
//! The first line carries the metadata as `# seed=<u64> config_hash=<hex>`;
//! the rest is a plain `system,test_set,eer` CSV.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub system: String,
    pub test_set: String,
    /// Fraction in `[0, 1]`.
    pub eer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub seed: u64,
    pub config_hash: String,
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self { seed, config_hash: config_hash.into(), rows: Vec::new() }
    }

    pub fn push(&mut self, system: impl Into<String>, test_set: impl Into<String>, eer: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&eer) {
            return Err(Error::InvalidArgument(format!("EER {eer} outside [0, 1]")));
        }
        self.rows.push(ResultRow { system: system.into(), test_set: test_set.into(), eer });
        Ok(())
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    /// EER of the first row matching `(system, test_set)`.
    pub fn get(&self, system: &str, test_set: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.system == system && r.test_set == test_set)
            .map(|r| r.eer)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["system", "test_set", "eer"])?;
        for r in &self.rows {
            w.write_record([r.system.as_str(), r.test_set.as_str(), &r.eer.to_string()])?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let body = String::from_utf8(body).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(format!("# seed={} config_hash={}\n{body}", self.seed, self.config_hash))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let (meta, body) = text.split_once('\n').unwrap_or((text, ""));
        let mut seed = None;
        let mut hash = None;
        let fields = meta
            .strip_prefix('#')
            .ok_or_else(|| Error::parse(1, "missing metadata line"))?;
        for f in fields.split_whitespace() {
            match f.split_once('=') {
                Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|e| Error::parse(1, format!("seed: {e}")))?),
                Some(("config_hash", v)) => hash = Some(v.to_string()),
                _ => return Err(Error::parse(1, format!("unexpected metadata field {f:?}"))),
            }
        }
        let mut table = Self::new(
            seed.ok_or_else(|| Error::parse(1, "missing seed"))?,
            hash.ok_or_else(|| Error::parse(1, "missing config_hash"))?,
        );
        let mut r = csv::Reader::from_reader(body.as_bytes());
        if r.headers()?.iter().collect::<Vec<_>>() != ["system", "test_set", "eer"] {
            return Err(Error::parse(2, "expected header system,test_set,eer"));
        }
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 3;
            if rec.len() != 3 {
                return Err(Error::parse(line, format!("expected 3 fields, got {}", rec.len())));
            }
            let eer: f64 = rec[2].parse().map_err(|e| Error::parse(line, format!("eer: {e}")))?;
            table.push(&rec[0], &rec[1], eer).map_err(|e| Error::parse(line, e.to_string()))?;
        }
        Ok(table)
    }
}
