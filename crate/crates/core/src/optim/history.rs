use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One optimizer iteration: which view was used and the loss terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub phase: &'static str,
    pub view_index: usize,
    pub total: f64,
    pub terms: Vec<f64>,
}

/// Loss history of one phase with the names of its terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub term_names: Vec<&'static str>,
    pub records: Vec<LossRecord>,
}

impl LossHistory {
    pub fn new(term_names: &[&'static str]) -> Self {
        LossHistory { term_names: term_names.to_vec(), records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Bitwise fingerprint of every recorded value.
    pub fn checksum(&self) -> u64 {
        let mut h = 0x9e37_79b9_7f4a_7c15u64;
        for r in &self.records {
            h = crate::math::hash_combine(h, r.view_index as u64);
            h = crate::math::hash_combine(h, r.total.to_bits());
            for t in &r.terms {
                h = crate::math::hash_combine(h, t.to_bits());
            }
        }
        h
    }

    /// Mean total loss over a window of `n` records starting at `start`.
    pub fn window_mean(&self, start: usize, n: usize) -> f64 {
        let w = &self.records[start.min(self.len())..(start + n).min(self.len())];
        w.iter().map(|r| r.total).sum::<f64>() / w.len().max(1) as f64
    }

    /// Mean of term `k` over a window of records.
    pub fn term_window_mean(&self, k: usize, start: usize, n: usize) -> f64 {
        let w = &self.records[start.min(self.len())..(start + n).min(self.len())];
        w.iter().map(|r| r.terms[k]).sum::<f64>() / w.len().max(1) as f64
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration", "phase", "view_index", "total"];
        header.extend(self.term_names.iter().copied());
        let csv_err = |e: csv::Error| Error::Config(format!("csv encoding failed: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string(), r.phase.to_string(), r.view_index.to_string(), format_f64(r.total)];
            row.extend(r.terms.iter().map(|&t| format_f64(t)));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::scene::image::write_bytes(path, self.to_csv()?.as_bytes())
    }
}

/// Shortest representation that parses back to the same bits.
fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let mut h = LossHistory::new(&["rgb", "reg"]);
        h.records.push(LossRecord { iteration: 0, phase: "reflectance", view_index: 3, total: 0.25, terms: vec![0.5, 0.2] });
        let text = h.to_csv().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,phase,view_index,total,rgb,reg"));
        assert_eq!(lines.next(), Some("0,reflectance,3,0.25,0.5,0.2"));
    }
}
