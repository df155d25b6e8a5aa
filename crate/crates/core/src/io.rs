//! Text formats read and written by the command-line tool.
//!
//! Histograms are either a JSON array of numbers or CSV with one value per
//! line, or `bin,value` rows in any order. An optional header row and `#`
//! comment lines are allowed in CSV.

use crate::error::{Error, Result};
use crate::histogram::Histogram;
use crate::toy::{EpochRecord, LossSpec};

/// Parses a histogram file. Entries are validated but not normalized.
pub fn parse_histogram(text: &str) -> Result<Histogram> {
    let trimmed = text.trim_start_matches('\u{feff}').trim();
    if trimmed.is_empty() {
        return Err(Error::EmptyInput);
    }
    let values = if trimmed.starts_with('[') {
        serde_json::from_str::<Vec<f64>>(trimmed).map_err(|e| Error::Parse(e.to_string()))?
    } else {
        parse_histogram_csv(trimmed)?
    };
    Histogram::unnormalized(&values)
}

fn parse_histogram_csv(text: &str) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut plain = Vec::new();
    let mut indexed = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let fields: Vec<&str> = rec.iter().collect();
        let numbers: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let numbers = match numbers {
            Ok(v) => v,
            // a header may precede the data
            Err(_) if row == 0 => continue,
            Err(_) => return Err(Error::Parse(format!("row {}: non-numeric field", row + 1))),
        };
        match numbers.as_slice() {
            [v] => plain.push(*v),
            [b, v] => {
                if *b < 0.0 || b.fract() != 0.0 || *b > u32::MAX as f64 {
                    return Err(Error::Parse(format!("row {}: bad bin index {b}", row + 1)));
                }
                indexed.push((*b as usize, *v));
            }
            _ => {
                return Err(Error::Parse(format!(
                    "row {}: expected 1 or 2 fields, got {}",
                    row + 1,
                    numbers.len()
                )))
            }
        }
    }
    match (plain.is_empty(), indexed.is_empty()) {
        (_, true) => Ok(plain),
        (true, false) => {
            let n = indexed.len();
            let mut values = vec![None; n];
            for (b, v) in indexed {
                let slot = values
                    .get_mut(b)
                    .ok_or(Error::IndexOutOfRange { index: b, n })?;
                if slot.replace(v).is_some() {
                    return Err(Error::Parse(format!("bin {b} listed twice")));
                }
            }
            // n slots and n distinct in-range bins: every slot is filled
            Ok(values.into_iter().map(|v| v.expect("filled")).collect())
        }
        (false, false) => Err(Error::Parse("mixed one- and two-column rows".into())),
    }
}

/// JSON array of the histogram's values.
pub fn histogram_to_json(h: &Histogram) -> String {
    serde_json::to_string(h.values()).expect("finite floats serialize")
}

/// CSV table with a `bin,value` header.
pub fn histogram_to_csv(h: &Histogram) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "value"]).expect("in-memory write");
    for (i, v) in h.values().iter().enumerate() {
        w.serialize((i, v)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Parses a loss descriptor such as `ce` or `wass-power2-binomial`.
pub fn parse_loss(text: &str) -> Result<LossSpec> {
    text.parse()
}

/// Parses a training history written by [`history_to_csv`].
pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<EpochRecord>, _>>()
        .map_err(|e| Error::Parse(e.to_string()))?;
    for (i, r) in rows.iter().enumerate() {
        if r.epoch != i {
            return Err(Error::Parse(format!("row {}: epoch {} out of sequence", i + 1, r.epoch)));
        }
    }
    Ok(rows)
}

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in history {
        w.serialize(r).expect("in-memory write");
    }
    if history.is_empty() {
        w.write_record(["epoch", "train_loss", "eval_maad", "expected_arc", "blend_weight"])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
