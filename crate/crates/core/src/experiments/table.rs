use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::ExperimentError;
use crate::inference::Dataset;

/// A dataset together with its column order. The last CSV column is the
/// target; the others are inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub inputs: Vec<String>,
    pub target: String,
    pub data: Dataset,
}

fn csv_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Csv(e.to_string())
}

impl Table {
    pub fn new(inputs: Vec<String>, target: impl Into<String>, data: Dataset) -> Result<Self, ExperimentError> {
        let target = target.into();
        if inputs.len() != data.inputs.len() || inputs.iter().any(|c| !data.inputs.contains_key(c)) {
            return Err(ExperimentError::Csv("column names do not match the data".into()));
        }
        if inputs.contains(&target) {
            return Err(ExperimentError::Csv(format!("`{target}` is both input and target")));
        }
        Ok(Table { inputs, target, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Values of input `i` in row order.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        if name == self.target {
            return Some(&self.data.targets);
        }
        self.data.inputs.get(name).map(Vec::as_slice)
    }

    /// Comma-separated, LF line endings, shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Never)
            .from_writer(out);
        let mut header: Vec<&str> = self.inputs.iter().map(String::as_str).collect();
        header.push(&self.target);
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.inputs.iter().map(|c| self.data.inputs[c][i].to_string()).collect();
            row.push(self.data.targets[i].to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ExperimentError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.len() < 1 || header.iter().any(String::is_empty) {
            return Err(ExperimentError::Csv("header needs at least one named column".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(ExperimentError::Csv(format!("duplicate column `{dup}`")));
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| ExperimentError::Csv(format!("row {}: `{field}` is not a number", line + 2)))?;
                cols[j].push(v);
            }
        }
        let target_name = header.last().expect("non-empty header").clone();
        let targets = cols.pop().expect("non-empty header");
        let inputs: BTreeMap<String, Vec<f64>> = header.iter().cloned().zip(cols).collect();
        let data = Dataset::new(inputs, targets)?;
        Table::new(header[..header.len() - 1].to_vec(), target_name, data)
    }
}
