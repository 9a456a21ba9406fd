//! Examples, datasets and CSV import/export.
//!
//! CSV layout: a header row, then one row per example with the feature
//! columns first and the label in the last column.

use std::io::{Read, Write};
use std::path::Path;

use crate::CoreError;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: f64,
}

impl Example {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }
}

/// Non-empty ordered collection of examples with a constant feature
/// dimension. Index `i` always refers to the same example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self, CoreError> {
        let first = examples.first().ok_or(CoreError::EmptyDataset)?;
        let dim = first.features.len();
        for (index, ex) in examples.iter().enumerate() {
            if ex.features.len() != dim {
                return Err(CoreError::RaggedFeatures {
                    index,
                    expected: dim,
                    got: ex.features.len(),
                });
            }
        }
        Ok(Self { examples, dim })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> Option<&Example> {
        self.examples.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    /// Examples at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Vec<&Example> {
        indices.iter().map(|&i| &self.examples[i]).collect()
    }

    /// Appends examples, checking the feature dimension.
    pub fn extend(&mut self, extra: impl IntoIterator<Item = Example>) -> Result<(), CoreError> {
        for ex in extra {
            if ex.features.len() != self.dim {
                return Err(CoreError::RaggedFeatures {
                    index: self.examples.len(),
                    expected: self.dim,
                    got: ex.features.len(),
                });
            }
            self.examples.push(ex);
        }
        Ok(())
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CoreError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".to_string());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.dim + 1);
        for ex in &self.examples {
            row.clear();
            row.extend(ex.features.iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", ex.label));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CoreError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut examples = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(CoreError::CsvFormat {
                    row,
                    message: "need at least one feature column and a label column".into(),
                });
            }
            let mut values = Vec::with_capacity(record.len());
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| CoreError::CsvFormat {
                    row,
                    message: format!("not a number: {field:?}"),
                })?;
                values.push(v);
            }
            let label = values.pop().expect("checked length");
            examples.push(Example::new(values, label));
        }
        Dataset::new(examples)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), CoreError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, CoreError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
