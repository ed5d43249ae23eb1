//! Prediction CSV: header `y,<model_id_1>,…,<model_id_m>`, one row per observation.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mabt_core::{EvaluationTable, MeasureKind};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub labels: Vec<u8>,
    pub model_ids: Vec<String>,
    /// One vector per model.
    pub columns: Vec<Vec<f64>>,
}

impl PredictionFile {
    pub fn read_path(path: &Path, kind: MeasureKind) -> Result<Self> {
        let file =
            std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        Self::read(file, kind).with_context(|| format!("in {}", path.display()))
    }

    pub fn read(input: impl Read, kind: MeasureKind) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.is_empty() || headers.get(0) == Some("") {
            bail!("empty file: expected header `y,<model ids…>`");
        }
        if headers.get(0).map(str::trim) != Some("y") {
            bail!("first column must be `y`, found `{}`", &headers[0]);
        }
        let model_ids: Vec<String> = headers
            .iter()
            .skip(1)
            .map(|h| h.trim().to_string())
            .collect();
        if model_ids.is_empty() {
            bail!("no model columns after `y`");
        }
        for (k, id) in model_ids.iter().enumerate() {
            if id.is_empty() {
                bail!("model column {} has an empty id", k + 2);
            }
            if model_ids[..k].contains(id) {
                bail!("duplicate model id `{id}`");
            }
        }

        let mut labels = Vec::new();
        let mut columns = vec![Vec::new(); model_ids.len()];
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.with_context(|| format!("row {row}"))?;
            if rec.len() != headers.len() {
                bail!(
                    "row {row}: expected {} fields, found {}",
                    headers.len(),
                    rec.len()
                );
            }
            let field = |c: usize| -> Result<f64> {
                let s = rec[c].trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        anyhow!(
                            "row {row}, column `{}`: `{s}` is not a finite number",
                            &headers[c]
                        )
                    })
            };
            let y = field(0)?;
            if y != 0.0 && y != 1.0 {
                bail!(
                    "row {row}, column `y`: label `{}` is not 0 or 1",
                    rec[0].trim()
                );
            }
            labels.push(y as u8);
            for (c, col) in columns.iter_mut().enumerate() {
                let v = field(c + 1)?;
                if kind == MeasureKind::Accuracy && v != 0.0 && v != 1.0 {
                    bail!(
                        "row {row}, column `{}`: accuracy mode needs 0/1 predictions, found `{}`",
                        &headers[c + 1],
                        rec[c + 1].trim()
                    );
                }
                col.push(v);
            }
        }
        if labels.is_empty() {
            bail!("no data rows");
        }
        Ok(PredictionFile {
            labels,
            model_ids,
            columns,
        })
    }

    pub fn write(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["y".to_string()];
        header.extend(self.model_ids.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.labels.len() {
            let mut row = vec![self.labels[i].to_string()];
            row.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.model_ids.len()
    }

    pub fn into_table(self) -> mabt_core::Result<EvaluationTable> {
        EvaluationTable::new(self.labels, self.columns, self.model_ids)
    }
}
