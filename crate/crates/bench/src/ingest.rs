//! CSV input and output for observational datasets.

use std::io::{Read, Write};
use std::path::Path;

use acee_core::effects::ObservationalDataset;
use acee_core::numerics::Matrix;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Which columns of a CSV file play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Covariate columns in order; `None` takes every column that is neither
    /// treatment nor outcome.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    pub treatment: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub covariates: Vec<String>,
    pub control: usize,
    pub treated: usize,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: ObservationalDataset,
    pub summary: IngestSummary,
}

/// A numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn column_index(&self, name: &str) -> Result<usize, BenchError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::Schema(format!("missing column '{name}'")))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn matrix(&self, cols: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows.len(), cols.len(), |i, j| self.rows[i][cols[j]])
    }
}

/// Parses a headed CSV whose cells are all numbers.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<NumericTable, BenchError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(BenchError::Schema("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(header.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| BenchError::Cell {
                row: i + 1,
                column: header[j].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(BenchError::Cell {
                    row: i + 1,
                    column: header[j].clone(),
                    message: "value is not finite".into(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

pub fn read_numeric_csv_path(path: &Path) -> Result<NumericTable, BenchError> {
    let f = std::fs::File::open(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    read_numeric_csv(f)
}

/// Builds a dataset from a parsed table according to `schema`.
pub fn dataset_from_table(table: &NumericTable, schema: &CsvSchema) -> Result<Ingested, BenchError> {
    let t = table.column_index(&schema.treatment)?;
    let o = table.column_index(&schema.outcome)?;
    let covariates: Vec<String> = match &schema.covariates {
        Some(c) => c.clone(),
        None => table
            .header
            .iter()
            .filter(|h| **h != schema.treatment && **h != schema.outcome)
            .cloned()
            .collect(),
    };
    let cols = covariates
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<_>, _>>()?;
    if cols.contains(&t) || cols.contains(&o) || t == o {
        return Err(BenchError::Schema("treatment, outcome and covariates must be distinct columns".into()));
    }
    let mut d = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        d.push(match row[t] {
            v if v == 0.0 => 0u8,
            v if v == 1.0 => 1u8,
            v => {
                return Err(BenchError::Cell {
                    row: i + 1,
                    column: schema.treatment.clone(),
                    message: format!("treatment {v} is not 0 or 1"),
                })
            }
        });
    }
    let dataset = ObservationalDataset::new(table.matrix(&cols), d, table.column(o))?.with_names(covariates.clone())?;
    let (control, treated) = dataset.arm_sizes();
    Ok(Ingested {
        summary: IngestSummary {
            rows: dataset.n(),
            covariates,
            control,
            treated,
        },
        dataset,
    })
}

/// Reads an observational dataset from a CSV file.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Ingested, BenchError> {
    let ing = dataset_from_table(&read_numeric_csv_path(path)?, schema)?;
    log::info!(
        "ingested {}: {} rows, {} treated, {} control",
        path.display(),
        ing.summary.rows,
        ing.summary.treated,
        ing.summary.control
    );
    Ok(ing)
}

/// Writes covariates, then `D`, then `Y`.
pub fn write_dataset_csv<W: Write>(ds: &ObservationalDataset, w: W) -> Result<(), BenchError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = match ds.names() {
        Some(n) => n.to_vec(),
        None => (1..=ds.p()).map(|j| format!("X{j}")).collect(),
    };
    header.push("D".into());
    header.push("Y".into());
    wr.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.x().row(i).iter().map(f64::to_string).collect();
        rec.push(ds.d()[i].to_string());
        rec.push(ds.y()[i].to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes a matrix with the given column names.
pub fn write_matrix_csv<W: Write>(header: &[String], m: &Matrix, w: W) -> Result<(), BenchError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for i in 0..m.rows() {
        wr.write_record(m.row(i).iter().map(f64::to_string))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema {
            covariates: None,
            treatment: "treat".into(),
            outcome: "y".into(),
        }
    }

    #[test]
    fn hand_written_rows_round_trip() {
        let text = "a,treat,b,y\n1.5,0,-2,3\n0,1,4.25,-1\n7,1,0,0.5\n";
        let ing = dataset_from_table(&read_numeric_csv(text.as_bytes()).unwrap(), &schema()).unwrap();
        let ds = &ing.dataset;
        assert_eq!(ds.x().data(), &[1.5, -2.0, 0.0, 4.25, 7.0, 0.0]);
        assert_eq!(ds.d(), &[0, 1, 1]);
        assert_eq!(ds.y(), &[3.0, -1.0, 0.5]);
        assert_eq!(ing.summary.covariates, vec!["a", "b"]);
        assert_eq!((ing.summary.control, ing.summary.treated), (1, 2));

        let mut out = Vec::new();
        write_dataset_csv(ds, &mut out).unwrap();
        let back = read_numeric_csv(out.as_slice()).unwrap();
        let again = dataset_from_table(
            &back,
            &CsvSchema {
                covariates: None,
                treatment: "D".into(),
                outcome: "Y".into(),
            },
        )
        .unwrap();
        assert_eq!(again.dataset.x(), ds.x());
        assert_eq!(again.dataset.y(), ds.y());
    }

    #[test]
    fn missing_outcome_is_a_schema_error() {
        let t = read_numeric_csv("a,treat\n1,0\n".as_bytes()).unwrap();
        assert!(matches!(dataset_from_table(&t, &schema()), Err(BenchError::Schema(_))));
    }

    #[test]
    fn bad_cells_report_position() {
        match read_numeric_csv("a,treat,y\n1,0,2\n3,x,4\n".as_bytes()) {
            Err(BenchError::Cell { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "treat")),
            other => panic!("{other:?}"),
        }
        let t = read_numeric_csv("a,treat,y\n1,0,2\n3,2,4\n".as_bytes()).unwrap();
        match dataset_from_table(&t, &schema()) {
            Err(BenchError::Cell { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_covariate_selection() {
        let t = read_numeric_csv("a,b,c,treat,y\n1,2,3,0,9\n4,5,6,1,8\n".as_bytes()).unwrap();
        let s = CsvSchema {
            covariates: Some(vec!["c".into(), "a".into()]),
            ..schema()
        };
        let ing = dataset_from_table(&t, &s).unwrap();
        assert_eq!(ing.dataset.x().data(), &[3.0, 1.0, 6.0, 4.0]);
        let dup = CsvSchema {
            covariates: Some(vec!["treat".into()]),
            ..schema()
        };
        assert!(dataset_from_table(&t, &dup).is_err());
    }
}
