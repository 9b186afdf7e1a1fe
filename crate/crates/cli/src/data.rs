//! CSV ingestion into [`RegressionData`].

use std::path::Path;

use betalm_core::{build_white_design, Matrix, RegressionData};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Numeric columns of a CSV file, by header name.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.iter().map(str::to_owned).collect();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column `name` as numbers; `row` in errors is the 1-based data row.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_owned()))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let cell = rec.get(j).unwrap_or("");
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::NonNumericCell {
                        row: i + 1,
                        column: name.to_owned(),
                        value: cell.to_owned(),
                    })
            })
            .collect()
    }
}

/// Which columns make up the model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub response: String,
    pub x: Vec<String>,
    /// Heteroscedasticity regressors; the `x` columns when empty.
    pub z: Vec<String>,
    pub white: bool,
    /// 1-based.
    pub drop_rows: Vec<usize>,
}

impl ModelSpec {
    fn validate(&self, n: usize) -> Result<()> {
        if self.x.is_empty() {
            return Err(CliError::Config("--x needs at least one column".into()));
        }
        if self.x.contains(&self.response) {
            return Err(CliError::Config(format!(
                "response `{}` is also listed as a regressor",
                self.response
            )));
        }
        if self.white && !self.z.is_empty() {
            return Err(CliError::Config("--white and --z are exclusive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &r in &self.drop_rows {
            if r == 0 || r > n {
                return Err(CliError::Config(format!("--drop-rows: row {r} outside 1..={n}")));
            }
            if !seen.insert(r) {
                return Err(CliError::Config(format!("--drop-rows: row {r} listed twice")));
            }
        }
        Ok(())
    }

    pub fn load(&self, table: &Table) -> Result<RegressionData> {
        let n = table.len();
        self.validate(n)?;
        let keep: Vec<bool> = (1..=n).map(|i| !self.drop_rows.contains(&i)).collect();
        let pick = |name: &str| -> Result<Vec<f64>> {
            Ok(table
                .column(name)?
                .into_iter()
                .zip(&keep)
                .filter_map(|(v, k)| k.then_some(v))
                .collect())
        };
        let y = pick(&self.response)?;
        let m = y.len();
        let mut xcols = vec![vec![1.0; m]];
        for name in &self.x {
            xcols.push(pick(name)?);
        }
        let x = Matrix::from_columns(&xcols)?;
        let z = if self.white {
            build_white_design(&x)?
        } else if self.z.is_empty() {
            Matrix::from_columns(&xcols[1..])?
        } else {
            let zcols = self.z.iter().map(|c| pick(c)).collect::<Result<Vec<_>>>()?;
            Matrix::from_columns(&zcols)?
        };
        Ok(RegressionData::new(y, x, z)?)
    }
}
