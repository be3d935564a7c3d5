//! Input parsing: point-cloud CSV, distance-matrix JSON, generator specs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::metric::{FiniteMetricSpace, Norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    pub d: Vec<Vec<f64>>,
}

/// `id,x1,...,xd` rows, one per point. A first row whose coordinates do not
/// parse as numbers is taken as a header. Ids become labels.
pub fn parse_points_csv(text: &str) -> Result<FiniteMetricSpace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut labels = Vec::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Parse(format!("row {}: expected id and coordinates", row + 1)));
        }
        let coords: std::result::Result<Vec<f64>, _> =
            record.iter().skip(1).map(str::parse::<f64>).collect();
        match coords {
            Ok(c) => {
                if let Some(bad) = c.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!("row {}: non-finite coordinate {bad}", row + 1)));
                }
                if let Some(first) = points.first() {
                    if first.len() != c.len() {
                        return Err(Error::Parse(format!(
                            "row {}: {} coordinates, expected {}",
                            row + 1,
                            c.len(),
                            first.len()
                        )));
                    }
                }
                labels.push(record[0].to_string());
                points.push(c);
            }
            Err(_) if row == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("row {}: {e}", row + 1))),
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySpace);
    }
    FiniteMetricSpace::from_coordinates(&points, Norm::Euclidean)?.with_labels(labels)
}

pub fn read_points_csv(path: &Path) -> Result<FiniteMetricSpace> {
    parse_points_csv(&fs::read_to_string(path)?)
}

/// `{"n": N, "d": [[...]]}`, full row-major matrix.
pub fn parse_matrix_json(text: &str) -> Result<FiniteMetricSpace> {
    let file: MatrixFile = serde_json::from_str(text)?;
    if file.d.len() != file.n {
        return Err(Error::MalformedDistances(format!(
            "n = {} but {} rows given",
            file.n,
            file.d.len()
        )));
    }
    FiniteMetricSpace::from_matrix(file.d)
}

pub fn read_matrix_json(path: &Path) -> Result<FiniteMetricSpace> {
    parse_matrix_json(&fs::read_to_string(path)?)
}

/// A generator spec given inline (text starting with `{`) or as a file path.
pub fn parse_generator_arg(arg: &str) -> Result<GeneratorSpec> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg)?
    };
    Ok(serde_json::from_str(&text)?)
}
