use std::io::{Read, Write};

use thiserror::Error;

use crate::dynamics::{norm, Run};
use crate::ode::OdeError;

/// First line of every trajectory CSV.
pub const CSV_SCHEMA_LINE: &str = "# heavyball-trajectory v1";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// `t, x1..xn, v1..vn, F, grad_norm`.
pub fn csv_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=dim).map(|i| format!("x{i}")));
    h.extend((1..=dim).map(|i| format!("v{i}")));
    h.push("F".into());
    h.push("grad_norm".into());
    h
}

/// Writes `samples` rows at uniformly spaced times covering the whole run.
/// For the gradient flow the velocity columns hold `−∇f/γ` and `F = f`.
pub fn write_trajectory_csv<W: Write>(run: &Run, samples: usize, mut out: W) -> Result<(), CsvError> {
    writeln!(out, "{CSV_SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    let n = run.dim();
    w.write_record(csv_header(n))?;
    let t_end = run.t_end();
    let samples = samples.max(2);
    let mut g = vec![0.0; n];
    let mut row = Vec::with_capacity(2 * n + 3);
    for i in 0..samples {
        let t = if i + 1 == samples {
            t_end
        } else {
            t_end * i as f64 / (samples - 1) as f64
        };
        let (x, v) = run.phase(t)?;
        run.objective.gradient(&x, &mut g);
        row.clear();
        row.push(t);
        row.extend_from_slice(&x);
        row.extend_from_slice(&v);
        row.push(run.energy_of(&x, &v));
        row.push(norm(&g));
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn time(&self, i: usize) -> f64 {
        self.rows[i][0]
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.rows[i][1..1 + self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.rows[i][1 + self.dim..1 + 2 * self.dim]
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.rows[i][1 + 2 * self.dim]
    }

    pub fn grad_norm(&self, i: usize) -> f64 {
        self.rows[i][2 + 2 * self.dim]
    }
}

/// Reads a file written by [`write_trajectory_csv`], checking the schema
/// line, the header and that every row holds finite numbers with
/// nondecreasing times.
pub fn read_trajectory_csv<R: Read>(mut input: R) -> Result<TrajectoryTable, CsvError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    if first.trim_end_matches('\r') != CSV_SCHEMA_LINE {
        return Err(CsvError::SchemaMismatch(format!(
            "expected `{CSV_SCHEMA_LINE}` on the first line"
        )));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 5 || header.len().is_multiple_of(2) {
        return Err(CsvError::SchemaMismatch(format!(
            "unexpected column count {}",
            header.len()
        )));
    }
    let dim = (header.len() - 3) / 2;
    if header != csv_header(dim) {
        return Err(CsvError::SchemaMismatch(format!("header `{}`", header.join(","))));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        // Schema line and header precede the first record.
        let line = k + 3;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(CsvError::BadRow {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CsvError::BadRow {
                line,
                message: "non-numeric or non-finite field".into(),
            })?;
        if let Some(prev) = rows.last() {
            if row[0] < prev[0] {
                return Err(CsvError::BadRow {
                    line,
                    message: "time decreases".into(),
                });
            }
        }
        rows.push(row);
    }
    Ok(TrajectoryTable { dim, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(csv_header(2).join(","), "t,x1,x2,v1,v2,F,grad_norm");
    }

    #[test]
    fn rejects_bad_inputs() {
        let ok_head = format!("{CSV_SCHEMA_LINE}\nt,x1,x2,v1,v2,F,grad_norm\n");
        assert!(read_trajectory_csv(ok_head.as_bytes()).unwrap().rows.is_empty());
        assert!(matches!(
            read_trajectory_csv("t,x1,x2,v1,v2,F,grad_norm\n".as_bytes()),
            Err(CsvError::SchemaMismatch(_))
        ));
        let wrong = format!("{CSV_SCHEMA_LINE}\nt,x,y,vx,vy,F,grad_norm\n");
        assert!(matches!(
            read_trajectory_csv(wrong.as_bytes()),
            Err(CsvError::SchemaMismatch(_))
        ));
        let bad = format!("{ok_head}0,1,2,3,4,5,nan\n");
        assert!(matches!(
            read_trajectory_csv(bad.as_bytes()),
            Err(CsvError::BadRow { line: 3, .. })
        ));
        let back = format!("{ok_head}1,1,2,3,4,5,6\n0,1,2,3,4,5,6\n");
        assert!(matches!(
            read_trajectory_csv(back.as_bytes()),
            Err(CsvError::BadRow { line: 4, .. })
        ));
        let short = format!("{ok_head}1,1,2\n");
        assert!(read_trajectory_csv(short.as_bytes()).is_err());
    }
}
