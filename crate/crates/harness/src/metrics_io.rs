use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use savgo_core::trainer::{MetricsRow, METRICS_HEADER};

use crate::HarnessError;

/// Appends rows to a metrics CSV, flushing after each one so an interrupted
/// run leaves a valid prefix.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(METRICS_HEADER).map_err(|e| HarnessError::csv(path, e))?;
        inner.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(Self { inner, path: path.to_path_buf() })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<(), HarnessError> {
        self.inner.write_record(format_row(row)).map_err(|e| HarnessError::csv(&self.path, e))?;
        self.inner.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_row(r: &MetricsRow) -> [String; 10] {
    [
        r.step.to_string(),
        r.mean_eval_return.to_string(),
        r.std_eval_return.to_string(),
        opt(r.critic_loss),
        opt(r.actor_loss),
        opt(r.representation_loss),
        r.eta.to_string(),
        opt(r.beta),
        opt(r.rho),
        r.wall_seconds.to_string(),
    ]
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, line: u64) -> Result<T, HarnessError> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse()
        .map_err(|_| HarnessError::Schema(format!("column `{}` line {line}: cannot parse `{raw}`", METRICS_HEADER[col])))
}

fn opt_field(rec: &csv::StringRecord, col: usize, line: u64) -> Result<Option<f64>, HarnessError> {
    if rec.get(col).is_none_or(str::is_empty) {
        Ok(None)
    } else {
        field(rec, col, line).map(Some)
    }
}

/// Parses a metrics CSV, naming the first offending column on mismatch.
pub fn parse_metrics<R: Read>(reader: R) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| HarnessError::Schema(e.to_string()))?.clone();
    for (i, want) in METRICS_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => return Err(HarnessError::Schema(format!("expected column `{want}`, found `{got}`"))),
            None => return Err(HarnessError::Schema(format!("missing column `{want}`"))),
        }
    }
    if let Some(extra) = header.get(METRICS_HEADER.len()) {
        return Err(HarnessError::Schema(format!("unexpected column `{extra}`")));
    }
    let mut rows = Vec::new();
    let mut last_step = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::Schema(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != METRICS_HEADER.len() {
            return Err(HarnessError::Schema(format!("line {line}: expected 10 fields, found {}", rec.len())));
        }
        let row = MetricsRow {
            step: field(&rec, 0, line)?,
            mean_eval_return: field(&rec, 1, line)?,
            std_eval_return: field(&rec, 2, line)?,
            critic_loss: opt_field(&rec, 3, line)?,
            actor_loss: opt_field(&rec, 4, line)?,
            representation_loss: opt_field(&rec, 5, line)?,
            eta: field(&rec, 6, line)?,
            beta: opt_field(&rec, 7, line)?,
            rho: opt_field(&rec, 8, line)?,
            wall_seconds: field(&rec, 9, line)?,
        };
        if row.step < last_step {
            return Err(HarnessError::Schema(format!("column `step` line {line}: decreasing step {}", row.step)));
        }
        last_step = row.step;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_metrics(file).map_err(|e| e.context(path))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut w = MetricsWriter::create(path)?;
    for r in rows {
        w.write(r)?;
    }
    w.inner.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, sac: bool) -> MetricsRow {
        MetricsRow {
            step,
            mean_eval_return: -150.25,
            std_eval_return: 3.5,
            critic_loss: Some(0.1),
            actor_loss: Some(-20.0),
            representation_loss: (!sac).then_some(0.3),
            eta: 0.05,
            beta: (!sac).then_some(1.0),
            rho: (!sac).then_some(0.7),
            wall_seconds: 1.5,
        }
    }

    #[test]
    fn round_trip_with_empty_optionals() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![row(1000, true), row(2000, false)];
        write_metrics(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(
            "step,mean_eval_return,std_eval_return,critic_loss,actor_loss,representation_loss,eta,beta,rho,wall_seconds\n"
        ));
        assert!(text.contains("1000,-150.25,3.5,0.1,-20,,0.05,,,1.5\n"));
        assert_eq!(read_metrics(&p).unwrap(), rows);
    }

    #[test]
    fn schema_errors_name_the_column() {
        let bad_header = "step,mean_return,std_eval_return\n";
        assert!(parse_metrics(bad_header.as_bytes()).unwrap_err().to_string().contains("mean_eval_return"));
        let bad_value = format!("{}\n1,x,0,,,,1,,,0\n", METRICS_HEADER.join(","));
        assert!(parse_metrics(bad_value.as_bytes()).unwrap_err().to_string().contains("`mean_eval_return`"));
        let short = format!("{}\n1,2\n", METRICS_HEADER.join(","));
        assert!(parse_metrics(short.as_bytes()).is_err());
        let extra = format!("{},extra\n", METRICS_HEADER.join(","));
        assert!(parse_metrics(extra.as_bytes()).unwrap_err().to_string().contains("extra"));
    }

    #[test]
    fn partial_file_is_a_valid_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&p).unwrap();
        w.write(&row(1000, false)).unwrap();
        // The writer is still open: whatever is on disk must already parse.
        assert_eq!(read_metrics(&p).unwrap(), vec![row(1000, false)]);
        drop(w);
    }
}
