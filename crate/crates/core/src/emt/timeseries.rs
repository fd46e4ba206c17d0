use std::io::{BufRead, Write};

/// Uniformly sampled signals sharing one time axis starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub sample_dt: f64,
    pub names: Vec<String>,
    /// One column per name.
    pub columns: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum TimeSeriesError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl TimeSeries {
    pub fn new(sample_dt: f64, names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Self {
            t0: 0.0,
            sample_dt,
            names,
            columns,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.sample_dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        for (c, x) in self.columns.iter_mut().zip(row) {
            c.push(*x);
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// CSV with a `time_s` column first; 13 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "time_s")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{:.12e}", self.time(i))?;
            for c in &self.columns {
                write!(w, ",{:.12e}", c[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TimeSeriesError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| TimeSeriesError::Format {
                line: 1,
                message: "empty file".into(),
            })?;
        let mut fields = header.trim().split(',');
        if fields.next() != Some("time_s") {
            return Err(TimeSeriesError::Format {
                line: 1,
                message: "first column must be time_s".into(),
            });
        }
        let names: Vec<String> = fields.map(str::to_string).collect();
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| TimeSeriesError::Format {
                line: k + 2,
                message,
            };
            let values = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if values.len() != names.len() + 1 {
                return Err(bad(format!(
                    "{} fields, expected {}",
                    values.len(),
                    names.len() + 1
                )));
            }
            if times.last().is_some_and(|&t| values[0] <= t) {
                return Err(bad("time must be strictly increasing".into()));
            }
            times.push(values[0]);
            for (c, x) in columns.iter_mut().zip(&values[1..]) {
                c.push(*x);
            }
        }
        let n = times.len();
        let t0 = times.first().copied().unwrap_or(0.0);
        let sample_dt = if n > 1 {
            (times[n - 1] - t0) / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            t0,
            sample_dt,
            names,
            columns,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut ts = TimeSeries::new(5e-4, vec!["a".into(), "b".into()]);
        for i in 0..100 {
            let x = i as f64;
            ts.push(&[x.sin() * 1e5, -x / 3.0]);
        }
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let back = TimeSeries::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.names, ts.names);
        assert!((back.sample_dt - ts.sample_dt).abs() < 1e-15);
        for (a, b) in back
            .columns
            .iter()
            .flatten()
            .zip(ts.columns.iter().flatten())
        {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_s,a,b\n0.000000000000e0,"));
    }

    #[test]
    fn rejects_non_monotone_time() {
        let text = "time_s,x\n0,1\n0,2\n";
        assert!(TimeSeries::read_csv(text.as_bytes()).is_err());
    }
}
