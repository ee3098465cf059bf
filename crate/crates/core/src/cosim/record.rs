use std::io::{Read, Write};

/// Solver bookkeeping of one accepted time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Step that produced the point; zero for the operating point.
    pub dt: f64,
    pub gs_iterations: usize,
    /// Largest device Newton iteration count of the final GS iteration.
    pub newton_iterations: usize,
    /// BDF order used; zero for the operating point.
    pub order: u8,
    /// Normalized local truncation error, when estimated.
    pub lte: Option<f64>,
    /// Largest KCL residual with the device currents of the final iterate (A).
    pub kcl_residual: f64,
}

/// Accepted time points of a run. `values[k]` holds one entry per signal:
/// node voltages, branch currents, then device electrode currents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransientRecord {
    pub signals: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub steps: Vec<StepInfo>,
    pub rejected_steps: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad CSV: {0}")]
    Format(String),
}

impl TransientRecord {
    pub fn signal(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.signals.iter().position(|s| s == name)?;
        Some(self.values.iter().map(|row| row[k]).collect())
    }

    /// Copy restricted to `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<TransientRecord, String> {
        let idx = names
            .iter()
            .map(|n| {
                self.signals
                    .iter()
                    .position(|s| s == n)
                    .ok_or_else(|| format!("unknown signal `{n}` (available: {})", self.signals.join(", ")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TransientRecord {
            signals: names.to_vec(),
            values: self.values.iter().map(|row| idx.iter().map(|&k| row[k]).collect()).collect(),
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes `time,<signals>,dt,gs_iterations`, one row per accepted point.
    /// Reals use 17 significant digits, so values survive a round trip.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CsvError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.signals.iter().cloned());
        header.extend(["dt".into(), "gs_iterations".into()]);
        out.write_record(&header)?;
        for ((t, row), step) in self.times.iter().zip(&self.values).zip(&self.steps) {
            let mut rec = Vec::with_capacity(row.len() + 3);
            rec.push(format!("{t:.16e}"));
            rec.extend(row.iter().map(|v| format!("{v:.16e}")));
            rec.push(format!("{:.16e}", step.dt));
            rec.push(step.gs_iterations.to_string());
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a file written by [`write_csv`](Self::write_csv). Only `dt` and
    /// `gs_iterations` of the step information are restored.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, CsvError> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let n = header.len();
        if n < 3 || header[0] != "time" || header[n - 2] != "dt" || header[n - 1] != "gs_iterations" {
            return Err(CsvError::Format("expected time,<signals>,dt,gs_iterations".into()));
        }
        let mut rec = TransientRecord {
            signals: header[1..n - 2].to_vec(),
            ..Self::default()
        };
        for (line, row) in rd.records().enumerate() {
            let row = row?;
            let num = |k: usize| -> Result<f64, CsvError> {
                row[k]
                    .trim()
                    .parse()
                    .map_err(|_| CsvError::Format(format!("row {}: bad number `{}`", line + 2, &row[k])))
            };
            rec.times.push(num(0)?);
            rec.values.push((1..n - 2).map(num).collect::<Result<_, _>>()?);
            let gs = row[n - 1]
                .trim()
                .parse()
                .map_err(|_| CsvError::Format(format!("row {}: bad iteration count", line + 2)))?;
            rec.steps.push(StepInfo {
                dt: num(n - 2)?,
                gs_iterations: gs,
                newton_iterations: 0,
                order: 0,
                lte: None,
                kcl_residual: 0.0,
            });
        }
        Ok(rec)
    }
}
