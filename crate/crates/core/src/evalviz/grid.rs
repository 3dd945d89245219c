use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSummary {
    pub avg: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

impl GridSummary {
    /// Mean, population standard deviation, maximum and minimum.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n).sqrt();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        GridSummary { avg, std, max, min }
    }
}

/// CSV of one scalar per granularity: a `level` row per `(m, n, value)` and a
/// final `summary` row.
pub fn emit_grid(levels: &[(usize, usize, f64)]) -> Result<(String, GridSummary)> {
    if levels.is_empty() {
        return Err(Error::Empty("no levels to emit".into()));
    }
    let values: Vec<f64> = levels.iter().map(|l| l.2).collect();
    let s = GridSummary::of(&values);
    let mut out = String::from("kind,m,n,value,avg,std,max,min\n");
    for &(m, n, v) in levels {
        out.push_str(&format!("level,{m},{n},{v},,,,\n"));
    }
    out.push_str(&format!("summary,,,,{},{},{},{}\n", s.avg, s.std, s.max, s.min));
    Ok((out, s))
}
