use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Problem, ProblemError};
use crate::autodiff::Tensor;
use crate::seed::stream;

const MAGIC: &[u8; 8] = b"IVBDATA1";

/// Everything in a dataset file except the numeric rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub config: Problem,
    pub seed: u64,
    pub n: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    /// Prior draws consumed, including those redrawn for lack of an impact.
    pub draws: usize,
}

/// Paired prior samples and their forward-process observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub xs: Tensor,
    pub ys: Tensor,
}

/// Draws `n` pairs `(x, f(x))` from the prior. Ballistics draws without an
/// impact are redrawn; more than 100 draws per accepted row is reported as
/// [`ProblemError::BudgetExceeded`].
pub fn generate_dataset(problem: &Problem, n: usize, seed: u64) -> Result<Dataset, ProblemError> {
    problem.validate()?;
    if n == 0 {
        return Err(ProblemError::InvalidConfig("dataset size must be positive".into()));
    }
    let mut rng = stream(seed, "dataset", 0);
    let budget = n.saturating_mul(100);
    let mut xs = Vec::with_capacity(n * 4);
    let mut ys = Vec::with_capacity(n * problem.y_dim());
    let (mut accepted, mut draws) = (0, 0);
    while accepted < n {
        if draws >= budget {
            return Err(ProblemError::BudgetExceeded {
                accepted,
                requested: n,
                draws,
            });
        }
        let batch = problem.sample_prior_raw((n - accepted).min(budget - draws), &mut rng);
        for x in batch.row_iter() {
            draws += 1;
            match problem.forward(x) {
                Ok(y) => {
                    xs.extend_from_slice(x);
                    ys.extend_from_slice(&y);
                    accepted += 1;
                }
                Err(ProblemError::NoImpact) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let y_dim = problem.y_dim();
    Ok(Dataset {
        header: DatasetHeader {
            config: problem.clone(),
            seed,
            n,
            x_dim: 4,
            y_dim,
            draws,
        },
        xs: Tensor::new(n, 4, xs).expect("row count"),
        ys: Tensor::new(n, y_dim, ys).expect("row count"),
    })
}

impl Dataset {
    pub fn problem(&self) -> &Problem {
        &self.header.config
    }

    pub fn len(&self) -> usize {
        self.header.n
    }

    pub fn is_empty(&self) -> bool {
        self.header.n == 0
    }

    /// Fraction of prior draws that were discarded.
    pub fn redraw_rate(&self) -> f64 {
        1.0 - self.header.n as f64 / self.header.draws as f64
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), ProblemError> {
        let header = serde_json::to_vec(&self.header).map_err(|e| ProblemError::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.header.n * (self.header.x_dim + self.header.y_dim) * 8);
        for (x, y) in self.xs.row_iter().zip(self.ys.row_iter()) {
            for v in x.iter().chain(y) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, ProblemError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ProblemError::Format("not a dataset file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(ProblemError::Format("header too large".into()));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: DatasetHeader =
            serde_json::from_slice(&header).map_err(|e| ProblemError::Format(e.to_string()))?;
        if header.x_dim != 4 || header.y_dim != header.config.y_dim() || header.n == 0 {
            return Err(ProblemError::Format("inconsistent dimensions in header".into()));
        }
        let width = header.x_dim + header.y_dim;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != header.n * width * 8 {
            return Err(ProblemError::Format(format!(
                "expected {} data bytes, found {}",
                header.n * width * 8,
                body.len()
            )));
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let xs = Tensor::from_fn(header.n, header.x_dim, |i, j| vals[i * width + j]);
        let ys = Tensor::from_fn(header.n, header.y_dim, |i, j| vals[i * width + header.x_dim + j]);
        Ok(Self { header, xs, ys })
    }

    pub fn save(&self, path: &Path) -> Result<(), ProblemError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }

    /// CSV with columns `x1..x4, y1[, y2]`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), ProblemError> {
        writeln!(w, "{}", self.problem().column_names().join(","))?;
        for (x, y) in self.xs.row_iter().zip(self.ys.row_iter()) {
            let row: Vec<String> = x.iter().chain(y).map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{BallisticsConfig, ProblemKind};

    #[test]
    fn rows_match_forward_exactly() {
        let p = Problem::default_for(ProblemKind::Kinematics);
        let d = generate_dataset(&p, 10_000, 3).unwrap();
        for (x, y) in d.xs.row_iter().zip(d.ys.row_iter()) {
            assert_eq!(p.forward(x).unwrap(), y);
        }
        assert_eq!(d.header.draws, 10_000);
    }

    #[test]
    fn identical_bytes_for_fixed_seed() {
        let p = Problem::default_for(ProblemKind::Ballistics);
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_dataset(&p, 500, 9).unwrap().write_to(&mut a).unwrap();
        generate_dataset(&p, 500, 9).unwrap().write_to(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate_dataset(&p, 500, 10).unwrap().write_to(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn binary_round_trip() {
        let p = Problem::default_for(ProblemKind::Ballistics);
        let d = generate_dataset(&p, 200, 1).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        buf.truncate(buf.len() - 3);
        assert!(Dataset::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_has_named_columns() {
        let p = Problem::default_for(ProblemKind::Kinematics);
        let d = generate_dataset(&p, 3, 1).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x1,x2,x3,x4,y1,y2");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn impossible_prior_exhausts_budget() {
        // every launch far below ground
        let p = Problem::Ballistics(BallisticsConfig {
            x2_mean: -100.0,
            ..Default::default()
        });
        let err = generate_dataset(&p, 10, 0).unwrap_err();
        assert!(matches!(err, ProblemError::BudgetExceeded { accepted: 0, draws: 1000, .. }));
    }
}
