use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension z-scoring fitted on one set of rows and reused verbatim on
/// others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 marks a constant dimension.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Degenerate("cannot fit a standardizer on zero rows".into()))?;
        let dim = first.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // rounding leaves ~1e-17 spread on a constant column
                if sd <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.dim()) {
            return Err(Error::Dimension(format!(
                "row has {} features, standardizer was fitted on {}",
                r.len(),
                self.dim()
            )));
        }
        Ok(rows.iter().map(|r| self.transform_row(r)).collect())
    }
}

/// Fits on `train` and standardizes `apply` with those statistics.
pub fn standardize_features(
    train: &[Vec<f64>],
    apply: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Standardizer)> {
    let st = Standardizer::fit(train)?;
    Ok((st.transform(apply)?, st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rows() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 5.0, 0.1],
            vec![2.0, 5.0, 0.7],
            vec![4.0, 5.0, -0.3],
            vec![9.0, 5.0, 0.2],
        ]
    }

    #[test]
    fn fit_set_is_zero_mean_unit_std() {
        let train = rows();
        let (z, st) = standardize_features(&train, &train).unwrap();
        for d in [0, 2] {
            let col: Vec<f64> = z.iter().map(|r| r[d]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-10);
        }
        assert_eq!(st.std[1], 0.0);
        assert!(z.iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn held_out_rows_use_training_statistics() {
        let train = rows();
        let test = vec![vec![100.0, 5.0, 100.0], vec![-3.0, 6.0, 0.0]];
        let (z, st) = standardize_features(&train, &test).unwrap();
        assert_eq!(st, Standardizer::fit(&train).unwrap());
        assert_abs_diff_eq!(z[0][0], (100.0 - st.mean[0]) / st.std[0], epsilon = 1e-12);
        // constant training dimension stays 0 even where test data varies
        assert_eq!(z[1][1], 0.0);
    }

    #[test]
    fn empty_and_ragged_inputs_fail() {
        assert!(Standardizer::fit(&[]).is_err());
        assert!(Standardizer::fit(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let st = Standardizer::fit(&rows()).unwrap();
        assert!(st.transform(&[vec![1.0]]).is_err());
    }
}
