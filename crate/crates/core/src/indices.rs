//! Price aggregators: Stone and translog log-price indices, and the
//! Cobb-Douglas aggregate price used by the quadratic expenditure shifter.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{AidsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Stone,
    Translog,
    CobbDouglas,
}

/// One value per week. Stone and translog series hold `ln P_t`;
/// the Cobb-Douglas series holds the level `Q_t > 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriceIndexSeries {
    pub kind: IndexKind,
    pub values: Vec<f64>,
    /// Only meaningful for [`IndexKind::Translog`].
    pub alpha0: f64,
}

impl PriceIndexSeries {
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn is_log_space(&self) -> bool {
        self.kind != IndexKind::CobbDouglas
    }
}

fn check_cols(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(AidsError::dimension(what, expected, got));
    }
    Ok(())
}

/// `ln P*_t = sum_i w_it ln p_it`.
pub fn stone_index(shares: &DMatrix<f64>, log_prices: &DMatrix<f64>) -> Result<PriceIndexSeries> {
    if shares.shape() != log_prices.shape() {
        return Err(AidsError::dimension(
            "share and log-price matrices",
            format!("{}x{}", log_prices.nrows(), log_prices.ncols()),
            format!("{}x{}", shares.nrows(), shares.ncols()),
        ));
    }
    let values = shares
        .row_iter()
        .zip(log_prices.row_iter())
        .map(|(w, lp)| w.dot(&lp))
        .collect();
    Ok(PriceIndexSeries {
        kind: IndexKind::Stone,
        values,
        alpha0: 0.0,
    })
}

/// Translog index evaluated at a single log-price vector.
pub(crate) fn translog_at(alpha: &DVector<f64>, gamma: &DMatrix<f64>, log_prices: &[f64], alpha0: f64) -> f64 {
    let n = alpha.len();
    let mut value = alpha0;
    for i in 0..n {
        value += alpha[i] * log_prices[i];
        let mut inner = 0.0;
        for j in 0..n {
            inner += gamma[(i, j)] * log_prices[j];
        }
        value += 0.5 * log_prices[i] * inner;
    }
    value
}

/// `ln P_t = a0 + sum_i a_i ln p_it + 1/2 sum_i sum_j g_ij ln p_it ln p_jt`.
///
/// `gamma` is used as given; it is symmetric whenever symmetry was imposed
/// in estimation.
pub fn translog_index(
    alpha: &DVector<f64>,
    gamma: &DMatrix<f64>,
    log_prices: &DMatrix<f64>,
    alpha0: f64,
) -> Result<PriceIndexSeries> {
    let n = alpha.len();
    check_cols("log-price columns", n, log_prices.ncols())?;
    if gamma.shape() != (n, n) {
        return Err(AidsError::dimension(
            "gamma",
            format!("{n}x{n}"),
            format!("{}x{}", gamma.nrows(), gamma.ncols()),
        ));
    }
    let values = log_prices
        .row_iter()
        .map(|row| {
            let lp: Vec<f64> = row.iter().copied().collect();
            translog_at(alpha, gamma, &lp, alpha0)
        })
        .collect();
    Ok(PriceIndexSeries {
        kind: IndexKind::Translog,
        values,
        alpha0,
    })
}

/// `Q_t = prod_j p_jt^beta_j`.
pub fn cobb_douglas_q(beta: &DVector<f64>, log_prices: &DMatrix<f64>) -> Result<PriceIndexSeries> {
    check_cols("log-price columns", beta.len(), log_prices.ncols())?;
    let values = log_prices
        .row_iter()
        .map(|row| row.transpose().dot(beta).exp())
        .collect();
    Ok(PriceIndexSeries {
        kind: IndexKind::CobbDouglas,
        values,
        alpha0: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn stone_hand_example() {
        let w = DMatrix::from_row_slice(1, 2, &[0.25, 0.75]);
        let lp = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_relative_eq!(stone_index(&w, &lp).unwrap().values[0], 1.75);
    }

    #[test]
    fn stone_single_good() {
        let w = DMatrix::from_element(3, 1, 1.0);
        let lp = DMatrix::from_column_slice(3, 1, &[0.1, 0.7, 2.0]);
        assert_eq!(stone_index(&w, &lp).unwrap().values, vec![0.1, 0.7, 2.0]);
    }

    #[test]
    fn stone_rejects_shape_mismatch() {
        let w = DMatrix::from_element(3, 2, 0.5);
        let lp = DMatrix::from_element(2, 2, 0.0);
        assert!(matches!(stone_index(&w, &lp), Err(AidsError::Dimension { .. })));
    }

    #[test]
    fn translog_hand_example() {
        let alpha = DVector::from_vec(vec![0.5, 0.5]);
        let gamma = DMatrix::from_row_slice(2, 2, &[0.1, -0.1, -0.1, 0.1]);
        let lp = DMatrix::from_row_slice(1, 2, &[2f64.ln(), 0.0]);
        let v = translog_index(&alpha, &gamma, &lp, 0.0).unwrap().values[0];
        let l2 = 2f64.ln();
        assert_relative_eq!(v, 0.5 * l2 + 0.5 * 0.1 * l2 * l2, epsilon = 1e-15);
        // reference value is rounded to five decimals
        assert!((v - 0.37059).abs() < 1e-5);
    }

    #[test]
    fn translog_at_unit_prices_is_alpha0() {
        let alpha = DVector::from_vec(vec![0.3, 0.7]);
        let gamma = DMatrix::from_row_slice(2, 2, &[0.2, -0.2, -0.2, 0.2]);
        let lp = DMatrix::zeros(4, 2);
        let s = translog_index(&alpha, &gamma, &lp, 1.25).unwrap();
        assert!(s.values.iter().all(|&v| v == 1.25));
    }

    #[test]
    fn cobb_douglas_examples() {
        let lp = DMatrix::from_row_slice(1, 2, &[4f64.ln(), 0.0]);
        let q = cobb_douglas_q(&DVector::from_vec(vec![0.5, -0.5]), &lp).unwrap();
        assert_relative_eq!(q.values[0], 2.0, epsilon = 1e-14);
        let q0 = cobb_douglas_q(&DVector::zeros(2), &lp).unwrap();
        assert_eq!(q0.values[0], 1.0);
        let q1 = cobb_douglas_q(&DVector::from_vec(vec![1.0, 0.0]), &lp).unwrap();
        assert_relative_eq!(q1.values[0], 4.0, epsilon = 1e-14);
        assert!(!q.is_log_space());
    }

    proptest! {
        #[test]
        fn stone_of_uniform_prices(raw in proptest::collection::vec(0.01f64..1.0, 2..6), lp in -3.0f64..3.0) {
            let total: f64 = raw.iter().sum();
            let n = raw.len();
            let w = DMatrix::from_row_slice(1, n, &raw.iter().map(|x| x / total).collect::<Vec<_>>());
            let p = DMatrix::from_element(1, n, lp);
            prop_assert!((stone_index(&w, &p).unwrap().values[0] - lp).abs() < 1e-12);
        }

        #[test]
        fn translog_without_gamma_matches_stone(raw in proptest::collection::vec(0.01f64..1.0, 2..6),
                                               seed in proptest::collection::vec(-2.0f64..2.0, 6)) {
            let total: f64 = raw.iter().sum();
            let n = raw.len();
            let alpha: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let lp = DMatrix::from_row_slice(1, n, &seed[..n]);
            let stone = stone_index(&DMatrix::from_row_slice(1, n, &alpha), &lp).unwrap().values[0];
            let tl = translog_index(&DVector::from_vec(alpha), &DMatrix::zeros(n, n), &lp, 0.0).unwrap().values[0];
            prop_assert!((stone - tl).abs() < 1e-12);
        }

        #[test]
        fn cobb_douglas_reciprocal(beta in proptest::collection::vec(-1.0f64..1.0, 3),
                                   lp in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let b = DVector::from_vec(beta);
            let p = DMatrix::from_row_slice(1, 3, &lp);
            let q = cobb_douglas_q(&b, &p).unwrap().values[0];
            let qi = cobb_douglas_q(&(-b), &p).unwrap().values[0];
            prop_assert!((q * qi - 1.0).abs() < 1e-12);
        }
    }
}
