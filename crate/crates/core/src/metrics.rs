//! Loss and evaluation metrics.

use crate::error::{ensure_len, Error, Result};

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_and_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure_len("mse_and_grad", pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::Degenerate("empty prediction"));
    }
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.into_iter().map(|d| 2.0 * d / n).collect()))
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    ensure_len("rmse", preds.len(), targets.len())?;
    if preds.is_empty() {
        return Err(Error::Degenerate("rmse of empty sequence"));
    }
    let sse: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / preds.len() as f64).sqrt())
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(preds: &[f64], targets: &[f64]) -> Result<f64> {
    ensure_len("r2_score", preds.len(), targets.len())?;
    if targets.is_empty() {
        return Err(Error::Degenerate("r2 of empty sequence"));
    }
    if targets.iter().all(|&t| t == targets[0]) {
        return Err(Error::Degenerate("targets have zero variance"));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{finite_diff_grad, FD_STEP};
    use proptest::prelude::*;

    #[test]
    fn mse_cases() {
        assert_eq!(mse_and_grad(&[0.4, 1.0], &[0.4, 1.0]).unwrap(), (0.0, vec![0.0, 0.0]));
        assert_eq!(mse_and_grad(&[1.0], &[0.0]).unwrap(), (1.0, vec![2.0]));
        assert!(mse_and_grad(&[1.0], &[0.0, 1.0]).is_err());
        let target = [0.3, -1.2, 2.0];
        let pred = [0.1, 0.5, 1.5];
        let (_, g) = mse_and_grad(&pred, &target).unwrap();
        let fd = finite_diff_grad(|p| mse_and_grad(p, &target).unwrap().0, &pred, FD_STEP).unwrap();
        for (a, e) in g.iter().zip(&fd) {
            assert!((a - e).abs() < 1e-8);
        }
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[1.1, 2.1, 3.1], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5_f64.sqrt());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn r2_cases() {
        let t = [1.0, 2.0, 4.0];
        assert_eq!(r2_score(&t, &t).unwrap(), 1.0);
        let mean = 7.0 / 3.0;
        assert!(r2_score(&[mean; 3], &t).unwrap().abs() < 1e-12);
        assert!(r2_score(&[4.0, 2.0, 1.0], &t).unwrap() < 0.0);
        assert!(r2_score(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(r2_score(&[0.0; 7], &[0.4; 7]).is_err());
    }

    proptest! {
        #[test]
        fn rmse_squared_is_mean_sse(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..50)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = rmse(&p, &t).unwrap();
            let sse: f64 = p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!((r * r * p.len() as f64 - sse).abs() <= 1e-9 * (1.0 + sse));
        }

        #[test]
        fn perfect_fit_iff_zero_rmse(t in proptest::collection::vec(-5.0f64..5.0, 2..30), bump in 0usize..30) {
            prop_assume!(t.iter().any(|x| *x != t[0]));
            prop_assert_eq!(r2_score(&t, &t).unwrap(), 1.0);
            prop_assert_eq!(rmse(&t, &t).unwrap(), 0.0);
            let mut p = t.clone();
            let k = bump % p.len();
            p[k] += 0.5;
            prop_assert!(r2_score(&p, &t).unwrap() < 1.0);
            prop_assert!(rmse(&p, &t).unwrap() > 0.0);
        }
    }
}
