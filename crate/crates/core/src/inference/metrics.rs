use crate::error::{Error, Result};
use crate::geometry::{rotation_error, Pose};

/// Fraction of estimates whose rotation error is strictly below `threshold`.
pub fn pose_accuracy(estimates: &[Pose], truths: &[Pose], threshold: f64) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} estimates for {} ground truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (e, t) in estimates.iter().zip(truths) {
        if rotation_error(&e.rotation(), &t.rotation())? < threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / estimates.len() as f64)
}

pub fn mean_task_accuracy(per_task: &[f64]) -> Result<f64> {
    if per_task.is_empty() {
        return Err(Error::invalid("no task accuracies to average"));
    }
    Ok(per_task.iter().sum::<f64>() / per_task.len() as f64)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn counting() {
        let gt = vec![Pose::new(0.0, 0.0, 0.0, 5.0); 2];
        assert_eq!(pose_accuracy(&gt, &gt, PI / 18.0).unwrap(), 1.0);
        let est = vec![Pose::new(0.1, 0.0, 0.0, 5.0), Pose::new(0.6, 0.0, 0.0, 5.0)];
        assert_eq!(pose_accuracy(&est, &gt, PI / 6.0).unwrap(), 0.5);
        assert_eq!(pose_accuracy(&gt, &gt, 0.0).unwrap(), 0.0);
        assert!(pose_accuracy(&gt[..1], &gt, 0.1).is_err());
    }

    #[test]
    fn task_means() {
        assert!((mean_task_accuracy(&[1.0, 0.8]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(mean_task_accuracy(&[0.7]).unwrap(), 0.7);
        let a = mean_task_accuracy(&[0.2, 0.5, 0.9]).unwrap();
        let b = mean_task_accuracy(&[0.9, 0.2, 0.5]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(mean_task_accuracy(&[]).is_err());
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
    }
}
