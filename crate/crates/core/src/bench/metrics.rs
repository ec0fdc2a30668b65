use crate::error::{AguError, Result};

/// Micro-averaged F1 over the masked nodes.
///
/// Every misclassified node counts once as a false positive (for the
/// predicted class) and once as a false negative (for the true class), so
/// the score reduces to accuracy.
pub fn micro_f1(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() || pred.len() != mask.len() {
        return Err(AguError::dim(
            "micro_f1",
            format!("{} predictions, {} labels, {} mask flags", pred.len(), truth.len(), mask.len()),
        ));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut total = 0usize;
    for i in (0..pred.len()).filter(|&i| mask[i]) {
        total += 1;
        if pred[i] == truth[i] {
            tp += 1;
        } else {
            fp += 1;
            fn_ += 1;
        }
    }
    if total == 0 {
        return Err(AguError::EmptySet("micro_f1 mask"));
    }
    let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    let accuracy = tp as f64 / total as f64;
    debug_assert!((f1 - accuracy).abs() < 1e-12);
    Ok(f1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_scores() {
        let mask = [true; 4];
        assert_eq!(micro_f1(&[0, 1, 0, 1], &[0, 1, 0, 1], &mask).unwrap(), 1.0);
        assert_eq!(micro_f1(&[1, 0, 1, 0], &[0, 1, 0, 1], &mask).unwrap(), 0.0);
        assert_eq!(micro_f1(&[0, 0, 0, 0], &[0, 1, 0, 1], &mask).unwrap(), 0.5);
        assert_eq!(micro_f1(&[0, 9], &[0, 1], &[true, false]).unwrap(), 1.0);
        assert!(micro_f1(&[0], &[0], &[false]).is_err());
    }
}
