use crate::error::{Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic
/// `P(s+ > s-) + P(s+ = s-) / 2`, from one sort with average ranks.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::numeric("NaN score"));
    }
    if let Some(l) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::UndefinedAuc(format!("label {l} is not binary")));
    }
    let positives = labels.iter().filter(|&&l| l == 1.0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc(format!(
            "{positives} positives and {negatives} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are 1-based; a tie group spanning ranks i+1..=j gets (i+1+j)/2.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let group_pos = order[i..j].iter().filter(|&&k| labels[k] == 1.0).count();
        rank_sum += avg_rank * group_pos as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(auc(&[0.2, 0.8], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(Error::UndefinedAuc(_))));
        assert!(matches!(auc(&[0.1, 0.2], &[0.0, 0.0]), Err(Error::UndefinedAuc(_))));
    }

    #[test]
    fn signed_zero_and_infinities() {
        assert_eq!(auc(&[-0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(auc(&[f64::NEG_INFINITY, f64::INFINITY], &[0.0, 1.0]).unwrap(), 1.0);
    }
}
