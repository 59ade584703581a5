//! Majority-vote ensembling of per-fold model predictions.

use crate::error::{Error, Result};

use super::metrics::ClassLabel;

/// Per-sample mode of `k` voters' predictions. `predictions` is one row per
/// voter; rows must agree in length. Even voter counts are rejected up
/// front (tie-free guarantee), as are empty inputs.
pub fn majority_vote(predictions: &[Vec<ClassLabel>]) -> Result<Vec<ClassLabel>> {
    let k = predictions.len();
    if k == 0 {
        return Err(Error::EmptyInput("no voters".into()));
    }
    if k % 2 == 0 {
        return Err(Error::TieRisk(k));
    }
    let n = predictions[0].len();
    for row in predictions {
        if row.len() != n {
            return Err(Error::ShapeError(format!(
                "voter rows disagree in length: {} vs {n}",
                row.len()
            )));
        }
    }
    Ok((0..n)
        .map(|i| {
            let im_votes = predictions.iter().filter(|row| row[i] == ClassLabel::Im).count();
            if 2 * im_votes > k {
                ClassLabel::Im
            } else {
                ClassLabel::Cn
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::*;

    #[test]
    fn three_to_two_majority_wins() {
        let preds = vec![vec![Im], vec![Im], vec![Im], vec![Cn], vec![Cn]];
        assert_eq!(majority_vote(&preds).unwrap(), vec![Im]);
    }

    #[test]
    fn unanimous_voters_pass_through() {
        let preds = vec![vec![Cn, Im, Im]; 5];
        assert_eq!(majority_vote(&preds).unwrap(), vec![Cn, Im, Im]);
    }

    #[test]
    fn even_voter_count_is_rejected() {
        let preds = vec![vec![Im], vec![Cn]];
        assert!(matches!(majority_vote(&preds), Err(Error::TieRisk(2))));
    }

    #[test]
    fn random_matrix_matches_counting_oracle() {
        let mut state = 77u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(31);
            if (state >> 33) % 2 == 0 { Cn } else { Im }
        };
        let preds: Vec<Vec<ClassLabel>> =
            (0..5).map(|_| (0..100).map(|_| next()).collect()).collect();
        let got = majority_vote(&preds).unwrap();
        for i in 0..100 {
            let im = preds.iter().filter(|r| r[i] == Im).count();
            let cn = 5 - im;
            let expect = if im > cn { Im } else { Cn };
            assert_eq!(got[i], expect, "column {i}");
        }
    }

    #[test]
    fn single_minority_flip_cannot_change_outcome() {
        let mut state = 123u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(97);
            if (state >> 33) % 2 == 0 { Cn } else { Im }
        };
        let preds: Vec<Vec<ClassLabel>> =
            (0..5).map(|_| (0..40).map(|_| next()).collect()).collect();
        let base = majority_vote(&preds).unwrap();
        for i in 0..40 {
            // Flip one voter currently in the minority at column i.
            let mut flipped = preds.clone();
            if let Some(v) = (0..5).find(|&v| flipped[v][i] != base[i]) {
                flipped[v][i] = base[i];
                // Strengthening the majority cannot change the vote.
                assert_eq!(majority_vote(&flipped).unwrap()[i], base[i]);
            }
        }
    }
}
