//! Alteration metrics for cooperative predictions against a user's own labels.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts and rates for one user on one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserAlteration {
    pub user: String,
    pub test_size: usize,
    /// Items the user labeled wrongly.
    pub incorrect: usize,
    /// Wrong user labels that cooperation fixed.
    pub fixed: usize,
    /// Items the user labeled correctly.
    pub correct: usize,
    /// Correct user labels that cooperation broke.
    pub broken: usize,
    pub a_plus: f64,
    pub a_minus: f64,
    pub original_accuracy: f64,
    pub post_accuracy: f64,
}

fn ratio_or_zero(num: usize, den: usize) -> Ratio<u64> {
    if den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(num as u64, den as u64)
    }
}

fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl UserAlteration {
    pub fn a_plus_exact(&self) -> Ratio<u64> {
        ratio_or_zero(self.fixed, self.incorrect)
    }

    pub fn a_minus_exact(&self) -> Ratio<u64> {
        ratio_or_zero(self.broken, self.correct)
    }

    pub fn original_exact(&self) -> Ratio<u64> {
        ratio_or_zero(self.correct, self.test_size)
    }

    pub fn post_exact(&self) -> Ratio<u64> {
        ratio_or_zero(self.correct - self.broken + self.fixed, self.test_size)
    }

    /// `post = original + (A+ |I| - A- |R|) / |T|`, evaluated in exact arithmetic.
    pub fn identity_holds(&self) -> bool {
        if self.test_size == 0 {
            return true;
        }
        let t = Ratio::from_integer(self.test_size as i64);
        let signed = |r: Ratio<u64>| Ratio::new(*r.numer() as i64, *r.denom() as i64);
        let rhs = signed(self.original_exact())
            + (signed(self.a_plus_exact()) * self.incorrect as i64 - signed(self.a_minus_exact()) * self.correct as i64)
                / t;
        signed(self.post_exact()) == rhs
    }
}

fn check_aligned(lengths: &[usize]) -> Result<()> {
    if lengths.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Alignment(format!("stream lengths differ: {lengths:?}")));
    }
    Ok(())
}

/// Per-user alteration rates; a rate whose denominator is empty is 0.
pub fn alteration_metrics(user: &str, clean: &[usize], user_labels: &[usize], cooperative: &[usize]) -> Result<UserAlteration> {
    check_aligned(&[clean.len(), user_labels.len(), cooperative.len()])?;
    let (mut incorrect, mut fixed, mut correct, mut broken) = (0, 0, 0, 0);
    for ((&y, &h), &c) in clean.iter().zip(user_labels).zip(cooperative) {
        if h == y {
            correct += 1;
            if c != y {
                broken += 1;
            }
        } else {
            incorrect += 1;
            if c == y {
                fixed += 1;
            }
        }
    }
    let mut report = UserAlteration {
        user: user.to_string(),
        test_size: clean.len(),
        incorrect,
        fixed,
        correct,
        broken,
        a_plus: 0.0,
        a_minus: 0.0,
        original_accuracy: 0.0,
        post_accuracy: 0.0,
    };
    report.a_plus = to_f64(report.a_plus_exact());
    report.a_minus = to_f64(report.a_minus_exact());
    report.original_accuracy = to_f64(report.original_exact());
    report.post_accuracy = to_f64(report.post_exact());
    Ok(report)
}

/// Fractions of `predictions` and of `cooperative` that equal `clean`.
pub fn accuracy_pair(clean: &[usize], predictions: &[usize], cooperative: &[usize]) -> Result<(f64, f64)> {
    check_aligned(&[clean.len(), predictions.len(), cooperative.len()])?;
    if clean.is_empty() {
        return Ok((0.0, 0.0));
    }
    let hits = |s: &[usize]| s.iter().zip(clean).filter(|(a, b)| a == b).count() as f64 / clean.len() as f64;
    Ok((hits(predictions), hits(cooperative)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Improved,
    Maintained,
    NotImproved,
}

pub fn classify_outcome(original: f64, post: f64, tolerance: f64) -> Outcome {
    if post > original + tolerance {
        Outcome::Improved
    } else if (post - original).abs() <= tolerance {
        Outcome::Maintained
    } else {
        Outcome::NotImproved
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub users: usize,
    pub improved: usize,
    pub maintained: usize,
    pub not_improved: usize,
    pub original_accuracy: f64,
    pub post_accuracy: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub tolerance: f64,
}

/// Unweighted means over users and improved / maintained / not-improved tallies.
pub fn aggregate_users(reports: &[UserAlteration], tolerance: f64) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Config("no users to aggregate".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&UserAlteration) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mut out = AggregateReport {
        users: reports.len(),
        improved: 0,
        maintained: 0,
        not_improved: 0,
        original_accuracy: mean(|r| r.original_accuracy),
        post_accuracy: mean(|r| r.post_accuracy),
        a_plus: mean(|r| r.a_plus),
        a_minus: mean(|r| r.a_minus),
        tolerance,
    };
    for r in reports {
        match classify_outcome(r.original_accuracy, r.post_accuracy, tolerance) {
            Outcome::Improved => out.improved += 1,
            Outcome::Maintained => out.maintained += 1,
            Outcome::NotImproved => out.not_improved += 1,
        }
    }
    Ok(out)
}

/// Correctness of (human, base, cooperation) in reporting order.
pub const JOINT_CELLS: [(bool, bool, bool); 8] = [
    (false, true, true),
    (true, false, true),
    (true, true, true),
    (false, false, true),
    (false, true, false),
    (true, false, false),
    (true, true, false),
    (false, false, false),
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointDecisionTable {
    pub counts: [usize; 8],
    pub total: usize,
}

impl JointDecisionTable {
    pub fn cell_index(human: bool, base: bool, cooperation: bool) -> usize {
        JOINT_CELLS
            .iter()
            .position(|&c| c == (human, base, cooperation))
            .expect("all eight cells are listed")
    }

    pub fn proportions(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        if self.total > 0 {
            for (o, &c) in out.iter_mut().zip(&self.counts) {
                *o = c as f64 / self.total as f64;
            }
        }
        out
    }

    pub fn proportion(&self, human: bool, base: bool, cooperation: bool) -> f64 {
        self.proportions()[Self::cell_index(human, base, cooperation)]
    }

    pub fn merge(&mut self, other: &JointDecisionTable) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }
}

pub fn joint_decision_table(clean: &[usize], human: &[usize], base: &[usize], cooperative: &[usize]) -> Result<JointDecisionTable> {
    check_aligned(&[clean.len(), human.len(), base.len(), cooperative.len()])?;
    let mut table = JointDecisionTable {
        total: clean.len(),
        ..Default::default()
    };
    for i in 0..clean.len() {
        let y = clean[i];
        table.counts[JointDecisionTable::cell_index(human[i] == y, base[i] == y, cooperative[i] == y)] += 1;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_user_has_zero_a_plus() {
        let r = alteration_metrics("u", &[0, 1, 2], &[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!((r.a_plus, r.a_minus, r.original_accuracy), (0.0, 0.0, 1.0));
    }

    #[test]
    fn counting_examples() {
        // Wrong on four items, three repaired.
        let clean = [0, 0, 0, 0, 1];
        let user = [1, 1, 1, 1, 1];
        let coop = [0, 0, 0, 1, 1];
        assert_eq!(alteration_metrics("u", &clean, &user, &coop).unwrap().a_plus, 0.75);
        // Right on ten items, one broken.
        let clean = [0; 10];
        let mut coop = [0; 10];
        coop[4] = 1;
        assert_eq!(alteration_metrics("u", &clean, &clean, &coop).unwrap().a_minus, 0.1);
    }

    #[test]
    fn misaligned_streams() {
        assert!(matches!(alteration_metrics("u", &[0], &[0, 1], &[0]), Err(Error::Alignment(_))));
        assert!(matches!(joint_decision_table(&[0], &[0], &[], &[0]), Err(Error::Alignment(_))));
    }

    #[test]
    fn accuracy_pair_identities() {
        assert_eq!(accuracy_pair(&[0, 1], &[0, 1], &[1, 1]).unwrap(), (1.0, 0.5));
        let (o, p) = accuracy_pair(&[0, 1, 2], &[0, 2, 2], &[0, 2, 2]).unwrap();
        assert_eq!(o, p);
    }

    #[test]
    fn aggregate_examples() {
        let a = alteration_metrics("a", &[0, 0], &[1, 1], &[0, 1]).unwrap();
        let b = alteration_metrics("b", &[0, 0], &[1, 1], &[0, 0]).unwrap();
        let agg = aggregate_users(&[a.clone(), b], 0.0).unwrap();
        assert_eq!(agg.a_plus, 0.75);
        assert_eq!((agg.improved, agg.maintained, agg.not_improved), (2, 0, 0));
        let single = aggregate_users(std::slice::from_ref(&a), 0.0).unwrap();
        assert_eq!(single.post_accuracy, a.post_accuracy);
        assert!(aggregate_users(&[], 0.0).is_err());
    }

    #[test]
    fn outcome_tolerance() {
        assert_eq!(classify_outcome(0.5, 0.5, 0.0), Outcome::Maintained);
        assert_eq!(classify_outcome(0.5, 0.51, 0.0), Outcome::Improved);
        assert_eq!(classify_outcome(0.5, 0.49, 0.0), Outcome::NotImproved);
        assert_eq!(classify_outcome(0.5, 0.51, 0.02), Outcome::Maintained);
    }

    #[test]
    fn perfect_joint_table() {
        let t = joint_decision_table(&[0, 1], &[0, 1], &[0, 1], &[0, 1]).unwrap();
        assert_eq!(t.proportion(true, true, true), 1.0);
        assert_eq!(JointDecisionTable::cell_index(true, true, true), 2);
        assert_eq!(JointDecisionTable::cell_index(false, false, false), 7);
    }
}
