use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fuzzy::{fuzzy_kmeans, FuzzyConfig, ProfileAssignment};
use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub k: usize,
    /// Mean silhouette of each profile; `None` for an empty profile.
    pub per_profile: Vec<Option<f64>>,
    /// Mean of the nonempty per-profile means.
    pub score: f64,
    pub per_vector: Vec<f64>,
}

/// Silhouettes with L2 distances. Members of singleton profiles score 0, and empty profiles
/// take no part in either the nearest-profile distance or the mean.
pub fn silhouette_score<T: Scalar>(vectors: &[Vec<T>], assignments: &[usize], k: usize) -> Result<SilhouetteReport> {
    if vectors.len() != assignments.len() {
        return Err(Error::Alignment("one profile per vector required".into()));
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::Validation(format!("profile {bad} out of range for K={k}")));
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::Config("silhouette needs at least two nonempty profiles".into()));
    }
    let per_vector: Vec<f64> = (0..vectors.len())
        .into_par_iter()
        .map(|i| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0f64; k];
            for (j, x) in vectors.iter().enumerate() {
                if j != i {
                    sums[assignments[j]] += squared_distance(&vectors[i], x).as_f64().sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&p| p != own && sizes[p] > 0)
                .map(|p| sums[p] / sizes[p] as f64)
                .fold(f64::INFINITY, f64::min);
            let scale = a.max(b);
            if scale > 0.0 {
                (b - a) / scale
            } else {
                0.0
            }
        })
        .collect();
    let per_profile: Vec<Option<f64>> = (0..k)
        .map(|p| {
            (sizes[p] > 0).then(|| {
                (0..vectors.len())
                    .filter(|&i| assignments[i] == p)
                    .map(|i| per_vector[i])
                    .sum::<f64>()
                    / sizes[p] as f64
            })
        })
        .collect();
    let present: Vec<f64> = per_profile.iter().flatten().copied().collect();
    let score = present.iter().sum::<f64>() / present.len() as f64;
    Ok(SilhouetteReport {
        k,
        per_profile,
        score,
        per_vector,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KSelection<T> {
    pub best_k: usize,
    pub sweep: Vec<(SilhouetteReport, ProfileAssignment<T>)>,
}

impl<T: Scalar> KSelection<T> {
    pub fn best(&self) -> &(SilhouetteReport, ProfileAssignment<T>) {
        self.sweep
            .iter()
            .find(|(r, _)| r.k == self.best_k)
            .expect("best K is part of the sweep")
    }

    /// `K,score` lines.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\nK,score\n", crate::dataset::FORMAT_HEADER);
        for (r, _) in &self.sweep {
            out.push_str(&format!("{},{}\n", r.k, r.score));
        }
        out
    }
}

/// Clusters for every K in `k_range` and keeps the best mean silhouette; ties go to the
/// smallest K. A K whose hard assignment leaves fewer than two nonempty profiles scores -1.
pub fn select_k<T: Scalar>(vectors: &[Vec<T>], k_range: &[usize], config: &FuzzyConfig) -> Result<KSelection<T>> {
    if k_range.is_empty() {
        return Err(Error::Config("empty K range".into()));
    }
    let mut ks = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if let Some(&bad) = ks.iter().find(|&&k| k < 2 || k + 1 > vectors.len()) {
        return Err(Error::Config(format!(
            "K={bad} outside [2, {}]",
            vectors.len().saturating_sub(1)
        )));
    }
    let sweep = ks
        .par_iter()
        .map(|&k| {
            let assignment = fuzzy_kmeans(vectors, k, config)?;
            let report = match silhouette_score(vectors, &assignment.hard, k) {
                Ok(r) => r,
                Err(Error::Config(_)) => SilhouetteReport {
                    k,
                    per_profile: vec![None; k],
                    score: -1.0,
                    per_vector: vec![0.0; vectors.len()],
                },
                Err(e) => return Err(e),
            };
            Ok((report, assignment))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (r, _)) in sweep.iter().enumerate() {
        if r.score > sweep[best].0.score {
            best = i;
        }
    }
    Ok(KSelection {
        best_k: sweep[best].0.k,
        sweep,
    })
}
