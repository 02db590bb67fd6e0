use rand::Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{argmax, squared_distance, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzyConfig {
    pub fuzzifier: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        Self {
            fuzzifier: 2.0,
            tolerance: 1e-6,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProfileAssignment<T> {
    pub k: usize,
    /// One row per vector, one column per profile.
    pub memberships: Vec<Vec<T>>,
    pub hard: Vec<usize>,
    /// Sorted lexicographically, which fixes profile ids.
    pub centroids: Vec<Vec<T>>,
    /// Objective after each iteration.
    pub objective: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> ProfileAssignment<T> {
    pub fn members(&self, profile: usize) -> Vec<usize> {
        (0..self.hard.len()).filter(|&j| self.hard[j] == profile).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &h in &self.hard {
            sizes[h] += 1;
        }
        sizes
    }
}

fn lexicographic<T: Scalar>(a: &[T], b: &[T]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// k-means++ seeding over the points taken in lexicographic order, so the result does not
/// depend on the order vectors were supplied in.
fn seed_centroids<T: Scalar>(vectors: &[Vec<T>], k: usize, seed: u64) -> Vec<Vec<T>> {
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| lexicographic(&vectors[a], &vectors[b]));
    let mut r = rng::substream(seed, 0);
    let mut centroids = vec![vectors[order[r.random_range(0..order.len())]].clone()];
    let mut nearest: Vec<f64> = order
        .iter()
        .map(|&j| squared_distance(&vectors[j], &centroids[0]).as_f64())
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut pick = order.len() - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            warn!(k, "fewer distinct vectors than profiles, duplicating a centroid");
            r.random_range(0..order.len())
        };
        let c = vectors[order[pick]].clone();
        for (i, &j) in order.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(&vectors[j], &c).as_f64());
        }
        centroids.push(c);
    }
    centroids
}

fn update_memberships<T: Scalar>(vectors: &[Vec<T>], centroids: &[Vec<T>], m: f64) -> Vec<Vec<T>> {
    let exponent = 1.0 / (m - 1.0);
    vectors
        .iter()
        .map(|x| {
            let d: Vec<f64> = centroids.iter().map(|c| squared_distance(x, c).as_f64()).collect();
            let zeros: Vec<usize> = (0..d.len()).filter(|&k| d[k] == 0.0).collect();
            if !zeros.is_empty() {
                let share = 1.0 / zeros.len() as f64;
                return (0..d.len())
                    .map(|k| T::of(if d[k] == 0.0 { share } else { 0.0 }))
                    .collect();
            }
            // u_k = 1 / sum_l (d_k / d_l)^(1/(m-1)) on squared distances.
            let inv: Vec<f64> = d.iter().map(|&dk| dk.powf(-exponent)).collect();
            let total: f64 = inv.iter().sum();
            inv.iter().map(|&v| T::of(v / total)).collect()
        })
        .collect()
}

fn update_centroids<T: Scalar>(vectors: &[Vec<T>], memberships: &[Vec<T>], old: &[Vec<T>], m: f64) -> Vec<Vec<T>> {
    let dim = vectors[0].len();
    (0..old.len())
        .map(|k| {
            let mut num = vec![0.0f64; dim];
            let mut den = 0.0f64;
            for (x, u) in vectors.iter().zip(memberships) {
                let w = u[k].as_f64().powf(m);
                den += w;
                for (n, &xi) in num.iter_mut().zip(x) {
                    *n += w * xi.as_f64();
                }
            }
            if den > 0.0 {
                num.into_iter().map(|v| T::of(v / den)).collect()
            } else {
                old[k].clone()
            }
        })
        .collect()
}

/// `sum_j sum_k u_jk^m * |x_j - c_k|^2`.
pub fn fuzzy_objective<T: Scalar>(vectors: &[Vec<T>], memberships: &[Vec<T>], centroids: &[Vec<T>], m: f64) -> T {
    let mut total = 0.0;
    for (x, u) in vectors.iter().zip(memberships) {
        for (c, &ujk) in centroids.iter().zip(u) {
            total += ujk.as_f64().powf(m) * squared_distance(x, c).as_f64();
        }
    }
    T::of(total)
}

/// Fuzzy c-means by alternating membership and centroid updates until the largest
/// membership change drops below the tolerance.
pub fn fuzzy_kmeans<T: Scalar>(vectors: &[Vec<T>], k: usize, config: &FuzzyConfig) -> Result<ProfileAssignment<T>> {
    let m = config.fuzzifier;
    if k == 0 || k > vectors.len() {
        return Err(Error::Config(format!("cannot form {k} profiles from {} vectors", vectors.len())));
    }
    if !(m > 1.0) {
        return Err(Error::Config("fuzzifier must exceed 1".into()));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape {
            context: "label vector",
            expected: dim,
            actual: v.len(),
        });
    }
    let mut centroids = seed_centroids(vectors, k, config.seed);
    let mut memberships = update_memberships(vectors, &centroids, m);
    let mut objective = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iter {
        centroids = update_centroids(vectors, &memberships, &centroids, m);
        objective.push(fuzzy_objective(vectors, &memberships, &centroids, m));
        let next = update_memberships(vectors, &centroids, m);
        let change = memberships
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()))
            .fold(0.0, f64::max);
        memberships = next;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| lexicographic(&centroids[a], &centroids[b]));
    let centroids: Vec<Vec<T>> = order.iter().map(|&i| centroids[i].clone()).collect();
    let memberships: Vec<Vec<T>> = memberships
        .iter()
        .map(|u| order.iter().map(|&i| u[i]).collect())
        .collect();
    let hard = memberships.iter().map(|u| argmax(u)).collect();
    Ok(ProfileAssignment {
        k,
        memberships,
        hard,
        centroids,
        objective,
        converged,
    })
}
