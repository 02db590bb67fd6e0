use coopclass_core::profiles::{fuzzy_kmeans, select_k, silhouette_score, FuzzyConfig};
use coopclass_core::rng::substream;
use proptest::prelude::*;
use rand::Rng;

fn points(values: &[f64]) -> Vec<Vec<f64>> {
    values.iter().map(|&v| vec![v]).collect()
}

// Textbook fuzzy c-means from fixed extreme-point centroids, iterated to a fixed point.
fn reference_fcm_1d(xs: &[f64], k: usize) -> Vec<usize> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut c: Vec<f64> = (0..k).map(|i| sorted[i * (sorted.len() - 1) / (k - 1).max(1)]).collect();
    let mut u = vec![vec![0.0; k]; xs.len()];
    for _ in 0..1000 {
        for (j, &x) in xs.iter().enumerate() {
            for a in 0..k {
                let da = (x - c[a]).powi(2).max(1e-300);
                u[j][a] = 1.0 / (0..k).map(|b| da / (x - c[b]).powi(2).max(1e-300)).sum::<f64>();
            }
        }
        for a in 0..k {
            let w: Vec<f64> = u.iter().map(|r| r[a] * r[a]).collect();
            c[a] = w.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / w.iter().sum::<f64>();
        }
    }
    u.iter()
        .map(|r| (0..k).fold(0, |best, a| if r[a] > r[best] { a } else { best }))
        .collect()
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn one_dimensional_two_groups() {
    let xs = [0.0, 0.1, 10.0, 10.1];
    let a = fuzzy_kmeans(&points(&xs), 2, &FuzzyConfig::default()).unwrap();
    assert_eq!(a.hard, vec![0, 0, 1, 1]);
    assert!(same_partition(&a.hard, &reference_fcm_1d(&xs, 2)));
}

#[test]
fn matches_reference_on_random_1d_mixtures() {
    let mut r = substream(42, 0);
    for _ in 0..20 {
        let xs: Vec<f64> = (0..30).map(|i| (i % 3) as f64 * 8.0 + r.random::<f64>()).collect();
        let a = fuzzy_kmeans(&points(&xs), 3, &FuzzyConfig::default()).unwrap();
        assert!(same_partition(&a.hard, &reference_fcm_1d(&xs, 3)));
    }
}

// Brute-force silhouette straight from the definition.
fn reference_silhouette(v: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<f64>, f64) {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let size = |p: usize| labels.iter().filter(|&&l| l == p).count();
    let s: Vec<f64> = (0..v.len())
        .map(|i| {
            let own = labels[i];
            if size(own) == 1 {
                return 0.0;
            }
            let mean_to = |p: usize| {
                let others: Vec<usize> = (0..v.len()).filter(|&j| j != i && labels[j] == p).collect();
                others.iter().map(|&j| dist(&v[i], &v[j])).sum::<f64>() / others.len() as f64
            };
            let a = mean_to(own);
            let b = (0..k)
                .filter(|&p| p != own && size(p) > 0)
                .map(mean_to)
                .fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect();
    let means: Vec<f64> = (0..k)
        .filter(|&p| size(p) > 0)
        .map(|p| (0..v.len()).filter(|&i| labels[i] == p).map(|i| s[i]).sum::<f64>() / size(p) as f64)
        .collect();
    let score = means.iter().sum::<f64>() / means.len() as f64;
    (s, score)
}

#[test]
fn silhouette_hand_example() {
    let v = points(&[0.0, 1.0, 10.0, 11.0]);
    let r = silhouette_score(&v, &[0, 0, 1, 1], 2).unwrap();
    // point 0: a = 1, b = (10 + 11) / 2
    assert!((r.per_vector[0] - 9.5 / 10.5).abs() < 1e-12);
    assert!((r.per_vector[0] - 0.9048).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn silhouette_matches_brute_force(
        n in 2usize..200,
        dim in 1usize..6,
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut r = substream(seed, 0);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.random::<f64>() * 10.0).collect()).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let got = silhouette_score(&v, &labels, k).unwrap();
        let (want, score) = reference_silhouette(&v, &labels, k);
        for (a, b) in got.per_vector.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(a));
        }
        prop_assert!((got.score - score).abs() < 1e-9);
    }

    #[test]
    fn memberships_and_objective(n in 4usize..40, k in 1usize..5, seed in any::<u64>()) {
        let k = k.min(n);
        let mut r = substream(seed, 1);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random::<f64>()).collect()).collect();
        let cfg = FuzzyConfig { seed, ..FuzzyConfig::default() };
        let a = fuzzy_kmeans(&v, k, &cfg).unwrap();
        for (u, &h) in a.memberships.iter().zip(&a.hard) {
            prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(u[h], best);
        }
        for w in a.objective.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "objective rose: {:?}", w);
        }
    }

    #[test]
    fn input_order_does_not_change_assignment(seed in any::<u64>()) {
        let mut r = substream(seed, 2);
        let v: Vec<Vec<f64>> = (0..24)
            .map(|i| vec![(i % 3) as f64 * 5.0 + r.random::<f64>(), r.random::<f64>()])
            .collect();
        let mut order: Vec<usize> = (0..v.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();
        let cfg = FuzzyConfig { seed: 5, ..FuzzyConfig::default() };
        let a = fuzzy_kmeans(&v, 3, &cfg).unwrap();
        let b = fuzzy_kmeans(&permuted, 3, &cfg).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert_eq!(a.hard[i], b.hard[pos]);
        }
    }
}

#[test]
fn select_k_finds_three_profiles() {
    // Three one-hot-like label-vector clouds in 30 dimensions.
    let mut r = substream(9, 0);
    let mut v = Vec::new();
    for p in 0..3 {
        for _ in 0..6 {
            let mut x = vec![0.0; 30];
            for (d, xd) in x.iter_mut().enumerate() {
                if d / 10 == p {
                    *xd = 1.0;
                }
                if r.random::<f64>() < 0.1 {
                    *xd = 1.0 - *xd;
                }
            }
            v.push(x);
        }
    }
    let sel = select_k(&v, &[2, 3, 4, 5, 6], &FuzzyConfig::default()).unwrap();
    assert_eq!(sel.best_k, 3);
    assert_eq!(sel.sweep.len(), 5);
    let (_, assignment) = sel.best();
    for p in 0..3 {
        let hard: Vec<usize> = assignment.hard[p * 6..(p + 1) * 6].to_vec();
        assert!(hard.iter().all(|&h| h == hard[0]));
    }
}

#[test]
fn select_k_ties_prefer_smallest() {
    // Identical points: every K scores the same.
    let v = vec![vec![1.0, 1.0]; 8];
    let sel = select_k(&v, &[2, 3, 4], &FuzzyConfig::default()).unwrap();
    assert_eq!(sel.best_k, 2);
}
