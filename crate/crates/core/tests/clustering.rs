mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unicom::clustering::{assign, kmeans_fit, kmeans_fit_matrix, objective, InitMethod, KMeansConfig};
use unicom::data::EmbeddingSet;
use unicom::linalg::Matrix;

use common::{exhaustive_optimum, same_partition};

fn set_from(rows: &[Vec<f64>]) -> EmbeddingSet {
    EmbeddingSet::from_matrix(&Matrix::from_rows(rows).unwrap(), None, None).unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    // values representable in f32, so the set stores them exactly
    (0..n)
        .map(|_| (0..d).map(|_| f64::from(rng.random_range(-1.0f32..1.0))).collect())
        .collect()
}

#[test]
fn six_point_blobs_reach_exhaustive_optimum() {
    let pts = [[0, 0], [2, 0], [10, 10], [10, 12], [-8, 9], [-9, 9]];
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] as f64, p[1] as f64]).collect();
    let (opt, opt_labels) = exhaustive_optimum(&pts, 3);
    let fit = kmeans_fit(&set_from(&rows), &KMeansConfig::new(3, 11)).unwrap();
    assert!(same_partition(&fit.assignments, &opt_labels));
    let exact = *opt.numer() as f64 / *opt.denom() as f64;
    assert_eq!(fit.final_objective(), exact);
}

#[test]
fn assignment_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = set_from(&random_rows(&mut rng, 20, 8));
    let mut crows = random_rows(&mut rng, 5, 8);
    // duplicated centroids force ties, which go to the lower index
    crows.push(crows[1].clone());
    crows.insert(0, crows[3].clone());
    let centroids = Matrix::from_rows(&crows).unwrap();

    let got = assign(&data, &centroids).unwrap();
    for i in 0..data.count() {
        let x = data.row_f64(i);
        let dists: Vec<f64> = crows
            .iter()
            .map(|c| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let want = dists.iter().position(|&v| v == min).unwrap();
        assert_eq!(got[i], want, "row {i}");
    }
}

#[test]
fn objective_matches_compensated_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows = random_rows(&mut rng, 300, 6);
    let data = set_from(&rows);
    let centroids = Matrix::from_rows(&random_rows(&mut rng, 7, 6)).unwrap();
    let labels: Vec<usize> = (0..300).map(|_| rng.random_range(0..7)).collect();

    // Neumaier summation of every squared term
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (i, &l) in labels.iter().enumerate() {
        for (a, b) in rows[i].iter().zip(centroids.row(l)) {
            let t = (a - b) * (a - b);
            let s = sum + t;
            comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
            sum = s;
        }
    }
    let oracle = (sum + comp) / 300.0;
    assert!((objective(&data, &centroids, &labels).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn k_equals_n_and_k_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows = random_rows(&mut rng, 12, 3);
    let data = set_from(&rows);
    for init in [InitMethod::Kmeanspp, InitMethod::RandomPoints] {
        let cfg = KMeansConfig {
            init,
            ..KMeansConfig::new(12, 2)
        };
        assert_eq!(kmeans_fit(&data, &cfg).unwrap().final_objective(), 0.0);
    }

    let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / 12.0).collect();
    let var: f64 = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .sum::<f64>()
        / 12.0;
    let one = kmeans_fit(&data, &KMeansConfig::new(1, 0)).unwrap();
    assert!((one.final_objective() - var).abs() < 1e-12);
}

#[test]
fn result_is_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = Matrix::from_rows(&random_rows(&mut rng, 400, 5)).unwrap();
    let cfg = KMeansConfig::new(9, 5);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| kmeans_fit_matrix(&x, &cfg).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn trace_never_increases(seed in any::<u64>(), n in 8usize..80, d in 1usize..6, k in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_rows(&random_rows(&mut rng, n, d)).unwrap();
        let k = k.min(n);
        let fit = kmeans_fit_matrix(&x, &KMeansConfig::new(k, seed)).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0], "trace rose from {} to {}", w[0], w[1]);
        }
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| fit.assignments[i] == c).collect();
            prop_assert!(!members.is_empty());
            for j in 0..d {
                let mean = members.iter().map(|&i| x.row(i)[j]).sum::<f64>() / members.len() as f64;
                prop_assert!((fit.centroids.row(c)[j] - mean).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn objective_is_invariant_to_point_order(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, n, 3);
        let centroids = Matrix::from_rows(&random_rows(&mut rng, 4, 3)).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let perm: Vec<usize> = rand::seq::index::sample(&mut rng, n, n).into_vec();
        let prow: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let plab: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let a = objective(&set_from(&rows), &centroids, &labels).unwrap();
        let b = objective(&set_from(&prow), &centroids, &plab).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}
