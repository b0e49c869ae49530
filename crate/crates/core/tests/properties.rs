use proptest::prelude::*;

use vfsl_core::baselines::{fit_blm, fit_centroids, fit_flm, AssignmentModel};
use vfsl_core::harness::sample_shots;
use vfsl_core::interpret::explain;
use vfsl_core::matrixio::{decode_vfeb, encode_vfeb, ShotSet};
use vfsl_core::sim_mapper::{score, SolverConfig};
use vfsl_core::{
    fit, l2_normalize, predict, similarity_matrix, DenseMatrix, EmbeddingMatrix, LabelVector,
    MappingModel, SimilarityMatrix,
};

const LAMBDAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

fn dense(rows: usize, cols: usize, data: Vec<f32>) -> DenseMatrix<f32> {
    DenseMatrix::new(rows, cols, data).unwrap()
}

/// `rows x dim` unit vectors.
fn unit_rows(rows: usize, dim: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    prop::collection::vec(-1.0f32..1.0, rows * dim).prop_filter_map("zero row", move |v| {
        l2_normalize(&EmbeddingMatrix::from_matrix(dense(rows, dim, v)).ok()?).ok()
    })
}

/// Labels over `c` classes where every class appears.
fn covering_labels(n: usize, c: usize) -> impl Strategy<Value = LabelVector> {
    prop::collection::vec(0..c, n).prop_map(move |mut v| {
        for (i, l) in v.iter_mut().take(c).enumerate() {
            *l = i;
        }
        LabelVector::new(v, c).unwrap()
    })
}

/// Similarity matrix with entries in [-1, 1] and covering labels.
fn ridge_instance() -> impl Strategy<Value = (SimilarityMatrix, LabelVector)> {
    (1usize..=10, 1usize..=32, 0usize..=54).prop_flat_map(|(c, k, extra)| {
        let n = c + extra;
        (
            prop::collection::vec(-1.0f32..1.0, n * k)
                .prop_map(move |v| SimilarityMatrix::from_matrix(dense(n, k, v)).unwrap()),
            covering_labels(n, c),
        )
    })
}

fn orthogonal(dim: usize, seed: Vec<f64>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for raw in seed.chunks_exact(dim) {
        let mut v = raw.to_vec();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}

fn rotate(m: &EmbeddingMatrix, q: &[Vec<f64>]) -> EmbeddingMatrix {
    let d = m.dim();
    let mut out = Vec::with_capacity(m.rows() * d);
    for i in 0..m.rows() {
        let row = m.row(i);
        out.extend(
            q.iter()
                .map(|qr| qr.iter().zip(row).map(|(a, &b)| a * b as f64).sum::<f64>() as f32),
        );
    }
    EmbeddingMatrix::new(dense(m.rows(), d, out), None, true).unwrap()
}

fn top_gap(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.len() < 2 {
        f64::INFINITY
    } else {
        sorted[0] - sorted[1]
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn similarity_is_symmetric_with_unit_diagonal(
        (a, b) in (1usize..6, 1usize..6, 2usize..9)
            .prop_flat_map(|(n, k, d)| (unit_rows(n, d), unit_rows(k, d)))
    ) {
        let ab = similarity_matrix(&a, &b).unwrap();
        let ba = similarity_matrix(&b, &a).unwrap();
        let t = ba.matrix().transpose();
        for (x, y) in ab.matrix().as_slice().iter().zip(t.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
        let aa = similarity_matrix(&a, &a).unwrap();
        for i in 0..a.rows() {
            prop_assert!((aa.matrix().get(i, i) - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn similarity_is_rotation_invariant(
        (a, b, q) in (1usize..6, 1usize..6, 2usize..7).prop_flat_map(|(n, k, d)| (
            unit_rows(n, d),
            unit_rows(k, d),
            prop::collection::vec(-1.0f64..1.0, d * d)
                .prop_filter("degenerate basis", move |s| {
                    orthogonal(d, s.clone()).iter().all(|v| v.iter().all(|x| x.is_finite()))
                })
                .prop_map(move |s| orthogonal(d, s)),
        ))
    ) {
        let before = similarity_matrix(&a, &b).unwrap();
        let after = similarity_matrix(&rotate(&a, &q), &rotate(&b, &q)).unwrap();
        for (x, y) in before.matrix().as_slice().iter().zip(after.matrix().as_slice()) {
            prop_assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn fitted_weights_are_stationary(
        (sims, labels) in ridge_instance(),
        lambda in prop::sample::select(LAMBDAS.to_vec()),
    ) {
        let model = fit(&sims, &labels, &SolverConfig::with_lambda(lambda)).unwrap();
        let l = sims.matrix().to_f64();
        let w = model.weights();
        let (n, k, c) = (l.rows(), l.cols(), labels.num_classes());
        // residual R = L W - Y
        let mut r = vec![0.0f64; n * c];
        for i in 0..n {
            for j in 0..c {
                let lw: f64 = (0..k).map(|p| l.get(i, p) * w.get(p, j)).sum();
                r[i * c + j] = lw - f64::from(u8::from(labels.get(i) == j));
            }
        }
        let (mut grad_max, mut lty_max) = (0.0f64, 0.0f64);
        for p in 0..k {
            for j in 0..c {
                let g: f64 = (0..n).map(|i| l.get(i, p) * r[i * c + j]).sum::<f64>() + lambda * w.get(p, j);
                let lty: f64 = (0..n).filter(|&i| labels.get(i) == j).map(|i| l.get(i, p)).sum();
                grad_max = grad_max.max(g.abs());
                lty_max = lty_max.max(lty.abs());
            }
        }
        prop_assert!(grad_max < 1e-5 * lty_max.max(1.0), "gradient {grad_max:e}");
    }

    #[test]
    fn stronger_regularization_shrinks_weights(
        (sims, labels) in ridge_instance(),
        (l1, l2) in (0.001f64..10.0, 0.001f64..10.0),
    ) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let w_lo = fit(&sims, &labels, &SolverConfig::with_lambda(lo)).unwrap();
        let w_hi = fit(&sims, &labels, &SolverConfig::with_lambda(hi)).unwrap();
        let (a, b) = (w_lo.weights().frobenius_norm(), w_hi.weights().frobenius_norm());
        prop_assert!(a >= b * (1.0 - 1e-12), "{a} < {b}");
    }

    #[test]
    fn scaling_a_row_scales_its_scores(
        (sims, labels) in ridge_instance(),
        factor in 0.01f32..100.0,
    ) {
        let model = fit(&sims, &labels, &SolverConfig::default()).unwrap();
        let row = sims.matrix().row(0).to_vec();
        let scaled: Vec<f32> = row.iter().map(|v| v * factor).collect();
        let k = row.len();
        let base = score(&model, &SimilarityMatrix::from_matrix(dense(1, k, row)).unwrap()).unwrap();
        let up = score(&model, &SimilarityMatrix::from_matrix(dense(1, k, scaled)).unwrap()).unwrap();
        let b = base.matrix().row(0);
        let u = up.matrix().row(0);
        let scale = b.iter().fold(1e-12f64, |m, v| m.max(v.abs())) * factor as f64;
        for (x, y) in b.iter().zip(u) {
            prop_assert!((x * factor as f64 - y).abs() <= 1e-5 * scale);
        }
        if top_gap(b) > 1e-6 {
            prop_assert_eq!(predict(&base), predict(&up));
        }
    }

    #[test]
    fn permuting_prompts_permutes_weights(
        ((sims, labels), perm_seed) in (ridge_instance(), any::<u64>()),
    ) {
        let k = sims.num_prompts();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut state = perm_seed;
        for i in (1..k).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let permuted = SimilarityMatrix::from_matrix(sims.matrix().select_cols(&perm)).unwrap();
        let config = SolverConfig::default();
        let w = fit(&sims, &labels, &config).unwrap();
        let wp = fit(&permuted, &labels, &config).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            for c in 0..labels.num_classes() {
                let (a, b) = (w.weights().get(old_row, c), wp.weights().get(new_row, c));
                prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
        let s = score(&w, &sims).unwrap();
        let sp = score(&wp, &permuted).unwrap();
        let (p, pp) = (predict(&s), predict(&sp));
        for i in 0..sims.num_images() {
            if top_gap(s.matrix().row(i)) > 1e-6 {
                prop_assert_eq!(p.get(i), pp.get(i));
            }
        }
    }

    #[test]
    fn flm_is_injective_and_blm_positive(
        (sims, labels) in ridge_instance().prop_filter("K < C", |(s, l)| s.num_prompts() >= l.num_classes()),
        smoothing in 0.01f64..4.0,
    ) {
        let flm = fit_flm(&sims, &labels).unwrap();
        let AssignmentModel::OneToOne { mapping, .. } = &flm else {
            return Err(TestCaseError::fail("expected one-to-one model"));
        };
        let mut used = mapping.clone();
        used.sort_unstable();
        used.dedup();
        prop_assert_eq!(used.len(), mapping.len());
        prop_assert_eq!(fit_flm(&sims, &labels).unwrap(), flm);

        let blm = fit_blm(&sims, &labels, smoothing).unwrap();
        prop_assert!(blm.weight_matrix().as_slice().iter().all(|&w| w > 0.0));
        let raw = fit_blm(&sims, &labels, 0.0).unwrap().weight_matrix();
        let mut counts = vec![0usize; raw.rows() * raw.cols()];
        for (i, &l) in labels.as_slice().iter().enumerate() {
            let row = sims.matrix().row(i);
            let top = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            counts[top * raw.cols() + l] += 1;
        }
        for (w, n) in raw.as_slice().iter().zip(counts) {
            prop_assert_eq!(n == 0, *w == 0.0);
        }
    }

    #[test]
    fn shots_are_deterministic_and_disjoint_from_test(
        (labels, shots) in (1usize..6, 1usize..5, 0usize..6).prop_flat_map(|(c, shots, extra)| {
            let per_class = shots + extra;
            (
                Just(LabelVector::new((0..c * per_class).map(|i| i % c).collect(), c).unwrap()),
                Just(shots),
            )
        }),
        seed in any::<u64>(),
    ) {
        let a = sample_shots(&labels, shots, seed).unwrap();
        prop_assert_eq!(&a, &sample_shots(&labels, shots, seed).unwrap());
        let test = a.complement(labels.len());
        prop_assert_eq!(test.len() + a.len(), labels.len());
        prop_assert!(test.iter().all(|i| !a.indices().contains(i)));
        prop_assert!(a.labels().class_counts().iter().all(|&n| n == shots));
    }

    #[test]
    fn one_shot_centroids_are_the_shots(features in (1usize..6, 2usize..9).prop_flat_map(|(c, d)| unit_rows(c, d))) {
        let c = features.rows();
        let labels = LabelVector::new((0..c).collect(), c).unwrap();
        let shots = ShotSet::new((0..c).collect(), labels, 1).unwrap();
        let model = fit_centroids(&features, &shots).unwrap();
        for (x, y) in model.centroids().matrix().as_slice().iter().zip(features.matrix().as_slice()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn explanations_follow_weights(
        (k, c, weights) in (1usize..12, 1usize..5)
            .prop_flat_map(|(k, c)| (Just(k), Just(c), prop::collection::vec(-1.0f64..1.0, k * c))),
        top_k in 1usize..6,
    ) {
        let names: Vec<String> = (0..k).map(|i| format!("p{i}")).collect();
        let w = DenseMatrix::new(k, c, weights).unwrap();
        let model = MappingModel::new(w.clone(), 1.0, Some(names.clone())).unwrap();
        let first = explain(&model, top_k).unwrap();
        prop_assert_eq!(&first, &explain(&model, top_k).unwrap());

        let reversed: Vec<usize> = (0..k).rev().collect();
        let rmodel = MappingModel::new(
            w.select_rows(&reversed),
            1.0,
            Some(reversed.iter().map(|&i| names[i].clone()).collect()),
        )
        .unwrap();
        let second = explain(&rmodel, top_k).unwrap();
        for (class, (a, b)) in first.iter().zip(&second).enumerate() {
            let column = w.column(class);
            let best = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(a.entries[0].weight, best);
            prop_assert_eq!(a.entries[0].prompt_index, column.iter().position(|&v| v == best).unwrap());
            prop_assert_eq!(a.entries.len(), top_k.min(k));
            // names follow their prompt; indices follow the new order
            for (ea, eb) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(ea.weight, eb.weight);
                if column.iter().filter(|&&v| v == ea.weight).count() == 1 {
                    prop_assert_eq!(&ea.prompt_name, &eb.prompt_name);
                    prop_assert_eq!(eb.prompt_index, k - 1 - ea.prompt_index);
                }
            }
        }
    }

    #[test]
    fn vfeb_round_trip_is_bit_exact(
        (rows, cols, data, names) in (1usize..8, 1usize..8).prop_flat_map(|(r, c)| (
            Just(r),
            Just(c),
            prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO, r * c),
            prop::option::of(prop::collection::vec("[^\n]{0,12}", r)),
        ))
    ) {
        let m = EmbeddingMatrix::new(dense(rows, cols, data), names, false).unwrap();
        let back = decode_vfeb(&encode_vfeb(&m).unwrap()).unwrap();
        let bits = |m: &EmbeddingMatrix| m.matrix().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&m), bits(&back));
        prop_assert_eq!(m.names(), back.names());
    }
}
