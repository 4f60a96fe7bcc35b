use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scglove::cooccurrence::*;
use scglove::corpus::*;
use scglove::glove::*;
use scglove::influence::*;
use scglove::linalg::DenseMatrix;
use scglove::oracle::*;

const WORDS: [&str; 8] = ["ant", "bee", "cat", "dog", "elk", "fox", "gnu", "hen"];

fn random_docs(seed: u64, n: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let len = rng.gen_range(1..40);
            // a few rare tokens that will fall below the count threshold
            let tokens = (0..len)
                .map(|_| match rng.gen_range(0..20) {
                    0 => format!("rare{}", rng.gen_range(0..50)),
                    _ => WORDS[rng.gen_range(0..WORDS.len())].to_owned(),
                })
                .collect();
            Document::new(k, tokens)
        })
        .collect()
}

/// Σ X over in-vocabulary position pairs, straight from the definition.
fn brute_force_mass(docs: &[Document], vocab: &Vocabulary, window: usize) -> f64 {
    let mut total = 0.0;
    for d in docs {
        for p in 0..d.tokens.len() {
            for q in p + 1..d.tokens.len().min(p + window + 1) {
                if vocab.id(&d.tokens[p]).is_some() && vocab.id(&d.tokens[q]).is_some() {
                    total += 2.0 / (q - p) as f64;
                }
            }
        }
    }
    total
}

fn random_instance(seed: u64, dim: usize) -> (EmbeddingModel, u32, SparseRow) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = 3 * dim;
    let mut m = EmbeddingModel::random(v, dim, &mut rng);
    for x in m.u.iter_mut().chain(m.w.iter_mut()) {
        *x *= 10.0;
    }
    let mut row = SparseRow::new();
    for j in 0..v as u32 {
        if rng.gen_bool(0.8) {
            row.push((j, rng.gen_range(0.2..300.0)));
        }
    }
    (m, rng.gen_range(0..v as u32), row)
}

fn zero_ridge() -> InfluenceConfig {
    InfluenceConfig {
        ridge: Some(0.0),
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cooccurrence_shards_sum_symmetry_and_mass(seed in 0u64..100_000, window in 1usize..6) {
        let docs = random_docs(seed, 6);
        let vocab = Vocabulary::build(&docs, 2);
        let cfg = CoocConfig { window, ..Default::default() };
        let shards = build_shards(&docs, &vocab, &cfg).unwrap();
        let x = merge_shards(&shards, vocab.len()).unwrap();
        prop_assert!(x.is_symmetric());
        for e in x.entries() {
            prop_assert_eq!(x.get(e.j, e.i), Some(e.value));
        }
        // merging in reverse order gives the same matrix
        let rev = merge_shards(shards.iter().rev(), vocab.len()).unwrap();
        prop_assert_eq!(&rev, &x);
        let expected = brute_force_mass(&docs, &vocab, window);
        prop_assert!((x.total_mass() - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn vocabulary_is_deterministic_and_bounded(seed in 0u64..100_000, min_count in 1u64..6) {
        let docs = random_docs(seed, 5);
        let a = Vocabulary::build(&docs, min_count);
        let b = Vocabulary::build(&docs, min_count);
        prop_assert_eq!(&a, &b);
        let tokens: u64 = docs.iter().map(|d| d.len() as u64).sum();
        prop_assert!(a.total_count() <= tokens);
        for id in 0..a.len() as u32 {
            prop_assert!(a.count(id) >= min_count);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        a.save(&path).unwrap();
        prop_assert_eq!(Vocabulary::load(&path).unwrap(), a);
    }

    #[test]
    fn pointwise_derivatives_match_central_differences(seed in 0u64..100_000) {
        let (m, i, row) = random_instance(seed, 6);
        prop_assume!(!row.is_empty());
        let ctx = PointwiseContext::new(&m, i, row, Weighting::default(), &zero_ridge()).unwrap();
        let w0 = ctx.current_vector().to_vec();
        let g = pointwise_gradient(&ctx, &w0);
        let h = pointwise_hessian(&ctx);
        for d in 0..w0.len() {
            let step = 1e-5 * w0[d].abs().max(1.0);
            let (mut up, mut down) = (w0.clone(), w0.clone());
            up[d] += step;
            down[d] -= step;
            let fd = (ctx.loss(&up) - ctx.loss(&down)) / (2.0 * step);
            prop_assert!((fd - g[d]).abs() / g[d].abs().max(1e-3) < 1e-5, "gradient {d}: {} vs {fd}", g[d]);
            let (gu, gd) = (pointwise_gradient(&ctx, &up), pointwise_gradient(&ctx, &down));
            for c in 0..w0.len() {
                let fd = (gu[c] - gd[c]) / (2.0 * step);
                let exact = h[(c, d)];
                prop_assert!((fd - exact).abs() / exact.abs().max(1e-3) < 1e-4, "hessian ({c},{d}): {exact} vs {fd}");
            }
        }
    }

    #[test]
    fn update_from_optimum_is_a_newton_step(seed in 0u64..100_000, keep in 0.05f64..0.95) {
        let (mut m, i, row) = random_instance(seed, 5);
        prop_assume!(row.len() >= 8);
        let cfg = zero_ridge();
        let start = PointwiseContext::new(&m, i, row.clone(), Weighting::default(), &cfg).unwrap();
        let w_star = closed_form_resolve(&start, &row).unwrap();
        m.set_word(i as usize, &w_star);
        let ctx = PointwiseContext::new(&m, i, row.clone(), Weighting::default(), &cfg).unwrap();
        let perturbed: SparseRow = row.iter().enumerate().map(|(n, &(j, x))| (j, if n % 3 == 0 { keep * x } else { x })).collect();
        let cond = row_hessian(&m, &perturbed, Weighting::default()).condition_number();
        prop_assume!(cond < 1e8);
        let approx = approximate_vector(&ctx, &perturbed).unwrap();
        let exact = closed_form_resolve(&ctx, &perturbed).unwrap();
        prop_assert!(relative_l2(&approx, &exact) < 1e-6, "cond {cond}");
    }

    #[test]
    fn original_row_is_an_exact_identity(seed in 0u64..100_000) {
        let (m, i, row) = random_instance(seed, 4);
        let ctx = PointwiseContext::new(&m, i, row.clone(), Weighting::default(), &InfluenceConfig::default()).unwrap();
        prop_assert_eq!(approximate_vector(&ctx, &row).unwrap(), m.word(i as usize).to_vec());
    }

    #[test]
    fn comparison_metrics_stay_in_range(xs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        let r = spearman(&a, &b);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!((spearman(&a, &a) - 1.0).abs() < 1e-12 || a.iter().all(|x| *x == a[0]));
        if let Some(s) = sign_agreement_above_median(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}

#[test]
fn hessian_is_symmetric_and_positive() {
    let (m, i, row) = random_instance(7, 6);
    let h: DenseMatrix = row_hessian(&m, &row, Weighting::default());
    assert!(h.is_symmetric());
    assert!(h.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
    let ctx = PointwiseContext::new(&m, i, row, Weighting::default(), &InfluenceConfig::default()).unwrap();
    // the default ridge is a tiny positive shift
    let shifted = pointwise_hessian(&ctx);
    let gap = shifted.trace() - h.trace();
    assert!(gap > 0.0 && gap < 1e-5 * h.trace());
}
