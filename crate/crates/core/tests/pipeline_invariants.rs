use std::sync::OnceLock;

use scglove::biasmetrics::*;
use scglove::cooccurrence::*;
use scglove::corpus::*;
use scglove::glove::*;
use scglove::influence::*;
use scglove::oracle::*;
use scglove::scglove::*;
use scglove::synthetic::*;
use scglove::Error;

struct Fixture {
    vocab: Vocabulary,
    shards: Vec<DocCoocShard>,
    x: CooccurrenceMatrix,
    train: TrainConfig,
    state: TrainState,
    spec: WeatSpec,
    beta: DiffBiasVector,
}

impl Fixture {
    fn model(&self) -> &EmbeddingModel {
        &self.state.model
    }

    fn store(&self) -> InMemoryShards {
        InMemoryShards::new(self.shards.clone()).unwrap()
    }

    fn weat(&self) -> ResolvedWeat {
        ResolvedWeat::resolve(&self.spec, &self.vocab)
    }

    fn debias(&self, beta: &DiffBiasVector, config: &ScConfig) -> ScOutcome {
        sc_debias(
            self.model(),
            &self.vocab,
            &self.x,
            &self.store(),
            &self.spec,
            beta,
            self.train.weighting(),
            config,
        )
        .unwrap()
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let syn = generate(&SyntheticConfig {
            num_docs: 40,
            ..Default::default()
        });
        let mut raw = syn.documents.clone();
        // doc 40 repeats doc 3
        raw.push(raw[3].clone());
        let docs = filter_documents(tokenize_documents(&raw), 100, 10_000).unwrap();
        let vocab = Vocabulary::build(&docs, 3);
        let shards = build_shards(&docs, &vocab, &CoocConfig::default()).unwrap();
        let x = merge_shards(&shards, vocab.len()).unwrap();
        let train = TrainConfig {
            dim: 10,
            epochs: 40,
            ..Default::default()
        };
        let state = train_state(&x, &train).unwrap();
        let spec = WeatSpec::weat1();
        let weat = ResolvedWeat::resolve(&spec, &vocab);
        let store = InMemoryShards::new(shards.clone()).unwrap();
        let out = differential_bias(&state.model, &x, &store, &weat, train.weighting(), &InfluenceConfig::default()).unwrap();
        Fixture {
            vocab,
            shards,
            x,
            train,
            state,
            spec,
            beta: out.beta,
        }
    })
}

fn assert_untouched_outside_weat(before: &EmbeddingModel, after: &EmbeddingModel, weat_ids: &[u32]) {
    assert_eq!(before.u, after.u);
    assert_eq!(before.b, after.b);
    assert_eq!(before.c, after.c);
    for i in 0..before.vocab_size() {
        if !weat_ids.contains(&(i as u32)) {
            assert_eq!(before.word(i), after.word(i), "row {i} moved");
        }
    }
}

#[test]
fn shards_sum_to_the_global_matrix() {
    let f = fixture();
    let mut sums = std::collections::HashMap::new();
    for s in &f.shards {
        for e in &s.entries {
            *sums.entry((e.i, e.j)).or_insert(0.0) += e.value;
        }
    }
    assert_eq!(sums.len(), f.x.nnz());
    for e in f.x.entries() {
        let s = sums[&(e.i, e.j)];
        assert!((s - e.value).abs() <= 1e-12 * e.value.max(1.0));
    }
    assert!(f.x.is_symmetric());
}

#[test]
fn differential_bias_reads_each_shard_once() {
    let f = fixture();
    let store = f.store();
    let out = differential_bias(f.model(), &f.x, &store, &f.weat(), f.train.weighting(), &InfluenceConfig::default()).unwrap();
    assert!(store.read_counts().iter().all(|&c| c == 1));
    assert!(out.stats.single_pass());
    assert!(out.stats.sub_quadratic());
    assert_eq!(out.stats.num_docs, f.shards.len());
    assert_eq!(out.beta, f.beta);
}

#[test]
fn docs_without_weat_words_have_zero_beta() {
    let f = fixture();
    let ids = f.weat().word_ids();
    for s in &f.shards {
        if !s.row_ids().any(|i| ids.contains(&i)) {
            assert_eq!(f.beta.beta[s.doc_id], 0.0);
        }
    }
}

#[test]
fn duplicate_documents_get_equal_beta() {
    let f = fixture();
    let last = f.shards.len() - 1;
    assert_eq!(f.shards[3].entries, f.shards[last].entries);
    assert_eq!(f.beta.beta[3], f.beta.beta[last]);
}

#[test]
fn zero_beta_gamma_and_prefactor_are_no_ops() {
    let f = fixture();
    let zero = DiffBiasVector {
        spec_name: "weat1".into(),
        beta: vec![0.0; f.shards.len()],
    };
    assert_eq!(&f.debias(&zero, &ScConfig::default()).model, f.model());
    let gamma0 = ScConfig {
        gamma: 0.0,
        ..Default::default()
    };
    assert_eq!(&f.debias(&f.beta, &gamma0).model, f.model());
    let pref0 = ScConfig {
        prefactor: Prefactor::Value(0.0),
        ..Default::default()
    };
    assert_eq!(&f.debias(&f.beta, &pref0).model, f.model());
}

#[test]
fn only_weat_word_vectors_move() {
    let f = fixture();
    let ids = f.weat().word_ids();
    for order in [UpdateOrder::Sequential, UpdateOrder::Batch] {
        let cfg = ScConfig {
            update_order: order,
            ..Default::default()
        };
        let out = f.debias(&f.beta, &cfg);
        assert_ne!(&out.model, f.model());
        assert_untouched_outside_weat(f.model(), &out.model, &ids);
        assert!(out.stats.max_reads_per_shard <= 1);
    }
}

#[test]
fn single_doc_batch_equals_sequential() {
    let f = fixture();
    let k = f.beta.beta.iter().position(|b| *b != 0.0).unwrap();
    let mut beta = vec![0.0; f.shards.len()];
    beta[k] = f.beta.beta[k];
    let beta = DiffBiasVector {
        spec_name: "weat1".into(),
        beta,
    };
    let seq = f.debias(&beta, &ScConfig::default());
    let batch = f.debias(
        &beta,
        &ScConfig {
            update_order: UpdateOrder::Batch,
            ..Default::default()
        },
    );
    assert_eq!(seq.model, batch.model);
}

#[test]
fn unit_beta_removes_the_document() {
    let f = fixture();
    let k = f.beta.beta.iter().position(|b| *b != 0.0).unwrap();
    let mut beta = vec![0.0; f.shards.len()];
    beta[k] = 1.0;
    let beta = DiffBiasVector {
        spec_name: "weat1".into(),
        beta,
    };
    let out = f.debias(&beta, &ScConfig::default());
    let shard = &f.shards[k];
    let cfg = InfluenceConfig::default();
    for i in f.weat().word_ids() {
        let row = f.x.row_vec(i);
        let expected = if shard.row(i).is_empty() {
            f.model().word(i as usize).to_vec()
        } else {
            let ctx = PointwiseContext::new(f.model(), i, row.clone(), f.train.weighting(), &cfg).unwrap();
            approximate_vector(&ctx, &perturb_row(&row, shard, i, 1.0)).unwrap()
        };
        assert_eq!(out.model.word(i as usize), &expected[..], "word {i}");
    }
}

#[test]
fn beta_length_must_match_corpus() {
    let f = fixture();
    let store = f.store();
    let run = |n: usize| {
        let beta = DiffBiasVector {
            spec_name: "weat1".into(),
            beta: vec![0.1; n],
        };
        sc_debias(f.model(), &f.vocab, &f.x, &store, &f.spec, &beta, f.train.weighting(), &ScConfig::default())
    };
    assert!(matches!(run(f.shards.len() + 1), Err(Error::UnknownDocument(_))));
    assert!(matches!(run(f.shards.len() - 1), Err(Error::Config(_))));
}

#[test]
fn brute_force_without_epochs_is_zero() {
    let f = fixture();
    let cfg = BruteForceConfig {
        epochs: 0,
        paired_control: true,
    };
    let bf = brute_force_diffbias(&f.state, &f.x, &f.store(), &f.weat(), &f.train, &cfg, &[0, 1, 2]).unwrap();
    assert_eq!(bf.len(), 3);
    assert!(bf.iter().all(|b| b.beta == 0.0));
}

#[test]
fn independent_weat_agrees_on_trained_model() {
    let f = fixture();
    let a = effect_size(f.model(), &f.vocab, &f.spec).unwrap();
    let b = independent_weat(f.model(), &f.vocab, &f.spec).unwrap();
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn beta_is_continuous_in_removal_scale() {
    let f = fixture();
    let weat = f.weat();
    let k = f.beta.beta.iter().position(|b| *b != 0.0).unwrap();
    let shard = &f.shards[k];
    let cfg = InfluenceConfig::default();
    let beta_at = |scale: f64| {
        let mut replaced = std::collections::HashMap::new();
        for i in weat.word_ids() {
            if shard.row(i).is_empty() {
                continue;
            }
            let row = f.x.row_vec(i);
            let ctx = PointwiseContext::new(f.model(), i, row.clone(), f.train.weighting(), &cfg).unwrap();
            replaced.insert(i, approximate_vector(&ctx, &perturb_row(&row, shard, i, scale)).unwrap());
        }
        let overlay = Overlay {
            base: f.model(),
            replaced: &replaced,
        };
        effect_size_resolved(f.model(), &weat).unwrap() - effect_size_resolved(&overlay, &weat).unwrap()
    };
    assert_eq!(beta_at(0.0), 0.0);
    assert!((beta_at(1.0) - f.beta.beta[k]).abs() < 1e-12);
    let small = beta_at(1e-6).abs();
    assert!(small < 1e-3 * f.beta.beta[k].abs().max(1e-3), "{small}");
}
