//! Compares the dispatched batch map (rayon when the `parallel` feature is
//! on) against the always-sequential fallback on the two batch-shaped
//! workloads that dominate training and evaluation: per-example gradients
//! and constrained greedy decoding.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use tlforce_core::grammar::Grammar;
use tlforce_core::ltl::{TokenId, Vocab};
use tlforce_core::model::{ModelDims, ModelParams, TrainExample, TrainMode};
use tlforce_core::par;

fn batch(grammar: &Grammar) -> Vec<TrainExample> {
    use tlforce_core::ltl::parse_formula;
    let specs = [
        (vec![1usize, 2, 3, 4], "◇ ( prop_1 ∧ prop_2 )"),
        (vec![2, 5, 1], "□ ¬ prop_3"),
        (vec![3, 3, 6], "( prop_1 ∪ ◇ prop_2 )"),
        (vec![4, 1, 2, 5], "¬ ( prop_2 ∨ prop_4 )"),
        (vec![5, 6], "○ prop_5"),
        (vec![6, 2, 4], "□ ( prop_1 ⇒ prop_3 )"),
        (vec![1, 5, 3], "◇ ◇ prop_2"),
        (vec![2, 6, 6, 1], "( prop_3 ∧ □ prop_1 )"),
    ];
    specs
        .iter()
        .map(|(src, tl)| TrainExample {
            src: src.clone(),
            tgt: parse_formula(grammar.vocab(), tl)
                .unwrap()
                .target_ids(grammar.vocab()),
        })
        .collect()
}

fn bench_gradients(c: &mut Criterion) {
    let grammar = Grammar::new(Vocab::new(5));
    let examples = batch(&grammar);
    let dims = ModelDims {
        src_vocab: 8,
        vocab: grammar.vocab().size(),
        d_emb: 16,
        d_hidden: 32,
        max_len: 64,
    };
    let params = ModelParams::init(dims, 7);
    let mut group = c.benchmark_group("batch_gradient");
    group.bench_function("dispatched", |b| {
        b.iter_batched(
            || examples.clone(),
            |ex| {
                par::map(&ex, |e| {
                    params
                        .example_gradient(e, TrainMode::GrammarForced, &grammar, 0)
                        .unwrap()
                })
            },
            BatchSize::SmallInput,
        )
    });
    group.bench_function("sequential", |b| {
        b.iter_batched(
            || examples.clone(),
            |ex| {
                par::map_seq(&ex, |e| {
                    params
                        .example_gradient(e, TrainMode::GrammarForced, &grammar, 0)
                        .unwrap()
                })
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_decode(c: &mut Criterion) {
    let grammar = Grammar::new(Vocab::new(5));
    let dims = ModelDims {
        src_vocab: 8,
        vocab: grammar.vocab().size(),
        d_emb: 16,
        d_hidden: 32,
        max_len: 64,
    };
    let params = ModelParams::init(dims, 11);
    let sources: Vec<Vec<TokenId>> = (0..16)
        .map(|i| vec![(i % 7) + 1, ((i * 3) % 7) + 1, ((i * 5) % 7) + 1])
        .collect();
    let mut group = c.benchmark_group("batch_decode");
    group.bench_function("dispatched", |b| {
        b.iter(|| {
            par::map(&sources, |src| {
                params.decode_tokens(src, &grammar, true, 64).unwrap()
            })
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            par::map_seq(&sources, |src| {
                params.decode_tokens(src, &grammar, true, 64).unwrap()
            })
        })
    });
    group.finish();
}

criterion_group!(benches, bench_gradients, bench_decode);
criterion_main!(benches);
