use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use logq_bench::Fixture;
use logq_core::corpus::{ingest_pairs, sample_walk};
use logq_core::{best_splitter, build_corpus, evaluate, play_episode, synthetic, Mode, TrainConfig, Trainer};

fn episodes(c: &mut Criterion) {
    let f = Fixture::new(100, 32);
    let sets = f.game_sets(64);
    let mut g = c.benchmark_group("episode");
    g.bench_function("eval", |b| {
        b.iter(|| play_episode(&f.agents, black_box(&sets[0]), 1, &f.game, Mode::Eval, 3).unwrap())
    });
    g.bench_function("train", |b| {
        b.iter(|| {
            play_episode(
                &f.agents,
                black_box(&sets[0]),
                1,
                &f.game,
                Mode::Train { sampled_bits: false },
                3,
            )
            .unwrap()
        })
    });
    g.bench_function("evaluate_16_sets", |b| {
        b.iter(|| evaluate(&f.agents, &sets[..16], &f.game, "dev").unwrap())
    });
    g.finish();
}

fn training(c: &mut Criterion) {
    let f = Fixture::new(100, 32);
    let sets = f.game_sets(256);
    let trainer = Trainer::new(f.agents.clone(), f.game.clone(), TrainConfig::default());
    let batch = trainer.schedule(0, sets.len());
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("batch_gradients_32", |b| {
        b.iter(|| trainer.batch_gradients(&batch, &sets).unwrap())
    });
    g.bench_function("train_step_32", |b| {
        b.iter_batched(
            || trainer.clone(),
            |mut t| t.train_step(&sets, None).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn corpus(c: &mut Criterion) {
    let pairs = synthetic::corpus_pairs(4000, 1);
    let graph = ingest_pairs(&pairs).unwrap();
    let table = synthetic::corpus_embeddings(16, 1);
    let mut g = c.benchmark_group("corpus");
    g.bench_function("sample_walk", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            sample_walk(&graph, seed).unwrap()
        })
    });
    g.sample_size(10);
    g.bench_function("build_1000_sets", |b| {
        b.iter(|| build_corpus(&graph, 1000, &table, 7).unwrap())
    });
    g.finish();
}

fn baseline(c: &mut Criterion) {
    let f = Fixture::new(256, 4);
    let sets = f.sw_sets(1);
    c.bench_function("baseline/best_splitter_d256", |b| {
        b.iter(|| best_splitter(black_box(sets[0]), &f.table))
    });
}

criterion_group!(benches, episodes, training, corpus, baseline);
criterion_main!(benches);
