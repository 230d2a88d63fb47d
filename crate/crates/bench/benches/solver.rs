use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use edgequery::selection::{greedy_single_stage, EvalConfig, LegalEdgeSets};
use edgequery::matching::{pack, structure_values};
use edgequery::{EdgeSet, Evaluator, PolicyKind};
use edgequery_bench::random_instance;

fn packing(c: &mut Criterion) {
    let mut group = c.benchmark_group("pack");
    for n in [30, 50, 75] {
        let inst = random_instance(n, 0.03, 1, 20);
        let m = inst.edge_count();
        let (q, r) = (EdgeSet::empty(m), EdgeSet::empty(m));
        let values = structure_values(PolicyKind::FailureAware, &inst.graph, &inst.structures, &inst.spec, &q, &r);
        group.bench_function(format!("n{n}_s{}", inst.structures.len()), |b| b.iter(|| pack(&inst.structures, &values)));
    }
    group.finish();
}

fn objective(c: &mut Criterion) {
    let inst = random_instance(50, 0.02, 1, 12);
    let edges: Vec<usize> = inst.relevant_edges().to_vec();
    let m = inst.edge_count();
    let mut group = c.benchmark_group("objective");
    assert!(edges.len() >= 12, "instance has too few relevant edges");
    for (label, k) in [("exact_8", 8), ("sampled_12", 12)] {
        let q = EdgeSet::from_edges(m, edges.iter().copied().take(k));
        // a fresh evaluator per batch so the memo does not turn this into a lookup
        group.bench_function(label, |b| {
            b.iter_batched(
                || Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default()),
                |eval| eval.objective(&q),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn greedy(c: &mut Criterion) {
    let inst = random_instance(50, 0.01, 1, 5);
    let legal = LegalEdgeSets::with_budget(&inst.graph, 5);
    let mut group = c.benchmark_group("greedy");
    group.sample_size(10);
    group.bench_function("n50_budget5", |b| {
        b.iter(|| {
            let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
            greedy_single_stage(&eval, &legal)
        })
    });
    group.finish();
}

criterion_group!(benches, packing, objective, greedy);
criterion_main!(benches);
