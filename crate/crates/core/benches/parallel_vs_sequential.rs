use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fbrep::envs::{Env, EnvId};
use fbrep::eval::{evaluate, sample_eval_goals};
use fbrep::exec::Exec;
use fbrep::model::{FbArch, FbModel};
use fbrep::train::EvalConfig;
use fbrep::RandomStream;

fn bench_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for id in [EnvId::DiscreteMaze, EnvId::ContinuousMaze] {
        let env = Env::from_id(id);
        let mut rng = RandomStream::new(0);
        let model = FbModel::new(env.clone(), &FbArch::new(100, &[64, 64, 64]), &mut rng);
        let goals = sample_eval_goals(&env, 20, &mut rng);
        let config = EvalConfig {
            starts_per_goal: 2,
            ..EvalConfig::for_env(id)
        };
        for exec in [Exec::Sequential, Exec::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), id), &exec, |b, &exec| {
                b.iter(|| evaluate(&model, &goals, &config, 0.99, exec, &mut RandomStream::new(1)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_eval);
criterion_main!(benches);
