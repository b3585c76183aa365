use proptest::prelude::*;
use roml_cli::output::{parse_run_csv, run_csv};
use roml_core::metaalgo::{Algorithm, EvalPoint, Evaluation, TrainRecord, TrainTrace};
use roml_core::taskdist::Task;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1.0..1.0f64, Just(0.0), Just(-0.0)]
}

prop_compose! {
    fn record(dim: usize, extras: usize)(
        iteration in 0usize..100_000,
        frames in any::<u32>(),
        train in finite(),
        n_selected in 0usize..1000,
        n_learned in 0usize..1000,
        phi in prop::collection::vec(finite(), dim),
        eval in prop::option::of((finite(), finite(), prop::collection::vec(finite(), extras))),
        checksum in finite(),
    ) -> TrainRecord {
        TrainRecord {
            iteration,
            frames: frames as usize,
            train_mean_score: train,
            n_selected,
            n_learned,
            phi,
            eval: eval.map(|(mean, cvar, extras)| EvalPoint { mean, cvar, extras }),
            checksum,
        }
    }
}

fn traces() -> impl Strategy<Value = TrainTrace> {
    (0usize..4, 0usize..3).prop_flat_map(|(dim, extras)| {
        prop::collection::vec(record(dim, extras), 0..12).prop_map(move |records| TrainTrace {
            algorithm: Algorithm::Baseline,
            extra_names: (0..extras).map(|j| format!("extra{j}")).collect(),
            records,
            sampler: vec![],
            naive_memory: vec![],
            final_eval: Evaluation { mean: 0.0, cvar: 0.0, tasks: vec![Task::scalar(0.0)], scores: vec![0.0], extras: vec![] },
            wall_time_secs: 0.0,
        })
    })
}

proptest! {
    #[test]
    fn run_csv_is_lossless(trace in traces()) {
        let text = run_csv(&trace).unwrap();
        let (records, names) = parse_run_csv(&text).unwrap();
        prop_assert_eq!(&names, &trace.extra_names);
        prop_assert_eq!(records.len(), trace.records.len());
        for (a, b) in records.iter().zip(&trace.records) {
            // compare bitwise so -0.0 and 0.0 are told apart
            prop_assert_eq!(a.train_mean_score.to_bits(), b.train_mean_score.to_bits());
            prop_assert_eq!(a.checksum.to_bits(), b.checksum.to_bits());
            prop_assert_eq!(a, b);
        }
    }
}
