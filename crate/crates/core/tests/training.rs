use pair_grpo::analysis::{stability_metrics, variance_estimate, VarianceOptions};
use pair_grpo::envs::{expected_return, EnvSpec, PreferenceBandit};
use pair_grpo::par::Exec;
use pair_grpo::trainer::{train, train_many, train_with, Method, TrainConfig};
use pair_grpo::{HyperParams, TabularPolicy};

fn config(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        epochs: 10,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_run() {
    for m in Method::ALL {
        let a = train(&config(m, 3)).unwrap();
        let b = train(&config(m, 3)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.policy.logits(), b.policy.logits());
    }
}

#[test]
fn parallel_and_sequential_agree_bitwise() {
    let configs: Vec<TrainConfig> = Method::ALL
        .iter()
        .flat_map(|&m| (0..4).map(move |s| config(m, s)))
        .collect();
    let seq = train_many(&configs, Exec::Sequential);
    let par = train_many(&configs, Exec::Parallel);
    for (a, b) in seq.iter().zip(&par) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        assert_eq!(a.records, b.records);
        assert_eq!(a.policy.logits(), b.policy.logits());
    }

    let env = PreferenceBandit::from_spec(&EnvSpec::default()).unwrap();
    let policy = env.initial_policy();
    let hp = HyperParams::default();
    let opts = |exec| VarianceOptions {
        n_samples: 2000,
        delta: hp.delta0,
        hp: hp.clone(),
        seed: 5,
        replicate: 1,
        exec,
    };
    for m in Method::ALL {
        let s = variance_estimate(m, &policy, &env, &opts(Exec::Sequential)).unwrap();
        let p = variance_estimate(m, &policy, &env, &opts(Exec::Parallel)).unwrap();
        assert_eq!(s.trace_variance.to_bits(), p.trace_variance.to_bits());
        assert_eq!(s.mean.as_slice(), p.mean.as_slice());
    }
}

#[test]
fn records_track_the_observed_policy() {
    let cfg = config(Method::HardPair, 1);
    let env = PreferenceBandit::from_spec(&cfg.env).unwrap();
    let mut seen = Vec::new();
    let run = train_with(&cfg, |r, p| {
        assert_eq!(r.expected_return, expected_return(&env, p).unwrap());
        seen.push(p.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(seen.len(), cfg.epochs);
    assert_eq!(seen.last().unwrap().logits(), run.policy.logits());
    for (t, r) in run.records.iter().enumerate() {
        assert_eq!(r.epoch, t);
        assert_eq!(r.delta_t, Some(0.02 * 0.98f64.powi(t as i32)));
        assert!(r.wall_ms.is_none());
    }
}

#[test]
fn only_hard_pair_records_delta() {
    for m in [Method::Grpo, Method::SoftPair] {
        let run = train(&config(m, 0)).unwrap();
        assert!(run.records.iter().all(|r| r.delta_t.is_none()));
    }
}

#[test]
fn observer_error_aborts_with_partial_records() {
    let cfg = config(Method::SoftPair, 0);
    let failure = train_with(&cfg, |r, _| {
        if r.epoch == 4 {
            Err(pair_grpo::Error::Evaluation("stop".into()))
        } else {
            Ok(())
        }
    })
    .unwrap_err();
    assert_eq!(failure.epoch, 4);
    // epoch 4 itself completed before the observer rejected it
    assert_eq!(failure.records.len(), 5);
}

#[test]
fn checkpoint_round_trip_after_training() {
    let run = train(&config(Method::Grpo, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.csv");
    run.policy.save(&path).unwrap();
    let back = TabularPolicy::load(&path).unwrap();
    assert_eq!(back.logits(), run.policy.logits());
    assert_eq!(back.shape(), run.policy.shape());
}

#[test]
fn invalid_config_is_rejected_by_name() {
    let mut cfg = config(Method::HardPair, 0);
    cfg.hp.beta = -1.0;
    let err = train(&cfg).unwrap_err();
    assert!(err.to_string().contains("hp.beta"), "{err}");
}

#[test]
fn stability_metrics_of_a_real_run() {
    let run = train(&config(Method::HardPair, 0)).unwrap();
    let m = stability_metrics(&run.records).unwrap();
    assert!(m.grad_norm_variance >= 0.0 && m.kl_std >= 0.0 && m.oscillation >= 0.0);
}
