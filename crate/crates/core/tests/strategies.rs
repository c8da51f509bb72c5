use ilora_core::bench::{make_stream, pretrain_backbone, PretrainSpec, StreamSpec, TaskStream};
use ilora_core::metrics::bwt_t;
use ilora_core::model::{AdaptedNet, Arch, ParamVector};
use ilora_core::strategies::{
    run_sequence, run_sequence_observed, Deploy, RunRecord, StrategyConfig, StrategyKind,
};

fn small_spec(tasks: usize) -> StreamSpec {
    StreamSpec {
        tasks,
        n_train: 256,
        n_eval: 128,
        ..StreamSpec::default()
    }
}

fn setup(seed: u64, spec: &StreamSpec) -> (AdaptedNet, TaskStream) {
    let stream = make_stream(seed, spec).unwrap();
    let arch = Arch {
        input_dim: spec.input_dim,
        classes: spec.classes,
        ..Arch::default()
    };
    let backbone =
        pretrain_backbone(&stream.anchor.train, &arch, &PretrainSpec::default(), seed).unwrap();
    (AdaptedNet::new(arch, backbone).unwrap(), stream)
}

/// Every fast-learner iterate of a run, in order.
fn trajectory(
    net: &AdaptedNet,
    stream: &TaskStream,
    config: &StrategyConfig,
    seed: u64,
) -> (Vec<ParamVector>, RunRecord) {
    let mut steps = Vec::new();
    let record = run_sequence_observed(net, config, &stream.pairs(), seed, &mut |e| {
        steps.push(e.theta_w.clone());
    })
    .unwrap();
    (steps, record)
}

fn assert_same_trajectory(a: &[ParamVector], b: &[ParamVector]) {
    assert!(a.len() >= 200, "only {} steps", a.len());
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert_eq!(x, y, "trajectories diverge at step {}", i + 1);
    }
}

#[test]
fn er_without_memory_is_seq() {
    let spec = small_spec(3);
    let (net, stream) = setup(5, &spec);
    let seq = StrategyConfig::for_kind(StrategyKind::Seq);
    let er = StrategyConfig {
        rho: 0.0,
        ..StrategyConfig::for_kind(StrategyKind::Er)
    };
    let (a, ra) = trajectory(&net, &stream, &seq, 5);
    let (b, rb) = trajectory(&net, &stream, &er, 5);
    assert_same_trajectory(&a, &b);
    assert_eq!(ra.result_matrix, rb.result_matrix);
}

#[test]
fn ewc_without_penalty_is_seq() {
    let spec = small_spec(3);
    let (net, stream) = setup(6, &spec);
    let seq = StrategyConfig::for_kind(StrategyKind::Seq);
    let ewc = StrategyConfig {
        lambda_ewc: 0.0,
        ..StrategyConfig::for_kind(StrategyKind::Ewc)
    };
    let (a, _) = trajectory(&net, &stream, &seq, 6);
    let (b, _) = trajectory(&net, &stream, &ewc, 6);
    assert_same_trajectory(&a, &b);
}

#[test]
fn agem_without_memory_is_seq() {
    let spec = small_spec(3);
    let (net, stream) = setup(7, &spec);
    let seq = StrategyConfig::for_kind(StrategyKind::Seq);
    let agem = StrategyConfig {
        rho: 0.0,
        ..StrategyConfig::for_kind(StrategyKind::Agem)
    };
    let (a, _) = trajectory(&net, &stream, &seq, 7);
    let (b, _) = trajectory(&net, &stream, &agem, 7);
    assert_same_trajectory(&a, &b);
}

#[test]
fn ilora_without_distillation_or_averaging_is_er() {
    let spec = small_spec(3);
    let (net, stream) = setup(8, &spec);
    let er = StrategyConfig::for_kind(StrategyKind::Er);
    let ilora = StrategyConfig {
        gamma: 0.0,
        lambda_ema: 0.0,
        update_frequency: 1,
        ..StrategyConfig::for_kind(StrategyKind::Ilora)
    };
    let (a, ra) = trajectory(&net, &stream, &er, 8);
    let (b, rb) = trajectory(&net, &stream, &ilora, 8);
    assert_same_trajectory(&a, &b);
    assert_eq!(ra.result_matrix, rb.result_matrix);
}

#[test]
fn active_hyperparameters_change_the_trajectory() {
    let spec = small_spec(2);
    let (net, stream) = setup(9, &spec);
    let (er, _) = trajectory(
        &net,
        &stream,
        &StrategyConfig::for_kind(StrategyKind::Er),
        9,
    );
    let (il, _) = trajectory(
        &net,
        &stream,
        &StrategyConfig::for_kind(StrategyKind::Ilora),
        9,
    );
    assert_ne!(er.last(), il.last());
    let (seq, _) = trajectory(
        &net,
        &stream,
        &StrategyConfig::for_kind(StrategyKind::Seq),
        9,
    );
    let (ewc, _) = trajectory(
        &net,
        &stream,
        &StrategyConfig::for_kind(StrategyKind::Ewc),
        9,
    );
    assert_ne!(seq.last(), ewc.last());
}

fn slow_history(
    net: &AdaptedNet,
    stream: &TaskStream,
    lambda: f64,
) -> (ParamVector, Vec<(ParamVector, ParamVector)>) {
    let config = StrategyConfig {
        lambda_ema: lambda,
        ..StrategyConfig::for_kind(StrategyKind::Ilora)
    };
    let mut steps = Vec::new();
    let record = run_sequence_observed(net, &config, &stream.pairs(), 10, &mut |e| {
        steps.push((e.theta_w.clone(), e.theta_l.clone()));
    })
    .unwrap();
    (record.init, steps)
}

#[test]
fn zero_ratio_keeps_slow_learner_equal_to_fast() {
    let (net, stream) = setup(10, &small_spec(2));
    let (_, steps) = slow_history(&net, &stream, 0.0);
    for (w, l) in &steps {
        assert_eq!(w, l);
    }
}

#[test]
fn unit_ratio_freezes_slow_learner() {
    let (net, stream) = setup(10, &small_spec(2));
    let (init, steps) = slow_history(&net, &stream, 1.0);
    for (_, l) in &steps {
        assert_eq!(l, &init);
    }
}

#[test]
fn slow_learner_stays_in_convex_hull_of_history() {
    let (net, stream) = setup(10, &small_spec(2));
    for lambda in [0.5, 0.9, 0.99] {
        let (init, steps) = slow_history(&net, &stream, lambda);
        let mut lo = init.as_slice().to_vec();
        let mut hi = lo.clone();
        for (w, l) in &steps {
            for (k, &v) in w.iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
            for (k, &v) in l.iter().enumerate() {
                assert!(lo[k] <= v && v <= hi[k], "lambda {lambda} coordinate {k}");
            }
        }
    }
}

#[test]
fn every_kind_takes_the_same_number_of_steps() {
    let spec = small_spec(3);
    let (net, stream) = setup(11, &spec);
    let mut counts = Vec::new();
    for kind in StrategyKind::ALL {
        let mut observed = 0;
        let record = run_sequence_observed(
            &net,
            &StrategyConfig::for_kind(kind),
            &stream.pairs(),
            11,
            &mut |_| {
                observed += 1;
            },
        )
        .unwrap();
        assert_eq!(observed, record.total_steps, "{}", kind.name());
        counts.push(record.total_steps);
    }
    // 3 tasks of 5 epochs over 256 samples in batches of 16
    assert!(counts.iter().all(|&c| c == 3 * 5 * 16), "{counts:?}");
}

#[test]
fn runs_are_deterministic() {
    let (net, stream) = setup(12, &small_spec(2));
    for kind in [StrategyKind::Ilora, StrategyKind::Agem, StrategyKind::Mtl] {
        let config = StrategyConfig::for_kind(kind);
        let a = run_sequence(&net, &config, &stream.pairs(), 12).unwrap();
        let b = run_sequence(&net, &config, &stream.pairs(), 12).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn seq_learns_a_separable_two_class_task() {
    let spec = StreamSpec {
        tasks: 1,
        classes: 2,
        n_train: 256,
        ..StreamSpec::default()
    };
    let (net, stream) = setup(13, &spec);
    let record = run_sequence(
        &net,
        &StrategyConfig::for_kind(StrategyKind::Seq),
        &stream.pairs(),
        13,
    )
    .unwrap();
    let acc = net
        .predict_accuracy(record.final_deployed(), &stream.tasks[0].train)
        .unwrap();
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn single_task_run_has_no_backward_transfer() {
    let (net, stream) = setup(14, &small_spec(1));
    let record = run_sequence(&net, &StrategyConfig::default(), &stream.pairs(), 14).unwrap();
    assert_eq!(record.result_matrix.tasks(), 1);
    assert_eq!(record.checkpoints.len(), 1);
    assert_eq!(record.slow_checkpoints.len(), 1);
    assert!(bwt_t(&record.result_matrix, 1).is_err());
}

#[test]
fn joint_training_rows_share_one_model() {
    let (net, stream) = setup(15, &small_spec(3));
    let record = run_sequence(
        &net,
        &StrategyConfig::for_kind(StrategyKind::Mtl),
        &stream.pairs(),
        15,
    )
    .unwrap();
    let r = &record.result_matrix;
    for t in 2..=3 {
        for j in 1..t {
            assert_eq!(r.get(t, j).unwrap(), r.get(j, j).unwrap());
        }
    }
    assert_eq!(bwt_t(r, 3).unwrap(), 0.0);
}

#[test]
fn ilora_deploys_the_slow_learner_by_default() {
    let (net, stream) = setup(16, &small_spec(2));
    let record = run_sequence(&net, &StrategyConfig::default(), &stream.pairs(), 16).unwrap();
    assert_eq!(record.config.deploy, Some(Deploy::LongTerm));
    for t in 1..=2 {
        let acc = net
            .predict_accuracy(&record.slow_checkpoints[t - 1], &stream.tasks[0].eval)
            .unwrap();
        assert_eq!(record.result_matrix.get(t, 1).unwrap(), acc);
    }
}

#[test]
fn unrotated_stream_shows_no_seq_forgetting() {
    let spec = StreamSpec {
        rotation_deg: 0.0,
        ..StreamSpec::default()
    };
    let mut bwts: Vec<f64> = (0..5)
        .map(|seed| {
            let (net, stream) = setup(seed, &spec);
            let record = run_sequence(
                &net,
                &StrategyConfig::for_kind(StrategyKind::Seq),
                &stream.pairs(),
                seed,
            )
            .unwrap();
            bwt_t(&record.result_matrix, 5).unwrap()
        })
        .collect();
    bwts.sort_by(f64::total_cmp);
    assert!(bwts[2].abs() <= 0.05, "median BWT {bwts:?}");
}
