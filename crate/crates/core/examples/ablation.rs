//! Reports mean final BWT and Acc over five seeds for every strategy, the
//! EMA ratio and distillation weight sweeps of the dual-memory method, and
//! SEQ forgetting as the per-task rotation grows.
//!
//! `cargo run --release -p ilora-core --example ablation`

use ilora_core::bench::{make_stream, pretrain_backbone, PretrainSpec, StreamSpec};
use ilora_core::metrics::{acc_t, bwt_t, general_retention};
use ilora_core::model::{AdaptedNet, Arch};
use ilora_core::strategies::{run_sequence, StrategyConfig, StrategyKind};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Summary {
    bwt: Vec<f64>,
    acc: Vec<f64>,
    retention: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn evaluate(spec: &StreamSpec, config: &StrategyConfig) -> Summary {
    let arch = Arch::default();
    let mut out = Summary {
        bwt: vec![],
        acc: vec![],
        retention: vec![],
    };
    for seed in SEEDS {
        let stream = make_stream(seed, spec).expect("valid stream");
        let backbone =
            pretrain_backbone(&stream.anchor.train, &arch, &PretrainSpec::default(), seed)
                .expect("pretrain");
        let net = AdaptedNet::new(arch, backbone).expect("net");
        let record = run_sequence(&net, config, &stream.pairs(), seed).expect("run");
        let r = &record.result_matrix;
        let t = r.tasks();
        out.bwt.push(bwt_t(r, t).expect("t >= 2"));
        out.acc.push(acc_t(r, t).expect("t >= 1"));
        out.retention.push(
            general_retention(
                &net,
                &record.init,
                record.final_deployed(),
                &stream.anchor.eval,
            )
            .expect("eval"),
        );
    }
    out
}

fn main() {
    let spec = StreamSpec::default();

    println!("strategy  BWT_5    Acc_5   retention");
    for kind in StrategyKind::ALL {
        let s = evaluate(&spec, &StrategyConfig::for_kind(kind));
        println!(
            "{:<8} {:+.4}  {:.4}  {:+.4}",
            kind.name(),
            mean(&s.bwt),
            mean(&s.acc),
            mean(&s.retention)
        );
    }

    println!("\nILORA lambda_ema  BWT_5    Acc_5");
    for lambda in [0.0, 0.5, 0.9, 0.99, 1.0] {
        let config = StrategyConfig {
            lambda_ema: lambda,
            ..StrategyConfig::for_kind(StrategyKind::Ilora)
        };
        let s = evaluate(&spec, &config);
        println!("{lambda:<17} {:+.4}  {:.4}", mean(&s.bwt), mean(&s.acc));
    }

    println!("\nILORA gamma  BWT_5    Acc_5");
    for gamma in [0.0, 0.1, 1.0, 10.0] {
        let config = StrategyConfig {
            gamma,
            ..StrategyConfig::for_kind(StrategyKind::Ilora)
        };
        let s = evaluate(&spec, &config);
        println!("{gamma:<11} {:+.4}  {:.4}", mean(&s.bwt), mean(&s.acc));
    }

    println!("\nSEQ rotation  median BWT_5");
    for deg in [0.0, 15.0, 30.0] {
        let rotated = StreamSpec {
            rotation_deg: deg,
            ..spec
        };
        let s = evaluate(&rotated, &StrategyConfig::for_kind(StrategyKind::Seq));
        println!("{deg:<13} {:+.4}", median(&s.bwt));
    }
}
