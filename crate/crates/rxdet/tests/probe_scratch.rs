//! Temporary experiment harness (removed before finalizing).

use std::time::Instant;

use rxdet::data::synth::{generate_synthetic, ClassMix};
use rxdet::data::Dataset;
use rxdet::eval::iou_1d;
use rxdet::net::{DetectOptions, Model};
use rxdet::train::{train_loop, TrainConfig};

#[test]
#[ignore]
fn probe_experiment() {
    let pool = generate_synthetic(4242, &ClassMix::uniform(), 64);
    let samples: Vec<_> = pool
        .samples
        .into_iter()
        .filter(|s| !s.annotations.is_empty())
        .take(8)
        .collect();
    let data = Dataset { samples };
    let n_anns: usize = data.samples.iter().map(|s| s.annotations.len()).sum();
    println!("probe set: 8 samples, {n_anns} annotations");
    for (i, s) in data.samples.iter().enumerate() {
        let names: Vec<String> = s
            .annotations
            .iter()
            .map(|a| format!("{}@{:.2}w{:.3}", a.class.name(), a.x, a.w))
            .collect();
        println!("  sample {i}: {}", names.join(", "));
    }

    let mut model = Model::reference(99).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-1,
        weight_decay: 0.0,
        mini_batch: 8,
        burn_in: 400,
        max_batches: 16_000,
        eval_interval: 4000,
        patience: u64::MAX,
        augment: None,
        seed: 7,
        ..Default::default()
    };
    let quench = TrainConfig {
        learning_rate: 1.2e-2,
        burn_in: 0,
        max_batches: 5000,
        seed: 8,
        ..cfg.clone()
    };
    let start = Instant::now();
    let _ = train_loop(&mut model, &data, &data, &cfg, None).unwrap();
    let out = train_loop(&mut model, &data, &data, &quench, None).unwrap();
    let dt = start.elapsed().as_secs_f64();
    println!(
        "{} batches in {:.1}s ({:.1} batches/s)",
        out.batches_run,
        dt,
        out.batches_run as f64 / dt
    );
    for row in out.metrics.iter().step_by(100) {
        println!(
            "batch {:>5} lr {:.2e} L1 {:.4} L2 {:.4} L3 {:.4} total {:.4} map50 {:?}",
            row.batch, row.lr, row.l1, row.l2, row.l3, row.total, row.map50
        );
    }
    let last = out.metrics.last().unwrap();
    println!("final: total {:.4}", last.total);

    let opts = DetectOptions::default();
    let loose = DetectOptions { conf_threshold: 0.10, ..Default::default() };
    for (i, sample) in data.samples.iter().enumerate() {
        let dets = model.detect(&sample.values, &opts).unwrap();
        let all = model.detect(&sample.values, &loose).unwrap();
        for ann in &sample.annotations {
            let best = dets
                .iter()
                .filter(|d| d.classes.contains(&ann.class.index()))
                .map(|d| iou_1d((d.center as f64, d.width as f64), (ann.x as f64, ann.w as f64)))
                .fold(0.0f64, f64::max);
            println!(
                "sample {i} {} x={:.3} w={:.4}: best IoU {:.3} ({} dets)",
                ann.class.name(),
                ann.x,
                ann.w,
                best,
                dets.len()
            );
            if best < 0.75 {
                // anything nearby at the loose threshold?
                for d in &all {
                    if (d.center - ann.x).abs() < 0.03 {
                        println!(
                            "    near: class {:?} conf {:.3} center {:.4} width {:.5} anchor {} iou {:.3}",
                            d.classes,
                            d.confidence,
                            d.center,
                            d.width,
                            d.anchor,
                            iou_1d((d.center as f64, d.width as f64), (ann.x as f64, ann.w as f64))
                        );
                    }
                }
            }
        }
    }
}
