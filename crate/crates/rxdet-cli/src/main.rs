//! `rxdet`: train, run, evaluate, benchmark, and plot the 1-D anomaly
//! detector from the command line.
//!
//! Exit codes: 0 success, 1 input error, 2 configuration error,
//! 3 internal/numeric error.

mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use rxdet::data::anchors::compute_anchors;
use rxdet::data::io::{load_dataset, save_dataset};
use rxdet::data::synth::{generate_synthetic, ClassMix};
use rxdet::data::{Dataset, ImpairmentClass, N_CLASSES};
use rxdet::eval::evaluate;
use rxdet::net::spec::DEFAULT_INPUT_SIZE;
use rxdet::train::{train_loop, TrainConfig};
use rxdet::{AnchorSet, DetectOptions, Detection, Error, Model, NmsMode, Result};

#[derive(Parser)]
#[command(name = "rxdet", version, about = "Single-shot anomaly detection for 1-D spectrum series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset file.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// "uniform" or comma list like "spike=2,wave=1" (missing classes
        /// get weight 0).
        #[arg(long, default_value = "uniform")]
        mix: String,
    },
    /// Compute anchor widths from a dataset's annotations (k-means over
    /// widths, KDE-seeded).
    ComputeAnchors {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 9)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_INPUT_SIZE)]
        input_size: usize,
        /// Optional JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a detector.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Flat key=value config file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_weights: PathBuf,
        /// Metrics CSV path (default: alongside the weights).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Initialize from an existing weights file instead of random init.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// "auto" (k-means on the training data), "table", or a JSON file
        /// written by compute-anchors.
        #[arg(long, default_value = "auto")]
        anchors: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_batches: Option<u64>,
        #[arg(long)]
        mini_batch: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f32>,
        #[arg(long)]
        eval_interval: Option<u64>,
        #[arg(long)]
        augment: Option<bool>,
    },
    /// Detect anomalies in every sample of a dataset file.
    Detect {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        conf: f32,
        /// Hard-NMS IoU threshold.
        #[arg(long, default_value_t = 0.5)]
        nms: f32,
        /// Use soft-NMS with this sigma instead of hard NMS.
        #[arg(long)]
        soft_nms_sigma: Option<f32>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
        /// Attach the top-n classes per detection instead of the argmax.
        #[arg(long, default_value_t = 1)]
        top_n: usize,
    },
    /// Evaluate a detector against annotated data (mAP at the given IoUs).
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated IoU thresholds.
        #[arg(long, default_value = "0.5,0.75")]
        iou: String,
        #[arg(long, default_value_t = 0.5)]
        conf: f32,
        #[arg(long, default_value_t = 0.5)]
        nms: f32,
        #[arg(long)]
        soft_nms_sigma: Option<f32>,
        /// Machine-readable JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Measure inference throughput and report the model footprint.
    Bench {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Minimum measuring time.
        #[arg(long, default_value_t = 2.0)]
        min_seconds: f64,
    },
    /// Render each sample with its detections to SVG files.
    Plot {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        conf: f32,
        #[arg(long, default_value_t = 0.5)]
        nms: f32,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn parse_mix(s: &str) -> Result<ClassMix> {
    if s == "uniform" {
        return Ok(ClassMix::uniform());
    }
    let mut weights = [0.0f64; N_CLASSES];
    for part in s.split(',') {
        let (name, w) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad mix entry {part:?}, want class=weight")))?;
        let class = ImpairmentClass::from_name(name.trim())
            .ok_or_else(|| Error::Config(format!("unknown class {name:?}")))?;
        weights[class.index()] = w
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad weight {w:?}")))?;
    }
    ClassMix::new(weights)
}

fn load_anchors(spec: &str, train: &Dataset, input_size: usize) -> Result<AnchorSet> {
    match spec {
        "auto" => Ok(compute_anchors(train, 9, input_size)),
        "table" => Ok(AnchorSet::table_defaults()),
        path => {
            let text = std::fs::read_to_string(Path::new(path))?;
            let anchors: AnchorSet = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{path}: not an anchor file: {e}")))?;
            Ok(anchors)
        }
    }
}

fn nms_mode(nms: f32, soft_sigma: Option<f32>, conf: f32) -> NmsMode {
    match soft_sigma {
        Some(sigma) => NmsMode::Soft { sigma, final_threshold: conf },
        None => NmsMode::Hard { iou: nms },
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { out, count, seed, mix } => {
            if count == 0 {
                return Err(Error::Config("count must be positive".into()));
            }
            let mix = parse_mix(&mix)?;
            let dataset = generate_synthetic(seed, &mix, count);
            save_dataset(&dataset, &out)?;
            let counts = dataset.class_counts();
            let detail: Vec<String> = ImpairmentClass::ALL
                .iter()
                .map(|c| format!("{}={}", c.name(), counts[c.index()]))
                .collect();
            println!(
                "wrote {} samples to {} ({})",
                dataset.len(),
                out.display(),
                detail.join(", ")
            );
            Ok(())
        }

        Command::ComputeAnchors { data, k, input_size, out } => {
            let dataset = load_dataset(&data)?;
            if dataset.is_empty() {
                return Err(Error::Input(format!("{}: empty dataset", data.display())));
            }
            let anchors = compute_anchors(&dataset, k, input_size);
            let widths: Vec<String> = anchors.widths().iter().map(|w| format!("{w:.2}")).collect();
            println!("anchors: {}", widths.join(", "));
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&anchors).unwrap())?;
                println!("stored in {}", path.display());
            }
            Ok(())
        }

        Command::Train {
            train,
            test,
            config,
            out_weights,
            metrics,
            resume,
            anchors,
            seed,
            max_batches,
            mini_batch,
            learning_rate,
            eval_interval,
            augment,
        } => {
            let train_set = load_dataset(&train)?;
            let test_set = load_dataset(&test)?;
            let mut cfg = match config {
                Some(path) => config::load_config(&path)?,
                None => TrainConfig::default(),
            };
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = max_batches {
                cfg.max_batches = v;
            }
            if let Some(v) = mini_batch {
                cfg.mini_batch = v;
            }
            if let Some(v) = learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = eval_interval {
                cfg.eval_interval = v;
            }
            if let Some(on) = augment {
                cfg.augment = match on {
                    true => Some(cfg.augment.take().unwrap_or_default()),
                    false => None,
                };
            }
            cfg.validate()?;

            let mut model = match resume {
                Some(path) => {
                    let m = Model::load(&path)?;
                    println!("resuming from {} ({} parameters)", path.display(), m.param_count());
                    m
                }
                None => {
                    let mut m = Model::reference(cfg.seed)?;
                    m.set_anchors(load_anchors(&anchors, &train_set, m.spec().input_size)?);
                    m
                }
            };
            let widths: Vec<String> = model.anchors().widths().iter().map(|w| format!("{w:.1}")).collect();
            println!(
                "training on {} samples, validating on {} (anchors {})",
                train_set.len(),
                test_set.len(),
                widths.join("/")
            );

            let metrics_path = metrics.unwrap_or_else(|| out_weights.with_extension("metrics.csv"));
            let start = Instant::now();
            let outcome = train_loop(&mut model, &train_set, &test_set, &cfg, Some(&metrics_path))?;
            model.save(&out_weights)?;
            println!(
                "trained {} batches in {:.0}s; best mAP50 {:.4} / mAP75 {:.4} at batch {}{}",
                outcome.batches_run,
                start.elapsed().as_secs_f64(),
                outcome.best_map50,
                outcome.best_map75,
                outcome.best_batch,
                if outcome.stopped_early { " (early stop)" } else { "" }
            );
            println!("weights: {} | metrics: {}", out_weights.display(), metrics_path.display());
            Ok(())
        }

        Command::Detect { weights, input, conf, nms, soft_nms_sigma, format, top_n } => {
            let model = Model::load(&weights)?;
            let dataset = load_dataset(&input)?;
            let opts = DetectOptions {
                conf_threshold: conf,
                nms: nms_mode(nms, soft_nms_sigma, conf),
                multi_label_top_n: top_n,
            };
            let series: Vec<Vec<f32>> = dataset.samples.iter().map(|s| s.values.clone()).collect();
            let mut rows = Vec::new();
            for (i, result) in model.detect_batch(&series, &opts).into_iter().enumerate() {
                for det in result? {
                    rows.push(detection_row(i, &det, model.class_names()));
                }
            }
            match format {
                OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&rows).unwrap()),
                OutputFormat::Csv => {
                    println!("sample_index,class,confidence,center,width,start,end");
                    for r in rows {
                        println!(
                            "{},{},{},{},{},{},{}",
                            r.sample_index, r.class, r.confidence, r.center, r.width, r.start, r.end
                        );
                    }
                }
            }
            Ok(())
        }

        Command::Eval { weights, data, iou, conf, nms, soft_nms_sigma, report } => {
            let model = Model::load(&weights)?;
            let dataset = load_dataset(&data)?;
            let thresholds: Vec<f32> = iou
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f32>()
                        .map_err(|_| Error::Config(format!("bad IoU threshold {t:?}")))
                })
                .collect::<Result<_>>()?;
            let opts = DetectOptions {
                conf_threshold: conf,
                nms: nms_mode(nms, soft_nms_sigma, conf),
                multi_label_top_n: 1,
            };
            let result = evaluate(&model, &dataset, &thresholds, &opts)?;
            print!("{}", result.to_text_table());
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&result).unwrap())?;
                println!("report: {}", path.display());
            }
            Ok(())
        }

        Command::Bench { weights, data, threads, min_seconds } => {
            if threads == 0 {
                return Err(Error::Config("threads must be positive".into()));
            }
            let model = Model::load(&weights)?;
            let dataset = load_dataset(&data)?;
            if dataset.is_empty() {
                return Err(Error::Input("bench needs a non-empty dataset".into()));
            }
            let series: Vec<Vec<f32>> = dataset.samples.iter().map(|s| s.values.clone()).collect();
            let opts = DetectOptions::default();

            let run_once = |seq: bool| -> Result<usize> {
                let results = if seq {
                    model.detect_batch_seq(&series, &opts)
                } else {
                    model.detect_batch(&series, &opts)
                };
                let mut dets = 0;
                for r in results {
                    dets += r?.len();
                }
                Ok(dets)
            };

            // warm-up
            run_once(threads == 1)?;
            let start = Instant::now();
            let mut processed = 0usize;
            let mut detections = 0usize;
            while start.elapsed().as_secs_f64() < min_seconds {
                detections += rxdet::par::run_with_threads(threads, || run_once(threads == 1))?;
                processed += series.len();
            }
            let elapsed = start.elapsed().as_secs_f64();
            let net = model.network();
            let act_bytes = net.activation_bytes_per_sample();
            let param_bytes = net.state_len() * 4;
            println!("samples_per_second: {:.1}", processed as f64 / elapsed);
            println!("threads: {threads}");
            println!("samples: {processed} (detections: {detections})");
            println!("parameters: {}", model.param_count());
            println!("state_floats: {}", net.state_len());
            println!("activation_bytes_per_sample: {act_bytes}");
            println!(
                "estimated_peak_memory_bytes: {}",
                param_bytes + act_bytes * threads + 2048 * threads
            );
            Ok(())
        }

        Command::Plot { weights, input, out_dir, conf, nms } => {
            let model = Model::load(&weights)?;
            let dataset = load_dataset(&input)?;
            std::fs::create_dir_all(&out_dir)?;
            let opts = DetectOptions {
                conf_threshold: conf,
                nms: NmsMode::Hard { iou: nms },
                multi_label_top_n: 1,
            };
            let mut written = 0usize;
            for (i, sample) in dataset.samples.iter().enumerate() {
                let dets = model.detect(&sample.values, &opts)?;
                let title = format!("sample {i}: {} detections", dets.len());
                let svg = plot::render_svg(&sample.values, &dets, model.class_names(), &title);
                let path = out_dir.join(format!("sample_{i:05}.svg"));
                std::fs::write(&path, svg)?;
                written += 1;
            }
            println!("wrote {written} plots to {}", out_dir.display());
            Ok(())
        }
    }
}

#[derive(serde::Serialize)]
struct DetectionRow {
    sample_index: usize,
    class: String,
    confidence: f32,
    center: f32,
    width: f32,
    start: f32,
    end: f32,
}

fn detection_row(sample_index: usize, det: &Detection, class_names: &[String]) -> DetectionRow {
    let (start, end) = det.interval();
    let class = det.classes.first().copied().unwrap_or(0);
    DetectionRow {
        sample_index,
        class: class_names.get(class).cloned().unwrap_or_else(|| format!("class_{class}")),
        confidence: det.confidence,
        center: det.center,
        width: det.width,
        start,
        end,
    }
}
