//! Detection evaluation: 1-D IoU, greedy matching, all-point-interpolated
//! average precision, and mAP at IoU 0.5 / 0.75.
//!
//! Matching is per class and per sample: detections are ranked by
//! confidence globally, each one matches the highest-IoU still-unmatched
//! truth of its class in its sample (IoU at or above the threshold), every
//! truth matches at most once. AP math runs in f64 so it can be compared
//! against a brute-force reference at 1e-9.

use serde::Serialize;

use crate::data::{Dataset, N_CLASSES};
use crate::error::{Error, Result};
use crate::net::{DetectOptions, Detection, Model};

/// Plain 1-D IoU of two `(center, width)` intervals, `width > 0`.
pub fn iou_1d(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (a_lo, a_hi) = (a.0 - a.1 / 2.0, a.0 + a.1 / 2.0);
    let (b_lo, b_hi) = (b.0 - b.1 / 2.0, b.0 + b.1 / 2.0);
    let inter = (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0);
    let union = a.1 + b.1 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy TP/FP flags for one sample's detections of one class, already
/// sorted by confidence descending. Returns one flag per detection.
pub fn match_detections(detections: &[(f64, f64)], truths: &[(f64, f64)], iou_threshold: f64) -> Vec<bool> {
    let mut matched = vec![false; truths.len()];
    let mut flags = Vec::with_capacity(detections.len());
    for det in detections {
        let mut best: Option<(usize, f64)> = None;
        for (t, truth) in truths.iter().enumerate() {
            if matched[t] {
                continue;
            }
            let iou = iou_1d(*det, *truth);
            if iou >= iou_threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((t, iou));
            }
        }
        match best {
            Some((t, _)) => {
                matched[t] = true;
                flags.push(true);
            }
            None => flags.push(false),
        }
    }
    flags
}

/// All-point interpolated AP from confidence-ordered TP/FP flags.
///
/// A class with no truths scores 1.0 when nothing was predicted (vacuous)
/// and 0.0 otherwise.
pub fn average_precision(flags: &[bool], n_truths: usize) -> f64 {
    if n_truths == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let n = flags.len();
    let mut precisions = Vec::with_capacity(n);
    let mut recalls = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, flag) in flags.iter().enumerate() {
        if *flag {
            tp += 1;
        }
        precisions.push(tp as f64 / (i + 1) as f64);
        recalls.push(tp as f64 / n_truths as f64);
    }
    // monotone precision envelope, integrated over recall increases
    let mut ap = 0.0;
    let mut max_p = 0.0f64;
    for i in (0..n).rev() {
        max_p = max_p.max(precisions[i]);
        let prev_recall = if i == 0 { 0.0 } else { recalls[i - 1] };
        if recalls[i] > prev_recall {
            ap += (recalls[i] - prev_recall) * max_p;
        }
    }
    ap
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: usize,
    pub name: String,
    /// AP per IoU threshold, matching `EvalReport::iou_thresholds` order.
    pub ap: Vec<f64>,
    pub true_positives: Vec<usize>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
    pub n_truths: usize,
    /// Precision-recall points per threshold, confidence-ordered.
    pub pr_curve: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub iou_thresholds: Vec<f32>,
    pub classes: Vec<ClassReport>,
    /// Mean AP per threshold (unweighted over classes).
    pub map: Vec<f64>,
    pub n_samples: usize,
    /// Classes that were absent and never predicted (AP defined as 1.0).
    pub vacuous_classes: Vec<usize>,
}

impl EvalReport {
    pub fn map_at(&self, iou: f32) -> Option<f64> {
        self.iou_thresholds
            .iter()
            .position(|t| (*t - iou).abs() < 1e-6)
            .map(|i| self.map[i])
    }

    pub fn map50(&self) -> f64 {
        self.map_at(0.5).unwrap_or(0.0)
    }

    pub fn map75(&self) -> f64 {
        self.map_at(0.75).unwrap_or(0.0)
    }

    /// Table in the two-block layout of the result tables: per-class AP and
    /// the overall mean, in percent.
    pub fn to_text_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<14}", "class"));
        for t in &self.iou_thresholds {
            s.push_str(&format!("  AP{:<4}", (t * 100.0).round() as u32));
        }
        s.push('\n');
        for c in &self.classes {
            s.push_str(&format!("{:<14}", c.name));
            for ap in &c.ap {
                s.push_str(&format!("  {:>6.2}", ap * 100.0));
            }
            if self.vacuous_classes.contains(&c.class) {
                s.push_str("  (vacuous: no truths, no predictions)");
            }
            s.push('\n');
        }
        s.push_str(&format!("{:<14}", "overall"));
        for m in &self.map {
            s.push_str(&format!("  {:>6.2}", m * 100.0));
        }
        s.push('\n');
        s
    }
}

/// Run the detector over an annotated dataset and score it.
pub fn evaluate(
    model: &Model,
    dataset: &Dataset,
    iou_thresholds: &[f32],
    opts: &DetectOptions,
) -> Result<EvalReport> {
    if model.class_names().len() != N_CLASSES {
        return Err(Error::Config("model classes do not match the dataset class set".into()));
    }
    let series: Vec<Vec<f32>> = dataset.samples.iter().map(|s| s.values.clone()).collect();
    let mut detections: Vec<Vec<Detection>> = Vec::with_capacity(series.len());
    for result in model.detect_batch(&series, opts) {
        detections.push(result?);
    }
    Ok(score_detections(&detections, dataset, iou_thresholds, model.class_names()))
}

/// Score pre-computed per-sample detections (kept separate so tests can
/// feed oracle detections straight through).
pub fn score_detections(
    detections: &[Vec<Detection>],
    dataset: &Dataset,
    iou_thresholds: &[f32],
    class_names: &[String],
) -> EvalReport {
    // flatten (class, sample, conf, center, width, anchor) tuples
    struct Cand {
        sample: usize,
        conf: f64,
        center: f64,
        width: f64,
        anchor: usize,
    }
    let mut per_class: Vec<Vec<Cand>> = (0..N_CLASSES).map(|_| Vec::new()).collect();
    for (si, dets) in detections.iter().enumerate() {
        for d in dets {
            for class in &d.classes {
                per_class[*class].push(Cand {
                    sample: si,
                    conf: d.confidence as f64,
                    center: d.center as f64,
                    width: d.width.max(f32::EPSILON) as f64,
                    anchor: d.anchor,
                });
            }
        }
    }
    for cands in &mut per_class {
        cands.sort_by(|a, b| {
            b.conf
                .partial_cmp(&a.conf)
                .unwrap()
                .then(a.sample.cmp(&b.sample))
                .then(a.center.partial_cmp(&b.center).unwrap())
                .then(a.anchor.cmp(&b.anchor))
        });
    }

    let truths_per_class: Vec<Vec<Vec<(f64, f64)>>> = (0..N_CLASSES)
        .map(|class| {
            dataset
                .samples
                .iter()
                .map(|s| {
                    s.annotations
                        .iter()
                        .filter(|a| a.class.index() == class)
                        .map(|a| (a.x as f64, a.w as f64))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut classes = Vec::with_capacity(N_CLASSES);
    let mut vacuous = Vec::new();
    let mut map = vec![0.0f64; iou_thresholds.len()];

    for class in 0..N_CLASSES {
        let cands = &per_class[class];
        let truths = &truths_per_class[class];
        let n_truths: usize = truths.iter().map(Vec::len).sum();
        if n_truths == 0 && cands.is_empty() {
            vacuous.push(class);
            log::warn!(
                "class {:?} absent and never predicted; AP defined as 1.0",
                class_names.get(class)
            );
        }

        let mut ap = Vec::with_capacity(iou_thresholds.len());
        let mut tps = Vec::new();
        let mut fps = Vec::new();
        let mut fns = Vec::new();
        let mut curves = Vec::new();
        for (ti, threshold) in iou_thresholds.iter().enumerate() {
            let mut matched: Vec<Vec<bool>> = truths.iter().map(|t| vec![false; t.len()]).collect();
            let mut flags = Vec::with_capacity(cands.len());
            for cand in cands {
                let sample_truths = &truths[cand.sample];
                let mut best: Option<(usize, f64)> = None;
                for (t, truth) in sample_truths.iter().enumerate() {
                    if matched[cand.sample][t] {
                        continue;
                    }
                    let iou = iou_1d((cand.center, cand.width), *truth);
                    if iou >= *threshold as f64 && best.map_or(true, |(_, b)| iou > b) {
                        best = Some((t, iou));
                    }
                }
                match best {
                    Some((t, _)) => {
                        matched[cand.sample][t] = true;
                        flags.push(true);
                    }
                    None => flags.push(false),
                }
            }
            let tp = flags.iter().filter(|f| **f).count();
            let this_ap = average_precision(&flags, n_truths);
            map[ti] += this_ap / N_CLASSES as f64;
            ap.push(this_ap);
            tps.push(tp);
            fps.push(flags.len() - tp);
            fns.push(n_truths - tp);

            let mut curve = Vec::with_capacity(flags.len());
            let mut running_tp = 0usize;
            for (i, f) in flags.iter().enumerate() {
                if *f {
                    running_tp += 1;
                }
                let recall = if n_truths == 0 { 0.0 } else { running_tp as f64 / n_truths as f64 };
                curve.push((recall, running_tp as f64 / (i + 1) as f64));
            }
            curves.push(curve);
        }

        classes.push(ClassReport {
            class,
            name: class_names
                .get(class)
                .cloned()
                .unwrap_or_else(|| format!("class_{class}")),
            ap,
            true_positives: tps,
            false_positives: fps,
            false_negatives: fns,
            n_truths,
            pr_curve: curves,
        });
    }

    EvalReport {
        iou_thresholds: iou_thresholds.to_vec(),
        classes,
        map,
        n_samples: dataset.len(),
        vacuous_classes: vacuous,
    }
}
