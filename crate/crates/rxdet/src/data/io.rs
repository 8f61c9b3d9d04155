//! Dataset file format: one JSON object per line with `values` (floats) and
//! `labels` (`{class, x, w}`), optional `source` tag. Round trips are
//! lossless (shortest-round-trip float formatting).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Annotation, Dataset, ImpairmentClass, Sample, SourceTag, MER_MAX};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    values: Vec<f32>,
    labels: Vec<LabelRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceTag>,
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    class: ImpairmentClass,
    x: f32,
    w: f32,
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for sample in &dataset.samples {
        let record = SampleRecord {
            values: sample.values.clone(),
            labels: sample
                .annotations
                .iter()
                .map(|a| LabelRecord { class: a.class, x: a.x, w: a.w })
                .collect(),
            source: Some(sample.source),
        };
        serde_json::to_writer(&mut w, &record)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let at = |msg: String| Error::Input(format!("{}:{lineno}: {msg}", path.display()));
        let record: SampleRecord =
            serde_json::from_str(&line).map_err(|e| at(format!("malformed record: {e}")))?;
        if record.values.len() < 2 {
            return Err(at(format!("series needs at least 2 values, got {}", record.values.len())));
        }
        for v in &record.values {
            if !v.is_finite() || !(0.0..=MER_MAX).contains(v) {
                return Err(at(format!("value {v} outside [0, {MER_MAX}]")));
            }
        }
        let mut annotations = Vec::with_capacity(record.labels.len());
        for label in &record.labels {
            let ann = Annotation { class: label.class, x: label.x, w: label.w };
            ann.validate().map_err(|e| at(e.to_string()))?;
            annotations.push(ann);
        }
        samples.push(Sample {
            values: record.values,
            annotations,
            source: record.source.unwrap_or_default(),
        });
    }
    Ok(Dataset { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: Vec<f32>, annotations: Vec<Annotation>) -> Sample {
        Sample { values, annotations, source: SourceTag::Synthetic }
    }

    #[test]
    fn roundtrip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let ds = Dataset {
            samples: vec![
                sample(
                    vec![40.0, 41.5, 39.875, 0.125],
                    vec![Annotation { class: ImpairmentClass::Spike, x: 0.5, w: 0.01 }],
                ),
                sample(vec![35.0, 36.0], vec![]),
            ],
        };
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn rejects_out_of_range_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"values\":[40.0,64.5],\"labels\":[]}\n").unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn rejects_malformed_line_with_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"values\":[40.0,41.0],\"labels\":[]}\nnot json\n").unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn rejects_unknown_class() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"values\":[40.0,41.0],\"labels\":[{\"class\":\"ghost\",\"x\":0.5,\"w\":0.1}]}\n",
        )
        .unwrap();
        assert!(load_dataset(&path).is_err());
    }
}
