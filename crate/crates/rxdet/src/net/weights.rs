//! Weights file: `AD1D` magic, u32 format version, u32 header length, a
//! UTF-8 textual header describing the network (input size, classes,
//! anchors, layer table, running-stat flag), then all parameter blocks as
//! little-endian f32 in layer order. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result, WeightsError};
use crate::net::spec::{Activation, AnchorSet, LayerSpec, NetworkSpec};

pub const MAGIC: [u8; 4] = *b"AD1D";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub struct WeightsFile {
    pub spec: NetworkSpec,
    pub anchors: AnchorSet,
    pub class_names: Vec<String>,
    pub state: Vec<f32>,
}

fn header_text(spec: &NetworkSpec, anchors: &AnchorSet, class_names: &[String]) -> Result<String> {
    for name in class_names {
        if name.contains(',') || name.contains('\n') || name.is_empty() {
            return Err(Error::Config(format!("class name {name:?} not serializable")));
        }
    }
    let mut s = String::new();
    s.push_str(&format!("input_size={}\n", spec.input_size));
    s.push_str(&format!("n_classes={}\n", spec.n_classes));
    s.push_str(&format!("anchors_per_layer={}\n", spec.anchors_per_layer));
    let widths: Vec<String> = anchors.widths().iter().map(|w| format!("{w}")).collect();
    s.push_str(&format!("anchors={}\n", widths.join(",")));
    s.push_str(&format!("classes={}\n", class_names.join(",")));
    s.push_str("running_stats=1\n");
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv { filters, kernel, stride, batch_norm, activation } => {
                let act = match activation {
                    Activation::Leaky => "leaky",
                    Activation::Linear => "linear",
                };
                s.push_str(&format!(
                    "layer conv filters={filters} kernel={kernel} stride={stride} bn={} act={act}\n",
                    u8::from(*batch_norm)
                ));
            }
            LayerSpec::Shortcut { from } => s.push_str(&format!("layer shortcut from={from}\n")),
            LayerSpec::Route { from } => {
                let list: Vec<String> = from.iter().map(|f| f.to_string()).collect();
                s.push_str(&format!("layer route from={}\n", list.join(",")));
            }
            LayerSpec::Upsample { factor } => s.push_str(&format!("layer upsample factor={factor}\n")),
            LayerSpec::Predict { anchors } => {
                s.push_str(&format!("layer predict anchors={},{},{}\n", anchors[0], anchors[1], anchors[2]));
            }
        }
    }
    Ok(s)
}

fn bad_header(msg: impl Into<String>) -> Error {
    Error::Weights(WeightsError::Header(msg.into()))
}

fn parse_header(text: &str) -> Result<(NetworkSpec, AnchorSet, Vec<String>)> {
    let mut input_size = None;
    let mut n_classes = None;
    let mut anchors_per_layer = None;
    let mut anchors: Option<Vec<f32>> = None;
    let mut classes: Option<Vec<String>> = None;
    let mut layers = Vec::new();

    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("layer ") {
            layers.push(parse_layer_line(rest).map_err(|e| bad_header(format!("line {}: {e}", ln + 1)))?);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad_header(format!("line {}: expected key=value", ln + 1)))?;
        match key {
            "input_size" => input_size = Some(parse_num(value, ln)?),
            "n_classes" => n_classes = Some(parse_num(value, ln)?),
            "anchors_per_layer" => anchors_per_layer = Some(parse_num(value, ln)?),
            "anchors" => {
                let ws = value
                    .split(',')
                    .map(|t| t.parse::<f32>().map_err(|_| bad_header(format!("bad anchor {t:?}"))))
                    .collect::<Result<Vec<f32>>>()?;
                anchors = Some(ws);
            }
            "classes" => classes = Some(value.split(',').map(str::to_owned).collect()),
            "running_stats" => {
                if value != "1" {
                    return Err(bad_header("running_stats must be 1"));
                }
            }
            other => return Err(bad_header(format!("unknown header key {other:?}"))),
        }
    }

    let input_size = input_size.ok_or_else(|| bad_header("missing input_size"))?;
    let n_classes = n_classes.ok_or_else(|| bad_header("missing n_classes"))?;
    let anchors_per_layer = anchors_per_layer.ok_or_else(|| bad_header("missing anchors_per_layer"))?;
    let anchors = anchors.ok_or_else(|| bad_header("missing anchors"))?;
    let class_names = classes.ok_or_else(|| bad_header("missing classes"))?;
    if anchors.len() != 9 {
        return Err(bad_header(format!("expected 9 anchors, got {}", anchors.len())));
    }
    if class_names.len() != n_classes {
        return Err(bad_header(format!(
            "{} class names for {n_classes} classes",
            class_names.len()
        )));
    }
    let mut widths = [0f32; 9];
    widths.copy_from_slice(&anchors);
    let anchors = AnchorSet::new(widths, input_size)?;
    let spec = NetworkSpec {
        input_size,
        n_classes,
        anchors_per_layer,
        layers,
    };
    Ok((spec, anchors, class_names))
}

fn parse_num(value: &str, ln: usize) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| bad_header(format!("line {}: bad number {value:?}", ln + 1)))
}

fn parse_layer_line(rest: &str) -> std::result::Result<LayerSpec, String> {
    let mut it = rest.split_whitespace();
    let kind = it.next().ok_or("empty layer line")?;
    let mut kv = std::collections::HashMap::new();
    for tok in it {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("bad token {tok:?}"))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| format!("missing {k}"));
    match kind {
        "conv" => Ok(LayerSpec::Conv {
            filters: get("filters")?.parse().map_err(|_| "bad filters")?,
            kernel: get("kernel")?.parse().map_err(|_| "bad kernel")?,
            stride: get("stride")?.parse().map_err(|_| "bad stride")?,
            batch_norm: get("bn")? == "1",
            activation: match get("act")? {
                "leaky" => Activation::Leaky,
                "linear" => Activation::Linear,
                a => return Err(format!("unknown activation {a:?}")),
            },
        }),
        "shortcut" => Ok(LayerSpec::Shortcut {
            from: get("from")?.parse().map_err(|_| "bad from")?,
        }),
        "route" => Ok(LayerSpec::Route {
            from: get("from")?
                .split(',')
                .map(|t| t.parse().map_err(|_| format!("bad from {t:?}")))
                .collect::<std::result::Result<Vec<i32>, String>>()?,
        }),
        "upsample" => Ok(LayerSpec::Upsample {
            factor: get("factor")?.parse().map_err(|_| "bad factor")?,
        }),
        "predict" => {
            let list: Vec<usize> = get("anchors")?
                .split(',')
                .map(|t| t.parse().map_err(|_| format!("bad anchor index {t:?}")))
                .collect::<std::result::Result<_, String>>()?;
            if list.len() != 3 {
                return Err("predict needs 3 anchor indices".into());
            }
            Ok(LayerSpec::Predict {
                anchors: [list[0], list[1], list[2]],
            })
        }
        other => Err(format!("unknown layer kind {other:?}")),
    }
}

pub fn write_weights(
    path: &Path,
    spec: &NetworkSpec,
    anchors: &AnchorSet,
    class_names: &[String],
    state: &[f32],
) -> Result<()> {
    let header = header_text(spec, anchors, class_names)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for v in state {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<WeightsFile> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Weights(WeightsError::Truncated("missing magic".into())))?;
    if magic != MAGIC {
        return Err(Error::Weights(WeightsError::BadMagic));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| Error::Weights(WeightsError::Truncated("missing version".into())))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Weights(WeightsError::BadVersion(version)));
    }
    r.read_exact(&mut word)
        .map_err(|_| Error::Weights(WeightsError::Truncated("missing header length".into())))?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)
        .map_err(|_| Error::Weights(WeightsError::Truncated("incomplete header".into())))?;
    let header = String::from_utf8(header)
        .map_err(|_| Error::Weights(WeightsError::Header("header is not UTF-8".into())))?;
    let (spec, anchors, class_names) = parse_header(&header)?;

    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() % 4 != 0 {
        return Err(Error::Weights(WeightsError::Truncated(format!(
            "parameter section is {} bytes, not a multiple of 4",
            raw.len()
        ))));
    }
    let state: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(WeightsFile {
        spec,
        anchors,
        class_names,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_roundtrip() {
        let spec = NetworkSpec::reference(416, 5);
        let anchors = AnchorSet::table_defaults();
        let names: Vec<String> = ["lte_ingress", "wave", "roll_off", "suck_out", "spike"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let text = header_text(&spec, &anchors, &names).unwrap();
        let (spec2, anchors2, names2) = parse_header(&text).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(anchors, anchors2);
        assert_eq!(names, names2);
    }

    #[test]
    fn fractional_anchor_roundtrip() {
        let spec = NetworkSpec::reference(416, 5);
        let anchors = AnchorSet::new(
            [1.5, 8.25, 23.125, 43.0625, 73.2, 109.9, 155.001, 234.75, 415.5],
            416,
        )
        .unwrap();
        let names: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        let text = header_text(&spec, &anchors, &names).unwrap();
        let (_, anchors2, _) = parse_header(&text).unwrap();
        assert_eq!(anchors, anchors2);
    }
}
