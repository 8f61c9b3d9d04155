//! Training config files: flat `key=value` lines mirroring the TrainConfig
//! field names, `#` comments allowed. CLI flags override file values.

use std::path::Path;

use rxdet::train::TrainConfig;
use rxdet::{Error, Result};

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = TrainConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected key=value", path.display(), idx + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        apply_kv(&mut cfg, key, value)
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), idx + 1)))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_kv(cfg: &mut TrainConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
        value.parse::<T>().map_err(|_| format!("bad value {value:?} for {key}"))
    }
    match key {
        "learning_rate" => cfg.learning_rate = parse(key, value)?,
        "momentum" => cfg.momentum = parse(key, value)?,
        "weight_decay" => cfg.weight_decay = parse(key, value)?,
        "mini_batch" => cfg.mini_batch = parse(key, value)?,
        "burn_in" => cfg.burn_in = parse(key, value)?,
        "ignore_threshold" => cfg.ignore_threshold = parse(key, value)?,
        "lambda_obj" => cfg.lambda_obj = parse(key, value)?,
        "lambda_background" => cfg.lambda_background = parse(key, value)?,
        "max_batches" => cfg.max_batches = parse(key, value)?,
        "patience" => cfg.patience = parse(key, value)?,
        "eval_interval" => cfg.eval_interval = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "eval_conf_threshold" => cfg.eval_conf_threshold = parse(key, value)?,
        "eval_nms_iou" => cfg.eval_nms_iou = parse(key, value)?,
        "augment" => {
            cfg.augment = match parse::<bool>(key, value)? {
                true => Some(cfg.augment.clone().unwrap_or_default()),
                false => None,
            }
        }
        other => return Err(format!("unknown config key {other:?}")),
    }
    Ok(())
}
