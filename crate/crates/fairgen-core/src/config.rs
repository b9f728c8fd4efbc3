//! Flat "key = value" run configuration. Every loop input is
//! addressable; unknown keys are rejected. A snapshot emits the full
//! resolved configuration in sorted key order.

use std::path::Path;

use thiserror::Error;

use crate::trainer::TrainRunConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected key=value, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} (expected {expected})")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
}

/// Parses "key = value" lines; `#` starts a comment, blanks are skipped.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                return Err(ConfigError::Malformed {
                    line: idx + 1,
                    text: raw.to_string(),
                })
            }
        }
    }
    Ok(pairs)
}

fn parse_as<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

/// Applies pairs in order (later wins). Unknown keys are an error.
pub fn apply(cfg: &mut TrainRunConfig, pairs: &[(String, String)]) -> Result<(), ConfigError> {
    for (key, value) in pairs {
        let k = key.as_str();
        let v = value.as_str();
        match k {
            "seed" => cfg.seed = parse_as(k, v, "unsigned integer")?,
            "walk_length" => cfg.sampler.walk_length = parse_as(k, v, "unsigned integer")?,
            "walks_per_batch" => cfg.sampler.walks_per_batch = parse_as(k, v, "unsigned integer")?,
            "mix_ratio" => cfg.sampler.mix_ratio = parse_as(k, v, "number in [0,1]")?,
            "return_param" => cfg.sampler.return_param = parse_as(k, v, "positive number")?,
            "in_out_param" => cfg.sampler.in_out_param = parse_as(k, v, "positive number")?,
            "class_balanced_starts" => {
                cfg.sampler.class_balanced_starts = parse_as(k, v, "true or false")?
            }
            "embed_dim" => cfg.embed.dim = parse_as(k, v, "unsigned integer")?,
            "window" => cfg.embed.window = parse_as(k, v, "unsigned integer")?,
            "neg_samples" => cfg.embed.negative = parse_as(k, v, "unsigned integer")?,
            "embed_epochs" => cfg.embed.epochs = parse_as(k, v, "unsigned integer")?,
            "embed_lr" => cfg.embed.lr = parse_as(k, v, "positive number")?,
            "heads" => cfg.heads = parse_as(k, v, "unsigned integer")?,
            "ff_width" => cfg.ff_width = Some(parse_as(k, v, "unsigned integer")?),
            "gen_lr" => cfg.gen_lr = parse_as(k, v, "positive number")?,
            "gen_batch" => cfg.gen_batch = parse_as(k, v, "unsigned integer")?,
            "neg_weight" => cfg.neg_weight = parse_as(k, v, "non-negative number")?,
            "neg_floor" => cfg.neg_floor = parse_as(k, v, "negative number")?,
            "epochs" => cfg.epochs = parse_as(k, v, "unsigned integer")?,
            "alpha" => cfg.weights.alpha = parse_as(k, v, "non-negative number")?,
            "beta" => cfg.weights.beta = parse_as(k, v, "non-negative number")?,
            "gamma" => cfg.weights.gamma = parse_as(k, v, "non-negative number")?,
            "hidden_dim" => cfg.hidden_dim = parse_as(k, v, "unsigned integer")?,
            "disc_lr" => cfg.disc_lr = parse_as(k, v, "positive number")?,
            "batch_size" => cfg.batch_size = parse_as(k, v, "unsigned integer")?,
            "disc_iters" => cfg.disc_iters = parse_as(k, v, "unsigned integer")?,
            "cycles" => cfg.cycles = parse_as(k, v, "unsigned integer")?,
            "lambda0" => cfg.lambda0 = parse_as(k, v, "positive number")?,
            "lambda_growth" => cfg.lambda_growth = parse_as(k, v, "number above 1")?,
            "pool_cap" => cfg.pool_cap = parse_as(k, v, "unsigned integer")?,
            "gen_volume_factor" => cfg.gen_volume_factor = parse_as(k, v, "positive number")?,
            "assemble_tol" => cfg.assemble_tol = parse_as(k, v, "number in (0,1)")?,
            "objective_eval_cap" => cfg.objective_eval_cap = parse_as(k, v, "unsigned integer")?,
            "uniform_sampling" => cfg.uniform_sampling = parse_as(k, v, "true or false")?,
            "no_self_paced" => cfg.no_self_paced = parse_as(k, v, "true or false")?,
            "no_parity" => cfg.no_parity = parse_as(k, v, "true or false")?,
            "neg_init_shuffled" => cfg.neg_init_shuffled = parse_as(k, v, "true or false")?,
            "allow_isolated" => cfg.allow_isolated = parse_as(k, v, "true or false")?,
            _ => return Err(ConfigError::UnknownKey(key.clone())),
        }
    }
    Ok(())
}

pub fn load_file(path: impl AsRef<Path>, cfg: &mut TrainRunConfig) -> Result<(), ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let pairs = parse_kv_text(&text)?;
    apply(cfg, &pairs)
}

/// Full resolved configuration, one "key = value" per line, sorted.
pub fn snapshot(cfg: &TrainRunConfig) -> String {
    let mut rows: Vec<(&str, String)> = vec![
        ("seed", cfg.seed.to_string()),
        ("walk_length", cfg.sampler.walk_length.to_string()),
        ("walks_per_batch", cfg.sampler.walks_per_batch.to_string()),
        ("mix_ratio", cfg.sampler.mix_ratio.to_string()),
        ("return_param", cfg.sampler.return_param.to_string()),
        ("in_out_param", cfg.sampler.in_out_param.to_string()),
        (
            "class_balanced_starts",
            cfg.sampler.class_balanced_starts.to_string(),
        ),
        ("embed_dim", cfg.embed.dim.to_string()),
        ("window", cfg.embed.window.to_string()),
        ("neg_samples", cfg.embed.negative.to_string()),
        ("embed_epochs", cfg.embed.epochs.to_string()),
        ("embed_lr", cfg.embed.lr.to_string()),
        ("heads", cfg.heads.to_string()),
        ("ff_width", cfg.resolved_ff_width().to_string()),
        ("gen_lr", cfg.gen_lr.to_string()),
        ("gen_batch", cfg.gen_batch.to_string()),
        ("neg_weight", cfg.neg_weight.to_string()),
        ("neg_floor", cfg.neg_floor.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("alpha", cfg.weights.alpha.to_string()),
        ("beta", cfg.weights.beta.to_string()),
        ("gamma", cfg.weights.gamma.to_string()),
        ("hidden_dim", cfg.hidden_dim.to_string()),
        ("disc_lr", cfg.disc_lr.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("disc_iters", cfg.disc_iters.to_string()),
        ("cycles", cfg.cycles.to_string()),
        ("lambda0", cfg.lambda0.to_string()),
        ("lambda_growth", cfg.lambda_growth.to_string()),
        ("pool_cap", cfg.pool_cap.to_string()),
        ("gen_volume_factor", cfg.gen_volume_factor.to_string()),
        ("assemble_tol", cfg.assemble_tol.to_string()),
        ("objective_eval_cap", cfg.objective_eval_cap.to_string()),
        ("uniform_sampling", cfg.uniform_sampling.to_string()),
        ("no_self_paced", cfg.no_self_paced.to_string()),
        ("no_parity", cfg.no_parity.to_string()),
        ("neg_init_shuffled", cfg.neg_init_shuffled.to_string()),
        ("allow_isolated", cfg.allow_isolated.to_string()),
    ];
    rows.sort_by_key(|&(k, _)| k);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_apply_roundtrip() {
        let text = "# run profile\nseed = 9\nwalk_length=12\nmix_ratio = 0.25\nno_parity = true\n";
        let pairs = parse_kv_text(text).unwrap();
        let mut cfg = TrainRunConfig::default();
        apply(&mut cfg, &pairs).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.sampler.walk_length, 12);
        assert_eq!(cfg.sampler.mix_ratio, 0.25);
        assert!(cfg.no_parity);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = TrainRunConfig::default();
        let err = apply(&mut cfg, &[("walk_lenght".into(), "10".into())]);
        assert!(matches!(err, Err(ConfigError::UnknownKey(k)) if k == "walk_lenght"));
    }

    #[test]
    fn bad_value_reports_key() {
        let mut cfg = TrainRunConfig::default();
        let err = apply(&mut cfg, &[("cycles".into(), "three".into())]);
        match err {
            Err(ConfigError::BadValue { key, .. }) => assert_eq!(key, "cycles"),
            other => panic!("expected bad-value error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_kv_text("seed = 1\ncycles\n");
        assert!(matches!(err, Err(ConfigError::Malformed { line: 2, .. })));
    }

    #[test]
    fn snapshot_contains_every_key_and_reparses() {
        let cfg = TrainRunConfig::default();
        let snap = snapshot(&cfg);
        assert_eq!(snap.lines().count(), 38);
        let pairs = parse_kv_text(&snap).unwrap();
        let mut cfg2 = TrainRunConfig::default();
        apply(&mut cfg2, &pairs).unwrap();
        assert_eq!(snapshot(&cfg2), snap);
        // Sorted output is deterministic.
        let mut keys: Vec<&str> = snap.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        keys.dedup();
        assert_eq!(keys.len(), 38);
    }

    #[test]
    fn later_pairs_override_earlier() {
        let mut cfg = TrainRunConfig::default();
        apply(
            &mut cfg,
            &[("seed".into(), "1".into()), ("seed".into(), "2".into())],
        )
        .unwrap();
        assert_eq!(cfg.seed, 2);
    }
}
