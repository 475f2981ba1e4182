//! Flat `key=value` config files for the detect and synth commands.
//!
//! Keys mirror the config struct fields. Blank lines and `#` comments are
//! skipped; unknown keys and malformed values are errors that name the key.

use anyhow::{anyhow, bail, Context, Result};
use npdetect_core::labeling::Connectivity;
use npdetect_core::morphology::StructuringElement;
use npdetect_core::pipeline::{DetectConfig, Separation, ThresholdMode};
use npdetect_core::synthgen::{Blur, SynthConfig};

fn entries(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value, found {:?}", i + 1, line))?;
        out.push((key.trim(), value.trim()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("key '{key}': invalid value {value:?} ({e})"))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|item| parse(key, item.trim()))
        .collect()
}

fn parse_pair<T: std::str::FromStr + Copy>(key: &str, value: &str) -> Result<(T, T)>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = parse_list(key, value)?;
    if items.len() != 2 {
        bail!(
            "key '{key}': expected two comma-separated values, found {}",
            items.len()
        );
    }
    Ok((items[0], items[1]))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("key '{key}': expected true or false, found {other:?}"),
    }
}

pub fn parse_detect_config(text: &str) -> Result<DetectConfig> {
    let mut cfg = DetectConfig::default();
    let mut fixed_thresholds: Option<Vec<u8>> = None;
    let mut wants_fixed = false;
    for (key, value) in entries(text)? {
        match key {
            "max_iterations" => cfg.max_iterations = parse(key, value)?,
            "erode_schedule" => cfg.erode_schedule = parse_list(key, value)?,
            "dilate_schedule" => cfg.dilate_schedule = parse_list(key, value)?,
            "connectivity" => {
                cfg.connectivity = match value {
                    "four" => Connectivity::Four,
                    "eight" => Connectivity::Eight,
                    other => bail!("key '{key}': expected four or eight, found {other:?}"),
                }
            }
            "min_area" => cfg.min_area = parse(key, value)?,
            "se" => {
                cfg.se = match value {
                    "square3" => StructuringElement::square3(),
                    "cross3" => StructuringElement::cross3(),
                    other => bail!("key '{key}': expected square3 or cross3, found {other:?}"),
                }
            }
            "threshold_mode" => match value {
                "otsu" => {
                    cfg.threshold_mode = ThresholdMode::OtsuPerIteration;
                    wants_fixed = false;
                }
                "fixed" => wants_fixed = true,
                other => bail!("key '{key}': expected otsu or fixed, found {other:?}"),
            },
            "fixed_thresholds" => fixed_thresholds = Some(parse_list(key, value)?),
            "threshold_floor" => cfg.threshold_floor = parse(key, value)?,
            "separation" => {
                cfg.separation = match value {
                    "morphological" => Separation::Morphological,
                    "watershed" => Separation::Watershed,
                    other => {
                        bail!("key '{key}': expected morphological or watershed, found {other:?}")
                    }
                }
            }
            "watershed_min_distance" => cfg.watershed_min_distance = parse(key, value)?,
            "drop_border" => cfg.drop_border = parse_bool(key, value)?,
            other => bail!("unknown config key '{other}'"),
        }
    }
    if wants_fixed {
        let seq =
            fixed_thresholds.context("threshold_mode=fixed requires the fixed_thresholds key")?;
        cfg.threshold_mode = ThresholdMode::Fixed(seq);
    }
    Ok(cfg)
}

pub fn parse_synth_config(text: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    let mut min_separation: Option<f64> = None;
    for (key, value) in entries(text)? {
        match key {
            "width" => cfg.width = parse(key, value)?,
            "height" => cfg.height = parse(key, value)?,
            "background_level" => cfg.background_level = parse(key, value)?,
            "bright_range" => cfg.bright_range = parse_pair(key, value)?,
            "faint_range" => cfg.faint_range = parse_pair(key, value)?,
            "n_bright" => cfg.n_bright = parse(key, value)?,
            "n_faint" => cfg.n_faint = parse(key, value)?,
            "radius_range" => cfg.radius_range = parse_pair(key, value)?,
            "min_separation" => min_separation = Some(parse(key, value)?),
            "noise_sigma" => cfg.noise_sigma = parse(key, value)?,
            "blur" => {
                cfg.blur = match value {
                    "none" => Blur::None,
                    "box3" => Blur::Box3,
                    other => bail!("key '{key}': expected none or box3, found {other:?}"),
                }
            }
            "seed" => cfg.seed = parse(key, value)?,
            other => bail!("unknown config key '{other}'"),
        }
    }
    // Unless set explicitly, keep disks disjoint with a visible gap.
    cfg.min_separation = min_separation.unwrap_or(2.0 * cfg.radius_range.1 + 2.0);
    Ok(cfg)
}
