//! Flat `key = value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are ignored.
//! Keys are the field names of the target struct, missing keys keep their
//! defaults, and unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::association::TrackerConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn line_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line { line, message: message.into() }
}

/// Key to `(line, raw value)`.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| line_err(line, format!("expected 'key = value', got '{s}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(line_err(line, format!("expected 'key = value', got '{s}'")));
        }
        if out.insert(k.to_string(), (line, v.to_string())).is_some() {
            return Err(line_err(line, format!("duplicate key '{k}'")));
        }
    }
    Ok(out)
}

struct Fields {
    pairs: BTreeMap<String, (usize, String)>,
}

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((line, v)) = self.pairs.remove(key) {
            *slot = v.parse().map_err(|e| line_err(line, format!("{key}: cannot parse '{v}': {e}")))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.pairs.into_iter().min_by_key(|(_, (line, _))| *line) {
            Some((k, (line, _))) => Err(line_err(line, format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

pub fn tracker_config_from_str(text: &str) -> Result<TrackerConfig, ConfigError> {
    let mut f = Fields { pairs: parse_pairs(text)? };
    let mut c = TrackerConfig::default();
    f.take("match_threshold", &mut c.match_threshold)?;
    f.take("new_track_threshold", &mut c.new_track_threshold)?;
    f.take("cem_gate_threshold", &mut c.cem_gate_threshold)?;
    f.take("embedding_momentum", &mut c.embedding_momentum)?;
    f.take("max_lost_frames", &mut c.max_lost_frames)?;
    f.finish()?;
    c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(c)
}

pub fn tracker_config_to_string(c: &TrackerConfig) -> String {
    format!(
        "match_threshold = {}\nnew_track_threshold = {}\ncem_gate_threshold = {}\nembedding_momentum = {}\nmax_lost_frames = {}\n",
        c.match_threshold, c.new_track_threshold, c.cem_gate_threshold, c.embedding_momentum, c.max_lost_frames
    )
}

pub fn synth_config_from_str(text: &str) -> Result<SynthConfig, ConfigError> {
    let mut f = Fields { pairs: parse_pairs(text)? };
    let mut c = SynthConfig::default();
    f.take("seed", &mut c.seed)?;
    f.take("num_frames", &mut c.num_frames)?;
    f.take("num_tracks", &mut c.num_tracks)?;
    f.take("num_categories", &mut c.num_categories)?;
    f.take("frame_height", &mut c.frame_height)?;
    f.take("frame_width", &mut c.frame_width)?;
    f.take("fraction_common", &mut c.fraction_common)?;
    f.take("p_drop", &mut c.p_drop)?;
    f.take("p_fp", &mut c.p_fp)?;
    f.take("box_jitter_sigma", &mut c.box_jitter_sigma)?;
    f.take("app_noise_sigma", &mut c.app_noise_sigma)?;
    f.take("cls_noise_sigma", &mut c.cls_noise_sigma)?;
    f.take("app_dim", &mut c.app_dim)?;
    f.take("cls_dim", &mut c.cls_dim)?;
    f.take("app_scale", &mut c.app_scale)?;
    f.finish()?;
    c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(c)
}

pub fn synth_config_to_string(c: &SynthConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
    put("seed", c.seed.to_string());
    put("num_frames", c.num_frames.to_string());
    put("num_tracks", c.num_tracks.to_string());
    put("num_categories", c.num_categories.to_string());
    put("frame_height", c.frame_height.to_string());
    put("frame_width", c.frame_width.to_string());
    put("fraction_common", c.fraction_common.to_string());
    put("p_drop", c.p_drop.to_string());
    put("p_fp", c.p_fp.to_string());
    put("box_jitter_sigma", c.box_jitter_sigma.to_string());
    put("app_noise_sigma", c.app_noise_sigma.to_string());
    put("cls_noise_sigma", c.cls_noise_sigma.to_string());
    put("app_dim", c.app_dim.to_string());
    put("cls_dim", c.cls_dim.to_string());
    put("app_scale", c.app_scale.to_string());
    s
}
