//! Flat `key = value` configuration files: TOML without tables. Values are
//! kept as text so command-line overrides (`--set key=value`) merge with
//! file values uniformly; lists are comma separated, `classes = [2, 4, 5]`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::{LossConfig, VaClassSource, VarianceForm};
use crate::mosaic::MosaicPolicy;
use crate::synth::SceneSpec;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    /// Parses a flat TOML document. Nested tables are rejected; arrays of
    /// scalars are stored comma separated.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Format(e.message().to_string()))?;
        let mut entries = BTreeMap::new();
        for (key, value) in table {
            let text = match &value {
                toml::Value::Array(items) => items
                    .iter()
                    .map(|v| scalar_text(&key, v))
                    .collect::<Result<Vec<_>>>()?
                    .join(", "),
                v => scalar_text(&key, v)?,
            };
            entries.insert(key, text);
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Canonical `key = value` text, sorted by key.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
        inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                unquote(s)
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse element {s:?}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

fn scalar_text(key: &str, value: &toml::Value) -> Result<String> {
    match value {
        toml::Value::String(v) => Ok(v.clone()),
        toml::Value::Integer(v) => Ok(v.to_string()),
        toml::Value::Float(v) => Ok(v.to_string()),
        toml::Value::Boolean(v) => Ok(v.to_string()),
        _ => Err(Error::Format(format!(
            "{key}: only flat scalars and arrays of scalars are supported"
        ))),
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

impl FromStr for VarianceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-2-norm" | "squared" | "squared-norm" => Ok(Self::SquaredNorm),
            "2-norm" | "norm" => Ok(Self::Norm),
            other => Err(Error::Config(format!("unknown variance form {other:?}"))),
        }
    }
}

impl FromStr for VaClassSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predicted" => Ok(Self::Predicted),
            "label" => Ok(Self::Label),
            other => Err(Error::Config(format!("unknown VA class source {other:?}"))),
        }
    }
}

impl LossConfig {
    /// Reads `tau`, `gamma`, `variance_form`, `va_class`.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            tau: kv.get_or("tau", d.tau)?,
            gamma: kv.get_or("gamma", d.gamma)?,
            variance_form: kv.get_or("variance_form", d.variance_form)?,
            va_class: kv.get_or("va_class", d.va_class)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TrainConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            patch_size: kv.get_or("patch_size", d.patch_size)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            learning_rate: kv.get_or("learning_rate", d.learning_rate)?,
            momentum: kv.get_or("momentum", d.momentum)?,
            seed: kv.get_or("seed", d.seed)?,
            warmup_epochs: kv.get_or("warmup_epochs", d.warmup_epochs)?,
            patches_per_epoch: kv.get_or("patches_per_epoch", d.patches_per_epoch)?,
            loss: LossConfig::from_kv(kv)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl MosaicPolicy {
    /// Overrides `tile`, `overlap`, `blend` on top of `base`.
    pub fn from_kv(kv: &KeyValues, base: MosaicPolicy) -> Result<Self> {
        Ok(Self {
            tile: kv.get_or("tile", base.tile)?,
            overlap: kv.get_or("overlap", base.overlap)?,
            blend: kv.get_or("blend", base.blend)?,
        })
    }
}

impl SceneSpec {
    /// Starts from [`SceneSpec::easy`] and overrides any keys present.
    /// `class_means` is a flat list of RGB triples.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::easy();
        let classes: Vec<u8> = kv.get_list("classes")?.unwrap_or(d.classes.clone());
        let fractions = match kv.get_list::<f64>("fractions")? {
            Some(f) => f,
            None if classes.len() == d.classes.len() => d.fractions.clone(),
            None => vec![1.0 / classes.len().max(1) as f64; classes.len()],
        };
        let class_means = match kv.get_list::<f32>("class_means")? {
            Some(flat) => {
                if flat.len() % 3 != 0 {
                    return Err(Error::Config("class_means must hold RGB triples".into()));
                }
                flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
            }
            None if classes.len() == d.classes.len() => d.class_means.clone(),
            None => {
                return Err(Error::Config(
                    "class_means required when classes change".into(),
                ))
            }
        };
        let road_mean = match kv.get_list::<f32>("road_mean")? {
            Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
            Some(_) => return Err(Error::Config("road_mean must be an RGB triple".into())),
            None => d.road_mean,
        };
        let spec = Self {
            width: kv.get_or("width", d.width)?,
            height: kv.get_or("height", d.height)?,
            classes,
            fractions,
            class_means,
            road_mean,
            noise_sigma: kv.get_or("noise_sigma", d.noise_sigma)?,
            feature_size: kv.get_or("feature_size", d.feature_size)?,
            label_noise: kv.get_or("label_noise", d.label_noise)?,
            roads: kv.get_or("roads", d.roads)?,
            road_width_px: kv.get_or("road_width_px", d.road_width_px)?,
            easy: kv.get_or("easy", d.easy)?,
            seed: kv.get_or("scene_seed", d.seed)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let kv =
            KeyValues::parse("# run\ntau = 0.8\nname = \"a # b\" # trailing\nclasses = [2, 4]\n")
                .unwrap();
        assert_eq!(kv.get::<f64>("tau").unwrap(), Some(0.8));
        assert_eq!(kv.get_str("name"), Some("a # b"));
        assert_eq!(kv.get_list::<u8>("classes").unwrap(), Some(vec![2, 4]));
        assert_eq!(kv.get::<u32>("missing").unwrap(), None);
    }

    #[test]
    fn rejects_sections_duplicates_and_garbage() {
        assert!(KeyValues::parse("[train]\nx = 1").is_err());
        assert!(KeyValues::parse("x = [[1], [2]]").is_err());
        assert!(KeyValues::parse("x = 1\nx = 2").is_err());
        assert!(KeyValues::parse("just words").is_err());
        let kv = KeyValues::parse("epochs = \"many\"").unwrap();
        assert!(TrainConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn loss_keys() {
        let kv = KeyValues::parse(
            "tau = 0.6\ngamma = 0.1\nvariance_form = \"2-norm\"\nva_class = \"label\"",
        )
        .unwrap();
        let c = LossConfig::from_kv(&kv).unwrap();
        assert_eq!(c.tau, 0.6);
        assert_eq!(c.variance_form, VarianceForm::Norm);
        assert_eq!(c.va_class, VaClassSource::Label);
        assert!(LossConfig::from_kv(&KeyValues::parse("tau = 1.5").unwrap()).is_err());
    }

    #[test]
    fn scene_overrides() {
        let kv =
            KeyValues::parse("width = 200\nheight = 100\nlabel_noise = 0.3\nroads = 0").unwrap();
        let s = SceneSpec::from_kv(&kv).unwrap();
        assert_eq!((s.width, s.height, s.roads), (200, 100, 0));
        assert_eq!(s.classes.len(), 5);
    }
}
