//! Run configuration: defaults, `key = value` files and dotted overrides.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rain::RainParams;
use crate::rain_render::RainRenderParams;
use crate::shading::RenderParams;
use crate::swe::DEFAULT_GRAVITY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds per frame.
    pub dt: f64,
    pub frames: usize,
    pub seed: u64,
    pub gravity: f64,
    /// Initial water surface height; `None` starts at the lowest ground
    /// point, i.e. dry.
    pub fill_level: Option<f64>,
    /// View to render; the first view by name when unset.
    pub view: Option<String>,
    /// Output size; the view's own size when unset.
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub sun_dir: Option<Vec3>,
    pub sun_color: Option<Vec3>,
    /// `simulate` writes a surface snapshot every this many frames.
    pub snapshot_every: usize,
    pub rain: RainParams,
    pub render: RenderParams,
    pub rain_render: RainRenderParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            frames: 30,
            seed: 0,
            gravity: DEFAULT_GRAVITY,
            fill_level: None,
            view: None,
            width: None,
            height: None,
            sun_dir: None,
            sun_color: None,
            snapshot_every: 10,
            rain: RainParams::default(),
            render: RenderParams::default(),
            rain_render: RainRenderParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::Config(format!("gravity must be positive, got {}", self.gravity)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        if self.width == Some(0) || self.height == Some(0) {
            return Err(Error::Config("width and height must be positive".into()));
        }
        if let Some(d) = self.sun_dir {
            if !(d.length() > 1e-9) {
                return Err(Error::Config("sun_dir must be nonzero".into()));
            }
        }
        self.rain.validate()?;
        self.render.validate()?;
        self.rain_render.validate()
    }

    /// Apply one `key = value` assignment. Keys are dotted paths into the
    /// configuration (`rain.spawn_rate`, `render.kappa`, ...). Vectors take
    /// three numbers separated by spaces or commas; `none` clears an
    /// optional value.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let slot = lookup(&mut tree, key).ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        *slot = parse_leaf(slot, key, value.trim())?;
        let updated: SimConfig =
            serde_json::from_value(tree).map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))?;
        *self = updated;
        Ok(())
    }

    /// Apply a `KEY=VALUE` string as given on the command line.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{assignment}`")))?;
        self.apply_override(k.trim(), v)
    }

    /// Parse a config file of `key = value` lines on top of the defaults.
    /// `#` starts a comment; `[section]` headers prefix following keys.
    pub fn from_text(text: &str) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_owned();
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = if section.is_empty() { k.trim().to_owned() } else { format!("{section}.{}", k.trim()) };
            cfg.apply_override(&key, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every settable key, in dotted form.
    pub fn keys() -> Vec<String> {
        fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
            match v {
                Value::Object(m) if !is_vec3(m) => {
                    for (k, child) in m {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, child, out);
                    }
                }
                _ => out.push(prefix.to_owned()),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(SimConfig::default()).expect("config serializes"), &mut out);
        out
    }
}

fn is_vec3(m: &Map<String, Value>) -> bool {
    m.len() == 3 && m.contains_key("x") && m.contains_key("y") && m.contains_key("z")
}

fn lookup<'a>(tree: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut node = tree;
    for part in key.split('.') {
        node = node.as_object_mut()?.get_mut(part)?;
    }
    Some(node)
}

fn numbers(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("`{key}`: `{t}` is not a number"))))
        .collect()
}

fn number(key: &str, value: &str) -> Result<Value> {
    if let Ok(n) = value.parse::<u64>() {
        return Ok(Value::from(n));
    }
    if let Ok(n) = value.parse::<i64>() {
        return Ok(Value::from(n));
    }
    let f: f64 = value.parse().map_err(|_| Error::Config(format!("`{key}`: `{value}` is not a number")))?;
    serde_json::Number::from_f64(f)
        .map(Value::Number)
        .ok_or_else(|| Error::Config(format!("`{key}`: value must be finite")))
}

fn vec3(key: &str, value: &str) -> Result<Value> {
    match numbers(key, value)?[..] {
        [x, y, z] => Ok(serde_json::json!({ "x": x, "y": y, "z": z })),
        ref other => Err(Error::Config(format!("`{key}` takes 3 numbers, got {}", other.len()))),
    }
}

fn parse_leaf(current: &Value, key: &str, value: &str) -> Result<Value> {
    if value.eq_ignore_ascii_case("none") {
        return Ok(Value::Null);
    }
    match current {
        Value::Bool(_) => match value {
            "true" | "1" | "yes" | "on" => Ok(Value::Bool(true)),
            "false" | "0" | "no" | "off" => Ok(Value::Bool(false)),
            _ => Err(Error::Config(format!("`{key}`: `{value}` is not a boolean"))),
        },
        Value::Number(_) => number(key, value),
        Value::String(_) => Ok(Value::String(value.to_owned())),
        Value::Object(m) if is_vec3(m) => vec3(key, value),
        Value::Object(_) => Err(Error::Config(format!("`{key}` is a section, not a value"))),
        Value::Array(_) => Err(Error::Config(format!("`{key}` cannot be set directly"))),
        Value::Null => {
            // Optional slot: infer from the text and let deserialization
            // reject a wrong kind.
            if let Ok(n) = number(key, value) {
                Ok(n)
            } else if numbers(key, value).map(|v| v.len() == 3).unwrap_or(false) {
                vec3(key, value)
            } else {
                Ok(Value::String(value.to_owned()))
            }
        }
    }
}
