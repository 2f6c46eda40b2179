//! JSON messages exchanged with the live control service.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Upper bound on the rain intensity multiplier.
pub const MAX_INTENSITY: f64 = 10.0;

/// Parameters a client may change while the simulation runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiveParams {
    /// Multiplier on the configured spawn rate, in `[0, 10]`.
    pub rain_intensity: f64,
    /// Horizontal wind added to the fall velocity, m/s.
    pub wind: [f64; 2],
    /// Meters added to the initial water level.
    pub water_level_offset: f64,
    pub paused: bool,
    pub view: String,
}

impl LiveParams {
    pub fn new(view: impl Into<String>) -> Self {
        Self { rain_intensity: 1.0, wind: [0.0, 0.0], water_level_offset: 0.0, paused: false, view: view.into() }
    }

    /// Merge an update; the intensity is clamped to `[0, MAX_INTENSITY]`.
    pub fn merged(&self, update: &ParamsUpdate) -> LiveParams {
        let mut p = self.clone();
        if let Some(v) = update.rain_intensity {
            p.rain_intensity = v.clamp(0.0, MAX_INTENSITY);
        }
        if let Some(w) = update.wind {
            p.wind = w;
        }
        if let Some(o) = update.water_level_offset {
            p.water_level_offset = o;
        }
        if let Some(b) = update.paused {
            p.paused = b;
        }
        if let Some(v) = &update.view {
            p.view = v.clone();
        }
        p
    }
}

/// A partial [`LiveParams`]; absent fields are left unchanged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamsUpdate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rain_intensity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wind: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub water_level_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paused: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view: Option<String>,
}

/// A rejected update, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub error: String,
}

impl FieldError {
    pub fn new(field: &str, error: impl Into<String>) -> Self {
        Self { field: field.to_owned(), error: error.into() }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.error)
    }
}

impl std::error::Error for FieldError {}

fn finite(field: &str, v: &Value) -> Result<f64, FieldError> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| FieldError::new(field, "expected a finite number"))
}

impl ParamsUpdate {
    /// Validate a JSON body field by field.
    pub fn from_json(body: &Value) -> Result<ParamsUpdate, FieldError> {
        let obj = body.as_object().ok_or_else(|| FieldError::new("body", "expected a JSON object"))?;
        let mut u = ParamsUpdate::default();
        for (key, v) in obj {
            match key.as_str() {
                "rain_intensity" => u.rain_intensity = Some(finite(key, v)?),
                "water_level_offset" => u.water_level_offset = Some(finite(key, v)?),
                "wind" => {
                    let arr =
                        v.as_array().filter(|a| a.len() == 2).ok_or_else(|| FieldError::new(key, "expected [x, y]"))?;
                    u.wind = Some([finite(key, &arr[0])?, finite(key, &arr[1])?]);
                }
                "paused" => u.paused = Some(v.as_bool().ok_or_else(|| FieldError::new(key, "expected a boolean"))?),
                "view" => {
                    u.view = Some(v.as_str().ok_or_else(|| FieldError::new(key, "expected a string"))?.to_owned())
                }
                other => return Err(FieldError::new(other, "unknown field")),
            }
        }
        Ok(u)
    }
}

/// Snapshot of the running simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    /// Simulated seconds.
    pub time: f64,
    /// Frames produced per wall-clock second, smoothed.
    pub fps: f64,
    pub params: LiveParams,
    pub sum_h: f64,
    pub drops_alive: usize,
    pub frame_index: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn partial_update_and_clamp() {
        let p = LiveParams::new("main");
        let u = ParamsUpdate::from_json(&json!({"rain_intensity": 20, "paused": true})).unwrap();
        let q = p.merged(&u);
        assert_eq!(q.rain_intensity, 10.0);
        assert!(q.paused);
        assert_eq!(q.view, "main");
        let u = ParamsUpdate::from_json(&json!({"rain_intensity": -1})).unwrap();
        assert_eq!(p.merged(&u).rain_intensity, 0.0);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ParamsUpdate::from_json(&json!({"wind": [1]})).unwrap_err();
        assert_eq!(e.field, "wind");
        let e = ParamsUpdate::from_json(&json!({"rain_intensity": "lots"})).unwrap_err();
        assert_eq!(e.field, "rain_intensity");
        let e = ParamsUpdate::from_json(&json!({"colour": 1})).unwrap_err();
        assert_eq!(e.field, "colour");
        assert_eq!(ParamsUpdate::from_json(&json!([1])).unwrap_err().field, "body");
    }
}
