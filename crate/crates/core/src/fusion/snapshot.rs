//! Flat key -> array parameter snapshots.
//!
//! ```json
//! {
//!   "dims": {"d_e": 32, "d_t": 48, "d_v": 48},
//!   "refine.weight": [...],
//!   ...
//!   "txt_proj.bias": [...]
//! }
//! ```
//!
//! Matrices are stored row-major. The strategy is not part of the snapshot.

use serde_json::{Map, Value};

use super::{Dims, Projection, TgsspParams};
use crate::error::{Error, Result};
use crate::math::{AffineBlockParams, Mat64, Vec64};
use crate::rank::StrategyConfig;

pub const SNAPSHOT_KEYS: [&str; 8] = [
    "refine.weight",
    "refine.bias",
    "refine.norm_gain",
    "refine.norm_bias",
    "vis_proj.weight",
    "vis_proj.bias",
    "txt_proj.weight",
    "txt_proj.bias",
];

fn array(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::from(x)).collect())
}

fn read_array(obj: &Map<String, Value>, key: &str, len: usize) -> Result<Vec<f64>> {
    let arr = obj
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::param(format!("snapshot is missing array `{key}`")))?;
    if arr.len() != len {
        return Err(Error::shape(format!("`{key}` has {} entries, expected {len}", arr.len())));
    }
    arr.iter().map(|v| v.as_f64().ok_or_else(|| Error::param(format!("`{key}` holds a non-number")))).collect()
}

fn read_dim(dims: &Map<String, Value>, key: &str) -> Result<usize> {
    dims.get(key)
        .and_then(Value::as_u64)
        .filter(|&d| d > 0)
        .map(|d| d as usize)
        .ok_or_else(|| Error::param(format!("snapshot dims lack a positive `{key}`")))
}

impl TgsspParams {
    pub fn to_snapshot(&self) -> Value {
        let Dims { d_v, d_t, d_e } = self.dims();
        let mut dims = Map::new();
        dims.insert("d_v".into(), d_v.into());
        dims.insert("d_t".into(), d_t.into());
        dims.insert("d_e".into(), d_e.into());

        let mut obj = Map::new();
        obj.insert("dims".into(), Value::Object(dims));
        let arrays: [&[f64]; 8] = [
            self.refine.weight.as_slice(),
            &self.refine.bias,
            &self.refine.norm_gain,
            &self.refine.norm_bias,
            self.vis_proj.weight.as_slice(),
            &self.vis_proj.bias,
            self.txt_proj.weight.as_slice(),
            &self.txt_proj.bias,
        ];
        for (key, data) in SNAPSHOT_KEYS.iter().zip(arrays) {
            obj.insert((*key).into(), array(data));
        }
        Value::Object(obj)
    }

    pub fn to_snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_snapshot()).expect("snapshot values are finite")
    }

    pub fn from_snapshot(doc: &Value, strategy: StrategyConfig) -> Result<Self> {
        let obj = doc.as_object().ok_or_else(|| Error::param("snapshot must be a JSON object"))?;
        if let Some(extra) = obj.keys().find(|k| *k != "dims" && !SNAPSHOT_KEYS.contains(&k.as_str())) {
            return Err(Error::param(format!("unknown snapshot key `{extra}`")));
        }
        let dims =
            obj.get("dims").and_then(Value::as_object).ok_or_else(|| Error::param("snapshot is missing `dims`"))?;
        let (d_v, d_t, d_e) = (read_dim(dims, "d_v")?, read_dim(dims, "d_t")?, read_dim(dims, "d_e")?);

        let refine = AffineBlockParams::new(
            Mat64::new(d_v, d_v, read_array(obj, "refine.weight", d_v * d_v)?)?,
            Vec64::new(read_array(obj, "refine.bias", d_v)?)?,
            Vec64::new(read_array(obj, "refine.norm_gain", d_v)?)?,
            Vec64::new(read_array(obj, "refine.norm_bias", d_v)?)?,
        )?;
        let vis_proj = Projection::new(
            Mat64::new(d_e, d_v, read_array(obj, "vis_proj.weight", d_e * d_v)?)?,
            Vec64::new(read_array(obj, "vis_proj.bias", d_e)?)?,
        )?;
        let txt_proj = Projection::new(
            Mat64::new(d_e, d_t, read_array(obj, "txt_proj.weight", d_e * d_t)?)?,
            Vec64::new(read_array(obj, "txt_proj.bias", d_e)?)?,
        )?;
        let params = TgsspParams { refine, vis_proj, txt_proj, strategy };
        params.validate()?;
        Ok(params)
    }

    pub fn from_snapshot_json(text: &str, strategy: StrategyConfig) -> Result<Self> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| Error::param(format!("snapshot is not valid JSON: {e}")))?;
        Self::from_snapshot(&doc, strategy)
    }
}
