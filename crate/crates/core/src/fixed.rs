//! Fixed-precision float serialization so records are byte-stable across runs.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::Serializer;

pub const DECIMALS: i32 = 6;

pub fn round(v: f64) -> f64 {
    let scale = 10f64.powi(DECIMALS);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round(*v))
}

pub fn opt_f64<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_some(&round(*x)),
        None => s.serialize_none(),
    }
}

pub fn map_f64<S: Serializer>(v: &BTreeMap<u32, f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut m = s.serialize_map(Some(v.len()))?;
    for (k, x) in v {
        m.serialize_entry(k, &round(*x))?;
    }
    m.end()
}

pub fn vec_f64<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| round(*x)))
}
