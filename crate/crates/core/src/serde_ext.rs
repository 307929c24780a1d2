//! Serde adapters for extended reals. JSON has no representation for
//! `±∞` or NaN, so non-finite values travel as the strings `"inf"`,
//! `"-inf"` and `"nan"`; finite values stay plain numbers.

use std::collections::BTreeMap;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Ext(pub f64);

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

struct ExtVisitor;

impl Visitor<'_> for ExtVisitor {
    type Value = Ext;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Ext, E> {
        Ok(Ext(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Ext, E> {
        Ok(Ext(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Ext, E> {
        Ok(Ext(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Ext, E> {
        match v {
            "inf" => Ok(Ext(f64::INFINITY)),
            "-inf" => Ok(Ext(f64::NEG_INFINITY)),
            "nan" => Ok(Ext(f64::NAN)),
            _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
        }
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Ext, D::Error> {
        d.deserialize_any(ExtVisitor)
    }
}

pub(crate) mod ext_real {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Ext(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Ext::deserialize(d)?.0)
    }
}

pub(crate) mod ext_real_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Ext).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Ext>::deserialize(d)?.map(|e| e.0))
    }
}

pub(crate) mod ext_real_vec_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|xs| xs.iter().map(|&x| Ext(x)).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        Ok(Option::<Vec<Ext>>::deserialize(d)?.map(|xs| xs.into_iter().map(|e| e.0).collect()))
    }
}

pub(crate) mod ext_real_map {
    use super::*;

    pub fn serialize<S: Serializer>(v: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(v.iter().map(|(k, &x)| (k, Ext(x))))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        Ok(BTreeMap::<String, Ext>::deserialize(d)?
            .into_iter()
            .map(|(k, e)| (k, e.0))
            .collect())
    }
}
