use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use crate::error::{Error, Result};

/// Keyed model parameters as they appear in a run configuration.
pub type ModelParams = BTreeMap<String, Value>;

/// Typed access to [`ModelParams`] that remembers which keys were read, so
/// leftover keys can be reported as errors.
pub struct ParamReader<'a> {
    model: &'a str,
    params: &'a ModelParams,
    seen: RefCell<BTreeSet<&'a str>>,
}

impl<'a> ParamReader<'a> {
    pub fn new(model: &'a str, params: &'a ModelParams) -> Self {
        Self {
            model,
            params,
            seen: RefCell::new(BTreeSet::new()),
        }
    }

    fn lookup(&self, key: &str) -> Option<&'a Value> {
        let (k, v) = self.params.get_key_value(key)?;
        self.seen.borrow_mut().insert(k.as_str());
        Some(v)
    }

    fn bad(&self, key: &str, what: &str) -> Error {
        Error::InvalidParameter(format!("model `{}`: parameter `{key}` must be {what}", self.model))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.lookup(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.bad(key, "a finite number")),
        }
    }

    pub fn positive_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.bad(key, "positive"))
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.lookup(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| self.bad(key, "a nonnegative integer")),
        }
    }

    /// A vector given either as an array or as a scalar broadcast to `len`.
    pub fn vec_or(&self, key: &str, len: usize, default: f64) -> Result<Vec<f64>> {
        match self.lookup(key) {
            None => Ok(vec![default; len]),
            Some(Value::Array(items)) => {
                if items.len() != len {
                    return Err(self.bad(key, &format!("an array of length {len}")));
                }
                items
                    .iter()
                    .map(|v| v.as_f64().filter(|x| x.is_finite()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| self.bad(key, "an array of finite numbers"))
            }
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(|x| vec![x; len])
                .ok_or_else(|| self.bad(key, "a number or an array")),
        }
    }

    /// A row-major square matrix given as an array of rows.
    pub fn matrix(&self, key: &str, d: usize) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.lookup(key) else {
            return Ok(None);
        };
        let what = format!("a {d}×{d} array of rows");
        let rows = v.as_array().ok_or_else(|| self.bad(key, &what))?;
        if rows.len() != d {
            return Err(self.bad(key, &what));
        }
        let mut out = Vec::with_capacity(d * d);
        for row in rows {
            let row = row.as_array().filter(|r| r.len() == d).ok_or_else(|| self.bad(key, &what))?;
            for x in row {
                out.push(x.as_f64().filter(|x| x.is_finite()).ok_or_else(|| self.bad(key, &what))?);
            }
        }
        Ok(Some(out))
    }

    /// Fails on any key that was never read.
    pub fn finish(self) -> Result<()> {
        let seen = self.seen.into_inner();
        let unknown: Vec<&str> = self
            .params
            .keys()
            .map(String::as_str)
            .filter(|k| !seen.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "model `{}` does not accept parameter(s) {}",
                self.model,
                unknown.join(", ")
            )))
        }
    }
}
