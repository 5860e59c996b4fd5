use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Direction of the comparison between estimate and bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// estimate <= bound
    AtMost,
    /// estimate >= bound
    AtLeast,
    /// estimate > bound
    Above,
}

impl Check {
    /// Verdict with a three-standard-error band around the estimate. A band
    /// that straddles the bound is inconclusive.
    pub fn verdict(self, estimate: f64, stderr: f64, bound: f64) -> Verdict {
        if estimate.is_nan() {
            return Verdict::Fail;
        }
        let band = 3.0 * stderr;
        let (lo, hi) = (estimate - band, estimate + band);
        match self {
            Check::AtMost => {
                if hi <= bound {
                    Verdict::Pass
                } else if lo > bound {
                    Verdict::Fail
                } else {
                    Verdict::Inconclusive
                }
            }
            Check::AtLeast => {
                if lo >= bound {
                    Verdict::Pass
                } else if hi < bound {
                    Verdict::Fail
                } else {
                    Verdict::Inconclusive
                }
            }
            Check::Above => {
                if lo > bound {
                    Verdict::Pass
                } else if hi <= bound {
                    Verdict::Fail
                } else {
                    Verdict::Inconclusive
                }
            }
        }
    }
}

/// A named estimate, its Monte Carlo standard error and the verdict against a
/// declared bound or tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub verdict: Verdict,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
}

impl DiagnosticReport {
    pub fn new(name: impl Into<String>, estimate: f64, stderr: f64, bound: f64, check: Check) -> Self {
        Self {
            name: name.into(),
            estimate,
            stderr,
            bound,
            verdict: check.verdict(estimate, stderr, bound),
            metadata: BTreeMap::new(),
        }
    }

    /// A report whose verdict was decided by the caller.
    pub fn with_verdict(name: impl Into<String>, estimate: f64, stderr: f64, bound: f64, verdict: Verdict) -> Self {
        Self {
            name: name.into(),
            estimate,
            stderr,
            bound,
            verdict,
            metadata: BTreeMap::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<Value>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}
