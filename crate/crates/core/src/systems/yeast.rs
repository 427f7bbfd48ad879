use std::collections::BTreeMap;

use crate::{Error, Result};

/// Rate constants of the three-module budding-yeast cell-cycle model.
///
/// There are no defaults; every constant must be supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Yeast3d {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub ki: f64,
    pub ks: f64,
    pub ka1: f64,
    pub ka2: f64,
    pub a0: f64,
}

pub const YEAST_PARAMS: [&str; 11] = [
    "j1", "j2", "j3", "k1", "k2", "k3", "ki", "ks", "ka1", "ka2", "a0",
];

impl Yeast3d {
    pub fn from_params(params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut issues = Vec::new();
        let mut get = |name: &str| match params.get(name) {
            Some(&v) if v > 0.0 && v.is_finite() => v,
            Some(&v) => {
                issues.push(format!("system.params.{name}: must be positive, got {v}"));
                f64::NAN
            }
            None => {
                issues.push(format!("system.params.{name}: missing yeast3d rate constant"));
                f64::NAN
            }
        };
        let s = Self {
            j1: get("j1"),
            j2: get("j2"),
            j3: get("j3"),
            k1: get("k1"),
            k2: get("k2"),
            k3: get("k3"),
            ki: get("ki"),
            ks: get("ks"),
            ka1: get("ka1"),
            ka2: get("ka2"),
            a0: get("a0"),
        };
        if issues.is_empty() {
            Ok(s)
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn rhs(&self, s: &[f64], dx: &mut [f64]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        dx[0] = x * x / (self.j1 * self.j1 + x * x) - self.k1 * x - x * y + self.a0;
        dx[1] = y * y / (self.j2 * self.j2 + y * y) - self.k2 * y - y * z + self.ka1 * x;
        dx[2] = self.ks * z * z / (self.j3 * self.j3 + z * z) - self.k3 * z - self.ki * z * x + self.ka2 * y;
    }
}

/// Reported locations of the G1, S and early-M states, `(z_max, x_max, y_max)`.
pub const YEAST_REFERENCE_STATES: (f64, f64, f64) = (4.342, 4.335, 4.353);
