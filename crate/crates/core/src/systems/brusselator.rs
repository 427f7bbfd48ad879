use crate::integrators::OdeField;
use crate::{Error, Result};

/// Finite-difference Brusselator on `[0, 1]` with Neumann boundaries imposed
/// through reflected ghost nodes. The state is `(u₀ … u_I, v₀ … v_I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brusselator {
    pub intervals: usize,
    pub alpha: f64,
    pub a: f64,
}

impl Default for Brusselator {
    fn default() -> Self {
        Self {
            intervals: 19,
            alpha: 0.1,
            a: 0.5,
        }
    }
}

impl Brusselator {
    pub fn new(intervals: usize, alpha: f64, a: f64) -> Result<Self> {
        let mut issues = Vec::new();
        if intervals < 2 {
            issues.push(format!("system.params.intervals: need at least 2, got {intervals}"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            issues.push(format!("system.params.alpha: must be positive, got {alpha}"));
        }
        if !a.is_finite() {
            issues.push(format!("system.params.a: must be finite, got {a}"));
        }
        if issues.is_empty() {
            Ok(Self { intervals, alpha, a })
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn nodes_count(&self) -> usize {
        self.intervals + 1
    }

    pub fn dim(&self) -> usize {
        2 * self.nodes_count()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    /// Node coordinates `x₀ … x_I`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| i as f64 * self.h()).collect()
    }

    /// The homogeneous stable state `uᵢ = 1`, `vᵢ = A`.
    pub fn stable_state(&self) -> Vec<f64> {
        let n = self.nodes_count();
        let mut s = vec![1.0; 2 * n];
        s[n..].iter_mut().for_each(|v| *v = self.a);
        s
    }

    fn laplacian(w: &[f64], i: usize, inv_h2: f64) -> f64 {
        let last = w.len() - 1;
        let left = if i == 0 { w[1] } else { w[i - 1] };
        let right = if i == last { w[last - 1] } else { w[i + 1] };
        (left - 2.0 * w[i] + right) * inv_h2
    }

    pub fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        let n = self.nodes_count();
        let (u, v) = x.split_at(n);
        let (du, dv) = dx.split_at_mut(n);
        let inv_h2 = 1.0 / (self.h() * self.h());
        for i in 0..n {
            let uuv = u[i] * u[i] * v[i];
            du[i] = (Self::laplacian(u, i, inv_h2) + 1.0 + uuv - (1.0 + self.a) * u[i]) / self.alpha;
            dv[i] = Self::laplacian(v, i, inv_h2) + self.a * u[i] - uuv;
        }
    }
}

impl OdeField for Brusselator {
    fn dim(&self) -> usize {
        Brusselator::dim(self)
    }
    fn eval_into(&self, x: &[f64], dx: &mut [f64]) {
        self.rhs(x, dx)
    }
}
