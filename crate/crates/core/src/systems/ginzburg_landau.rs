use crate::integrators::OdeField;
use crate::{Error, Result};

/// Finite-difference Ginzburg-Landau equation on `[0, 1]` with homogeneous
/// Dirichlet boundaries, `u̇ᵢ = δ(uᵢ₋₁ - 2uᵢ + uᵢ₊₁)/h² - δ⁻¹V'(uᵢ)` for
/// the `I - 1` interior nodes, where `V(u) = (1 - u²)²/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GinzburgLandau {
    pub intervals: usize,
    pub delta: f64,
}

impl Default for GinzburgLandau {
    fn default() -> Self {
        Self {
            intervals: 51,
            delta: 0.1,
        }
    }
}

fn double_well(u: f64) -> f64 {
    let w = 1.0 - u * u;
    0.25 * w * w
}

impl GinzburgLandau {
    pub fn new(intervals: usize, delta: f64) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::config(format!(
                "system.params.intervals: need at least 2, got {intervals}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::config(format!("system.params.delta: must be positive, got {delta}")));
        }
        Ok(Self { intervals, delta })
    }

    pub fn dim(&self) -> usize {
        self.intervals - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    /// Node coordinates `x₁ … x_{I-1}` of the state components.
    pub fn nodes(&self) -> Vec<f64> {
        (1..self.intervals).map(|i| i as f64 * self.h()).collect()
    }

    fn at(u: &[f64], i: usize) -> f64 {
        // i indexes nodes 0..=I, state holds 1..=I-1
        if i == 0 || i > u.len() {
            0.0
        } else {
            u[i - 1]
        }
    }

    pub fn rhs(&self, u: &[f64], du: &mut [f64]) {
        let h2 = self.h() * self.h();
        for i in 1..self.intervals {
            let ui = u[i - 1];
            let lap = (Self::at(u, i - 1) - 2.0 * ui + Self::at(u, i + 1)) / h2;
            du[i - 1] = self.delta * lap - (ui * ui * ui - ui) / self.delta;
        }
    }

    /// `E_h[u] = Σ_{i=1}^{I} ½δ((uᵢ - uᵢ₋₁)/h)² + δ⁻¹V(uᵢ)` with `u₀ = u_I = 0`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let h = self.h();
        let mut e = 0.0;
        for i in 1..=self.intervals {
            let ui = Self::at(u, i);
            let s = (ui - Self::at(u, i - 1)) / h;
            e += 0.5 * self.delta * s * s + double_well(ui) / self.delta;
        }
        e
    }

    /// `∇E_h`, which equals the negated field.
    pub fn energy_gradient(&self, u: &[f64], out: &mut [f64]) {
        self.rhs(u, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }

    /// The two stable states `(u₋, u₊)`, obtained by integrating the flow from
    /// `∓sin(πx)` until the field vanishes.
    pub fn stable_states(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let bump: Vec<f64> = self
            .nodes()
            .iter()
            .map(|x| (std::f64::consts::PI * x).sin())
            .collect();
        let neg: Vec<f64> = bump.iter().map(|v| -v).collect();
        let dt = self.stable_dt();
        let minus = super::relax(self, &neg, dt, 1e-10, 10_000_000)?;
        let plus = super::relax(self, &bump, dt, 1e-10, 10_000_000)?;
        Ok((minus, plus))
    }

    /// RK4 step safely inside the stability region for states with `|u| ≤ 1.2`.
    pub fn stable_dt(&self) -> f64 {
        let h2 = self.h() * self.h();
        let lambda = 4.0 * self.delta / h2 + 3.32 / self.delta;
        (2.0 / lambda).min(1e-2)
    }
}

impl OdeField for GinzburgLandau {
    fn dim(&self) -> usize {
        GinzburgLandau::dim(self)
    }
    fn eval_into(&self, x: &[f64], dx: &mut [f64]) {
        self.rhs(x, dx)
    }
}
