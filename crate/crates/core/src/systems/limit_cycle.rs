/// Planar system with a stable limit cycle on the ellipse
/// `q(x, y) = (x-a)² + (x-a)(y-b) + (y-b)² = 1/2` and quasipotential
/// `U = (q - 1/2)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitCycle2d {
    pub a: f64,
    pub b: f64,
}

impl Default for LimitCycle2d {
    fn default() -> Self {
        Self { a: 1.0, b: 2.5 }
    }
}

impl LimitCycle2d {
    pub fn q(&self, x: &[f64]) -> f64 {
        let (u, v) = (x[0] - self.a, x[1] - self.b);
        u * u + u * v + v * v
    }

    pub fn quasipotential(&self, x: &[f64]) -> f64 {
        let w = self.q(x) - 0.5;
        w * w
    }

    /// `(∇V, g)` with `V = U/2`.
    pub fn decomposition(&self, x: &[f64]) -> ([f64; 2], [f64; 2]) {
        let (u, v) = (x[0] - self.a, x[1] - self.b);
        let w = self.q(x) - 0.5;
        (
            [w * (2.0 * u + v), w * (u + 2.0 * v)],
            [-2.0 * (u + 2.0 * v), 2.0 * (2.0 * u + v)],
        )
    }

    pub fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        let (gv, g) = self.decomposition(x);
        dx[0] = -gv[0] + g[0];
        dx[1] = -gv[1] + g[1];
    }
}
