/// Three-dimensional system with stable equilibria at `(±1, 0, 0)` and a
/// saddle at the origin.
///
/// Its exact quasipotential is `U = (1 - x²)² + y² + z²`, with orthogonal
/// decomposition `V = U/2`, `g = (-(y + z), 2(x³ - x), 2(x³ - x))`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bistable3d;

impl Bistable3d {
    pub fn rhs(x: &[f64], dx: &mut [f64]) {
        let (a, b, c) = (x[0], x[1], x[2]);
        let cubic = a * a * a - a;
        dx[0] = -2.0 * cubic - (b + c);
        dx[1] = -b + 2.0 * cubic;
        dx[2] = -c + 2.0 * cubic;
    }

    pub fn quasipotential(x: &[f64]) -> f64 {
        let w = 1.0 - x[0] * x[0];
        w * w + x[1] * x[1] + x[2] * x[2]
    }

    /// `(∇V, g)` of the exact decomposition.
    pub fn decomposition(x: &[f64]) -> ([f64; 3], [f64; 3]) {
        let cubic = x[0] * x[0] * x[0] - x[0];
        (
            [2.0 * cubic, x[1], x[2]],
            [-(x[1] + x[2]), 2.0 * cubic, 2.0 * cubic],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equilibria_and_plug_in_value() {
        let mut dx = [0.0; 3];
        Bistable3d::rhs(&[0.0, 0.0, 0.0], &mut dx);
        assert_eq!(dx, [0.0; 3]);
        Bistable3d::rhs(&[1.0, 0.0, 0.0], &mut dx);
        assert_eq!(dx, [0.0; 3]);
        Bistable3d::rhs(&[0.5, 0.2, -0.1], &mut dx);
        let want = [0.65, -0.95, -0.65];
        for i in 0..3 {
            assert!((dx[i] - want[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_decomposition_is_orthogonal_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            ];
            let (gv, g) = Bistable3d::decomposition(&x);
            let dot: f64 = gv.iter().zip(&g).map(|(a, b)| a * b).sum();
            assert!(dot.abs() <= 1e-12);
            let mut f = [0.0; 3];
            Bistable3d::rhs(&x, &mut f);
            for i in 0..3 {
                assert_eq!(f[i], g[i] - gv[i]);
            }
            // ∇V = ∇U / 2 by finite differences
            let h = 1e-6;
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (Bistable3d::quasipotential(&xp) - Bistable3d::quasipotential(&xm)) / (4.0 * h);
                assert!((fd - gv[i]).abs() < 1e-7);
            }
        }
        let (gv, g) = Bistable3d::decomposition(&[1.0, 0.0, 0.0]);
        assert_eq!((gv, g), ([0.0; 3], [0.0; 3]));
    }
}
