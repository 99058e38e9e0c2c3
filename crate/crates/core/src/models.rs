//! Bundled example systems.

use crate::error::Result;
use crate::system::NlSystem;

/// Two states, one input, one output.
pub const EXAMPLE1: &str = include_str!("../models/example1.nlsys");
/// Two-link robot arm: four states, two inputs, no outputs.
pub const ROBOT2DOF: &str = include_str!("../models/robot2dof.nlsys");

pub fn example1() -> Result<NlSystem> {
    EXAMPLE1.parse()
}

pub fn robot2dof() -> Result<NlSystem> {
    ROBOT2DOF.parse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_models_load() {
        let s = example1().unwrap();
        assert_eq!((s.n, s.m, s.q), (2, 1, 1));
        let (f, g) = s.eval(&[0.5, -0.2]).unwrap();
        let (x1, x2) = (0.5f64, -0.2f64);
        let f1 = 5.0 * x2 + 10.0 * x1 * x2 - 2.0 * x1.powi(3)
            + 3.0 * x1 * x2 * (std::f64::consts::FRAC_PI_2 * x2).sin();
        assert!((f[0] - f1).abs() < 1e-14);
        assert_eq!(g[2][0], 1.0);

        let r = robot2dof().unwrap();
        assert_eq!((r.n, r.m, r.q), (4, 2, 0));
        let (f, g) = r.eval(&[0.3, -0.4, 1.0, -2.0]).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], -2.0);
        assert_eq!(g[0], vec![0.0, 0.0]);
        let c = (-0.7f64).cos();
        let v = 0.0749 * 0.0715 + 0.0058 * 0.0705
            + c * (0.0749 * 0.0114 - 0.0058 * 0.0114 + 0.0114 * 0.0705 - c * 0.0114 * 0.0114);
        assert!((g[3][1] - (0.0715 + 0.0114 * c) / v).abs() < 1e-10);
    }
}
