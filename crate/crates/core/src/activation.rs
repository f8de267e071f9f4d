//! Hump functions, Goldilocks activations and baseline activations.
//!
//! A Goldilocks activation is `A(x) = x + g(x)` with a localized `g`:
//! `g = f` (biased) or `g = x·f` (unbiased), where `f` is a Lorentzian or
//! Gaussian hump. All derivatives are closed form.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_PI: f64 = 1.0 / PI;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Largest |x| for which `exp(-x²/2)` is evaluated; beyond it the exponent would pass
/// -745 and the hump and its derivatives are taken as exactly zero.
const GAUSS_CLAMP: f64 = 38.600_518_131_237_564; // sqrt(1490)

pub const SELU_LAMBDA: f64 = 1.050_700_98;
pub const SELU_ALPHA: f64 = 1.673_263_24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HumpKind {
    Lorentzian,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GoldilocksMode {
    Biased,
    Unbiased,
}

/// Value and first two derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `(f, f', f'')` for the hump of the given kind.
pub fn hump_derivs(kind: HumpKind, x: f64) -> Derivs {
    match kind {
        HumpKind::Lorentzian => {
            let q = 1.0 + x * x;
            let f = INV_PI / q;
            Derivs {
                value: f,
                d1: -2.0 * x * f / q,
                d2: (6.0 * x * x - 2.0) * f / (q * q),
            }
        }
        HumpKind::Gaussian => {
            if x.abs() > GAUSS_CLAMP {
                return Derivs {
                    value: 0.0,
                    d1: 0.0,
                    d2: 0.0,
                };
            }
            let f = INV_SQRT_2PI * (-0.5 * x * x).exp();
            Derivs {
                value: f,
                d1: -x * f,
                d2: (x * x - 1.0) * f,
            }
        }
    }
}

pub fn hump(kind: HumpKind, x: f64) -> f64 {
    hump_derivs(kind, x).value
}

/// The local nonlinearity `g` with `g'` and `g''`.
pub fn goldilocks_g(kind: HumpKind, mode: GoldilocksMode, x: f64) -> Derivs {
    let f = hump_derivs(kind, x);
    match mode {
        GoldilocksMode::Biased => f,
        // (x f)' = f + x f', (x f)'' = 2 f' + x f''
        GoldilocksMode::Unbiased => Derivs {
            value: x * f.value,
            d1: f.value + x * f.d1,
            d2: 2.0 * f.d1 + x * f.d2,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Goldilocks { kind: HumpKind, mode: GoldilocksMode },
    Relu,
    Selu { lambda: f64, alpha: f64 },
    Sigmoid,
    Linear,
}

impl Activation {
    pub const LORENTZ_UNBIASED: Activation = Activation::Goldilocks {
        kind: HumpKind::Lorentzian,
        mode: GoldilocksMode::Unbiased,
    };
    pub const LORENTZ_BIASED: Activation = Activation::Goldilocks {
        kind: HumpKind::Lorentzian,
        mode: GoldilocksMode::Biased,
    };
    pub const GAUSS_UNBIASED: Activation = Activation::Goldilocks {
        kind: HumpKind::Gaussian,
        mode: GoldilocksMode::Unbiased,
    };
    pub const GAUSS_BIASED: Activation = Activation::Goldilocks {
        kind: HumpKind::Gaussian,
        mode: GoldilocksMode::Biased,
    };

    /// The four Goldilocks variants.
    pub const GOLDILOCKS: [Activation; 4] = [
        Self::LORENTZ_UNBIASED,
        Self::LORENTZ_BIASED,
        Self::GAUSS_UNBIASED,
        Self::GAUSS_BIASED,
    ];

    pub fn selu() -> Self {
        Activation::Selu {
            lambda: SELU_LAMBDA,
            alpha: SELU_ALPHA,
        }
    }

    pub fn selu_with(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0 && alpha > 0.0) {
            return Err(Error::InvalidInput(format!(
                "SELU needs positive lambda and alpha, got {lambda}, {alpha}"
            )));
        }
        Ok(Activation::Selu { lambda, alpha })
    }

    pub fn is_goldilocks(&self) -> bool {
        matches!(self, Activation::Goldilocks { .. })
    }

    /// `g`, `g'`, `g''` for Goldilocks activations, `None` otherwise.
    pub fn local_nonlinearity(&self, x: f64) -> Option<Derivs> {
        match *self {
            Activation::Goldilocks { kind, mode } => Some(goldilocks_g(kind, mode, x)),
            _ => None,
        }
    }

    /// `(A(x), A'(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match *self {
            Activation::Goldilocks { kind, mode } => {
                let g = goldilocks_g(kind, mode, x);
                (x + g.value, 1.0 + g.d1)
            }
            Activation::Relu => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Selu { lambda, alpha } => {
                if x > 0.0 {
                    (lambda * x, lambda)
                } else {
                    let e = x.exp();
                    (lambda * alpha * (e - 1.0), lambda * alpha * e)
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                (s, s * (1.0 - s))
            }
            Activation::Linear => (x, 1.0),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn name(&self) -> &'static str {
        match *self {
            Activation::Goldilocks { kind, mode } => match (kind, mode) {
                (HumpKind::Lorentzian, GoldilocksMode::Unbiased) => "lorentz-unbiased",
                (HumpKind::Lorentzian, GoldilocksMode::Biased) => "lorentz-biased",
                (HumpKind::Gaussian, GoldilocksMode::Unbiased) => "gauss-unbiased",
                (HumpKind::Gaussian, GoldilocksMode::Biased) => "gauss-biased",
            },
            Activation::Relu => "relu",
            Activation::Selu { .. } => "selu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(A(x), A'(x))`.
pub fn activate(spec: Activation, x: f64) -> (f64, f64) {
    spec.eval(x)
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lorentz-unbiased" => Self::LORENTZ_UNBIASED,
            "lorentz-biased" => Self::LORENTZ_BIASED,
            "gauss-unbiased" => Self::GAUSS_UNBIASED,
            "gauss-biased" => Self::GAUSS_BIASED,
            "relu" => Activation::Relu,
            "selu" => Activation::selu(),
            "sigmoid" => Activation::Sigmoid,
            "linear" => Activation::Linear,
            other => {
                return Err(Error::Config(format!("unknown activation `{other}`")));
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: f64 = 1e-10;

    fn grid() -> impl Iterator<Item = f64> {
        (0..=2000).map(|i| -10.0 + i as f64 * 0.01)
    }

    #[test]
    fn hump_values() {
        assert!((hump(HumpKind::Lorentzian, 0.0) - 0.318_309_886_2).abs() < TINY);
        assert!((hump(HumpKind::Gaussian, 0.0) - 0.398_942_280_4).abs() < TINY);
        assert!((hump(HumpKind::Lorentzian, 1.0) - 0.159_154_943_1).abs() < TINY);
    }

    #[test]
    fn g_examples() {
        let g = goldilocks_g(HumpKind::Lorentzian, GoldilocksMode::Unbiased, 0.0);
        assert_eq!(g.value, 0.0);
        assert!((g.d1 - 0.318_309_886_2).abs() < TINY);
        assert_eq!(g.d2, 0.0);

        let g = goldilocks_g(HumpKind::Lorentzian, GoldilocksMode::Biased, 0.0);
        assert!((g.value - 0.318_309_886_2).abs() < TINY);
        assert_eq!(g.d1, 0.0);
        assert!((g.d2 + 0.636_619_772_4).abs() < TINY);

        let g = goldilocks_g(HumpKind::Gaussian, GoldilocksMode::Unbiased, 1.0);
        assert!((g.value - 0.241_970_724_5).abs() < TINY);
    }

    #[test]
    fn activate_examples() {
        let (a, d) = activate(Activation::LORENTZ_UNBIASED, 0.0);
        assert_eq!(a, 0.0);
        assert!((d - 1.318_309_886_2).abs() < TINY);

        let (a, d) = activate(Activation::LORENTZ_BIASED, 0.0);
        assert!((a - 0.318_309_886_2).abs() < TINY);
        assert_eq!(d, 1.0);

        let (a, d) = activate(Activation::LORENTZ_UNBIASED, 100.0);
        assert!((a - (100.0 + 100.0 / (PI * 10001.0))).abs() < 1e-12);
        assert!((a - 100.003_182_8).abs() < 1e-7);
        assert!((d - 1.0).abs() < 1e-4);
    }

    #[test]
    fn symmetry() {
        for x in grid() {
            for kind in [HumpKind::Lorentzian, HumpKind::Gaussian] {
                assert_eq!(hump(kind, x), hump(kind, -x));
                let u = goldilocks_g(kind, GoldilocksMode::Unbiased, x).value;
                let um = goldilocks_g(kind, GoldilocksMode::Unbiased, -x).value;
                assert_eq!(u, -um);
                let b = goldilocks_g(kind, GoldilocksMode::Biased, x).value;
                let bm = goldilocks_g(kind, GoldilocksMode::Biased, -x).value;
                assert_eq!(b, bm);
            }
        }
    }

    #[test]
    fn monotone_lower_bounds() {
        let lu_min = 1.0 - 1.0 / (8.0 * PI);
        let lb_min = 1.0 - 9.0 / (8.0 * 3f64.sqrt() * PI);
        let mut scan_lu = f64::INFINITY;
        let mut scan_lb = f64::INFINITY;
        for i in 0..=400_000 {
            let x = -20.0 + i as f64 * 1e-4;
            let (_, du) = activate(Activation::LORENTZ_UNBIASED, x);
            let (_, db) = activate(Activation::LORENTZ_BIASED, x);
            scan_lu = scan_lu.min(du);
            scan_lb = scan_lb.min(db);
            for a in Activation::GOLDILOCKS {
                assert!(a.eval(x).1 > 0.0);
            }
        }
        assert!(scan_lu >= lu_min - 1e-12 && scan_lu - lu_min < 1e-8);
        assert!(scan_lb >= lb_min - 1e-12 && scan_lb - lb_min < 1e-8);
        assert!(lb_min > 0.0);
    }

    #[test]
    fn tail_decay() {
        for x in [320.5, 400.0, 1e4, -321.0, -5e5] {
            let g = goldilocks_g(HumpKind::Lorentzian, GoldilocksMode::Unbiased, x).value;
            assert!(g.abs() < 1e-3);
            assert!((g * PI * x - 1.0).abs() < 1e-4);
        }
        for x in [9.01, 12.0, 40.0, 1e3, -9.5] {
            for mode in [GoldilocksMode::Biased, GoldilocksMode::Unbiased] {
                let g = goldilocks_g(HumpKind::Gaussian, mode, x).value;
                assert!(g.abs() < 1e-12, "{x} {g}");
            }
        }
    }

    #[test]
    fn gaussian_far_tail_is_finite() {
        for x in [1e3, 1e8, -1e200] {
            let g = goldilocks_g(HumpKind::Gaussian, GoldilocksMode::Unbiased, x);
            assert!(g.value.is_finite() && g.d1.is_finite() && g.d2.is_finite());
        }
    }

    #[test]
    fn names_round_trip() {
        for name in [
            "lorentz-unbiased",
            "lorentz-biased",
            "gauss-unbiased",
            "gauss-biased",
            "relu",
            "selu",
            "sigmoid",
            "linear",
        ] {
            let a: Activation = name.parse().unwrap();
            assert_eq!(a.to_string(), name);
        }
        assert!("swish".parse::<Activation>().is_err());
    }

    #[test]
    fn selu_params_validated() {
        assert!(Activation::selu_with(0.0, 1.0).is_err());
        assert!(Activation::selu_with(1.0, -1.0).is_err());
        assert!(Activation::selu_with(1.0, 1.0).is_ok());
    }

    #[test]
    fn baselines() {
        assert_eq!(Activation::Relu.eval(-1.0), (0.0, 0.0));
        assert_eq!(Activation::Relu.eval(0.0), (0.0, 0.0));
        assert_eq!(Activation::Relu.eval(2.0), (2.0, 1.0));
        assert_eq!(Activation::Linear.eval(-3.0), (-3.0, 1.0));
        let (s, ds) = Activation::Sigmoid.eval(0.0);
        assert_eq!((s, ds), (0.5, 0.25));
        let (v, d) = Activation::selu().eval(1.0);
        assert!((v - SELU_LAMBDA).abs() < 1e-15 && (d - SELU_LAMBDA).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
