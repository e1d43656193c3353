use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Elementwise activation `f` of a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// `f'(z)`, given both the pre-activation `z` and the output `y = f(z)`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_strictly_monotonic(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn is_invertible(self) -> bool {
        self.is_strictly_monotonic()
    }

    /// Whether `y` lies strictly inside the range of `f`, i.e. `f⁻¹(y)` exists.
    pub fn in_range(self, y: f64) -> bool {
        match self {
            Activation::Identity => y.is_finite(),
            Activation::Tanh => y.abs() < 1.0,
            Activation::Relu => y > 0.0 && y.is_finite(),
        }
    }

    /// `f⁻¹(y)`; `None` when `f` has no inverse or `y` is outside its range.
    pub fn inverse(self, y: f64) -> Option<f64> {
        match self {
            Activation::Identity if y.is_finite() => Some(y),
            Activation::Tanh if y.abs() < 1.0 => Some(y.atanh()),
            _ => None,
        }
    }

    /// Interval used when activation values are rendered as intensities.
    pub fn display_range(self) -> (f64, f64) {
        match self {
            Activation::Relu => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(format!(
                "unknown activation '{other}' (expected identity, tanh or relu)"
            )),
        }
    }
}
