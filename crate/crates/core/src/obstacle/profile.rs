use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Scalar time law driving one parameter of a configuration-map primitive.
///
/// Serialized as `const(c)`, `linear(offset, rate)` or
/// `sinusoid(offset, amplitude, frequency, phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Profile {
    Constant(f64),
    /// `offset + rate * t`
    Linear { offset: f64, rate: f64 },
    /// `offset + amplitude * sin(frequency * t + phase)`
    Sinusoid { offset: f64, amplitude: f64, frequency: f64, phase: f64 },
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{:?}` prints the shortest representation that parses back exactly.
        match *self {
            Profile::Constant(c) => write!(f, "const({c:?})"),
            Profile::Linear { offset, rate } => write!(f, "linear({offset:?}, {rate:?})"),
            Profile::Sinusoid { offset, amplitude, frequency, phase } => {
                write!(f, "sinusoid({offset:?}, {amplitude:?}, {frequency:?}, {phase:?})")
            }
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let text = text.trim();
        let open = text.find('(').ok_or_else(|| format!("profile '{text}' lacks '('"))?;
        let body = text[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| format!("profile '{text}' lacks closing ')'"))?;
        let args = body
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|e| format!("profile '{text}': {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let name = text[..open].trim();
        let profile = match (name, args.as_slice()) {
            ("const", [c]) => Profile::Constant(*c),
            ("linear", [offset, rate]) => Profile::Linear { offset: *offset, rate: *rate },
            ("sinusoid", [offset, amplitude, frequency, phase]) => {
                Profile::Sinusoid { offset: *offset, amplitude: *amplitude, frequency: *frequency, phase: *phase }
            }
            _ => {
                return Err(format!(
                    "profile '{text}': expected const(c), linear(offset, rate) or sinusoid(offset, amplitude, frequency, phase)"
                ))
            }
        };
        if args.iter().any(|a| !a.is_finite()) {
            return Err(format!("profile '{text}' has a non-finite argument"));
        }
        Ok(profile)
    }
}

impl TryFrom<String> for Profile {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Profile> for String {
    fn from(p: Profile) -> String {
        p.to_string()
    }
}

impl Profile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant(c) => c,
            Profile::Linear { offset, rate } => offset + rate * t,
            Profile::Sinusoid { offset, amplitude, frequency, phase } => {
                offset + amplitude * (frequency * t + phase).sin()
            }
        }
    }

    /// Value with its first and second time derivatives.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        match *self {
            Profile::Constant(c) => [c, 0.0, 0.0],
            Profile::Linear { offset, rate } => [offset + rate * t, rate, 0.0],
            Profile::Sinusoid { offset, amplitude, frequency, phase } => {
                let arg = frequency * t + phase;
                let (s, c) = arg.sin_cos();
                [offset + amplitude * s, amplitude * frequency * c, -amplitude * frequency * frequency * s]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Profile::Constant(_) => true,
            Profile::Linear { rate, .. } => rate == 0.0,
            Profile::Sinusoid { amplitude, frequency, .. } => amplitude == 0.0 || frequency == 0.0,
        }
    }

    pub fn negated(&self) -> Profile {
        match *self {
            Profile::Constant(c) => Profile::Constant(-c),
            Profile::Linear { offset, rate } => Profile::Linear { offset: -offset, rate: -rate },
            Profile::Sinusoid { offset, amplitude, frequency, phase } => {
                Profile::Sinusoid { offset: -offset, amplitude: -amplitude, frequency, phase }
            }
        }
    }

    /// Bounds of the profile over `[0, horizon]` (exact for these laws).
    pub fn range(&self, horizon: f64) -> (f64, f64) {
        match *self {
            Profile::Constant(c) => (c, c),
            Profile::Linear { offset, rate } => {
                let end = offset + rate * horizon;
                (offset.min(end), offset.max(end))
            }
            Profile::Sinusoid { offset, amplitude, frequency, .. } => {
                if frequency == 0.0 {
                    let v = self.value(0.0);
                    (v, v)
                } else if frequency.abs() * horizon >= 2.0 * std::f64::consts::PI {
                    (offset - amplitude.abs(), offset + amplitude.abs())
                } else {
                    // Short horizon: sample densely, the caller only needs
                    // conservative validation bounds.
                    let n = 2048;
                    (0..=n).map(|i| self.value(horizon * i as f64 / n as f64)).fold(
                        (f64::INFINITY, f64::NEG_INFINITY),
                        |(lo, hi), v| (lo.min(v), hi.max(v)),
                    )
                }
            }
        }
    }
}
