use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CwfaError;

/// Four-letter identifier of a parsimonious covariance structure.
///
/// The letters state, in order, whether the Y-variance, the loading matrix,
/// and the error-variance matrix are constrained equal across components, and
/// whether the error variance is isotropic. `C` applies the constraint, `U`
/// leaves it free; e.g. `"UUCC"` shares one isotropic error variance
/// (Psi_g = psi I) across all components while Y-variances and loadings stay
/// component-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConstraintCode {
    pub sigma_equal: bool,
    pub lambda_equal: bool,
    pub psi_equal: bool,
    pub psi_isotropic: bool,
}

impl ConstraintCode {
    pub fn new(sigma_equal: bool, lambda_equal: bool, psi_equal: bool, psi_isotropic: bool) -> Self {
        Self {
            sigma_equal,
            lambda_equal,
            psi_equal,
            psi_isotropic,
        }
    }

    /// All sixteen codes, ordered by constraint count (most constrained first)
    /// and lexicographically within a level.
    pub fn all() -> Vec<ConstraintCode> {
        let mut codes: Vec<ConstraintCode> = (0..16u8)
            .map(|bits| {
                ConstraintCode::new(
                    bits & 0b1000 == 0,
                    bits & 0b0100 == 0,
                    bits & 0b0010 == 0,
                    bits & 0b0001 == 0,
                )
            })
            .collect();
        codes.sort();
        codes
    }

    /// Number of relaxed (`U`) letters; 0 for CCCC up to 4 for UUUU.
    pub fn relaxed_count(&self) -> usize {
        [
            self.sigma_equal,
            self.lambda_equal,
            self.psi_equal,
            self.psi_isotropic,
        ]
        .iter()
        .filter(|c| !**c)
        .count()
    }

    fn letters(&self) -> [char; 4] {
        let ch = |c: bool| if c { 'C' } else { 'U' };
        [
            ch(self.sigma_equal),
            ch(self.lambda_equal),
            ch(self.psi_equal),
            ch(self.psi_isotropic),
        ]
    }

    /// Codes reachable by relaxing exactly one constraint of `self`.
    pub fn relaxations(&self) -> Vec<ConstraintCode> {
        let mut out = Vec::new();
        let flags = [
            self.sigma_equal,
            self.lambda_equal,
            self.psi_equal,
            self.psi_isotropic,
        ];
        for i in 0..4 {
            if flags[i] {
                let mut f = flags;
                f[i] = false;
                out.push(ConstraintCode::new(f[0], f[1], f[2], f[3]));
            }
        }
        out
    }
}

impl fmt::Display for ConstraintCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ch in self.letters() {
            write!(f, "{ch}")?;
        }
        Ok(())
    }
}

impl FromStr for ConstraintCode {
    type Err = CwfaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CwfaError::InvalidParameter(format!("not a constraint code: {s:?}"));
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 4 {
            return Err(bad());
        }
        let mut flags = [false; 4];
        for (i, ch) in chars.iter().enumerate() {
            flags[i] = match ch {
                'C' => true,
                'U' => false,
                _ => return Err(bad()),
            };
        }
        Ok(ConstraintCode::new(flags[0], flags[1], flags[2], flags[3]))
    }
}

// Letter order 'C' < 'U' matches constrained-before-unconstrained, so the
// derived ordering of the letter array equals string order.
impl Ord for ConstraintCode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.letters().cmp(&other.letters())
    }
}

impl PartialOrd for ConstraintCode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for ConstraintCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConstraintCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}
