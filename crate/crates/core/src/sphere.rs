//! The punctured sphere carrying a Fuchsian system: finite punctures, a
//! basepoint for loops, and whether ∞ is a marked point.

use crate::error::Error;
use crate::matrix::C64;
use crate::{Result, DEFAULT_TOL};

/// `n` distinct finite punctures with a basepoint.  When `include_infinity`
/// is set, ∞ is a marked point carrying the derived residue `A_∞ = -Σ A_i`;
/// otherwise the represented connection must have no pole at ∞.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedSphere {
    punctures: Vec<C64>,
    basepoint: C64,
    include_infinity: bool,
    separation: f64,
}

impl MarkedSphere {
    pub fn new(punctures: Vec<C64>, basepoint: C64, include_infinity: bool) -> Result<Self> {
        Self::with_separation(punctures, basepoint, include_infinity, DEFAULT_TOL)
    }

    pub fn with_separation(
        punctures: Vec<C64>,
        basepoint: C64,
        include_infinity: bool,
        separation: f64,
    ) -> Result<Self> {
        if punctures.is_empty() {
            return Err(Error::Validation("at least one puncture required".into()));
        }
        for (i, t) in punctures.iter().enumerate() {
            if !t.re.is_finite() || !t.im.is_finite() {
                return Err(Error::Validation(format!("puncture {i} is not finite")));
            }
            for (j, s) in punctures.iter().enumerate().skip(i + 1) {
                if (t - s).norm() < separation {
                    return Err(Error::Validation(format!(
                        "punctures {i} and {j} are {:.3e} apart, below separation {separation:.3e}",
                        (t - s).norm()
                    )));
                }
            }
            if (t - basepoint).norm() < separation {
                return Err(Error::Validation(format!(
                    "basepoint is {:.3e} from puncture {i}, below separation {separation:.3e}",
                    (t - basepoint).norm()
                )));
            }
        }
        Ok(MarkedSphere { punctures, basepoint, include_infinity, separation })
    }

    pub fn punctures(&self) -> &[C64] {
        &self.punctures
    }

    pub fn num_punctures(&self) -> usize {
        self.punctures.len()
    }

    pub fn basepoint(&self) -> C64 {
        self.basepoint
    }

    pub fn include_infinity(&self) -> bool {
        self.include_infinity
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    /// Smallest pairwise distance among punctures (∞ excluded), and to the
    /// basepoint.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for (i, t) in self.punctures.iter().enumerate() {
            for s in self.punctures.iter().skip(i + 1) {
                min = min.min((t - s).norm());
            }
            min = min.min((t - self.basepoint).norm());
        }
        min
    }

    /// Default loop clearance: a quarter of the minimum pairwise distance.
    pub fn clearance(&self) -> f64 {
        self.min_pairwise_distance() / 4.0
    }

    /// Same punctures with a different configuration (used along deformation
    /// paths); validation is re-run.
    pub fn with_punctures(&self, punctures: Vec<C64>) -> Result<Self> {
        Self::with_separation(punctures, self.basepoint, self.include_infinity, self.separation)
    }
}
