//! Finite-activity jump measures on the positive half-line.
//!
//! A measure is a finite list of atoms plus an optional continuous
//! component (exponential or uniform density scaled by a total mass).
//! Both families admit closed-form moments, exponential integrals and
//! inverse-CDF samplers, so every simulator built on top of them is
//! exact and every oracle stays analytic.

use crate::error::{CbiError, Result};
use crate::numeric;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Point mass: `mass` at the strictly positive location `size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub size: f64,
    pub mass: f64,
}

/// Absolutely continuous component, tagged by density family.
///
/// The mass is the total measure of the component; the density inside is
/// normalized (exponential with the given rate, or uniform on `[lo, hi]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContinuousComponent {
    Exponential { rate: f64, mass: f64 },
    Uniform { lo: f64, hi: f64, mass: f64 },
}

impl ContinuousComponent {
    fn mass(&self) -> f64 {
        match *self {
            ContinuousComponent::Exponential { mass, .. } => mass,
            ContinuousComponent::Uniform { mass, .. } => mass,
        }
    }
}

/// Finite-activity Borel measure on (0, inf) with finite first two moments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpMeasure {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousComponent>,
}

impl JumpMeasure {
    /// The zero measure.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Single point mass.
    pub fn atom(size: f64, mass: f64) -> Self {
        Self {
            atoms: vec![Atom { size, mass }],
            continuous: None,
        }
    }

    /// Purely atomic measure from `(size, mass)` pairs.
    pub fn atoms(pairs: &[(f64, f64)]) -> Self {
        Self {
            atoms: pairs
                .iter()
                .map(|&(size, mass)| Atom { size, mass })
                .collect(),
            continuous: None,
        }
    }

    /// Exponential density with the given rate, scaled to total `mass`.
    pub fn exponential(rate: f64, mass: f64) -> Self {
        Self {
            atoms: Vec::new(),
            continuous: Some(ContinuousComponent::Exponential { rate, mass }),
        }
    }

    /// Uniform density on `[lo, hi]`, scaled to total `mass`.
    pub fn uniform(lo: f64, hi: f64, mass: f64) -> Self {
        Self {
            atoms: Vec::new(),
            continuous: Some(ContinuousComponent::Uniform { lo, hi, mass }),
        }
    }

    /// Checks positivity of atom locations, nonnegativity of masses and
    /// well-formedness of the continuous component.
    pub fn validate(&self) -> Result<()> {
        for a in &self.atoms {
            if !(a.size > 0.0) || !a.size.is_finite() {
                return Err(CbiError::Config(format!(
                    "atom size must be strictly positive and finite, got {}",
                    a.size
                )));
            }
            if !(a.mass >= 0.0) || !a.mass.is_finite() {
                return Err(CbiError::Config(format!(
                    "atom mass must be nonnegative and finite, got {}",
                    a.mass
                )));
            }
        }
        match self.continuous {
            None => {}
            Some(ContinuousComponent::Exponential { rate, mass }) => {
                if !(rate > 0.0) || !rate.is_finite() {
                    return Err(CbiError::Config(format!(
                        "exponential rate must be positive, got {rate}"
                    )));
                }
                if !(mass >= 0.0) || !mass.is_finite() {
                    return Err(CbiError::Config(format!(
                        "continuous mass must be nonnegative, got {mass}"
                    )));
                }
            }
            Some(ContinuousComponent::Uniform { lo, hi, mass }) => {
                if !(lo >= 0.0 && hi > lo) || !hi.is_finite() {
                    return Err(CbiError::Config(format!(
                        "uniform support needs 0 <= lo < hi, got [{lo}, {hi}]"
                    )));
                }
                if !(mass >= 0.0) || !mass.is_finite() {
                    return Err(CbiError::Config(format!(
                        "continuous mass must be nonnegative, got {mass}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total measure of (0, inf).
    pub fn total_mass(&self) -> f64 {
        let atoms: f64 = numeric::kahan_sum(self.atoms.iter().map(|a| a.mass));
        atoms + self.continuous.map_or(0.0, |c| c.mass())
    }

    /// True when the measure is identically zero.
    pub fn is_zero(&self) -> bool {
        self.total_mass() == 0.0
    }

    /// k-th moment, exactly: sum over atoms plus the closed-form moment of
    /// the continuous family. Only k in {1, 2} is supported.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k != 1 && k != 2 {
            return Err(CbiError::Domain(format!(
                "moment order {k} unsupported (only 1 and 2 are needed and finite by assumption)"
            )));
        }
        let atoms = numeric::kahan_sum(self.atoms.iter().map(|a| a.size.powi(k as i32) * a.mass));
        let cont = match self.continuous {
            None => 0.0,
            Some(ContinuousComponent::Exponential { rate, mass }) => {
                if k == 1 {
                    mass / rate
                } else {
                    2.0 * mass / (rate * rate)
                }
            }
            Some(ContinuousComponent::Uniform { lo, hi, mass }) => {
                if k == 1 {
                    mass * (lo + hi) / 2.0
                } else {
                    mass * (hi * hi + hi * lo + lo * lo) / 3.0
                }
            }
        };
        Ok(atoms + cont)
    }

    /// Integral of (z - 1) over (1, inf): the tail part entering the
    /// growth-rate correction.
    pub fn mean_excess_above_one(&self) -> f64 {
        let atoms = numeric::kahan_sum(
            self.atoms
                .iter()
                .filter(|a| a.size > 1.0)
                .map(|a| (a.size - 1.0) * a.mass),
        );
        let cont = match self.continuous {
            None => 0.0,
            Some(ContinuousComponent::Exponential { rate, mass }) => {
                // int_1^inf (z-1) rate e^{-rate z} dz = e^{-rate} / rate
                mass * (-rate).exp() / rate
            }
            Some(ContinuousComponent::Uniform { lo, hi, mass }) => {
                if hi <= 1.0 {
                    0.0
                } else {
                    let l = lo.max(1.0);
                    mass * ((hi - 1.0).powi(2) - (l - 1.0).powi(2)) / (2.0 * (hi - lo))
                }
            }
        };
        atoms + cont
    }

    /// Integral of min(1, z) against the measure.
    pub fn min_one_mean(&self) -> f64 {
        let atoms = numeric::kahan_sum(self.atoms.iter().map(|a| a.size.min(1.0) * a.mass));
        let cont = match self.continuous {
            None => 0.0,
            Some(ContinuousComponent::Exponential { rate, mass }) => {
                mass * (1.0 - (-rate).exp()) / rate
            }
            Some(ContinuousComponent::Uniform { lo, hi, mass }) => {
                if hi <= 1.0 {
                    mass * (lo + hi) / 2.0
                } else if lo >= 1.0 {
                    mass
                } else {
                    mass * ((1.0 - lo * lo) / 2.0 + (hi - 1.0)) / (hi - lo)
                }
            }
        };
        atoms + cont
    }

    /// Integral of (e^{u z} - 1) against the measure, for Re(u) <= 0.
    pub fn exp_integral(&self, u: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.atoms {
            acc += ((u * a.size).exp() - 1.0) * a.mass;
        }
        match self.continuous {
            None => {}
            Some(ContinuousComponent::Exponential { rate, mass }) => {
                // int (e^{uz} - 1) rate e^{-rate z} dz = u / (rate - u)
                acc += mass * u / (rate - u);
            }
            Some(ContinuousComponent::Uniform { lo, hi, mass }) => {
                acc += mass * (exp_avg(u, lo, hi) - 1.0);
            }
        }
        acc
    }

    /// Integral of (e^{u z} - 1 - u min(1, z)) against the measure.
    pub fn exp_integral_compensated(&self, u: Complex64) -> Complex64 {
        self.exp_integral(u) - u * self.min_one_mean()
    }

    /// Draws one jump size from the normalized measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(CbiError::Domain(
                "cannot sample from a measure with zero total mass".into(),
            ));
        }
        let mut level = rng.gen::<f64>() * total;
        for a in &self.atoms {
            if level < a.mass {
                return Ok(a.size);
            }
            level -= a.mass;
        }
        match self.continuous {
            Some(ContinuousComponent::Exponential { rate, .. }) => loop {
                let u: f64 = rng.gen();
                let x = -(1.0 - u).ln() / rate;
                if x > 0.0 {
                    return Ok(x);
                }
            },
            Some(ContinuousComponent::Uniform { lo, hi, .. }) => loop {
                let x = lo + (hi - lo) * rng.gen::<f64>();
                if x > 0.0 {
                    return Ok(x);
                }
            },
            // Floating-point slack in the cumulative walk: fall back to the
            // last atom.
            None => Ok(self.atoms.last().expect("positive mass implies atoms").size),
        }
    }

    /// Normalized cumulative distribution function of the measure.
    pub fn cdf(&self, x: f64) -> f64 {
        let total = self.total_mass();
        if total <= 0.0 {
            return 0.0;
        }
        let mut acc = numeric::kahan_sum(self.atoms.iter().filter(|a| a.size <= x).map(|a| a.mass));
        match self.continuous {
            None => {}
            Some(ContinuousComponent::Exponential { rate, mass }) => {
                if x > 0.0 {
                    acc += mass * (1.0 - (-rate * x).exp());
                }
            }
            Some(ContinuousComponent::Uniform { lo, hi, mass }) => {
                if x >= hi {
                    acc += mass;
                } else if x > lo {
                    acc += mass * (x - lo) / (hi - lo);
                }
            }
        }
        acc / total
    }
}

/// Mean of e^{u z} over z uniform on [lo, hi]:
/// (e^{u hi} - e^{u lo}) / (u (hi - lo)), stable near u = 0.
fn exp_avg(u: Complex64, lo: f64, hi: f64) -> Complex64 {
    let z = u * (hi - lo);
    let phi1 = if z.norm() < 1e-6 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        (z.exp() - 1.0) / z
    };
    (u * lo).exp() * phi1
}
