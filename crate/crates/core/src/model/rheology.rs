//! Second-order rheologies `ξ2 σ'' + ξ1 σ' + ξ0 σ = C e(χ2 u'' + χ1 u' + χ0 u)`.
//!
//! Presets are built from the four mechanical elements of the benchmark
//! rheology: a spring `C`, a damper `χ C` in parallel with it, a series spring
//! `α C` and a series damper `μ2 C`. Elements absent from a preset are rigid
//! (series) or missing (parallel). Coefficients are normalized so that
//! `ξ0 = 1` whenever it is present, else `ξ1 = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Hooke,
    Newton,
    Maxwell,
    KelvinVoigt,
    Boltzmann,
    Jeffreys,
    Burgers,
    Solid4,
    Custom,
}

impl Preset {
    pub fn from_name(name: &str) -> Result<Preset> {
        Ok(match name {
            "hooke" => Preset::Hooke,
            "newton" => Preset::Newton,
            "maxwell" => Preset::Maxwell,
            "kelvin_voigt" => Preset::KelvinVoigt,
            "boltzmann" => Preset::Boltzmann,
            "jeffreys" => Preset::Jeffreys,
            "burgers" => Preset::Burgers,
            "solid4" => Preset::Solid4,
            other => return Err(Error::UnknownPreset(other.to_string())),
        })
    }

    /// Nonzero pattern `(χ0, χ1, χ2, ξ0, ξ1, ξ2)` of each catalogued model.
    pub fn pattern(self) -> Option<[bool; 6]> {
        Some(match self {
            Preset::Hooke => [true, false, false, true, false, false],
            Preset::Newton => [false, true, false, true, false, false],
            Preset::Maxwell => [false, true, false, true, true, false],
            Preset::KelvinVoigt => [true, true, false, true, false, false],
            Preset::Boltzmann => [true, true, false, true, true, false],
            Preset::Jeffreys => [false, true, true, true, true, false],
            Preset::Burgers => [false, true, true, true, true, true],
            Preset::Solid4 => [true, true, true, true, true, false],
            Preset::Custom => return None,
        })
    }
}

/// Parameters of the preset catalogue. `chi` is the relaxation time of the
/// parallel damper (for Newton and Maxwell, of their only damper), `alpha` the
/// relative stiffness of the series spring and `mu2` the time constant of the
/// series damper.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetParams {
    #[serde(default)]
    pub chi: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub mu2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RheologyCoeffs {
    pub chi: [f64; 3],
    pub xi: [f64; 3],
    pub preset: Preset,
}

impl RheologyCoeffs {
    pub fn custom(chi: [f64; 3], xi: [f64; 3]) -> Result<Self> {
        let r = RheologyCoeffs { chi, xi, preset: Preset::Custom };
        r.check()?;
        Ok(r)
    }

    pub fn hooke() -> Self {
        RheologyCoeffs { chi: [1.0, 0.0, 0.0], xi: [1.0, 0.0, 0.0], preset: Preset::Hooke }
    }

    pub fn kelvin_voigt(chi: f64) -> Self {
        RheologyCoeffs { chi: [1.0, chi, 0.0], xi: [1.0, 0.0, 0.0], preset: Preset::KelvinVoigt }
    }

    fn check(&self) -> Result<()> {
        if self.chi.iter().chain(&self.xi).any(|c| !c.is_finite()) {
            return Err(Error::InvalidRheology("non-finite coefficient".into()));
        }
        if self.chi.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidRheology("all strain coefficients are zero".into()));
        }
        if self.xi.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidRheology("all stress coefficients are zero".into()));
        }
        Ok(())
    }

    /// Relaxation time `χ` when the coefficients describe a Kelvin-Voigt solid
    /// (Hooke being the `χ = 0` member of that family).
    pub fn kelvin_voigt_time(&self) -> Option<f64> {
        let [c0, c1, c2] = self.chi;
        let [x0, x1, x2] = self.xi;
        (c0 != 0.0 && c0 == x0 && c2 == 0.0 && x1 == 0.0 && x2 == 0.0).then(|| c1 / c0)
    }

    /// Solid-type rheologies have a finite long-term modulus `χ0/ξ0`.
    pub fn long_term_factor(&self) -> Option<f64> {
        (self.chi[0] != 0.0 && self.xi[0] != 0.0).then(|| self.chi[0] / self.xi[0])
    }

    pub fn nonzero_pattern(&self) -> [bool; 6] {
        let c = self.chi;
        let x = self.xi;
        [c[0] != 0.0, c[1] != 0.0, c[2] != 0.0, x[0] != 0.0, x[1] != 0.0, x[2] != 0.0]
    }
}

pub fn rheology_preset(name: &str, params: &PresetParams) -> Result<RheologyCoeffs> {
    let preset = Preset::from_name(name)?;
    let need = |v: Option<f64>, param: &'static str| -> Result<f64> {
        let v = v.ok_or(Error::MissingParameter { preset: name.to_string(), param })?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidRheology(format!("`{param}` must be positive, got {v}")));
        }
        Ok(v)
    };
    let (chi, xi) = match preset {
        Preset::Hooke => ([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
        Preset::Newton => ([0.0, need(params.chi, "chi")?, 0.0], [1.0, 0.0, 0.0]),
        Preset::Maxwell => {
            let c = need(params.chi, "chi")?;
            ([0.0, c, 0.0], [1.0, c, 0.0])
        }
        Preset::KelvinVoigt => {
            let c = params.chi.ok_or(Error::MissingParameter { preset: name.into(), param: "chi" })?;
            if c == 0.0 {
                return Ok(RheologyCoeffs::hooke());
            }
            ([1.0, need(Some(c), "chi")?, 0.0], [1.0, 0.0, 0.0])
        }
        Preset::Boltzmann => {
            let (m1, a) = (need(params.chi, "chi")?, need(params.alpha, "alpha")?);
            let s = 1.0 + a;
            ([a / s, a * m1 / s, 0.0], [1.0, m1 / s, 0.0])
        }
        Preset::Jeffreys => {
            let (m1, m2) = (need(params.chi, "chi")?, need(params.mu2, "mu2")?);
            ([0.0, m2, m1 * m2], [1.0, m1 + m2, 0.0])
        }
        Preset::Burgers => {
            let (m1, a, m2) =
                (need(params.chi, "chi")?, need(params.alpha, "alpha")?, need(params.mu2, "mu2")?);
            ([0.0, m2, m1 * m2], [1.0, m2 + m2 / a + m1, m1 * m2 / a])
        }
        Preset::Solid4 => {
            let (m1, a, m2) =
                (need(params.chi, "chi")?, need(params.alpha, "alpha")?, need(params.mu2, "mu2")?);
            let s = 1.0 + a;
            ([a / s, (a * m1 + m2) / s, m1 * m2 / s], [1.0, (m1 + m2) / s, 0.0])
        }
        Preset::Custom => return Err(Error::UnknownPreset(name.to_string())),
    };
    let r = RheologyCoeffs { chi, xi, preset };
    r.check()?;
    debug_assert_eq!(Some(r.nonzero_pattern()), preset.pattern());
    Ok(r)
}
