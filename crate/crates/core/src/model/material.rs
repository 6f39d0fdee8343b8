use crate::error::{Error, Result};

/// Isotropic linear elastic moduli, always used in plane strain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
}

impl Material {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        let m = Material { young, poisson };
        if let Some(msg) = m.check() {
            return Err(Error::InvalidModel(msg));
        }
        Ok(m)
    }

    /// Returns a diagnostic message if the moduli are outside the admissible range.
    pub fn check(&self) -> Option<String> {
        if !(self.young > 0.0) || !self.young.is_finite() {
            Some(format!("Young's modulus must be positive (got {})", self.young))
        } else if !(self.poisson > -1.0 && self.poisson < 0.5) {
            Some("Poisson ratio out of range".to_string())
        } else {
            None
        }
    }

    pub fn shear_modulus(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    /// First Lamé parameter (plane strain uses the 3D value).
    pub fn lame_lambda(&self) -> f64 {
        let nu = self.poisson;
        self.young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }

    /// In-plane stress `[sxx, syy, sxy]` from in-plane strain `[exx, eyy, exy]`.
    pub fn stress(&self, strain: [f64; 3]) -> [f64; 3] {
        let lam = self.lame_lambda();
        let mu = self.shear_modulus();
        let tr = strain[0] + strain[1];
        [
            lam * tr + 2.0 * mu * strain[0],
            lam * tr + 2.0 * mu * strain[1],
            2.0 * mu * strain[2],
        ]
    }

    /// Inverse of [`Material::stress`] under the plane-strain constraint `ezz = 0`.
    pub fn strain(&self, stress: [f64; 3]) -> [f64; 3] {
        let (e, nu) = (self.young, self.poisson);
        let c = (1.0 + nu) / e;
        [
            c * ((1.0 - nu) * stress[0] - nu * stress[1]),
            c * ((1.0 - nu) * stress[1] - nu * stress[0]),
            stress[2] / (2.0 * self.shear_modulus()),
        ]
    }
}
