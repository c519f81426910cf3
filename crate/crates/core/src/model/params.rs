use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the thrust/drag, moment and actuator models.
///
/// Units follow the identification table of the Bebop 1: rotor speeds in
/// rpm, forces as specific forces (m/s²), moments in N·m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kx: f64,
    pub ky: f64,
    pub kw: f64,
    pub kz: f64,
    pub kh: f64,
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    pub kp: f64,
    pub kpv: f64,
    pub kq: f64,
    pub kqv: f64,
    pub kr1: f64,
    pub kr2: f64,
    pub krr: f64,
    /// First-order rotor lag [s].
    pub tau: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub g: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::bebop()
    }
}

const KEYS: [&str; 19] = [
    "kx",
    "ky",
    "kw",
    "kz",
    "kh",
    "ix",
    "iy",
    "iz",
    "kp",
    "kpv",
    "kq",
    "kqv",
    "kr1",
    "kr2",
    "krr",
    "tau",
    "omega_min",
    "omega_max",
    "g",
];

impl ModelParams {
    /// Identified Parrot Bebop 1 model with the 5000–10000 rpm envelope.
    pub fn bebop() -> Self {
        Self {
            kx: 1.08e-05,
            ky: 9.65e-06,
            kw: 4.36e-08,
            kz: 2.79e-05,
            kh: 6.26e-02,
            ix: 0.000906,
            iy: 0.001242,
            iz: 0.002054,
            kp: 1.41e-09,
            kpv: -7.97e-03,
            kq: 1.22e-09,
            kqv: 1.29e-02,
            kr1: 2.57e-06,
            kr2: 4.11e-07,
            krr: 8.13e-04,
            tau: 0.06,
            omega_min: 5000.0,
            omega_max: 10000.0,
            g: 9.81,
        }
    }

    pub fn with_rotor_limits(mut self, omega_min: f64, omega_max: f64) -> Self {
        self.omega_min = omega_min;
        self.omega_max = omega_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ix > 0.0 && self.iy > 0.0 && self.iz > 0.0) {
            return Err(Error::InvalidParams("inertias must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParams("tau must be positive".into()));
        }
        if !(self.omega_min >= 0.0 && self.omega_max > self.omega_min) {
            return Err(Error::InvalidParams("rotor limits must satisfy omega_max > omega_min >= 0".into()));
        }
        if !KEYS.iter().all(|k| self.get(k).is_some_and(f64::is_finite)) {
            return Err(Error::InvalidParams("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn rotor_span(&self) -> f64 {
        self.omega_max - self.omega_min
    }

    /// Rotor speed at which four equal rotors balance gravity.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.g / (4.0 * self.kw)).sqrt()
    }

    /// Normalized command that holds every rotor at the hover speed.
    pub fn hover_command(&self) -> f64 {
        (self.hover_rotor_speed() - self.omega_min) / self.rotor_span()
    }

    /// Steady-state rotor speed for a normalized command.
    pub fn rotor_speed_for(&self, u: f64) -> f64 {
        self.rotor_span() * u + self.omega_min
    }

    pub fn inertia(&self) -> [f64; 3] {
        [self.ix, self.iy, self.iz]
    }

    fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "kx" => self.kx,
            "ky" => self.ky,
            "kw" => self.kw,
            "kz" => self.kz,
            "kh" => self.kh,
            "ix" => self.ix,
            "iy" => self.iy,
            "iz" => self.iz,
            "kp" => self.kp,
            "kpv" => self.kpv,
            "kq" => self.kq,
            "kqv" => self.kqv,
            "kr1" => self.kr1,
            "kr2" => self.kr2,
            "krr" => self.krr,
            "tau" => self.tau,
            "omega_min" => self.omega_min,
            "omega_max" => self.omega_max,
            "g" => self.g,
            _ => return None,
        })
    }

    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "kx" => &mut self.kx,
            "ky" => &mut self.ky,
            "kw" => &mut self.kw,
            "kz" => &mut self.kz,
            "kh" => &mut self.kh,
            "ix" => &mut self.ix,
            "iy" => &mut self.iy,
            "iz" => &mut self.iz,
            "kp" => &mut self.kp,
            "kpv" => &mut self.kpv,
            "kq" => &mut self.kq,
            "kqv" => &mut self.kqv,
            "kr1" => &mut self.kr1,
            "kr2" => &mut self.kr2,
            "krr" => &mut self.krr,
            "tau" => &mut self.tau,
            "omega_min" => &mut self.omega_min,
            "omega_max" => &mut self.omega_max,
            "g" => &mut self.g,
            _ => return None,
        })
    }

    /// Parses `key = value` lines on top of the Bebop defaults. `#` starts
    /// a comment; keys that are not given keep their default value.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut params = Self::bebop();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: n + 1, msg };
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|e| err(format!("bad value for `{key}`: {e}")))?;
            *params.slot(key).ok_or_else(|| err(format!("unknown key `{key}`")))? = value;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# quadcopter model parameters (SI units, rotor speeds in rpm)\n");
        for key in KEYS {
            // `{:e}` keeps the shortest representation that round-trips.
            let _ = writeln!(out, "{key} = {:e}", self.get(key).unwrap_or(f64::NAN));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hover_speed_from_table_constants() {
        let p = ModelParams::bebop();
        assert!((p.hover_rotor_speed() - 7500.0).abs() < 1e-6);
        assert!((p.hover_command() - 0.5).abs() < 1e-9);
        let wp = p.with_rotor_limits(3000.0, 12000.0);
        assert!((wp.hover_command() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn config_round_trip_is_exact() {
        let p = ModelParams::bebop().with_rotor_limits(3000.0, 12000.0);
        let back = ModelParams::from_config_str(&p.to_config_string()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn config_overrides_and_comments() {
        let p = ModelParams::from_config_str("# comment\n tau = 0.05 # lag\n\nomega_max=11000\n").unwrap();
        assert_eq!(p.tau, 0.05);
        assert_eq!(p.omega_max, 11000.0);
        assert_eq!(p.kx, ModelParams::bebop().kx);
    }

    #[test]
    fn config_errors_name_the_line() {
        match ModelParams::from_config_str("kx = 1\nbogus = 2\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(ModelParams::from_config_str("tau = -1"), Err(Error::InvalidParams(_))));
        assert!(matches!(
            ModelParams::from_config_str("omega_min = 9000\nomega_max = 8000"),
            Err(Error::InvalidParams(_))
        ));
    }
}
