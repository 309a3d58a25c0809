//! Device primitives of a TMS cell and their series composition.
//!
//! A cell is an electrical stack: force sensor, memristor and one select
//! transistor per readout line. Conductances along the stack compose
//! harmonically, so an OFF switch with zero leakage isolates the cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Force-sensing resistor with an affine conductance law `g(f) = k*f + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Conductance gained per lbf of applied force (S/lbf).
    pub sensitivity_k: f64,
    /// Zero-force conductance (S).
    pub bias_c: f64,
    /// Sensor supply voltage (V).
    pub v_supply: f64,
    /// Load resistor of the output voltage divider (ohms).
    pub r_divider: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        let sensitivity_k = 1.5e-6;
        let bias_c = 1e-6;
        SensorModel {
            sensitivity_k,
            bias_c,
            v_supply: 0.5,
            // Matches the sensor resistance at the 20 lbf reference press.
            r_divider: 1.0 / (sensitivity_k * 20.0 + bias_c),
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        positive("sensor.sensitivity_k", self.sensitivity_k)?;
        positive("sensor.bias_c", self.bias_c)?;
        positive("sensor.v_supply", self.v_supply)?;
        positive("sensor.r_divider", self.r_divider)?;
        Ok(())
    }

    pub fn conductance(&self, force: f64) -> Result<f64> {
        if !(force >= 0.0) || !force.is_finite() {
            return Err(Error::domain("force", force, "finite and >= 0 lbf"));
        }
        Ok(self.sensitivity_k * force + self.bias_c)
    }

    /// `R(f) = 1 / (k*f + c)`.
    pub fn resistance(&self, force: f64) -> Result<f64> {
        Ok(1.0 / self.conductance(force)?)
    }

    /// Divider output `v_supply * r_divider / (R(f) + r_divider)`.
    pub fn output_voltage(&self, force: f64) -> Result<f64> {
        let r = self.resistance(force)?;
        Ok(self.v_supply * self.r_divider / (r + self.r_divider))
    }
}

/// Memristor whose conductance is linear in the internal state `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorModel {
    pub r_on: f64,
    pub r_off: f64,
    pub state: f64,
}

impl MemristorModel {
    pub const DEFAULT_R_ON: f64 = 1e3;
    pub const DEFAULT_R_OFF: f64 = 1e5;

    pub fn new(r_on: f64, r_off: f64, state: f64) -> Result<Self> {
        let m = MemristorModel { r_on, r_off, state };
        m.validate()?;
        Ok(m)
    }

    pub fn with_state(r_on: f64, r_off: f64, state: f64) -> Result<Self> {
        Self::new(r_on, r_off, state)
    }

    pub fn validate(&self) -> Result<()> {
        positive("memristor.r_on", self.r_on)?;
        if !(self.r_off > self.r_on) || !self.r_off.is_finite() {
            return Err(Error::domain("memristor.r_off", self.r_off, "finite and > r_on"));
        }
        if !(0.0..=1.0).contains(&self.state) {
            return Err(Error::domain("memristor state", self.state, "[0, 1]"));
        }
        Ok(())
    }

    pub fn g_min(&self) -> f64 {
        1.0 / self.r_off
    }

    pub fn g_max(&self) -> f64 {
        1.0 / self.r_on
    }

    /// `g = 1/r_off + w * (1/r_on - 1/r_off)`.
    pub fn conductance(&self) -> Result<f64> {
        if !(0.0..=1.0).contains(&self.state) {
            return Err(Error::domain("memristor state", self.state, "[0, 1]"));
        }
        Ok(state_to_conductance(self.r_on, self.r_off, self.state))
    }
}

/// Linear state-to-conductance map without range checks.
#[inline]
pub fn state_to_conductance(r_on: f64, r_off: f64, state: f64) -> f64 {
    let g_min = 1.0 / r_off;
    g_min + state * (1.0 / r_on - g_min)
}

/// Select transistor. `g_on = f64::INFINITY` models an ideal short.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchModel {
    pub g_on: f64,
    pub g_off: f64,
    pub selected: bool,
}

impl Default for SwitchModel {
    fn default() -> Self {
        SwitchModel {
            g_on: 1e-2,
            g_off: 0.0,
            selected: true,
        }
    }
}

impl SwitchModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_off >= 0.0) || !self.g_off.is_finite() {
            return Err(Error::domain("switch.g_off", self.g_off, "finite and >= 0"));
        }
        if !(self.g_on > self.g_off) {
            return Err(Error::domain("switch.g_on", self.g_on, "> g_off"));
        }
        Ok(())
    }

    pub fn conductance(&self) -> f64 {
        if self.selected {
            self.g_on
        } else {
            self.g_off
        }
    }

    pub fn turned(self, selected: bool) -> Self {
        SwitchModel { selected, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellConfig {
    #[serde(rename = "1T1M1S")]
    OneT1M1S,
    #[serde(rename = "2T1M1S")]
    TwoT1M1S,
    #[serde(rename = "1T1M")]
    OneT1M,
}

impl CellConfig {
    pub fn has_sensor(self) -> bool {
        !matches!(self, CellConfig::OneT1M)
    }
}

/// A sensor together with the force currently applied to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensedForce {
    pub model: SensorModel,
    pub force: f64,
}

/// Which readout line a current path ends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Line {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub config: CellConfig,
    /// Present for sensing configurations only.
    pub sensor: Option<SensedForce>,
    pub memristor: MemristorModel,
    pub vl_switch: SwitchModel,
    /// Present for 2T1M1S only.
    pub hl_switch: Option<SwitchModel>,
}

impl CellState {
    pub fn one_t1m1s(sensor: SensedForce, memristor: MemristorModel, vl: SwitchModel) -> Self {
        CellState {
            config: CellConfig::OneT1M1S,
            sensor: Some(sensor),
            memristor,
            vl_switch: vl,
            hl_switch: None,
        }
    }

    pub fn two_t1m1s(
        sensor: SensedForce,
        memristor: MemristorModel,
        vl: SwitchModel,
        hl: SwitchModel,
    ) -> Self {
        CellState {
            config: CellConfig::TwoT1M1S,
            sensor: Some(sensor),
            memristor,
            vl_switch: vl,
            hl_switch: Some(hl),
        }
    }

    pub fn one_t1m(memristor: MemristorModel, vl: SwitchModel) -> Self {
        CellState {
            config: CellConfig::OneT1M,
            sensor: None,
            memristor,
            vl_switch: vl,
            hl_switch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.config.has_sensor(), &self.sensor) {
            (true, None) => {
                return Err(Error::ConfigMismatch(format!(
                    "{:?} cell requires a sensor",
                    self.config
                )))
            }
            (false, Some(_)) => {
                return Err(Error::ConfigMismatch("1T1M cell cannot carry a sensor".into()))
            }
            _ => {}
        }
        match (self.config, &self.hl_switch) {
            (CellConfig::TwoT1M1S, None) => {
                return Err(Error::ConfigMismatch("2T1M1S cell requires an HL switch".into()))
            }
            (CellConfig::OneT1M1S | CellConfig::OneT1M, Some(_)) => {
                return Err(Error::ConfigMismatch(format!(
                    "{:?} cell has no HL switch",
                    self.config
                )))
            }
            _ => {}
        }
        if let Some(s) = &self.sensor {
            s.model.validate()?;
            s.model.conductance(s.force)?;
        }
        self.memristor.validate()?;
        self.vl_switch.validate()?;
        if let Some(hl) = &self.hl_switch {
            hl.validate()?;
        }
        Ok(())
    }

    /// Sensor conductance, or `None` for 1T1M.
    pub fn sensor_conductance(&self) -> Result<Option<f64>> {
        self.sensor
            .as_ref()
            .map(|s| s.model.conductance(s.force))
            .transpose()
    }

    /// Conductance of the sensor and memristor in series, excluding switches.
    pub fn stack_conductance(&self) -> Result<f64> {
        let g_m = self.memristor.conductance()?;
        Ok(match self.sensor_conductance()? {
            Some(g_s) => series(&[g_s, g_m]),
            None => g_m,
        })
    }

    pub fn switch(&self, line: Line) -> Option<&SwitchModel> {
        match line {
            Line::Vertical => Some(&self.vl_switch),
            Line::Horizontal => self.hl_switch.as_ref(),
        }
    }

    /// Effective conductance of the path ending on `line`; `None` when the
    /// cell has no switch on that line.
    pub fn path_conductance(&self, line: Line) -> Result<Option<f64>> {
        let Some(sw) = self.switch(line) else {
            return Ok(None);
        };
        Ok(Some(series(&[self.stack_conductance()?, sw.conductance()])))
    }

    /// Effective cell conductance through the VL select switch.
    pub fn conductance(&self) -> Result<f64> {
        Ok(series(&[self.stack_conductance()?, self.vl_switch.conductance()]))
    }
}

/// Series composition `(sum 1/g_i)^-1`. Any zero conductance opens the path;
/// infinite conductances are shorts and drop out.
pub fn series(conductances: &[f64]) -> f64 {
    let mut resistance = 0.0;
    for &g in conductances {
        if g == 0.0 {
            return 0.0;
        }
        resistance += 1.0 / g;
    }
    if resistance == 0.0 {
        f64::INFINITY
    } else {
        1.0 / resistance
    }
}

/// Free-standing form of [`CellState::conductance`].
pub fn cell_conductance(cell: &CellState) -> Result<f64> {
    cell.conductance()
}

/// Device parameters shared by every cell of a build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub sensor: SensorModel,
    pub r_on: f64,
    pub r_off: f64,
    pub switch: SwitchModel,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            sensor: SensorModel::default(),
            r_on: MemristorModel::DEFAULT_R_ON,
            r_off: MemristorModel::DEFAULT_R_OFF,
            switch: SwitchModel::default(),
        }
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        MemristorModel::new(self.r_on, self.r_off, 0.0)?;
        self.switch.validate()
    }

    pub fn memristor(&self, state: f64) -> Result<MemristorModel> {
        MemristorModel::new(self.r_on, self.r_off, state)
    }

    pub fn sensed(&self, force: f64) -> SensedForce {
        SensedForce {
            model: self.sensor,
            force,
        }
    }
}

fn positive(quantity: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(quantity, value, "finite and > 0"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor() -> SensorModel {
        SensorModel {
            sensitivity_k: 1.5e-6,
            bias_c: 1e-6,
            v_supply: 0.5,
            r_divider: 1.0 / 3.1e-5,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn fsr_resistance_examples() {
        let s = sensor();
        assert_eq!(s.resistance(0.0).unwrap(), 1.0e6);
        // 1 / (1.5e-6 * 20 + 1e-6) = 1 / 3.1e-5
        let r20 = s.resistance(20.0).unwrap();
        assert!(rel(r20, 32_258.064_516_129_03) < 1e-12);
        let r40 = s.resistance(40.0).unwrap();
        assert!(rel(r40, 16_393.442_622_950_82) < 1e-12);
        assert!(r40 < r20);
    }

    #[test]
    fn negative_force_is_a_domain_error() {
        assert!(matches!(
            sensor().resistance(-1.0),
            Err(Error::Domain { .. })
        ));
        assert!(sensor().output_voltage(f64::NAN).is_err());
    }

    #[test]
    fn divider_output() {
        let s = sensor();
        // r_divider equals R(20), so the divider sits at half supply.
        assert!((s.output_voltage(20.0).unwrap() - 0.25).abs() < 1e-12);
        let v_big = s.output_voltage(1e12).unwrap();
        assert!((v_big - 0.5).abs() < 1e-6);
        assert!(s.output_voltage(10.0).unwrap() < s.output_voltage(11.0).unwrap());
    }

    #[test]
    fn memristor_endpoints_and_midpoint() {
        let g = |w| MemristorModel::new(1e3, 1e5, w).unwrap().conductance().unwrap();
        assert!(rel(g(1.0), 1.0e-3) < 1e-12);
        assert!(rel(g(0.0), 1.0e-5) < 1e-12);
        assert!(rel(g(0.5), 5.05e-4) < 1e-12);
        assert!(MemristorModel::new(1e3, 1e5, 1.2).is_err());
        assert!(MemristorModel::new(1e5, 1e3, 0.5).is_err());
    }

    #[test]
    fn series_composition() {
        assert!(rel(series(&[3e-4, 3e-4, 3e-4]), 1e-4) < 1e-12);
        assert_eq!(series(&[1e-3, 0.0, 1e-2]), 0.0);
        assert_eq!(series(&[1e-3, f64::INFINITY]), 1e-3);
        assert_eq!(series(&[f64::INFINITY]), f64::INFINITY);
    }

    #[test]
    fn cell_with_switch_off_is_isolated() {
        let cell = CellState::one_t1m1s(
            SensedForce {
                model: sensor(),
                force: 20.0,
            },
            MemristorModel::new(1e3, 1e5, 1.0).unwrap(),
            SwitchModel {
                g_on: 1e-2,
                g_off: 0.0,
                selected: false,
            },
        );
        assert_eq!(cell_conductance(&cell).unwrap(), 0.0);
    }

    #[test]
    fn cell_conductance_reference_value() {
        let cell = CellState::one_t1m1s(
            SensedForce {
                model: sensor(),
                force: 20.0,
            },
            MemristorModel::new(1e3, 1e5, 1.0).unwrap(),
            SwitchModel::default(),
        );
        let g = cell.conductance().unwrap();
        // (1/3.1e-5 + 1/1e-3 + 1/1e-2)^-1 evaluated by hand
        assert!(rel(g, 2.997_775_843_728_846_5e-5) < 1e-12, "{g}");
        assert!(g < 3.1e-5);
    }

    #[test]
    fn one_t1m_omits_the_sensor() {
        let cell = CellState::one_t1m(
            MemristorModel::new(1e3, 1e5, 1.0).unwrap(),
            SwitchModel::default(),
        );
        cell.validate().unwrap();
        assert!(rel(cell.conductance().unwrap(), series(&[1e-3, 1e-2])) < 1e-15);
    }

    #[test]
    fn validate_rejects_mismatched_switches() {
        let mut cell = CellState::one_t1m(
            MemristorModel::new(1e3, 1e5, 1.0).unwrap(),
            SwitchModel::default(),
        );
        cell.hl_switch = Some(SwitchModel::default());
        assert!(matches!(cell.validate(), Err(Error::ConfigMismatch(_))));
    }
}
