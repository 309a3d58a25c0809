//! Flat `dotted.key = number` configuration files.
//!
//! The file is parsed as TOML, so both `sensor.bias_c = 1e-6` and a
//! `[sensor]` table with `bias_c = 1e-6` are accepted. Every leaf must be a
//! number. Unknown keys are rejected when the config is applied.

use std::collections::BTreeMap;
use std::path::Path;

use crate::analog::SoftmaxParams;
use crate::crossbar::Parasitics;
use crate::devices::DeviceConfig;
use crate::error::{Error, Result};
use crate::pipeline::ReadoutScaling;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    values: BTreeMap<String, f64>,
}

impl FlatConfig {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            detail: e.message().to_string(),
        })?;
        let mut values = BTreeMap::new();
        flatten("", &toml::Value::Table(table), &mut values, source_name)?;
        Ok(FlatConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.values.insert(key.into(), value);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Canonical text form: sorted `key = value` lines with round-trip
    /// decimal values.
    pub fn to_canonical_string(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v:?}\n"))
            .collect()
    }

    /// Overwrites `target` with the value stored under `key`, if present.
    pub fn apply(&self, key: &str, target: &mut f64) {
        if let Some(v) = self.get(key) {
            *target = v;
        }
    }

    /// Fails on any key outside `known`.
    pub fn reject_unknown<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: Vec<&str> = known.into_iter().collect();
        for key in self.keys() {
            if !known.contains(&key) {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }
}

fn flatten(
    prefix: &str,
    value: &toml::Value,
    out: &mut BTreeMap<String, f64>,
    source_name: &str,
) -> Result<()> {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out, source_name)?;
            }
            Ok(())
        }
        toml::Value::Float(f) => {
            out.insert(prefix.to_string(), *f);
            Ok(())
        }
        toml::Value::Integer(i) => {
            out.insert(prefix.to_string(), *i as f64);
            Ok(())
        }
        other => Err(Error::Config(format!(
            "{source_name}: key {prefix:?} must be a number, found {}",
            other.type_str()
        ))),
    }
}

/// Every simulation parameter that can be set from a device config file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimConfig {
    pub devices: DeviceConfig,
    pub parasitics: Parasitics,
    pub softmax: SoftmaxParams,
    pub scaling: ReadoutScaling,
    /// Force applied by a pressed dot (lbf).
    pub f_press: f64,
}

impl SimConfig {
    pub const KEYS: &'static [&'static str] = &[
        "sensor.sensitivity_k",
        "sensor.bias_c",
        "sensor.v_supply",
        "sensor.r_divider",
        "memristor.r_on",
        "memristor.r_off",
        "switch.g_on",
        "switch.g_off",
        "parasitics.wire_resistance",
        "parasitics.switch_g_off",
        "parasitics.readout_resistance",
        "softmax.r_f",
        "softmax.i_s",
        "softmax.v_t",
        "softmax.r_sum",
        "readout.reference_conductance",
        "readout.read_voltage",
        "braille.f_press",
    ];

    pub fn defaults() -> Self {
        SimConfig {
            devices: DeviceConfig::default(),
            parasitics: Parasitics::calibrated(),
            softmax: SoftmaxParams::default(),
            scaling: ReadoutScaling::default(),
            f_press: crate::braille::DEFAULT_F_PRESS,
        }
    }

    pub fn from_flat(flat: &FlatConfig) -> Result<Self> {
        flat.reject_unknown(Self::KEYS.iter().copied())?;
        let mut c = Self::defaults();
        flat.apply("sensor.sensitivity_k", &mut c.devices.sensor.sensitivity_k);
        flat.apply("sensor.bias_c", &mut c.devices.sensor.bias_c);
        flat.apply("sensor.v_supply", &mut c.devices.sensor.v_supply);
        flat.apply("sensor.r_divider", &mut c.devices.sensor.r_divider);
        flat.apply("memristor.r_on", &mut c.devices.r_on);
        flat.apply("memristor.r_off", &mut c.devices.r_off);
        flat.apply("switch.g_on", &mut c.devices.switch.g_on);
        flat.apply("switch.g_off", &mut c.devices.switch.g_off);
        flat.apply("parasitics.wire_resistance", &mut c.parasitics.wire_resistance);
        flat.apply("parasitics.switch_g_off", &mut c.parasitics.switch_g_off);
        flat.apply(
            "parasitics.readout_resistance",
            &mut c.parasitics.readout_resistance,
        );
        flat.apply("softmax.r_f", &mut c.softmax.r_f);
        flat.apply("softmax.i_s", &mut c.softmax.i_s);
        flat.apply("softmax.v_t", &mut c.softmax.v_t);
        flat.apply("softmax.r_sum", &mut c.softmax.r_sum);
        flat.apply(
            "readout.reference_conductance",
            &mut c.scaling.reference_conductance,
        );
        flat.apply("readout.read_voltage", &mut c.scaling.read_voltage);
        flat.apply("braille.f_press", &mut c.f_press);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_flat(&FlatConfig::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.devices.validate()?;
        self.parasitics.validate()?;
        self.softmax.validate()?;
        self.scaling.validate()?;
        if !(self.f_press > 0.0 && self.f_press.is_finite()) {
            return Err(Error::domain("braille.f_press", self.f_press, "finite and > 0"));
        }
        Ok(())
    }

    /// The full parameter set as a flat config.
    pub fn to_flat(&self) -> FlatConfig {
        let mut f = FlatConfig::default();
        let d = &self.devices;
        f.set("sensor.sensitivity_k", d.sensor.sensitivity_k);
        f.set("sensor.bias_c", d.sensor.bias_c);
        f.set("sensor.v_supply", d.sensor.v_supply);
        f.set("sensor.r_divider", d.sensor.r_divider);
        f.set("memristor.r_on", d.r_on);
        f.set("memristor.r_off", d.r_off);
        f.set("switch.g_on", d.switch.g_on);
        f.set("switch.g_off", d.switch.g_off);
        f.set("parasitics.wire_resistance", self.parasitics.wire_resistance);
        f.set("parasitics.switch_g_off", self.parasitics.switch_g_off);
        f.set(
            "parasitics.readout_resistance",
            self.parasitics.readout_resistance,
        );
        f.set("softmax.r_f", self.softmax.r_f);
        f.set("softmax.i_s", self.softmax.i_s);
        f.set("softmax.v_t", self.softmax.v_t);
        f.set("softmax.r_sum", self.softmax.r_sum);
        f.set(
            "readout.reference_conductance",
            self.scaling.reference_conductance,
        );
        f.set("readout.read_voltage", self.scaling.read_voltage);
        f.set("braille.f_press", self.f_press);
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = FlatConfig::parse("sensor.bias_c = 2e-6\nmemristor.r_on = 2000\n", "a").unwrap();
        let b = FlatConfig::parse("[sensor]\nbias_c = 2e-6\n[memristor]\nr_on = 2000\n", "b")
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get("memristor.r_on"), Some(2000.0));
    }

    #[test]
    fn overrides_apply_on_top_of_defaults() {
        let flat = FlatConfig::parse("sensor.bias_c = 2e-6", "t").unwrap();
        let c = SimConfig::from_flat(&flat).unwrap();
        assert_eq!(c.devices.sensor.bias_c, 2e-6);
        assert_eq!(c.devices.r_on, 1e3);
    }

    #[test]
    fn unknown_and_non_numeric_keys_are_rejected() {
        let flat = FlatConfig::parse("sensor.bogus = 1", "t").unwrap();
        assert!(matches!(SimConfig::from_flat(&flat), Err(Error::Config(_))));
        assert!(FlatConfig::parse("sensor.bias_c = \"x\"", "t").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let flat = FlatConfig::parse("memristor.r_off = 10", "t").unwrap();
        assert!(SimConfig::from_flat(&flat).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let c = SimConfig::defaults();
        let text = c.to_flat().to_canonical_string();
        let back = SimConfig::from_flat(&FlatConfig::parse(&text, "rt").unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
