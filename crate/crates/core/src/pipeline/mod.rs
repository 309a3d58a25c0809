//! The three-layer recognition pipeline: TMS sensor layer, a 6x14 1T1M
//! hidden layer with ReLU, and a group-sized output layer with the analog
//! softmax.

mod eval;
mod hardware;
mod network;

pub use eval::{
    evaluate, run_sweep, write_cells_csv, AccuracyTable, Confusion, EvalOptions, EvalReport,
    SweepCell, SweepPlan,
};
pub use hardware::{map_network, HardwareLayer, HardwareNetwork, Prediction};
pub use network::{
    train, Hyper, NetworkArch, Optimizer, SoftwareNetwork, TrainedNetwork, HIDDEN, NETWORK_FORMAT, SENSOR_OUT,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::braille::{ForceGrid, GRID_COLS, GRID_ROWS};
use crate::crossbar::{self, CrossbarSpec, Parasitics, ReadoutMode};
use crate::devices::{series, state_to_conductance, CellState, DeviceConfig};
use crate::error::{Error, Result};

/// First-layer memristor states, indexed like [`ForceGrid`].
pub type SensorStates = [[f64; GRID_COLS]; GRID_ROWS];

/// Conversion of raw sensor-layer currents into dimensionless features and
/// of features into hidden-layer drive voltages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutScaling {
    /// Currents are divided by `v_supply * reference_conductance` (S).
    pub reference_conductance: f64,
    /// Drive voltage of a unit feature on the 1T1M layers (V).
    pub read_voltage: f64,
}

impl Default for ReadoutScaling {
    fn default() -> Self {
        ReadoutScaling {
            reference_conductance: DEFAULT_REFERENCE_CONDUCTANCE,
            read_voltage: 0.1,
        }
    }
}

/// A pressed dot at full memristor state reads about 5 feature units.
pub const DEFAULT_REFERENCE_CONDUCTANCE: f64 = 6e-6;

impl ReadoutScaling {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("readout.reference_conductance", self.reference_conductance),
            ("readout.read_voltage", self.read_voltage),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn current_unit(&self, v_supply: f64) -> f64 {
        v_supply * self.reference_conductance
    }
}

/// How the sensor crossbar is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Fidelity {
    /// Two-phase ideal dual readout.
    #[default]
    Ideal,
    /// Full nodal solve with the given parasitics.
    Nodal(Parasitics),
}

/// 4x2 2T1M1S crossbar for one force grid, every row driven at `v_supply`.
pub fn sensor_crossbar(
    forces: &ForceGrid,
    states: &SensorStates,
    devices: &DeviceConfig,
) -> Result<CrossbarSpec> {
    let mut cells = Vec::with_capacity(GRID_ROWS * GRID_COLS);
    for r in 0..GRID_ROWS {
        for c in 0..GRID_COLS {
            devices.sensor.conductance(forces.get(r, c))?;
            cells.push(CellState::two_t1m1s(
                devices.sensed(forces.get(r, c)),
                devices.memristor(states[r][c])?,
                devices.switch,
                devices.switch,
            ));
        }
    }
    CrossbarSpec::new(GRID_ROWS, GRID_COLS, cells, ReadoutMode::VlAndHl)
}

/// Raw sensor-layer currents: 2 VL (column) currents then 4 HL (row)
/// currents, in amperes.
pub fn sensor_layer_forward(
    forces: &ForceGrid,
    states: &SensorStates,
    devices: &DeviceConfig,
    fidelity: Fidelity,
) -> Result<[f64; SENSOR_OUT]> {
    let mut spec = sensor_crossbar(forces, states, devices)?;
    let drive = vec![devices.sensor.v_supply; GRID_ROWS];
    let readout = match fidelity {
        Fidelity::Ideal => crossbar::ideal_dual_readout_driven(&spec, &drive)?,
        Fidelity::Nodal(p) => {
            p.apply(&mut spec);
            crossbar::solve_nodal(&spec, &drive, ReadoutMode::VlAndHl)?
        }
    };
    let mut out = [0.0; SENSOR_OUT];
    for (o, i) in out.iter_mut().zip(readout.concat()) {
        *o = i;
    }
    Ok(out)
}

/// Result of comparing a parasitic nodal solve with the ideal readout.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageProbe {
    pub ideal: crossbar::ReadoutVector,
    pub actual: crossbar::ReadoutVector,
    pub leakage: f64,
}

/// Leakage of the sensor crossbar for `forces` with every memristor at
/// state 1 under `parasitics`. Every pressed dot at the default force is the
/// calibration reference.
pub fn reference_leakage(
    forces: &ForceGrid,
    devices: &DeviceConfig,
    parasitics: &Parasitics,
) -> Result<LeakageProbe> {
    parasitics.validate()?;
    let states = [[1.0; GRID_COLS]; GRID_ROWS];
    let ideal_spec = sensor_crossbar(forces, &states, devices)?;
    let drive = vec![devices.sensor.v_supply; GRID_ROWS];
    let ideal = crossbar::ideal_dual_readout_driven(&ideal_spec, &drive)?;
    let mut spec = ideal_spec;
    parasitics.apply(&mut spec);
    let actual = crossbar::solve_nodal(&spec, &drive, ReadoutMode::VlAndHl)?;
    let leakage = crossbar::leakage_fraction(&ideal, &actual)?;
    Ok(LeakageProbe {
        ideal,
        actual,
        leakage,
    })
}

/// Sensor-layer currents divided by the scaling unit.
pub fn normalize(currents: &[f64; SENSOR_OUT], v_supply: f64, s: &ReadoutScaling) -> [f64; SENSOR_OUT] {
    let unit = s.current_unit(v_supply);
    currents.map(|i| i / unit)
}

/// Allocation-free ideal features used inside the training loop. Agrees
/// with `normalize(sensor_layer_forward(.., Ideal))` to rounding.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FastSensor {
    k: f64,
    c: f64,
    v: f64,
    r_on: f64,
    r_off: f64,
    g_on: f64,
    unit: f64,
}

impl FastSensor {
    pub(crate) fn new(devices: &DeviceConfig, scaling: &ReadoutScaling) -> Self {
        FastSensor {
            k: devices.sensor.sensitivity_k,
            c: devices.sensor.bias_c,
            v: devices.sensor.v_supply,
            r_on: devices.r_on,
            r_off: devices.r_off,
            g_on: devices.switch.g_on,
            unit: scaling.current_unit(devices.sensor.v_supply),
        }
    }

    /// Normalized current of one cell through one selected switch.
    #[inline]
    pub(crate) fn cell(&self, force: f64, state: f64) -> f64 {
        let g = series(&[
            self.k * force + self.c,
            state_to_conductance(self.r_on, self.r_off, state),
            self.g_on,
        ]);
        self.v * g / self.unit
    }

    pub(crate) fn features(&self, forces: &ForceGrid, states: &SensorStates) -> [f64; SENSOR_OUT] {
        let mut out = [0.0; SENSOR_OUT];
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                let i = self.cell(forces.get(r, c), states[r][c]);
                out[c] += i;
                out[GRID_COLS + r] += i;
            }
        }
        out
    }

    /// `d cell / d state` for every cell by central differences with a
    /// relative step of 1e-6.
    pub(crate) fn cell_slopes(&self, forces: &ForceGrid, states: &SensorStates) -> SensorStates {
        let mut d = [[0.0; GRID_COLS]; GRID_ROWS];
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                let s = states[r][c];
                let h = 1e-6 * s.abs().max(1e-3);
                let f = forces.get(r, c);
                d[r][c] = (self.cell(f, s + h) - self.cell(f, s - h)) / (2.0 * h);
            }
        }
        d
    }
}

/// Additive white Gaussian noise on normalized features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma2: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma2: f64, seed: u64) -> Result<Self> {
        let spec = NoiseSpec { sigma2, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain("sigma2", self.sigma2, "finite and >= 0"));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// `x + N(0, sigma2)` element-wise, deterministic in `spec.seed`.
pub fn add_noise(x: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = x.to_vec();
    add_noise_in_place(&mut out, spec.sigma2, &mut spec.rng());
    Ok(out)
}

pub(crate) fn add_noise_in_place<R: Rng>(x: &mut [f64], sigma2: f64, rng: &mut R) {
    if sigma2 == 0.0 {
        return;
    }
    let sigma = sigma2.sqrt();
    for v in x {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}

/// Sensor-layer signal representation seen by the hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalMode {
    Analog,
    Binary,
}

impl SignalMode {
    pub const ALL: [SignalMode; 2] = [SignalMode::Analog, SignalMode::Binary];
}

impl std::fmt::Display for SignalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SignalMode::Analog => "analog",
            SignalMode::Binary => "binary",
        })
    }
}

impl std::str::FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analog" => Ok(SignalMode::Analog),
            "binary" => Ok(SignalMode::Binary),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected analog or binary)"
            ))),
        }
    }
}

/// Comparator stage of the binary variant.
#[inline]
pub(crate) fn binarize(x: &mut [f64], thresholds: &[f64]) {
    for (v, t) in x.iter_mut().zip(thresholds) {
        *v = if *v > *t { 1.0 } else { 0.0 };
    }
}

/// Per-feature comparator thresholds halfway between the noiseless readout
/// of a released patch and that of a single pressed dot on the line, so each
/// bit reports whether its line carries any pressed dot.
pub(crate) fn binary_thresholds(
    sensor: &FastSensor,
    f_press: f64,
    states: &SensorStates,
) -> [f64; SENSOR_OUT] {
    let empty = sensor.features(&ForceGrid([[0.0; GRID_COLS]; GRID_ROWS]), states);
    let mut single = [0.0f64; SENSOR_OUT];
    for r in 0..GRID_ROWS {
        for c in 0..GRID_COLS {
            let mut g = [[0.0; GRID_COLS]; GRID_ROWS];
            g[r][c] = f_press;
            let x = sensor.features(&ForceGrid(g), states);
            // Feature order: VL (columns) then HL (rows).
            for j in [c, GRID_COLS + r] {
                single[j] = single[j].max(x[j]);
            }
        }
    }
    std::array::from_fn(|j| 0.5 * (empty[j] + single[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::braille::{encode, symbol_to_forces, Group};

    fn full_states() -> SensorStates {
        [[1.0; 2]; 4]
    }

    #[test]
    fn fast_path_matches_crossbar_readout() {
        let dev = DeviceConfig::default();
        let s = ReadoutScaling::default();
        let fast = FastSensor::new(&dev, &s);
        let states = [[0.2, 0.9], [0.5, 0.7], [1.0, 0.0], [0.3, 0.6]];
        for label in ["A", "Q", "Z", "CAP"] {
            let g = symbol_to_forces(&encode(label, Group::Group1).unwrap(), 20.0).unwrap();
            let slow = normalize(
                &sensor_layer_forward(&g, &states, &dev, Fidelity::Ideal).unwrap(),
                dev.sensor.v_supply,
                &s,
            );
            let quick = fast.features(&g, &states);
            for (a, b) in slow.iter().zip(quick) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_forces_leave_only_the_bias_term() {
        let dev = DeviceConfig::default();
        let out = sensor_layer_forward(&ForceGrid::default(), &full_states(), &dev, Fidelity::Ideal)
            .unwrap();
        // Explicit summation: each cell passes v * (1/c + r_on + 1/g_on)^-1.
        let per_cell = 0.5 / (1.0 / 1e-6 + 1e3 + 1.0 / 1e-2);
        for (i, v) in out.iter().enumerate() {
            let cells = if i < 2 { 4.0 } else { 2.0 };
            assert!((v - cells * per_cell).abs() < 1e-18, "{i}: {v}");
            assert!(*v <= cells * 0.5 * 1e-6);
        }
    }

    #[test]
    fn single_pressed_dot_dominates_its_lines() {
        let dev = DeviceConfig::default();
        let g = symbol_to_forces(&encode("A", Group::Group1).unwrap(), 20.0).unwrap();
        let out = sensor_layer_forward(&g, &full_states(), &dev, Fidelity::Ideal).unwrap();
        let pressed = 0.5 / (1.0 / 31e-6 + 1e3 + 100.0);
        let idle = 0.5 / (1.0 / 1e-6 + 1e3 + 100.0);
        assert!((out[0] - (pressed + 3.0 * idle)).abs() < 1e-18);
        assert!((out[2] - (pressed + idle)).abs() < 1e-18);
        for i in [1, 3, 4, 5] {
            assert!(out[0] > out[i] && out[2] > out[i]);
        }
    }

    #[test]
    fn readouts_scale_with_supply() {
        let mut dev = DeviceConfig::default();
        let g = symbol_to_forces(&encode("R", Group::Group1).unwrap(), 20.0).unwrap();
        let states = [[0.4; 2]; 4];
        let a = sensor_layer_forward(&g, &states, &dev, Fidelity::Ideal).unwrap();
        dev.sensor.v_supply *= 2.0;
        let b = sensor_layer_forward(&g, &states, &dev, Fidelity::Ideal).unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((2.0 * x - y).abs() <= 1e-15 * y);
        }
    }

    #[test]
    fn nodal_fidelity_without_parasitics_matches_ideal() {
        let dev = DeviceConfig::default();
        let g = symbol_to_forces(&encode("x", Group::Group2).unwrap(), 20.0).unwrap();
        let states = [[0.8; 2]; 4];
        let a = sensor_layer_forward(&g, &states, &dev, Fidelity::Ideal).unwrap();
        let b = sensor_layer_forward(&g, &states, &dev, Fidelity::Nodal(Parasitics::ideal()))
            .unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-9 * x);
        }
    }

    #[test]
    fn noise_identity_and_determinism() {
        let x = [1.0, -2.0, 3.5];
        assert_eq!(add_noise(&x, &NoiseSpec::new(0.0, 1).unwrap()).unwrap(), x.to_vec());
        let a = add_noise(&x, &NoiseSpec::new(0.1, 9).unwrap()).unwrap();
        let b = add_noise(&x, &NoiseSpec::new(0.1, 9).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(NoiseSpec::new(-0.1, 0).is_err());
    }

    #[test]
    fn noise_statistics() {
        let n = 100_000;
        let x = vec![0.25; n];
        let y = add_noise(&x, &NoiseSpec::new(0.1, 42).unwrap()).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.25).abs() < 3.0 * 0.1f64.sqrt() / (n as f64).sqrt());
        assert!((var - 0.1).abs() < 0.005);
    }

    #[test]
    fn slopes_match_analytic_derivative() {
        let dev = DeviceConfig::default();
        let fast = FastSensor::new(&dev, &ReadoutScaling::default());
        let mut g = ForceGrid::default();
        g.0[1][1] = 20.0;
        let states = [[0.5; 2]; 4];
        let d = fast.cell_slopes(&g, &states);
        // d/dw of v*(1/gs + 1/gm(w) + 1/gt)^-1 / unit with gm = g0 + w*dg.
        let (gs, g0, dg) = (31e-6, 1e-5, 1e-3 - 1e-5);
        let gm = g0 + 0.5 * dg;
        let r = 1.0 / gs + 1.0 / gm + 1e-2f64.recip();
        let expect = 0.5 / (0.5 * 6e-6) * dg / (gm * gm * r * r);
        assert!(((d[1][1] - expect) / expect).abs() < 1e-6);
    }

    #[test]
    fn calibrated_parasitics_hit_the_reference_leakage() {
        let all = ForceGrid([[20.0; GRID_COLS]; GRID_ROWS]);
        let p = reference_leakage(&all, &DeviceConfig::default(), &Parasitics::calibrated()).unwrap();
        assert!((p.leakage - 0.16).abs() < 0.005, "{}", p.leakage);
        let ideal = reference_leakage(&all, &DeviceConfig::default(), &Parasitics::ideal()).unwrap();
        assert!(ideal.leakage < 1e-9);
    }
}
