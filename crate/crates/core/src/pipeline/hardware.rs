//! Mapping of trained weights onto differential 1T1M crossbars and the
//! hardware forward pass through those crossbars and the analog softmax.

use nalgebra::DMatrix;
use rand::Rng;

use super::network::{argmax, TrainedNetwork};
use super::{SignalMode, SENSOR_OUT};
use crate::analog::{relu, softmax_circuit};
use crate::braille::ForceGrid;
use crate::config::SimConfig;
use crate::crossbar::{ideal_mac_vl, weights_to_differential, DifferentialMap};
use crate::error::Result;

/// One dense layer as a differential crossbar. The last crossbar row holds
/// the bias and is driven at the read voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareLayer {
    pub map: DifferentialMap,
    /// Transimpedance gain of the readout amplifiers (ohms).
    pub tia_gain: f64,
}

impl HardwareLayer {
    /// Differential output currents for row drive voltages `v` (bias row
    /// appended).
    pub fn currents(&self, v: &[f64]) -> Result<Vec<f64>> {
        let plus = ideal_mac_vl(v, &self.map.g_plus)?;
        let minus = ideal_mac_vl(v, &self.map.g_minus)?;
        Ok(plus.iter().zip(&minus).map(|(a, b)| a - b).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareNetwork {
    pub hidden: HardwareLayer,
    pub output: HardwareLayer,
    pub read_voltage: f64,
    pub cfg: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Softmax outputs normalized by `r_f * i_s`.
    pub probabilities: Vec<f64>,
    pub port: usize,
}

fn stacked(w: &[Vec<f64>], b: &[f64]) -> DMatrix<f64> {
    let rows = w.len() + 1;
    let cols = b.len();
    DMatrix::from_fn(rows, cols, |r, c| if r < w.len() { w[r][c] } else { b[c] })
}

/// Programs both dense layers into differential crossbars at the network's
/// mapping scales.
pub fn map_network(net: &TrainedNetwork, cfg: &SimConfig) -> Result<HardwareNetwork> {
    cfg.validate()?;
    let (r_on, r_off) = (cfg.devices.r_on, cfg.devices.r_off);
    let v_read = cfg.scaling.read_voltage;
    let w = &net.weights;
    let hidden = weights_to_differential(
        &stacked(&w.w_hidden, &w.b_hidden),
        r_on,
        r_off,
        net.mapping_scale[0],
    )?;
    let output = weights_to_differential(
        &stacked(&w.w_out, &w.b_out),
        r_on,
        r_off,
        net.mapping_scale[1],
    )?;
    Ok(HardwareNetwork {
        hidden: HardwareLayer {
            tia_gain: 1.0 / hidden.scale,
            map: hidden,
        },
        // The output gain places a unit logit at one thermal voltage.
        output: HardwareLayer {
            tia_gain: cfg.softmax.v_t / (v_read * output.scale),
            map: output,
        },
        read_voltage: v_read,
        cfg: *cfg,
    })
}

impl HardwareNetwork {
    /// Forward pass from features (already noisy and, for the binary
    /// variant, thresholded).
    pub fn forward_features(&self, x: &[f64; SENSOR_OUT]) -> Result<Prediction> {
        let v = self.read_voltage;
        let mut drive: Vec<f64> = x.iter().map(|xi| xi * v).collect();
        drive.push(v);
        let mut h: Vec<f64> = self
            .hidden
            .currents(&drive)?
            .into_iter()
            .map(|i| relu(i * self.hidden.tia_gain))
            .collect();
        h.push(v);
        let a: Vec<f64> = self
            .output
            .currents(&h)?
            .into_iter()
            .map(|i| i * self.output.tia_gain)
            .collect();
        let y = softmax_circuit(&a, &self.cfg.softmax)?;
        let full = self.cfg.softmax.full_scale();
        let probabilities: Vec<f64> = y.iter().map(|yi| yi / full).collect();
        let port = argmax(&probabilities);
        Ok(Prediction {
            probabilities,
            port,
        })
    }

    /// Sensor crossbar, noise, optional comparators, then the mapped layers.
    pub fn forward<R: Rng>(
        &self,
        net: &TrainedNetwork,
        forces: &ForceGrid,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Prediction> {
        debug_assert!(net.mode == SignalMode::Binary || net.binary_thresholds.is_none());
        let x = net.features(forces, &self.cfg, sigma2, rng);
        self.forward_features(&x)
    }
}
