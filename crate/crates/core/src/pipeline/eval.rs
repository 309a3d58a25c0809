//! Accuracy evaluation under noise and the Table-1-style sweep.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hardware::{map_network, HardwareNetwork};
use super::network::{train, Hyper, NetworkArch, TrainedNetwork};
use super::{
    add_noise_in_place, binarize, normalize, sensor_layer_forward, Fidelity, SignalMode,
};
use crate::braille::{build_dataset, Dataset, Selection};
use crate::config::SimConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Independent noise draws per test item.
    pub draws: usize,
    pub seed: u64,
    pub fidelity: Fidelity,
}

impl EvalOptions {
    pub fn new(seed: u64) -> Self {
        EvalOptions {
            draws: 20,
            seed,
            fidelity: Fidelity::Ideal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub truth: String,
    pub predicted: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub selection: Selection,
    pub mode: SignalMode,
    pub sigma2: f64,
    pub seed: u64,
    pub correct: usize,
    pub total: usize,
    /// Percent in [0, 100].
    pub accuracy: f64,
    /// Misclassified pairs, most frequent first.
    pub confusions: Vec<Confusion>,
}

/// Runs every item of `test` through the mapped network `draws` times with
/// fresh noise. Item `i` draws from stream `i` of the master seed, so the
/// report does not depend on evaluation order.
pub fn evaluate(
    net: &TrainedNetwork,
    hw: &HardwareNetwork,
    test: &Dataset,
    sigma2: f64,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if test.samples.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    if test.classes != net.classes {
        return Err(Error::ConfigMismatch(
            "evaluation set and network recognise different symbols".into(),
        ));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::domain("sigma2", sigma2, "finite and >= 0"));
    }
    let cfg = &hw.cfg;
    let mut correct = 0;
    let mut total = 0;
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (item, sample) in test.samples.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(item as u64);
        let clean = match opts.fidelity {
            Fidelity::Ideal => None,
            nodal => Some(normalize(
                &sensor_layer_forward(&sample.forces, &net.sensor_states, &cfg.devices, nodal)?,
                cfg.devices.sensor.v_supply,
                &cfg.scaling,
            )),
        };
        for _ in 0..opts.draws.max(1) {
            let pred = match clean {
                None => hw.forward(net, &sample.forces, sigma2, &mut rng)?,
                Some(mut x) => {
                    add_noise_in_place(&mut x, sigma2, &mut rng);
                    if let Some(t) = &net.binary_thresholds {
                        binarize(&mut x, t);
                    }
                    hw.forward_features(&x)?
                }
            };
            total += 1;
            if pred.port == sample.class {
                correct += 1;
            } else {
                *pairs.entry((sample.class, pred.port)).or_default() += 1;
            }
        }
    }
    let mut confusions: Vec<Confusion> = pairs
        .into_iter()
        .map(|((t, p), count)| Confusion {
            truth: net.label(t).to_string(),
            predicted: net.label(p).to_string(),
            count,
        })
        .collect();
    confusions.sort_by(|a, b| b.count.cmp(&a.count));
    Ok(EvalReport {
        selection: net.selection.clone(),
        mode: net.mode,
        sigma2,
        seed: opts.seed,
        correct,
        total,
        accuracy: 100.0 * correct as f64 / total as f64,
        confusions,
    })
}

/// Grid of independent train-and-evaluate runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub selections: Vec<Selection>,
    pub sigma2: Vec<f64>,
    pub modes: Vec<SignalMode>,
    pub seeds: Vec<u64>,
    /// Copies of each symbol; one is held out for testing.
    pub copies: usize,
    /// Template for every run; `sigma2` and `seed` are overridden per cell.
    pub hyper: Hyper,
    pub draws: usize,
}

impl SweepPlan {
    /// The paper grid: four groups and fusion, four noise levels, both
    /// modes, ten seeds starting at `base_seed`.
    pub fn table1(base_seed: u64) -> Self {
        SweepPlan {
            selections: Selection::table_rows(),
            sigma2: vec![0.02, 0.05, 0.1, 0.5],
            modes: SignalMode::ALL.to_vec(),
            seeds: (0..10).map(|i| base_seed + i).collect(),
            copies: 5,
            hyper: Hyper::new(0.0, base_seed),
            draws: 20,
        }
    }

    pub fn len(&self) -> usize {
        self.selections.len() * self.sigma2.len() * self.modes.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub selection: Selection,
    pub mode: SignalMode,
    pub sigma2: f64,
    pub seed: u64,
    pub accuracy: f64,
}

/// Trains and evaluates one network per plan cell. `progress` sees each
/// finished cell.
pub fn run_sweep(
    plan: &SweepPlan,
    cfg: &SimConfig,
    mut progress: impl FnMut(&SweepCell),
) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::with_capacity(plan.len());
    for selection in &plan.selections {
        let arch = NetworkArch::for_selection(selection)?;
        for &seed in &plan.seeds {
            let data = build_dataset(selection, plan.copies, cfg.f_press, seed)?;
            let (train_set, test_set) = data.split_holdout();
            for &mode in &plan.modes {
                for &sigma2 in &plan.sigma2 {
                    let hyper = Hyper {
                        sigma2,
                        seed,
                        ..plan.hyper
                    };
                    let net = train(&train_set, arch, mode, &hyper, cfg)?;
                    let hw = map_network(&net, cfg)?;
                    let opts = EvalOptions {
                        draws: plan.draws,
                        ..EvalOptions::new(seed)
                    };
                    let report = evaluate(&net, &hw, &test_set, sigma2, &opts)?;
                    let cell = SweepCell {
                        selection: selection.clone(),
                        mode,
                        sigma2,
                        seed,
                        accuracy: report.accuracy,
                    };
                    progress(&cell);
                    cells.push(cell);
                }
            }
        }
    }
    Ok(cells)
}

/// Seed-averaged accuracies laid out like Table 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub selections: Vec<Selection>,
    pub modes: Vec<SignalMode>,
    pub sigma2: Vec<f64>,
    /// `(selection, mode, sigma2)` -> mean accuracy.
    means: BTreeMap<(usize, usize, usize), f64>,
}

impl AccuracyTable {
    pub fn from_cells(cells: &[SweepCell]) -> Self {
        let mut selections: Vec<Selection> = Vec::new();
        let mut modes: Vec<SignalMode> = Vec::new();
        let mut sigma2: Vec<f64> = Vec::new();
        let mut sums: BTreeMap<(usize, usize, usize), (f64, usize)> = BTreeMap::new();
        for c in cells {
            let s = index_of(&mut selections, &c.selection);
            let m = index_of(&mut modes, &c.mode);
            let v = match sigma2.iter().position(|x| *x == c.sigma2) {
                Some(i) => i,
                None => {
                    sigma2.push(c.sigma2);
                    sigma2.len() - 1
                }
            };
            let e = sums.entry((s, m, v)).or_insert((0.0, 0));
            e.0 += c.accuracy;
            e.1 += 1;
        }
        AccuracyTable {
            selections,
            modes,
            sigma2,
            means: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        }
    }

    pub fn mean(&self, selection: &Selection, mode: SignalMode, sigma2: f64) -> Option<f64> {
        let s = self.selections.iter().position(|x| x == selection)?;
        let m = self.modes.iter().position(|x| *x == mode)?;
        let v = self.sigma2.iter().position(|x| *x == sigma2)?;
        self.means.get(&(s, m, v)).copied()
    }

    /// One row per selection; columns are mode x sigma2.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["groups".to_string()];
        for m in &self.modes {
            for s in &self.sigma2 {
                header.push(format!("{m}_{s}"));
            }
        }
        w.write_record(&header)?;
        for (si, sel) in self.selections.iter().enumerate() {
            let mut rec = vec![sel.to_string()];
            for mi in 0..self.modes.len() {
                for vi in 0..self.sigma2.len() {
                    rec.push(match self.means.get(&(si, mi, vi)) {
                        Some(v) => format!("{v:.2}"),
                        None => String::new(),
                    });
                }
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn index_of<T: PartialEq + Clone>(list: &mut Vec<T>, item: &T) -> usize {
    match list.iter().position(|x| x == item) {
        Some(i) => i,
        None => {
            list.push(item.clone());
            list.len() - 1
        }
    }
}

/// Long-form sweep CSV: one line per run.
pub fn write_cells_csv<W: Write>(out: W, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["groups", "mode", "sigma2", "seed", "accuracy"])?;
    for c in cells {
        w.write_record([
            c.selection.to_string(),
            c.mode.to_string(),
            c.sigma2.to_string(),
            c.seed.to_string(),
            format!("{:.4}", c.accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::braille::Group;

    #[test]
    fn table_layout() {
        let g1 = Selection::single(Group::Group1);
        let cells: Vec<SweepCell> = [(0.02, 100.0), (0.02, 98.0), (0.5, 90.0)]
            .iter()
            .enumerate()
            .map(|(i, &(s, a))| SweepCell {
                selection: g1.clone(),
                mode: SignalMode::Analog,
                sigma2: s,
                seed: i as u64,
                accuracy: a,
            })
            .collect();
        let t = AccuracyTable::from_cells(&cells);
        assert_eq!(t.mean(&g1, SignalMode::Analog, 0.02), Some(99.0));
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "groups,analog_0.02,analog_0.5\nGroup1,99.00,90.00\n"
        );
    }

    #[test]
    fn evaluation_is_deterministic_and_bounded() {
        let cfg = SimConfig::defaults();
        let sel = Selection::single(Group::Group1);
        let data = build_dataset(&sel, 3, 20.0, 5).unwrap();
        let (tr, te) = data.split_holdout();
        let hyper = Hyper {
            epochs: 40,
            ..Hyper::new(0.05, 5)
        };
        let net = train(&tr, NetworkArch::new(27).unwrap(), SignalMode::Analog, &hyper, &cfg)
            .unwrap();
        let hw = map_network(&net, &cfg).unwrap();
        let opts = EvalOptions::new(3);
        let a = evaluate(&net, &hw, &te, 0.05, &opts).unwrap();
        let b = evaluate(&net, &hw, &te, 0.05, &opts).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=100.0).contains(&a.accuracy));
        assert_eq!(a.total, 27 * 20);
        let wrong: usize = a.confusions.iter().map(|c| c.count).sum();
        assert_eq!(wrong + a.correct, a.total);
    }
}
