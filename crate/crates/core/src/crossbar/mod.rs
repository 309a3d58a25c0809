//! Crossbar topology, ideal MAC readouts, nodal readouts with parasitics,
//! and the differential encoding of signed weights.

pub mod nodal;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::devices::{CellConfig, CellState, Line};
use crate::error::{Error, Result};

use self::nodal::{NodeId, ResistiveNetwork};

pub const CROSSBAR_SCHEMA: &str = "tms-crossbar/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadoutMode {
    #[serde(rename = "VL_only")]
    VlOnly,
    #[serde(rename = "VL_and_HL")]
    VlAndHl,
}

/// Wire and switch non-idealities applied to a crossbar for leakage studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parasitics {
    /// Resistance of each readout-line segment between adjacent cells and
    /// between the last cell and the readout (ohms).
    pub wire_resistance: f64,
    /// OFF conductance of every select switch (S).
    pub switch_g_off: f64,
    /// Input resistance of each readout amplifier; `0` is an ideal virtual
    /// ground.
    pub readout_resistance: f64,
}

impl Default for Parasitics {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl Parasitics {
    pub fn ideal() -> Self {
        Parasitics {
            wire_resistance: 0.0,
            switch_g_off: 0.0,
            readout_resistance: 0.0,
        }
    }

    /// Defaults fitted so the reference sensor crossbar (every dot pressed at
    /// 20 lbf, memristors at R_ON, two-phase dual readout) deviates from the
    /// ideal readout by 16 %.
    pub fn calibrated() -> Self {
        Parasitics {
            wire_resistance: CALIBRATED_WIRE_RESISTANCE,
            switch_g_off: CALIBRATED_SWITCH_G_OFF,
            readout_resistance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("parasitics.wire_resistance", self.wire_resistance)?;
        non_negative("parasitics.switch_g_off", self.switch_g_off)?;
        non_negative("parasitics.readout_resistance", self.readout_resistance)?;
        Ok(())
    }

    /// Applies the parasitics to every cell and line of `spec`.
    pub fn apply(&self, spec: &mut CrossbarSpec) {
        spec.wire_resistance = self.wire_resistance;
        spec.readout_resistance = self.readout_resistance;
        for cell in &mut spec.cells {
            cell.vl_switch.g_off = self.switch_g_off;
            if let Some(hl) = cell.hl_switch.as_mut() {
                hl.g_off = self.switch_g_off;
            }
        }
    }
}

pub const CALIBRATED_SWITCH_G_OFF: f64 = 1e-4;
pub const CALIBRATED_WIRE_RESISTANCE: f64 = 326.0;

fn non_negative(quantity: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(quantity, v, "finite and >= 0"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarSpec {
    /// Horizontal lines (m).
    pub rows: usize,
    /// Vertical lines (n).
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub cells: Vec<CellState>,
    pub wire_resistance: f64,
    #[serde(default)]
    pub readout_resistance: f64,
    pub readout: ReadoutMode,
}

#[derive(Serialize, Deserialize)]
struct CrossbarFile {
    schema: String,
    crossbar: CrossbarSpec,
}

impl CrossbarSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        cells: Vec<CellState>,
        readout: ReadoutMode,
    ) -> Result<Self> {
        let spec = CrossbarSpec {
            rows,
            cols,
            cells,
            wire_resistance: 0.0,
            readout_resistance: 0.0,
            readout,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::DimensionMismatch {
                context: "crossbar shape",
                expected: "rows >= 1 and cols >= 1".into(),
                actual: format!("{}x{}", self.rows, self.cols),
            });
        }
        if self.cells.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch {
                context: "crossbar cells",
                expected: format!("{} cells", self.rows * self.cols),
                actual: format!("{} cells", self.cells.len()),
            });
        }
        non_negative("wire_resistance", self.wire_resistance)?;
        non_negative("readout_resistance", self.readout_resistance)?;
        for cell in &self.cells {
            cell.validate()?;
        }
        if self.readout == ReadoutMode::VlAndHl
            && self.cells.iter().any(|c| c.config != CellConfig::TwoT1M1S)
        {
            return Err(Error::ConfigMismatch(
                "VL_and_HL readout requires 2T1M1S cells".into(),
            ));
        }
        Ok(())
    }

    pub fn cell(&self, row: usize, col: usize) -> &CellState {
        &self.cells[row * self.cols + col]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut CellState {
        &mut self.cells[row * self.cols + col]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CrossbarFile {
            schema: CROSSBAR_SCHEMA.to_string(),
            crossbar: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CrossbarFile = serde_json::from_str(text)?;
        if file.schema != CROSSBAR_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported crossbar schema {:?} (expected {CROSSBAR_SCHEMA:?})",
                file.schema
            )));
        }
        file.crossbar.validate()?;
        Ok(file.crossbar)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadoutVector {
    pub vl_currents: Vec<f64>,
    /// Empty for VL-only readout.
    pub hl_currents: Vec<f64>,
}

impl ReadoutVector {
    /// VL currents followed by HL currents.
    pub fn concat(&self) -> Vec<f64> {
        self.vl_currents
            .iter()
            .chain(&self.hl_currents)
            .copied()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.vl_currents.len() + self.hl_currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ReadoutVector {
            vl_currents: self.vl_currents.iter().map(|i| i * factor).collect(),
            hl_currents: self.hl_currents.iter().map(|i| i * factor).collect(),
        }
    }
}

/// Column currents `i_l = sum_k v_k * g_kl`.
pub fn ideal_mac_vl(v: &[f64], g: &DMatrix<f64>) -> Result<Vec<f64>> {
    if v.len() != g.nrows() {
        return Err(Error::DimensionMismatch {
            context: "ideal_mac_vl",
            expected: format!("{} drive voltages", g.nrows()),
            actual: v.len().to_string(),
        });
    }
    Ok(g.column_iter()
        .map(|col| col.iter().zip(v).map(|(g, v)| g * v).sum())
        .collect())
}

/// Ideal two-phase readout of a 2T1M1S crossbar with every row driven at
/// `v_supply`.
pub fn ideal_dual_readout(v_supply: f64, spec: &CrossbarSpec) -> Result<ReadoutVector> {
    ideal_dual_readout_driven(spec, &vec![v_supply; spec.rows])
}

/// Ideal dual readout with per-row drive voltages. Each cell contributes its
/// full current to every line whose select switch is ON.
pub fn ideal_dual_readout_driven(spec: &CrossbarSpec, drive: &[f64]) -> Result<ReadoutVector> {
    if spec.readout != ReadoutMode::VlAndHl {
        return Err(Error::ConfigMismatch(
            "ideal dual readout requires a VL_and_HL crossbar".into(),
        ));
    }
    check_drive(spec, drive)?;
    let mut out = ReadoutVector {
        vl_currents: vec![0.0; spec.cols],
        hl_currents: vec![0.0; spec.rows],
    };
    for k in 0..spec.rows {
        for l in 0..spec.cols {
            let cell = spec.cell(k, l);
            if cell.config != CellConfig::TwoT1M1S {
                return Err(Error::ConfigMismatch(
                    "ideal dual readout requires 2T1M1S cells".into(),
                ));
            }
            let stack = cell.stack_conductance()?;
            if cell.vl_switch.selected {
                out.vl_currents[l] +=
                    drive[k] * crate::devices::series(&[stack, cell.vl_switch.g_on]);
            }
            let hl = cell.hl_switch.as_ref().expect("validated 2T1M1S");
            if hl.selected {
                out.hl_currents[k] += drive[k] * crate::devices::series(&[stack, hl.g_on]);
            }
        }
    }
    Ok(out)
}

/// Ideal VL readout of any crossbar: MAC over the VL path conductances.
pub fn ideal_vl_readout(spec: &CrossbarSpec, drive: &[f64]) -> Result<ReadoutVector> {
    check_drive(spec, drive)?;
    let g = path_conductance_matrix(spec, Line::Vertical)?;
    Ok(ReadoutVector {
        vl_currents: ideal_mac_vl(drive, &g)?,
        hl_currents: Vec::new(),
    })
}

/// `rows x cols` matrix of effective cell conductances through `line`.
pub fn path_conductance_matrix(spec: &CrossbarSpec, line: Line) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(spec.rows, spec.cols);
    for k in 0..spec.rows {
        for l in 0..spec.cols {
            g[(k, l)] = spec
                .cell(k, l)
                .path_conductance(line)?
                .ok_or_else(|| Error::ConfigMismatch("cell has no switch on that line".into()))?;
        }
    }
    Ok(g)
}

fn check_drive(spec: &CrossbarSpec, drive: &[f64]) -> Result<()> {
    if drive.len() != spec.rows {
        return Err(Error::DimensionMismatch {
            context: "crossbar drive",
            expected: format!("{} row voltages", spec.rows),
            actual: drive.len().to_string(),
        });
    }
    Ok(())
}

/// Per-phase bookkeeping from a nodal solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalReport {
    pub readout: ReadoutVector,
    /// Current delivered by the drive rails, one entry per solved phase.
    pub injected: Vec<f64>,
    /// Current absorbed by readouts and ground, one entry per solved phase.
    pub absorbed: Vec<f64>,
}

/// Readout of the full resistive network including wire resistance, switch
/// leakage and readout input resistance.
///
/// `mode` selects which lines are read and may differ from `spec.readout`,
/// which lets a 1T1M1S array be probed with a dual readout. A 2T1M1S array
/// read on both line sets is solved in two phases: VL switches as specified
/// with HL switches OFF, then HL switches as specified with VL switches OFF.
/// Cells without an HL switch have their sensing node wired straight to the
/// HL line and are read in a single simultaneous phase.
pub fn solve_nodal(spec: &CrossbarSpec, drive: &[f64], mode: ReadoutMode) -> Result<ReadoutVector> {
    Ok(solve_nodal_detailed(spec, drive, mode)?.readout)
}

pub fn solve_nodal_detailed(
    spec: &CrossbarSpec,
    drive: &[f64],
    mode: ReadoutMode,
) -> Result<NodalReport> {
    check_drive(spec, drive)?;
    for cell in &spec.cells {
        cell.validate()?;
    }
    non_negative("wire_resistance", spec.wire_resistance)?;
    non_negative("readout_resistance", spec.readout_resistance)?;

    let two_transistor = spec
        .cells
        .iter()
        .all(|c| c.config == CellConfig::TwoT1M1S);
    let mixed = !two_transistor && spec.cells.iter().any(|c| c.config == CellConfig::TwoT1M1S);
    if mixed {
        return Err(Error::ConfigMismatch(
            "nodal solve needs a uniform cell configuration".into(),
        ));
    }

    match mode {
        ReadoutMode::VlOnly => {
            let phase = solve_phase(spec, drive, Phase::VlOnly)?;
            Ok(NodalReport {
                readout: ReadoutVector {
                    vl_currents: phase.vl,
                    hl_currents: Vec::new(),
                },
                injected: vec![phase.injected],
                absorbed: vec![phase.absorbed],
            })
        }
        ReadoutMode::VlAndHl if two_transistor => {
            let col = solve_phase(spec, drive, Phase::ColumnSelect)?;
            let row = solve_phase(spec, drive, Phase::RowSelect)?;
            Ok(NodalReport {
                readout: ReadoutVector {
                    vl_currents: col.vl,
                    hl_currents: row.hl,
                },
                injected: vec![col.injected, row.injected],
                absorbed: vec![col.absorbed, row.absorbed],
            })
        }
        ReadoutMode::VlAndHl => {
            let phase = solve_phase(spec, drive, Phase::Simultaneous)?;
            Ok(NodalReport {
                readout: ReadoutVector {
                    vl_currents: phase.vl,
                    hl_currents: phase.hl,
                },
                injected: vec![phase.injected],
                absorbed: vec![phase.absorbed],
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    VlOnly,
    ColumnSelect,
    RowSelect,
    Simultaneous,
}

struct PhaseResult {
    vl: Vec<f64>,
    hl: Vec<f64>,
    injected: f64,
    absorbed: f64,
}

struct Readout {
    /// Where the current is measured.
    probe: NodeId,
    name: String,
}

/// Adds a readout amplifier input. Returns the node the line attaches to.
fn add_readout(
    net: &mut ResistiveNetwork,
    spec: &CrossbarSpec,
    name: String,
) -> Result<(NodeId, Readout)> {
    if spec.readout_resistance == 0.0 {
        let t = net.add_fixed(name.clone(), 0.0);
        Ok((t, Readout { probe: t, name }))
    } else {
        let end = net.add_free(format!("{name}.end"));
        let sense = net.add_fixed(format!("{name}.sense"), 0.0);
        net.connect_resistor(end, sense, spec.readout_resistance)?;
        Ok((end, Readout { probe: sense, name }))
    }
}

fn solve_phase(spec: &CrossbarSpec, drive: &[f64], phase: Phase) -> Result<PhaseResult> {
    let (m, n) = (spec.rows, spec.cols);
    let with_hl = phase != Phase::VlOnly;
    let mut net = ResistiveNetwork::new();
    let rails: Vec<NodeId> = (0..m)
        .map(|k| net.add_fixed(format!("drive[{k}]"), drive[k]))
        .collect();

    // VL l: nodes top to bottom, readout below the last row.
    let mut vl_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(n);
    let mut vl_readouts = Vec::with_capacity(n);
    for l in 0..n {
        let nodes: Vec<NodeId> = (0..m).map(|k| net.add_free(format!("vl[{l}].{k}"))).collect();
        for k in 1..m {
            net.connect_resistor(nodes[k - 1], nodes[k], spec.wire_resistance)?;
        }
        let (end, readout) = add_readout(&mut net, spec, format!("vl[{l}]"))?;
        net.connect_resistor(nodes[m - 1], end, spec.wire_resistance)?;
        vl_readouts.push(readout);
        vl_nodes.push(nodes);
    }

    // HL k: nodes left to right, readout after the last column.
    let mut hl_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(m);
    let mut hl_readouts = Vec::with_capacity(m);
    if with_hl {
        for k in 0..m {
            let nodes: Vec<NodeId> =
                (0..n).map(|l| net.add_free(format!("hl[{k}].{l}"))).collect();
            for l in 1..n {
                net.connect_resistor(nodes[l - 1], nodes[l], spec.wire_resistance)?;
            }
            let (end, readout) = add_readout(&mut net, spec, format!("hl[{k}]"))?;
            net.connect_resistor(nodes[n - 1], end, spec.wire_resistance)?;
            hl_readouts.push(readout);
            hl_nodes.push(nodes);
        }
    }

    for k in 0..m {
        for l in 0..n {
            let cell = spec.cell(k, l);
            let x = net.add_free(format!("cell[{k},{l}]"));
            net.connect(rails[k], x, cell.stack_conductance()?)?;
            let vl_switch = match phase {
                Phase::RowSelect => cell.vl_switch.turned(false),
                _ => cell.vl_switch,
            };
            net.connect(x, vl_nodes[l][k], vl_switch.conductance())?;
            if with_hl {
                match cell.hl_switch {
                    Some(hl) => {
                        let hl = if phase == Phase::ColumnSelect {
                            hl.turned(false)
                        } else {
                            hl
                        };
                        net.connect(x, hl_nodes[k][l], hl.conductance())?;
                    }
                    // No HL select transistor: the sensing node is hard-wired
                    // to the HL line.
                    None => net.connect(x, hl_nodes[k][l], f64::INFINITY)?,
                }
            }
        }
    }

    let sol = net.solve()?;

    let all: Vec<&Readout> = vl_readouts.iter().chain(&hl_readouts).collect();
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            if sol.same_node(a.probe, b.probe) {
                return Err(Error::AmbiguousReadout {
                    a: a.name.clone(),
                    b: b.name.clone(),
                });
            }
        }
    }

    let vl: Vec<f64> = vl_readouts.iter().map(|r| sol.current_into(r.probe)).collect();
    let hl: Vec<f64> = hl_readouts.iter().map(|r| sol.current_into(r.probe)).collect();
    let injected: f64 = -rails.iter().map(|r| sol.current_into(*r)).sum::<f64>();
    let absorbed = vl.iter().chain(&hl).sum::<f64>();
    let (vl, hl) = match phase {
        Phase::ColumnSelect => (vl, Vec::new()),
        Phase::RowSelect => (Vec::new(), hl),
        _ => (vl, hl),
    };
    Ok(PhaseResult {
        vl,
        hl,
        injected,
        absorbed,
    })
}

/// `sum |actual - ideal| / sum |ideal|` over all line currents.
pub fn leakage_fraction(ideal: &ReadoutVector, actual: &ReadoutVector) -> Result<f64> {
    if ideal.vl_currents.len() != actual.vl_currents.len()
        || ideal.hl_currents.len() != actual.hl_currents.len()
    {
        return Err(Error::DimensionMismatch {
            context: "leakage_fraction",
            expected: format!(
                "{} VL + {} HL currents",
                ideal.vl_currents.len(),
                ideal.hl_currents.len()
            ),
            actual: format!(
                "{} VL + {} HL currents",
                actual.vl_currents.len(),
                actual.hl_currents.len()
            ),
        });
    }
    let (ideal, actual) = (ideal.concat(), actual.concat());
    let norm: f64 = ideal.iter().map(|i| i.abs()).sum();
    if norm == 0.0 {
        return Err(Error::ZeroIdealReadout);
    }
    let dev: f64 = ideal.iter().zip(&actual).map(|(i, a)| (a - i).abs()).sum();
    Ok(dev / norm)
}

/// Outcome of the single-active-cell dual readout of a 1T1M1S array.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyProbe {
    pub spec: CrossbarSpec,
    /// Each cell counted once on its VL and once on its HL.
    pub ideal: ReadoutVector,
    pub actual: ReadoutVector,
    pub leakage: f64,
    /// Largest pairwise difference between the line currents (A).
    pub spread: f64,
}

/// Reads a 2x2 1T1M1S array on both line sets with only cell (0,0) pressed
/// at `force`. The VL selects are ideal shorts and wires are lossless, so
/// the sensing node of every cell ties its VL to its HL. Both rows are
/// driven at the sensor supply.
pub fn single_active_cell_probe(
    devices: &crate::devices::DeviceConfig,
    force: f64,
    readout_resistance: f64,
) -> Result<DegeneracyProbe> {
    non_negative("readout_resistance", readout_resistance)?;
    let short = crate::devices::SwitchModel {
        g_on: f64::INFINITY,
        g_off: 0.0,
        selected: true,
    };
    let memristor = devices.memristor(1.0)?;
    let cells = (0..4)
        .map(|i| {
            let f = if i == 0 { force } else { 0.0 };
            CellState::one_t1m1s(devices.sensed(f), memristor, short)
        })
        .collect();
    let mut spec = CrossbarSpec::new(2, 2, cells, ReadoutMode::VlOnly)?;
    spec.readout_resistance = readout_resistance;
    let v = devices.sensor.v_supply;
    let drive = [v, v];
    let mut ideal = ReadoutVector {
        vl_currents: vec![0.0; 2],
        hl_currents: vec![0.0; 2],
    };
    for k in 0..2 {
        for l in 0..2 {
            let i = drive[k] * spec.cell(k, l).stack_conductance()?;
            ideal.vl_currents[l] += i;
            ideal.hl_currents[k] += i;
        }
    }
    let actual = solve_nodal(&spec, &drive, ReadoutMode::VlAndHl)?;
    let leakage = leakage_fraction(&ideal, &actual)?;
    let all = actual.concat();
    let spread = all.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
        - all.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    Ok(DegeneracyProbe {
        spec,
        ideal,
        actual,
        leakage,
        spread,
    })
}

/// Differential conductance encoding of a signed weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialMap {
    pub g_plus: DMatrix<f64>,
    pub g_minus: DMatrix<f64>,
    /// Siemens per unit weight.
    pub scale: f64,
}

impl DifferentialMap {
    /// `(g+ - g-) / scale`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        (&self.g_plus - &self.g_minus) / self.scale
    }
}

/// Encodes `w` as `g+ = g0 + max(w,0)*scale`, `g- = g0 - min(w,0)*scale`
/// with the baseline `g0 = 1/r_off`.
pub fn weights_to_differential(
    w: &DMatrix<f64>,
    r_on: f64,
    r_off: f64,
    scale: f64,
) -> Result<DifferentialMap> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::domain("mapping scale", scale, "finite and > 0"));
    }
    if !(r_on > 0.0 && r_off > r_on) {
        return Err(Error::domain("r_off", r_off, "> r_on > 0"));
    }
    let g_base = 1.0 / r_off;
    let span = 1.0 / r_on - g_base;
    let limit = span / scale;
    let mut g_plus = DMatrix::from_element(w.nrows(), w.ncols(), g_base);
    let mut g_minus = g_plus.clone();
    for r in 0..w.nrows() {
        for c in 0..w.ncols() {
            let v = w[(r, c)];
            if !v.is_finite() || v.abs() * scale > span * (1.0 + 1e-12) {
                return Err(Error::WeightRange {
                    row: r,
                    col: c,
                    value: v,
                    limit,
                });
            }
            let dg = (v.abs() * scale).min(span);
            if v > 0.0 {
                g_plus[(r, c)] = g_base + dg;
            } else if v < 0.0 {
                g_minus[(r, c)] = g_base + dg;
            }
        }
    }
    Ok(DifferentialMap {
        g_plus,
        g_minus,
        scale,
    })
}

/// Writes one CSV row per readout: `eval,vl_0..,hl_0..`.
pub fn write_readouts_csv<W: Write>(out: W, readouts: &[ReadoutVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (nv, nh) = readouts
        .first()
        .map(|r| (r.vl_currents.len(), r.hl_currents.len()))
        .unwrap_or((0, 0));
    let mut header = vec!["eval".to_string()];
    header.extend((0..nv).map(|l| format!("vl_{l}")));
    header.extend((0..nh).map(|k| format!("hl_{k}")));
    w.write_record(&header)?;
    for (i, r) in readouts.iter().enumerate() {
        if r.vl_currents.len() != nv || r.hl_currents.len() != nh {
            return Err(Error::DimensionMismatch {
                context: "readout CSV",
                expected: format!("{nv} VL + {nh} HL"),
                actual: format!("{} VL + {} HL", r.vl_currents.len(), r.hl_currents.len()),
            });
        }
        let mut rec = vec![i.to_string()];
        rec.extend(r.concat().iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
