//! Area and power accounting for analog/binary, serial/parallel builds.
//!
//! Instance counts come from the layer dimensions; unit costs come from a
//! [`CostTable`]. Parallel processing gives every output line its own
//! amplifier (and divider, for the softmax). Serial processing multiplexes
//! the lines of each stage onto one amplifier and one shared divider, with
//! a sample-and-hold per softmax channel.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::FlatConfig;
use crate::error::{Error, Result};
use crate::pipeline::NetworkArch;

const DEFAULT_TABLE: &str = include_str!("../data/cost_table.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Analog,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Processing {
    Parallel,
    Serial,
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Analog => "analog",
            Style::Binary => "binary",
        })
    }
}

impl fmt::Display for Processing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Processing::Parallel => "parallel",
            Processing::Serial => "serial",
        })
    }
}

impl FromStr for Style {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analog" => Ok(Style::Analog),
            "binary" => Ok(Style::Binary),
            other => Err(Error::Config(format!("unknown style {other:?}"))),
        }
    }
}

/// The four builds in column order of the cost table.
pub const BUILDS: [(Style, Processing); 4] = [
    (Style::Analog, Processing::Parallel),
    (Style::Analog, Processing::Serial),
    (Style::Binary, Processing::Parallel),
    (Style::Binary, Processing::Serial),
];

/// Per-instance costs of one circuit style. `None` means not specified.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitCosts {
    pub cell_area: Option<f64>,
    pub cell_power: Option<f64>,
    pub amplifier_area: Option<f64>,
    pub amplifier_power: Option<f64>,
    pub divider_area: Option<f64>,
    pub divider_power: Option<f64>,
    /// Per multiplexed line (serial only).
    pub mux_area: Option<f64>,
    pub mux_power: Option<f64>,
    /// Per held softmax channel (serial only).
    pub hold_area: Option<f64>,
    pub hold_power: Option<f64>,
    /// Data converter per sensor readout (binary only).
    pub converter_area: Option<f64>,
    pub converter_power: Option<f64>,
}

const UNIT_KEYS: [&str; 12] = [
    "cell_area",
    "cell_power",
    "amplifier_area",
    "amplifier_power",
    "divider_area",
    "divider_power",
    "mux_area",
    "mux_power",
    "hold_area",
    "hold_power",
    "converter_area",
    "converter_power",
];

impl UnitCosts {
    fn slot(&mut self, key: &str) -> &mut Option<f64> {
        match key {
            "cell_area" => &mut self.cell_area,
            "cell_power" => &mut self.cell_power,
            "amplifier_area" => &mut self.amplifier_area,
            "amplifier_power" => &mut self.amplifier_power,
            "divider_area" => &mut self.divider_area,
            "divider_power" => &mut self.divider_power,
            "mux_area" => &mut self.mux_area,
            "mux_power" => &mut self.mux_power,
            "hold_area" => &mut self.hold_area,
            "hold_power" => &mut self.hold_power,
            "converter_area" => &mut self.converter_area,
            "converter_power" => &mut self.converter_power,
            _ => unreachable!("key list and slots agree"),
        }
    }

    fn all_zero() -> Self {
        let mut u = UnitCosts::default();
        for k in UNIT_KEYS {
            *u.slot(k) = Some(0.0);
        }
        u
    }

    fn entries(&self) -> [(&'static str, Option<f64>); 12] {
        let mut copy = *self;
        UNIT_KEYS.map(|k| (k, *copy.slot(k)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTable {
    pub sensor_area: Option<f64>,
    pub analog: UnitCosts,
    pub binary: UnitCosts,
}

impl CostTable {
    /// The calibrated table shipped with the crate.
    pub fn calibrated() -> Self {
        let flat = FlatConfig::parse(DEFAULT_TABLE, "cost_table.toml")
            .expect("bundled cost table parses");
        Self::from_flat(&flat).expect("bundled cost table is valid")
    }

    pub fn zero() -> Self {
        CostTable {
            sensor_area: Some(0.0),
            analog: UnitCosts::all_zero(),
            binary: UnitCosts::all_zero(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_flat(&FlatConfig::load(path)?)
    }

    /// Keys: `sensor_area`, `analog.<unit>` and `binary.<unit>`.
    pub fn from_flat(flat: &FlatConfig) -> Result<Self> {
        let mut t = CostTable::default();
        for key in flat.keys() {
            let value = flat.get(key).expect("listed key");
            let slot = match key.split_once('.') {
                None if key == "sensor_area" => &mut t.sensor_area,
                Some(("analog", unit)) if UNIT_KEYS.contains(&unit) => t.analog.slot(unit),
                Some(("binary", unit)) if UNIT_KEYS.contains(&unit) => t.binary.slot(unit),
                _ => return Err(Error::Config(format!("unknown cost key {key:?}"))),
            };
            *slot = Some(value);
        }
        t.validate()?;
        Ok(t)
    }

    pub fn to_flat(&self) -> FlatConfig {
        let mut f = FlatConfig::default();
        if let Some(v) = self.sensor_area {
            f.set("sensor_area", v);
        }
        for (style, units) in [("analog", &self.analog), ("binary", &self.binary)] {
            for (k, v) in units.entries() {
                if let Some(v) = v {
                    f.set(format!("{style}.{k}"), v);
                }
            }
        }
        f
    }

    pub fn validate(&self) -> Result<()> {
        let mut all = vec![("sensor_area".to_string(), self.sensor_area)];
        for (style, units) in [("analog", &self.analog), ("binary", &self.binary)] {
            all.extend(units.entries().map(|(k, v)| (format!("{style}.{k}"), v)));
        }
        for (key, v) in all {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("cost {key} = {v} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    pub fn units(&self, style: Style) -> &UnitCosts {
        match style {
            Style::Analog => &self.analog,
            Style::Binary => &self.binary,
        }
    }

    /// Fits unit costs so that `dims` reproduces `targets` exactly.
    ///
    /// Areas determine every unit area. Power has fewer targets than units,
    /// so multiplexers and holds are taken as passive, the binary build
    /// reuses the analog amplifier, and the remaining power goes to the
    /// dividers and converters.
    pub fn calibrate(targets: &CostTargets, dims: &CostDims) -> Result<Self> {
        let c = |p| InstanceCounts::new(dims, p);
        let (par, ser) = (c(Processing::Parallel), c(Processing::Serial));
        let sensor_area = targets.layer1_area / par.sensors as f64;
        let analog_amp_area = targets.analog.l1_amp_area[0] / par.l1_amplifiers as f64;
        let analog_amp_power = {
            // a*A + d*D = P_par, b*A + e*D = P_ser over amplifiers A and dividers D.
            let (a, d) = ((par.l1_amplifiers + par.l23_amplifiers) as f64, par.dividers as f64);
            let (b, e) = ((ser.l1_amplifiers + ser.l23_amplifiers) as f64, ser.dividers as f64);
            let [pp, ps] = targets.analog.amp_power;
            (pp * e - ps * d) / (a * e - b * d)
        };

        let mut table = CostTable {
            sensor_area: Some(sensor_area),
            ..CostTable::default()
        };
        for style in [Style::Analog, Style::Binary] {
            let t = match style {
                Style::Analog => &targets.analog,
                Style::Binary => &targets.binary,
            };
            let cells = par.l23_cells as f64;
            let all_cells = (par.l1_cells + par.l23_cells) as f64;
            let l1 = par.l1_amplifiers as f64;
            let amp_area = analog_amp_area;
            let conv_area = match style {
                Style::Analog => 0.0,
                Style::Binary => t.l1_amp_area[0] / l1 - amp_area,
            };
            let conv_each = ser.l1_amplifiers as f64 * (amp_area + conv_area);
            let mux_area = (t.l1_amp_area[1] - conv_each) / ser.l1_mux as f64;
            let divider_area = (t.l23_amp_area[0] - par.l23_amplifiers as f64 * amp_area)
                / par.dividers as f64;
            let hold_area = (t.l23_amp_area[1]
                - ser.l23_amplifiers as f64 * amp_area
                - ser.dividers as f64 * divider_area
                - ser.l23_mux as f64 * mux_area)
                / ser.holds as f64;

            let pa = analog_amp_power;
            let amps_par = (par.l1_amplifiers + par.l23_amplifiers) as f64;
            let amps_ser = (ser.l1_amplifiers + ser.l23_amplifiers) as f64;
            let (conv_power, divider_power) = match style {
                Style::Analog => (0.0, (t.amp_power[1] - amps_ser * pa) / ser.dividers as f64),
                Style::Binary => {
                    // Converters and dividers share what the amplifiers leave.
                    let r_par = t.amp_power[0] - amps_par * pa;
                    let r_ser = t.amp_power[1] - amps_ser * pa;
                    let (cp, dp) = (par.converters as f64, par.dividers as f64);
                    let (cs, ds) = (ser.converters as f64, ser.dividers as f64);
                    let conv = (r_par * ds - r_ser * dp) / (cp * ds - cs * dp);
                    (conv, (r_ser - cs * conv) / ds)
                }
            };
            let units = UnitCosts {
                cell_area: Some(t.l23_crossbar_area / cells),
                cell_power: Some(t.crossbar_power / all_cells),
                amplifier_area: Some(amp_area),
                amplifier_power: Some(pa),
                divider_area: Some(divider_area),
                divider_power: Some(divider_power),
                mux_area: Some(mux_area),
                mux_power: Some(0.0),
                hold_area: Some(hold_area),
                hold_power: Some(0.0),
                converter_area: (style == Style::Binary).then_some(conv_area),
                converter_power: (style == Style::Binary).then_some(conv_power),
            };
            match style {
                Style::Analog => table.analog = units,
                Style::Binary => table.binary = units,
            }
        }
        table.validate()?;
        Ok(table)
    }
}

/// Figures a calibrated table must reproduce for one circuit style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleTargets {
    pub l23_crossbar_area: f64,
    /// Both crossbars together.
    pub crossbar_power: f64,
    /// `[parallel, serial]`.
    pub l1_amp_area: [f64; 2],
    pub l23_amp_area: [f64; 2],
    /// All amplifiers together, `[parallel, serial]`.
    pub amp_power: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTargets {
    pub layer1_area: f64,
    pub analog: StyleTargets,
    pub binary: StyleTargets,
}

impl CostTargets {
    /// The reference figures of the 6x14 fusion design.
    pub fn reference() -> Self {
        CostTargets {
            layer1_area: 0.02,
            analog: StyleTargets {
                l23_crossbar_area: 39.5e-6,
                crossbar_power: 262e-6,
                l1_amp_area: [3.38e-6, 0.906e-6],
                l23_amp_area: [438.45e-6, 90e-6],
                amp_power: [236.4e-3, 3.4e-3],
            },
            binary: StyleTargets {
                l23_crossbar_area: 562.3e-6,
                crossbar_power: 3.6e-3,
                l1_amp_area: [6.77e-6, 1.47e-6],
                l23_amp_area: [2932e-6, 154e-6],
                amp_power: [1.9, 0.1],
            },
        }
    }
}

/// Layer dimensions that drive the instance counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostDims {
    pub sensor_rows: usize,
    pub sensor_cols: usize,
    pub hidden: usize,
    pub n_out: usize,
}

impl From<NetworkArch> for CostDims {
    fn from(a: NetworkArch) -> Self {
        CostDims {
            sensor_rows: a.sensor_rows,
            sensor_cols: a.sensor_cols,
            hidden: a.hidden,
            n_out: a.n_out,
        }
    }
}

impl CostDims {
    pub fn scaled(&self, k: usize) -> Self {
        CostDims {
            sensor_rows: self.sensor_rows * k,
            sensor_cols: self.sensor_cols * k,
            hidden: self.hidden * k,
            n_out: self.n_out * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCounts {
    pub sensors: usize,
    pub l1_cells: usize,
    /// Both differential 1T1M crossbars including their bias rows.
    pub l23_cells: usize,
    pub l1_amplifiers: usize,
    pub l1_mux: usize,
    pub converters: usize,
    /// Hidden readouts, output readouts, exponential blocks and the summer.
    pub l23_amplifiers: usize,
    pub l23_mux: usize,
    pub dividers: usize,
    pub holds: usize,
}

impl InstanceCounts {
    pub fn new(d: &CostDims, processing: Processing) -> Self {
        let sensors = d.sensor_rows * d.sensor_cols;
        let lines = d.sensor_rows + d.sensor_cols;
        let l23_cells = 2 * ((lines + 1) * d.hidden + (d.hidden + 1) * d.n_out);
        match processing {
            Processing::Parallel => InstanceCounts {
                sensors,
                l1_cells: sensors,
                l23_cells,
                l1_amplifiers: lines,
                l1_mux: 0,
                converters: lines,
                l23_amplifiers: d.hidden + 2 * d.n_out + 1,
                l23_mux: 0,
                dividers: d.n_out,
                holds: 0,
            },
            Processing::Serial => InstanceCounts {
                sensors,
                l1_cells: sensors,
                l23_cells,
                l1_amplifiers: 1,
                l1_mux: lines,
                converters: 1,
                l23_amplifiers: 4,
                l23_mux: d.hidden + d.n_out,
                dividers: 1,
                holds: d.n_out,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Layer1Crossbar,
    Layer23Crossbar,
    Layer1Amplifiers,
    Layer23Amplifiers,
}

impl Block {
    pub const ALL: [Block; 4] = [
        Block::Layer1Crossbar,
        Block::Layer23Crossbar,
        Block::Layer1Amplifiers,
        Block::Layer23Amplifiers,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Block::Layer1Crossbar => "TMS Crossbar (layer1)",
            Block::Layer23Crossbar => "Crossbar (layer 2 & 3)",
            Block::Layer1Amplifiers => "Amplifiers (layer 1)",
            Block::Layer23Amplifiers => "Amplifiers (layer 2&3)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockCost {
    pub block: Block,
    pub area: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub dims: CostDims,
    pub style: Style,
    pub processing: Processing,
    pub counts: InstanceCounts,
    /// In [`Block::ALL`] order.
    pub blocks: Vec<BlockCost>,
    pub total_area: f64,
    pub total_power: f64,
}

impl CostReport {
    pub fn block(&self, b: Block) -> &BlockCost {
        self.blocks.iter().find(|x| x.block == b).expect("every block is reported")
    }

    pub fn crossbar_power(&self) -> f64 {
        self.block(Block::Layer1Crossbar).power + self.block(Block::Layer23Crossbar).power
    }

    pub fn amplifier_power(&self) -> f64 {
        self.block(Block::Layer1Amplifiers).power + self.block(Block::Layer23Amplifiers).power
    }
}

struct Lookup<'a> {
    units: &'a UnitCosts,
    style: Style,
}

impl Lookup<'_> {
    /// `count * unit`, where a zero count never needs the entry.
    fn cost(&self, count: usize, key: &'static str) -> Result<f64> {
        if count == 0 {
            return Ok(0.0);
        }
        let mut units = *self.units;
        let v = units.slot(key).ok_or_else(|| Error::MissingCost {
            block: format!("{}.{key}", self.style),
        })?;
        Ok(count as f64 * v)
    }
}

pub fn estimate(
    dims: &CostDims,
    table: &CostTable,
    style: Style,
    processing: Processing,
) -> Result<CostReport> {
    table.validate()?;
    let n = InstanceCounts::new(dims, processing);
    let u = Lookup {
        units: table.units(style),
        style,
    };
    let sensor_area = table.sensor_area.ok_or_else(|| Error::MissingCost {
        block: "sensor_area".into(),
    })?;
    let converters = if style == Style::Binary { n.converters } else { 0 };

    let l1_xbar = BlockCost {
        block: Block::Layer1Crossbar,
        area: n.sensors as f64 * sensor_area,
        power: u.cost(n.l1_cells, "cell_power")?,
    };
    let l23_xbar = BlockCost {
        block: Block::Layer23Crossbar,
        area: u.cost(n.l23_cells, "cell_area")?,
        power: u.cost(n.l23_cells, "cell_power")?,
    };
    let l1_amp = BlockCost {
        block: Block::Layer1Amplifiers,
        area: u.cost(n.l1_amplifiers, "amplifier_area")?
            + u.cost(converters, "converter_area")?
            + u.cost(n.l1_mux, "mux_area")?,
        power: u.cost(n.l1_amplifiers, "amplifier_power")?
            + u.cost(converters, "converter_power")?
            + u.cost(n.l1_mux, "mux_power")?,
    };
    let l23_amp = BlockCost {
        block: Block::Layer23Amplifiers,
        area: u.cost(n.l23_amplifiers, "amplifier_area")?
            + u.cost(n.dividers, "divider_area")?
            + u.cost(n.l23_mux, "mux_area")?
            + u.cost(n.holds, "hold_area")?,
        power: u.cost(n.l23_amplifiers, "amplifier_power")?
            + u.cost(n.dividers, "divider_power")?
            + u.cost(n.l23_mux, "mux_power")?
            + u.cost(n.holds, "hold_power")?,
    };
    let blocks = vec![l1_xbar, l23_xbar, l1_amp, l23_amp];
    let total_area = blocks.iter().map(|b| b.area).sum();
    let total_power = blocks.iter().map(|b| b.power).sum();
    Ok(CostReport {
        dims: *dims,
        style,
        processing,
        counts: n,
        blocks,
        total_area,
        total_power,
    })
}

/// All four builds of `dims` in [`BUILDS`] order.
pub fn estimate_all(dims: &CostDims, table: &CostTable) -> Result<Vec<CostReport>> {
    BUILDS
        .iter()
        .map(|&(s, p)| estimate(dims, table, s, p))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDelta {
    pub block: Block,
    pub area: f64,
    pub power: f64,
}

/// `b - a` per block and in total, plus any expected ordering that fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub blocks: Vec<BlockDelta>,
    pub total_area: f64,
    pub total_power: f64,
    pub violations: Vec<String>,
}

/// Compares two builds of the same network. When the builds differ in
/// exactly one axis, serial must draw less power than parallel and analog
/// less amplifier power than binary; failures are listed.
pub fn compare(a: &CostReport, b: &CostReport) -> Result<Comparison> {
    if a.dims != b.dims {
        return Err(Error::ConfigMismatch(format!(
            "cannot compare reports of different networks ({:?} vs {:?})",
            a.dims, b.dims
        )));
    }
    let blocks = a
        .blocks
        .iter()
        .zip(&b.blocks)
        .map(|(x, y)| BlockDelta {
            block: x.block,
            area: y.area - x.area,
            power: y.power - x.power,
        })
        .collect();
    let mut violations = Vec::new();
    let name = |r: &CostReport| format!("{} {}", r.style, r.processing);
    if a.style == b.style && a.processing != b.processing {
        let (ser, par) = if a.processing == Processing::Serial { (a, b) } else { (b, a) };
        if !(ser.total_power < par.total_power) {
            violations.push(format!(
                "{} power {} is not below {} power {}",
                name(ser),
                ser.total_power,
                name(par),
                par.total_power
            ));
        }
    }
    if a.processing == b.processing && a.style != b.style {
        let (an, bi) = if a.style == Style::Analog { (a, b) } else { (b, a) };
        for (what, x, y) in [
            ("amplifier power", an.amplifier_power(), bi.amplifier_power()),
            ("total power", an.total_power, bi.total_power),
        ] {
            if !(x < y) {
                violations.push(format!(
                    "{} {what} {x} is not below {} {what} {y}",
                    name(an),
                    name(bi)
                ));
            }
        }
    }
    Ok(Comparison {
        blocks,
        total_area: b.total_area - a.total_area,
        total_power: b.total_power - a.total_power,
        violations,
    })
}

/// Rounds to 12 significant digits and prints the shortest decimal form,
/// so calibration round-off never reaches the table.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Writes the four builds side by side: one row per block, an area and a
/// power column per build. Crossbar power and amplifier power are each
/// reported once, on the first row of their pair.
pub fn write_table_csv<W: Write>(out: W, reports: &[CostReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["circuit_block".to_string()];
    for r in reports {
        header.push(format!("{}_{}_area_m2", r.style, r.processing));
        header.push(format!("{}_{}_power_w", r.style, r.processing));
    }
    w.write_record(&header)?;
    for block in Block::ALL {
        let mut rec = vec![block.label().to_string()];
        for r in reports {
            rec.push(format_value(r.block(block).area));
            rec.push(match block {
                Block::Layer1Crossbar => format_value(r.crossbar_power()),
                Block::Layer1Amplifiers => format_value(r.amplifier_power()),
                _ => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
