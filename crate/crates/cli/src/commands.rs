//! One function per subcommand.

use std::fs;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tms_core::braille::build_dataset;
use tms_core::cost::{compare, estimate_all, write_table_csv, CostDims};
use tms_core::crossbar::single_active_cell_probe;
use tms_core::pipeline::{
    evaluate, map_network, reference_leakage, run_sweep, train as train_network, write_cells_csv,
    AccuracyTable, EvalOptions, Fidelity, SweepPlan,
};
use tms_core::{
    CostTable, EvalReport, ForceGrid, Hyper, NetworkArch, Parasitics, Processing, Selection,
    SimConfig, Style, TrainedNetwork,
};

use crate::output::{csv_with_header, load_config, require_seed, usage, OutDir, Provenance};
use crate::{
    CostArgs, DatasetArgs, EvalArgs, GlobalArgs, HyperArgs, LeakageArgs, OptimizerArg, SweepArgs,
    TrainArgs,
};

const EQUAL_CURRENT_TOLERANCE: f64 = 1e-12;

#[derive(Serialize)]
struct DatasetManifest<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    selection: String,
    copies: usize,
    classes: usize,
    count: usize,
    f_press: f64,
    csv: &'a str,
    sha256: String,
}

pub fn dataset(g: &GlobalArgs, a: &DatasetArgs) -> Result<()> {
    let seed = require_seed(g.seed, "dataset")?;
    let cfg = load_config(g.config.as_deref())?;
    let out = OutDir::new(&g.out, g.force);
    out.claim(&["dataset.csv", "dataset.json"])?;

    let data = build_dataset(&a.groups, a.copies, cfg.f_press, seed)?;
    let prov = Provenance::new(&cfg, Some(seed));
    let csv = csv_with_header(&prov, |buf| data.write_csv(buf))?;
    let path = out.write("dataset.csv", &csv)?;
    out.write_json(
        "dataset.json",
        &DatasetManifest {
            provenance: &prov,
            selection: a.groups.to_string(),
            copies: a.copies,
            classes: data.n_classes(),
            count: data.samples.len(),
            f_press: cfg.f_press,
            csv: "dataset.csv",
            sha256: crate::output::sha256_hex(&csv),
        },
    )?;
    println!(
        "{}: {} samples of {} symbols",
        path.display(),
        data.samples.len(),
        data.n_classes()
    );
    Ok(())
}

/// A trained network together with what is needed to rebuild its test set.
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    #[serde(flatten)]
    provenance: Provenance,
    copies: usize,
    network: TrainedNetwork,
}

fn arch_for(selection: &Selection) -> Result<NetworkArch> {
    NetworkArch::for_selection(selection).map_err(|e| {
        usage(format!(
            "{selection}: {e}; networks are built for one group or for fusion"
        ))
    })
}

fn hyper_from(h: &HyperArgs, sigma2: f64, seed: u64) -> Result<Hyper> {
    let mut hyper = match h.optimizer {
        OptimizerArg::Adam => Hyper::new(sigma2, seed),
        OptimizerArg::Sgd => Hyper::plain(sigma2, seed),
    };
    if h.epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }
    hyper.epochs = h.epochs;
    if let Some(lr) = h.lr {
        hyper.lr = lr;
    }
    Ok(hyper)
}

pub fn train(g: &GlobalArgs, a: &TrainArgs) -> Result<()> {
    let seed = require_seed(g.seed, "train")?;
    let cfg = load_config(g.config.as_deref())?;
    let out = OutDir::new(&g.out, g.force);
    out.claim(&["network.json"])?;

    let arch = arch_for(&a.groups)?;
    let hyper = hyper_from(&a.hyper, a.sigma2, seed)?;
    let data = build_dataset(&a.groups, a.copies, cfg.f_press, seed)?;
    let (train_set, _) = data.split_holdout();
    let net = train_network(&train_set, arch, a.mode, &hyper, &cfg)?;
    let loss = net.final_loss;
    let path = out.write_json(
        "network.json",
        &NetworkFile {
            provenance: Provenance::new(&cfg, Some(seed)),
            copies: a.copies,
            network: net,
        },
    )?;
    println!("{}: final loss {loss:.4}", path.display());
    Ok(())
}

pub fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let seed = require_seed(g.seed, "eval")?;
    let cfg = load_config(g.config.as_deref())?;
    let out = OutDir::new(&g.out, g.force);
    out.claim(&["eval.csv", "confusions.csv"])?;

    let text = fs::read_to_string(&a.network).map_err(|e| {
        usage(format!(
            "cannot read network {}: {e} (run `tms train` first)",
            a.network.display()
        ))
    })?;
    let file: NetworkFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.network.display()))?;
    let net = file.network;
    let prov = Provenance::new(&cfg, Some(seed));
    if prov.config_hash != file.provenance.config_hash {
        eprintln!("warning: network was trained under a different config");
    }

    let data = build_dataset(&net.selection, file.copies, cfg.f_press, net.hyper.seed)?;
    let (_, test) = data.split_holdout();
    let hw = map_network(&net, &cfg)?;
    let sigma2 = if a.sigma2.is_empty() {
        vec![net.hyper.sigma2]
    } else {
        a.sigma2.clone()
    };
    let opts = EvalOptions {
        draws: a.draws,
        fidelity: if a.nodal {
            Fidelity::Nodal(cfg.parasitics)
        } else {
            Fidelity::Ideal
        },
        ..EvalOptions::new(seed)
    };
    let reports = sigma2
        .iter()
        .map(|&s| evaluate(&net, &hw, &test, s, &opts))
        .collect::<tms_core::Result<Vec<EvalReport>>>()?;

    let csv = csv_with_header(&prov, |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["groups", "mode", "sigma2", "seed", "draws", "correct", "total", "accuracy"])?;
        for r in &reports {
            w.write_record([
                r.selection.to_string(),
                r.mode.to_string(),
                r.sigma2.to_string(),
                r.seed.to_string(),
                a.draws.to_string(),
                r.correct.to_string(),
                r.total.to_string(),
                format!("{:.2}", r.accuracy),
            ])?;
        }
        flush(w)
    })?;
    let path = out.write("eval.csv", &csv)?;
    let confusions = csv_with_header(&prov, |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["sigma2", "truth", "predicted", "count"])?;
        for r in &reports {
            for c in &r.confusions {
                w.write_record([
                    r.sigma2.to_string(),
                    c.truth.clone(),
                    c.predicted.clone(),
                    c.count.to_string(),
                ])?;
            }
        }
        flush(w)
    })?;
    out.write("confusions.csv", &confusions)?;
    for r in &reports {
        println!(
            "{} {} sigma2={}: {:.2} % ({}/{})",
            r.selection, r.mode, r.sigma2, r.accuracy, r.correct, r.total
        );
    }
    println!("{}", path.display());
    Ok(())
}

pub fn sweep(g: &GlobalArgs, a: &SweepArgs) -> Result<()> {
    let seed = require_seed(g.seed, "sweep")?;
    let cfg = load_config(g.config.as_deref())?;
    let out = OutDir::new(&g.out, g.force);
    out.claim(&["sweep_runs.csv", "table1.csv"])?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }

    let selections = if a.groups.is_empty() {
        Selection::table_rows()
    } else {
        a.groups.clone()
    };
    for s in &selections {
        arch_for(s)?;
    }
    let plan = SweepPlan {
        selections,
        sigma2: a.sigma2.clone(),
        modes: a.mode.clone(),
        seeds: (0..a.seeds).map(|i| seed + i).collect(),
        copies: a.copies,
        hyper: hyper_from(&a.hyper, 0.0, seed)?,
        draws: a.draws,
    };
    let total = plan.len();
    let mut done = 0;
    let cells = run_sweep(&plan, &cfg, |c| {
        done += 1;
        eprintln!(
            "[{done}/{total}] {} {} sigma2={} seed={}: {:.2} %",
            c.selection, c.mode, c.sigma2, c.seed, c.accuracy
        );
    })?;

    let prov = Provenance::new(&cfg, Some(seed));
    out.write("sweep_runs.csv", &csv_with_header(&prov, |buf| write_cells_csv(buf, &cells))?)?;
    let table = AccuracyTable::from_cells(&cells);
    let csv = csv_with_header(&prov, |buf| table.write_csv(buf))?;
    let path = out.write("table1.csv", &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    println!("{}", path.display());
    Ok(())
}

pub fn leakage(g: &GlobalArgs, a: &LeakageArgs) -> Result<()> {
    let cfg = load_config(g.config.as_deref())?;
    let out = OutDir::new(&g.out, g.force);
    out.claim(&["leakage.csv"])?;
    for &v in a.wire.iter().chain(&a.g_off) {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(usage(format!("parasitic value {v} must be finite and >= 0")));
        }
    }

    let pressed = ForceGrid([[cfg.f_press; 2]; 4]);
    let mut rows: Vec<[String; 6]> = Vec::new();
    let mut point = |scenario: &str, p: Parasitics| {
        let row = match reference_leakage(&pressed, &cfg.devices, &p) {
            Ok(r) => {
                let c = r.actual.concat();
                [
                    fmt_f64(r.leakage),
                    equal(&c).to_string(),
                    String::new(),
                ]
            }
            Err(e) => [String::new(), String::new(), e.to_string()],
        };
        let [leak, eq, err] = row;
        rows.push([
            scenario.to_string(),
            fmt_f64(p.wire_resistance),
            fmt_f64(p.switch_g_off),
            leak,
            eq,
            err,
        ]);
    };
    point("sensor_4x2_2t1m1s_configured", cfg.parasitics);
    for &g_off in &a.g_off {
        for &wire in &a.wire {
            point(
                "sensor_4x2_2t1m1s",
                Parasitics {
                    wire_resistance: wire,
                    switch_g_off: g_off,
                    readout_resistance: cfg.parasitics.readout_resistance,
                },
            );
        }
    }
    let probe = single_active_cell_probe(&cfg.devices, cfg.f_press, 1e3);
    rows.push(match probe {
        Ok(p) => [
            "single_cell_2x2_1t1m1s".into(),
            "0".into(),
            "0".into(),
            fmt_f64(p.leakage),
            (p.spread < EQUAL_CURRENT_TOLERANCE).to_string(),
            String::new(),
        ],
        Err(e) => [
            "single_cell_2x2_1t1m1s".into(),
            "0".into(),
            "0".into(),
            String::new(),
            String::new(),
            e.to_string(),
        ],
    });

    let prov = Provenance::new(&cfg, None);
    let csv = csv_with_header(&prov, |buf| {
        let mut w = csv_writer(buf);
        w.write_record([
            "scenario",
            "wire_resistance_ohm",
            "switch_g_off_s",
            "leakage_fraction",
            "equal_currents",
            "error",
        ])?;
        for r in &rows {
            w.write_record(r)?;
        }
        flush(w)
    })?;
    let path = out.write("leakage.csv", &csv)?;
    println!("{}: {} points", path.display(), rows.len());
    Ok(())
}

fn equal(currents: &[f64]) -> bool {
    let hi = currents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = currents.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo < EQUAL_CURRENT_TOLERANCE
}

#[derive(Serialize)]
struct CostSummary<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    serial_below_parallel: bool,
    analog_below_binary: bool,
    violations: Vec<String>,
    reports: &'a [tms_core::CostReport],
}

pub fn cost(g: &GlobalArgs, a: &CostArgs) -> Result<()> {
    let cfg: SimConfig = load_config(g.config.as_deref())?;
    let out = OutDir::new(&g.out, g.force);
    out.claim(&["table3.csv", "cost.json"])?;
    let table = match &a.table {
        None => CostTable::calibrated(),
        Some(p) => {
            if !p.is_file() {
                return Err(usage(format!("cost table {} not found", p.display())));
            }
            CostTable::load(p).with_context(|| format!("loading {}", p.display()))?
        }
    };
    let dims: CostDims = NetworkArch::new(a.outputs)?.into();
    let reports = estimate_all(&dims, &table)?;
    let get = |s: Style, p: Processing| {
        reports
            .iter()
            .find(|r| r.style == s && r.processing == p)
            .expect("estimate_all covers every build")
    };
    let mut serial_violations = Vec::new();
    for s in [Style::Analog, Style::Binary] {
        serial_violations.extend(
            compare(get(s, Processing::Parallel), get(s, Processing::Serial))?.violations,
        );
    }
    let mut style_violations = Vec::new();
    for p in [Processing::Parallel, Processing::Serial] {
        style_violations.extend(compare(get(Style::Analog, p), get(Style::Binary, p))?.violations);
    }

    let prov = Provenance::with_cost_table(&cfg, &table);
    let csv = csv_with_header(&prov, |buf| write_table_csv(buf, &reports))?;
    let path = out.write("table3.csv", &csv)?;
    let summary = CostSummary {
        provenance: &prov,
        serial_below_parallel: serial_violations.is_empty(),
        analog_below_binary: style_violations.is_empty(),
        violations: serial_violations.into_iter().chain(style_violations).collect(),
        reports: &reports,
    };
    out.write_json("cost.json", &summary)?;
    print!("{}", String::from_utf8_lossy(&csv));
    println!(
        "serial < parallel power: {}; analog < binary power: {}",
        summary.serial_below_parallel, summary.analog_below_binary
    );
    println!("{}", path.display());
    Ok(())
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(buf)
}

fn flush(mut w: csv::Writer<&mut Vec<u8>>) -> tms_core::Result<()> {
    w.flush().map_err(|e| tms_core::Error::Config(format!("csv flush: {e}")))?;
    Ok(())
}

/// Shortest round-trip form, exponent notation for very small or large
/// magnitudes.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
