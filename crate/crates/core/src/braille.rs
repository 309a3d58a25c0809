//! 8-dot Braille symbol table, force-grid encoding and dataset generation.
//!
//! D1..D6 carry the ordinary six-dot cell. D7 and D8 are group select bits
//! so that symbols sharing a six-dot pattern across groups stay distinct.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference press force (lbf).
pub const DEFAULT_F_PRESS: f64 = 20.0;

const FIXTURE: &str = include_str!("../data/braille_symbols.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Group1,
    Group2,
    Group3,
    Group4,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Group1, Group::Group2, Group::Group3, Group::Group4];

    pub fn number(self) -> u8 {
        match self {
            Group::Group1 => 1,
            Group::Group2 => 2,
            Group::Group3 => 3,
            Group::Group4 => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Group::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    /// `(D7, D8)` select code.
    pub fn select_bits(self) -> (bool, bool) {
        match self {
            Group::Group1 => (false, false),
            Group::Group2 => (false, true),
            Group::Group3 => (true, false),
            Group::Group4 => (true, true),
        }
    }

    pub fn expected_size(self) -> usize {
        match self {
            Group::Group1 => 27,
            Group::Group2 => 26,
            Group::Group3 => 46,
            Group::Group4 => 26,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Group{}", self.number())
    }
}

/// A set of groups; the union of all four is the fusion set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selection(Vec<Group>);

impl Selection {
    pub fn new(groups: &[Group]) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::EmptyInput("group selection"));
        }
        let mut g = groups.to_vec();
        g.sort();
        g.dedup();
        Ok(Selection(g))
    }

    pub fn single(group: Group) -> Self {
        Selection(vec![group])
    }

    pub fn fusion() -> Self {
        Selection(Group::ALL.to_vec())
    }

    pub fn groups(&self) -> &[Group] {
        &self.0
    }

    pub fn contains(&self, g: Group) -> bool {
        self.0.contains(&g)
    }

    pub fn is_fusion(&self) -> bool {
        self.0.len() == Group::ALL.len()
    }

    /// The rows of Table-1-style reports: each group, then fusion.
    pub fn table_rows() -> Vec<Selection> {
        Group::ALL
            .iter()
            .map(|&g| Selection::single(g))
            .chain(std::iter::once(Selection::fusion()))
            .collect()
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_fusion() {
            return f.write_str("Fusion");
        }
        let names: Vec<String> = self.0.iter().map(Group::to_string).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for Selection {
    type Err = Error;

    /// Accepts `fusion`, `all`, or a comma list of `1`..`4` / `group1`..`group4`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "fusion" || t == "all" {
            return Ok(Selection::fusion());
        }
        let mut groups = Vec::new();
        for part in t.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let digits = part.trim_start_matches("group");
            let g = digits
                .parse::<u8>()
                .ok()
                .and_then(Group::from_number)
                .ok_or_else(|| Error::Config(format!("unknown group {part:?}")))?;
            groups.push(g);
        }
        Selection::new(&groups)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BrailleSymbol {
    pub label: String,
    pub group: Group,
    /// D1..D8.
    pub dots: [bool; 8],
}

impl BrailleSymbol {
    pub fn dot_string(&self) -> String {
        self.dots.iter().map(|&d| if d { '1' } else { '0' }).collect()
    }
}

/// Grid position `(row, col)` of dot `D{i+1}`: D1-D2-D3-D7 run down column 0,
/// D4-D5-D6-D8 down column 1.
pub const DOT_POSITIONS: [(usize, usize); 8] = [
    (0, 0),
    (1, 0),
    (2, 0),
    (0, 1),
    (1, 1),
    (2, 1),
    (3, 0),
    (3, 1),
];

pub const GRID_ROWS: usize = 4;
pub const GRID_COLS: usize = 2;

/// Forces on the 4x2 sensor patch (lbf), indexed `[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceGrid(pub [[f64; GRID_COLS]; GRID_ROWS]);

impl ForceGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[row][col]
    }

    /// Row-major flattening.
    pub fn flat(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                out[r * GRID_COLS + c] = self.0[r][c];
            }
        }
        out
    }

    /// Thresholds the grid back into a D1..D8 pattern.
    pub fn to_dots(&self, threshold: f64) -> [bool; 8] {
        let mut dots = [false; 8];
        for (i, &(r, c)) in DOT_POSITIONS.iter().enumerate() {
            dots[i] = self.0[r][c] > threshold;
        }
        dots
    }
}

pub fn symbol_to_forces(sym: &BrailleSymbol, f_press: f64) -> Result<ForceGrid> {
    if !(f_press > 0.0 && f_press.is_finite()) {
        return Err(Error::domain("f_press", f_press, "finite and > 0"));
    }
    let mut grid = ForceGrid::default();
    for (i, &(r, c)) in DOT_POSITIONS.iter().enumerate() {
        if sym.dots[i] {
            grid.0[r][c] = f_press;
        }
    }
    Ok(grid)
}

/// The 125-symbol table in canonical port order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTable {
    symbols: Vec<BrailleSymbol>,
}

impl SymbolTable {
    /// The table shipped with the crate.
    pub fn standard() -> &'static SymbolTable {
        static TABLE: OnceLock<SymbolTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            SymbolTable::parse(FIXTURE, "braille_symbols.txt")
                .expect("bundled Braille fixture is valid")
        })
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let bad = |detail: String| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                detail,
            };
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            let [label, group, bits] = fields.as_slice() else {
                return Err(bad(format!("expected `label | group | bits`, got {line:?}")));
            };
            if label.is_empty() {
                return Err(bad("empty label".into()));
            }
            let group = group
                .parse::<u8>()
                .ok()
                .and_then(Group::from_number)
                .ok_or_else(|| bad(format!("bad group {group:?}")))?;
            if bits.len() != 8 || !bits.chars().all(|c| c == '0' || c == '1') {
                return Err(bad(format!("bad dot pattern {bits:?}")));
            }
            let mut dots = [false; 8];
            for (d, ch) in dots.iter_mut().zip(bits.chars()) {
                *d = ch == '1';
            }
            symbols.push(BrailleSymbol {
                label: label.to_string(),
                group,
                dots,
            });
        }
        let table = SymbolTable { symbols };
        table.check_invariants(source_name)?;
        Ok(table)
    }

    fn check_invariants(&self, source_name: &str) -> Result<()> {
        let fail = |detail: String| Error::Parse {
            source_name: source_name.to_string(),
            line: 0,
            detail,
        };
        for s in &self.symbols {
            if (s.dots[6], s.dots[7]) != s.group.select_bits() {
                return Err(fail(format!(
                    "{} ({}) has D7/D8 inconsistent with its group",
                    s.label, s.group
                )));
            }
        }
        for (i, a) in self.symbols.iter().enumerate() {
            for b in &self.symbols[i + 1..] {
                if a.dots == b.dots {
                    return Err(fail(format!(
                        "{} and {} share a dot pattern",
                        a.label, b.label
                    )));
                }
                if a.group == b.group && a.label == b.label {
                    return Err(fail(format!("duplicate label {} in {}", a.label, a.group)));
                }
            }
        }
        Ok(())
    }

    pub fn symbols(&self) -> &[BrailleSymbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn group(&self, group: Group) -> impl Iterator<Item = &BrailleSymbol> {
        self.symbols.iter().filter(move |s| s.group == group)
    }

    /// Symbols of a selection, in port order.
    pub fn select(&self, selection: &Selection) -> Vec<BrailleSymbol> {
        self.symbols
            .iter()
            .filter(|s| selection.contains(s.group))
            .cloned()
            .collect()
    }

    /// Global port index of a symbol.
    pub fn port(&self, label: &str, group: Group) -> Option<usize> {
        self.symbols
            .iter()
            .position(|s| s.group == group && s.label == label)
    }

    pub fn encode(&self, label: &str, group: Group) -> Result<BrailleSymbol> {
        if let Some(s) = self
            .symbols
            .iter()
            .find(|s| s.group == group && s.label == label)
        {
            return Ok(s.clone());
        }
        let mut scored: Vec<(usize, &str)> = self
            .group(group)
            .map(|s| (edit_distance(label, &s.label), s.label.as_str()))
            .collect();
        scored.sort();
        Err(Error::UnknownLabel {
            label: label.to_string(),
            group: group.to_string(),
            nearest: scored.iter().take(3).map(|(_, l)| l.to_string()).collect(),
        })
    }
}

/// Looks up a symbol in the bundled table.
pub fn encode(label: &str, group: Group) -> Result<BrailleSymbol> {
    SymbolTable::standard().encode(label, group)
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(!ca.eq_ignore_ascii_case(&cb));
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub forces: ForceGrid,
    /// Index into [`Dataset::classes`].
    pub class: usize,
    /// Which copy of the symbol this is (0-based).
    pub copy: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub selection: Selection,
    pub classes: Vec<BrailleSymbol>,
    pub samples: Vec<Sample>,
    pub copies: usize,
    pub f_press: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn label(&self, class: usize) -> &str {
        &self.classes[class].label
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Splits off the last copy of every symbol as the held-out set. With a
    /// single copy both halves contain it.
    pub fn split_holdout(&self) -> (Dataset, Dataset) {
        let held = self.copies.saturating_sub(1);
        let (test, train): (Vec<Sample>, Vec<Sample>) =
            self.samples.iter().cloned().partition(|s| s.copy == held);
        let train = if self.copies == 1 { test.clone() } else { train };
        (
            Dataset {
                samples: train,
                copies: self.copies.saturating_sub(1).max(1),
                ..self.clone()
            },
            Dataset {
                samples: test,
                copies: 1,
                ..self.clone()
            },
        )
    }

    /// Restricts the dataset to the given classes, renumbering them.
    pub fn with_classes(&self, keep: &[usize]) -> Dataset {
        let classes = keep.iter().map(|&c| self.classes[c].clone()).collect();
        let samples = self
            .samples
            .iter()
            .filter_map(|s| {
                keep.iter().position(|&c| c == s.class).map(|class| Sample {
                    class,
                    ..s.clone()
                })
            })
            .collect();
        Dataset {
            classes,
            samples,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "index".to_string(),
            "label".into(),
            "group".into(),
            "class".into(),
            "copy".into(),
            "dots".into(),
        ];
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                header.push(format!("f_{r}{c}"));
            }
        }
        w.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let sym = &self.classes[s.class];
            let mut rec = vec![
                i.to_string(),
                sym.label.clone(),
                sym.group.number().to_string(),
                s.class.to_string(),
                s.copy.to_string(),
                sym.dot_string(),
            ];
            rec.extend(s.forces.flat().iter().map(|f| f.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `copies` noiseless force grids of every symbol in `selection`, shuffled
/// by `seed`.
pub fn build_dataset(
    selection: &Selection,
    copies: usize,
    f_press: f64,
    seed: u64,
) -> Result<Dataset> {
    build_dataset_from(SymbolTable::standard(), selection, copies, f_press, seed)
}

pub fn build_dataset_from(
    table: &SymbolTable,
    selection: &Selection,
    copies: usize,
    f_press: f64,
    seed: u64,
) -> Result<Dataset> {
    if copies == 0 {
        return Err(Error::domain("copies", 0.0, ">= 1"));
    }
    let classes = table.select(selection);
    if classes.is_empty() {
        return Err(Error::EmptyInput("dataset selection"));
    }
    let mut samples = Vec::with_capacity(copies * classes.len());
    for copy in 0..copies {
        for (class, sym) in classes.iter().enumerate() {
            samples.push(Sample {
                forces: symbol_to_forces(sym, f_press)?,
                class,
                copy,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples.shuffle(&mut rng);
    Ok(Dataset {
        selection: selection.clone(),
        classes,
        samples,
        copies,
        f_press,
        seed,
    })
}
