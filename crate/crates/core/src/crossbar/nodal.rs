//! Dense nodal analysis for linear resistive networks.
//!
//! Nodes are either free or held at a fixed potential. Elements are plain
//! conductances; an infinite conductance is an ideal short and its two ends
//! are merged before the system is assembled. Fixed-potential classes
//! (ground, supply rails, virtual-ground readouts) become right-hand-side
//! terms, the rest is solved with a dense LU factorisation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute residual bound on the assembled system, in amperes.
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    fixed: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Element {
    a: usize,
    b: usize,
    g: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResistiveNetwork {
    nodes: Vec<Node>,
    elements: Vec<Element>,
}

impl ResistiveNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> NodeId {
        self.nodes.push(Node {
            name: name.into(),
            fixed: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_fixed(&mut self, name: impl Into<String>, volts: f64) -> NodeId {
        self.nodes.push(Node {
            name: name.into(),
            fixed: Some(volts),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds a conductance between two nodes. Zero is an open circuit and is
    /// dropped; `f64::INFINITY` is a short.
    pub fn connect(&mut self, a: NodeId, b: NodeId, g: f64) -> Result<()> {
        if !(g >= 0.0) {
            return Err(Error::domain("element conductance", g, ">= 0"));
        }
        if g > 0.0 && a != b {
            self.elements.push(Element { a: a.0, b: b.0, g });
        }
        Ok(())
    }

    /// Connects through a resistance; `0` is a short.
    pub fn connect_resistor(&mut self, a: NodeId, b: NodeId, ohms: f64) -> Result<()> {
        if !(ohms >= 0.0) {
            return Err(Error::domain("element resistance", ohms, ">= 0"));
        }
        let g = if ohms == 0.0 { f64::INFINITY } else { 1.0 / ohms };
        self.connect(a, b, g)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn solve(&self) -> Result<NodalSolution> {
        let n = self.nodes.len();
        let mut uf = UnionFind::new(n);
        for e in &self.elements {
            if e.g.is_infinite() {
                uf.union(e.a, e.b);
            }
        }

        // Classify merged classes.
        let mut class_fixed: Vec<Option<f64>> = vec![None; n];
        let mut class_fixed_owner: Vec<Option<usize>> = vec![None; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(v) = node.fixed {
                let root = uf.find(i);
                match class_fixed[root] {
                    Some(existing) if existing != v => {
                        let other = class_fixed_owner[root].unwrap_or(root);
                        return Err(Error::ShortedSources(format!(
                            "{} ({} V) is shorted to {} ({} V)",
                            node.name, v, self.nodes[other].name, existing
                        )));
                    }
                    Some(_) => {}
                    None => {
                        class_fixed[root] = Some(v);
                        class_fixed_owner[root] = Some(i);
                    }
                }
            }
        }

        // Number the free classes.
        let mut unknown_of_class = vec![usize::MAX; n];
        let mut free_roots = Vec::new();
        for i in 0..n {
            let root = uf.find(i);
            if root == i && class_fixed[root].is_none() {
                unknown_of_class[root] = free_roots.len();
                free_roots.push(root);
            }
        }

        let finite: Vec<(usize, usize, f64)> = self
            .elements
            .iter()
            .filter(|e| e.g.is_finite())
            .map(|e| (uf.find(e.a), uf.find(e.b), e.g))
            .filter(|(ra, rb, _)| ra != rb)
            .collect();

        self.check_anchored(&free_roots, &class_fixed, &finite, &mut uf)?;

        let nf = free_roots.len();
        let mut g = DMatrix::<f64>::zeros(nf, nf);
        let mut rhs = DVector::<f64>::zeros(nf);
        for &(ra, rb, ge) in &finite {
            match (class_fixed[ra], class_fixed[rb]) {
                (None, None) => {
                    let (ia, ib) = (unknown_of_class[ra], unknown_of_class[rb]);
                    g[(ia, ia)] += ge;
                    g[(ib, ib)] += ge;
                    g[(ia, ib)] -= ge;
                    g[(ib, ia)] -= ge;
                }
                (None, Some(vb)) => {
                    let ia = unknown_of_class[ra];
                    g[(ia, ia)] += ge;
                    rhs[ia] += ge * vb;
                }
                (Some(va), None) => {
                    let ib = unknown_of_class[rb];
                    g[(ib, ib)] += ge;
                    rhs[ib] += ge * va;
                }
                (Some(_), Some(_)) => {}
            }
        }

        let x = if nf == 0 {
            DVector::zeros(0)
        } else {
            let lu = g.clone().lu();
            let x = lu.solve(&rhs).ok_or_else(|| Error::Singular {
                count: nf,
                first: self.nodes[free_roots[0]].name.clone(),
            })?;
            let residual = (&g * &x - &rhs).amax();
            if !residual.is_finite() || residual > RESIDUAL_TOLERANCE.max(1e-9 * rhs.amax()) {
                return Err(Error::Singular {
                    count: nf,
                    first: format!("residual {residual:e} after LU solve"),
                });
            }
            x
        };

        let mut class_voltage = vec![0.0; n];
        for i in 0..n {
            let root = uf.find(i);
            if root == i {
                class_voltage[i] = match class_fixed[i] {
                    Some(v) => v,
                    None => x[unknown_of_class[i]],
                };
            }
        }
        let class_of: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
        let voltages = class_of.iter().map(|&r| class_voltage[r]).collect();
        Ok(NodalSolution {
            voltages,
            class_of,
            finite,
        })
    }

    fn check_anchored(
        &self,
        free_roots: &[usize],
        class_fixed: &[Option<f64>],
        finite: &[(usize, usize, f64)],
        uf: &mut UnionFind,
    ) -> Result<()> {
        let n = self.nodes.len();
        // Reachability from fixed classes over finite elements.
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b, _) in finite {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut anchored = vec![false; n];
        let mut stack: Vec<usize> = (0..n)
            .filter(|&i| uf.find(i) == i && class_fixed[i].is_some())
            .collect();
        for &s in &stack {
            anchored[s] = true;
        }
        while let Some(c) = stack.pop() {
            for &next in &adjacency[c] {
                if !anchored[next] {
                    anchored[next] = true;
                    stack.push(next);
                }
            }
        }
        let floating: Vec<usize> = free_roots.iter().copied().filter(|&r| !anchored[r]).collect();
        if let Some(&first) = floating.first() {
            return Err(Error::Singular {
                count: floating.len(),
                first: self.nodes[first].name.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NodalSolution {
    voltages: Vec<f64>,
    class_of: Vec<usize>,
    finite: Vec<(usize, usize, f64)>,
}

impl NodalSolution {
    pub fn voltage(&self, id: NodeId) -> f64 {
        self.voltages[id.0]
    }

    /// True when both nodes were merged by ideal shorts.
    pub fn same_node(&self, a: NodeId, b: NodeId) -> bool {
        self.class_of[a.0] == self.class_of[b.0]
    }

    /// Net current flowing from the network into `id` (and everything
    /// shorted to it) through finite elements.
    pub fn current_into(&self, id: NodeId) -> f64 {
        let class = self.class_of[id.0];
        let v_class = self.voltages[id.0];
        let mut total = 0.0;
        for &(a, b, g) in &self.finite {
            if a == class && b != class {
                total += g * (self.class_voltage(b) - v_class);
            } else if b == class && a != class {
                total += g * (self.class_voltage(a) - v_class);
            }
        }
        total
    }

    fn class_voltage(&self, root: usize) -> f64 {
        self.voltages[root]
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller index as root so class ids are stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voltage_divider() {
        let mut net = ResistiveNetwork::new();
        let vs = net.add_fixed("vs", 1.0);
        let gnd = net.add_fixed("gnd", 0.0);
        let mid = net.add_free("mid");
        net.connect_resistor(vs, mid, 1e3).unwrap();
        net.connect_resistor(mid, gnd, 3e3).unwrap();
        let sol = net.solve().unwrap();
        assert!((sol.voltage(mid) - 0.75).abs() < 1e-12);
        assert!((sol.current_into(gnd) - 0.25e-3).abs() < 1e-15);
        assert!((sol.current_into(vs) + 0.25e-3).abs() < 1e-15);
    }

    #[test]
    fn shorts_merge_nodes() {
        let mut net = ResistiveNetwork::new();
        let vs = net.add_fixed("vs", 2.0);
        let gnd = net.add_fixed("gnd", 0.0);
        let a = net.add_free("a");
        let b = net.add_free("b");
        net.connect_resistor(vs, a, 1.0).unwrap();
        net.connect_resistor(a, b, 0.0).unwrap();
        net.connect_resistor(b, gnd, 1.0).unwrap();
        let sol = net.solve().unwrap();
        assert!(sol.same_node(a, b));
        assert!((sol.voltage(b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floating_node_is_singular() {
        let mut net = ResistiveNetwork::new();
        let vs = net.add_fixed("vs", 1.0);
        let a = net.add_free("a");
        let island = net.add_free("island");
        let island2 = net.add_free("island2");
        net.connect(vs, a, 1e-3).unwrap();
        net.connect(island, island2, 1e-3).unwrap();
        match net.solve() {
            Err(Error::Singular { count, first }) => {
                assert_eq!(count, 2);
                assert_eq!(first, "island");
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn shorted_sources_are_rejected() {
        let mut net = ResistiveNetwork::new();
        let a = net.add_fixed("a", 1.0);
        let b = net.add_fixed("b", 0.0);
        net.connect(a, b, f64::INFINITY).unwrap();
        assert!(matches!(net.solve(), Err(Error::ShortedSources(_))));
    }

    #[test]
    fn negative_conductance_is_rejected() {
        let mut net = ResistiveNetwork::new();
        let a = net.add_free("a");
        let b = net.add_free("b");
        assert!(net.connect(a, b, -1.0).is_err());
    }
}
