//! Undirected interference graphs: construction, random generators, edge-list
//! IO and neighbor-count queries.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::rng::{Purpose, StreamKey};

/// How a unit's neighbor count is computed from a state vector. Dense rows
/// sum the (shorter) list of non-neighbors and subtract from the total.
#[derive(Clone, Debug)]
enum SumRule {
    Direct,
    Complement(Vec<usize>),
}

/// Undirected simple graph over `n` units. Immutable after construction.
#[derive(Clone, Debug)]
pub struct InterferenceGraph {
    n: usize,
    neighbors: Vec<Vec<usize>>,
    max_degree: usize,
    edge_count: usize,
    rules: Vec<SumRule>,
    fingerprint: Fingerprint,
}

impl PartialEq for InterferenceGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.neighbors == other.neighbors
    }
}

impl Eq for InterferenceGraph {}

impl InterferenceGraph {
    fn from_sets(sets: Vec<BTreeSet<usize>>) -> Self {
        let n = sets.len();
        let neighbors: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let max_degree = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let edge_count = neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        let rules = neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                if 2 * nb.len() > n.saturating_sub(1) {
                    let mut rest = Vec::with_capacity(n - 1 - nb.len());
                    let mut it = nb.iter().peekable();
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        if it.peek() == Some(&&j) {
                            it.next();
                        } else {
                            rest.push(j);
                        }
                    }
                    SumRule::Complement(rest)
                } else {
                    SumRule::Direct
                }
            })
            .collect();
        let mut bytes = (n as u64).to_le_bytes().to_vec();
        for (i, nb) in neighbors.iter().enumerate() {
            for &j in nb.iter().filter(|&&j| j > i) {
                bytes.extend_from_slice(&(i as u64).to_le_bytes());
                bytes.extend_from_slice(&(j as u64).to_le_bytes());
            }
        }
        Self {
            n,
            neighbors,
            max_degree,
            edge_count,
            rules,
            fingerprint: Fingerprint::of_bytes(&bytes),
        }
    }

    /// Symmetric closure of `edges`; duplicate pairs collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        Ok(Self::from_sets(sets))
    }

    pub fn empty(n: usize) -> Self {
        Self::from_sets(vec![BTreeSet::new(); n])
    }

    pub fn complete(n: usize) -> Self {
        Self::from_sets((0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect())
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    /// Star with center 0 and leaves `1..n`.
    pub fn star(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::from_edges(n, &edges).expect("star edges are valid")
    }

    /// Erdős–Rényi graph: every unordered pair independently with
    /// probability `rho`. Pair `(i, j)`, `i < j`, is included iff the edge
    /// stream's uniform at `(i, j)` is below `rho`.
    pub fn erdos_renyi(n: usize, rho: f64, seed: u64) -> Result<Self> {
        check_probability(rho)?;
        Ok(Self::generate(n, seed, |_, _| rho))
    }

    /// Graphon graph: latent types `U_i ~ Uniform[0, 1)` from the latent-type
    /// stream; pair `(i, j)` included with probability `rho * G(U_i, U_j)`.
    /// With a constant kernel equal to 1 this reproduces
    /// [`InterferenceGraph::erdos_renyi`] bit for bit.
    pub fn graphon(n: usize, rho: f64, kernel: &Kernel, seed: u64) -> Result<(Self, Vec<f64>)> {
        check_probability(rho)?;
        kernel.validate()?;
        let mut types = vec![0.0; n];
        StreamKey::new(seed, 0, Purpose::LatentType).open().row(0, &mut types);
        let graph = Self::generate(n, seed, |i, j| rho * kernel.eval(types[i], types[j]));
        Ok((graph, types))
    }

    fn generate(n: usize, seed: u64, prob: impl Fn(usize, usize) -> f64) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        let mut stream = StreamKey::new(seed, 0, Purpose::Edge).open();
        let mut row = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let draws = &mut row[i + 1..];
            stream.row_from(i as u64, (i + 1) as u64, draws);
            for (k, &u) in draws.iter().enumerate() {
                let j = i + 1 + k;
                if u < prob(i, j) {
                    sets[i].insert(j);
                    sets[j].insert(i);
                }
            }
        }
        Self::from_sets(sets)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Realized maximum degree `D_n`.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Edges with `i < j` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// `out[i] = Σ_{j ∈ N(i)} state[j]`.
    pub fn neighbor_sums(&self, state: &[u8]) -> Result<Vec<u32>> {
        let mut out = vec![0; self.n];
        self.neighbor_sums_into(state, &mut out)?;
        Ok(out)
    }

    pub fn neighbor_sums_into(&self, state: &[u8], out: &mut [u32]) -> Result<()> {
        check_len(self.n, state.len())?;
        check_len(self.n, out.len())?;
        let total: u32 = state.iter().map(|&s| s as u32).sum();
        for (i, rule) in self.rules.iter().enumerate() {
            out[i] = match rule {
                SumRule::Direct => self.neighbors[i].iter().map(|&j| state[j] as u32).sum(),
                SumRule::Complement(rest) => {
                    total - state[i] as u32 - rest.iter().map(|&j| state[j] as u32).sum::<u32>()
                }
            };
        }
        Ok(())
    }

    /// Real-valued neighbor sums `out[i] = Σ_{j ∈ N(i)} x[j]` (adjacency matvec).
    pub fn adjacency_mul(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            out[i] = nb.iter().map(|&j| x[j]).sum();
        }
    }

    /// Edge-list text: `n` on the first line, then `i j` pairs with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("edge list is empty".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Parse(format!("bad unit count {header:?}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: expected two indices, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// Built-in graphon kernels on `[0, 1]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Constant { value: f64 },
    /// `K` equal-width blocks; `matrix[k][l]` is the kernel value between
    /// block `k` and block `l`.
    Block { matrix: Vec<Vec<f64>> },
    /// `G(u, v) = g(u) g(v)` with `g` piecewise constant on equal-width bins.
    Product { levels: Vec<f64> },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..=1.0).contains(&v);
        match self {
            Kernel::Constant { value } if !in_range(*value) => {
                Err(Error::InvalidKernel(format!("constant {value} outside [0, 1]")))
            }
            Kernel::Constant { .. } => Ok(()),
            Kernel::Block { matrix } => {
                let k = matrix.len();
                if k == 0 {
                    return Err(Error::InvalidKernel("block matrix is empty".into()));
                }
                for (r, row) in matrix.iter().enumerate() {
                    if row.len() != k {
                        return Err(Error::InvalidKernel(format!("row {r} has {} entries, expected {k}", row.len())));
                    }
                    for (c, &v) in row.iter().enumerate() {
                        if !in_range(v) {
                            return Err(Error::InvalidKernel(format!("entry ({r}, {c}) = {v} outside [0, 1]")));
                        }
                        if v != matrix[c][r] {
                            return Err(Error::InvalidKernel(format!("block matrix asymmetric at ({r}, {c})")));
                        }
                    }
                }
                Ok(())
            }
            Kernel::Product { levels } => {
                if levels.is_empty() {
                    return Err(Error::InvalidKernel("product kernel has no levels".into()));
                }
                match levels.iter().find(|v| !in_range(**v)) {
                    Some(v) => Err(Error::InvalidKernel(format!("level {v} outside [0, 1]"))),
                    None => Ok(()),
                }
            }
        }
    }

    fn bin(u: f64, k: usize) -> usize {
        ((u * k as f64) as usize).min(k - 1)
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match self {
            Kernel::Constant { value } => *value,
            Kernel::Block { matrix } => {
                let k = matrix.len();
                matrix[Self::bin(u, k)][Self::bin(v, k)]
            }
            Kernel::Product { levels } => {
                let k = levels.len();
                levels[Self::bin(u, k)] * levels[Self::bin(v, k)]
            }
        }
    }

    /// Block index of a latent type (block kernels only; 0 otherwise).
    pub fn block_of(&self, u: f64) -> usize {
        match self {
            Kernel::Block { matrix } => Self::bin(u, matrix.len()),
            Kernel::Product { levels } => Self::bin(u, levels.len()),
            Kernel::Constant { .. } => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_invariants(g: &InterferenceGraph) {
        for i in 0..g.n() {
            let nb = g.neighbors(i);
            assert!(nb.windows(2).all(|w| w[0] < w[1]), "sorted, no duplicates");
            assert!(!nb.contains(&i));
            for &j in nb {
                assert!(g.has_edge(j, i));
            }
        }
        assert_eq!(g.max_degree(), g.degrees().into_iter().max().unwrap_or(0));
    }

    #[test]
    fn path_from_edge_list() {
        let g = InterferenceGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.max_degree(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
        check_invariants(&g);
    }

    #[test]
    fn empty_graph_and_errors() {
        let g = InterferenceGraph::from_edges(4, &[]).unwrap();
        assert_eq!(g.max_degree(), 0);
        assert_eq!(g.neighbor_sums(&[1, 0, 1, 1]).unwrap(), vec![0; 4]);
        assert!(matches!(InterferenceGraph::from_edges(2, &[(0, 0)]), Err(Error::SelfLoop(0))));
        assert!(matches!(
            InterferenceGraph::from_edges(2, &[(0, 2)]),
            Err(Error::IndexOutOfRange { index: 2, n: 2 })
        ));
    }

    #[test]
    fn duplicates_collapse() {
        let g = InterferenceGraph::from_edges(3, &[(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        check_invariants(&g);
    }

    #[test]
    fn neighbor_sum_examples() {
        let star = InterferenceGraph::star(4);
        assert_eq!(star.neighbor_sums(&[1, 1, 0, 1]).unwrap(), vec![2, 1, 1, 1]);
        let k4 = InterferenceGraph::complete(4);
        assert_eq!(k4.neighbor_sums(&[1; 4]).unwrap(), vec![3; 4]);
        assert!(matches!(
            k4.neighbor_sums(&[1; 3]),
            Err(Error::LengthMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn erdos_renyi_extremes() {
        let g0 = InterferenceGraph::erdos_renyi(30, 0.0, 1).unwrap();
        assert_eq!(g0.edge_count(), 0);
        let g1 = InterferenceGraph::erdos_renyi(30, 1.0, 1).unwrap();
        assert!(g1.degrees().iter().all(|&d| d == 29));
        assert!(matches!(
            InterferenceGraph::erdos_renyi(3, 1.5, 0),
            Err(Error::InvalidProbability(_))
        ));
    }

    #[test]
    fn constant_kernel_graphon_matches_erdos_renyi_bitwise() {
        for seed in 0..5 {
            let er = InterferenceGraph::erdos_renyi(60, 0.2, seed).unwrap();
            let (gr, _) = InterferenceGraph::graphon(60, 0.2, &Kernel::Constant { value: 1.0 }, seed).unwrap();
            assert_eq!(er, gr);
            assert_eq!(er.to_edge_list(), gr.to_edge_list());
        }
    }

    #[test]
    fn diagonal_block_kernel_has_no_cross_edges() {
        let kernel = Kernel::Block {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let (g, types) = InterferenceGraph::graphon(80, 1.0, &kernel, 3).unwrap();
        for (i, j) in g.edges() {
            assert_eq!(kernel.block_of(types[i]), kernel.block_of(types[j]));
        }
        assert!(g.edge_count() > 0);
    }

    #[test]
    fn kernel_validation() {
        let bad = [
            Kernel::Constant { value: 1.2 },
            Kernel::Block {
                matrix: vec![vec![0.5, 0.1], vec![0.2, 0.5]],
            },
            Kernel::Block {
                matrix: vec![vec![0.5, -0.1], vec![-0.1, 0.5]],
            },
            Kernel::Block { matrix: vec![vec![0.5]; 2] },
            Kernel::Product { levels: vec![] },
            Kernel::Product { levels: vec![0.3, 1.1] },
        ];
        for k in bad {
            assert!(matches!(k.validate(), Err(Error::InvalidKernel(_))), "{k:?}");
        }
        assert_eq!(Kernel::Product { levels: vec![0.5, 1.0] }.eval(0.1, 0.9), 0.5);
    }

    #[test]
    fn edge_list_text_format() {
        let text = "# comment\n4\n2 1   # trailing\n0 1\n\n1 2\n";
        let g = InterferenceGraph::parse_edge_list(text).unwrap();
        assert_eq!(g.to_edge_list(), "4\n0 1\n1 2\n");
        assert!(matches!(InterferenceGraph::parse_edge_list("3\n0 1 2\n"), Err(Error::Parse(_))));
        assert!(matches!(InterferenceGraph::parse_edge_list(""), Err(Error::Parse(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let g = InterferenceGraph::erdos_renyi(25, 0.3, 11).unwrap();
        g.write_edge_list(&path).unwrap();
        assert_eq!(InterferenceGraph::read_edge_list(&path).unwrap(), g);
    }

    fn arb_graph() -> impl Strategy<Value = InterferenceGraph> {
        (1usize..25, 0.0f64..1.0, any::<u64>())
            .prop_map(|(n, rho, seed)| InterferenceGraph::erdos_renyi(n, rho, seed).unwrap())
    }

    proptest! {
        #[test]
        fn generated_graphs_satisfy_invariants_and_round_trip(g in arb_graph()) {
            check_invariants(&g);
            let back = InterferenceGraph::parse_edge_list(&g.to_edge_list()).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.fingerprint(), g.fingerprint());
        }

        #[test]
        fn neighbor_sums_are_linear_and_match_degree(
            g in arb_graph(),
            bits in proptest::collection::vec(any::<(bool, bool)>(), 25),
        ) {
            let n = g.n();
            let x: Vec<u8> = bits[..n].iter().map(|b| b.0 as u8).collect();
            // y is disjoint from x so that x + y stays binary
            let y: Vec<u8> = bits[..n].iter().map(|b| (b.1 && !b.0) as u8).collect();
            let xy: Vec<u8> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let (sx, sy, sxy) = (g.neighbor_sums(&x).unwrap(), g.neighbor_sums(&y).unwrap(), g.neighbor_sums(&xy).unwrap());
            for i in 0..n {
                prop_assert_eq!(sx[i] + sy[i], sxy[i]);
                prop_assert!(sx[i] as usize <= g.degree(i));
            }
            let degs: Vec<u32> = g.degrees().into_iter().map(|d| d as u32).collect();
            prop_assert_eq!(g.neighbor_sums(&vec![1; n]).unwrap(), degs);
        }

        #[test]
        fn dense_and_sparse_sum_rules_agree(n in 2usize..30, rho in 0.5f64..1.0, seed in any::<u64>(), s in any::<u64>()) {
            let g = InterferenceGraph::erdos_renyi(n, rho, seed).unwrap();
            let state: Vec<u8> = (0..n).map(|i| ((s >> (i % 64)) & 1) as u8).collect();
            let fast = g.neighbor_sums(&state).unwrap();
            for i in 0..n {
                let direct: u32 = g.neighbors(i).iter().map(|&j| state[j] as u32).sum();
                prop_assert_eq!(fast[i], direct);
            }
        }

        #[test]
        fn generators_are_deterministic(n in 1usize..30, rho in 0.0f64..1.0, seed in any::<u64>()) {
            prop_assert_eq!(
                InterferenceGraph::erdos_renyi(n, rho, seed).unwrap(),
                InterferenceGraph::erdos_renyi(n, rho, seed).unwrap()
            );
            let k = Kernel::Product { levels: vec![0.3, 0.9] };
            prop_assert_eq!(
                InterferenceGraph::graphon(n, rho, &k, seed).unwrap(),
                InterferenceGraph::graphon(n, rho, &k, seed).unwrap()
            );
        }
    }
}
