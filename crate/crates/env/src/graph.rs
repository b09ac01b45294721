use serde::{Deserialize, Serialize};

/// Binary directed adjacency over `n` objects. Entry `(i, j)` set means `i`
/// acts on `j` at this step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<u8>>", try_from = "Vec<Vec<u8>>")]
pub struct InteractionGraph {
    n: usize,
    adj: Vec<u8>,
}

impl InteractionGraph {
    pub fn empty(n: usize) -> Self {
        Self { n, adj: vec![0; n * n] }
    }

    pub fn full(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.set(i, j, true);
                }
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    /// Diagonal writes are ignored.
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        if i != j {
            self.adj[i * self.n + j] = on as u8;
        }
    }

    pub fn set_pair(&mut self, i: usize, j: usize, on: bool) {
        self.set(i, j, on);
        self.set(j, i, on);
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_count() == 0
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (0..self.n).filter(move |&j| self.get(i, j)).map(move |j| (i, j)))
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        self.adj.chunks(self.n.max(1)).map(|r| r.to_vec()).take(self.n).collect()
    }

    /// Row-major bit packing, prefixed by `n`; equal graphs give equal bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.n as u8];
        let mut byte = 0u8;
        for (k, &v) in self.adj.iter().enumerate() {
            byte |= (v & 1) << (k % 8);
            if k % 8 == 7 {
                out.push(byte);
                byte = 0;
            }
        }
        if self.adj.len() % 8 != 0 {
            out.push(byte);
        }
        out
    }

    /// Number of mismatched off-diagonal entries.
    pub fn hamming(&self, other: &InteractionGraph) -> usize {
        assert_eq!(self.n, other.n);
        self.adj.iter().zip(&other.adj).filter(|(a, b)| a != b).count()
    }
}

impl From<InteractionGraph> for Vec<Vec<u8>> {
    fn from(g: InteractionGraph) -> Self {
        g.to_matrix()
    }
}

impl TryFrom<Vec<Vec<u8>>> for InteractionGraph {
    type Error = String;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self, Self::Error> {
        let n = rows.len();
        let mut g = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(format!("graph row {i} has {} entries, expected {n}", row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                match (v, i == j) {
                    (0, _) => {}
                    (1, false) => g.set(i, j, true),
                    (1, true) => return Err(format!("graph has a self edge at {i}")),
                    _ => return Err(format!("graph entry ({i},{j}) is {v}, expected 0 or 1")),
                }
            }
        }
        Ok(g)
    }
}
