//! Interaction-graph inference: variational edge masks, codebook regimes,
//! conditional-independence testing, and the nSHD metric.

pub mod cit;
pub mod codebook;
pub mod relational;
pub mod variational;

use std::fmt;
use std::str::FromStr;

use fioc_env::InteractionGraph;
use serde::{Deserialize, Serialize};

use crate::{ModelError, Result};

pub use cit::{cmi_score, infer_graph_cit, CitConfig, CitModels, CitScoring, Transitions};
pub use relational::{elbo_mask_loss, gt_samples, train_relational, GtSample, MaskLoss, RelationalConfig, RelationalModel};
pub use codebook::{decode_code_to_graph, quantize_codebook, Codebook, Quantized};
pub use variational::{infer_graph_variational, pairwise_embed, PairEncoder, PairwiseEmbedding};

pub const HARD_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Variational,
    Codebook,
    Cit,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Variational, Regime::Codebook, Regime::Cit];

    pub fn code(self) -> f64 {
        match self {
            Regime::Variational => 0.0,
            Regime::Codebook => 1.0,
            Regime::Cit => 2.0,
        }
    }

    pub fn from_code(v: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == v)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Variational => "variational",
            Regime::Codebook => "codebook",
            Regime::Cit => "cit",
        })
    }
}

impl FromStr for Regime {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "variational" => Ok(Regime::Variational),
            "codebook" => Ok(Regime::Codebook),
            "cit" => Ok(Regime::Cit),
            other => Err(ModelError::InvalidArgument(format!(
                "unknown regime `{other}` (expected variational, codebook or cit)"
            ))),
        }
    }
}

/// Real-valued edge weights; `get(src, dst)` is the weight of `src -> dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftGraph {
    n: usize,
    w: Vec<f64>,
}

impl SoftGraph {
    pub fn empty(n: usize) -> Self {
        Self { n, w: vec![0.0; n * n] }
    }

    pub fn full(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                g.set(i, j, 1.0);
            }
        }
        g
    }

    pub fn from_graph(g: &InteractionGraph) -> Self {
        let mut s = Self::empty(g.n());
        for (i, j) in g.edges() {
            s.set(i, j, 1.0);
        }
        s
    }

    /// Row-major `n x n`, diagonal entries forced to zero.
    pub fn from_weights(n: usize, mut w: Vec<f64>) -> Self {
        assert_eq!(w.len(), n * n);
        for i in 0..n {
            w[i * n + i] = 0.0;
        }
        Self { n, w }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, src: usize, dst: usize) -> f64 {
        self.w[src * self.n + dst]
    }

    /// Diagonal writes are ignored.
    pub fn set(&mut self, src: usize, dst: usize, v: f64) {
        if src != dst {
            self.w[src * self.n + dst] = v;
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn harden(&self) -> InteractionGraph {
        let mut g = InteractionGraph::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.get(i, j) >= HARD_THRESHOLD {
                    g.set(i, j, true);
                }
            }
        }
        g
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.w.chunks(self.n.max(1)).take(self.n).map(<[f64]>::to_vec).collect()
    }
}

/// Soft edge probabilities and their hardened graph for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEstimate {
    pub soft: SoftGraph,
    pub hard: InteractionGraph,
}

impl GraphEstimate {
    pub fn new(soft: SoftGraph) -> Self {
        let hard = soft.harden();
        Self { soft, hard }
    }
}

/// Mean over timesteps of mismatched directed off-diagonal entries divided
/// by `N (N - 1)`.
pub fn nshd(estimated: &[InteractionGraph], truth: &[InteractionGraph]) -> Result<f64> {
    if estimated.len() != truth.len() || estimated.is_empty() {
        return Err(ModelError::InvalidArgument(format!(
            "nshd needs aligned non-empty sequences, got {} and {}",
            estimated.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (t, (a, b)) in estimated.iter().zip(truth).enumerate() {
        if a.n() != b.n() || a.n() < 2 {
            return Err(ModelError::InvalidArgument(format!(
                "nshd step {t}: graph sizes {} and {}",
                a.n(),
                b.n()
            )));
        }
        let n = a.n();
        total += a.hamming(b) as f64 / (n * (n - 1)) as f64;
    }
    Ok(total / estimated.len() as f64)
}
