//! Assembly of the undirected super-structure from a precision decomposition:
//! combine `|S| + |L|` into a weighted adjacency, threshold it into a binary
//! mask, and validate the mask against ground truth.
//!
//! The mask's zero entries form the forbidden set used by the masked
//! discovery step: a pair absent here is never considered as an edge.

use crate::admm::PrecisionDecomposition;
use crate::graphs::{moralize, GroundTruth};
use crate::scm::{load_matrix_csv, save_matrix_csv};
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Combined adjacency weights `W = |S| + |L|`, symmetrized by the entrywise
/// maximum of `W` and `Wᵀ`, with the diagonal zeroed. The max (rather than
/// the average) keeps one-sided numerical evidence of an edge, erring toward
/// never pruning a true edge.
pub fn combine(s: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(
        s.shape(),
        l.shape(),
        "combine arguments must match in shape"
    );
    let d = s.nrows();
    let mut w = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let wij = s[(i, j)].abs() + l[(i, j)].abs();
            let wji = s[(j, i)].abs() + l[(j, i)].abs();
            w[(i, j)] = wij.max(wji);
        }
    }
    w
}

/// Binary undirected super-structure: symmetric 0/1 matrix with zero
/// diagonal, plus the threshold it was cut at and a note on where the
/// weights came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperStructure {
    mask: DMatrix<f64>,
    tau_edge: Option<f64>,
    source: Option<String>,
}

/// Validation of a mask against ground truth.
#[derive(Debug, Clone, Serialize)]
pub struct MaskValidation {
    /// Fraction of true edges (directed taken as undirected, plus
    /// bidirected) whose unordered pair is present in the mask.
    pub recall: f64,
    /// Fraction of mask edges present in the moralization of the true DAG.
    /// Only defined when the truth has no latents (with latents the
    /// conditional-independence graph is not the moralized DAG).
    pub precision_vs_moralized: Option<f64>,
    /// Number of undirected edges in the mask.
    pub edge_count: usize,
}

#[derive(Serialize, Deserialize)]
struct MaskJson {
    d: usize,
    tau_edge: Option<f64>,
    edges: Vec<[usize; 2]>,
}

/// Strict cut `G* = 1[W > τ_edge]` of a symmetric nonnegative weight matrix.
pub fn threshold(w: &DMatrix<f64>, tau_edge: f64) -> SuperStructure {
    let d = w.nrows();
    let mut mask = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i != j && w[(i, j)] > tau_edge {
                mask[(i, j)] = 1.0;
            }
        }
    }
    SuperStructure {
        mask,
        tau_edge: Some(tau_edge),
        source: None,
    }
}

impl SuperStructure {
    /// Mask of a solved decomposition: `threshold(combine(|S|, |L|), τ)`,
    /// tagged with the solver mode it came from.
    pub fn from_decomposition(dec: &PrecisionDecomposition, tau_edge: f64) -> Self {
        let mut out = threshold(&combine(&dec.s, &dec.l), tau_edge);
        out.source = Some(format!("{:?} decomposition, r*={}", dec.mode, dec.r_star));
        out
    }

    /// Builds directly from a 0/1 matrix, checking the mask invariants.
    pub fn from_matrix(mask: DMatrix<f64>, tau_edge: Option<f64>) -> Result<Self> {
        let d = mask.nrows();
        if mask.ncols() != d {
            return Err(Error::Contract("mask must be square".into()));
        }
        for i in 0..d {
            if mask[(i, i)] != 0.0 {
                return Err(Error::Contract(format!("mask diagonal nonzero at {i}")));
            }
            for j in 0..d {
                let v = mask[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Contract(format!(
                        "mask entry ({i},{j}) = {v} is not 0/1"
                    )));
                }
                if mask[(i, j)] != mask[(j, i)] {
                    return Err(Error::Contract(format!("mask asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(SuperStructure {
            mask,
            tau_edge,
            source: None,
        })
    }

    pub fn d(&self) -> usize {
        self.mask.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mask
    }

    pub fn tau_edge(&self) -> Option<f64> {
        self.tau_edge
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    /// Whether the unordered pair {i, j} is an edge of the mask.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i != j && self.mask[(i, j)] != 0.0
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        let d = self.d();
        let mut n = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                if self.mask[(i, j)] != 0.0 {
                    n += 1;
                }
            }
        }
        n
    }

    /// Edges as sorted unordered pairs `(min, max)`.
    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        let d = self.d();
        let mut set = BTreeSet::new();
        for i in 0..d {
            for j in (i + 1)..d {
                if self.mask[(i, j)] != 0.0 {
                    set.insert((i, j));
                }
            }
        }
        set
    }

    /// Recall of the true edges and, absent latents, precision against the
    /// moralized true DAG.
    pub fn validate(&self, truth: &GroundTruth) -> Result<MaskValidation> {
        if truth.node_count() != self.d() {
            return Err(Error::Contract(format!(
                "mask is {}x{0} but truth has {} nodes",
                self.d(),
                truth.node_count()
            )));
        }
        let mut true_pairs: BTreeSet<(usize, usize)> = truth
            .directed()
            .iter()
            .map(|&(i, j)| (i.min(j), i.max(j)))
            .collect();
        for &(i, j) in truth.bidirected() {
            true_pairs.insert((i, j));
        }
        let mask_pairs = self.pairs();
        let hit = true_pairs.iter().filter(|p| mask_pairs.contains(p)).count();
        let recall = if true_pairs.is_empty() {
            1.0
        } else {
            hit as f64 / true_pairs.len() as f64
        };

        let precision_vs_moralized = if truth.latent_count() == 0 {
            let moral = moralize(&truth.directed_dag());
            let in_moral = mask_pairs
                .iter()
                .filter(|&&(i, j)| moral[(i, j)] != 0.0)
                .count();
            Some(if mask_pairs.is_empty() {
                1.0
            } else {
                in_moral as f64 / mask_pairs.len() as f64
            })
        } else {
            None
        };

        Ok(MaskValidation {
            recall,
            precision_vs_moralized,
            edge_count: mask_pairs.len(),
        })
    }

    /// Plain d×d CSV of 0/1 entries. The threshold is not representable in
    /// this format; use JSON to round-trip it.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        save_matrix_csv(&self.mask, path)
    }

    /// JSON object `{d, tau_edge, edges}` with a sorted unordered edge list.
    pub fn to_json_string(&self) -> String {
        let enc = MaskJson {
            d: self.d(),
            tau_edge: self.tau_edge,
            edges: self.pairs().into_iter().map(|(i, j)| [i, j]).collect(),
        };
        serde_json::to_string_pretty(&enc).expect("mask encoding cannot fail")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let enc: MaskJson = serde_json::from_str(s)?;
        let mut mask = DMatrix::zeros(enc.d, enc.d);
        for [i, j] in enc.edges {
            if i >= enc.d || j >= enc.d {
                return Err(Error::Parse(format!("edge ({i},{j}) out of range")));
            }
            if i == j {
                return Err(Error::Parse(format!("self-edge on node {i}")));
            }
            mask[(i, j)] = 1.0;
            mask[(j, i)] = 1.0;
        }
        SuperStructure::from_matrix(mask, enc.tau_edge)
    }

    /// Loads a mask from either accepted format, dispatching on the `.json`
    /// extension and treating everything else as matrix CSV.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            return Self::from_json_str(&std::fs::read_to_string(path)?);
        }
        SuperStructure::from_matrix(load_matrix_csv(path)?, None)
    }
}
