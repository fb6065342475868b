//! Conditional probability tables and their TOML config format.
//!
//! A config file holds one `[[node]]` block per CPT with the node name, the
//! parent names, the state labels and one row per parent-state combination:
//!
//! ```toml
//! version = 1
//!
//! [[node]]
//! name = "CP"
//! parents = ["O", "U"]
//! parent_states = [["0", "1"], ["-1", "0", "+1"]]
//! child_states = ["-1", "0", "+1"]
//!
//! [[node.row]]
//! given = ["0", "-1"]
//! p = [0.0, 1.0, 0.0]
//! ```
//!
//! Rows must cover the full parent product space exactly once and each must
//! sum to one within [`DIST_TOL`](super::DIST_TOL).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use super::{PgmError, DIST_TOL};

/// One discrete node's conditional probability table.
#[derive(Debug, Clone)]
pub struct Cpt {
    name: String,
    parents: Vec<String>,
    parent_states: Vec<Vec<String>>,
    parent_arity: Vec<usize>,
    child_states: Vec<String>,
    /// Row-major over the parent product space, first parent slowest.
    rows: Vec<Vec<f64>>,
}

impl Cpt {
    /// Build and validate a table from explicit rows keyed by parent labels.
    pub fn new(
        name: &str,
        parents: Vec<String>,
        parent_states: Vec<Vec<String>>,
        child_states: Vec<String>,
        labelled_rows: &[(Vec<String>, Vec<f64>)],
    ) -> Result<Self, PgmError> {
        let bad = |problem: String| PgmError::BadCpt {
            node: name.to_string(),
            problem,
        };
        if parents.len() != parent_states.len() {
            return Err(bad(format!(
                "{} parents but {} parent state lists",
                parents.len(),
                parent_states.len()
            )));
        }
        if child_states.len() < 2 {
            return Err(bad("child needs at least two states".to_string()));
        }
        let parent_arity: Vec<usize> = parent_states.iter().map(|s| s.len()).collect();
        if parent_arity.iter().any(|a| *a == 0) {
            return Err(bad("parent with no states".to_string()));
        }
        let total_rows: usize = parent_arity.iter().product();

        let mut rows: Vec<Option<Vec<f64>>> = vec![None; total_rows];
        for (given, p) in labelled_rows {
            if given.len() != parents.len() {
                return Err(bad(format!("row key {given:?} has wrong arity")));
            }
            let mut idx = Vec::with_capacity(given.len());
            for (k, label) in given.iter().enumerate() {
                match parent_states[k].iter().position(|s| s == label) {
                    Some(i) => idx.push(i),
                    None => {
                        return Err(bad(format!(
                            "unknown state '{label}' for parent '{}'",
                            parents[k]
                        )))
                    }
                }
            }
            let flat = flat_index(&parent_arity, &idx);
            if rows[flat].is_some() {
                return Err(bad(format!("duplicate row for parent states {given:?}")));
            }
            if p.len() != child_states.len() {
                return Err(bad(format!(
                    "row {given:?} has {} probabilities for {} child states",
                    p.len(),
                    child_states.len()
                )));
            }
            let sum: f64 = p.iter().sum();
            if !p.iter().all(|x| x.is_finite() && (-DIST_TOL..=1.0 + DIST_TOL).contains(x))
                || (sum - 1.0).abs() > DIST_TOL
            {
                return Err(bad(format!("row {given:?} is not a distribution (sum {sum})")));
            }
            rows[flat] = Some(p.clone());
        }

        // Totality: every combination must be present.
        let mut table = Vec::with_capacity(total_rows);
        for (flat, row) in rows.into_iter().enumerate() {
            match row {
                Some(r) => table.push(r),
                None => {
                    let tuple = unflatten(&parent_arity, flat)
                        .iter()
                        .enumerate()
                        .map(|(k, i)| parent_states[k][*i].clone())
                        .collect::<Vec<_>>()
                        .join(", ");
                    return Err(PgmError::MissingRow {
                        node: name.to_string(),
                        tuple,
                    });
                }
            }
        }

        Ok(Self {
            name: name.to_string(),
            parents,
            parent_states,
            parent_arity,
            child_states,
            rows: table,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parents(&self) -> &[String] {
        &self.parents
    }

    pub fn parent_arity(&self) -> &[usize] {
        &self.parent_arity
    }

    pub fn parent_states(&self) -> &[Vec<String>] {
        &self.parent_states
    }

    pub fn child_arity(&self) -> usize {
        self.child_states.len()
    }

    pub fn child_states(&self) -> &[String] {
        &self.child_states
    }

    /// Look up the row for the given parent-state indices.
    pub fn row(&self, indices: &[usize]) -> Result<&[f64], PgmError> {
        if indices.len() != self.parent_arity.len()
            || indices.iter().zip(&self.parent_arity).any(|(i, a)| i >= a)
        {
            return Err(PgmError::MissingRow {
                node: self.name.clone(),
                tuple: format!("{indices:?}"),
            });
        }
        Ok(&self.rows[flat_index(&self.parent_arity, indices)])
    }

    /// Check the table's shape against what an operation expects.
    pub fn expect_shape(&self, parent_arity: &[usize], child_arity: usize) -> Result<(), PgmError> {
        if self.parent_arity != parent_arity || self.child_arity() != child_arity {
            return Err(PgmError::BadCpt {
                node: self.name.clone(),
                problem: format!(
                    "expected parent arity {:?} and {} child states, found {:?} and {}",
                    parent_arity,
                    child_arity,
                    self.parent_arity,
                    self.child_arity()
                ),
            });
        }
        Ok(())
    }

    /// Iterate rows with their parent-state indices.
    pub fn iter_rows(&self) -> impl Iterator<Item = (Vec<usize>, &[f64])> {
        self.rows
            .iter()
            .enumerate()
            .map(|(flat, row)| (unflatten(&self.parent_arity, flat), row.as_slice()))
    }
}

fn flat_index(arity: &[usize], indices: &[usize]) -> usize {
    let mut flat = 0;
    for (i, a) in indices.iter().zip(arity) {
        flat = flat * a + i;
    }
    flat
}

fn unflatten(arity: &[usize], mut flat: usize) -> Vec<usize> {
    let mut out = vec![0; arity.len()];
    for k in (0..arity.len()).rev() {
        out[k] = flat % arity[k];
        flat /= arity[k];
    }
    out
}

// --- config file -----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CptDoc {
    version: u32,
    #[serde(default)]
    notes: Option<String>,
    node: Vec<NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    name: String,
    parents: Vec<String>,
    parent_states: Vec<Vec<String>>,
    child_states: Vec<String>,
    #[serde(default)]
    notes: Option<String>,
    row: Vec<RowDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RowDoc {
    given: Vec<String>,
    p: Vec<f64>,
}

/// The three CPTs the policy model needs, with the config checksum.
#[derive(Debug, Clone)]
pub struct CptSet {
    pub ct: Cpt,
    pub willingness: Cpt,
    pub cp: Cpt,
    /// SHA-256 of the config text, hex-encoded.
    pub checksum: String,
}

impl CptSet {
    pub fn from_toml_str(text: &str) -> Result<Self, PgmError> {
        let doc: CptDoc = toml::from_str(text)?;
        if doc.version != 1 {
            return Err(PgmError::BadCpt {
                node: "<config>".to_string(),
                problem: format!("unsupported config version {}", doc.version),
            });
        }

        let mut ct = None;
        let mut willingness = None;
        let mut cp = None;
        for node in &doc.node {
            let labelled: Vec<(Vec<String>, Vec<f64>)> = node
                .row
                .iter()
                .map(|r| (r.given.clone(), r.p.clone()))
                .collect();
            let cpt = Cpt::new(
                &node.name,
                node.parents.clone(),
                node.parent_states.clone(),
                node.child_states.clone(),
                &labelled,
            )?;
            match node.name.as_str() {
                "CT" => {
                    cpt.expect_shape(&[3, 3, 3], 3)?;
                    ct = Some(cpt);
                }
                "O" => {
                    if cpt.parent_arity().len() != 1 || cpt.child_arity() != 2 {
                        return Err(PgmError::BadCpt {
                            node: "O".to_string(),
                            problem: "needs one binned parent and a binary child".to_string(),
                        });
                    }
                    willingness = Some(cpt);
                }
                "CP" => {
                    cpt.expect_shape(&[2, 3], 3)?;
                    cp = Some(cpt);
                }
                other => {
                    return Err(PgmError::BadCpt {
                        node: other.to_string(),
                        problem: "unknown node; expected CT, O or CP".to_string(),
                    })
                }
            }
        }

        let missing = |node: &str| PgmError::BadCpt {
            node: node.to_string(),
            problem: "node missing from config".to_string(),
        };
        let checksum = sha256_hex(text.as_bytes());
        Ok(Self {
            ct: ct.ok_or_else(|| missing("CT"))?,
            willingness: willingness.ok_or_else(|| missing("O"))?,
            cp: cp.ok_or_else(|| missing("CP"))?,
            checksum,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PgmError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
