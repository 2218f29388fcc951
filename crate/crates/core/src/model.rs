//! Finite-state chain models: schema, validation, and the generator matrix.
//!
//! A model is a finite state space with a strictly positive reference measure
//! `m`, nonnegative jump rates between distinct states, and nonnegative
//! killing rates. The generator acts on functions as
//!
//! ```text
//! (Q f)(x) = sum_{y != x} jump(x,y) (f(y) - f(x)) - kill(x) f(x)
//! ```
//!
//! so `Q(x,y) = jump(x,y)` off the diagonal and
//! `Q(x,x) = -sum_{y != x} jump(x,y) - kill(x)`.
//!
//! A model claiming `symmetric` must satisfy detailed balance
//! `m(x) jump(x,y) = m(y) jump(y,x)`. A model claiming `recurrent` must have
//! generator spectral abscissa zero (no mass lost); otherwise the abscissa
//! must be strictly negative (transient), which is what makes the potential
//! kernel at zero finite.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_abscissa;
use crate::tol;

/// Schema identifier accepted in report metadata and documentation.
pub const MODEL_SCHEMA: &str = "isokit-model/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpRateEntry {
    from: String,
    to: String,
    rate: f64,
}

/// On-disk JSON shape. Maps are ordered so serialization is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    m: BTreeMap<String, f64>,
    jump_rates: Vec<JumpRateEntry>,
    #[serde(default)]
    kill_rates: BTreeMap<String, f64>,
    #[serde(default)]
    symmetric: bool,
    #[serde(default)]
    recurrent: bool,
}

/// A validated finite-state chain model.
#[derive(Debug, Clone)]
pub struct ChainModel {
    names: Vec<String>,
    m: DVector<f64>,
    jump: DMatrix<f64>,
    kill: DVector<f64>,
    symmetric: bool,
    recurrent: bool,
}

impl ChainModel {
    /// Build and validate a model from raw parts. `jump` must have a zero
    /// diagonal; rates and killing must be nonnegative and finite; `m` must
    /// be strictly positive.
    pub fn from_parts(
        names: Vec<String>,
        m: DVector<f64>,
        jump: DMatrix<f64>,
        kill: DVector<f64>,
        symmetric: bool,
        recurrent: bool,
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Domain("model has no states".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Domain(format!("duplicate state id {a:?}")));
            }
        }
        if m.len() != n || kill.len() != n || jump.nrows() != n || jump.ncols() != n {
            return Err(Error::Domain("dimension mismatch in model parts".into()));
        }
        for i in 0..n {
            if !(m[i].is_finite() && m[i] > 0.0) {
                return Err(Error::Domain(format!(
                    "m({}) = {} must be finite and > 0",
                    names[i], m[i]
                )));
            }
            if !(kill[i].is_finite() && kill[i] >= 0.0) {
                return Err(Error::Domain(format!(
                    "kill_rate({}) = {} must be finite and >= 0",
                    names[i], kill[i]
                )));
            }
            for j in 0..n {
                let r = jump[(i, j)];
                if i == j && r != 0.0 {
                    return Err(Error::Domain(format!(
                        "jump rate from {} to itself is not allowed",
                        names[i]
                    )));
                }
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::Domain(format!(
                        "jump rate {} -> {} = {r} must be finite and >= 0",
                        names[i], names[j]
                    )));
                }
            }
        }

        let model = ChainModel {
            names,
            m,
            jump,
            kill,
            symmetric,
            recurrent,
        };

        if symmetric {
            let r = model.detailed_balance_residual();
            if r > tol::DETAILED_BALANCE {
                return Err(Error::Domain(format!(
                    "model claims symmetric but detailed balance fails by {r:.3e}"
                )));
            }
        }

        let a = spectral_abscissa(&model.generator());
        if recurrent {
            if a.abs() > tol::TRANSIENCE {
                return Err(Error::Domain(format!(
                    "model claims recurrent but generator spectral abscissa is {a:.3e}"
                )));
            }
        } else if a >= -tol::TRANSIENCE {
            return Err(Error::Domain(format!(
                "model is not transient (spectral abscissa {a:.3e}); \
                 flag it recurrent or add killing"
            )));
        }

        Ok(model)
    }

    /// Parse a model from JSON text. Unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_file_repr(file)
    }

    /// Load a model from a JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    /// Serialize back to the on-disk JSON shape (pretty, deterministic order).
    pub fn to_json_string(&self) -> String {
        let mut jump_rates = Vec::new();
        for i in 0..self.len() {
            for j in 0..self.len() {
                if self.jump[(i, j)] > 0.0 {
                    jump_rates.push(JumpRateEntry {
                        from: self.names[i].clone(),
                        to: self.names[j].clone(),
                        rate: self.jump[(i, j)],
                    });
                }
            }
        }
        let file = ModelFile {
            states: self.names.clone(),
            m: self
                .names
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), self.m[i]))
                .collect(),
            jump_rates,
            kill_rates: self
                .names
                .iter()
                .enumerate()
                .filter(|&(i, _)| self.kill[i] > 0.0)
                .map(|(i, s)| (s.clone(), self.kill[i]))
                .collect(),
            symmetric: self.symmetric,
            recurrent: self.recurrent,
        };
        let mut out = serde_json::to_string_pretty(&file).expect("model serializes");
        out.push('\n');
        out
    }

    /// Save to a JSON file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json_string())?;
        Ok(())
    }

    fn from_file_repr(file: ModelFile) -> Result<Self> {
        let n = file.states.len();
        let lookup = |name: &str, ctx: &str| -> Result<usize> {
            file.states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::Schema(format!("{ctx} references unknown state {name:?}")))
        };

        let mut m = DVector::zeros(n.max(1));
        for (i, s) in file.states.iter().enumerate() {
            m[i] = *file
                .m
                .get(s)
                .ok_or_else(|| Error::Schema(format!("m is missing state {s:?}")))?;
        }
        for key in file.m.keys() {
            lookup(key, "m")?;
        }

        let mut jump = DMatrix::zeros(n.max(1), n.max(1));
        for e in &file.jump_rates {
            let i = lookup(&e.from, "jump_rates")?;
            let j = lookup(&e.to, "jump_rates")?;
            if i == j {
                return Err(Error::Schema(format!(
                    "jump_rates entry {:?} -> {:?} is a self-loop",
                    e.from, e.to
                )));
            }
            if jump[(i, j)] != 0.0 {
                return Err(Error::Schema(format!(
                    "duplicate jump_rates entry {:?} -> {:?}",
                    e.from, e.to
                )));
            }
            jump[(i, j)] = e.rate;
        }

        let mut kill = DVector::zeros(n.max(1));
        for (s, r) in &file.kill_rates {
            kill[lookup(s, "kill_rates")?] = *r;
        }

        Self::from_parts(file.states, m, jump, kill, file.symmetric, file.recurrent)
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// State identifiers, in index order.
    pub fn state_names(&self) -> &[String] {
        &self.names
    }

    /// Index of a state id, or a domain error naming the state.
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Domain(format!("unknown state {name:?}")))
    }

    /// Reference measure as a vector over state indices.
    pub fn m(&self) -> &DVector<f64> {
        &self.m
    }

    /// Killing rates per state.
    pub fn kill_rates(&self) -> &DVector<f64> {
        &self.kill
    }

    /// Off-diagonal jump-rate matrix (diagonal is zero).
    pub fn jump_rates(&self) -> &DMatrix<f64> {
        &self.jump
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_recurrent(&self) -> bool {
        self.recurrent
    }

    /// The generator matrix Q.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = self.jump.clone();
        for i in 0..n {
            let out: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
            q[(i, i)] = -out - self.kill[i];
        }
        q
    }

    /// Largest violation of `m(x) jump(x,y) = m(y) jump(y,x)` over all pairs.
    pub fn detailed_balance_residual(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (self.m[i] * self.jump[(i, j)] - self.m[j] * self.jump[(j, i)]).abs();
                worst = worst.max(d);
            }
        }
        worst
    }
}
