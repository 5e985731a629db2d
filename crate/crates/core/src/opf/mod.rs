//! Multi-period current-injection OPF with McCormick-relaxed power definitions.

mod bounds;
mod build;
mod export;
mod mccormick;
mod solve;

pub use bounds::{preprocess_bounds, Bounds, Interval};
pub use build::{build_ci_opf, idle_injection, lift_operating_point, Objective};
pub(crate) use build::{key, tag, Builder};
pub use export::write_triplets;
pub use mccormick::{envelope_range, mccormick_planes, Plane};
pub use solve::{solve_centralized, CentralSolution};

use std::collections::HashMap;
use std::fmt;

use crate::grid::Phase;
use crate::linalg::SparseMatrix;

/// Kind of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantity {
    Vr,
    Vi,
    Ir,
    Ii,
    FlowR,
    FlowI,
    P,
    Q,
    Pg,
    Pl,
    Qg,
    Ql,
    Psc,
    Psd,
    Soc,
    /// VR·IR
    Wrr,
    /// VI·II
    Wii,
    /// VR·II
    Wri,
    /// VI·IR
    Wir,
    /// Epigraph of the PCC ramp.
    Ramp,
    /// Epigraph of an agent's peak net consumption.
    Peak,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Vr => "vr",
            Quantity::Vi => "vi",
            Quantity::Ir => "ir",
            Quantity::Ii => "ii",
            Quantity::FlowR => "flow_r",
            Quantity::FlowI => "flow_i",
            Quantity::P => "p",
            Quantity::Q => "q",
            Quantity::Pg => "pg",
            Quantity::Pl => "pl",
            Quantity::Qg => "qg",
            Quantity::Ql => "ql",
            Quantity::Psc => "psc",
            Quantity::Psd => "psd",
            Quantity::Soc => "soc",
            Quantity::Wrr => "w_rr",
            Quantity::Wii => "w_ii",
            Quantity::Wri => "w_ri",
            Quantity::Wir => "w_ir",
            Quantity::Ramp => "ramp",
            Quantity::Peak => "peak",
        }
    }

    /// True for line quantities, whose element is a line index.
    pub fn is_line(self) -> bool {
        matches!(self, Quantity::FlowR | Quantity::FlowI)
    }
}

/// Identifies one column: quantity at a bus (index) or line (index), phase, hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarKey {
    pub quantity: Quantity,
    pub element: usize,
    pub phase: Option<Phase>,
    pub hour: usize,
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.quantity.is_line() { "line" } else { "bus" };
        write!(f, "{}[{kind} {}", self.quantity.name(), self.element)?;
        if let Some(p) = self.phase {
            write!(f, " {p}")?;
        }
        write!(f, " t{}]", self.hour)
    }
}

/// Bijection between variable keys and column indices.
#[derive(Debug, Clone, Default)]
pub struct VariableIndex {
    keys: Vec<VarKey>,
    map: HashMap<VarKey, usize>,
    /// Bus index that owns each column under the per-bus decomposition.
    home: Vec<usize>,
}

impl VariableIndex {
    pub(crate) fn push(&mut self, key: VarKey, home: usize) -> usize {
        let id = self.keys.len();
        let prev = self.map.insert(key, id);
        assert!(prev.is_none(), "duplicate variable {key}");
        self.keys.push(key);
        self.home.push(home);
        id
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key: &VarKey) -> Option<usize> {
        self.map.get(key).copied()
    }

    pub fn find(&self, quantity: Quantity, element: usize, phase: Option<Phase>, hour: usize) -> Option<usize> {
        self.get(&VarKey {
            quantity,
            element,
            phase,
            hour,
        })
    }

    pub fn key(&self, col: usize) -> VarKey {
        self.keys[col]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    /// Bus index owning the column (flows belong to their from-end bus).
    pub fn home(&self, col: usize) -> usize {
        self.home[col]
    }
}

/// Kind of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    OhmRe,
    OhmIm,
    KclRe,
    KclIm,
    PDef,
    QDef,
    PSplit,
    QSplit,
    PvConeUpper,
    PvConeLower,
    Soc,
    /// McCormick plane `k` (0..4) of a product.
    McCormick(Quantity, u8),
    RampUp,
    RampDown,
    Peak,
}

impl RowKind {
    /// Network-physics rows that connect neighbouring buses.
    pub fn is_network(self) -> bool {
        matches!(self, RowKind::OhmRe | RowKind::OhmIm | RowKind::KclRe | RowKind::KclIm)
    }
}

/// Label of a constraint row; `element` is a line index for Ohm rows, a bus
/// index otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RowTag {
    pub kind: RowKind,
    pub element: usize,
    pub phase: Option<Phase>,
    pub hour: usize,
    /// Bus index owning the row under the per-bus decomposition.
    pub home: usize,
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            RowKind::OhmRe => "ohm_re".to_string(),
            RowKind::OhmIm => "ohm_im".to_string(),
            RowKind::KclRe => "kcl_re".to_string(),
            RowKind::KclIm => "kcl_im".to_string(),
            RowKind::PDef => "p_def".to_string(),
            RowKind::QDef => "q_def".to_string(),
            RowKind::PSplit => "p_split".to_string(),
            RowKind::QSplit => "q_split".to_string(),
            RowKind::PvConeUpper => "pv_cone_upper".to_string(),
            RowKind::PvConeLower => "pv_cone_lower".to_string(),
            RowKind::Soc => "soc".to_string(),
            RowKind::McCormick(q, k) => format!("mccormick_{}_{k}", q.name()),
            RowKind::RampUp => "ramp_up".to_string(),
            RowKind::RampDown => "ramp_down".to_string(),
            RowKind::Peak => "peak".to_string(),
        };
        let kind = if matches!(self.kind, RowKind::OhmRe | RowKind::OhmIm) {
            "line"
        } else {
            "bus"
        };
        write!(f, "{name}[{kind} {}", self.element)?;
        if let Some(p) = self.phase {
            write!(f, " {p}")?;
        }
        write!(f, " t{}]", self.hour)
    }
}

/// `min cᵀx  s.t.  G x = b,  H x ≤ d,  lower ≤ x ≤ upper`.
#[derive(Debug, Clone)]
pub struct CanonicalProblem {
    pub index: VariableIndex,
    pub cost: Vec<f64>,
    pub g: SparseMatrix,
    pub b: Vec<f64>,
    pub eq_tags: Vec<RowTag>,
    pub h: SparseMatrix,
    pub d: Vec<f64>,
    pub in_tags: Vec<RowTag>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub horizon: usize,
    /// kVA per phase; multiplies per-unit powers.
    pub base_kva: f64,
}

impl CanonicalProblem {
    pub fn n(&self) -> usize {
        self.cost.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        crate::linalg::dot(&self.cost, x)
    }

    pub fn eq_residual(&self, x: &[f64]) -> f64 {
        self.g
            .mul_vec(x)
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest violation of inequality rows and variable bounds.
    pub fn ineq_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0f64;
        for (a, d) in self.h.mul_vec(x).iter().zip(&self.d) {
            v = v.max(a - d);
        }
        for i in 0..x.len() {
            v = v.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        v
    }

    pub fn as_qp(&self) -> crate::qp::QpProblem {
        let n = self.n();
        crate::qp::QpProblem {
            p: SparseMatrix::zeros(n, n),
            q: self.cost.clone(),
            a: self.g.clone(),
            b: self.b.clone(),
            c: self.h.clone(),
            d: self.d.clone(),
            lb: self.lower.clone(),
            ub: self.upper.clone(),
        }
    }

    pub fn value(
        &self,
        x: &[f64],
        quantity: Quantity,
        element: usize,
        phase: Option<Phase>,
        hour: usize,
    ) -> Option<f64> {
        self.index.find(quantity, element, phase, hour).map(|c| x[c])
    }
}
