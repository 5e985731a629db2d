use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::CanonicalProblem;
use crate::error::{Error, Result};

/// Writes the problem as whitespace-separated text sections:
/// `vars`, `cost`, `eq`/`rhs_eq`, `ineq`/`rhs_ineq`, each entry on its own line.
/// Matrix entries are `row col value` with zero-based indices.
pub fn write_triplets(prob: &CanonicalProblem, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_to(prob, &mut w).map_err(|e| Error::io(path, e))
}

fn write_to(prob: &CanonicalProblem, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# n {} m_eq {} m_ineq {}", prob.n(), prob.b.len(), prob.d.len())?;
    writeln!(w, "vars {}", prob.n())?;
    for c in 0..prob.n() {
        writeln!(w, "{c} {} {:e} {:e}", prob.index.key(c), prob.lower[c], prob.upper[c])?;
    }
    writeln!(w, "cost")?;
    for (c, v) in prob.cost.iter().enumerate().filter(|(_, v)| **v != 0.0) {
        writeln!(w, "{c} {v:e}")?;
    }
    writeln!(w, "eq {}", prob.g.nnz())?;
    for (r, c, v) in prob.g.triplets() {
        writeln!(w, "{r} {c} {v:e}")?;
    }
    writeln!(w, "rhs_eq {}", prob.b.len())?;
    for (r, v) in prob.b.iter().enumerate() {
        writeln!(w, "{r} {v:e} {}", prob.eq_tags[r])?;
    }
    writeln!(w, "ineq {}", prob.h.nnz())?;
    for (r, c, v) in prob.h.triplets() {
        writeln!(w, "{r} {c} {v:e}")?;
    }
    writeln!(w, "rhs_ineq {}", prob.d.len())?;
    for (r, v) in prob.d.iter().enumerate() {
        writeln!(w, "{r} {v:e} {}", prob.in_tags[r])?;
    }
    w.flush()
}
