use num_complex::Complex64;

use super::{Network, Phase};
use crate::linalg::SparseMatrix;

/// One (element, phase) position: a bus-phase column or a line-phase row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseSlot {
    pub element: usize,
    pub phase: Phase,
}

impl Network {
    /// Bus-phase slots in bus order, phases a, b, c within a bus.
    pub fn bus_slots(&self) -> Vec<PhaseSlot> {
        self.buses
            .iter()
            .enumerate()
            .flat_map(|(i, b)| b.phases.iter().map(move |phase| PhaseSlot { element: i, phase }))
            .collect()
    }

    /// Line-phase slots in line order, phases a, b, c within a line.
    pub fn line_slots(&self) -> Vec<PhaseSlot> {
        self.lines
            .iter()
            .enumerate()
            .flat_map(|(k, l)| l.phases.iter().map(move |phase| PhaseSlot { element: k, phase }))
            .collect()
    }
}

/// Phase-expanded edge-by-node incidence matrix.
///
/// One row per (line, phase) and one column per (bus, phase); the row of line
/// (m, n) on phase φ has +1 at (m, φ) and −1 at (n, φ).
pub fn incidence_matrix(net: &Network) -> SparseMatrix {
    let cols = net.bus_slots();
    let col_of = |bus: usize, phase: Phase| {
        cols.iter()
            .position(|s| s.element == bus && s.phase == phase)
            .expect("line phase present at both ends")
    };
    let rows = net.line_slots();
    let mut trip = Vec::with_capacity(2 * rows.len());
    for (r, slot) in rows.iter().enumerate() {
        let (m, n) = net.line_ends(slot.element);
        trip.push((r, col_of(m, slot.phase), 1.0));
        trip.push((r, col_of(n, slot.phase), -1.0));
    }
    SparseMatrix::from_triplets(rows.len(), cols.len(), &trip)
}

/// Block-diagonal complex matrix; block k covers rows/columns
/// `offsets[k]..offsets[k] + blocks[k].len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub blocks: Vec<Vec<Vec<Complex64>>>,
    pub offsets: Vec<usize>,
}

impl BlockMatrix {
    pub fn dim(&self) -> usize {
        self.offsets
            .last()
            .zip(self.blocks.last())
            .map_or(0, |(o, b)| o + b.len())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        for (k, block) in self.blocks.iter().enumerate() {
            let o = self.offsets[k];
            if (o..o + block.len()).contains(&i) {
                if (o..o + block.len()).contains(&j) {
                    return block[i - o][j - o];
                }
                return Complex64::new(0.0, 0.0);
            }
        }
        Complex64::new(0.0, 0.0)
    }

    pub fn is_block_symmetric(&self) -> bool {
        self.blocks.iter().all(|b| {
            (0..b.len()).all(|i| (0..b.len()).all(|j| (b[i][j] - b[j][i]).norm() <= 1e-12 * (1.0 + b[i][j].norm())))
        })
    }
}

/// Line impedance blocks (ohms) aligned with the rows of [`incidence_matrix`].
pub fn impedance_blockmatrix(net: &Network) -> BlockMatrix {
    let mut offsets = Vec::with_capacity(net.lines.len());
    let mut blocks = Vec::with_capacity(net.lines.len());
    let mut off = 0;
    for l in &net.lines {
        offsets.push(off);
        blocks.push(l.impedance.clone());
        off += l.phases.len();
    }
    BlockMatrix { blocks, offsets }
}
