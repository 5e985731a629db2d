use num_complex::Complex64;

use super::bounds::{pv_tan, Bounds};
use super::mccormick::mccormick_planes;
use super::{CanonicalProblem, Quantity, RowKind, RowTag, VarKey, VariableIndex};
use crate::error::{Error, Result};
use crate::grid::{Network, Phase, PowerFlowState, Profiles};
use crate::linalg::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Σ_t |Σ_φ P_pcc(t) − P_pcc(t−1)| through epigraph variables.
    PccRamp,
    None,
}

const INF: f64 = f64::INFINITY;

#[derive(Default)]
pub(crate) struct Builder {
    pub(crate) index: VariableIndex,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) cost: Vec<f64>,
    eq: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    eq_tags: Vec<RowTag>,
    ineq: Vec<Vec<(usize, f64)>>,
    d: Vec<f64>,
    in_tags: Vec<RowTag>,
}

impl Builder {
    pub(crate) fn var(&mut self, key: VarKey, home: usize, lo: f64, hi: f64) -> usize {
        let id = self.index.push(key, home);
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.push(0.0);
        id
    }

    pub(crate) fn eq(&mut self, row: Vec<(usize, f64)>, rhs: f64, tag: RowTag) {
        self.eq.push(row);
        self.b.push(rhs);
        self.eq_tags.push(tag);
    }

    pub(crate) fn le(&mut self, row: Vec<(usize, f64)>, rhs: f64, tag: RowTag) {
        self.ineq.push(row);
        self.d.push(rhs);
        self.in_tags.push(tag);
    }

    pub(crate) fn finish(self, horizon: usize, base_kva: f64) -> CanonicalProblem {
        let n = self.index.len();
        CanonicalProblem {
            g: SparseMatrix::from_rows(n, &self.eq),
            h: SparseMatrix::from_rows(n, &self.ineq),
            index: self.index,
            cost: self.cost,
            b: self.b,
            eq_tags: self.eq_tags,
            d: self.d,
            in_tags: self.in_tags,
            lower: self.lower,
            upper: self.upper,
            horizon,
            base_kva,
        }
    }
}

pub(crate) fn key(quantity: Quantity, element: usize, phase: Option<Phase>, hour: usize) -> VarKey {
    VarKey {
        quantity,
        element,
        phase,
        hour,
    }
}

pub(crate) fn tag(kind: RowKind, element: usize, phase: Option<Phase>, hour: usize, home: usize) -> RowTag {
    RowTag {
        kind,
        element,
        phase,
        hour,
        home,
    }
}

/// Assembles the relaxed multi-period OPF in per unit.
pub fn build_ci_opf(
    net: &Network,
    profiles: &Profiles,
    bounds: &Bounds,
    objective: Objective,
) -> Result<CanonicalProblem> {
    let horizon = net.horizon;
    if objective == Objective::PccRamp && horizon < 2 {
        return Err(Error::Validation(
            "pcc_ramp objective needs a horizon of at least two hours".into(),
        ));
    }
    if bounds.horizon != horizon || profiles.horizon != horizon {
        return Err(Error::Dimension(format!(
            "bounds cover {} hours and profiles {}, network horizon is {horizon}",
            bounds.horizon, profiles.horizon
        )));
    }
    let base = net.base_kva;
    let zb = net.base_ohm();
    let pcc = net.pcc_index();
    let mut bld = Builder::default();

    for t in 0..horizon {
        // Bus variables.
        for (j, bus) in net.buses.iter().enumerate() {
            for ph in bus.phases.iter() {
                let slot = bounds.bus_slot.get(&(j, ph)).copied();
                let missing = || {
                    Error::Validation(format!(
                        "missing bound for bilinear participant at bus {} phase {ph} hour {t}",
                        bus.id
                    ))
                };
                let slot = slot.ok_or_else(missing)?;
                let (vr, vi) = bounds.v[slot];
                let (ir, ii) = *bounds.i[slot].get(t).ok_or_else(missing)?;
                if ![vr, vi, ir, ii].iter().all(|b| b.is_finite()) {
                    return Err(missing());
                }
                let p = bounds.p[slot][t];
                let q = bounds.q[slot][t];
                let ph_ = Some(ph);
                bld.var(key(Quantity::Vr, j, ph_, t), j, vr.lo, vr.hi);
                bld.var(key(Quantity::Vi, j, ph_, t), j, vi.lo, vi.hi);
                bld.var(key(Quantity::Ir, j, ph_, t), j, ir.lo, ir.hi);
                bld.var(key(Quantity::Ii, j, ph_, t), j, ii.lo, ii.hi);
                bld.var(key(Quantity::P, j, ph_, t), j, p.lo, p.hi);
                bld.var(key(Quantity::Q, j, ph_, t), j, q.lo, q.hi);
                for w in [Quantity::Wrr, Quantity::Wii, Quantity::Wri, Quantity::Wir] {
                    bld.var(key(w, j, ph_, t), j, -INF, INF);
                }
                if j == pcc {
                    continue;
                }
                if let Some(&(pl, ql)) = profiles.loads.get(&(bus.id, ph)).and_then(|s| s.get(t)) {
                    let alpha = if bus.flex().is_some() {
                        profiles.alpha(bus.id, t)
                    } else {
                        0.0
                    };
                    bld.var(key(Quantity::Pl, j, ph_, t), j, (1.0 - alpha) * pl / base, pl / base);
                    bld.var(key(Quantity::Ql, j, ph_, t), j, ql / base, ql / base);
                }
                if bus.pv().is_some_and(|pv| pv.capacity_kw.contains_key(&ph)) {
                    let pg = profiles.pv(bus.id, ph, t) / base;
                    bld.var(key(Quantity::Pg, j, ph_, t), j, pg, pg);
                    bld.var(key(Quantity::Qg, j, ph_, t), j, -INF, INF);
                }
            }
            if let Some(bat) = bus.battery() {
                bld.var(key(Quantity::Psc, j, None, t), j, 0.0, bat.p_sc_max_kw / base);
                bld.var(key(Quantity::Psd, j, None, t), j, 0.0, bat.p_sd_max_kw / base);
                bld.var(
                    key(Quantity::Soc, j, None, t),
                    j,
                    bat.b_min_kwh / base,
                    bat.b_max_kwh / base,
                );
            }
        }
        for (l, line) in net.lines.iter().enumerate() {
            let (from, _) = net.line_ends(l);
            for ph in line.phases.iter() {
                let (fr, fi) = bounds.flow_of(l, ph, t);
                bld.var(key(Quantity::FlowR, l, Some(ph), t), from, fr.lo, fr.hi);
                bld.var(key(Quantity::FlowI, l, Some(ph), t), from, fi.lo, fi.hi);
            }
        }
        if objective == Objective::PccRamp && t >= 1 {
            let r = bld.var(key(Quantity::Ramp, pcc, None, t), pcc, 0.0, INF);
            bld.cost[r] = 1.0;
        }
    }

    let col = |bld: &Builder, q: Quantity, e: usize, ph: Option<Phase>, t: usize| {
        bld.index.find(q, e, ph, t).expect("variable created above")
    };

    for t in 0..horizon {
        // Ohm's law per line phase: V_from − V_to − Z I_flow = 0.
        for (l, line) in net.lines.iter().enumerate() {
            let (m, n) = net.line_ends(l);
            let phases: Vec<Phase> = line.phases.iter().collect();
            for (r, &ph) in phases.iter().enumerate() {
                let mut re = vec![
                    (col(&bld, Quantity::Vr, m, Some(ph), t), 1.0),
                    (col(&bld, Quantity::Vr, n, Some(ph), t), -1.0),
                ];
                let mut im = vec![
                    (col(&bld, Quantity::Vi, m, Some(ph), t), 1.0),
                    (col(&bld, Quantity::Vi, n, Some(ph), t), -1.0),
                ];
                for (c, &ps) in phases.iter().enumerate() {
                    let z = line.impedance[r][c] / zb;
                    let fr = col(&bld, Quantity::FlowR, l, Some(ps), t);
                    let fi = col(&bld, Quantity::FlowI, l, Some(ps), t);
                    re.push((fr, -z.re));
                    re.push((fi, z.im));
                    im.push((fr, -z.im));
                    im.push((fi, -z.re));
                }
                bld.eq(re, 0.0, tag(RowKind::OhmRe, l, Some(ph), t, m));
                bld.eq(im, 0.0, tag(RowKind::OhmIm, l, Some(ph), t, m));
            }
        }

        for (j, bus) in net.buses.iter().enumerate() {
            let nph = bus.phases.len() as f64;
            for ph in bus.phases.iter() {
                let p_ = Some(ph);
                // KCL: I_j = Σ outgoing flows − Σ incoming flows.
                let mut re = vec![(col(&bld, Quantity::Ir, j, p_, t), 1.0)];
                let mut im = vec![(col(&bld, Quantity::Ii, j, p_, t), 1.0)];
                for (l, line) in net.lines.iter().enumerate() {
                    if !line.phases.contains(ph) {
                        continue;
                    }
                    let (m, n) = net.line_ends(l);
                    let sign = if m == j {
                        -1.0
                    } else if n == j {
                        1.0
                    } else {
                        continue;
                    };
                    re.push((col(&bld, Quantity::FlowR, l, p_, t), sign));
                    im.push((col(&bld, Quantity::FlowI, l, p_, t), sign));
                }
                bld.eq(re, 0.0, tag(RowKind::KclRe, j, p_, t, j));
                bld.eq(im, 0.0, tag(RowKind::KclIm, j, p_, t, j));

                let vr = col(&bld, Quantity::Vr, j, p_, t);
                let vi = col(&bld, Quantity::Vi, j, p_, t);
                let ir = col(&bld, Quantity::Ir, j, p_, t);
                let ii = col(&bld, Quantity::Ii, j, p_, t);
                let pcol = col(&bld, Quantity::P, j, p_, t);
                let qcol = col(&bld, Quantity::Q, j, p_, t);
                let wrr = col(&bld, Quantity::Wrr, j, p_, t);
                let wii = col(&bld, Quantity::Wii, j, p_, t);
                let wri = col(&bld, Quantity::Wri, j, p_, t);
                let wir = col(&bld, Quantity::Wir, j, p_, t);

                // P = VR·IR + VI·II, Q = −VR·II + VI·IR
                bld.eq(
                    vec![(pcol, 1.0), (wrr, -1.0), (wii, -1.0)],
                    0.0,
                    tag(RowKind::PDef, j, p_, t, j),
                );
                bld.eq(
                    vec![(qcol, 1.0), (wri, 1.0), (wir, -1.0)],
                    0.0,
                    tag(RowKind::QDef, j, p_, t, j),
                );

                for (w, x, y, wq) in [
                    (wrr, vr, ir, Quantity::Wrr),
                    (wii, vi, ii, Quantity::Wii),
                    (wri, vr, ii, Quantity::Wri),
                    (wir, vi, ir, Quantity::Wir),
                ] {
                    let planes = mccormick_planes(bld.lower[x], bld.upper[x], bld.lower[y], bld.upper[y])?;
                    for (k, pl) in planes.iter().enumerate() {
                        let mut row = vec![(x, pl.cx), (y, pl.cy), (w, pl.cw)];
                        row.retain(|e| e.1 != 0.0);
                        bld.le(row, pl.rhs, tag(RowKind::McCormick(wq, k as u8), j, p_, t, j));
                    }
                }

                if j == pcc {
                    continue;
                }
                // Prosumer split: P = P^G − P^L + (P^sd − P^sc)/nφ, Q = Q^G − Q^L.
                let mut prow = vec![(pcol, 1.0)];
                let mut qrow = vec![(qcol, 1.0)];
                if let Some(pg) = bld.index.find(Quantity::Pg, j, p_, t) {
                    prow.push((pg, -1.0));
                    let qg = col(&bld, Quantity::Qg, j, p_, t);
                    qrow.push((qg, -1.0));
                    let tan = pv_tan(bus.pv().expect("pv present").pf_min);
                    bld.le(vec![(qg, 1.0), (pg, -tan)], 0.0, tag(RowKind::PvConeUpper, j, p_, t, j));
                    bld.le(
                        vec![(qg, -1.0), (pg, -tan)],
                        0.0,
                        tag(RowKind::PvConeLower, j, p_, t, j),
                    );
                }
                if let Some(pl) = bld.index.find(Quantity::Pl, j, p_, t) {
                    prow.push((pl, 1.0));
                    qrow.push((col(&bld, Quantity::Ql, j, p_, t), 1.0));
                }
                if bus.battery().is_some() {
                    prow.push((col(&bld, Quantity::Psd, j, None, t), -1.0 / nph));
                    prow.push((col(&bld, Quantity::Psc, j, None, t), 1.0 / nph));
                }
                if prow.len() > 1 {
                    bld.eq(prow, 0.0, tag(RowKind::PSplit, j, p_, t, j));
                }
                if qrow.len() > 1 {
                    bld.eq(qrow, 0.0, tag(RowKind::QSplit, j, p_, t, j));
                }
            }

            if let Some(bat) = bus.battery() {
                // b(t) − (1 − η_self) b(t−1) − η_C P^sc(t) + P^sd(t)/η_D = 0, b(−1) = b0.
                let keep = 1.0 - bat.eta_self;
                let mut row = vec![
                    (col(&bld, Quantity::Soc, j, None, t), 1.0),
                    (col(&bld, Quantity::Psc, j, None, t), -bat.eta_c),
                    (col(&bld, Quantity::Psd, j, None, t), 1.0 / bat.eta_d),
                ];
                let rhs = if t == 0 {
                    keep * bat.b0_kwh / base
                } else {
                    row.push((col(&bld, Quantity::Soc, j, None, t - 1), -keep));
                    0.0
                };
                bld.eq(row, rhs, tag(RowKind::Soc, j, None, t, j));
            }
        }

        if objective == Objective::PccRamp && t >= 1 {
            let r = col(&bld, Quantity::Ramp, pcc, None, t);
            let mut delta = Vec::new();
            for ph in net.buses[pcc].phases.iter() {
                delta.push((col(&bld, Quantity::P, pcc, Some(ph), t), 1.0));
                delta.push((col(&bld, Quantity::P, pcc, Some(ph), t - 1), -1.0));
            }
            let mut up = delta.clone();
            up.push((r, -1.0));
            let mut down: Vec<_> = delta.iter().map(|&(c, v)| (c, -v)).collect();
            down.push((r, -1.0));
            bld.le(up, 0.0, tag(RowKind::RampUp, pcc, None, t, pcc));
            bld.le(down, 0.0, tag(RowKind::RampDown, pcc, None, t, pcc));
        }
    }

    Ok(bld.finish(horizon, base))
}

/// Per-unit injection at a non-PCC bus phase with every device idle:
/// full load, PV at unity power factor, batteries off.
pub fn idle_injection(net: &Network, profiles: &Profiles, bus: usize, phase: Phase, t: usize) -> Complex64 {
    let b = &net.buses[bus];
    let (pl, ql) = profiles.load(b.id, phase, t);
    let pg = profiles.pv(b.id, phase, t);
    Complex64::new(pg - pl, -ql) / net.base_kva
}

/// Maps exact AC power-flow states (one per hour, computed with
/// [`idle_injection`]) onto the problem's columns.
pub fn lift_operating_point(
    prob: &CanonicalProblem,
    net: &Network,
    profiles: &Profiles,
    states: &[PowerFlowState],
) -> Vec<f64> {
    let base = net.base_kva;
    let pcc = net.pcc_index();
    let mut x = vec![0.0; prob.n()];
    let pcc_total: Vec<f64> = states
        .iter()
        .map(|s| net.buses[pcc].phases.iter().map(|ph| s.pcc_power(net, ph).re).sum())
        .collect();
    for (c, k) in prob.index.keys().iter().enumerate() {
        let s = &states[k.hour];
        let t = k.hour;
        let bus = &net.buses[if k.quantity.is_line() { 0 } else { k.element }];
        let v = |ph: Phase| s.voltage[&(k.element, ph)];
        let i = |ph: Phase| s.current[&(k.element, ph)];
        x[c] = match (k.quantity, k.phase) {
            (Quantity::Vr, Some(ph)) => v(ph).re,
            (Quantity::Vi, Some(ph)) => v(ph).im,
            (Quantity::Ir, Some(ph)) => i(ph).re,
            (Quantity::Ii, Some(ph)) => i(ph).im,
            (Quantity::P, Some(ph)) => (v(ph) * i(ph).conj()).re,
            (Quantity::Q, Some(ph)) => (v(ph) * i(ph).conj()).im,
            (Quantity::Wrr, Some(ph)) => v(ph).re * i(ph).re,
            (Quantity::Wii, Some(ph)) => v(ph).im * i(ph).im,
            (Quantity::Wri, Some(ph)) => v(ph).re * i(ph).im,
            (Quantity::Wir, Some(ph)) => v(ph).im * i(ph).re,
            (Quantity::FlowR, Some(ph)) => s.flow[&(k.element, ph)].re,
            (Quantity::FlowI, Some(ph)) => s.flow[&(k.element, ph)].im,
            (Quantity::Pl, Some(ph)) => profiles.load(bus.id, ph, t).0 / base,
            (Quantity::Ql, Some(ph)) => profiles.load(bus.id, ph, t).1 / base,
            (Quantity::Pg, Some(ph)) => profiles.pv(bus.id, ph, t) / base,
            (Quantity::Qg, _) | (Quantity::Psc, _) | (Quantity::Psd, _) => 0.0,
            (Quantity::Soc, _) => {
                let bat = bus.battery().expect("battery variable implies battery");
                bat.b0_kwh * (1.0 - bat.eta_self).powi(t as i32 + 1) / base
            }
            (Quantity::Ramp, _) => (pcc_total[t] - pcc_total[t - 1]).abs(),
            (Quantity::Peak, _) => panic!("peak epigraph is not part of the network problem"),
            (q, None) => panic!("phase missing for {q:?}"),
        };
    }
    x
}
