//! Static variable bounds for the relaxation.
//!
//! Voltages lie in an annular sector around nominal (magnitude band, angle window),
//! boxed by its enclosing rectangle. Injection currents are bounded per hour from
//! the injection power interval: `I = conj(S / V)` maps the power rectangle and the
//! voltage sector into another annular sector, whose rectangle is intersected with
//! the plain `|I| ≤ S_max / V_min` box. Flow bounds add up injection intervals over
//! the downstream subtree.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::grid::{Network, Phase, Profiles};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn is_finite(self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    fn add(self, o: Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    fn intersect(self, o: Interval) -> Interval {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        if lo <= hi {
            Interval::new(lo, hi)
        } else {
            // Rounding can make two valid enclosures disjoint by an ulp.
            let m = 0.5 * (lo + hi);
            Interval::point(m)
        }
    }

    fn scale(self, k: f64) -> Interval {
        if k >= 0.0 {
            Interval::new(self.lo * k, self.hi * k)
        } else {
            Interval::new(self.hi * k, self.lo * k)
        }
    }
}

/// Rectangular bounds on real and imaginary parts.
pub type ComplexBox = (Interval, Interval);

/// Per-unit bounds, indexed by bus slot (bus, phase) or line slot and hour.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub horizon: usize,
    pub bus_slot: HashMap<(usize, Phase), usize>,
    pub line_slot: HashMap<(usize, Phase), usize>,
    /// Voltage per bus slot.
    pub v: Vec<ComplexBox>,
    /// Injection current per bus slot and hour.
    pub i: Vec<Vec<ComplexBox>>,
    /// Line current (from → to) per line slot and hour.
    pub flow: Vec<Vec<ComplexBox>>,
    /// Injection power per bus slot and hour; unbounded at the PCC.
    pub p: Vec<Vec<Interval>>,
    pub q: Vec<Vec<Interval>>,
}

impl Bounds {
    pub fn v_of(&self, bus: usize, phase: Phase) -> ComplexBox {
        self.v[self.bus_slot[&(bus, phase)]]
    }

    pub fn i_of(&self, bus: usize, phase: Phase, t: usize) -> ComplexBox {
        self.i[self.bus_slot[&(bus, phase)]][t]
    }

    pub fn flow_of(&self, line: usize, phase: Phase, t: usize) -> ComplexBox {
        self.flow[self.line_slot[&(line, phase)]][t]
    }
}

/// Rectangle enclosing `{r e^{jθ} : r ∈ [rmin, rmax], θ ∈ [a, b]}`.
pub(crate) fn sector_box(rmin: f64, rmax: f64, a: f64, b: f64) -> ComplexBox {
    if b - a >= TAU {
        return (Interval::new(-rmax, rmax), Interval::new(-rmax, rmax));
    }
    let mut angles = vec![a, b];
    let mut k = (a / FRAC_PI_2).ceil();
    while k * FRAC_PI_2 <= b {
        angles.push(k * FRAC_PI_2);
        k += 1.0;
    }
    let (mut re, mut im) = (
        Interval::new(f64::INFINITY, f64::NEG_INFINITY),
        Interval::new(f64::INFINITY, f64::NEG_INFINITY),
    );
    for &th in &angles {
        for r in [rmin, rmax] {
            let (x, y) = (r * th.cos(), r * th.sin());
            re = Interval::new(re.lo.min(x), re.hi.max(x));
            im = Interval::new(im.lo.min(y), im.hi.max(y));
        }
    }
    (re, im)
}

/// Bounds of `conj(S / V)` for S in a rectangle and V in a sector.
pub(crate) fn current_box(p: Interval, q: Interval, vmin: f64, vmax: f64, v_angle: f64, window: f64) -> ComplexBox {
    let corners = [(p.lo, q.lo), (p.lo, q.hi), (p.hi, q.lo), (p.hi, q.hi)];
    let smax = corners.iter().map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    if smax == 0.0 {
        return (Interval::point(0.0), Interval::point(0.0));
    }
    let plain = Interval::new(-smax / vmin, smax / vmin);
    let dx = if p.lo > 0.0 {
        p.lo
    } else if p.hi < 0.0 {
        -p.hi
    } else {
        0.0
    };
    let dy = if q.lo > 0.0 {
        q.lo
    } else if q.hi < 0.0 {
        -q.hi
    } else {
        0.0
    };
    let smin = dx.hypot(dy);
    if smin <= 1e-12 * smax {
        return (plain, plain);
    }
    let reference = (0.5 * (q.lo + q.hi)).atan2(0.5 * (p.lo + p.hi));
    let (mut dlo, mut dhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, b) in corners {
        let mut d = b.atan2(a) - reference;
        while d > PI {
            d -= TAU;
        }
        while d <= -PI {
            d += TAU;
        }
        dlo = dlo.min(d);
        dhi = dhi.max(d);
    }
    let (s_lo, s_hi) = (reference + dlo, reference + dhi);
    let (re, im) = sector_box(
        smin / vmax,
        smax / vmin,
        v_angle - window - s_hi,
        v_angle + window - s_lo,
    );
    (re.intersect(plain), im.intersect(plain))
}

/// Per-unit injection power intervals of a non-PCC bus phase at hour t.
fn injection_interval(net: &Network, profiles: &Profiles, bus: usize, phase: Phase, t: usize) -> (Interval, Interval) {
    let b = &net.buses[bus];
    let base = net.base_kva;
    let (pl, ql) = profiles.load(b.id, phase, t);
    let alpha = if b.flex().is_some() {
        profiles.alpha(b.id, t)
    } else {
        0.0
    };
    let mut p = Interval::new(-pl, -(1.0 - alpha) * pl);
    let mut q = Interval::point(-ql);
    if let Some(pv) = b.pv() {
        if pv.capacity_kw.contains_key(&phase) {
            let pg = profiles.pv(b.id, phase, t);
            let tan = pv_tan(pv.pf_min);
            p = p.add(Interval::point(pg));
            q = q.add(Interval::new(-pg * tan, pg * tan));
        }
    }
    if let Some(bat) = b.battery() {
        let k = 1.0 / b.phases.len() as f64;
        p = p.add(Interval::new(-bat.p_sc_max_kw * k, bat.p_sd_max_kw * k));
    }
    (p.scale(1.0 / base), q.scale(1.0 / base))
}

pub(crate) fn pv_tan(pf: f64) -> f64 {
    (1.0 / (pf * pf) - 1.0).max(0.0).sqrt()
}

pub fn preprocess_bounds(net: &Network, profiles: &Profiles) -> Result<Bounds> {
    let vl = &net.voltage;
    if vl.v_min <= 0.0 {
        return Err(Error::Validation(
            "degenerate voltage band: v_min must be positive".into(),
        ));
    }
    if profiles.horizon != net.horizon {
        return Err(Error::Dimension(format!(
            "profiles cover {} hours, network horizon is {}",
            profiles.horizon, net.horizon
        )));
    }
    let horizon = net.horizon;
    let window = vl.angle_window_deg.to_radians();
    let pcc = net.pcc_index();

    let mut bus_slot = HashMap::new();
    for (k, s) in net.bus_slots().iter().enumerate() {
        bus_slot.insert((s.element, s.phase), k);
    }
    let mut line_slot = HashMap::new();
    for (k, s) in net.line_slots().iter().enumerate() {
        line_slot.insert((s.element, s.phase), k);
    }
    let nb = bus_slot.len();

    let mut v = vec![(Interval::point(0.0), Interval::point(0.0)); nb];
    let mut i = vec![Vec::new(); nb];
    let mut p = vec![Vec::new(); nb];
    let mut q = vec![Vec::new(); nb];
    for s in net.bus_slots() {
        let k = bus_slot[&(s.element, s.phase)];
        let angle = s.phase.nominal_angle_deg().to_radians();
        if s.element == pcc {
            v[k] = (Interval::point(angle.cos()), Interval::point(angle.sin()));
            p[k] = vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY); horizon];
            q[k] = p[k].clone();
            continue;
        }
        v[k] = sector_box(vl.v_min, vl.v_max, angle - window, angle + window);
        for t in 0..horizon {
            let (pi, qi) = injection_interval(net, profiles, s.element, s.phase, t);
            p[k].push(pi);
            q[k].push(qi);
            i[k].push(current_box(pi, qi, vl.v_min, vl.v_max, angle, window));
        }
    }

    let topo = net.topology();
    let mut flow = vec![Vec::new(); line_slot.len()];
    for s in net.line_slots() {
        let line = s.element;
        let (from, to) = net.line_ends(line);
        let (child, sign) = if topo.parent_line[to] == Some(line) {
            (to, -1.0)
        } else {
            (from, 1.0)
        };
        let sub = net.subtree(child);
        for t in 0..horizon {
            let mut re = Interval::point(0.0);
            let mut im = Interval::point(0.0);
            for &b in &sub {
                if let Some(&k) = bus_slot.get(&(b, s.phase)) {
                    re = re.add(i[k][t].0);
                    im = im.add(i[k][t].1);
                }
            }
            flow[line_slot[&(line, s.phase)]].push(if sign < 0.0 { (re.neg(), im.neg()) } else { (re, im) });
        }
    }

    for ph in net.buses[pcc].phases.iter() {
        let k = bus_slot[&(pcc, ph)];
        for t in 0..horizon {
            let mut re = Interval::point(0.0);
            let mut im = Interval::point(0.0);
            for s in net.bus_slots() {
                if s.element != pcc && s.phase == ph {
                    let kk = bus_slot[&(s.element, ph)];
                    re = re.add(i[kk][t].0);
                    im = im.add(i[kk][t].1);
                }
            }
            i[k].push((re.neg(), im.neg()));
        }
    }

    Ok(Bounds {
        horizon,
        bus_slot,
        line_slot,
        v,
        i,
        flow,
        p,
        q,
    })
}
