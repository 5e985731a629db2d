#!/usr/bin/env python3
"""Writes ieee34-like.json next to this script.

Topology follows the IEEE 34-node test feeder with every node renumbered
1..34 (see NODES). Regulators and the 24.9/4.16 kV transformer are replaced
by short low-impedance lines; everything sits on one voltage base.
"""

import json
import pathlib

# IEEE node name -> bus id used in the dataset.
NODES = [
    800, 802, 806, 808, 810, 812, 814, 850, 816, 818, 820, 822, 824, 826, 828,
    830, 854, 856, 846, 844, 848, 852, 832, 858, 864, 890, 888, 834, 842, 860,
    836, 840, 862, 838,
]
ID = {n: i + 1 for i, n in enumerate(NODES)}

# (from, to, phases, length in feet); length 0 marks a regulator or transformer.
LINES = [
    (800, 802, "abc", 2580), (802, 806, "abc", 1730), (806, 808, "abc", 32230),
    (808, 810, "b", 5804), (808, 812, "abc", 37500), (812, 814, "abc", 29730),
    (814, 850, "abc", 0), (850, 816, "abc", 310), (816, 818, "a", 1710),
    (818, 820, "a", 48150), (820, 822, "a", 13740), (816, 824, "abc", 10210),
    (824, 826, "b", 3030), (824, 828, "abc", 840), (828, 830, "abc", 20440),
    (830, 854, "abc", 520), (854, 856, "b", 23330), (854, 852, "abc", 36830),
    (852, 832, "abc", 0), (832, 888, "abc", 0), (888, 890, "abc", 10560),
    (832, 858, "abc", 4900), (858, 864, "a", 1620), (858, 834, "abc", 5830),
    (834, 842, "abc", 280), (842, 844, "abc", 1350), (844, 846, "abc", 3640),
    (846, 848, "abc", 530), (834, 860, "abc", 2020), (860, 836, "abc", 2680),
    (836, 840, "abc", 860), (836, 862, "abc", 280), (862, 838, "b", 4860),
]

# Distributed loads (kW per phase a, b, c), split evenly between both ends.
DISTRIBUTED = {
    (802, 806): (0, 30, 25), (808, 810): (0, 16, 0), (818, 820): (34, 0, 0),
    (820, 822): (135, 0, 0), (816, 824): (0, 5, 0), (824, 826): (0, 40, 0),
    (824, 828): (0, 0, 4), (828, 830): (7, 0, 0), (854, 856): (0, 4, 0),
    (832, 858): (7, 2, 6), (858, 864): (2, 0, 0), (858, 834): (4, 15, 13),
    (834, 860): (16, 20, 110), (860, 836): (30, 10, 42), (836, 840): (18, 22, 0),
    (862, 838): (0, 28, 0), (842, 844): (9, 0, 0), (844, 846): (0, 25, 20),
    (846, 848): (0, 23, 0),
}
SPOT = {
    860: (20, 20, 20), 840: (9, 9, 9), 844: (135, 135, 135), 848: (20, 20, 20),
    890: (150, 150, 150), 830: (10, 10, 25),
}
# Light residential loads on nodes that carry none in the original feeder.
# Node 850 (regulator output) stays empty, so it is the only bus besides the
# PCC with nothing to dispatch; with the three clusters that leaves 26 agents.
EXTRA = {808: (8, 8, 8), 812: (6, 6, 6), 814: (4, 4, 4), 852: (3, 3, 3)}

COMMERCIAL = {822, 848, 860, 890}

# Hourly shapes, normalised below to a daily mean of 1.
RESIDENTIAL = [0.55, 0.50, 0.48, 0.47, 0.50, 0.60, 0.80, 0.95, 0.90, 0.85, 0.80, 0.80,
               0.80, 0.82, 0.88, 1.00, 1.20, 1.45, 1.65, 1.70, 1.60, 1.35, 1.00, 0.72]
COMMERCIAL_SHAPE = [0.60, 0.58, 0.57, 0.57, 0.60, 0.70, 0.85, 1.05, 1.20, 1.30, 1.35, 1.38,
                    1.38, 1.38, 1.35, 1.30, 1.25, 1.15, 1.00, 0.90, 0.80, 0.72, 0.66, 0.62]
# Residential cooling demand response: share of load that can be shed.
ALPHA_DR = [0.05] * 12 + [0.08, 0.12, 0.16, 0.20, 0.20, 0.20, 0.18, 0.12, 0.08, 0.05, 0.05, 0.05]

# Ohm per mile, IEEE-34 configuration 300 (three-phase) and 302 (single phase).
Z3 = [[(1.3368, 1.3343), (0.2101, 0.5779), (0.2130, 0.5015)],
      [(0.2101, 0.5779), (1.3238, 1.3569), (0.2066, 0.4591)],
      [(0.2130, 0.5015), (0.2066, 0.4591), (1.3294, 1.3471)]]
Z1 = (2.7995, 1.4855)
ZREG = (0.001, 0.002)

BATTERIES = [
    # bus, p_kw, capacity_kwh, b_min_kwh, b0_kwh
    (6, 120.0, 450.0, 45.0, 120.0),
    (19, 200.0, 540.0, 0.0, 400.0),
    (27, 185.0, 800.0, 160.0, 400.0),
]
CLUSTERS = [[3, 4, 5, 6], [19, 20, 21], [26, 27]]


def normalise(shape):
    m = sum(shape) / len(shape)
    return [round(s / m, 6) for s in shape]


def impedance(phases, feet):
    if feet == 0:
        return [[{"re": ZREG[0] if r == c else 0.0, "im": ZREG[1] if r == c else 0.0}
                 for c in range(len(phases))] for r in range(len(phases))]
    miles = feet / 5280.0
    if len(phases) == 1:
        return [[{"re": round(Z1[0] * miles, 6), "im": round(Z1[1] * miles, 6)}]]
    idx = ["abc".index(p) for p in phases]
    return [[{"re": round(Z3[r][c][0] * miles, 6), "im": round(Z3[r][c][1] * miles, 6)}
             for c in idx] for r in idx]


def main():
    phases = {}
    for f, t, ph, _ in LINES:
        for n in (f, t):
            phases.setdefault(n, set()).update(ph)
    load = {n: [0.0, 0.0, 0.0] for n in NODES}
    for (f, t), kw in DISTRIBUTED.items():
        for n in (f, t):
            for k in range(3):
                load[n][k] += kw[k] / 2.0
    for table in (SPOT, EXTRA):
        for n, kw in table.items():
            for k in range(3):
                load[n][k] += kw[k]

    res, com = normalise(RESIDENTIAL), normalise(COMMERCIAL_SHAPE)
    buses, profiles, devices = [], [], []
    for n in NODES:
        bid = ID[n]
        ph = "".join(p for p in "abc" if p in phases[n])
        bus = {"id": bid, "phases": ph, "kind": "residential"}
        if n == 800:
            bus["kind"] = "pcc"
            buses.append(bus)
            continue
        kw = {p: load[n]["abc".index(p)] for p in ph if load[n]["abc".index(p)] > 0}
        if n in COMMERCIAL:
            bus["kind"] = "commercial"
        if kw:
            shape = com if n in COMMERCIAL else res
            pid = f"load-{bid}"
            bus["load"] = pid
            profiles.append({"id": pid, "pf": 0.95,
                             "p_kw": {p: [round(v * s, 4) for s in shape] for p, v in kw.items()}})
            # PV weight tracks the local load; the profile generator rescales
            # all weights to the penetration target.
            devices.append({"bus": bid, "type": "pv",
                            "capacity_kw": {p: round(v, 4) for p, v in kw.items()}, "pf_min": 0.8})
            if n not in COMMERCIAL:
                devices.append({"bus": bid, "type": "flex_load", "alpha_dr": ALPHA_DR})
        buses.append(bus)
    for bid, p_kw, cap, b_min, b0 in BATTERIES:
        devices.append({"bus": bid, "type": "battery", "p_sc_max_kw": p_kw, "p_sd_max_kw": p_kw,
                        "b_max_kwh": cap, "b_min_kwh": b_min, "b0_kwh": b0,
                        "eta_c": 0.95, "eta_d": 0.95, "eta_self": 0.002})

    lines = [{"from": ID[f], "to": ID[t], "phases": ph, "impedance": impedance(ph, ft)}
             for f, t, ph, ft in LINES]
    net = {
        "name": "ieee34-like",
        "base_kva": 1000.0,
        "base_kv_ln": 14.376,
        "horizon": 24,
        "voltage": {"v_min": 0.9, "v_max": 1.1, "angle_window_deg": 10.0},
        "buses": buses,
        "lines": lines,
        "devices": devices,
        "profiles": profiles,
        "clusters": CLUSTERS,
    }
    out = pathlib.Path(__file__).with_name("ieee34-like.json")
    out.write_text(json.dumps(net, indent=1) + "\n")


if __name__ == "__main__":
    main()
