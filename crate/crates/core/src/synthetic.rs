//! Seeded synthetic feeders for tests, benchmarks and demos.
//!
//! All generators are deterministic in their seed. Voltages are 12.47 kV
//! line-to-line at the substation; line impedances come from a typical
//! overhead configuration in ohms per mile.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::invert_complex;
use crate::model::{Branch, BranchKind, BranchStatus, Bus, BusKind, Load, NetworkModel, Phase, PhaseMatrix, PhaseSet};

/// 12.47 kV line-to-neutral.
pub const MV_NOMINAL: f64 = 12_470.0 / 1.732_050_807_568_877_2;
/// 4.16 kV line-to-neutral.
pub const LV_NOMINAL: f64 = 4_160.0 / 1.732_050_807_568_877_2;

const FEET_PER_MILE: f64 = 5280.0;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Transposed overhead line, ohms per mile: equal self and mutual terms.
pub fn balanced_impedance_per_mile() -> PhaseMatrix {
    let s = c(0.4576, 1.0780);
    let m = c(0.1560, 0.5017);
    PhaseMatrix([[s, m, m], [m, s, m], [m, m, s]])
}

/// Untransposed overhead line, ohms per mile.
pub fn unbalanced_impedance_per_mile() -> PhaseMatrix {
    let z11 = c(0.4576, 1.0780);
    let z12 = c(0.1560, 0.5017);
    let z13 = c(0.1535, 0.3849);
    let z22 = c(0.4666, 1.0482);
    let z23 = c(0.1580, 0.4236);
    let z33 = c(0.4615, 1.0651);
    PhaseMatrix([[z11, z12, z13], [z12, z22, z23], [z13, z23, z33]])
}

/// Series admittance (siemens) of `length_ft` of line restricted to `phases`.
pub fn line_admittance(z_per_mile: &PhaseMatrix, length_ft: f64, phases: PhaseSet) -> PhaseMatrix {
    let present: Vec<Phase> = phases.iter().collect();
    let scale = length_ft / FEET_PER_MILE;
    let sub: Vec<Vec<Complex64>> = present
        .iter()
        .map(|&p| present.iter().map(|&q| z_per_mile[(p, q)] * scale).collect())
        .collect();
    let inv = invert_complex(&sub).expect("line impedance is nonsingular");
    let mut y = PhaseMatrix::zero();
    for (i, &p) in present.iter().enumerate() {
        for (j, &q) in present.iter().enumerate() {
            y[(p, q)] = inv[i][j];
        }
    }
    y
}

fn bus(id: &str, phases: PhaseSet, nominal: f64, kind: BusKind) -> Bus {
    Bus {
        id: id.to_string(),
        phases,
        nominal_voltage: nominal,
        kind,
    }
}

/// Slack bus feeding one phase-A load through a conductance `g` (per-unit
/// on a 1 V, 1 VA base), with real demand `p`.
pub fn two_bus_analog(p: f64, g: f64) -> NetworkModel {
    let a = PhaseSet::single(Phase::A);
    NetworkModel {
        base_power: 1.0,
        buses: vec![bus("src", PhaseSet::ABC, 1.0, BusKind::Slack), bus("load", a, 1.0, BusKind::Load)],
        branches: vec![Branch::line(
            "line",
            "src",
            "load",
            a,
            PhaseMatrix::diagonal(c(g, 0.0), a),
            PhaseMatrix::zero(),
        )],
        loads: vec![Load {
            id: "demand".into(),
            bus: "load".into(),
            p: [p, 0.0, 0.0],
            q: [0.0; 3],
        }],
        capacitors: vec![],
    }
}

/// Four buses: source, 2000 ft of line, a 12.47/4.16 kV grounded-wye
/// transformer, 2500 ft of line and a balanced `p_kw` / `q_kvar` per-phase load.
pub fn four_bus_with_load(p_kw: f64, q_kvar: f64) -> NetworkModel {
    let abc = PhaseSet::ABC;
    let z = balanced_impedance_per_mile();
    // 6 MVA, 1 + 6j % on its own base, referred to the secondary
    let z_base = 4_160.0f64.powi(2) / 6.0e6;
    let zt = c(0.01, 0.06) * z_base;
    let transformer = Branch {
        id: "t1".into(),
        from: "n2".into(),
        to: "n3".into(),
        kind: BranchKind::Transformer,
        phases: abc,
        series_admittance: PhaseMatrix::diagonal(zt.inv(), abc),
        shunt_admittance: PhaseMatrix::zero(),
        tap_ratio: 1.0,
        status: BranchStatus::Closed,
    };
    NetworkModel {
        base_power: 1.0e6,
        buses: vec![
            bus("n1", abc, MV_NOMINAL, BusKind::Slack),
            bus("n2", abc, MV_NOMINAL, BusKind::Load),
            bus("n3", abc, LV_NOMINAL, BusKind::Load),
            bus("n4", abc, LV_NOMINAL, BusKind::Load),
        ],
        branches: vec![
            Branch::line("l12", "n1", "n2", abc, line_admittance(&z, 2000.0, abc), PhaseMatrix::zero()),
            transformer,
            Branch::line("l34", "n3", "n4", abc, line_admittance(&z, 2500.0, abc), PhaseMatrix::zero()),
        ],
        loads: vec![Load {
            id: "load4".into(),
            bus: "n4".into(),
            p: [p_kw * 1e3; 3],
            q: [q_kvar * 1e3; 3],
        }],
        capacitors: vec![],
    }
}

/// Balanced four-bus feeder at a moderate 1.2 MW, 0.9 pf per phase.
pub fn four_bus_feeder() -> NetworkModel {
    four_bus_with_load(1200.0, 581.0)
}

/// Shape of a random radial feeder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeederSpec {
    pub n_buses: usize,
    /// Per-phase load range in kW.
    pub load_kw: (f64, f64),
    /// Section length range in feet.
    pub length_ft: (f64, f64),
    /// Chance that a bus off the trunk drops to fewer phases than its parent.
    pub lateral_probability: f64,
    /// Chance that a new bus extends the most recent one instead of hanging
    /// off a uniformly chosen earlier bus.
    pub trunk_probability: f64,
}

impl Default for FeederSpec {
    fn default() -> Self {
        FeederSpec {
            n_buses: 30,
            load_kw: (20.0, 120.0),
            length_ft: (1000.0, 6000.0),
            lateral_probability: 0.3,
            trunk_probability: 0.0,
        }
    }
}

/// Random tree rooted at a three-phase slack bus. Each new bus extends the
/// previous one with `trunk_probability`, otherwise hangs off a uniformly
/// chosen earlier bus; it keeps its parent's phases or, with
/// `lateral_probability`, a random nonempty subset of them. Every non-slack
/// bus carries a load on each of its phases at a power factor in [0.9, 0.98].
pub fn random_radial_feeder(seed: u64, spec: &FeederSpec) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = unbalanced_impedance_per_mile();
    let n = spec.n_buses.max(2);
    let mut buses = vec![bus("b0", PhaseSet::ABC, MV_NOMINAL, BusKind::Slack)];
    let mut branches = Vec::with_capacity(n - 1);
    let mut loads = Vec::with_capacity(n - 1);
    for i in 1..n {
        let parent = if spec.trunk_probability > 0.0 && rng.random_bool(spec.trunk_probability) {
            i - 1
        } else {
            rng.random_range(0..i)
        };
        let parent_phases = buses[parent].phases;
        let phases = if parent_phases.len() > 1 && rng.random_bool(spec.lateral_probability) {
            random_subset(&mut rng, parent_phases)
        } else {
            parent_phases
        };
        let id = format!("b{i}");
        buses.push(bus(&id, phases, MV_NOMINAL, BusKind::Load));
        let length = rng.random_range(spec.length_ft.0..=spec.length_ft.1);
        branches.push(Branch::line(
            format!("l{i}"),
            buses[parent].id.clone(),
            id.clone(),
            phases,
            line_admittance(&z, length, phases),
            PhaseMatrix::zero(),
        ));
        let mut p = [0.0; 3];
        let mut q = [0.0; 3];
        for ph in phases.iter() {
            let kw = rng.random_range(spec.load_kw.0..=spec.load_kw.1);
            let pf: f64 = rng.random_range(0.9..=0.98);
            p[ph.index()] = kw * 1e3;
            q[ph.index()] = kw * 1e3 * (1.0 - pf * pf).sqrt() / pf;
        }
        loads.push(Load {
            id: format!("d{i}"),
            bus: id,
            p,
            q,
        });
    }
    NetworkModel {
        base_power: 1.0e6,
        buses,
        branches,
        loads,
        capacitors: vec![],
    }
}

fn random_subset(rng: &mut ChaCha8Rng, of: PhaseSet) -> PhaseSet {
    let phases: Vec<Phase> = of.iter().collect();
    loop {
        let pick: PhaseSet = phases.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        if !pick.is_empty() && pick != of {
            return pick;
        }
    }
}

/// Random feeder of 20 to 50 buses whose total demand is multiplied by
/// `factor`; large factors push it past its loadability limit.
pub fn overloaded_feeder(seed: u64, factor: f64) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let spec = FeederSpec {
        n_buses: rng.random_range(20..=50),
        ..FeederSpec::default()
    };
    random_radial_feeder(seed, &spec).with_load_scale(factor)
}

/// Three-phase feeder with a long trunk plus a single-phase lateral of
/// `lateral_len` 5000 ft sections at the electrically farthest bus, whose end
/// load `lateral_kw` exceeds what the lateral can carry. Returns the network
/// and the id of the overloaded bus.
pub fn overloaded_lateral_feeder(seed: u64, n_buses: usize, lateral_len: usize, lateral_kw: f64) -> (NetworkModel, String) {
    let spec = FeederSpec {
        n_buses,
        lateral_probability: 0.0,
        trunk_probability: 0.8,
        ..FeederSpec::default()
    };
    let mut net = random_radial_feeder(seed, &spec);
    let z = unbalanced_impedance_per_mile();
    let a = PhaseSet::single(Phase::A);
    // hang the lateral off the bus electrically farthest from the source
    let mut reach: HashMap<&str, f64> = HashMap::from([(net.buses[0].id.as_str(), 0.0)]);
    for br in &net.branches {
        let d = reach[br.from.as_str()] + 1.0 / br.series_admittance[(Phase::A, Phase::A)].norm();
        reach.insert(br.to.as_str(), d);
    }
    let mut parent = net
        .buses
        .iter()
        .max_by(|x, y| reach[x.id.as_str()].total_cmp(&reach[y.id.as_str()]))
        .map(|b| b.id.clone())
        .expect("feeder has buses");
    for j in 0..lateral_len {
        let id = format!("x{j}");
        net.buses.push(bus(&id, a, MV_NOMINAL, BusKind::Load));
        net.branches.push(Branch::line(
            format!("lx{j}"),
            parent,
            id.clone(),
            a,
            line_admittance(&z, 5000.0, a),
            PhaseMatrix::zero(),
        ));
        parent = id;
    }
    net.loads.push(Load {
        id: "dx".into(),
        bus: parent.clone(),
        p: [lateral_kw * 1e3, 0.0, 0.0],
        q: [lateral_kw * 1e3 * 0.3, 0.0, 0.0],
    });
    (net, parent)
}
