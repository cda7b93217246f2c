use num_complex::Complex64;

use tpia_core::model::{Branch, BranchKind, BranchStatus, Bus, BusKind, NetworkModel, PhaseMatrix, PhaseSet, ShuntCap};
use tpia_core::synthetic::{random_radial_feeder, FeederSpec, LV_NOMINAL};

pub fn small_feeder(seed: u64, n_buses: usize) -> NetworkModel {
    random_radial_feeder(
        seed,
        &FeederSpec {
            n_buses,
            ..FeederSpec::default()
        },
    )
}

/// A random feeder decorated with a tapped transformer, a switch, a fuse,
/// capacitors and line charging.
pub fn decorated_network(seed: u64, n_buses: usize, tap: f64, open: bool) -> NetworkModel {
    let mut net = small_feeder(seed, n_buses);
    let abc = PhaseSet::ABC;
    let zt = Complex64::new(0.02, 0.08) * (LV_NOMINAL * LV_NOMINAL * 3.0 / 5.0e6);
    net.buses.push(Bus {
        id: "lv".into(),
        phases: abc,
        nominal_voltage: LV_NOMINAL,
        kind: BusKind::Load,
    });
    net.branches.push(Branch {
        id: "xfmr".into(),
        from: "b0".into(),
        to: "lv".into(),
        kind: BranchKind::Transformer,
        phases: abc,
        series_admittance: PhaseMatrix::diagonal(zt.inv(), abc),
        shunt_admittance: PhaseMatrix::zero(),
        tap_ratio: tap,
        status: BranchStatus::Closed,
    });
    // switch and fuse in parallel, so the tie bus stays energized when the switch is open
    let anchor = net.buses[n_buses - 1].clone();
    net.buses.push(Bus {
        id: "tie".into(),
        kind: BusKind::Load,
        ..anchor.clone()
    });
    let switch_status = if open { BranchStatus::Open } else { BranchStatus::Closed };
    for (id, kind, status) in [
        ("sw", BranchKind::Switch, switch_status),
        ("fu", BranchKind::Fuse, BranchStatus::Closed),
    ] {
        net.branches
            .push(Branch::switching_device(id, anchor.id.clone(), "tie", kind, anchor.phases, status));
    }
    let mut susceptance = [0.0; 3];
    for p in anchor.phases.iter() {
        susceptance[p.index()] = 1e-4 * (1.0 + p.index() as f64) / 3.0;
    }
    net.capacitors.push(ShuntCap {
        id: "cap".into(),
        bus: anchor.id.clone(),
        susceptance,
    });
    let first = &mut net.branches[0];
    let charging = Complex64::new(0.0, 3.3e-6 + seed as f64 * 1e-9);
    first.shunt_admittance = PhaseMatrix::diagonal(charging, first.phases);
    net
}
