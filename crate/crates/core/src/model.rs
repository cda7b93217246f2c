//! Immutable three-phase feeder description and its validation.
//!
//! Every quantity here is in physical units: volts line-to-neutral, siemens,
//! watts and vars per phase. Conversion to per-unit happens when the network
//! is stamped (see [`PerUnit`]).

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// One conductor of a three-phase circuit. Ordered `A < B < C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    /// Angle of the balanced positive-sequence phasor for this phase, radians.
    pub fn nominal_angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * std::f64::consts::PI / 3.0,
            Phase::C => 2.0 * std::f64::consts::PI / 3.0,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        };
        f.write_str(c)
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Phase::A),
            "B" | "b" => Ok(Phase::B),
            "C" | "c" => Ok(Phase::C),
            other => Err(format!("unknown phase '{other}'")),
        }
    }
}

/// Subset of `{A, B, C}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn empty() -> PhaseSet {
        PhaseSet(0)
    }

    pub fn single(phase: Phase) -> PhaseSet {
        PhaseSet(1 << phase.index())
    }

    pub fn contains(self, phase: Phase) -> bool {
        self.0 & (1 << phase.index()) != 0
    }

    pub fn insert(&mut self, phase: Phase) {
        self.0 |= 1 << phase.index();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersection(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl FromIterator<Phase> for PhaseSet {
    fn from_iter<I: IntoIterator<Item = Phase>>(iter: I) -> Self {
        let mut set = PhaseSet::empty();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseSet({self})")
    }
}

impl FromStr for PhaseSet {
    type Err = String;

    /// Accepts strings such as `"ABC"`, `"AN"` or `"BC"`. The neutral `N` is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = PhaseSet::empty();
        for c in s.trim().chars() {
            match c.to_ascii_uppercase() {
                'A' => set.insert(Phase::A),
                'B' => set.insert(Phase::B),
                'C' => set.insert(Phase::C),
                'N' => {}
                other => return Err(format!("unsupported phase designator '{other}' in \"{s}\"")),
            }
        }
        if set.is_empty() {
            return Err(format!("no phases in \"{s}\""));
        }
        Ok(set)
    }
}

/// 3×3 complex block indexed by phase.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct PhaseMatrix(pub [[Complex64; 3]; 3]);

impl PhaseMatrix {
    pub fn zero() -> PhaseMatrix {
        PhaseMatrix::default()
    }

    /// Diagonal block with `value` on every phase of `phases`.
    pub fn diagonal(value: Complex64, phases: PhaseSet) -> PhaseMatrix {
        let mut m = PhaseMatrix::zero();
        for p in phases.iter() {
            m[(p, p)] = value;
        }
        m
    }

    pub fn from_parts(re: [[f64; 3]; 3], im: [[f64; 3]; 3]) -> PhaseMatrix {
        let mut m = PhaseMatrix::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = Complex64::new(re[i][j], im[i][j]);
            }
        }
        m
    }

    pub fn real_part(&self) -> [[f64; 3]; 3] {
        self.0.map(|row| row.map(|z| z.re))
    }

    pub fn imag_part(&self) -> [[f64; 3]; 3] {
        self.0.map(|row| row.map(|z| z.im))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let tol = rel_tol * self.max_abs().max(1.0);
        (0..3).all(|i| (0..3).all(|j| (self.0[i][j] - self.0[j][i]).norm() <= tol))
    }

    /// True when every row and column outside `phases` is exactly zero.
    pub fn is_confined_to(&self, phases: PhaseSet) -> bool {
        Phase::ALL.iter().all(|&r| {
            Phase::ALL
                .iter()
                .all(|&c| (phases.contains(r) && phases.contains(c)) || self[(r, c)] == Complex64::default())
        })
    }

    pub fn scale(&self, factor: f64) -> PhaseMatrix {
        PhaseMatrix(self.0.map(|row| row.map(|z| z * factor)))
    }
}

impl Index<(Phase, Phase)> for PhaseMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (Phase, Phase)) -> &Complex64 {
        &self.0[r.index()][c.index()]
    }
}

impl IndexMut<(Phase, Phase)> for PhaseMatrix {
    fn index_mut(&mut self, (r, c): (Phase, Phase)) -> &mut Complex64 {
        &mut self.0[r.index()][c.index()]
    }
}

impl Add for PhaseMatrix {
    type Output = PhaseMatrix;
    fn add(self, rhs: PhaseMatrix) -> PhaseMatrix {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

impl Mul<f64> for PhaseMatrix {
    type Output = PhaseMatrix;
    fn mul(self, rhs: f64) -> PhaseMatrix {
        self.scale(rhs)
    }
}

impl fmt::Debug for PhaseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    /// Line-to-neutral volts.
    pub nominal_voltage: f64,
    pub kind: BusKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
    Switch,
    Fuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    Closed,
    Open,
}

/// Two-terminal series element with an optional pi-model shunt.
///
/// For transformers the series admittance is referred to the `to` side and the
/// off-nominal tap sits on the `from` side (grounded-wye/grounded-wye only).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: BranchKind,
    pub phases: PhaseSet,
    /// Siemens.
    pub series_admittance: PhaseMatrix,
    /// Total shunt admittance in siemens, split equally between both ends.
    pub shunt_admittance: PhaseMatrix,
    pub tap_ratio: f64,
    pub status: BranchStatus,
}

impl Branch {
    /// Diagonal admittance standing in for a closed switch or fuse.
    pub const CLOSED_SWITCH_SIEMENS: f64 = 1e6;

    pub fn line(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        phases: PhaseSet,
        series_admittance: PhaseMatrix,
        shunt_admittance: PhaseMatrix,
    ) -> Branch {
        Branch {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind: BranchKind::Line,
            phases,
            series_admittance,
            shunt_admittance,
            tap_ratio: 1.0,
            status: BranchStatus::Closed,
        }
    }

    /// Switch or fuse: ideal large admittance when closed.
    pub fn switching_device(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        kind: BranchKind,
        phases: PhaseSet,
        status: BranchStatus,
    ) -> Branch {
        Branch {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind,
            phases,
            series_admittance: PhaseMatrix::diagonal(Complex64::new(Self::CLOSED_SWITCH_SIEMENS, 0.0), phases),
            shunt_admittance: PhaseMatrix::zero(),
            tap_ratio: 1.0,
            status,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.status == BranchStatus::Closed
    }
}

/// Constant-PQ wye load. Per-phase watts and vars indexed by [`Phase::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub id: String,
    pub bus: String,
    pub p: [f64; 3],
    pub q: [f64; 3],
}

impl Load {
    pub fn power(&self, phase: Phase) -> Complex64 {
        Complex64::new(self.p[phase.index()], self.q[phase.index()])
    }
}

/// Shunt capacitor bank; per-phase susceptance in siemens.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuntCap {
    pub id: String,
    pub bus: String,
    pub susceptance: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    /// Per-phase VA base used for per-unit scaling.
    pub base_power: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub capacitors: Vec<ShuntCap>,
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub element: String,
    pub reason: String,
}

impl Violation {
    fn new(element: impl Into<String>, reason: impl Into<String>) -> Violation {
        Violation {
            element: element.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.reason)
    }
}

/// `(bus id, phase) -> reachable from the slack bus`.
pub type ReachabilityMap = BTreeMap<(String, Phase), bool>;

impl NetworkModel {
    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.kind == BusKind::Slack)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn connectivity(&self) -> ReachabilityMap {
        connectivity_check(self)
    }

    /// Copy with every load multiplied by `factor`.
    pub fn with_load_scale(&self, factor: f64) -> NetworkModel {
        let mut out = self.clone();
        for load in &mut out.loads {
            for v in load.p.iter_mut().chain(load.q.iter_mut()) {
                *v *= factor;
            }
        }
        out
    }

    pub fn total_load(&self) -> Complex64 {
        self.loads
            .iter()
            .flat_map(|l| Phase::ALL.map(|p| l.power(p)))
            .sum()
    }
}

/// Per-unit scaling. The per-phase power base is shared; voltage bases are the
/// per-bus nominal line-to-neutral voltages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnit {
    pub base_power: f64,
}

impl PerUnit {
    pub fn new(base_power: f64) -> PerUnit {
        PerUnit { base_power }
    }

    pub fn current_base(&self, voltage_base: f64) -> f64 {
        self.base_power / voltage_base
    }

    pub fn impedance_base(&self, voltage_base: f64) -> f64 {
        voltage_base * voltage_base / self.base_power
    }

    pub fn power_to_pu(&self, s: Complex64) -> Complex64 {
        s / self.base_power
    }

    pub fn power_from_pu(&self, s: Complex64) -> Complex64 {
        s * self.base_power
    }

    pub fn voltage_to_pu(&self, v: Complex64, voltage_base: f64) -> Complex64 {
        v / voltage_base
    }

    pub fn voltage_from_pu(&self, v: Complex64, voltage_base: f64) -> Complex64 {
        v * voltage_base
    }

    pub fn current_to_pu(&self, i: Complex64, voltage_base: f64) -> Complex64 {
        i / self.current_base(voltage_base)
    }

    pub fn current_from_pu(&self, i: Complex64, voltage_base: f64) -> Complex64 {
        i * self.current_base(voltage_base)
    }

    /// Admittance between two nodes with (possibly different) voltage bases.
    pub fn admittance_to_pu(&self, y: Complex64, v_base_from: f64, v_base_to: f64) -> Complex64 {
        y * (v_base_from * v_base_to / self.base_power)
    }

    pub fn admittance_from_pu(&self, y: Complex64, v_base_from: f64, v_base_to: f64) -> Complex64 {
        y * (self.base_power / (v_base_from * v_base_to))
    }
}

/// Collects every invariant violation. Never mutates the network.
pub fn validate(network: &NetworkModel) -> Vec<Violation> {
    let mut out = Vec::new();

    if !(network.base_power.is_finite() && network.base_power > 0.0) {
        out.push(Violation::new("network", "base_power must be positive and finite"));
    }

    let mut seen = HashSet::new();
    for bus in &network.buses {
        if !seen.insert(bus.id.as_str()) {
            out.push(Violation::new(&bus.id, "duplicate bus id"));
        }
        if bus.phases.is_empty() {
            out.push(Violation::new(&bus.id, "bus has no phases"));
        }
        if !(bus.nominal_voltage.is_finite() && bus.nominal_voltage > 0.0) {
            out.push(Violation::new(&bus.id, "nominal_voltage must be positive and finite"));
        }
    }

    let slacks: Vec<&Bus> = network.buses.iter().filter(|b| b.kind == BusKind::Slack).collect();
    match slacks.len() {
        0 => out.push(Violation::new("network", "no slack bus")),
        1 => {
            if slacks[0].phases != PhaseSet::ABC {
                out.push(Violation::new(&slacks[0].id, "slack bus must carry phases A, B and C"));
            }
        }
        _ => out.push(Violation::new(
            "network",
            format!(
                "multiple slack buses: {}",
                slacks.iter().map(|b| b.id.as_str()).collect::<Vec<_>>().join(", ")
            ),
        )),
    }

    let buses: HashMap<&str, &Bus> = network.buses.iter().map(|b| (b.id.as_str(), b)).collect();

    let mut branch_ids = HashSet::new();
    for br in &network.branches {
        if !branch_ids.insert(br.id.as_str()) {
            out.push(Violation::new(&br.id, "duplicate branch id"));
        }
        let from = buses.get(br.from.as_str());
        let to = buses.get(br.to.as_str());
        if from.is_none() {
            out.push(Violation::new(&br.id, format!("unknown from bus '{}'", br.from)));
        }
        if to.is_none() {
            out.push(Violation::new(&br.id, format!("unknown to bus '{}'", br.to)));
        }
        if br.from == br.to {
            out.push(Violation::new(&br.id, "branch connects a bus to itself"));
        }
        if br.phases.is_empty() {
            out.push(Violation::new(&br.id, "branch has no phases"));
        }
        if let (Some(f), Some(t)) = (from, to) {
            if !br.phases.is_subset(f.phases) || !br.phases.is_subset(t.phases) {
                out.push(Violation::new(
                    &br.id,
                    format!(
                        "branch phases {} not present at both terminals ({}: {}, {}: {})",
                        br.phases, f.id, f.phases, t.id, t.phases
                    ),
                ));
            }
        }
        for (name, m) in [("series", &br.series_admittance), ("shunt", &br.shunt_admittance)] {
            if !m.is_finite() {
                out.push(Violation::new(&br.id, format!("{name} admittance has non-finite entries")));
                continue;
            }
            if !m.is_confined_to(br.phases) {
                out.push(Violation::new(
                    &br.id,
                    format!("{name} admittance has entries outside phases {}", br.phases),
                ));
            }
            if !m.is_symmetric(1e-9) {
                out.push(Violation::new(&br.id, format!("{name} admittance is not symmetric")));
            }
        }
        if !(br.tap_ratio.is_finite() && br.tap_ratio > 0.0) {
            out.push(Violation::new(&br.id, "tap_ratio must be positive and finite"));
        } else if br.kind != BranchKind::Transformer && br.tap_ratio != 1.0 {
            out.push(Violation::new(&br.id, "only transformers may have an off-nominal tap"));
        }
    }

    for load in &network.loads {
        match buses.get(load.bus.as_str()) {
            None => out.push(Violation::new(&load.id, format!("unknown bus '{}'", load.bus))),
            Some(bus) => {
                for p in Phase::ALL {
                    let s = load.power(p);
                    if !(s.re.is_finite() && s.im.is_finite()) {
                        out.push(Violation::new(&load.id, format!("non-finite power on phase {p}")));
                    } else if s != Complex64::default() && !bus.phases.contains(p) {
                        out.push(Violation::new(
                            &load.id,
                            format!("load on phase {p} but bus '{}' only has phases {}", bus.id, bus.phases),
                        ));
                    }
                }
            }
        }
    }

    for cap in &network.capacitors {
        match buses.get(cap.bus.as_str()) {
            None => out.push(Violation::new(&cap.id, format!("unknown bus '{}'", cap.bus))),
            Some(bus) => {
                for p in Phase::ALL {
                    let b = cap.susceptance[p.index()];
                    if !(b.is_finite() && b >= 0.0) {
                        out.push(Violation::new(&cap.id, format!("susceptance on phase {p} must be >= 0")));
                    } else if b != 0.0 && !bus.phases.contains(p) {
                        out.push(Violation::new(
                            &cap.id,
                            format!("capacitor on phase {p} but bus '{}' only has phases {}", bus.id, bus.phases),
                        ));
                    }
                }
            }
        }
    }

    // Reachability is only meaningful once the topology references resolve.
    if slacks.len() == 1 && out.iter().all(|v| !v.reason.starts_with("unknown")) {
        for ((bus, phase), ok) in connectivity_check(network) {
            if !ok {
                out.push(Violation::new(bus, format!("phase {phase} not reachable from the slack bus")));
            }
        }
    }

    out
}

/// Per-phase breadth-first search from the slack bus over closed branches.
pub fn connectivity_check(network: &NetworkModel) -> ReachabilityMap {
    let index: HashMap<&str, usize> = network
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let n = network.buses.len();
    let mut adjacency: Vec<Vec<(usize, PhaseSet)>> = vec![Vec::new(); n];
    for br in network.branches.iter().filter(|b| b.is_closed()) {
        if let (Some(&f), Some(&t)) = (index.get(br.from.as_str()), index.get(br.to.as_str())) {
            adjacency[f].push((t, br.phases));
            adjacency[t].push((f, br.phases));
        }
    }

    let slack = network.buses.iter().position(|b| b.kind == BusKind::Slack);
    let mut map = ReachabilityMap::new();
    for phase in Phase::ALL {
        let mut reached = vec![false; n];
        if let Some(s) = slack.filter(|&s| network.buses[s].phases.contains(phase)) {
            let mut queue = VecDeque::from([s]);
            reached[s] = true;
            while let Some(u) = queue.pop_front() {
                for &(v, phases) in &adjacency[u] {
                    if phases.contains(phase) && network.buses[v].phases.contains(phase) && !reached[v] {
                        reached[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        for (i, bus) in network.buses.iter().enumerate() {
            if bus.phases.contains(phase) {
                map.insert((bus.id.clone(), phase), reached[i]);
            }
        }
    }
    map
}
