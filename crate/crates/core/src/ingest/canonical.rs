use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{IngestError, ParseMode, Parsed};
use crate::linalg::invert_complex;
use crate::model::{
    Branch, BranchKind, BranchStatus, Bus, BusKind, Load, NetworkModel, Phase, PhaseMatrix, PhaseSet, ShuntCap,
};

/// Schema version written by [`write_canonical`] and required on input.
pub const CANONICAL_VERSION: u32 = 1;

type Matrix = [[f64; 3]; 3];

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    version: u32,
    base_power: f64,
    buses: Vec<BusDoc>,
    #[serde(default)]
    branches: Vec<BranchDoc>,
    #[serde(default)]
    loads: Vec<LoadDoc>,
    #[serde(default)]
    capacitors: Vec<CapDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BusDoc {
    id: String,
    phases: String,
    nominal_voltage: f64,
    kind: BusKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchDoc {
    #[serde(default)]
    id: Option<String>,
    from: String,
    to: String,
    kind: BranchKind,
    #[serde(default)]
    phases: Option<String>,
    /// Series r/x in ohms, total shunt susceptance in siemens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    impedance: Option<ImpedanceDoc>,
    /// Series and total shunt admittance in siemens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    admittance: Option<AdmittanceDoc>,
    #[serde(default = "unit_tap")]
    tap: f64,
    #[serde(default = "closed")]
    status: BranchStatus,
}

fn unit_tap() -> f64 {
    1.0
}

fn closed() -> BranchStatus {
    BranchStatus::Closed
}

#[derive(Debug, Serialize, Deserialize)]
struct ImpedanceDoc {
    r: Matrix,
    x: Matrix,
    #[serde(default)]
    b: Matrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdmittanceDoc {
    g: Matrix,
    b: Matrix,
    #[serde(default)]
    shunt_g: Matrix,
    #[serde(default)]
    shunt_b: Matrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct LoadDoc {
    #[serde(default)]
    id: Option<String>,
    bus: String,
    #[serde(default)]
    p: [f64; 3],
    #[serde(default)]
    q: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct CapDoc {
    #[serde(default)]
    id: Option<String>,
    bus: String,
    b: [f64; 3],
}

/// Strict parse of a canonical network document.
pub fn parse_canonical(text: &str) -> Result<NetworkModel, IngestError> {
    parse_canonical_with(text, ParseMode::Strict).map(|p| p.network)
}

/// Parses a canonical document. Unknown keys are errors in strict mode and
/// warnings in lenient mode. The result is validated.
pub fn parse_canonical_with(text: &str, mode: ParseMode) -> Result<Parsed, IngestError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: Document = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .map_err(|e| IngestError::syntax(&e))?;
    de.end().map_err(|e| IngestError::syntax(&e))?;
    if mode == ParseMode::Strict && !unknown.is_empty() {
        return Err(IngestError::UnknownKeys(unknown));
    }
    let warnings = unknown.into_iter().map(|k| format!("ignored unknown key '{k}'")).collect();
    let network = from_document(doc)?;
    let violations = network.validate();
    if !violations.is_empty() {
        return Err(IngestError::Invalid(violations));
    }
    Ok(Parsed { network, warnings })
}

fn semantic(element: impl Into<String>, message: impl Into<String>) -> IngestError {
    IngestError::Semantic {
        element: element.into(),
        message: message.into(),
    }
}

fn phases_of(element: &str, text: &str) -> Result<PhaseSet, IngestError> {
    text.parse::<PhaseSet>().map_err(|e| semantic(element, e.to_string()))
}

fn from_document(doc: Document) -> Result<NetworkModel, IngestError> {
    if doc.version != CANONICAL_VERSION {
        return Err(semantic(
            "version",
            format!("unsupported version {} (expected {CANONICAL_VERSION})", doc.version),
        ));
    }
    let mut buses = Vec::with_capacity(doc.buses.len());
    for b in doc.buses {
        let phases = phases_of(&b.id, &b.phases)?;
        buses.push(Bus {
            id: b.id,
            phases,
            nominal_voltage: b.nominal_voltage,
            kind: b.kind,
        });
    }
    let mut branches = Vec::with_capacity(doc.branches.len());
    for (i, br) in doc.branches.into_iter().enumerate() {
        let id = br.id.unwrap_or_else(|| format!("branch{i}"));
        let phases = match &br.phases {
            Some(p) => phases_of(&id, p)?,
            None => {
                let of = |name: &str| buses.iter().find(|b| b.id == name).map(|b| b.phases);
                match (of(&br.from), of(&br.to)) {
                    (Some(f), Some(t)) => f.intersection(t),
                    _ => return Err(semantic(&id, "unknown endpoint bus and no phases given")),
                }
            }
        };
        let (series, shunt) = match (br.impedance, br.admittance) {
            (Some(_), Some(_)) => return Err(semantic(&id, "give either impedance or admittance, not both")),
            (Some(z), None) => impedance_to_admittance(&id, &z, phases)?,
            (None, Some(y)) => (
                PhaseMatrix::from_parts(y.g, y.b),
                PhaseMatrix::from_parts(y.shunt_g, y.shunt_b),
            ),
            (None, None) => match br.kind {
                BranchKind::Switch | BranchKind::Fuse => (
                    PhaseMatrix::diagonal(Complex64::new(Branch::CLOSED_SWITCH_SIEMENS, 0.0), phases),
                    PhaseMatrix::zero(),
                ),
                _ => return Err(semantic(&id, "missing impedance or admittance")),
            },
        };
        branches.push(Branch {
            id,
            from: br.from,
            to: br.to,
            kind: br.kind,
            phases,
            series_admittance: series,
            shunt_admittance: shunt,
            tap_ratio: br.tap,
            status: br.status,
        });
    }
    let loads = doc
        .loads
        .into_iter()
        .enumerate()
        .map(|(i, l)| Load {
            id: l.id.unwrap_or_else(|| format!("load{i}")),
            bus: l.bus,
            p: l.p,
            q: l.q,
        })
        .collect();
    let capacitors = doc
        .capacitors
        .into_iter()
        .enumerate()
        .map(|(i, c)| ShuntCap {
            id: c.id.unwrap_or_else(|| format!("capacitor{i}")),
            bus: c.bus,
            susceptance: c.b,
        })
        .collect();
    Ok(NetworkModel {
        base_power: doc.base_power,
        buses,
        branches,
        loads,
        capacitors,
    })
}

/// Inverts the series impedance over the branch phases.
fn impedance_to_admittance(id: &str, z: &ImpedanceDoc, phases: PhaseSet) -> Result<(PhaseMatrix, PhaseMatrix), IngestError> {
    let present: Vec<Phase> = phases.iter().collect();
    let sub: Vec<Vec<Complex64>> = present
        .iter()
        .map(|&p| {
            present
                .iter()
                .map(|&q| Complex64::new(z.r[p.index()][q.index()], z.x[p.index()][q.index()]))
                .collect()
        })
        .collect();
    if sub.iter().flatten().any(|v| !v.is_finite()) {
        return Err(semantic(id, "non-finite impedance"));
    }
    let inv = invert_complex(&sub).map_err(|_| IngestError::SingularImpedance { branch: id.to_string() })?;
    let mut y = PhaseMatrix::zero();
    for (i, &p) in present.iter().enumerate() {
        for (j, &q) in present.iter().enumerate() {
            y[(p, q)] = inv[i][j];
        }
    }
    let shunt = PhaseMatrix::from_parts([[0.0; 3]; 3], z.b);
    Ok((y, shunt))
}

fn to_document(network: &NetworkModel) -> Document {
    Document {
        version: CANONICAL_VERSION,
        base_power: network.base_power,
        buses: network
            .buses
            .iter()
            .map(|b| BusDoc {
                id: b.id.clone(),
                phases: b.phases.to_string(),
                nominal_voltage: b.nominal_voltage,
                kind: b.kind,
            })
            .collect(),
        branches: network
            .branches
            .iter()
            .map(|b| BranchDoc {
                id: Some(b.id.clone()),
                from: b.from.clone(),
                to: b.to.clone(),
                kind: b.kind,
                phases: Some(b.phases.to_string()),
                impedance: None,
                admittance: Some(AdmittanceDoc {
                    g: b.series_admittance.real_part(),
                    b: b.series_admittance.imag_part(),
                    shunt_g: b.shunt_admittance.real_part(),
                    shunt_b: b.shunt_admittance.imag_part(),
                }),
                tap: b.tap_ratio,
                status: b.status,
            })
            .collect(),
        loads: network
            .loads
            .iter()
            .map(|l| LoadDoc {
                id: Some(l.id.clone()),
                bus: l.bus.clone(),
                p: l.p,
                q: l.q,
            })
            .collect(),
        capacitors: network
            .capacitors
            .iter()
            .map(|c| CapDoc {
                id: Some(c.id.clone()),
                bus: c.bus.clone(),
                b: c.susceptance,
            })
            .collect(),
    }
}

/// Canonical JSON. Branches are written in admittance form so that a parse
/// reproduces the model exactly; floats use shortest round-trip formatting.
pub fn write_canonical(network: &NetworkModel) -> String {
    let mut s = serde_json::to_string_pretty(&to_document(network)).expect("network documents serialize");
    s.push('\n');
    s
}

/// Hex SHA-256 of the canonical serialization.
pub fn fingerprint(network: &NetworkModel) -> String {
    let digest = Sha256::digest(write_canonical(network).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
