//! Importer for a small subset of the GridLAB-D model language.
//!
//! Supported objects: `node`, `load`, `overhead_line`, `underground_line`,
//! `transformer`, `switch`, `line_configuration` (explicit `z11`..`z33` in
//! Ω/mile and optional `c11`..`c33` in nF/mile) and
//! `transformer_configuration` (`WYE_WYE` only). `module` and `clock`
//! blocks and `#set`/`#define` directives are skipped with a warning;
//! everything else is an error.

use std::collections::{HashMap, HashSet};

use num_complex::Complex64;

use super::{IngestError, Parsed};
use crate::linalg::invert_complex;
use crate::model::{
    Branch, BranchKind, BranchStatus, Bus, BusKind, Load, NetworkModel, Phase, PhaseMatrix, PhaseSet,
};

/// Per-phase VA base assigned to imported networks.
pub const GLM_BASE_POWER: f64 = 1.0e6;

const FEET_PER_MILE: f64 = 5280.0;
const SYSTEM_FREQUENCY: f64 = 60.0;

const SUPPORTED: [&str; 8] = [
    "node",
    "load",
    "overhead_line",
    "underground_line",
    "transformer",
    "switch",
    "line_configuration",
    "transformer_configuration",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Open,
    Close,
    Semi,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
}

fn err(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Glm {
        line,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, IngestError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '/' => {
                chars.next();
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        chars.next();
                    }
                } else {
                    out.push(Token {
                        tok: Tok::Word("/".into()),
                        line,
                    });
                }
            }
            '{' => {
                chars.next();
                out.push(Token { tok: Tok::Open, line });
            }
            '}' => {
                chars.next();
                out.push(Token { tok: Tok::Close, line });
            }
            ';' => {
                chars.next();
                out.push(Token { tok: Tok::Semi, line });
            }
            '"' | '\'' => {
                let quote = c;
                chars.next();
                let start = line;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some(ch) if ch == quote => break,
                        Some('\n') => {
                            line += 1;
                            s.push('\n');
                        }
                        Some(ch) => s.push(ch),
                        None => return Err(err(start, "unterminated string")),
                    }
                }
                out.push(Token {
                    tok: Tok::Str(s),
                    line: start,
                });
            }
            '#' => {
                // directive: whole line
                let mut s = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch == '\n' {
                        break;
                    }
                    s.push(ch);
                    chars.next();
                }
                out.push(Token {
                    tok: Tok::Word(s),
                    line,
                });
            }
            _ => {
                let mut s = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || matches!(ch, '{' | '}' | ';' | '"' | '\'') {
                        break;
                    }
                    if ch == '/' {
                        let mut ahead = chars.clone();
                        ahead.next();
                        if ahead.peek() == Some(&'/') {
                            break;
                        }
                    }
                    s.push(ch);
                    chars.next();
                }
                out.push(Token {
                    tok: Tok::Word(s),
                    line,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Object {
    kind: String,
    name: String,
    line: usize,
    props: Vec<(String, String, usize)>,
}

impl Object {
    fn get(&self, key: &str) -> Option<&str> {
        self.props.iter().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, IngestError> {
        self.get(key)
            .ok_or_else(|| err(self.line, format!("{} '{}' is missing '{key}'", self.kind, self.name)))
    }

    fn line_of(&self, key: &str) -> usize {
        self.props
            .iter()
            .find(|(k, _, _)| k == key)
            .map_or(self.line, |(_, _, l)| *l)
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    warnings: Vec<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn last_line(&self) -> usize {
        self.toks.last().map_or(1, |t| t.line)
    }

    fn skip_block(&mut self, line: usize) -> Result<(), IngestError> {
        let mut depth = 0usize;
        loop {
            match self.next() {
                Some(Token { tok: Tok::Open, .. }) => depth += 1,
                Some(Token { tok: Tok::Close, .. }) => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        if matches!(self.peek(), Some(Token { tok: Tok::Semi, .. })) {
                            self.pos += 1;
                        }
                        return Ok(());
                    }
                }
                Some(Token { tok: Tok::Semi, .. }) if depth == 0 => return Ok(()),
                Some(_) => {}
                None => return Err(err(line, "unterminated block")),
            }
        }
    }

    fn objects(&mut self) -> Result<Vec<Object>, IngestError> {
        let mut out = Vec::new();
        while let Some(t) = self.next() {
            let line = t.line;
            match t.tok {
                Tok::Semi => {}
                Tok::Word(w) if w.starts_with('#') => {
                    let directive = w.split_whitespace().next().unwrap_or("#");
                    match directive {
                        "#set" | "#define" => self.warnings.push(format!("line {line}: ignored directive '{w}'")),
                        _ => return Err(err(line, format!("unsupported construct: directive '{directive}'"))),
                    }
                }
                Tok::Word(w) if w == "module" || w == "clock" => {
                    self.warnings.push(format!("line {line}: ignored '{w}' block"));
                    self.skip_block(line)?;
                }
                Tok::Word(w) if w == "object" => out.push(self.object(line)?),
                Tok::Word(w) => return Err(err(line, format!("unsupported construct: '{w}'"))),
                Tok::Str(s) => return Err(err(line, format!("unexpected string \"{s}\""))),
                Tok::Open | Tok::Close => return Err(err(line, "unexpected brace")),
            }
        }
        Ok(out)
    }

    fn object(&mut self, line: usize) -> Result<Object, IngestError> {
        let head = match self.next() {
            Some(Token { tok: Tok::Word(w), .. }) => w,
            _ => return Err(err(line, "expected object type after 'object'")),
        };
        let (kind, id) = match head.split_once(':') {
            Some((k, id)) => (k.to_string(), Some(id.to_string())),
            None => (head.clone(), None),
        };
        if !SUPPORTED.contains(&kind.as_str()) {
            return Err(err(line, format!("unsupported construct: object type '{kind}'")));
        }
        match self.next() {
            Some(Token { tok: Tok::Open, .. }) => {}
            _ => return Err(err(line, format!("expected '{{' after 'object {head}'"))),
        }
        let mut props = Vec::new();
        loop {
            let t = self.next().ok_or_else(|| err(line, format!("object '{head}' is not closed")))?;
            let key_line = t.line;
            let key = match t.tok {
                Tok::Close => break,
                Tok::Semi => continue,
                Tok::Word(w) if w == "object" => {
                    return Err(err(key_line, "unsupported construct: nested object"));
                }
                Tok::Word(w) => w,
                Tok::Str(_) | Tok::Open => return Err(err(key_line, "expected a property name")),
            };
            let mut parts = Vec::new();
            loop {
                match self.next() {
                    Some(Token { tok: Tok::Semi, .. }) => break,
                    Some(Token { tok: Tok::Word(w), line }) => {
                        if w == "object" {
                            return Err(err(line, "unsupported construct: nested object"));
                        }
                        parts.push(w);
                    }
                    Some(Token { tok: Tok::Str(s), .. }) => parts.push(s),
                    Some(Token { tok: Tok::Open, line }) => {
                        return Err(err(line, "unsupported construct: nested block"));
                    }
                    Some(Token { tok: Tok::Close, line }) => {
                        return Err(err(line, format!("property '{key}' is missing ';'")));
                    }
                    None => return Err(err(self.last_line(), format!("property '{key}' is missing ';'"))),
                }
            }
            if parts.is_empty() {
                return Err(err(key_line, format!("property '{key}' has no value")));
            }
            props.push((key, parts.join(" "), key_line));
        }
        if matches!(self.peek(), Some(Token { tok: Tok::Semi, .. })) {
            self.pos += 1;
        }
        let mut obj = Object {
            kind,
            name: String::new(),
            line,
            props,
        };
        obj.name = match (obj.get("name"), id) {
            (Some(n), _) => n.to_string(),
            // referenced as `type:id`
            (None, Some(_)) => head,
            (None, None) => return Err(err(line, format!("object '{}' has no name", obj.kind))),
        };
        Ok(obj)
    }
}

/// Parses a real number with an optional unit suffix (`"2000 ft"`).
fn number(text: &str, line: usize) -> Result<(f64, String), IngestError> {
    let mut parts = text.split_whitespace();
    let v = parts.next().unwrap_or("");
    let unit = parts.collect::<Vec<_>>().join(" ");
    let x: f64 = v.parse().map_err(|_| err(line, format!("expected a number, got '{text}'")))?;
    if !x.is_finite() {
        return Err(err(line, format!("non-finite number '{text}'")));
    }
    Ok((x, unit))
}

/// Parses `a`, `bj`, `a+bj` or `a-bj`, with an optional unit suffix.
fn complex(text: &str, line: usize) -> Result<(Complex64, String), IngestError> {
    let mut parts = text.split_whitespace();
    let v = parts.next().unwrap_or("");
    let unit = parts.collect::<Vec<_>>().join(" ");
    let bad = || err(line, format!("expected a complex number, got '{text}'"));
    let value = if let Some(body) = v.strip_suffix(['j', 'i']) {
        // split at the last sign that is not an exponent sign or the leading one
        let chars: Vec<(usize, char)> = body.char_indices().collect();
        let mut split = None;
        for w in (1..chars.len()).rev() {
            let (idx, ch) = chars[w];
            let prev = chars[w - 1].1;
            if (ch == '+' || ch == '-') && prev != 'e' && prev != 'E' {
                split = Some(idx);
                break;
            }
        }
        match split {
            Some(idx) => {
                let re: f64 = body[..idx].parse().map_err(|_| bad())?;
                let im_text = &body[idx..];
                let im: f64 = match im_text {
                    "+" => 1.0,
                    "-" => -1.0,
                    t => t.parse().map_err(|_| bad())?,
                };
                Complex64::new(re, im)
            }
            None => {
                let im: f64 = match body {
                    "" | "+" => 1.0,
                    "-" => -1.0,
                    t => t.parse().map_err(|_| bad())?,
                };
                Complex64::new(0.0, im)
            }
        }
    } else {
        Complex64::new(v.parse().map_err(|_| bad())?, 0.0)
    };
    if !value.is_finite() {
        return Err(bad());
    }
    Ok((value, unit))
}

fn phases(obj: &Object) -> Result<PhaseSet, IngestError> {
    let text = obj.require("phases")?;
    text.parse::<PhaseSet>()
        .map_err(|e| err(obj.line_of("phases"), format!("{} '{}': {e}", obj.kind, obj.name)))
}

fn length_ft(obj: &Object) -> Result<f64, IngestError> {
    let line = obj.line_of("length");
    let (x, unit) = number(obj.require("length")?, line)?;
    let factor = match unit.as_str() {
        "" | "ft" => 1.0,
        "mile" | "mi" => FEET_PER_MILE,
        "m" => 3.280_839_895,
        "km" => 3_280.839_895,
        u => return Err(err(line, format!("unsupported length unit '{u}'"))),
    };
    let ft = x * factor;
    if !(ft > 0.0) {
        return Err(err(line, format!("{} '{}' has nonpositive length", obj.kind, obj.name)));
    }
    Ok(ft)
}

fn power_scale(unit: &str, line: usize) -> Result<f64, IngestError> {
    match unit {
        "" | "VA" | "W" => Ok(1.0),
        "kVA" | "kW" => Ok(1e3),
        "MVA" | "MW" => Ok(1e6),
        u => Err(err(line, format!("unsupported power unit '{u}'"))),
    }
}

fn voltage_scale(unit: &str, line: usize) -> Result<f64, IngestError> {
    match unit {
        "" | "V" => Ok(1.0),
        "kV" => Ok(1e3),
        u => Err(err(line, format!("unsupported voltage unit '{u}'"))),
    }
}

const BUS_KEYS: [&str; 5] = ["name", "phases", "nominal_voltage", "bustype", "parent"];
const LOAD_POWER_KEYS: [&str; 3] = ["constant_power_A", "constant_power_B", "constant_power_C"];
const ZIP_PREFIXES: [&str; 6] = [
    "constant_current",
    "constant_impedance",
    "base_power",
    "power_fraction",
    "current_fraction",
    "impedance_fraction",
];

/// Parses GLM text (any bytes; invalid UTF-8 is an error) into a validated
/// network.
pub fn parse_glm_subset(bytes: &[u8]) -> Result<Parsed, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| err(1, format!("input is not UTF-8: {e}")))?;
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        warnings: Vec::new(),
    };
    let objects = parser.objects()?;
    let mut warnings = parser.warnings;

    let mut names = HashSet::new();
    for o in &objects {
        if !names.insert(o.name.as_str()) {
            return Err(err(o.line, format!("duplicate object name '{}'", o.name)));
        }
    }
    let line_configs: HashMap<&str, &Object> = objects
        .iter()
        .filter(|o| o.kind == "line_configuration")
        .map(|o| (o.name.as_str(), o))
        .collect();
    let xf_configs: HashMap<&str, &Object> = objects
        .iter()
        .filter(|o| o.kind == "transformer_configuration")
        .map(|o| (o.name.as_str(), o))
        .collect();

    let mut buses: Vec<Bus> = Vec::new();
    let mut loads = Vec::new();
    for o in objects.iter().filter(|o| o.kind == "node" || o.kind == "load") {
        let parent = o.get("parent");
        if o.kind == "node" || parent.is_none() {
            let line = o.line_of("nominal_voltage");
            let (v, unit) = number(o.require("nominal_voltage")?, line)?;
            let kind = match o.get("bustype") {
                Some("SWING") => BusKind::Slack,
                Some("PQ") | None => BusKind::Load,
                Some(other) => return Err(err(o.line_of("bustype"), format!("unsupported bustype '{other}'"))),
            };
            if o.kind == "node" && parent.is_some() {
                return Err(err(o.line_of("parent"), format!("unsupported construct: child node '{}'", o.name)));
            }
            buses.push(Bus {
                id: o.name.clone(),
                phases: phases(o)?,
                nominal_voltage: v * voltage_scale(&unit, line)?,
                kind,
            });
        }
        if o.kind == "load" {
            let mut p = [0.0; 3];
            let mut q = [0.0; 3];
            for (key, value, line) in &o.props {
                if ZIP_PREFIXES.iter().any(|z| key.starts_with(z)) {
                    return Err(err(*line, format!("unsupported construct: ZIP load property '{key}'")));
                }
                if let Some(ph) = LOAD_POWER_KEYS.iter().position(|k| k == key) {
                    let (s, unit) = complex(value, *line)?;
                    let s = s * power_scale(&unit, *line)?;
                    p[ph] = s.re;
                    q[ph] = s.im;
                }
            }
            loads.push(Load {
                id: o.name.clone(),
                bus: parent.unwrap_or(&o.name).to_string(),
                p,
                q,
            });
        }
        for (key, _, line) in &o.props {
            let known = BUS_KEYS.contains(&key.as_str()) || (o.kind == "load" && LOAD_POWER_KEYS.contains(&key.as_str()));
            if !known {
                warnings.push(format!("line {line}: ignored property '{key}' of {} '{}'", o.kind, o.name));
            }
        }
    }

    let mut branches = Vec::new();
    for o in &objects {
        let branch = match o.kind.as_str() {
            "overhead_line" | "underground_line" => {
                let ph = phases(o)?;
                let cfg_name = o.require("configuration")?;
                let cfg = line_configs.get(cfg_name).ok_or_else(|| {
                    err(o.line_of("configuration"), format!("dangling configuration reference '{cfg_name}'"))
                })?;
                let (y, ysh) = line_admittance(cfg, ph, length_ft(o)?)?;
                Branch::line(o.name.clone(), o.require("from")?, o.require("to")?, ph, y, ysh)
            }
            "transformer" => {
                let ph = phases(o)?;
                let cfg_name = o.require("configuration")?;
                let cfg = xf_configs.get(cfg_name).ok_or_else(|| {
                    err(o.line_of("configuration"), format!("dangling configuration reference '{cfg_name}'"))
                })?;
                Branch {
                    id: o.name.clone(),
                    from: o.require("from")?.to_string(),
                    to: o.require("to")?.to_string(),
                    kind: BranchKind::Transformer,
                    phases: ph,
                    series_admittance: transformer_admittance(cfg, ph)?,
                    shunt_admittance: PhaseMatrix::zero(),
                    tap_ratio: 1.0,
                    status: BranchStatus::Closed,
                }
            }
            "switch" => {
                let status = match o.get("status") {
                    None | Some("CLOSED") => BranchStatus::Closed,
                    Some("OPEN") => BranchStatus::Open,
                    Some(s) => return Err(err(o.line_of("status"), format!("unsupported switch status '{s}'"))),
                };
                Branch::switching_device(
                    o.name.clone(),
                    o.require("from")?,
                    o.require("to")?,
                    BranchKind::Switch,
                    phases(o)?,
                    status,
                )
            }
            _ => continue,
        };
        branches.push(branch);
    }

    let network = NetworkModel {
        base_power: GLM_BASE_POWER,
        buses,
        branches,
        loads,
        capacitors: Vec::new(),
    };
    let violations = network.validate();
    if !violations.is_empty() {
        return Err(IngestError::Invalid(violations));
    }
    Ok(Parsed { network, warnings })
}

fn line_admittance(cfg: &Object, ph: PhaseSet, length_ft: f64) -> Result<(PhaseMatrix, PhaseMatrix), IngestError> {
    let miles = length_ft / FEET_PER_MILE;
    let present: Vec<Phase> = ph.iter().collect();
    let entry = |prefix: &str, p: Phase, q: Phase| -> Result<Option<Complex64>, IngestError> {
        let (i, j) = (p.index().min(q.index()) + 1, p.index().max(q.index()) + 1);
        let key = format!("{prefix}{i}{j}");
        let alt = format!("{prefix}{j}{i}");
        match cfg.get(&key).or_else(|| cfg.get(&alt)) {
            Some(v) => Ok(Some(complex(v, cfg.line_of(&key))?.0)),
            None => Ok(None),
        }
    };
    if cfg.props.iter().any(|(k, _, _)| k.starts_with("conductor_") || k == "spacing") {
        return Err(err(
            cfg.line,
            format!("unsupported construct: conductor-based line_configuration '{}'", cfg.name),
        ));
    }
    let mut z = Vec::with_capacity(present.len());
    for &p in &present {
        let mut row = Vec::with_capacity(present.len());
        for &q in &present {
            let v = entry("z", p, q)?.ok_or_else(|| {
                err(
                    cfg.line,
                    format!("line_configuration '{}' lacks z{}{}", cfg.name, p.index() + 1, q.index() + 1),
                )
            })?;
            row.push(v * miles);
        }
        z.push(row);
    }
    let inv = invert_complex(&z).map_err(|_| IngestError::SingularImpedance {
        branch: cfg.name.clone(),
    })?;
    let mut y = PhaseMatrix::zero();
    let mut ysh = PhaseMatrix::zero();
    let omega = 2.0 * std::f64::consts::PI * SYSTEM_FREQUENCY;
    for (i, &p) in present.iter().enumerate() {
        for (j, &q) in present.iter().enumerate() {
            y[(p, q)] = inv[i][j];
            if let Some(c) = entry("c", p, q)? {
                ysh[(p, q)] = Complex64::new(0.0, omega * c.re * 1e-9 * miles);
            }
        }
    }
    Ok((y, ysh))
}

fn transformer_admittance(cfg: &Object, ph: PhaseSet) -> Result<PhaseMatrix, IngestError> {
    match cfg.get("connect_type") {
        Some("WYE_WYE") | None => {}
        Some(other) => {
            return Err(err(
                cfg.line_of("connect_type"),
                format!("unsupported construct: transformer connection '{other}'"),
            ))
        }
    }
    let line = cfg.line_of("power_rating");
    let (rating, unit) = number(cfg.require("power_rating")?, line)?;
    // GridLAB-D ratings default to kVA
    let rating = rating * if unit.is_empty() { 1e3 } else { power_scale(&unit, line)? };
    let line = cfg.line_of("secondary_voltage");
    let (v_sec, unit) = number(cfg.require("secondary_voltage")?, line)?;
    let v_sec = v_sec * voltage_scale(&unit, line)?;
    let z_pu = match (cfg.get("impedance"), cfg.get("resistance"), cfg.get("reactance")) {
        (Some(z), _, _) => complex(z, cfg.line_of("impedance"))?.0,
        (None, Some(r), Some(x)) => Complex64::new(
            number(r, cfg.line_of("resistance"))?.0,
            number(x, cfg.line_of("reactance"))?.0,
        ),
        _ => return Err(err(cfg.line, format!("transformer_configuration '{}' lacks an impedance", cfg.name))),
    };
    if !(rating > 0.0 && v_sec > 0.0) || z_pu.norm() == 0.0 {
        return Err(err(cfg.line, format!("transformer_configuration '{}' has a degenerate rating", cfg.name)));
    }
    let z_ohm = z_pu * (v_sec * v_sec / rating);
    Ok(PhaseMatrix::diagonal(z_ohm.inv(), ph))
}
