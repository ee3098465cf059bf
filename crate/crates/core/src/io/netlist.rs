//! SPICE-like netlist text.
//!
//! ```text
//! # comment (also `*` at the start of a line)
//! .device <name> <config path>
//! R<name> <n1> <n2> <value>
//! C<name> <n1> <n2> <value> [IC=<volts>]
//! L<name> <n1> <n2> <value> [IC=<amps>]
//! V<name> <n+> <n-> <waveform>
//! I<name> <n+> <n-> <waveform>
//! X<name> <device> <electrode>=<node> ...
//! .tran <t_stop> [uic]
//! .end
//! ```
//!
//! A waveform is a number, `DC <v>`, `PULSE(v1 v2 td tr [tf [pw [per]]])`,
//! `SIN(vo va freq [td [theta [phase]]])` or `PWL(t1 v1 t2 v2 ...)`. Commas
//! and parentheses separate tokens like spaces. Numbers take SPICE scale
//! suffixes; `inf` is accepted for pulse width and period. Node `0` (or
//! `gnd`) is ground.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::units::parse_spice_number;
use crate::circuit::{is_ground, Circuit, CircuitError, Element, ElementKind, Waveform};
use crate::cosim::CoupledSystem;
use crate::device::Device;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct NetlistError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceDecl {
    pub name: String,
    /// Path of the device configuration, relative to the netlist file.
    pub path: String,
}

/// Default transient run of a netlist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranSpec {
    pub t_stop: f64,
    pub uic: bool,
}

/// Parsed netlist. Equality ignores source locations.
#[derive(Debug, Clone)]
pub struct Netlist {
    pub devices: Vec<DeviceDecl>,
    pub elements: Vec<Element>,
    pub tran: Option<TranSpec>,
    lines: Vec<usize>,
}

impl PartialEq for Netlist {
    fn eq(&self, other: &Self) -> bool {
        self.devices == other.devices && self.elements == other.elements && self.tran == other.tran
    }
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut column = 1;
    let mut start_col = 1;
    for (i, c) in line.char_indices() {
        let sep = c.is_whitespace() || matches!(c, '(' | ')' | ',');
        match (sep, start) {
            (true, Some(s)) => {
                out.push(Token {
                    text: &line[s..i],
                    column: start_col,
                });
                start = None;
            }
            (false, None) => {
                start = Some(i);
                start_col = column;
            }
            _ => {}
        }
        column += 1;
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: start_col,
        });
    }
    out
}

fn strip_comment(line: &str) -> &str {
    let line = line.split('#').next().unwrap_or("");
    if line.trim_start().starts_with('*') {
        ""
    } else {
        line
    }
}

struct LineParser<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_column: usize,
}

impl<'a> LineParser<'a> {
    fn err<T>(&self, column: usize, message: impl Into<String>) -> Result<T, NetlistError> {
        Err(NetlistError {
            line: self.line,
            column,
            message: message.into(),
        })
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>, NetlistError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => self.err(self.end_column, format!("expected {what}")),
        }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn node(&mut self) -> Result<String, NetlistError> {
        let t = self.next("a node name")?;
        if t.text.contains('=') {
            return self.err(t.column, format!("expected a node name, found `{}`", t.text));
        }
        Ok(t.text.to_string())
    }

    fn value_of(&self, t: Token, what: &str) -> Result<f64, NetlistError> {
        if t.text.eq_ignore_ascii_case("inf") {
            return Ok(f64::INFINITY);
        }
        match parse_spice_number(t.text) {
            Some(v) => Ok(v),
            None => self.err(t.column, format!("expected {what}, found `{}`", t.text)),
        }
    }

    fn finish(&self) -> Result<(), NetlistError> {
        match self.peek() {
            Some(t) => self.err(t.column, format!("unexpected `{}`", t.text)),
            None => Ok(()),
        }
    }

    fn initial_condition(&mut self) -> Result<Option<f64>, NetlistError> {
        let Some(t) = self.peek() else {
            return Ok(None);
        };
        let Some((key, value)) = t.text.split_once('=') else {
            return self.err(t.column, format!("unexpected `{}`", t.text));
        };
        if !key.eq_ignore_ascii_case("ic") {
            return self.err(t.column, format!("unknown parameter `{key}`"));
        }
        self.pos += 1;
        let v = Token {
            text: value,
            column: t.column + key.len() + 1,
        };
        self.value_of(v, "an initial condition").map(Some)
    }

    fn waveform(&mut self) -> Result<Waveform, NetlistError> {
        let head = self.next("a source value or waveform")?;
        let kw = head.text.to_ascii_uppercase();
        let rest: Vec<Token> = self.tokens[self.pos..].to_vec();
        self.pos = self.tokens.len();
        let args = |min: usize, max: usize| -> Result<Vec<f64>, NetlistError> {
            if rest.len() < min || rest.len() > max {
                let range = if min == max {
                    min.to_string()
                } else if max == usize::MAX {
                    format!("at least {min}")
                } else {
                    format!("{min} to {max}")
                };
                return self.err(head.column, format!("{kw} takes {range} values, got {}", rest.len()));
            }
            rest.iter().map(|t| self.value_of(*t, "a number")).collect()
        };
        Ok(match kw.as_str() {
            "DC" => Waveform::Dc(args(1, 1)?[0]),
            "PULSE" => {
                let a = args(4, 7)?;
                let rise = a[3];
                let w = Waveform::Pulse {
                    low: a[0],
                    high: a[1],
                    delay: a[2],
                    rise,
                    fall: a.get(4).copied().unwrap_or(rise),
                    width: a.get(5).copied().unwrap_or(f64::INFINITY),
                    period: a.get(6).copied().unwrap_or(f64::INFINITY),
                };
                if a[2..5.min(a.len())].iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return self.err(head.column, "PULSE delay, rise and fall must be finite and non-negative");
                }
                w
            }
            "SIN" => {
                let a = args(3, 6)?;
                Waveform::Sin {
                    offset: a[0],
                    amplitude: a[1],
                    freq: a[2],
                    delay: a.get(3).copied().unwrap_or(0.0),
                    damping: a.get(4).copied().unwrap_or(0.0),
                    phase: a.get(5).copied().unwrap_or(0.0),
                }
            }
            "PWL" => {
                let a = args(2, usize::MAX)?;
                if a.len() % 2 != 0 {
                    return self.err(head.column, "PWL needs time/value pairs");
                }
                let pts: Vec<(f64, f64)> = a.chunks(2).map(|c| (c[0], c[1])).collect();
                if pts.windows(2).any(|w| w[1].0 < w[0].0) {
                    return self.err(head.column, "PWL times must not decrease");
                }
                Waveform::Pwl(pts)
            }
            _ => {
                if !rest.is_empty() {
                    return self.err(rest[0].column, format!("unexpected `{}`", rest[0].text));
                }
                Waveform::Dc(self.value_of(head, "a source value or waveform")?)
            }
        })
    }
}

/// Parses netlist text. Checks syntax, duplicate names, device references,
/// ground and dangling nodes; reports the line and column of each problem.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut devices: Vec<DeviceDecl> = Vec::new();
    let mut tran = None;
    let mut elements = Vec::new();
    let mut lines = Vec::new();
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    let mut refs: Vec<(String, usize, usize)> = Vec::new();
    let mut line_count = 0;
    for (i, raw) in text.lines().enumerate() {
        line_count = i + 1;
        let content = strip_comment(raw);
        let mut p = LineParser {
            line: i + 1,
            tokens: tokenize(content),
            pos: 0,
            end_column: content.trim_end().chars().count() + 1,
        };
        let Some(first) = p.peek() else { continue };
        p.pos = 1;
        let lower = first.text.to_ascii_lowercase();
        if lower.starts_with('.') {
            match lower.as_str() {
                ".device" => {
                    let name = p.next("a device name")?;
                    let path = p.next("a config path")?;
                    p.finish()?;
                    if devices.iter().any(|d| d.name == name.text) {
                        return p.err(name.column, format!("device `{}` declared twice", name.text));
                    }
                    devices.push(DeviceDecl {
                        name: name.text.into(),
                        path: path.text.into(),
                    });
                }
                ".tran" => {
                    let t = p.next("a stop time")?;
                    let t_stop = p.value_of(t, "a stop time")?;
                    if !(t_stop > 0.0 && t_stop.is_finite()) {
                        return p.err(t.column, "stop time must be positive");
                    }
                    let uic = match p.peek() {
                        Some(u) if u.text.eq_ignore_ascii_case("uic") => {
                            p.pos += 1;
                            true
                        }
                        _ => false,
                    };
                    p.finish()?;
                    if tran.is_some() {
                        return p.err(first.column, "second .tran");
                    }
                    tran = Some(TranSpec { t_stop, uic });
                }
                ".end" => break,
                _ => return p.err(first.column, format!("unknown directive `{}`", first.text)),
            }
            continue;
        }
        if let Some(prev) = names.insert(lower.clone(), i + 1) {
            return p.err(first.column, format!("duplicate name `{}` (first used on line {prev})", first.text));
        }
        let name = first.text.to_string();
        let element = match lower.chars().next() {
            Some(c @ ('r' | 'c' | 'l')) => {
                let a = p.node()?;
                let b = p.node()?;
                let value_tok = p.next("a value")?;
                let value = p.value_of(value_tok, "a value")?;
                if !(value > 0.0 && value.is_finite()) {
                    return p.err(value_tok.column, format!("value must be positive, got {value}"));
                }
                let kind = match c {
                    'r' => ElementKind::Resistor(value),
                    'c' => ElementKind::Capacitor(value, p.initial_condition()?),
                    _ => ElementKind::Inductor(value, p.initial_condition()?),
                };
                p.finish()?;
                Element::two_terminal(&name, &a, &b, kind)
            }
            Some(c @ ('v' | 'i')) => {
                let a = p.node()?;
                let b = p.node()?;
                let w = p.waveform()?;
                let kind = if c == 'v' {
                    ElementKind::VoltageSource(w)
                } else {
                    ElementKind::CurrentSource(w)
                };
                Element::two_terminal(&name, &a, &b, kind)
            }
            Some('x') => {
                let dev = p.next("a device name")?;
                refs.push((dev.text.to_string(), i + 1, dev.column));
                let mut nodes = Vec::new();
                let mut electrodes = Vec::new();
                while let Some(t) = p.peek() {
                    p.pos += 1;
                    let Some((el, node)) = t.text.split_once('=') else {
                        return p.err(t.column, format!("expected <electrode>=<node>, found `{}`", t.text));
                    };
                    if el.is_empty() || node.is_empty() {
                        return p.err(t.column, format!("expected <electrode>=<node>, found `{}`", t.text));
                    }
                    if electrodes.iter().any(|e| e == el) {
                        return p.err(t.column, format!("electrode `{el}` connected twice"));
                    }
                    electrodes.push(el.to_string());
                    nodes.push(node.to_string());
                }
                if nodes.is_empty() {
                    return p.err(p.end_column, "expected <electrode>=<node> connections");
                }
                Element {
                    name: name.clone(),
                    nodes,
                    kind: ElementKind::DevicePort {
                        device: dev.text.to_string(),
                        electrodes,
                    },
                }
            }
            _ => return p.err(first.column, format!("unknown component `{}`", first.text)),
        };
        elements.push(element);
        lines.push(i + 1);
    }

    for (dev, line, column) in refs {
        if !devices.iter().any(|d| d.name == dev) {
            return Err(NetlistError {
                line,
                column,
                message: format!("device `{dev}` is not declared (missing `.device {dev} <path>`)"),
            });
        }
    }
    let netlist = Netlist {
        devices,
        elements,
        tran,
        lines,
    };
    netlist.check_nodes(line_count)?;
    Ok(netlist)
}

impl Netlist {
    fn location(&self, k: usize) -> (usize, usize) {
        (self.lines.get(k).copied().unwrap_or(1), 1)
    }

    fn check_nodes(&self, line_count: usize) -> Result<(), NetlistError> {
        if self.elements.is_empty() {
            return Ok(());
        }
        let mut uses: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (k, e) in self.elements.iter().enumerate() {
            for n in &e.nodes {
                uses.entry(n.as_str()).or_default().push(k);
            }
        }
        if !uses.keys().any(|n| is_ground(n)) {
            return Err(NetlistError {
                line: line_count.max(1),
                column: 1,
                message: "no ground node (`0` or `gnd`)".into(),
            });
        }
        for (n, ks) in &uses {
            if ks.len() < 2 && !is_ground(n) {
                let (line, column) = self.location(ks[0]);
                return Err(NetlistError {
                    line,
                    column,
                    message: format!("dangling node `{n}` (only connected to `{}`)", self.elements[ks[0]].name),
                });
            }
        }
        Ok(())
    }

    /// Builds the coupled system; `devices` maps every declared device name
    /// to its description.
    pub fn build(&self, devices: &BTreeMap<String, Device>) -> Result<CoupledSystem, NetlistError> {
        let electrodes: BTreeMap<String, Vec<String>> = devices
            .iter()
            .map(|(k, d)| (k.clone(), d.electrode_names()))
            .collect();
        let locate = |e: CircuitError| -> NetlistError {
            let msg = e.to_string();
            let (line, column) = match &e {
                CircuitError::Element(name, _) => self
                    .elements
                    .iter()
                    .position(|el| &el.name == name)
                    .map_or((1, 1), |k| self.location(k)),
                _ => {
                    let quoted: BTreeSet<&str> = msg.split('`').skip(1).step_by(2).collect();
                    self.elements
                        .iter()
                        .position(|el| quoted.contains(el.name.as_str()) || el.nodes.iter().any(|n| quoted.contains(n.as_str())))
                        .map_or((1, 1), |k| self.location(k))
                }
            };
            NetlistError {
                line,
                column,
                message: msg,
            }
        };
        let circuit = Circuit::new(self.elements.clone(), &electrodes).map_err(locate)?;
        CoupledSystem::new(circuit, devices).map_err(locate)
    }
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:e}")
    }
}

fn join(vs: &[f64]) -> String {
    vs.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Waveform::Dc(v) => write!(f, "DC {}", num(*v)),
            Waveform::Pulse {
                low,
                high,
                delay,
                rise,
                fall,
                width,
                period,
            } => write!(f, "PULSE({})", join(&[*low, *high, *delay, *rise, *fall, *width, *period])),
            Waveform::Sin {
                offset,
                amplitude,
                freq,
                delay,
                damping,
                phase,
            } => write!(f, "SIN({})", join(&[*offset, *amplitude, *freq, *delay, *damping, *phase])),
            Waveform::Pwl(pts) => {
                let flat: Vec<f64> = pts.iter().flat_map(|p| [p.0, p.1]).collect();
                write!(f, "PWL({})", join(&flat))
            }
        }
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.devices {
            writeln!(f, ".device {} {}", d.name, d.path)?;
        }
        for e in &self.elements {
            let ic = |ic: &Option<f64>| ic.map(|v| format!(" IC={}", num(v))).unwrap_or_default();
            match &e.kind {
                ElementKind::Resistor(v) => writeln!(f, "{} {} {} {}", e.name, e.nodes[0], e.nodes[1], num(*v))?,
                ElementKind::Capacitor(v, c) | ElementKind::Inductor(v, c) => {
                    writeln!(f, "{} {} {} {}{}", e.name, e.nodes[0], e.nodes[1], num(*v), ic(c))?
                }
                ElementKind::VoltageSource(w) | ElementKind::CurrentSource(w) => {
                    writeln!(f, "{} {} {} {w}", e.name, e.nodes[0], e.nodes[1])?
                }
                ElementKind::DevicePort { device, electrodes } => {
                    write!(f, "{} {device}", e.name)?;
                    for (el, n) in electrodes.iter().zip(&e.nodes) {
                        write!(f, " {el}={n}")?;
                    }
                    writeln!(f)?;
                }
            }
        }
        if let Some(t) = &self.tran {
            writeln!(f, ".tran {}{}", num(t.t_stop), if t.uic { " uic" } else { "" })?;
        }
        Ok(())
    }
}
