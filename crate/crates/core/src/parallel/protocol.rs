//! Framed messages between the coordinator and worker processes.
//!
//! A frame is a little-endian `u32` byte count, a `u8` tag and a payload of
//! little-endian `f64` values. The byte count covers the tag and payload.
//! Integers, flags and strings are carried as `f64` values; see
//! `docs/protocol.md` for the payload layout of each tag.

use std::io::{self, Read, Write};

use crate::circuit::BdfCoefficients;
use crate::device::{Device, LteTolerances, NewtonOptions, NortonEquivalent, SolveReply, SolveRequest};
use crate::physics::{DeviceMesh, MobilityParams, PhysicalModels, Side};

pub const SETUP_DEVICE: u8 = 1;
pub const SOLVE_REQUEST: u8 = 2;
pub const SOLVE_REPLY: u8 = 3;
pub const SHUTDOWN: u8 = 4;
pub const COMMIT: u8 = 5;
pub const ROLLBACK: u8 = 6;
pub const ACK: u8 = 7;
pub const ERROR: u8 = 8;

/// Largest accepted frame (bytes after the length field).
pub const MAX_FRAME: u32 = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub tag: u8,
    pub payload: Vec<f64>,
}

impl Message {
    pub fn new(tag: u8, payload: Vec<f64>) -> Self {
        Self { tag, payload }
    }

    pub fn empty(tag: u8) -> Self {
        Self::new(tag, Vec::new())
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    let len = 1 + 8 * msg.payload.len();
    let len = u32::try_from(len)
        .ok()
        .filter(|&l| l <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let mut buf = Vec::with_capacity(4 + len as usize);
    buf.extend_from_slice(&len.to_le_bytes());
    buf.push(msg.tag);
    for v in &msg.payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_message<R: Read>(r: &mut R) -> io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len);
    if len == 0 || len > MAX_FRAME || (len - 1) % 8 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad frame length {len}"),
        ));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    let payload = body[1..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Some(Message {
        tag: body[0],
        payload,
    }))
}

#[derive(Debug, thiserror::Error)]
#[error("malformed payload: {0}")]
pub struct DecodeError(pub String);

/// Sequential reader over a payload.
pub struct Fields<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> Fields<'a> {
    pub fn new(data: &'a [f64]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        let v = *self
            .data
            .get(self.pos)
            .ok_or_else(|| DecodeError(format!("payload ends at field {}", self.pos)))?;
        self.pos += 1;
        Ok(v)
    }

    pub fn usize(&mut self) -> Result<usize, DecodeError> {
        let v = self.f64()?;
        if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(52) {
            Ok(v as usize)
        } else {
            Err(DecodeError(format!("expected a count, got {v}")))
        }
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        Ok(self.f64()? != 0.0)
    }

    pub fn vec(&mut self, n: usize) -> Result<Vec<f64>, DecodeError> {
        let end = self.pos + n;
        let s = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| DecodeError(format!("payload too short for {n} values")))?;
        self.pos = end;
        Ok(s.to_vec())
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let n = self.usize()?;
        let bytes = self
            .vec(n)?
            .into_iter()
            .map(|b| u8::try_from(b as i64).map_err(|_| DecodeError("bad string byte".into())))
            .collect::<Result<Vec<u8>, _>>()?;
        String::from_utf8(bytes).map_err(|e| DecodeError(e.to_string()))
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(DecodeError(format!(
                "{} trailing values",
                self.data.len() - self.pos
            )))
        }
    }
}

pub fn push_string(out: &mut Vec<f64>, s: &str) {
    out.push(s.len() as f64);
    out.extend(s.bytes().map(f64::from));
}

fn push_mobility(out: &mut Vec<f64>, m: &MobilityParams) {
    out.extend([m.mu_min, m.mu_max, m.n_ref, m.alpha, m.v_sat, m.beta]);
}

fn read_mobility(f: &mut Fields) -> Result<MobilityParams, DecodeError> {
    Ok(MobilityParams {
        mu_min: f.f64()?,
        mu_max: f.f64()?,
        n_ref: f.f64()?,
        alpha: f.f64()?,
        v_sat: f.f64()?,
        beta: f.f64()?,
    })
}

/// Device, solver options and task identifier of a `SETUP_DEVICE` frame.
pub fn encode_setup(id: usize, device: &Device, opts: &NewtonOptions, lte: &LteTolerances) -> Vec<f64> {
    let mut out = vec![id as f64];
    out.extend([
        opts.max_iterations as f64,
        opts.poisson_abs,
        opts.continuity_abs,
        opts.rel,
        opts.update_tol,
        opts.psi_clamp,
        opts.positivity_fraction,
        opts.max_halvings as f64,
        f64::from(u8::from(opts.scaling)),
        opts.max_bisections as f64,
    ]);
    out.extend([lte.rel, lte.voltage_abs, lte.current_abs, lte.density_abs]);
    let m = device.models();
    out.extend([m.temperature, m.nc, m.nv, m.eg, m.eps_r]);
    push_mobility(&mut out, &m.electron);
    push_mobility(&mut out, &m.hole);
    out.extend([m.tau_n, m.tau_p, m.auger_n, m.auger_p]);
    let mesh = device.mesh();
    out.push(mesh.area());
    out.push(mesh.len() as f64);
    for part in [
        mesh.vertices(),
        device.net_doping(),
        device.total_doping(),
        device.tau_n(),
        device.tau_p(),
    ] {
        out.extend_from_slice(part);
    }
    out.push(mesh.contacts().len() as f64);
    for c in mesh.contacts() {
        out.push(match c.side {
            Side::Left => 0.0,
            Side::Right => 1.0,
        });
        push_string(&mut out, &c.name);
    }
    out
}

pub struct Setup {
    pub id: usize,
    pub device: Device,
    pub opts: NewtonOptions,
    pub lte: LteTolerances,
}

pub fn decode_setup(payload: &[f64]) -> Result<Setup, DecodeError> {
    let mut f = Fields::new(payload);
    let id = f.usize()?;
    let opts = NewtonOptions {
        max_iterations: f.usize()?,
        poisson_abs: f.f64()?,
        continuity_abs: f.f64()?,
        rel: f.f64()?,
        update_tol: f.f64()?,
        psi_clamp: f.f64()?,
        positivity_fraction: f.f64()?,
        max_halvings: f.usize()?,
        scaling: f.bool()?,
        max_bisections: f.usize()?,
    };
    let lte = LteTolerances {
        rel: f.f64()?,
        voltage_abs: f.f64()?,
        current_abs: f.f64()?,
        density_abs: f.f64()?,
    };
    let models = PhysicalModels {
        temperature: f.f64()?,
        nc: f.f64()?,
        nv: f.f64()?,
        eg: f.f64()?,
        eps_r: f.f64()?,
        electron: read_mobility(&mut f)?,
        hole: read_mobility(&mut f)?,
        tau_n: f.f64()?,
        tau_p: f.f64()?,
        auger_n: f.f64()?,
        auger_p: f.f64()?,
    };
    let area = f.f64()?;
    let m = f.usize()?;
    let x = f.vec(m)?;
    let net = f.vec(m)?;
    let total = f.vec(m)?;
    let tau_n = f.vec(m)?;
    let tau_p = f.vec(m)?;
    let nc = f.usize()?;
    let mut contacts = Vec::with_capacity(nc);
    for _ in 0..nc {
        let side = if f.bool()? { Side::Right } else { Side::Left };
        contacts.push((f.string()?, side));
    }
    f.finish()?;
    let mesh = DeviceMesh::from_vertices(x, area, &contacts).map_err(|e| DecodeError(e.to_string()))?;
    let device = Device::from_parts(mesh, models, net, total, tau_n, tau_p)
        .map_err(|e| DecodeError(e.to_string()))?;
    Ok(Setup {
        id,
        device,
        opts,
        lte,
    })
}

/// Batched `SOLVE_REQUEST`: `[count, {id, order, a0, a1, a2, time, dt, k, V_1..V_k}…]`.
pub fn encode_requests(reqs: &[(usize, &SolveRequest)]) -> Vec<f64> {
    let mut out = vec![reqs.len() as f64];
    for (id, r) in reqs {
        out.push(*id as f64);
        out.push(f64::from(r.ctx.order));
        out.extend(r.ctx.a);
        out.extend([r.ctx.time, r.ctx.dt, r.voltages.len() as f64]);
        out.extend(&r.voltages);
    }
    out
}

pub fn decode_requests(payload: &[f64]) -> Result<Vec<(usize, SolveRequest)>, DecodeError> {
    let mut f = Fields::new(payload);
    let count = f.usize()?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let id = f.usize()?;
        let order = f.usize()?;
        let order = u8::try_from(order).map_err(|_| DecodeError("bad order".into()))?;
        let a = [f.f64()?, f.f64()?, f.f64()?];
        let time = f.f64()?;
        let dt = f.f64()?;
        let k = f.usize()?;
        let voltages = f.vec(k)?;
        out.push((
            id,
            SolveRequest {
                voltages,
                ctx: BdfCoefficients { order, a, time, dt },
            },
        ));
    }
    f.finish()?;
    Ok(out)
}

/// Outcome of one device solve as carried by `SOLVE_REPLY`.
pub type ReplyEntry = (usize, Result<SolveReply, String>);

/// Batched `SOLVE_REPLY`. Converged entries are
/// `[id, 1, iterations, lte (NaN if none), k, V(k), I(k), companion(k), G(k·k)]`;
/// failed entries are `[id, 0, message]`.
pub fn encode_replies(entries: &[ReplyEntry]) -> Vec<f64> {
    let mut out = vec![entries.len() as f64];
    for (id, r) in entries {
        out.push(*id as f64);
        match r {
            Ok(rep) => {
                let n = &rep.norton;
                out.extend([
                    1.0,
                    rep.newton_iterations as f64,
                    rep.lte.unwrap_or(f64::NAN),
                    n.len() as f64,
                ]);
                out.extend(&n.voltages);
                out.extend(&n.currents);
                out.extend(&n.companion);
                for row in &n.g {
                    out.extend(row);
                }
            }
            Err(msg) => {
                out.push(0.0);
                push_string(&mut out, msg);
            }
        }
    }
    out
}

/// Inverse of [`encode_replies`]; `names(id)` supplies electrode names,
/// which are not sent over the wire.
pub fn decode_replies(
    payload: &[f64],
    names: impl Fn(usize) -> Vec<String>,
) -> Result<Vec<ReplyEntry>, DecodeError> {
    let mut f = Fields::new(payload);
    let count = f.usize()?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let id = f.usize()?;
        if !f.bool()? {
            out.push((id, Err(f.string()?)));
            continue;
        }
        let iterations = f.usize()?;
        let lte = f.f64()?;
        let k = f.usize()?;
        let voltages = f.vec(k)?;
        let currents = f.vec(k)?;
        let companion = f.vec(k)?;
        let g = (0..k).map(|_| f.vec(k)).collect::<Result<Vec<_>, _>>()?;
        let electrodes = names(id);
        if electrodes.len() != k {
            return Err(DecodeError(format!("device {id}: {k} electrodes in reply")));
        }
        out.push((
            id,
            Ok(SolveReply {
                norton: NortonEquivalent {
                    electrodes,
                    voltages,
                    g,
                    companion,
                    currents,
                },
                newton_iterations: iterations,
                lte: (!lte.is_nan()).then_some(lte),
            }),
        ));
    }
    f.finish()?;
    Ok(out)
}

/// `ERROR` payload: `[code, message]`. Code 1 marks a solver failure of a
/// well-formed request, code 2 a protocol or internal failure.
pub fn encode_error(code: u8, msg: &str) -> Vec<f64> {
    let mut out = vec![f64::from(code)];
    push_string(&mut out, msg);
    out
}

pub fn decode_error(payload: &[f64]) -> (u8, String) {
    let mut f = Fields::new(payload);
    let code = f.usize().unwrap_or(2) as u8;
    let msg = f.string().unwrap_or_else(|_| "unreadable error".into());
    (code, msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::fixtures::pn_diode;
    use proptest::prelude::*;

    fn roundtrip(msg: &Message) -> Message {
        let mut buf = Vec::new();
        write_message(&mut buf, msg).unwrap();
        read_message(&mut buf.as_slice()).unwrap().unwrap()
    }

    #[test]
    fn frame_layout() {
        let mut buf = Vec::new();
        write_message(&mut buf, &Message::new(ACK, vec![1.5])).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 8);
        assert_eq!(&buf[..4], &9u32.to_le_bytes());
        assert_eq!(buf[4], ACK);
        assert_eq!(&buf[5..], &1.5f64.to_le_bytes());
        assert!(read_message(&mut &buf[..0]).unwrap().is_none());
        assert!(read_message(&mut &[3u8, 0, 0, 0, 1, 2, 3][..]).is_err());
    }

    #[test]
    fn setup_roundtrip() {
        let d = pn_diode(1e16, 2e-4, 21);
        let opts = NewtonOptions {
            max_bisections: 3,
            scaling: false,
            ..NewtonOptions::default()
        };
        let lte = LteTolerances::default();
        let msg = roundtrip(&Message::new(SETUP_DEVICE, encode_setup(7, &d, &opts, &lte)));
        let s = decode_setup(&msg.payload).unwrap();
        assert_eq!(s.id, 7);
        assert_eq!(s.device, d);
        assert_eq!(s.opts, opts);
        assert_eq!(s.lte, lte);
    }

    #[test]
    fn reply_roundtrip() {
        let rep = SolveReply {
            norton: NortonEquivalent {
                electrodes: vec!["a".into(), "b".into()],
                voltages: vec![0.5, 0.0],
                g: vec![vec![1e-3, -1e-3], vec![-1e-3, 1e-3]],
                companion: vec![-2e-4, 2e-4],
                currents: vec![3e-4, -3e-4],
            },
            newton_iterations: 4,
            lte: None,
        };
        let entries = vec![(3, Ok(rep)), (5, Err("diverged".to_string()))];
        let names = |_| vec!["a".to_string(), "b".to_string()];
        let back = decode_replies(&encode_replies(&entries), names).unwrap();
        assert_eq!(back, entries);
    }

    proptest! {
        #[test]
        fn requests_roundtrip(
            v in prop::collection::vec(-10.0f64..10.0, 1..4),
            t in 0.0f64..1e-3,
            dt in 1e-12f64..1e-5,
            id in 0usize..100,
        ) {
            let req = SolveRequest {
                voltages: v,
                ctx: BdfCoefficients { order: 2, a: [1.5 / dt, -2.0 / dt, 0.5 / dt], time: t, dt },
            };
            let msg = roundtrip(&Message::new(SOLVE_REQUEST, encode_requests(&[(id, &req)])));
            let back = decode_requests(&msg.payload).unwrap();
            prop_assert_eq!(back, vec![(id, req)]);
        }

        #[test]
        fn strings_roundtrip(s in "\\PC{0,20}") {
            let mut out = Vec::new();
            push_string(&mut out, &s);
            let mut f = Fields::new(&out);
            prop_assert_eq!(f.string().unwrap(), s);
        }
    }
}
