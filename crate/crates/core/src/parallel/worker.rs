use std::io::{Read, Write};

use super::local::LocalExecutor;
use super::protocol::{self as wire, Message};
use crate::device::DeviceTask;

/// Serves one coordinator over a framed byte stream until `SHUTDOWN` or end
/// of input. Devices arrive with `SETUP_DEVICE`; the first `SOLVE_REQUEST`
/// freezes the set and spreads it over `threads` groups.
pub fn run_worker<R: Read, W: Write>(mut input: R, mut output: W, threads: usize) -> std::io::Result<()> {
    let mut staged: Vec<(usize, DeviceTask)> = Vec::new();
    let mut exec: Option<LocalExecutor> = None;
    while let Some(msg) = wire::read_message(&mut input)? {
        let reply = match msg.tag {
            wire::SETUP_DEVICE => match wire::decode_setup(&msg.payload) {
                Ok(s) => {
                    log::debug!("worker: setting up device {}", s.id);
                    match DeviceTask::new(s.device, s.opts, s.lte, 0.0) {
                        Ok(t) => {
                            staged.push((s.id, t));
                            Message::empty(wire::ACK)
                        }
                        Err(e) => Message::new(wire::ERROR, wire::encode_error(1, &e.to_string())),
                    }
                }
                Err(e) => Message::new(wire::ERROR, wire::encode_error(2, &e.to_string())),
            },
            wire::SOLVE_REQUEST => match wire::decode_requests(&msg.payload) {
                Ok(reqs) => {
                    let ex = exec.get_or_insert_with(|| LocalExecutor::new(std::mem::take(&mut staged), threads));
                    let entries: Vec<wire::ReplyEntry> = ex
                        .solve(&reqs)
                        .into_iter()
                        .map(|(i, r)| (i, r.map_err(|e| e.to_string())))
                        .collect();
                    Message::new(wire::SOLVE_REPLY, wire::encode_replies(&entries))
                }
                Err(e) => Message::new(wire::ERROR, wire::encode_error(2, &e.to_string())),
            },
            wire::COMMIT => {
                let restart = msg.payload.first().is_some_and(|&v| v != 0.0);
                match exec.as_mut().map(|ex| ex.commit(restart)) {
                    Some(Ok(())) => Message::empty(wire::ACK),
                    Some(Err(e)) => Message::new(wire::ERROR, wire::encode_error(2, &e.to_string())),
                    None => Message::new(wire::ERROR, wire::encode_error(2, "commit before any solve")),
                }
            }
            wire::ROLLBACK => {
                if let Some(ex) = exec.as_mut() {
                    ex.rollback();
                }
                Message::empty(wire::ACK)
            }
            wire::SHUTDOWN => {
                wire::write_message(&mut output, &Message::empty(wire::ACK))?;
                return Ok(());
            }
            other => Message::new(wire::ERROR, wire::encode_error(2, &format!("unknown tag {other}"))),
        };
        wire::write_message(&mut output, &reply)?;
    }
    Ok(())
}
