use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};

use super::local::LocalExecutor;
use super::plan_partition;
use super::protocol::{self as wire, Message, ReplyEntry};
use crate::device::{Device, DeviceError, DeviceTask, LteTolerances, NewtonOptions, SolveReply, SolveRequest};

/// How Stage 2 is executed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolConfig {
    /// Threads per process (in-process when `processes == 0`).
    pub threads: usize,
    /// Worker processes; zero solves devices inside the coordinator.
    pub processes: usize,
    /// Executable started as `<exe> worker --threads <k>`. Defaults to the
    /// current executable.
    pub worker_exe: Option<PathBuf>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            threads: 1,
            processes: 0,
            worker_exe: None,
        }
    }
}

impl PoolConfig {
    pub fn threads(threads: usize) -> Self {
        Self {
            threads,
            ..Self::default()
        }
    }

    pub fn processes(processes: usize, threads: usize, exe: Option<PathBuf>) -> Self {
        Self {
            threads,
            processes,
            worker_exe: exe,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Stage2Error {
    /// A device could not be solved at the requested bias.
    #[error("device {device}: {message}")]
    Solve { device: usize, message: String },
    #[error("worker {worker}: {message}")]
    Worker { worker: usize, message: String },
    #[error(transparent)]
    Device(#[from] DeviceError),
}

impl Stage2Error {
    /// Solver failures lead to step rejection; anything else aborts the run.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Stage2Error::Solve { .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoolStats {
    pub solves: usize,
    pub time: Duration,
    pub failovers: usize,
}

#[derive(Clone)]
enum Logged {
    Solve(Vec<(usize, SolveRequest)>),
    Commit(bool),
    Rollback,
}

struct Remote {
    child: Child,
    input: BufWriter<ChildStdin>,
    output: BufReader<ChildStdout>,
    devices: Vec<usize>,
}

impl Remote {
    fn send(&mut self, msg: &Message) -> std::io::Result<()> {
        wire::write_message(&mut self.input, msg)
    }

    fn receive(&mut self) -> std::io::Result<Message> {
        wire::read_message(&mut self.output)?
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "worker closed its output"))
    }
}

enum Slot {
    Remote(Remote),
    /// Devices of a failed worker, rebuilt on the coordinator.
    Local(LocalExecutor),
}

enum Backend {
    Local(LocalExecutor),
    Processes {
        slots: Vec<Slot>,
        /// Commands since setup, replayed when a worker fails.
        log: Vec<Logged>,
        devices: Vec<Device>,
        opts: NewtonOptions,
        lte: LteTolerances,
    },
}

/// Executes Stage 2: solves every device at the voltages of the latest
/// circuit iterate and returns their Norton equivalents in device order.
pub struct WorkerPool {
    backend: Backend,
    names: Vec<Vec<String>>,
    stats: PoolStats,
}

fn spawn(exe: &PathBuf, threads: usize) -> std::io::Result<Remote> {
    let mut child = Command::new(exe)
        .arg("worker")
        .arg("--threads")
        .arg(threads.to_string())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    let input = BufWriter::new(child.stdin.take().expect("piped stdin"));
    let output = BufReader::new(child.stdout.take().expect("piped stdout"));
    Ok(Remote {
        child,
        input,
        output,
        devices: Vec::new(),
    })
}

fn to_stage2(results: Vec<(usize, Result<SolveReply, DeviceError>)>) -> Vec<ReplyEntry> {
    results
        .into_iter()
        .map(|(i, r)| (i, r.map_err(|e| e.to_string())))
        .collect()
}

impl WorkerPool {
    /// Brings every device to thermal equilibrium at `t = 0` on the
    /// executor chosen by `config`.
    pub fn new(
        devices: Vec<Device>,
        opts: NewtonOptions,
        lte: LteTolerances,
        config: &PoolConfig,
    ) -> Result<Self, Stage2Error> {
        let names = devices.iter().map(Device::electrode_names).collect();
        let backend = if config.processes == 0 {
            let tasks = devices
                .into_iter()
                .enumerate()
                .map(|(i, d)| Ok((i, DeviceTask::new(d, opts.clone(), lte, 0.0)?)))
                .collect::<Result<Vec<_>, DeviceError>>()?;
            Backend::Local(LocalExecutor::new(tasks, config.threads))
        } else {
            let exe = match &config.worker_exe {
                Some(p) => p.clone(),
                None => std::env::current_exe().map_err(|e| Stage2Error::Worker {
                    worker: 0,
                    message: e.to_string(),
                })?,
            };
            let vertices: Vec<usize> = devices.iter().map(Device::vertex_count).collect();
            let plan = plan_partition(&vertices, config.processes.min(devices.len()).max(1));
            let mut slots = Vec::new();
            for g in 0..plan.groups {
                let mut r = spawn(&exe, config.threads).map_err(|e| Stage2Error::Worker {
                    worker: g,
                    message: format!("cannot start {}: {e}", exe.display()),
                })?;
                r.devices = plan.devices_of(g);
                for &d in &r.devices.clone() {
                    let payload = wire::encode_setup(d, &devices[d], &opts, &lte);
                    r.send(&Message::new(wire::SETUP_DEVICE, payload))
                        .map_err(|e| Stage2Error::Worker {
                            worker: g,
                            message: e.to_string(),
                        })?;
                }
                slots.push(Slot::Remote(r));
            }
            for (g, slot) in slots.iter_mut().enumerate() {
                let Slot::Remote(r) = slot else { unreachable!() };
                for &d in &r.devices.clone() {
                    let m = r.receive().map_err(|e| Stage2Error::Worker {
                        worker: g,
                        message: e.to_string(),
                    })?;
                    if m.tag != wire::ACK {
                        let (_, msg) = wire::decode_error(&m.payload);
                        return Err(Stage2Error::Solve {
                            device: d,
                            message: msg,
                        });
                    }
                }
            }
            Backend::Processes {
                slots,
                log: Vec::new(),
                devices,
                opts,
                lte,
            }
        };
        Ok(Self {
            backend,
            names,
            stats: PoolStats::default(),
        })
    }

    pub fn device_count(&self) -> usize {
        self.names.len()
    }

    pub fn electrode_names(&self, device: usize) -> &[String] {
        &self.names[device]
    }

    pub fn stats(&self) -> PoolStats {
        self.stats
    }

    /// In-process task of a device, if it lives in this process.
    pub fn local_task(&self, device: usize) -> Option<&DeviceTask> {
        match &self.backend {
            Backend::Local(ex) => ex.task(device),
            Backend::Processes { slots, .. } => slots.iter().find_map(|s| match s {
                Slot::Local(ex) => ex.task(device),
                Slot::Remote(_) => None,
            }),
        }
    }

    /// Solves all devices; `requests[i]` belongs to device `i`.
    pub fn solve(&mut self, requests: &[SolveRequest]) -> Result<Vec<SolveReply>, Stage2Error> {
        let start = Instant::now();
        let reqs: Vec<(usize, SolveRequest)> = requests.iter().cloned().enumerate().collect();
        let entries = match &mut self.backend {
            Backend::Local(ex) => to_stage2(ex.solve(&reqs)),
            Backend::Processes { .. } => self.remote_solve(reqs)?,
        };
        self.stats.solves += 1;
        self.stats.time += start.elapsed();
        let mut out = Vec::with_capacity(entries.len());
        for (device, r) in entries {
            match r {
                Ok(rep) => out.push(rep),
                Err(message) => return Err(Stage2Error::Solve { device, message }),
            }
        }
        if out.len() != requests.len() {
            return Err(Stage2Error::Worker {
                worker: 0,
                message: format!("{} replies for {} devices", out.len(), requests.len()),
            });
        }
        Ok(out)
    }

    fn remote_solve(
        &mut self,
        reqs: Vec<(usize, SolveRequest)>,
    ) -> Result<Vec<ReplyEntry>, Stage2Error> {
        let names = self.names.clone();
        let Backend::Processes { slots, log, .. } = &mut self.backend else {
            unreachable!()
        };
        log.push(Logged::Solve(reqs.clone()));
        let subset = |devs: &[usize]| -> Vec<(usize, SolveRequest)> {
            reqs.iter().filter(|(i, _)| devs.contains(i)).cloned().collect()
        };
        let mut failed = Vec::new();
        for (w, slot) in slots.iter_mut().enumerate() {
            if let Slot::Remote(r) = slot {
                let mine = subset(&r.devices);
                let refs: Vec<(usize, &SolveRequest)> = mine.iter().map(|(i, q)| (*i, q)).collect();
                if let Err(e) = r.send(&Message::new(wire::SOLVE_REQUEST, wire::encode_requests(&refs))) {
                    failed.push((w, e.to_string()));
                }
            }
        }
        let mut entries = Vec::new();
        for (w, slot) in slots.iter_mut().enumerate() {
            if failed.iter().any(|(f, _)| *f == w) {
                continue;
            }
            match slot {
                Slot::Local(ex) => entries.extend(to_stage2(ex.solve(&subset(&ex.ids())))),
                Slot::Remote(r) => {
                    let got = r.receive().map_err(|e| e.to_string()).and_then(|m| match m.tag {
                        wire::SOLVE_REPLY => wire::decode_replies(&m.payload, |i| names[i].clone())
                            .map_err(|e| e.to_string()),
                        _ => Err(wire::decode_error(&m.payload).1),
                    });
                    match got {
                        Ok(e) => entries.extend(e),
                        Err(msg) => failed.push((w, msg)),
                    }
                }
            }
        }
        for (w, msg) in failed {
            log::warn!("worker {w} failed ({msg}); retrying its devices on the coordinator");
            entries.extend(self.fail_over(w)?);
        }
        entries.sort_by_key(|(i, _)| *i);
        Ok(entries)
    }

    /// Rebuilds the devices of worker `w` locally by replaying the command
    /// log, including the solve in flight.
    fn fail_over(&mut self, w: usize) -> Result<Vec<ReplyEntry>, Stage2Error> {
        self.stats.failovers += 1;
        let Backend::Processes {
            slots,
            log,
            devices,
            opts,
            lte,
        } = &mut self.backend
        else {
            unreachable!()
        };
        let Slot::Remote(r) = &mut slots[w] else {
            unreachable!("only remote slots fail")
        };
        let _ = r.child.kill();
        let _ = r.child.wait();
        let ids = r.devices.clone();
        let tasks = ids
            .iter()
            .map(|&i| Ok((i, DeviceTask::new(devices[i].clone(), opts.clone(), *lte, 0.0)?)))
            .collect::<Result<Vec<_>, DeviceError>>()?;
        let mut ex = LocalExecutor::new(tasks, 1);
        let mut last = Vec::new();
        let n = log.len();
        for (k, cmd) in log.iter().enumerate() {
            match cmd {
                Logged::Solve(reqs) => {
                    let mine: Vec<(usize, SolveRequest)> =
                        reqs.iter().filter(|(i, _)| ids.contains(i)).cloned().collect();
                    let res = ex.solve(&mine);
                    if k + 1 == n {
                        last = to_stage2(res);
                    }
                }
                Logged::Commit(restart) => ex.commit(*restart)?,
                Logged::Rollback => ex.rollback(),
            }
        }
        slots[w] = Slot::Local(ex);
        Ok(last)
    }

    fn broadcast(&mut self, cmd: Logged) -> Result<(), Stage2Error> {
        let Backend::Processes { slots, log, .. } = &mut self.backend else {
            unreachable!()
        };
        log.push(cmd.clone());
        let msg = match cmd {
            Logged::Commit(restart) => Message::new(wire::COMMIT, vec![f64::from(u8::from(restart))]),
            Logged::Rollback => Message::empty(wire::ROLLBACK),
            Logged::Solve(_) => unreachable!(),
        };
        let mut failed = Vec::new();
        for (w, slot) in slots.iter_mut().enumerate() {
            match slot {
                Slot::Local(ex) => match &cmd {
                    Logged::Commit(restart) => ex.commit(*restart)?,
                    _ => ex.rollback(),
                },
                Slot::Remote(r) => {
                    let ok = r.send(&msg).and_then(|_| r.receive());
                    match ok {
                        Ok(m) if m.tag == wire::ACK => {}
                        Ok(m) => failed.push((w, wire::decode_error(&m.payload).1)),
                        Err(e) => failed.push((w, e.to_string())),
                    }
                }
            }
        }
        for (w, msg) in failed {
            log::warn!("worker {w} failed ({msg}); moving its devices to the coordinator");
            self.fail_over(w)?;
        }
        Ok(())
    }

    /// Accepts the pending iterate of every device.
    pub fn commit(&mut self, restart: bool) -> Result<(), Stage2Error> {
        match &mut self.backend {
            Backend::Local(ex) => Ok(ex.commit(restart)?),
            Backend::Processes { .. } => self.broadcast(Logged::Commit(restart)),
        }
    }

    pub fn rollback(&mut self) -> Result<(), Stage2Error> {
        match &mut self.backend {
            Backend::Local(ex) => {
                ex.rollback();
                Ok(())
            }
            Backend::Processes { .. } => self.broadcast(Logged::Rollback),
        }
    }

    /// Kills worker process `w` without telling the pool, so the next
    /// exchange with it fails. Test hook for the fail-over path.
    #[doc(hidden)]
    pub fn kill_worker(&mut self, w: usize) -> bool {
        if let Backend::Processes { slots, .. } = &mut self.backend {
            if let Some(Slot::Remote(r)) = slots.get_mut(w) {
                let _ = r.child.kill();
                let _ = r.child.wait();
                return true;
            }
        }
        false
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        if let Backend::Processes { slots, .. } = &mut self.backend {
            for slot in slots.iter_mut() {
                if let Slot::Remote(r) = slot {
                    let _ = r.send(&Message::empty(wire::SHUTDOWN));
                    let _ = r.receive();
                    let _ = r.child.wait();
                }
            }
        }
    }
}
