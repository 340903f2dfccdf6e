use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;
use std::net::{IpAddr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::session::{Endpoint, Flow, Outbox, Role, SessionTopology, Timer};

const READ_POLL: Duration = Duration::from_millis(50);
const MAX_DATAGRAM: usize = 65_536;

#[derive(Debug, Clone)]
pub struct UdpConfig {
    pub topology: SessionTopology,
    /// Local address the inbound ports are bound on.
    pub bind: IpAddr,
    /// Address of the other endpoint.
    pub peer: IpAddr,
}

impl UdpConfig {
    pub fn loopback(topology: SessionTopology) -> Self {
        UdpConfig {
            topology,
            bind: IpAddr::from([127, 0, 0, 1]),
            peer: IpAddr::from([127, 0, 0, 1]),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct UdpOutcome {
    pub end_time: Duration,
    pub datagrams_sent: u64,
    pub datagrams_received: u64,
}

/// Sockets for one role, bound before any traffic flows.
pub struct UdpEndpoint {
    role: Role,
    config: UdpConfig,
    inbound: Vec<(Flow, UdpSocket)>,
    outbound: UdpSocket,
}

impl UdpEndpoint {
    /// Binds every inbound port of `role`. Fails naming the first port that
    /// cannot be bound.
    pub fn bind(role: Role, config: UdpConfig) -> Result<Self> {
        config.topology.validate()?;
        let mut inbound = Vec::new();
        for flow in SessionTopology::inbound_flows(role) {
            let port = config.topology.port(flow);
            let socket = UdpSocket::bind(SocketAddr::new(config.bind, port)).map_err(|source| Error::Bind { port, source })?;
            socket
                .set_read_timeout(Some(READ_POLL))
                .map_err(|source| Error::Bind { port, source })?;
            inbound.push((flow, socket));
        }
        let outbound =
            UdpSocket::bind(SocketAddr::new(config.bind, 0)).map_err(|source| Error::Bind { port: 0, source })?;
        Ok(UdpEndpoint {
            role,
            config,
            inbound,
            outbound,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Drives `endpoint` over real sockets and the wall clock until it
    /// finishes. Time handed to the endpoint is measured from the call.
    pub fn run(self, endpoint: &mut dyn Endpoint) -> Result<UdpOutcome> {
        let started = Instant::now();
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel::<(Flow, Vec<u8>, Instant)>();

        let mut readers = Vec::new();
        for (flow, socket) in self.inbound {
            let tx = tx.clone();
            let stop = Arc::clone(&stop);
            readers.push(thread::spawn(move || {
                let mut buf = vec![0u8; MAX_DATAGRAM];
                while !stop.load(Ordering::Relaxed) {
                    match socket.recv_from(&mut buf) {
                        Ok((n, _)) => {
                            if tx.send((flow, buf[..n].to_vec(), Instant::now())).is_err() {
                                break;
                            }
                        }
                        Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                        Err(e) => debug!("{flow} reader: {e}"),
                    }
                }
            }));
        }
        drop(tx);

        let mut driver = Driver {
            socket: &self.outbound,
            config: &self.config,
            timers: BinaryHeap::new(),
            ordinal: 0,
            outcome: UdpOutcome::default(),
        };
        let result = driver.drive(endpoint, started, &rx);

        stop.store(true, Ordering::Relaxed);
        for r in readers {
            let _ = r.join();
        }
        let mut outcome = result.map(|_| driver.outcome)?;
        outcome.end_time = started.elapsed();
        Ok(outcome)
    }
}

struct Driver<'a> {
    socket: &'a UdpSocket,
    config: &'a UdpConfig,
    timers: BinaryHeap<Reverse<(Duration, u64, Timer)>>,
    ordinal: u64,
    outcome: UdpOutcome,
}

impl Driver<'_> {
    fn flush(&mut self, out: &mut Outbox) -> Result<()> {
        for (at, timer) in out.timers.drain(..) {
            self.timers.push(Reverse((at, self.ordinal, timer)));
            self.ordinal += 1;
        }
        for (flow, bytes) in out.datagrams.drain(..) {
            let dest = SocketAddr::new(self.config.peer, self.config.topology.port(flow));
            match self.socket.send_to(&bytes, dest) {
                Ok(_) => self.outcome.datagrams_sent += 1,
                // An absent peer on loopback may surface as ICMP refusals.
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {
                    warn!("{flow}: {dest} refused datagram");
                }
                Err(e) => {
                    return Err(Error::Transport(format!("sending {flow} to {dest}: {e}")));
                }
            }
        }
        Ok(())
    }

    fn drive(
        &mut self,
        endpoint: &mut dyn Endpoint,
        started: Instant,
        rx: &mpsc::Receiver<(Flow, Vec<u8>, Instant)>,
    ) -> Result<()> {
        let mut out = Outbox::default();
        endpoint.start(Duration::ZERO, &mut out);
        self.flush(&mut out)?;

        while !endpoint.is_finished() {
            let now = started.elapsed();
            if let Some(Reverse((at, _, timer))) = self.timers.peek().copied() {
                if at <= now {
                    self.timers.pop();
                    endpoint.on_timer(now, timer, &mut out);
                    self.flush(&mut out)?;
                    continue;
                }
            }
            let wait = self
                .timers
                .peek()
                .map_or(READ_POLL, |Reverse((at, ..))| at.saturating_sub(now));
            match rx.recv_timeout(wait) {
                Ok((flow, bytes, arrived)) => {
                    self.outcome.datagrams_received += 1;
                    endpoint.on_datagram(arrived.duration_since(started), flow, &bytes, &mut out);
                    self.flush(&mut out)?;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    if self.timers.is_empty() {
                        return Err(Error::Transport(format!(
                            "all sockets closed with the endpoint unfinished: {}",
                            endpoint.describe()
                        )));
                    }
                    thread::sleep(wait);
                }
            }
        }
        Ok(())
    }
}

/// Binds and runs one role in a single call.
pub fn udp_run(role: Role, config: UdpConfig, endpoint: &mut dyn Endpoint) -> Result<UdpOutcome> {
    UdpEndpoint::bind(role, config)?.run(endpoint)
}
