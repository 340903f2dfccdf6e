//! Execution substrates: in-process virtual time, or real UDP sockets.

mod sim;
mod udp;

pub use sim::{sim_run, write_trace, SimChannels, SimOutcome, TraceRecord, VirtualClock};
pub use udp::{udp_run, UdpConfig, UdpEndpoint, UdpOutcome};
