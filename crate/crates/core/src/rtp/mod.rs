//! RTP/RTCP wire formats and receive-side measurement.

mod jitter_buffer;
mod packet;
pub mod rtcp;
mod stats;

pub use jitter_buffer::{Admission, JitterBuffer};
pub use packet::{looks_like_rtcp, RtpPacket, RTP_HEADER_LEN, RTP_VERSION};
pub use rtcp::{RtcpPacket, ReceptionReport, SenderInfo};
pub use stats::{NotReady, SourceStats};
