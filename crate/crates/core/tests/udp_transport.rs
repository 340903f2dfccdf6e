use std::net::UdpSocket;
use std::time::Duration;

use qoelab::media::{generate_timeline, MediaProfile};
use qoelab::session::{EosKind, Receiver, ReceiverConfig, Role, Sender, SenderConfig, SessionTopology};
use qoelab::transport::{udp_run, UdpConfig, UdpEndpoint};
use qoelab::Error;

#[test]
fn receiver_without_sender_times_out() {
    let mut receiver = Receiver::new(ReceiverConfig {
        silence_timeout: Duration::from_millis(300),
        ..Default::default()
    });
    let outcome = udp_run(
        Role::Receiver,
        UdpConfig::loopback(SessionTopology::with_offset(43_100)),
        &mut receiver,
    )
    .unwrap();
    assert_eq!(receiver.summary().eos, Some(EosKind::Timeout));
    assert!(outcome.end_time >= Duration::from_millis(300));
    assert_eq!(outcome.datagrams_received, 0);
}

#[test]
fn sender_without_receiver_still_finishes() {
    let profile = MediaProfile::builtin_by_id("s06").unwrap().with_duration(0.5);
    let mut sender = Sender::new(generate_timeline(&profile, 1).unwrap(), SenderConfig::default()).unwrap();
    let outcome = udp_run(
        Role::Sender,
        UdpConfig::loopback(SessionTopology::with_offset(43_200)),
        &mut sender,
    )
    .unwrap();
    let summary = sender.summary();
    assert!(summary.video.bye_sent > 0 && summary.audio.bye_sent > 0);
    assert!(outcome.end_time >= Duration::from_millis(480));
}

#[test]
fn busy_port_fails_before_any_traffic() {
    let topology = SessionTopology::with_offset(43_300);
    let _holder = UdpSocket::bind(("127.0.0.1", topology.audio_rtp_port)).unwrap();
    match UdpEndpoint::bind(Role::Receiver, UdpConfig::loopback(topology)) {
        Err(Error::Bind { port, .. }) => assert_eq!(port, topology.audio_rtp_port),
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("bind should fail"),
    }
}
