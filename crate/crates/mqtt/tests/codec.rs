use ewaste_mqtt::packet::{
    decode_remaining_length, encode_remaining_length, Connect, ConnectReturnCode, Packet, Publish, QoS, SubackCode,
};
use proptest::prelude::*;

fn qos() -> impl Strategy<Value = QoS> {
    prop_oneof![Just(QoS::AtMostOnce), Just(QoS::AtLeastOnce)]
}

fn topic() -> impl Strategy<Value = String> {
    "[a-z0-9$]{0,6}(/[a-z0-9]{0,6}){0,4}".prop_filter("non-empty", |t| !t.is_empty())
}

fn filter() -> impl Strategy<Value = String> {
    prop::collection::vec(prop_oneof!["[a-z]{0,4}", Just("+".to_string())], 1..5).prop_flat_map(|levels| {
        any::<bool>().prop_map(move |hash| {
            let mut l = levels.clone();
            if hash {
                l.push("#".into());
            }
            l.join("/")
        })
    })
}

fn packet() -> impl Strategy<Value = Packet> {
    let publish = (topic(), prop::collection::vec(any::<u8>(), 0..300), qos(), 1u16.., any::<bool>()).prop_map(
        |(topic, payload, qos, id, dup)| {
            Packet::Publish(match qos {
                QoS::AtMostOnce => Publish::at_most_once(topic, payload),
                QoS::AtLeastOnce => Publish {
                    dup,
                    ..Publish::at_least_once(topic, payload, id)
                },
            })
        },
    );
    prop_oneof![
        ("[a-zA-Z0-9-]{0,23}", any::<u16>()).prop_map(|(client_id, keep_alive_s)| Packet::Connect(Connect {
            client_id,
            keep_alive_s,
            clean_session: true,
        })),
        (any::<bool>(), 0u8..6).prop_map(|(sp, c)| Packet::ConnAck {
            session_present: sp,
            code: [
                ConnectReturnCode::Accepted,
                ConnectReturnCode::UnacceptableProtocolVersion,
                ConnectReturnCode::IdentifierRejected,
                ConnectReturnCode::ServerUnavailable,
                ConnectReturnCode::BadCredentials,
                ConnectReturnCode::NotAuthorized,
            ][c as usize],
        }),
        publish,
        (1u16..).prop_map(Packet::PubAck),
        (1u16.., prop::collection::vec((filter(), qos()), 1..5))
            .prop_map(|(packet_id, filters)| Packet::Subscribe { packet_id, filters }),
        (
            1u16..,
            prop::collection::vec(
                prop_oneof![qos().prop_map(SubackCode::Granted), Just(SubackCode::Failure)],
                1..5
            )
        )
            .prop_map(|(packet_id, codes)| Packet::SubAck { packet_id, codes }),
        Just(Packet::PingReq),
        Just(Packet::PingResp),
        Just(Packet::Disconnect),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn packets_round_trip(p in packet()) {
        let bytes = p.encode().unwrap();
        let (decoded, used) = Packet::decode(&bytes).unwrap().unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(decoded, p);
    }

    #[test]
    fn every_strict_prefix_needs_more_data(p in packet()) {
        let bytes = p.encode().unwrap();
        for cut in 0..bytes.len() {
            prop_assert_eq!(Packet::decode(&bytes[..cut]).unwrap(), None);
        }
    }

    #[test]
    fn concatenated_packets_decode_in_order(ps in prop::collection::vec(packet(), 1..6)) {
        let mut buf = Vec::new();
        for p in &ps {
            p.encode_into(&mut buf).unwrap();
        }
        let mut out = Vec::new();
        let mut rest = &buf[..];
        while let Some((p, used)) = Packet::decode(rest).unwrap() {
            out.push(p);
            rest = &rest[used..];
        }
        prop_assert!(rest.is_empty());
        prop_assert_eq!(out, ps);
    }

    #[test]
    fn remaining_length_round_trips(len in 0usize..=268_435_455) {
        let mut buf = Vec::new();
        encode_remaining_length(len, &mut buf).unwrap();
        prop_assert_eq!(decode_remaining_length(&buf).unwrap(), Some((len, buf.len())));
    }
}

#[test]
fn remaining_length_byte_counts_at_boundaries() {
    let cases = [
        (0, 1),
        (127, 1),
        (128, 2),
        (16_383, 2),
        (16_384, 3),
        (2_097_151, 3),
        (2_097_152, 4),
        (268_435_455, 4),
    ];
    for (len, bytes) in cases {
        let mut buf = Vec::new();
        encode_remaining_length(len, &mut buf).unwrap();
        assert_eq!(buf.len(), bytes, "length {len}");
        assert_eq!(decode_remaining_length(&buf).unwrap(), Some((len, bytes)));
    }
    assert!(encode_remaining_length(268_435_456, &mut Vec::new()).is_err());
    // a fifth continuation byte is malformed
    assert!(decode_remaining_length(&[0xff, 0xff, 0xff, 0xff, 0x01]).is_err());
    // incomplete varint asks for more data
    assert_eq!(decode_remaining_length(&[0x80]).unwrap(), None);
}

#[test]
fn known_wire_bytes() {
    assert_eq!(Packet::PingReq.encode().unwrap(), vec![0xc0, 0x00]);
    assert_eq!(Packet::Disconnect.encode().unwrap(), vec![0xe0, 0x00]);
    assert_eq!(Packet::PubAck(0x0102).encode().unwrap(), vec![0x40, 0x02, 0x01, 0x02]);
    let p = Publish {
        dup: true,
        ..Publish::at_least_once("a/b", b"hi".to_vec(), 7)
    };
    assert_eq!(
        Packet::Publish(p).encode().unwrap(),
        vec![0x3a, 0x09, 0x00, 0x03, b'a', b'/', b'b', 0x00, 0x07, b'h', b'i']
    );
}
