use crosswatch::codec::*;
use proptest::prelude::*;

fn light_state() -> impl Strategy<Value = LightState> {
    (0u8..4).prop_map(|c| LightState::from_code(c).unwrap())
}

fn plate() -> impl Strategy<Value = Plate> {
    proptest::array::uniform7(0u8..0x80).prop_map(|b| Plate::from_bytes(b).unwrap())
}

prop_compose! {
    fn beacon()(light_id in any::<u16>(), bearing in 0u16..=360, state in light_state(), auth_tag in proptest::array::uniform22(any::<u8>())) -> Beacon {
        Beacon { light_id, bearing, state, auth_tag }
    }
}

prop_compose! {
    fn event()(pseudo_id in any::<u32>(), timestamp in any::<u32>(), lat_q in any::<i16>(), lon_q in any::<i16>(),
               speed in any::<u16>(), direction in 0u16..=36000, plate in plate(), mac in proptest::array::uniform8(any::<u8>())) -> EventPacket {
        EventPacket { pseudo_id, timestamp, lat_q, lon_q, speed, direction, plate, mac }
    }
}

prop_compose! {
    fn notification()(light_id in any::<u16>(), detection in any::<bool>(), lat_q in any::<i16>(), lon_q in any::<i16>(),
                      speed in any::<u16>(), direction in 0u16..=36000, plate in plate(), timestamp in any::<u32>(),
                      server_sig in proptest::array::uniform12(any::<u8>())) -> NotificationPacket {
        let event_type = if detection { EventType::Detection } else { EventType::Prediction };
        NotificationPacket { light_id, event_type, lat_q, lon_q, speed, direction, plate, timestamp, server_sig }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn beacon_round_trip(b in beacon()) {
        let bits = encode_beacon(&b).unwrap();
        prop_assert_eq!(bits.len(), 208);
        prop_assert_eq!(decode_beacon(&bits).unwrap(), b);
    }

    #[test]
    fn event_round_trip(e in event()) {
        let bits = encode_event(&e).unwrap();
        prop_assert_eq!(bits.len(), 248);
        prop_assert_eq!(decode_event(&bits).unwrap(), e);
    }

    #[test]
    fn notification_round_trip(n in notification()) {
        let bits = encode_notification(&n).unwrap();
        prop_assert_eq!(bits.len(), 272);
        prop_assert_eq!(decode_notification(&bits).unwrap(), n);
    }

    #[test]
    fn reserved_bits_are_enforced(b in beacon(), reserved in 1u8..16) {
        let mut bits = encode_beacon(&b).unwrap();
        for i in 0..4 {
            if reserved & (8 >> i) != 0 {
                bits.flip(28 + i);
            }
        }
        prop_assert_eq!(decode_beacon(&bits), Err(CodecError::Reserved(u64::from(reserved))));
    }
}

#[test]
fn wrong_lengths_are_rejected() {
    let bytes = [0u8; 64];
    for len in 0..=bytes.len() * 8 {
        let bits = BitString::from_bytes_truncated(&bytes, len).unwrap();
        assert_eq!(decode_beacon(&bits).is_ok(), len == 208, "{len}");
        assert_eq!(decode_event(&bits).is_ok(), len == 248, "{len}");
        if len != 272 {
            assert!(matches!(decode_notification(&bits), Err(CodecError::Length { .. })), "{len}");
        }
    }
}

#[test]
fn golden_fixtures_match_byte_for_byte() {
    let text = include_str!("fixtures/golden.hex");
    let fixtures: Vec<(&str, &str)> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_once(' ').unwrap())
        .collect();
    let dumps = canonical::hex_dumps();
    assert_eq!(fixtures.len(), dumps.len());
    for ((name, hex), (dump_name, dump)) in fixtures.iter().zip(&dumps) {
        assert_eq!(name, dump_name);
        assert_eq!(*hex, dump, "{name}");
    }
    let sizes: Vec<usize> = fixtures.iter().map(|(_, h)| h.len() / 2).collect();
    assert_eq!(sizes, vec![26, 31, 34]);

    let bytes = hex::decode(fixtures[1].1).unwrap();
    assert_eq!(decode_event(&BitString::from_bytes(&bytes)).unwrap(), canonical::event());
}
