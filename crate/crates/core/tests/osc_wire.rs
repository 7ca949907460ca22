use notemotion::osc::{decode, encode, CodecError, OscArg, OscBundle, OscMessage, OscPacket, Timetag};
use proptest::prelude::*;

fn address() -> impl Strategy<Value = String> {
    "(/[a-zA-Z0-9_*]{1,12}){1,4}"
}

fn arg() -> impl Strategy<Value = OscArg> {
    prop_oneof![
        any::<i32>().prop_map(OscArg::Int),
        any::<f32>().prop_map(OscArg::Float),
        "[ -~]{0,24}".prop_map(OscArg::Str),
        prop::collection::vec(any::<u8>(), 0..40).prop_map(OscArg::Blob),
    ]
}

fn message() -> impl Strategy<Value = OscMessage> {
    (address(), prop::collection::vec(arg(), 0..8)).prop_map(|(a, args)| OscMessage::new(a, args))
}

fn packet() -> impl Strategy<Value = OscPacket> {
    let leaf = message().prop_map(OscPacket::Message);
    leaf.prop_recursive(3, 24, 4, |inner| {
        (any::<u64>(), prop::collection::vec(inner, 0..4)).prop_map(|(t, elements)| {
            OscPacket::Bundle(OscBundle {
                timetag: Timetag(t),
                elements,
            })
        })
    })
}

#[test]
fn golden_int_message() {
    let bytes = encode(&OscMessage::new("/x", vec![OscArg::Int(42)]).into()).unwrap();
    assert_eq!(bytes, [0x2F, 0x78, 0, 0, 0x2C, 0x69, 0, 0, 0, 0, 0, 0x2A]);
}

#[test]
fn golden_float_message() {
    let bytes = encode(&OscMessage::new("/f1", vec![OscArg::Float(0.5)]).into()).unwrap();
    assert_eq!(bytes, [0x2F, 0x66, 0x31, 0, 0x2C, 0x66, 0, 0, 0x3F, 0, 0, 0]);
}

#[test]
fn address_without_slash() {
    assert!(matches!(
        encode(&OscMessage::new("x", vec![]).into()),
        Err(CodecError::AddressMissingSlash)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn packets_round_trip(p in packet()) {
        let bytes = encode(&p).unwrap();
        prop_assert_eq!(bytes.len() % 4, 0);
        prop_assert_eq!(decode(&bytes).unwrap(), p);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn mutated_packets_never_panic(p in packet(), flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6)) {
        let mut bytes = encode(&p).unwrap();
        if !bytes.is_empty() {
            for (i, b) in flips {
                let at = i.index(bytes.len());
                bytes[at] ^= b;
            }
        }
        if let Ok(decoded) = decode(&bytes) {
            // Whatever decodes must encode again.
            prop_assert!(encode(&decoded).is_ok());
        }
    }

    #[test]
    fn truncation_is_an_error(p in message(), cut in 1usize..4) {
        let bytes = encode(&p.into()).unwrap();
        let end = bytes.len().saturating_sub(cut);
        prop_assert!(decode(&bytes[..end]).is_err());
    }
}
