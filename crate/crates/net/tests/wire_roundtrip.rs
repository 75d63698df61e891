use dipe_net::wire::{read_frame, ErrorCode, EstimateStatus, Message, Role, RoundAction, RunConfig, WirePair};
use proptest::prelude::*;

fn message() -> impl Strategy<Value = Message> {
    let role = prop_oneof![Just(Role::Referee), Just(Role::Alice), Just(Role::Bob)];
    prop_oneof![
        (role, any::<u16>(), any::<u64>()).prop_map(|(role, version, seed)| Message::Hello { role, version, seed }),
        proptest::collection::vec(any::<u16>(), 0..64).prop_map(|blocks| Message::SubspaceOutcomes { blocks }),
        proptest::collection::vec((any::<u32>(), any::<u32>(), any::<u16>()), 0..32).prop_map(|v| Message::Pairing {
            pairs: v.into_iter().map(|(alice, bob, block)| WirePair { alice, bob, block }).collect()
        }),
        (any::<u32>(), any::<u32>()).prop_map(|(register, dimension)| Message::QTransfer { register, dimension }),
        proptest::collection::vec(any::<bool>(), 0..70).prop_map(|bits| Message::SwapResults { bits }),
        (-1.0f64..1.0, any::<bool>()).prop_map(|(value, ok)| Message::Estimate {
            value,
            status: if ok { EstimateStatus::Ok } else { EstimateStatus::NoPairs }
        }),
        (any::<u32>(), any::<u32>()).prop_map(|(round, copy)| Message::MeasureCopy { round, copy }),
        (any::<u32>(), proptest::collection::vec((any::<u32>(), any::<u32>()), 0..20))
            .prop_map(|(round, pairs)| Message::MeasureSwap { round, pairs }),
        (any::<u32>(), any::<u32>(), any::<u16>()).prop_map(|(round, copy, block)| Message::MeasureResp {
            round,
            copy,
            block
        }),
        (1u8..8, "[a-z ]{0,40}").prop_map(|(c, message)| Message::Error { code: ErrorCode::from_code(c), message }),
        (any::<u32>(), any::<bool>()).prop_map(|(round, f)| Message::Round {
            round,
            action: if f { RoundAction::Finish } else { RoundAction::Begin }
        }),
        (any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>()).prop_map(
            |(d, q, k, target_pairs, max_rounds)| { Message::Config(RunConfig { d, q, k, target_pairs, max_rounds }) }
        ),
    ]
}

proptest! {
    #[test]
    fn frames_round_trip(msg in message()) {
        let bytes = msg.encode();
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(len, bytes.len() - 4);
        prop_assert_eq!(bytes[4], msg.tag());
        let frame = read_frame(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(frame.byte_length, bytes.len());
        prop_assert_eq!(frame.message, msg);
    }

    #[test]
    fn truncated_frames_never_decode(msg in message(), cut in 1usize..8) {
        let bytes = msg.encode();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(read_frame(&mut &bytes[..keep]).is_err());
    }
}
