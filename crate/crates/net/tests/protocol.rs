use dinfer_net::wire::*;
use proptest::prelude::*;

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
        -1.0f64..=2.0,
    ]
}

fn request() -> impl Strategy<Value = WireRequest> {
    (any::<u64>(), prop_oneof![Just(Op::Label), Just(Op::Logits)], prop::collection::vec(finite_f64(), 0..40))
        .prop_map(|(id, op, x)| WireRequest { id, op, x })
}

fn response() -> impl Strategy<Value = WireResponse> {
    let body = prop_oneof![
        any::<u32>().prop_map(|c| Body::Label(c as usize)),
        prop::collection::vec(finite_f64(), 0..20).prop_map(Body::Logits),
        prop_oneof![
            Just(MALFORMED_REQUEST.to_string()),
            Just(BAD_DIMENSION.to_string()),
            Just(LABEL_ONLY.to_string()),
            Just(BUDGET_EXHAUSTED.to_string()),
            "[a-z_ \"\\\\\n\u{e9}]{0,12}",
        ]
        .prop_map(Body::Error),
    ];
    (prop::option::of(any::<u64>()), body).prop_map(|(id, body)| WireResponse { id, body })
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn requests_round_trip_bit_exact(req in request()) {
        let line = encode_request(&req).unwrap();
        prop_assert!(line.ends_with('\n'));
        prop_assert_eq!(line.matches('\n').count(), 1);
        let back = decode_request(&line).unwrap();
        prop_assert_eq!(back.id, req.id);
        prop_assert_eq!(back.op, req.op);
        prop_assert_eq!(bits(&back.x), bits(&req.x));
    }

    #[test]
    fn responses_round_trip_bit_exact(resp in response()) {
        let line = encode_response(&resp).unwrap();
        prop_assert_eq!(line.matches('\n').count(), 1);
        let back = decode_response(&line).unwrap();
        prop_assert_eq!(back.id, resp.id);
        match (&back.body, &resp.body) {
            (Body::Logits(a), Body::Logits(b)) => prop_assert_eq!(bits(a), bits(b)),
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}

proptest! {
    #[test]
    fn garbage_never_decodes_as_a_request(s in "[^{]{0,40}") {
        prop_assert!(decode_request(&s).is_err());
    }
}
