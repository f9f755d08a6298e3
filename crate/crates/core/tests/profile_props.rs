mod common;

use common::{arb_profile, arb_stream, count_records};
use gcprof::firefox;
use gcprof::profile::parse;
use proptest::prelude::*;

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(profile in arb_stream()) {
        let bytes = profile.to_bytes();
        let decoded = parse(&bytes).unwrap();
        prop_assert_eq!(decoded.unknown_records, 0);
        prop_assert_eq!(decoded.profile, profile);
    }

    #[test]
    fn truncated_streams_fail_or_yield_a_record_prefix(profile in arb_stream(), cut in any::<prop::sample::Index>()) {
        let bytes = profile.to_bytes();
        let cut = cut.index(bytes.len());
        if let Ok(decoded) = parse(&bytes[..cut]) {
            prop_assert_eq!(decoded.profile.meta, profile.meta);
            prop_assert!(profile.records.starts_with(&decoded.profile.records));
        }
    }

    #[test]
    fn conversion_conserves_counts_and_validates(profile in arb_profile()) {
        let (samples, events, stats) = count_records(&profile);
        let bytes = profile.to_bytes();
        let converted = firefox::convert(&bytes).unwrap().profile;
        let thread = converted.thread();
        prop_assert_eq!(thread.samples.length, samples);
        prop_assert_eq!(thread.markers.length, events);
        for counter in &converted.counters {
            prop_assert_eq!(counter.samples.length, stats);
        }
        prop_assert_eq!(firefox::validate(&converted), Vec::<String>::new());
        prop_assert_eq!(converted.to_json(), firefox::convert(&bytes).unwrap().profile.to_json());
    }

    #[test]
    fn arbitrary_streams_still_convert_to_valid_profiles(profile in arb_stream()) {
        let (samples, events, _) = count_records(&profile);
        let converted = firefox::convert_profile(&profile);
        prop_assert_eq!(converted.thread().samples.length, samples);
        prop_assert_eq!(converted.thread().markers.length, events);
        prop_assert_eq!(firefox::validate(&converted), Vec::<String>::new());
        let json: serde_json::Value = serde_json::from_str(&converted.to_json()).unwrap();
        prop_assert!(json["threads"][0]["samples"]["length"].is_u64());
    }
}
