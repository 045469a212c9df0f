mod common;

use common::*;
use etb_core::csv::{parse_csv, serialize_csv};
use etb_core::model::{CollectionMeta, LangCode, WorkflowStatus};
use etb_core::tbx::{parse_entry_fragment, parse_tbx, serialize_entry_fragment, serialize_tbx};
use etb_core::validate::{validate_entry, IssueCode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tbx_round_trip_is_exact(seed in any::<u64>(), count in 0usize..20) {
        let mut rng = rng(seed);
        let entries: Vec<_> = (0..count).map(|_| full_entry(&mut rng, LANGS)).collect();
        let mut meta = CollectionMeta::new(phrase(&mut rng, 3));
        meta.description = Some(prose(&mut rng));
        let bytes = serialize_tbx(&meta, &entries).unwrap();
        let doc = parse_tbx(&bytes).unwrap();
        prop_assert_eq!(doc.meta, meta);
        prop_assert_eq!(doc.entries, entries);
    }

    #[test]
    fn fragments_round_trip(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let entry = full_entry(&mut rng, LANGS);
        let fragment = serialize_entry_fragment(&entry).unwrap();
        let (parsed, _) = parse_entry_fragment(fragment.as_bytes()).unwrap();
        prop_assert_eq!(parsed, entry);
    }

    #[test]
    fn serializers_are_deterministic(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let entries: Vec<_> = (0..5).map(|_| full_entry(&mut rng, &["en", "lv"])).collect();
        let meta = CollectionMeta::new("c");
        prop_assert_eq!(serialize_tbx(&meta, &entries).unwrap(), serialize_tbx(&meta, &entries.clone()).unwrap());
        let langs = [LangCode::new("en"), LangCode::new("lv")];
        prop_assert_eq!(serialize_csv(&entries, &langs).unwrap(), serialize_csv(&entries.clone(), &langs).unwrap());
    }

    #[test]
    fn csv_never_invents_unrepresentable_fields(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mut entries: Vec<_> = (0..5).map(|_| full_entry(&mut rng, &["en", "lv"])).collect();
        for e in &mut entries {
            e.workflow_status = WorkflowStatus::Approved;
            e.revision = 9;
        }
        let langs = [LangCode::new("en"), LangCode::new("lv")];
        let (parsed, _) = parse_csv(&serialize_csv(&entries, &langs).unwrap()).unwrap();
        for (p, e) in parsed.iter().zip(&entries) {
            prop_assert_eq!(p.id, e.id);
            prop_assert!(p.media.is_empty());
            prop_assert_eq!(p.workflow_status, WorkflowStatus::Draft);
            prop_assert_eq!(p.revision, 0);
        }
    }

    #[test]
    fn generated_entries_validate_clean(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let entry = full_entry(&mut rng, LANGS);
        let issues = validate_entry(&entry);
        prop_assert!(issues.iter().all(|i| !i.is_error()), "{:?}", issues);
    }

    #[test]
    fn each_broken_rule_is_reported(seed in any::<u64>(), rule in 0usize..5) {
        let mut rng = rng(seed);
        let mut entry = full_entry(&mut rng, &["en", "lv"]);
        let expected = match rule {
            0 => { entry.lang_sections[0].terms[0].term = " \t ".into(); IssueCode::EmptyTerm }
            1 => { entry.lang_sections[0].terms[0].term.push_str("\nsecond line"); IssueCode::MultilineTerm }
            2 => { entry.lang_sections[0].lang = LangCode::new("english"); IssueCode::InvalidLang }
            3 => {
                let copy = entry.lang_sections[0].clone();
                entry.lang_sections.push(copy);
                IssueCode::DuplicateLangSection
            }
            _ => { entry.lang_sections.clear(); IssueCode::NoLangSection }
        };
        let issues = validate_entry(&entry);
        prop_assert!(issues.iter().any(|i| i.is_error() && i.code == expected), "{:?}", issues);
        prop_assert!(serialize_entry_fragment(&entry).is_err());
    }
}
