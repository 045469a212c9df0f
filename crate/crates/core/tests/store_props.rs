mod common;

use std::collections::BTreeMap;

use common::*;
use etb_core::access::{Actor, Role};
use etb_core::error::NodeError;
use etb_core::journal::{ChangeOp, Entity};
use etb_core::model::{Timestamp, Visibility};
use etb_core::search::{MatchMode, SearchQuery};
use etb_core::store::ExchangeFormat;
use etb_core::tbx::parse_entry_fragment;
use proptest::prelude::*;
use rand::Rng;
use uuid::Uuid;

/// Latest revision of every id ever seen: live entries and tombstones.
fn lifecycle_revisions(site: &Site, ids: impl Iterator<Item = Uuid>) -> BTreeMap<Uuid, u64> {
    let live: BTreeMap<Uuid, u64> = site.node.all_entries().into_iter().map(|(_, e)| (e.id, e.revision)).collect();
    ids.filter_map(|id| live.get(&id).copied().or_else(|| site.node.tombstone(id).map(|t| t.revision)).map(|r| (id, r)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn revisions_are_gapless(seed in any::<u64>(), steps in 1usize..120) {
        let mut rng = rng(seed);
        let site = site(Uuid::new_v4());
        let mut workload = Workload::new(&site, 2);
        let mut seen: BTreeMap<Uuid, u64> = BTreeMap::new();
        for _ in 0..steps {
            workload.step(&site, &mut rng);
            let ids: Vec<Uuid> = workload.live.iter().chain(&workload.deleted).map(|(_, id)| *id).collect();
            for (id, rev) in lifecycle_revisions(&site, ids.into_iter()) {
                let before = seen.insert(id, rev).unwrap_or(0);
                prop_assert!(rev == before || rev == before + 1, "{id}: {before} -> {rev}");
            }
        }
    }

    #[test]
    fn drafts_and_private_data_never_leave_the_group(seed in any::<u64>(), steps in 1usize..150) {
        let mut rng = rng(seed);
        let site = site(Uuid::new_v4());
        let mut workload = Workload::new(&site, 3);
        for _ in 0..steps {
            workload.step(&site, &mut rng);
        }
        // Journal: every entry upsert carries an approved entry.
        for record in site.node.journal() {
            if record.entity == Entity::Entry && record.op == ChangeOp::Upsert {
                let (entry, _) = parse_entry_fragment(record.payload_tbx.unwrap().as_bytes()).unwrap();
                prop_assert!(entry.is_approved());
            }
        }
        // Search and export by non-members.
        let visibility: BTreeMap<Uuid, Visibility> = site.node.all_collections().into_iter().map(|c| (c.meta.id, c.visibility)).collect();
        for actor in [Actor::Anonymous, site.outsider.clone()] {
            for (cid, id) in &workload.live {
                let entry = site.node.get_entry(*cid, *id, &Actor::System).unwrap();
                let mut q = SearchQuery::new(entry.lang_sections[0].terms[0].term.clone(), MatchMode::Substring);
                q.filters.include_drafts = true;
                q.limit = 100;
                for hit in site.node.search(&q, &actor).unwrap().hits {
                    let (hit_cid, hit_entry) = site.node.all_entries().into_iter().find(|(_, e)| e.id == hit.entry_id).unwrap();
                    prop_assert!(hit_entry.is_approved());
                    prop_assert_ne!(visibility[&hit_cid], Visibility::Private);
                }
            }
            for (cid, vis) in &visibility {
                match site.node.export_collection(*cid, ExchangeFormat::Tbx, true, &actor) {
                    Ok(bytes) => {
                        prop_assert_ne!(*vis, Visibility::Private);
                        let doc = etb_core::tbx::parse_tbx(&bytes).unwrap();
                        prop_assert!(doc.entries.iter().all(|e| e.is_approved()));
                    }
                    Err(e) => prop_assert_eq!(e, NodeError::UnknownCollection),
                }
            }
        }
    }

    #[test]
    fn second_import_of_an_export_only_updates(seed in any::<u64>(), count in 1usize..30, csv in any::<bool>()) {
        let mut rng = rng(seed);
        let site = site(Uuid::new_v4());
        let cid = collection(&site, "source");
        let contributor = &site.members[&Role::Contributor];
        for _ in 0..count {
            site.node.upsert_entry(cid, simple_entry(&mut rng, &["en", "lv"]), contributor).unwrap();
        }
        let format = if csv { ExchangeFormat::Csv } else { ExchangeFormat::Tbx };
        let exported = site.node.export_collection(cid, format, true, contributor).unwrap();
        let target = collection(&site, "target");
        let first = site.node.import_collection(target, format, &exported, contributor);
        // Ids belong to the source collection on this node.
        prop_assert_eq!(first.unwrap().skipped, count);

        let other = common::site(Uuid::new_v4());
        let target = collection(&other, "target");
        let contributor = &other.members[&Role::Contributor];
        let first = other.node.import_collection(target, format, &exported, contributor).unwrap();
        prop_assert_eq!((first.created, first.updated, first.skipped), (count, 0, 0));
        let again = other.node.export_collection(target, format, true, contributor).unwrap();
        let second = other.node.import_collection(target, format, &again, contributor).unwrap();
        prop_assert_eq!((second.created, second.updated, second.skipped), (0, count, 0));
    }

    #[test]
    fn search_is_deterministic_and_pages_consistently(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let site = site(Uuid::new_v4());
        let cid = collection(&site, "c");
        site.node.set_visibility(cid, Visibility::Public, &Actor::System).unwrap();
        for _ in 0..60 {
            let e = simple_entry(&mut rng, &["en", "lv"]);
            let id = e.id;
            site.node.upsert_entry(cid, e, &Actor::System).unwrap();
            if rng.gen_bool(0.7) {
                site.node.approve_entry(cid, id, &Actor::System).unwrap();
            }
        }
        let text = word(&mut rng).chars().take(2).collect::<String>();
        let mut all = SearchQuery::new(text, MatchMode::Substring);
        all.limit = 100;
        let full = site.node.search(&all, &Actor::Anonymous).unwrap();
        prop_assert_eq!(&full, &site.node.search(&all, &Actor::Anonymous).unwrap());
        let mut paged = Vec::new();
        let mut page = all.clone();
        page.limit = 7;
        while page.offset < full.total {
            paged.extend(site.node.search(&page, &Actor::Anonymous).unwrap().hits);
            page.offset += 7;
        }
        prop_assert_eq!(paged, full.hits);
    }
}

#[test]
fn comment_order_breaks_ties_by_id() {
    use etb_core::clock::ManualClock;
    use std::sync::Arc;
    let clock = Arc::new(ManualClock::new(Timestamp::from_millis(1_700_000_000_000)));
    let node = etb_core::store::Node::with_clock(Uuid::new_v4(), fast_options(), clock.clone());
    let group = node.create_group("g", &Actor::System).unwrap();
    let cid = node.create_collection(etb_core::model::CollectionMeta::new("c"), group, &Actor::System).unwrap();
    let mut rng = rng(3);
    let e = simple_entry(&mut rng, &["en"]);
    let id = e.id;
    node.upsert_entry(cid, e, &Actor::System).unwrap();
    let mut posted = Vec::new();
    for i in 0..6 {
        if i % 2 == 0 {
            clock.advance_millis(5);
        }
        posted.push(node.post_comment(id, &format!("c{i}"), &Actor::System).unwrap());
    }
    posted.sort_by_key(|a| (a.created_at, a.id));
    assert_eq!(node.list_comments(id, &Actor::System).unwrap(), posted);
}

#[test]
fn expired_sessions_authorize_nothing() {
    use etb_core::clock::ManualClock;
    use std::sync::Arc;
    let clock = Arc::new(ManualClock::new(Timestamp::from_millis(0)));
    let node = etb_core::store::Node::with_clock(Uuid::new_v4(), fast_options(), clock.clone());
    node.add_user("u", "pw", &Actor::System).unwrap();
    let session = node.authenticate("u", "pw").unwrap();
    assert_eq!(session.token.len(), 43);
    clock.advance_millis(12 * 3_600_000 - 1);
    assert!(node.resolve_token(&session.token).is_ok());
    clock.advance_millis(1);
    assert_eq!(node.resolve_token(&session.token), Err(NodeError::Unauthenticated));
}
