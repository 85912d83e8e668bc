// SPDX-License-Identifier: Apache-2.0

// Secondary indexes and the duplicated readings layout, checked against
// brute-force scans written independently of the store.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use acp_core::store::{CrateTree, MetadataStore, ReadingsRepository};
use acp_model::{
    BoundaryPolygon, CrateRecord, CrateType, Features, LocationRef, SensorMetadataRecord, SensorReading, Timestamp,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square() -> BoundaryPolygon {
    BoundaryPolygon::new("B", vec![[0.0, 0.0], [0.0, 4.0], [4.0, 4.0], [4.0, 0.0]])
}

fn random_store(seed: u64, n_crates: usize, n_sensors: usize) -> (Vec<CrateRecord>, Vec<SensorMetadataRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = [CrateType::Building, CrateType::Floor, CrateType::Room, CrateType::Other("desk".into())];
    let mut crates: Vec<CrateRecord> = Vec::new();
    for i in 0..n_crates {
        let parent = (i > 0 && rng.random_bool(0.9)).then(|| crates[rng.random_range(0..i)].crate_id.clone());
        crates.push(CrateRecord {
            crate_id: format!("C{i:04}"),
            parent_crate_id: parent,
            crate_type: types[rng.random_range(0..types.len())].clone(),
            long_name: String::new(),
            description: String::new(),
            acp_location: LocationRef::building("B", rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), rng.random_range(-1..4), 0.0)
                .unwrap(),
            acp_boundary: square(),
            acp_ts: Some(Timestamp::from_secs(1)),
        });
    }
    let sensors = (0..n_sensors)
        .map(|i| SensorMetadataRecord {
            acp_id: format!("sim-co2-{i:06x}"),
            acp_type: "co2".into(),
            owner: String::new(),
            source: String::new(),
            features: vec!["co2".into()],
            acp_location: LocationRef::gps(0.0, 0.0, 0.0)
                .unwrap()
                .with_parent(crates[rng.random_range(0..crates.len())].crate_id.clone()),
            acp_ts: Some(Timestamp::from_secs(1)),
        })
        .collect();
    (crates, sensors)
}

fn closure(crates: &[CrateRecord], root: &str, depth: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::from([root.to_string()]);
    let mut frontier = vec![root.to_string()];
    for _ in 0..depth {
        let next: Vec<String> = crates
            .iter()
            .filter(|c| c.parent_crate_id.as_ref().is_some_and(|p| frontier.contains(p)))
            .map(|c| c.crate_id.clone())
            .collect();
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn tree_ids(tree: &CrateTree) -> Vec<String> {
    tree.ids()
}

fn ids<'a>(it: impl IntoIterator<Item = &'a CrateRecord>) -> Vec<String> {
    it.into_iter().map(|c| c.crate_id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn indexes_agree_with_scans(seed in any::<u64>()) {
        let (mut crates, sensors) = random_store(seed, 400, 200);
        let store = MetadataStore::in_memory();
        // Children before parents: the bulk loader must order them itself.
        crates.reverse();
        store.put_crates(crates.clone()).unwrap();
        store.put_sensors(sensors.clone()).unwrap();
        crates.sort_by(|a, b| a.crate_id.cmp(&b.crate_id));

        for f in -1..4 {
            let want = ids(crates.iter().filter(|c| {
                c.acp_location.floor() == Some(f) && matches!(c.crate_type, CrateType::Room | CrateType::Floor)
            }));
            prop_assert_eq!(ids(&store.crates_on_floor(f)), want);
        }
        for t in [CrateType::Building, CrateType::Room, CrateType::Other("desk".into())] {
            prop_assert_eq!(ids(&store.crates_of_type(&t)), ids(crates.iter().filter(|c| c.crate_type == t)));
        }
        for c in crates.iter().step_by(7) {
            let id = c.crate_id.as_str();
            prop_assert_eq!(
                ids(&store.children_of(id)),
                ids(crates.iter().filter(|x| x.parent_crate_id.as_deref() == Some(id)))
            );
            let direct: Vec<String> = sensors
                .iter()
                .filter(|s| s.parent_crate_id() == Some(id))
                .map(|s| s.acp_id.clone())
                .collect();
            let got: Vec<String> = store.sensors_in_crate(id, false).unwrap().into_iter().map(|s| s.acp_id).collect();
            prop_assert_eq!(got, direct);

            let scope = closure(&crates, id, crates.len());
            let mut deep: Vec<String> = sensors
                .iter()
                .filter(|s| s.parent_crate_id().is_some_and(|p| scope.contains(p)))
                .map(|s| s.acp_id.clone())
                .collect();
            deep.sort();
            let got: Vec<String> = store.sensors_in_crate(id, true).unwrap().into_iter().map(|s| s.acp_id).collect();
            prop_assert_eq!(got, deep);

            for depth in [0, 1, 2, 40] {
                let tree = store.get_crate(id, depth).unwrap();
                let got: BTreeSet<String> = tree_ids(&tree).into_iter().collect();
                prop_assert_eq!(got, closure(&crates, id, depth));
            }
        }
    }

    #[test]
    fn duplicated_views_hold_identical_records(
        items in prop::collection::vec((0u8..6, 0u64..(4 * 86_400), 0.0f64..2000.0), 1..200)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let repo = ReadingsRepository::open(dir.path()).unwrap();
        let base = 1_589_414_400u64; // midnight UTC
        for (s, secs, co2) in &items {
            let r = SensorReading::new(format!("sim-co2-{s:06x}"), Timestamp::from_secs(base + secs), Features::from([("co2", *co2)]));
            repo.append(&r).unwrap();
        }
        let day = lines_under(&dir.path().join("day"));
        let sensor = lines_under(&dir.path().join("sensor"));
        prop_assert_eq!(day.values().sum::<usize>(), items.len());
        prop_assert_eq!(&day, &sensor);
        prop_assert!(repo.duplication_check().unwrap().is_consistent());
    }
}

// Multiset of raw lines in every .jsonl below `dir`.
fn lines_under(dir: &Path) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                for line in std::fs::read_to_string(&path).unwrap().lines() {
                    *out.entry(line.to_string()).or_default() += 1;
                }
            }
        }
    }
    out
}

#[test]
fn reference_reading_lands_in_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let repo = ReadingsRepository::open(dir.path()).unwrap();
    repo.append(&acp_core::seed::reference_reading()).unwrap();
    let day = std::fs::read_to_string(dir.path().join("day/2020-05-14.jsonl")).unwrap();
    let sensor = std::fs::read_to_string(dir.path().join("sensor/elsys-co2-041ba9/2020-05-14.jsonl")).unwrap();
    assert_eq!(day, sensor);
    assert_eq!(day.trim_end(), acp_core::seed::REFERENCE_READING_JSON);
}

#[test]
fn truncated_tail_in_day_file_is_tolerated() {
    let dir = tempfile::tempdir().unwrap();
    let repo = ReadingsRepository::open(dir.path()).unwrap();
    let r = acp_core::seed::reference_reading();
    repo.append(&r).unwrap();
    let path = dir.path().join("day/2020-05-14.jsonl");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str(&acp_core::seed::REFERENCE_READING_JSON[..40]);
    std::fs::write(&path, text).unwrap();
    assert_eq!(repo.day_readings("2020-05-14").unwrap(), vec![r]);
}

#[test]
fn thousand_sensors_retrievable() {
    let (crates, sensors) = random_store(3, 20, 1000);
    let store = MetadataStore::in_memory();
    store.put_crates(crates).unwrap();
    store.put_sensors(sensors.clone()).unwrap();
    assert_eq!(store.sensor_count(), 1000);
    for s in &sensors {
        assert_eq!(&store.get_sensor(&s.acp_id).unwrap(), s);
    }
}
