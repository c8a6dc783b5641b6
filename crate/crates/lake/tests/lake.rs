use std::sync::Arc;

use chrono::{TimeZone, Utc};
use ecg_core::{DeviceKind, EcgRecording, PredictionResult, RawDeviceRecord, RecordingId, StageTimings, StudyId};
use ecg_lake::{Lake, LakeError, LakeOptions, Outcome, ProcessingStatus, PutOutcome};
use proptest::prelude::*;

fn t0() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 8, 0, 0).unwrap()
}

fn pair(bytes: Vec<u8>, study: &StudyId, samples: Vec<f64>) -> (RawDeviceRecord, EcgRecording) {
    let raw = RawDeviceRecord {
        device: DeviceKind::Kardia,
        bytes,
        source_uri: "test://inbox".into(),
        fetched_at: t0(),
        available_at: None,
    };
    let rec = EcgRecording {
        recording_id: RecordingId::of_bytes(&raw.bytes),
        device: DeviceKind::Kardia,
        study_id: study.clone(),
        sample_rate_hz: 100,
        lead: "I".into(),
        samples,
        recorded_at: t0() - chrono::Duration::seconds(30),
        received_at: t0() + chrono::Duration::milliseconds(250),
    };
    (raw, rec)
}

fn simple(lake: &Lake, tag: &str) -> (RawDeviceRecord, EcgRecording) {
    let study = lake.register_study("MRN-001").unwrap();
    pair(format!("payload {tag}").into_bytes(), &study, (0..3000).map(|i| (i as f64 * 0.01).sin()).collect())
}

fn result(id: &RecordingId, model: &str, p: f64, secs: i64) -> PredictionResult {
    let timings = StageTimings::new(0.0, 19.17, 11.49, 2.35).unwrap();
    PredictionResult::new(id.clone(), model, p, 0.5, timings, t0() + chrono::Duration::seconds(secs)).unwrap()
}

fn walk(dir: &std::path::Path, out: &mut Vec<std::path::PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() { walk(&p, out) } else { out.push(p) }
    }
}

#[test]
fn study_registration() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    let a = lake.register_study("MRN-001").unwrap();
    assert_eq!(lake.register_study("MRN-001").unwrap(), a);
    let b = lake.register_study("MRN-002").unwrap();
    assert_ne!(a, b);
    assert_eq!(a.as_str().len(), 24);
    assert!(!a.as_str().contains("MRN"));
    assert!(matches!(lake.register_study(""), Err(LakeError::BadRequest(_))));
    drop(lake);
    // stable across reopen: same key, same map
    let lake = Lake::open(dir.path()).unwrap();
    assert_eq!(lake.register_study("MRN-001").unwrap(), a);
    // a different instance key yields a different pseudonym
    let other = tempfile::tempdir().unwrap();
    assert_ne!(Lake::open(other.path()).unwrap().register_study("MRN-001").unwrap(), a);
}

#[test]
fn put_dedupe_and_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    let (raw, rec) = simple(&lake, "a");
    let first = lake.put_recording(&raw, &rec).unwrap();
    assert!(matches!(&first, PutOutcome::Inserted(e) if e.index_seq == 1));
    let index_before = std::fs::read(dir.path().join("index.jsonl")).unwrap();
    let again = lake.put_recording(&raw, &rec).unwrap();
    assert!(again.is_duplicate());
    assert_eq!(again.entry(), first.entry());
    assert_eq!(std::fs::read(dir.path().join("index.jsonl")).unwrap(), index_before);
    let (raw2, rec2) = simple(&lake, "b");
    assert_eq!(lake.put_recording(&raw2, &rec2).unwrap().entry().index_seq, 2);
    assert_eq!(first.entry().blob_path, format!("blobs/{}/{}", &rec.recording_id.as_str()[..2], rec.recording_id));
}

#[test]
fn put_rejects_mismatched_digest() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    let (raw, mut rec) = simple(&lake, "a");
    rec.recording_id = RecordingId::of_bytes(b"other");
    assert!(matches!(lake.put_recording(&raw, &rec), Err(LakeError::BadRequest(_))));
    assert!(lake.is_empty());
}

#[test]
fn list_since_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    assert!(lake.list_since(0).unwrap().is_empty());
    for i in 0..5 {
        let (raw, rec) = simple(&lake, &i.to_string());
        lake.put_recording(&raw, &rec).unwrap();
    }
    let seqs = |c| lake.list_since(c).unwrap().iter().map(|e| e.index_seq).collect::<Vec<_>>();
    assert_eq!(seqs(0), vec![1, 2, 3, 4, 5]);
    assert_eq!(seqs(3), vec![4, 5]);
    assert!(seqs(5).is_empty());
    assert!(seqs(99).is_empty());
}

#[test]
fn concurrent_writers_leave_no_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Arc::new(Lake::open(dir.path()).unwrap());
    let study = lake.register_study("MRN-CONC").unwrap();
    let handles: Vec<_> = (0..2)
        .map(|w| {
            let lake = lake.clone();
            let study = study.clone();
            std::thread::spawn(move || {
                for i in 0..500 {
                    let (raw, rec) = pair(format!("writer {w} item {i}").into_bytes(), &study, vec![0.1, 0.2, 0.3]);
                    assert!(!lake.put_recording(&raw, &rec).unwrap().is_duplicate());
                }
            })
        })
        .collect();
    handles.into_iter().for_each(|h| h.join().unwrap());
    let seqs: Vec<u64> = lake.list_since(0).unwrap().iter().map(|e| e.index_seq).collect();
    assert_eq!(seqs, (1..=1000).collect::<Vec<_>>());
    drop(lake);
    let reopened = Lake::open(dir.path()).unwrap();
    assert_eq!(reopened.len(), 1000);
}

#[test]
fn results_round_trip_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    let (raw, rec) = simple(&lake, "a");
    lake.put_recording(&raw, &rec).unwrap();
    let id = &rec.recording_id;
    let rs = [result(id, "structural", 0.71, 3), result(id, "lvsd", 0.2, 1), result(id, "hcm", 0.5, 2)];
    for r in &rs {
        lake.put_result(r).unwrap();
    }
    let got = lake.get_results(id).unwrap();
    assert_eq!(got.iter().map(|r| r.model_id.as_str()).collect::<Vec<_>>(), ["lvsd", "hcm", "structural"]);
    assert_eq!(got[0], rs[1]);
    drop(lake);
    let lake = Lake::open(dir.path()).unwrap();
    assert_eq!(lake.get_results(id).unwrap(), got);
    assert!(matches!(lake.get_results(&RecordingId::of_bytes(b"never")), Err(LakeError::NotFound(_))));
    assert!(lake.put_result(&result(&RecordingId::of_bytes(b"never"), "lvsd", 0.1, 0)).is_err());
}

#[test]
fn status_follows_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    let (raw, rec) = simple(&lake, "a");
    lake.put_recording(&raw, &rec).unwrap();
    let id = rec.recording_id.clone();
    assert_eq!(lake.status(&id).unwrap(), ProcessingStatus::Pending);
    lake.append_outcome(&Outcome::Rejected { recording_id: id.clone(), code: "FlatSignal".into(), reason: "flat".into(), produced_at: t0() })
        .unwrap();
    assert_eq!(lake.status(&id).unwrap().as_str(), "rejected");
}

#[test]
fn orphan_blob_after_crash_is_invisible_and_reput_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (raw, rec);
    {
        let lake = Lake::open(dir.path()).unwrap();
        let (r0, c0) = simple(&lake, "kept");
        lake.put_recording(&r0, &c0).unwrap();
        (raw, rec) = simple(&lake, "orphan");
        lake.write_blobs(&raw, &rec).unwrap();
        // process dies here, before the index append
    }
    let lake = Lake::open(dir.path()).unwrap();
    assert_eq!(lake.list_since(0).unwrap().len(), 1);
    assert!(lake.entry(&rec.recording_id).is_none());
    assert!(matches!(lake.read_blob(&rec.recording_id), Err(LakeError::NotFound(_))));
    let put = lake.put_recording(&raw, &rec).unwrap();
    assert!(matches!(put, PutOutcome::Inserted(e) if e.index_seq == 2));
}

#[test]
fn torn_index_tail_is_dropped_on_open() {
    let dir = tempfile::tempdir().unwrap();
    {
        let lake = Lake::open(dir.path()).unwrap();
        let (raw, rec) = simple(&lake, "a");
        lake.put_recording(&raw, &rec).unwrap();
    }
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().append(true).open(dir.path().join("index.jsonl")).unwrap();
    f.write_all(b"{\"index_seq\":2,\"recording_id\":\"ab").unwrap();
    drop(f);
    let lake = Lake::open(dir.path()).unwrap();
    assert_eq!(lake.len(), 1);
    let (raw, rec) = simple(&lake, "b");
    assert_eq!(lake.put_recording(&raw, &rec).unwrap().entry().index_seq, 2);
    drop(lake);
    assert_eq!(Lake::open(dir.path()).unwrap().len(), 2);
}

#[test]
fn external_ids_only_in_registry() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    for (ext, tag) in [("MRN-001", "a"), ("MRN-001", "b"), ("MRN-002", "c")] {
        let study = lake.register_study(ext).unwrap();
        let (raw, rec) = pair(format!("payload {tag}").into_bytes(), &study, vec![1.0, 2.0]);
        lake.put_recording(&raw, &rec).unwrap();
        lake.put_result(&result(&rec.recording_id, "lvsd", 0.4, 1)).unwrap();
    }
    let mut files = Vec::new();
    walk(dir.path(), &mut files);
    assert!(files.len() > 6);
    for f in files {
        let bytes = std::fs::read(&f).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        if f.file_name().unwrap() == "registry.json" {
            assert!(text.contains("MRN-001"));
        } else {
            assert!(!text.contains("MRN-001") && !text.contains("MRN-002"), "{} leaks an external id", f.display());
        }
    }
}

#[test]
fn index_line_layout_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let lake = Lake::open(dir.path()).unwrap();
    let study: StudyId = "0123456789abcdef01234567".parse().unwrap();
    let (raw, rec) = pair(b"golden payload".to_vec(), &study, vec![0.5]);
    lake.put_recording(&raw, &rec).unwrap();
    let line = std::fs::read_to_string(dir.path().join("index.jsonl")).unwrap();
    let id = RecordingId::of_bytes(b"golden payload");
    assert_eq!(
        line,
        format!(
            "{{\"index_seq\":1,\"recording_id\":\"{id}\",\"device\":\"kardia\",\"study_id\":\"0123456789abcdef01234567\",\
             \"received_at\":\"2024-05-02T08:00:00.250Z\",\"blob_path\":\"blobs/{}/{id}\"}}\n",
            &id.as_str()[..2]
        )
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn blob_round_trip_is_byte_exact(bytes in prop::collection::vec(any::<u8>(), 1..2048)) {
        thread_local! {
            static LAKE: (tempfile::TempDir, Lake) = {
                let dir = tempfile::tempdir().unwrap();
                let lake = Lake::open_with(dir.path(), LakeOptions { sync: false }).unwrap();
                (dir, lake)
            };
        }
        LAKE.with(|(_, lake)| {
            let study = lake.register_study("MRN-PROP").unwrap();
            let (raw, rec) = pair(bytes.clone(), &study, vec![0.25]);
            lake.put_recording(&raw, &rec).unwrap();
            assert_eq!(lake.read_blob(&rec.recording_id).unwrap(), bytes);
        });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_recording_round_trips_bitwise(
        samples in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..400),
        tag in any::<u64>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let lake = Lake::open_with(dir.path(), LakeOptions { sync: false }).unwrap();
        let study = lake.register_study("MRN-RT").unwrap();
        let (raw, rec) = pair(tag.to_le_bytes().to_vec(), &study, samples);
        lake.put_recording(&raw, &rec).unwrap();
        let back = lake.get_recording(&rec.recording_id).unwrap().recording;
        prop_assert_eq!(back.samples.len(), rec.samples.len());
        for (a, b) in back.samples.iter().zip(&rec.samples) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back, rec);
    }
}
