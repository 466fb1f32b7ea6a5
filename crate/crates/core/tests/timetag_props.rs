use proptest::prelude::*;
use spsim::timetag::{
    merge_streams, read_stream, window, window_iter, write_stream, TagFileHeader, TimeTag, FLAG_IMPURITY,
};

fn header() -> TagFileHeader {
    TagFileHeader::new(6, &serde_json::json!({ "run": "props", "seed": 11 }))
}

fn encode(tags: &[TimeTag]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_stream(&mut buf, &header(), tags).unwrap();
    buf
}

/// Sorted stream built from gaps so that equal timestamps occur.
fn sorted_stream(max_len: usize) -> impl Strategy<Value = Vec<TimeTag>> {
    prop::collection::vec((0u64..50, 0u8..6, any::<bool>()), 0..max_len).prop_map(|raw| {
        let mut t = 0u64;
        let mut out: Vec<TimeTag> = raw
            .into_iter()
            .map(|(gap, ch, imp)| {
                t += gap;
                TimeTag { timestamp: t, channel: ch, flags: if imp { FLAG_IMPURITY } else { 0 } }
            })
            .collect();
        out.sort_by_key(|t| t.key());
        out
    })
}

proptest! {
    #[test]
    fn write_read_write_is_byte_identical(tags in sorted_stream(300)) {
        let bytes = encode(&tags);
        let (h, back) = read_stream(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &tags);
        prop_assert_eq!(&h, &header());
        let mut again = Vec::new();
        write_stream(&mut again, &h, &back).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn merge_equals_sort(streams in prop::collection::vec(sorted_stream(120), 0..6)) {
        let refs: Vec<&[TimeTag]> = streams.iter().map(|s| s.as_slice()).collect();
        let merged = merge_streams(&refs).unwrap();
        let mut all: Vec<TimeTag> = streams.concat();
        all.sort_by_key(|t| t.key());
        let keys = |v: &[TimeTag]| v.iter().map(|t| t.key()).collect::<Vec<_>>();
        prop_assert_eq!(keys(&merged), keys(&all));
        let mut a = merged.clone();
        let mut b = all.clone();
        a.sort_by_key(|t| (t.key(), t.flags));
        b.sort_by_key(|t| (t.key(), t.flags));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn windows_partition_the_stream(tags in sorted_stream(300), cuts in prop::collection::vec(0u64..8000, 1..6)) {
        let mut cuts = cuts;
        cuts.sort_unstable();
        let mut edges = vec![0u64];
        edges.extend(cuts);
        edges.push(u64::MAX);
        let mut rebuilt = Vec::new();
        for w in edges.windows(2) {
            let part = window(&tags, w[0], w[1]);
            prop_assert!(part.iter().all(|t| t.timestamp >= w[0] && t.timestamp < w[1]));
            let lazy: Vec<TimeTag> = window_iter(tags.iter().copied(), w[0], w[1]).collect();
            prop_assert_eq!(&lazy[..], part);
            rebuilt.extend_from_slice(part);
        }
        prop_assert_eq!(rebuilt, tags);
    }
}

#[test]
fn million_tag_round_trip() {
    let tags: Vec<TimeTag> = (0..1_000_000u64)
        .map(|i| TimeTag {
            timestamp: i * 12_100 + (i * 7919) % 997,
            channel: (i % 6) as u8,
            flags: if i % 50 == 0 { FLAG_IMPURITY } else { 0 },
        })
        .collect();
    let bytes = encode(&tags);
    assert_eq!(bytes.len(), header().encoded_len() + 16 * tags.len());
    let (h, back) = read_stream(bytes.as_slice()).unwrap();
    assert_eq!(back, tags);
    let mut again = Vec::new();
    write_stream(&mut again, &h, &back).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.spstag");
    let tags = vec![TimeTag::new(5, 0), TimeTag::new(5, 3), TimeTag::new(9, 1)];
    spsim::timetag::write_file(&path, &header(), &tags).unwrap();
    let (h, back) = spsim::timetag::read_file(&path).unwrap();
    assert_eq!(back, tags);
    assert_eq!(h.metadata_json().unwrap()["seed"], 11);
    assert_eq!(std::fs::read(&path).unwrap(), encode(&tags));
}
