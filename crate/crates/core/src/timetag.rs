//! The `.spstag` time-tag format.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                               |
//! |-------:|-----:|-------------------------------------|
//! | 0      | 8    | magic `SPSTAG01`                    |
//! | 8      | 2    | version (currently 1)               |
//! | 10     | 1    | number of channels                  |
//! | 11     | 5    | reserved, zero                      |
//! | 16     | 4    | metadata length `m`                 |
//! | 20     | m    | UTF-8 JSON metadata                 |
//! | 20 + m | 16·k | records                             |
//!
//! A record is `timestamp_ps: u64`, `channel: u8`, `flags: u8` and six zero
//! bytes. Records are sorted by `(timestamp, channel)`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPSTAG01";
pub const VERSION: u16 = 1;
pub const PREAMBLE_LEN: usize = 20;
pub const RECORD_LEN: usize = 16;

/// Pseudo-channel used for undemultiplexed source photons.
pub const SOURCE_CHANNEL: u8 = 255;

/// Record flag: the photon is the second photon of a two-photon pulse.
pub const FLAG_IMPURITY: u8 = 0b1;
const KNOWN_FLAGS: u8 = FLAG_IMPURITY;

/// A detection record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    /// Picoseconds since the start of the run.
    pub timestamp: u64,
    pub channel: u8,
    #[serde(default)]
    pub flags: u8,
}

impl TimeTag {
    pub fn new(timestamp: u64, channel: u8) -> Self {
        Self { timestamp, channel, flags: 0 }
    }

    #[inline]
    pub fn key(&self) -> (u64, u8) {
        (self.timestamp, self.channel)
    }

    pub fn is_impurity(&self) -> bool {
        self.flags & FLAG_IMPURITY != 0
    }

    pub fn to_bytes(&self) -> [u8; RECORD_LEN] {
        let mut b = [0u8; RECORD_LEN];
        b[..8].copy_from_slice(&self.timestamp.to_le_bytes());
        b[8] = self.channel;
        b[9] = self.flags;
        b
    }
}

/// Orders by `(timestamp, channel)` only; `flags` do not take part.
pub fn tag_order(a: &TimeTag, b: &TimeTag) -> Ordering {
    a.key().cmp(&b.key())
}

/// Sorted multi-channel tag stream held in memory.
pub type TagStream = Vec<TimeTag>;

/// Timestamps of each channel `0..n_channels`, in stream order.
pub fn split_channels(tags: &[TimeTag], n_channels: usize) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new(); n_channels];
    for t in tags {
        if let Some(v) = out.get_mut(t.channel as usize) {
            v.push(t.timestamp);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagFileHeader {
    pub version: u16,
    pub n_channels: u8,
    /// Raw JSON text, kept verbatim so files round-trip byte for byte.
    pub metadata: String,
}

impl TagFileHeader {
    pub fn new(n_channels: u8, metadata: &serde_json::Value) -> Self {
        Self { version: VERSION, n_channels, metadata: metadata.to_string() }
    }

    pub fn metadata_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::from_str(&self.metadata)?)
    }

    /// Byte length of the preamble plus metadata.
    pub fn encoded_len(&self) -> usize {
        PREAMBLE_LEN + self.metadata.len()
    }

    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        if serde_json::from_str::<serde_json::Value>(&self.metadata).is_err() {
            return Err(Error::TagFormat { offset: PREAMBLE_LEN as u64, reason: "metadata is not valid JSON".into() });
        }
        let len = u32::try_from(self.metadata.len())
            .map_err(|_| Error::Capacity("metadata longer than 4 GiB".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&[self.n_channels])?;
        w.write_all(&[0u8; 5])?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        Ok(())
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut pre = [0u8; PREAMBLE_LEN];
        read_exact_at(r, &mut pre, 0, "truncated header")?;
        if &pre[..8] != MAGIC {
            return Err(Error::TagFormat { offset: 0, reason: "bad magic".into() });
        }
        let version = u16::from_le_bytes([pre[8], pre[9]]);
        if version != VERSION {
            return Err(Error::TagFormat { offset: 8, reason: format!("unsupported version {version}") });
        }
        if let Some(i) = pre[11..16].iter().position(|&b| b != 0) {
            return Err(Error::TagFormat { offset: 11 + i as u64, reason: "reserved header byte is not zero".into() });
        }
        let len = u32::from_le_bytes([pre[16], pre[17], pre[18], pre[19]]) as usize;
        let mut meta = vec![0u8; len];
        read_exact_at(r, &mut meta, PREAMBLE_LEN as u64, "truncated metadata")?;
        let metadata = String::from_utf8(meta)
            .map_err(|_| Error::TagFormat { offset: PREAMBLE_LEN as u64, reason: "metadata is not UTF-8".into() })?;
        if serde_json::from_str::<serde_json::Value>(&metadata).is_err() {
            return Err(Error::TagFormat { offset: PREAMBLE_LEN as u64, reason: "metadata is not valid JSON".into() });
        }
        Ok(Self { version, n_channels: pre[10], metadata })
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::TagFormat { offset, reason: what.into() },
        _ => Error::Io(e),
    })
}

/// Streaming writer. Rejects records that break the sort order.
pub struct TagWriter<W: Write> {
    inner: W,
    last: Option<(u64, u8)>,
    written: u64,
}

impl<W: Write> TagWriter<W> {
    pub fn new(mut inner: W, header: &TagFileHeader) -> Result<Self> {
        header.write_to(&mut inner)?;
        Ok(Self { inner, last: None, written: 0 })
    }

    pub fn write(&mut self, tag: &TimeTag) -> Result<()> {
        if let Some(prev) = self.last {
            if tag.key() < prev {
                return Err(Error::TagFormat {
                    offset: self.written,
                    reason: format!("record {:?} precedes {:?}", tag.key(), prev),
                });
            }
        }
        self.inner.write_all(&tag.to_bytes())?;
        self.last = Some(tag.key());
        self.written += 1;
        Ok(())
    }

    pub fn records_written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes a complete stream into `w`, returning the number of records.
pub fn write_stream<'a, W: Write>(
    w: W,
    header: &TagFileHeader,
    tags: impl IntoIterator<Item = &'a TimeTag>,
) -> Result<u64> {
    let mut writer = TagWriter::new(w, header)?;
    for t in tags {
        writer.write(t)?;
    }
    let n = writer.records_written();
    writer.finish()?;
    Ok(n)
}

pub fn write_file(path: &Path, header: &TagFileHeader, tags: &[TimeTag]) -> Result<u64> {
    write_stream(BufWriter::new(File::create(path)?), header, tags)
}

/// Streaming reader yielding records one at a time with bounded memory.
pub struct TagReader<R: Read> {
    inner: R,
    header: TagFileHeader,
    offset: u64,
    last: Option<(u64, u8)>,
    done: bool,
}

impl<R: Read> TagReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let header = TagFileHeader::read_from(&mut inner)?;
        let offset = header.encoded_len() as u64;
        Ok(Self { inner, header, offset, last: None, done: false })
    }

    pub fn header(&self) -> &TagFileHeader {
        &self.header
    }

    fn next_record(&mut self) -> Result<Option<TimeTag>> {
        let mut buf = [0u8; RECORD_LEN];
        let mut filled = 0;
        while filled < RECORD_LEN {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let at = self.offset;
        if filled == 0 {
            return Ok(None);
        }
        if filled < RECORD_LEN {
            return Err(Error::TagFormat { offset: at, reason: format!("truncated record ({filled} of {RECORD_LEN} bytes)") });
        }
        let mut ts = [0u8; 8];
        ts.copy_from_slice(&buf[..8]);
        let tag = TimeTag { timestamp: u64::from_le_bytes(ts), channel: buf[8], flags: buf[9] };
        if tag.flags & !KNOWN_FLAGS != 0 {
            return Err(Error::TagFormat { offset: at + 9, reason: format!("unknown flag bits {:#04x}", tag.flags) });
        }
        if let Some(i) = buf[10..].iter().position(|&b| b != 0) {
            return Err(Error::TagFormat { offset: at + 10 + i as u64, reason: "record padding is not zero".into() });
        }
        if let Some(prev) = self.last {
            if tag.key() < prev {
                return Err(Error::TagFormat {
                    offset: at,
                    reason: format!("record {:?} precedes {:?}", tag.key(), prev),
                });
            }
        }
        self.last = Some(tag.key());
        self.offset += RECORD_LEN as u64;
        Ok(Some(tag))
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TimeTag>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_stream<R: Read>(r: R) -> Result<(TagFileHeader, TagStream)> {
    let mut reader = TagReader::new(r)?;
    let mut tags = Vec::new();
    for t in reader.by_ref() {
        tags.push(t?);
    }
    Ok((reader.header, tags))
}

pub fn open_file(path: &Path) -> Result<TagReader<BufReader<File>>> {
    TagReader::new(BufReader::new(File::open(path)?))
}

pub fn read_file(path: &Path) -> Result<(TagFileHeader, TagStream)> {
    read_stream(BufReader::new(File::open(path)?))
}

/// Lazy k-way merge of sorted tag iterators.
///
/// Ties are broken by channel, then by input ordinal. An input that goes
/// backwards is reported when it is reached, with the offending record's
/// ordinal within that input as the offset.
pub struct Merge<I: Iterator<Item = TimeTag>> {
    inputs: Vec<I>,
    heap: BinaryHeap<Reverse<(u64, u8, usize)>>,
    pending: Vec<Option<TimeTag>>,
    ordinals: Vec<u64>,
    failed: bool,
}

impl<I: Iterator<Item = TimeTag>> Merge<I> {
    pub fn new(inputs: Vec<I>) -> Self {
        let mut m = Self {
            pending: vec![None; inputs.len()],
            ordinals: vec![0; inputs.len()],
            heap: BinaryHeap::with_capacity(inputs.len()),
            inputs,
            failed: false,
        };
        for i in 0..m.inputs.len() {
            m.refill(i);
        }
        m
    }

    fn refill(&mut self, i: usize) {
        if let Some(t) = self.inputs[i].next() {
            self.heap.push(Reverse((t.timestamp, t.channel, i)));
            self.pending[i] = Some(t);
        }
    }
}

impl<I: Iterator<Item = TimeTag>> Iterator for Merge<I> {
    type Item = Result<TimeTag>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let Reverse((_, _, i)) = self.heap.pop()?;
        let tag = self.pending[i].take().expect("heap entry without pending tag");
        self.ordinals[i] += 1;
        self.refill(i);
        if let Some(next) = &self.pending[i] {
            if next.key() < tag.key() {
                self.failed = true;
                return Some(Err(Error::TagFormat {
                    offset: self.ordinals[i],
                    reason: format!("merge input {i} is not sorted: {:?} follows {:?}", next.key(), tag.key()),
                }));
            }
        }
        Some(Ok(tag))
    }
}

pub fn merge<I: Iterator<Item = TimeTag>>(inputs: Vec<I>) -> Merge<I> {
    Merge::new(inputs)
}

/// Merges in-memory streams into one sorted vector.
pub fn merge_streams(streams: &[&[TimeTag]]) -> Result<TagStream> {
    let total = streams.iter().map(|s| s.len()).sum();
    let mut out = Vec::with_capacity(total);
    for t in merge(streams.iter().map(|s| s.iter().copied()).collect()) {
        out.push(t?);
    }
    Ok(out)
}

/// The sub-slice of a sorted stream with `t0 <= timestamp < t1`.
pub fn window(tags: &[TimeTag], t0: u64, t1: u64) -> &[TimeTag] {
    let lo = tags.partition_point(|t| t.timestamp < t0);
    let hi = lo + tags[lo..].partition_point(|t| t.timestamp < t1);
    &tags[lo..hi]
}

/// Iterator adaptor yielding the tags of a sorted stream in `[t0, t1)`.
pub fn window_iter<I: Iterator<Item = TimeTag>>(
    iter: I,
    t0: u64,
    t1: u64,
) -> impl Iterator<Item = TimeTag> {
    iter.skip_while(move |t| t.timestamp < t0).take_while(move |t| t.timestamp < t1)
}
