use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{sha256, CommitmentError, Digest};
use crate::prefix::PrefixKey;

const CHAIN_TAG: &[u8] = b"phashreg/ledger/v1";

/// One root update.
///
/// Text form, one record per line, space separated:
/// `seq timestamp prefix version root chain`, where `chain` digests the
/// record's fields together with the previous record's `chain`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub prefix: PrefixKey,
    pub version: u64,
    pub root: Digest,
    pub chain: Digest,
}

impl LedgerRecord {
    fn chain_digest(
        prev: &Digest,
        seq: u64,
        timestamp: &DateTime<Utc>,
        prefix: PrefixKey,
        version: u64,
        root: &Digest,
    ) -> Digest {
        let ts = timestamp.timestamp().to_be_bytes();
        sha256(&[
            CHAIN_TAG,
            &prev.0,
            &seq.to_be_bytes(),
            &ts,
            &prefix.0.to_be_bytes(),
            &version.to_be_bytes(),
            &root.0,
        ])
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.seq,
            self.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            self.prefix,
            self.version,
            self.root,
            self.chain
        )
    }

    pub fn parse_line(line: &str, lineno: usize) -> Result<Self, CommitmentError> {
        let err = |reason: &str| CommitmentError::LedgerFormat {
            line: lineno,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(' ').collect();
        let [seq, ts, prefix, version, root, chain] = fields[..] else {
            return Err(err("expected 6 fields"));
        };
        Ok(LedgerRecord {
            seq: seq.parse().map_err(|_| err("bad sequence"))?,
            timestamp: DateTime::parse_from_rfc3339(ts)
                .map_err(|_| err("bad timestamp"))?
                .with_timezone(&Utc),
            prefix: PrefixKey::from_hex(prefix).map_err(|_| err("bad prefix"))?,
            version: version.parse().map_err(|_| err("bad version"))?,
            root: Digest::from_hex(root).map_err(|_| err("bad root"))?,
            chain: Digest::from_hex(chain).map_err(|_| err("bad chain digest"))?,
        })
    }
}

/// Append-only, digest-chained log of root commitments.
#[derive(Clone, Debug, Default)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn latest(&self) -> Option<&LedgerRecord> {
        self.records.last()
    }

    fn head_chain(&self) -> Digest {
        self.records.last().map(|r| r.chain).unwrap_or(Digest::ZERO)
    }

    /// Build the next record without appending it.
    pub fn next_record(
        &self,
        timestamp: DateTime<Utc>,
        prefix: PrefixKey,
        version: u64,
        root: Digest,
    ) -> LedgerRecord {
        let seq = self.records.len() as u64;
        // the chain covers whole seconds, matching the text form
        let timestamp = DateTime::from_timestamp(timestamp.timestamp(), 0).unwrap_or(timestamp);
        let chain =
            LedgerRecord::chain_digest(&self.head_chain(), seq, &timestamp, prefix, version, &root);
        LedgerRecord {
            seq,
            timestamp,
            prefix,
            version,
            root,
            chain,
        }
    }

    /// Append a record produced by [`next_record`](Self::next_record).
    pub fn push(&mut self, record: LedgerRecord) -> Result<(), CommitmentError> {
        self.check_next(&record)?;
        self.records.push(record);
        Ok(())
    }

    pub fn append(
        &mut self,
        timestamp: DateTime<Utc>,
        prefix: PrefixKey,
        version: u64,
        root: Digest,
    ) -> &LedgerRecord {
        let rec = self.next_record(timestamp, prefix, version, root);
        self.records.push(rec);
        self.records.last().expect("just pushed")
    }

    fn check_next(&self, rec: &LedgerRecord) -> Result<(), CommitmentError> {
        let expect_seq = self.records.len() as u64;
        if rec.seq != expect_seq {
            return Err(CommitmentError::ChainBroken(rec.seq));
        }
        let want = LedgerRecord::chain_digest(
            &self.head_chain(),
            rec.seq,
            &rec.timestamp,
            rec.prefix,
            rec.version,
            &rec.root,
        );
        if want != rec.chain {
            return Err(CommitmentError::ChainBroken(rec.seq));
        }
        Ok(())
    }

    /// Re-derive every chain digest from the genesis value.
    pub fn verify_chain(&self) -> Result<(), CommitmentError> {
        let mut replay = Ledger::new();
        for r in &self.records {
            replay.push(r.clone())?;
        }
        Ok(())
    }

    /// Load and chain-check a ledger file. A final line without a trailing
    /// newline is a torn append and is dropped.
    pub fn load(path: &Path) -> Result<Self, CommitmentError> {
        let mut ledger = Ledger::new();
        if !path.exists() {
            return Ok(ledger);
        }
        let mut reader = BufReader::new(File::open(path)?);
        let mut buf = String::new();
        let mut lineno = 0;
        loop {
            buf.clear();
            if reader.read_line(&mut buf)? == 0 {
                break;
            }
            lineno += 1;
            let Some(line) = buf.strip_suffix('\n') else {
                break;
            };
            let rec = LedgerRecord::parse_line(line, lineno)?;
            ledger.push(rec)?;
        }
        Ok(ledger)
    }

    /// Append `records[from..]` to the file at `path`.
    pub fn append_to_file(&self, path: &Path, from: usize) -> Result<(), CommitmentError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = BufWriter::new(file);
        for r in &self.records[from.min(self.records.len())..] {
            writeln!(w, "{}", r.to_line())?;
        }
        w.flush()?;
        w.get_ref().sync_data()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), CommitmentError> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            writeln!(w, "{}", r.to_line())?;
        }
        w.flush()?;
        w.get_ref().sync_data()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + s, 0).unwrap()
    }

    fn sample(n: usize) -> Ledger {
        let mut l = Ledger::new();
        for i in 0..n {
            l.append(
                ts(i as i64),
                PrefixKey(i as u16),
                1,
                sha256(&[format!("{i}").as_bytes()]),
            );
        }
        l
    }

    #[test]
    fn sequences_are_contiguous_and_chained() {
        let l = sample(10);
        for (i, r) in l.records().iter().enumerate() {
            assert_eq!(r.seq, i as u64);
        }
        l.verify_chain().unwrap();
    }

    #[test]
    fn editing_history_breaks_the_chain() {
        let mut l = sample(10);
        l.records[4].root = sha256(&[b"rewritten"]);
        assert!(matches!(
            l.verify_chain(),
            Err(CommitmentError::ChainBroken(4))
        ));
    }

    #[test]
    fn file_round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.log");
        let l = sample(5);
        l.append_to_file(&path, 0).unwrap();
        let back = Ledger::load(&path).unwrap();
        assert_eq!(back.records(), l.records());

        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("5 2023-11-14T22:13:25Z 00");
        std::fs::write(&path, &text).unwrap();
        assert_eq!(Ledger::load(&path).unwrap().len(), 5);
    }

    #[test]
    fn line_format() {
        let l = sample(1);
        let line = l.records()[0].to_line();
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 6);
        assert_eq!(parts[0], "0");
        assert_eq!(parts[1], "2023-11-14T22:13:20Z");
        assert_eq!(parts[2], "0000");
        assert_eq!(parts[4].len(), 64);
        assert_eq!(LedgerRecord::parse_line(&line, 1).unwrap(), l.records()[0]);
        assert!(LedgerRecord::parse_line("1 2 3", 1).is_err());
    }
}
