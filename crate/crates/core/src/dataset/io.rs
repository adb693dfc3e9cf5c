//! `MOREDS1`: newline-delimited JSON. Line 1 is a header object, every
//! following line one transition. Floats are written in shortest
//! round-trip form, so save/load is bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OfflineDataset, Transition};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &str = "MOREDS1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    magic: String,
    state_dim: usize,
    action_dim: usize,
    m: usize,
    count: usize,
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    s: Vec<f64>,
    a: Vec<f64>,
    r: f64,
    c: Vec<f64>,
    c_comb: f64,
    s2: Vec<f64>,
    done: bool,
}

pub(super) fn header_line(ds: &OfflineDataset) -> String {
    let header = Header {
        magic: DATASET_MAGIC.to_string(),
        state_dim: ds.state_dim,
        action_dim: ds.action_dim,
        m: ds.cost_dim,
        count: ds.len(),
        metadata: ds.metadata.clone(),
    };
    serde_json::to_string(&header).expect("header serializes")
}

pub(super) fn record_line(t: &Transition) -> String {
    let rec = Record {
        s: t.s.clone(),
        a: t.a.clone(),
        r: t.r,
        c: t.cost_vector.clone(),
        c_comb: t.combined_cost,
        s2: t.s_next.clone(),
        done: t.done,
    };
    serde_json::to_string(&rec).expect("record serializes")
}

pub fn save_dataset(dataset: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "{}", header_line(dataset)).map_err(io_err)?;
    for t in &dataset.transitions {
        writeln!(w, "{}", record_line(t)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let first = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => {
            return Err(Error::Magic {
                path: path.to_path_buf(),
                expected: DATASET_MAGIC,
                found: String::new(),
            })
        }
    };
    let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: e.to_string(),
    })?;
    let magic = raw.get("magic").and_then(|m| m.as_str()).unwrap_or_default();
    if magic != DATASET_MAGIC {
        return Err(Error::Magic {
            path: path.to_path_buf(),
            expected: DATASET_MAGIC,
            found: magic.to_string(),
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: e.to_string(),
    })?;

    let mut transitions = Vec::with_capacity(header.count);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            detail: e.to_string(),
        })?;
        let dim_check = |field: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::RecordDimension {
                    path: path.to_path_buf(),
                    line: line_no,
                    field,
                    expected,
                    found,
                })
            }
        };
        dim_check("s", header.state_dim, rec.s.len())?;
        dim_check("a", header.action_dim, rec.a.len())?;
        dim_check("c", header.m, rec.c.len())?;
        dim_check("s2", header.state_dim, rec.s2.len())?;
        if !(rec.r > 0.0) || !(rec.c_comb >= 0.0) {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                detail: format!("reward must be > 0 and cost >= 0 (r={}, c_comb={})", rec.r, rec.c_comb),
            });
        }
        transitions.push(Transition {
            s: rec.s,
            a: rec.a,
            r: rec.r,
            cost_vector: rec.c,
            combined_cost: rec.c_comb,
            s_next: rec.s2,
            done: rec.done,
        });
    }
    if transitions.len() != header.count {
        return Err(Error::CountMismatch {
            path: path.to_path_buf(),
            declared: header.count,
            found: transitions.len(),
        });
    }
    OfflineDataset::new(
        transitions,
        header.state_dim,
        header.action_dim,
        header.m,
        header.metadata,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize) -> OfflineDataset {
        let ts = (0..n)
            .map(|i| {
                let x = i as f64;
                Transition {
                    s: vec![x * 0.1, 1.0 / (x + 3.0)],
                    a: vec![(x * 0.37).sin()],
                    r: 0.5 + x.cos().abs(),
                    cost_vector: vec![0.0, x * 1e-7],
                    combined_cost: x * 1e-7,
                    s_next: vec![x * 0.1 + 0.01, 0.3],
                    done: i % 4 == 3,
                }
            })
            .collect();
        let mut meta = BTreeMap::new();
        meta.insert("kind".into(), "test".into());
        OfflineDataset::new(ts, 2, 1, 2, meta).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let ds = sample(13);
        save_dataset(&ds, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        save_dataset(&sample(10), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let truncated: Vec<&str> = text.lines().take(10).collect();
        std::fs::write(&p, truncated.join("\n")).unwrap();
        assert!(matches!(
            load_dataset(&p),
            Err(Error::CountMismatch { declared: 10, found: 9, .. })
        ));
    }

    #[test]
    fn wrong_state_length_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        save_dataset(&sample(5), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen("\"s\":[", "\"s\":[9.0,", 1);
        std::fs::write(&p, lines.join("\n")).unwrap();
        match load_dataset(&p) {
            Err(Error::RecordDimension { line, field, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(field, "s");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        save_dataset(&sample(3), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replacen("MOREDS1", "MOREDS0", 1)).unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::Magic { .. })));

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = "{not json".into();
        std::fs::write(&p, lines.join("\n")).unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::Malformed { line: 3, .. })));
    }

    fn arb_transition() -> impl Strategy<Value = Transition> {
        (
            proptest::collection::vec(proptest::num::f64::NORMAL, 3),
            proptest::collection::vec(-1.0f64..1.0, 2),
            1e-300f64..1e300,
            proptest::collection::vec(0.0f64..1e6, 2),
            proptest::collection::vec(proptest::num::f64::NORMAL, 3),
            any::<bool>(),
        )
            .prop_map(|(s, a, r, c, s_next, done)| Transition {
                combined_cost: c.iter().sum(),
                s,
                a,
                r,
                cost_vector: c,
                s_next,
                done,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(ts in proptest::collection::vec(arb_transition(), 1..20)) {
            let ds = OfflineDataset::new(ts, 3, 2, 2, BTreeMap::new()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.jsonl");
            save_dataset(&ds, &p).unwrap();
            let back = load_dataset(&p).unwrap();
            for (x, y) in ds.transitions.iter().zip(&back.transitions) {
                let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&x.s), bits(&y.s));
                prop_assert_eq!(bits(&x.s_next), bits(&y.s_next));
                prop_assert_eq!(bits(&x.a), bits(&y.a));
                prop_assert_eq!(x.r.to_bits(), y.r.to_bits());
                prop_assert_eq!(x.combined_cost.to_bits(), y.combined_cost.to_bits());
            }
        }
    }
}
