//! JSON-lines dataset files: a header line, then one instance per line with
//! its positive class ids.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassMeta, Dataset, GeneratorConfig, Instance};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    n_classes: usize,
    d_in: usize,
    class_meta: Vec<ClassMeta>,
    generator_config: Option<GeneratorConfig>,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    features: Vec<f64>,
    labels: Vec<usize>,
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let header = Header {
        format_version: DATASET_VERSION,
        n_classes: ds.n_classes,
        d_in: ds.d_in,
        class_meta: ds.class_meta.clone(),
        generator_config: ds.generator_config.clone(),
        seed: ds.seed,
    };
    let io_err = |e| Error::io("<dataset stream>", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io_err)?;
    for inst in &ds.instances {
        let row = Row {
            features: inst.features.clone(),
            labels: inst.positives().collect(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut lines = BufReader::new(input).lines();
    let parse_err = |line: usize, detail: String| Error::Parse { line, detail };

    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?
        .map_err(|e| parse_err(1, e.to_string()))?;
    let probe: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    let version = probe
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| parse_err(1, "header lacks format_version".into()))?;
    if version != u64::from(DATASET_VERSION) {
        return Err(Error::Version {
            found: version as u32,
            expected: DATASET_VERSION,
        });
    }
    let header: Header = serde_json::from_value(probe).map_err(|e| parse_err(1, e.to_string()))?;

    let mut instances = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let idx = instances.len();
        let mut labels = vec![false; header.n_classes];
        for &c in &row.labels {
            if c >= header.n_classes {
                return Err(Error::Validation(format!(
                    "instance {idx}: label {c} outside {} classes",
                    header.n_classes
                )));
            }
            labels[c] = true;
        }
        instances.push(Instance {
            features: row.features,
            labels,
        });
    }

    let ds = Dataset {
        instances,
        class_meta: header.class_meta,
        n_classes: header.n_classes,
        d_in: header.d_in,
        generator_config: header.generator_config,
        seed: header.seed,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn small() -> Dataset {
        let cfg = GeneratorConfig {
            head_count: 40,
            imbalance_ratio: 10.0,
            n_classes: 5,
            d_sig: 3,
            ..Default::default()
        };
        generate_synthetic(&cfg, 2).unwrap()
    }

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip() {
        let ds = small();
        let back = read_dataset(bytes(&ds).as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_file_reports_line() {
        let buf = bytes(&small());
        let cut = &buf[..buf.len() - 10];
        match read_dataset(cut) {
            Err(Error::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_names_instance() {
        let text = String::from_utf8(bytes(&small())).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[3] = lines[3].replace("\"labels\":[", "\"labels\":[7,");
        match read_dataset(lines.join("\n").as_bytes()) {
            Err(Error::Validation(m)) => assert!(m.contains("instance 2"), "{m}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let text = String::from_utf8(bytes(&small())).unwrap();
        let text = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(
            read_dataset(text.as_bytes()),
            Err(Error::Version { found: 2, .. })
        ));
    }
}
