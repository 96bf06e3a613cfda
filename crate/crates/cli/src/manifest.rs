//! Manifest and utterance-map files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub wav: String,
    pub speaker: String,
    pub domain: Option<String>,
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `wav-path speaker-id [domain-id]` per line; `#` comments and blank lines
/// are skipped.
pub fn parse_manifest(text: &str) -> CliResult<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => {}
            [wav, spk] => out.push(ManifestEntry { wav: wav.to_string(), speaker: spk.to_string(), domain: None }),
            [wav, spk, dom] => out.push(ManifestEntry {
                wav: wav.to_string(),
                speaker: spk.to_string(),
                domain: Some(dom.to_string()),
            }),
            _ => return Err(CliError::Config(format!("manifest line {}: expected 2 or 3 fields", i + 1))),
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("manifest is empty".into()));
    }
    Ok(out)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&e.wav);
        s.push(' ');
        s.push_str(&e.speaker);
        if let Some(d) = &e.domain {
            s.push(' ');
            s.push_str(d);
        }
        s.push('\n');
    }
    s
}

/// Dense indices for labels, in sorted label order.
pub fn index_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut m: BTreeMap<String, usize> = labels.into_iter().map(|l| (l.to_string(), 0)).collect();
    for (i, v) in m.values_mut().enumerate() {
        *v = i;
    }
    m
}

/// `utterance-id wav-path` per line. Repeated ids collect several files.
pub fn parse_utterance_map(text: &str) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => {}
            [id, wav] => out.entry(id.to_string()).or_default().push(wav.to_string()),
            _ => return Err(CliError::Config(format!("utterance map line {}: expected 2 fields", i + 1))),
        }
    }
    Ok(out)
}

pub fn format_utterance_map(map: &BTreeMap<String, Vec<String>>) -> String {
    let mut s = String::new();
    for (id, wavs) in map {
        for w in wavs {
            s.push_str(&format!("{id} {w}\n"));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let text = "a.wav s1 d0\n# comment\n\nb.wav s2\n";
        let m = parse_manifest(text).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].domain, None);
        assert_eq!(parse_manifest(&format_manifest(&m)).unwrap(), m);
        assert!(parse_manifest("a.wav").is_err());
        assert!(parse_manifest("a b c d").is_err());
        assert!(parse_manifest("\n").is_err());
    }

    #[test]
    fn labels_are_indexed_in_sorted_order() {
        let m = index_labels(["b", "a", "b", "c"]);
        assert_eq!(m["a"], 0);
        assert_eq!(m["b"], 1);
        assert_eq!(m["c"], 2);
    }

    #[test]
    fn repeated_ids_collect_files() {
        let m = parse_utterance_map("e1 x.wav\ne1 y.wav\nt1 z.wav\n").unwrap();
        assert_eq!(m["e1"], vec!["x.wav", "y.wav"]);
        assert_eq!(parse_utterance_map(&format_utterance_map(&m)).unwrap(), m);
        assert!(parse_utterance_map("e1").is_err());
    }
}
