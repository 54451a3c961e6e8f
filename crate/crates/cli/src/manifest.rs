//! Flat `key=value` manifest files: one UTF-8 pair per line, written in a
//! fixed key order so reruns produce identical bytes.

use std::fs;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pairs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut text = String::new();
        for (k, v) in &self.pairs {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        fs::write(path, text)
    }

    pub fn read(path: impl AsRef<Path>) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut pairs = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("manifest line without '=': {line:?}"),
                    ))
                }
            }
        }
        Ok(Manifest { pairs })
    }
}
