use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::Value;

/// Flat key→value run report; keys are sorted so equal runs give equal bytes.
#[derive(Debug, Default)]
pub struct Report {
    values: BTreeMap<String, Value>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.values.insert(key.into(), value.into());
        self
    }

    pub fn config(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.set(format!("config.{key}"), value)
    }

    pub fn extend(&mut self, values: BTreeMap<String, f64>) -> &mut Self {
        for (k, v) in values {
            self.set(k, v);
        }
        self
    }

    pub fn render(&self, timestamp: bool) -> String {
        let mut values = self.values.clone();
        if timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            values.insert("timestamp".into(), secs.into());
        }
        let mut text = serde_json::to_string_pretty(&values).expect("report values are plain JSON");
        text.push('\n');
        text
    }

    pub fn emit(&self, path: Option<&Path>, timestamp: bool) -> cvdsm::Result<()> {
        let text = self.render(timestamp);
        match path {
            Some(p) => std::fs::write(p, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}
