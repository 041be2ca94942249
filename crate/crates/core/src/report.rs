//! JSON run reports: every report carries the version, the full
//! configuration, the seed, wall-clock time and the tolerances in force.

use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Version string of the form v<crate version>-g<git describe>.
pub const VERSION: &str = env!("KPGEOM_VERSION");

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report<T> {
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
    pub tolerances: BTreeMap<String, f64>,
    pub result: T,
}

/// Collects report metadata while a command runs.
pub struct ReportBuilder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    tolerances: BTreeMap<String, f64>,
    start: Instant,
    started_unix_s: f64,
}

impl ReportBuilder {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Self {
        ReportBuilder {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            tolerances: BTreeMap::new(),
            start: Instant::now(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
        }
    }

    pub fn tolerance(mut self, name: &str, value: f64) -> Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    pub fn finish<T>(self, result: T) -> Report<T> {
        Report {
            version: VERSION.to_string(),
            command: self.command,
            config: self.config,
            seed: self.seed,
            threads: rayon::current_num_threads(),
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.start.elapsed().as_secs_f64(),
            tolerances: self.tolerances,
            result,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_embeds_metadata() {
        #[derive(Serialize)]
        struct Cfg {
            r: f64,
        }
        let rep = ReportBuilder::new("moments", &Cfg { r: 0.5 }, Some(7)).tolerance("tube", 1e-3).finish(42);
        let v = serde_json::to_value(&rep).unwrap();
        assert!(v["version"].as_str().unwrap().starts_with('v'));
        assert_eq!(v["config"]["r"], 0.5);
        assert_eq!(v["seed"], 7);
        assert_eq!(v["tolerances"]["tube"], 1e-3);
        assert_eq!(v["result"], 42);
        assert!(v["wall_clock_s"].as_f64().unwrap() >= 0.0);
    }
}
