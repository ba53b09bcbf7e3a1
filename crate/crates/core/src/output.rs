//! Versioned text outputs: per-run CSV time series and key-value summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting, so repeated
//! identical runs produce byte-identical files. Wall-clock time goes to a
//! separate `timing.txt` for the same reason.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::Result;
use crate::stepper::DiagnosticsRecord;

pub const TIMESERIES_HEADER: &str = "# fsi-timeseries v1";
pub const TIMESERIES_COLUMNS: &str =
    "step,t,kinetic,elastic,energy,v_h1,eta_h2_solid,q_l2,constraint,min_det,newton_iterations,residual,z_proxy";
pub const SUMMARY_HEADER: &str = "# fsi-summary v1";
pub const CONFIG_ECHO_MARKER: &str = "# --- config echo ---";

pub fn timeseries_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = format!("{TIMESERIES_HEADER}\n{TIMESERIES_COLUMNS}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.t,
            r.kinetic,
            r.elastic,
            r.energy,
            r.v_h1,
            r.eta_h2_solid,
            r.q_l2,
            r.constraint,
            r.min_det,
            r.newton_iterations,
            r.residual,
            r.z_proxy
        );
    }
    s
}

/// Verdict of one experiment together with its measured values.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub details: Vec<(String, String)>,
}

impl Verdict {
    pub fn new(name: impl Into<String>, pass: bool) -> Self {
        Verdict {
            name: name.into(),
            pass,
            details: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.details.push((key.into(), value.to_string()));
        self
    }

    pub fn label(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Key-value run summary. The config echo at the end parses back to the
/// configuration that produced it.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub verdicts: Vec<Verdict>,
    pub values: Vec<(String, String)>,
    pub config: Option<RunConfig>,
}

impl RunSummary {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.values.push((key.into(), value.to_string()));
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{SUMMARY_HEADER}\n");
        for v in &self.verdicts {
            let _ = writeln!(s, "verdict.{} = {}", v.name, v.label());
            for (k, val) in &v.details {
                let _ = writeln!(s, "{}.{} = {}", v.name, k, val);
            }
        }
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(cfg) = &self.config {
            let _ = writeln!(s, "{CONFIG_ECHO_MARKER}");
            for line in cfg.emit().lines() {
                let _ = writeln!(s, "#| {line}");
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Recover the configuration echoed at the end of a rendered summary.
pub fn config_from_summary(text: &str) -> Result<Option<RunConfig>> {
    let Some((_, tail)) = text.split_once(CONFIG_ECHO_MARKER) else {
        return Ok(None);
    };
    let body: String = tail
        .lines()
        .filter_map(|l| l.strip_prefix("#| ").or_else(|| l.strip_prefix("#|")))
        .map(|l| format!("{l}\n"))
        .collect();
    RunConfig::parse_str(&body).map(Some)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_echo_round_trips() {
        let cfg = RunConfig::default().with_kappa(0.25);
        let mut s = RunSummary {
            config: Some(cfg.clone()),
            ..Default::default()
        };
        s.verdicts.push(Verdict::new("run", true).with("t_star", 0.2));
        s.push("steps", 200);
        let text = s.render();
        assert!(text.starts_with(SUMMARY_HEADER));
        assert!(text.contains("verdict.run = PASS\nrun.t_star = 0.2\n"));
        assert_eq!(config_from_summary(&text).unwrap(), Some(cfg));
    }
}
