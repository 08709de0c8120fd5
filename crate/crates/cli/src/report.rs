//! Report assembly and output.  A report is self-contained: it embeds the
//! resolved configuration, the grid samples, the echoed inputs, every
//! per-epsilon quantity, and the classification summaries.
//!
//! JSON reports are emitted as one object per line (append-friendly).  CSV
//! reports emit one row per epsilon sample with a column pair per quantity,
//! framed by `#` comment lines carrying the inputs, configuration, and
//! classifications.

use std::io::Write;
use std::sync::Arc;

use membrane_calc::gennum::{GenNet, NetClass};
use membrane_calc::grid::EpsilonGrid;

use crate::config::{Format, RunConfig};
use crate::CliError;

pub struct Report {
    pub command: &'static str,
    pub inputs: Vec<(String, String)>,
    pub nets: Vec<(String, GenNet)>,
    pub classes: Vec<(String, NetClass)>,
    pub scalars: Vec<(String, f64)>,
}

impl Report {
    pub fn new(command: &'static str) -> Report {
        Report {
            command,
            inputs: Vec::new(),
            nets: Vec::new(),
            classes: Vec::new(),
            scalars: Vec::new(),
        }
    }

    pub fn input(&mut self, key: &str, value: impl std::fmt::Display) {
        self.inputs.push((key.to_string(), value.to_string()));
    }

    pub fn net(&mut self, name: &str, net: GenNet) {
        self.nets.push((name.to_string(), net));
    }

    pub fn class(&mut self, name: &str, class: NetClass) {
        self.classes.push((name.to_string(), class));
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.push((name.to_string(), value));
    }

    fn to_json(&self, cfg: &RunConfig, grid: &Arc<EpsilonGrid>) -> serde_json::Value {
        let mut nets = serde_json::Map::new();
        for (name, net) in &self.nets {
            let rows: Vec<serde_json::Value> = grid
                .samples()
                .iter()
                .zip(net.values())
                .map(|(eps, v)| {
                    serde_json::json!({ "eps": eps, "re": v.re(), "im": v.im() })
                })
                .collect();
            nets.insert(name.clone(), serde_json::Value::Array(rows));
        }
        let mut classes = serde_json::Map::new();
        for (name, class) in &self.classes {
            classes.insert(name.clone(), serde_json::to_value(class).expect("class json"));
        }
        let mut inputs = serde_json::Map::new();
        for (k, v) in &self.inputs {
            inputs.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        let mut scalars = serde_json::Map::new();
        for (k, v) in &self.scalars {
            scalars.insert(k.clone(), serde_json::json!(v));
        }
        serde_json::json!({
            "command": self.command,
            "config": cfg,
            "grid": { "samples": grid.samples(), "tail_len": grid.tail_len() },
            "inputs": inputs,
            "nets": nets,
            "classes": classes,
            "scalars": scalars,
        })
    }

    fn to_csv(&self, cfg: &RunConfig, grid: &Arc<EpsilonGrid>) -> String {
        let mut out = String::new();
        out.push_str(&format!("# report command={}\n", self.command));
        for (k, v) in &self.inputs {
            out.push_str(&format!("# input {k}={v}\n"));
        }
        out.push_str(&format!(
            "# config {}\n",
            serde_json::to_string(cfg).expect("config json")
        ));
        out.push_str(&format!(
            "# grid tail_len={} samples={}\n",
            grid.tail_len(),
            grid.len()
        ));
        out.push_str("eps");
        for (name, _) in &self.nets {
            out.push_str(&format!(",{name}_re,{name}_im"));
        }
        out.push('\n');
        for (k, eps) in grid.samples().iter().enumerate() {
            out.push_str(&format!("{eps}"));
            for (_, net) in &self.nets {
                let v = net.value_at(k);
                out.push_str(&format!(",{},{}", v.re(), v.im()));
            }
            out.push('\n');
        }
        for (name, class) in &self.classes {
            out.push_str(&format!(
                "# class {name} kind={:?} valuation={} residual={}\n",
                class.kind, class.estimated_valuation, class.fit_residual
            ));
        }
        for (name, v) in &self.scalars {
            out.push_str(&format!("# scalar {name}={v}\n"));
        }
        out
    }

    /// Render and write: append to `--out` (truncate only under `--force`),
    /// or print to stdout when no output path is set.
    pub fn write(&self, cfg: &RunConfig, grid: &Arc<EpsilonGrid>) -> Result<(), CliError> {
        let body = match cfg.format {
            Format::Json => {
                let mut line =
                    serde_json::to_string(&self.to_json(cfg, grid)).expect("report json");
                line.push('\n');
                line
            }
            Format::Csv => self.to_csv(cfg, grid),
        };
        match &cfg.out {
            None => {
                print!("{body}");
                Ok(())
            }
            Some(path) => {
                let mut file = std::fs::OpenOptions::new()
                    .create(true)
                    .write(true)
                    .append(!cfg.force)
                    .truncate(cfg.force)
                    .open(path)
                    .map_err(|e| {
                        CliError::Input(format!("cannot open report {}: {e}", path.display()))
                    })?;
                file.write_all(body.as_bytes()).map_err(|e| {
                    CliError::Input(format!("cannot write report {}: {e}", path.display()))
                })
            }
        }
    }
}
