use std::collections::BTreeMap;
use std::fmt::Write;

use super::BaselineKind;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: BaselineKind,
    pub layer: String,
    /// Polar angle in degrees.
    pub theta: f64,
    /// `None` when the targets at this angle have zero variance.
    pub normalized_rmse: Option<f64>,
    pub macs: Option<u64>,
}

/// Normalized errors per method, layer and polar angle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub config_hash: String,
    pub seed: u64,
}

fn fmt_err(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

impl EvalReport {
    pub fn set_macs(&mut self, method: BaselineKind, macs: u64) {
        for r in self.rows.iter_mut().filter(|r| r.method == method) {
            r.macs = Some(macs);
        }
    }

    pub fn get(&self, method: BaselineKind, layer: &str, theta: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.layer == layer && r.theta == theta)
            .and_then(|r| r.normalized_rmse)
    }

    /// Mean normalized error of a method on a layer over all angles.
    pub fn mean(&self, method: BaselineKind, layer: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.layer == layer)
            .filter_map(|r| r.normalized_rmse)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,layer,theta,normalized_rmse,macs\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.method,
                r.layer,
                r.theta,
                fmt_err(r.normalized_rmse),
                r.macs.map_or(String::new(), |m| m.to_string())
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config {} seed {}", self.config_hash, self.seed);
        let _ = writeln!(s, "errors normalized per polar angle by the mean predictor's RMSE");
        let mut by: BTreeMap<(&str, BaselineKind), Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            by.entry((r.layer.as_str(), r.method)).or_default().push(r);
        }
        let mut last = "";
        for ((layer, method), rows) in by {
            if layer != last {
                let _ = writeln!(s, "{layer}");
                last = layer;
            }
            let cells: Vec<String> = rows
                .iter()
                .map(|r| format!("{:>5.1}:{}", r.theta, fmt_err(r.normalized_rmse)))
                .collect();
            let macs = rows[0].macs.map_or(String::new(), |m| format!("  ({:.3e} MACs)", m as f64));
            let _ = writeln!(s, "  {:<12} {}{macs}", method.name(), cells.join("  "));
        }
        s
    }

    /// Columns: theta, then one error column per method in `methods`.
    pub fn gnuplot_errors(&self, layer: &str, methods: &[BaselineKind]) -> String {
        let mut s = format!("# theta {}\n", methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(" "));
        let mut thetas: Vec<f64> = self.rows.iter().filter(|r| r.layer == layer).map(|r| r.theta).collect();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        for t in thetas {
            let _ = write!(s, "{t}");
            for &m in methods {
                let v = self.get(m, layer, t).map_or_else(|| "nan".into(), |v| v.to_string());
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    /// Columns: method index, MACs, mean error on `layer`, method name.
    pub fn gnuplot_cost(&self, layer: &str) -> String {
        let mut s = String::from("# index macs mean_error method\n");
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.method) {
                seen.push(r.method);
            }
        }
        for (i, m) in seen.into_iter().enumerate() {
            let macs = self.rows.iter().find(|r| r.method == m).and_then(|r| r.macs);
            let _ = writeln!(
                s,
                "{i} {} {} {}",
                macs.map_or_else(|| "nan".into(), |v| v.to_string()),
                self.mean(m, layer).map_or_else(|| "nan".into(), |v| v.to_string()),
                m.name()
            );
        }
        s
    }
}
