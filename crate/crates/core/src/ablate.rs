//! Ablation grids.
//!
//! Each grid is a list of named settings, each a set of configuration
//! overrides applied on top of a base [`RunConfig`].

use std::fmt;
use std::str::FromStr;

use crate::config::RunConfig;
use crate::dataset::Split;
use crate::error::{config_err, Result};
use crate::eval::evaluate;
use crate::metrics::MetricsReport;
use crate::train::train;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// Calibration, visual disentanglement and VKA switched independently.
    Components,
    /// Wavelet and Fourier views switched independently.
    Domains,
    /// `alpha` from 0.0 to 1.0 in steps of 0.1, `beta = 1 - alpha`.
    Mix,
    /// Adversarial source and target streams.
    Sides,
    /// `(gamma, delta)` loss balance.
    LossBalance,
    /// Calibration coefficient.
    Lambda,
    /// Graph fusion against addition and concatenation.
    Fusion,
}

impl Grid {
    pub const ALL: [Grid; 7] = [
        Grid::Components,
        Grid::Domains,
        Grid::Mix,
        Grid::Sides,
        Grid::LossBalance,
        Grid::Lambda,
        Grid::Fusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Grid::Components => "components",
            Grid::Domains => "domains",
            Grid::Mix => "mix",
            Grid::Sides => "sides",
            Grid::LossBalance => "loss",
            Grid::Lambda => "lambda",
            Grid::Fusion => "fusion",
        }
    }

    /// Setting labels with their overrides, in table row order.
    pub fn settings(self) -> Vec<Setting> {
        let flag = |b: bool| if b { "true" } else { "false" };
        match self {
            Grid::Components => {
                let mut rows = Vec::new();
                // row order: none, one module, two modules, all three
                let order = [
                    (false, false, false),
                    (true, false, false),
                    (false, true, false),
                    (false, false, true),
                    (true, true, false),
                    (false, true, true),
                    (true, false, true),
                    (true, true, true),
                ];
                for (cal, vrd, vka) in order {
                    rows.push(Setting::new(
                        format!("cal={};vrd={};vka={}", cal as u8, vrd as u8, vka as u8),
                        &[
                            ("enable_calibration", flag(cal)),
                            ("enable_wavelet", flag(vrd)),
                            ("enable_fourier", flag(vrd)),
                            ("enable_vka", flag(vka)),
                        ],
                    ));
                }
                rows
            }
            Grid::Domains => [(false, false), (false, true), (true, false), (true, true)]
                .into_iter()
                .map(|(w, f)| {
                    Setting::new(
                        format!("wavelet={};fourier={}", w as u8, f as u8),
                        &[("enable_wavelet", flag(w)), ("enable_fourier", flag(f))],
                    )
                })
                .collect(),
            Grid::Mix => (0..=10)
                .map(|i| {
                    let (a, b) = (format!("{:.1}", i as f64 / 10.0), format!("{:.1}", (10 - i) as f64 / 10.0));
                    Setting::new(format!("alpha={a};beta={b}"), &[("alpha", &a), ("beta", &b)])
                })
                .collect(),
            Grid::Sides => ["K:V", "K:V+W+F", "V:K", "V+W+F:K"]
                .into_iter()
                .map(|s| Setting::new(format!("sides={s}"), &[("adversarial", s)]))
                .collect(),
            Grid::LossBalance => [("1", "0"), ("0.95", "0.05"), ("0.9", "0.1"), ("0.85", "0.15"), ("0.8", "0.2")]
                .into_iter()
                .map(|(g, d)| Setting::new(format!("gamma={g};delta={d}"), &[("gamma", g), ("delta", d)]))
                .collect(),
            Grid::Lambda => ["0.01", "0.02", "0.03", "0.04", "0.05"]
                .into_iter()
                .map(|l| Setting::new(format!("lambda={l}"), &[("lambda", l)]))
                .collect(),
            Grid::Fusion => ["graph", "add", "concat"]
                .into_iter()
                .map(|f| Setting::new(format!("fusion={f}"), &[("fusion", f)]))
                .collect(),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Grid {
    type Err = crate::GradError;

    fn from_str(s: &str) -> Result<Self> {
        Grid::ALL
            .iter()
            .copied()
            .find(|g| g.name() == s)
            .ok_or_else(|| config_err(format!("unknown ablation grid `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

impl Setting {
    fn new(label: String, overrides: &[(&str, &str)]) -> Self {
        Setting {
            label,
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn apply(&self, base: &RunConfig) -> Result<RunConfig> {
        let mut cfg = base.clone();
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub grid: Grid,
    pub setting: String,
    pub seed: u64,
    pub report: MetricsReport,
}

impl AblationRow {
    pub const CSV_HEADER: &'static str = "grid,setting,seed,acc,edit,op,or,of1,cp,cr,cf1";

    pub fn csv_row(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.grid, self.setting, self.seed, r.acc, r.edit, r.op, r.or_, r.of1, r.cp, r.cr, r.cf1
        )
    }
}

/// Trains and evaluates every setting of every grid for every seed,
/// calling `on_row` as rows finish.
pub fn ablate(
    base: &RunConfig,
    grids: &[Grid],
    seeds: &[u64],
    train_split: &Split,
    test_split: &Split,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &grid in grids {
        for setting in grid.settings() {
            for &seed in seeds {
                let mut cfg = setting.apply(base)?;
                cfg.seed = seed;
                let outcome = train(&cfg, train_split)?;
                let report = evaluate(&outcome.model, &test_split.sequences, None, seed)?;
                let row = AblationRow {
                    grid,
                    setting: setting.label.clone(),
                    seed,
                    report,
                };
                on_row(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
