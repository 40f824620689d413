//! Config loading, the ablation matrix and report rendering.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_string, GccError, Result};
use crate::model_zoo::network::gate_points;
use crate::plot::{bar_chart, heatmap};
use crate::trainer::curves::write_curves;
use crate::trainer::record::{FinalMetrics, RunRecord};
use crate::trainer::{run_phase1, run_phase2, ExperimentConfig, Phase1Output};

pub const OUTPUT_ROOT_ENV: &str = "GCC_OUTPUT_ROOT";
pub const REPORT_DIR: &str = "report";

/// Reads and validates a config file; relative output directories are
/// resolved against `$GCC_OUTPUT_ROOT` when it is set.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_toml_str(&read_to_string(path)?)?;
    if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
        if !root.is_empty() && cfg.output_dir.is_relative() {
            cfg.output_dir = PathBuf::from(root).join(&cfg.output_dir);
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// Plain student training against the full-width discriminator.
    PruneBaseline,
    NoTexture,
    NoMse,
    NoOnline,
    NoDDistill,
    NoGDistill,
    NoDiscriminator,
    NoSelective,
    NoGlobal,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Full,
        Variant::PruneBaseline,
        Variant::NoTexture,
        Variant::NoMse,
        Variant::NoOnline,
        Variant::NoDDistill,
        Variant::NoGDistill,
        Variant::NoDiscriminator,
        Variant::NoSelective,
        Variant::NoGlobal,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::PruneBaseline => "prune-baseline",
            Variant::NoTexture => "no-texture",
            Variant::NoMse => "no-mse",
            Variant::NoOnline => "no-online",
            Variant::NoDDistill => "no-d-distill",
            Variant::NoGDistill => "no-g-distill",
            Variant::NoDiscriminator => "no-discriminator",
            Variant::NoSelective => "no-selective",
            Variant::NoGlobal => "no-global",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "GCC",
            Variant::PruneBaseline => "Prune",
            Variant::NoTexture => "w/o Texture",
            Variant::NoMse => "w/o MSE",
            Variant::NoOnline => "w/o Online",
            Variant::NoDDistill => "w/o D-distillation",
            Variant::NoGDistill => "w/o G-distillation",
            Variant::NoDiscriminator => "w/o discriminator",
            Variant::NoSelective => "w/o selective activation",
            Variant::NoGlobal => "w/o L_global",
        }
    }

    /// The config with this component removed.
    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::PruneBaseline => c.variant = crate::trainer::VariantFlags::prune_baseline(),
            Variant::NoTexture => c.gamma_t = 0.0,
            Variant::NoMse => c.gamma_m = 0.0,
            Variant::NoOnline => c.distill.online = false,
            Variant::NoDDistill => c.distill.disc_taps.clear(),
            Variant::NoGDistill => c.distill.gen_taps.clear(),
            Variant::NoDiscriminator => c.variant.student_adversarial = false,
            Variant::NoSelective => c.variant.selective = false,
            Variant::NoGlobal => c.variant.global_constraint = false,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Variant {
    type Err = GccError;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.slug() == key || v.label().to_ascii_lowercase() == key)
            .ok_or_else(|| {
                let known: Vec<&str> = Variant::ALL.iter().map(|v| v.slug()).collect();
                GccError::Config(format!("unknown variant `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub metrics: Vec<FinalMetrics>,
}

impl AblationRow {
    fn mean(&self, f: impl Fn(&FinalMetrics) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.metrics.iter().filter_map(f).collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }

    /// Mean of covered modes plus high-quality fraction.
    pub fn mean_toy_score(&self) -> Option<f64> {
        self.mean(|m| m.toy_score())
    }

    pub fn mean_covered(&self) -> Option<f64> {
        self.mean(|m| m.covered_modes.map(|c| c as f64))
    }

    pub fn mean_mmd(&self) -> Option<f64> {
        self.mean(|m| m.mmd)
    }

    pub fn mean_gap_difference(&self) -> Option<f64> {
        self.mean(|m| Some(m.mean_gap_difference))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn cell(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into())
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<26} {:>6} {:>9} {:>9} {:>9} {:>9}\n",
            "variant", "seeds", "score", "modes", "mmd", "gap-diff"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<26} {:>6} {:>9} {:>9} {:>9} {:>9}\n",
                r.variant.label(),
                r.seeds.len(),
                cell(r.mean_toy_score(), 3),
                cell(r.mean_covered(), 2),
                cell(r.mean_mmd(), 4),
                cell(r.mean_gap_difference(), 4)
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seeds,score,modes,mmd,gap_difference\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.variant.slug(),
                r.seeds.len(),
                cell(r.mean_toy_score(), 6),
                cell(r.mean_covered(), 6),
                cell(r.mean_mmd(), 6),
                cell(r.mean_gap_difference(), 6)
            ));
        }
        out
    }
}

/// Runs the full method and each variant on every seed. Phase 1 runs once
/// per seed and its pruned generator is shared by all variants. The full
/// method is always the first row; duplicates are dropped.
pub fn run_ablation_matrix(base: &ExperimentConfig, variants: &[Variant], seeds: &[u64]) -> Result<AblationTable> {
    let mut order = vec![Variant::Full];
    for v in variants {
        if !order.contains(v) {
            order.push(*v);
        }
    }
    let mut rows: Vec<AblationRow> = order
        .iter()
        .map(|&variant| AblationRow {
            variant,
            seeds: Vec::new(),
            metrics: Vec::new(),
        })
        .collect();
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let p1: Phase1Output = run_phase1(&cfg, None)?;
        for row in rows.iter_mut() {
            let vcfg = row.variant.apply(&cfg);
            log::info!("seed {seed}: {}", row.variant.label());
            let record = run_phase2(&vcfg, &p1.student_spec, None)?;
            row.seeds.push(seed);
            row.metrics.push(record.final_metrics.expect("completed run"));
        }
    }
    Ok(AblationTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    LossCurves,
    GapTrajectory,
    GateHeatmap,
    PruningRatios,
    SummaryTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub run_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl ReportBundle {
    pub fn of_kind(&self, kind: ArtifactKind) -> impl Iterator<Item = &Artifact> {
        self.artifacts.iter().filter(move |a| a.kind == kind)
    }
}

/// Active fraction of each gated layer per epoch: one row per layer.
pub fn gate_heatmap_rows(record: &RunRecord) -> Vec<Vec<f64>> {
    let points = gate_points(&record.discriminator_spec);
    points
        .iter()
        .enumerate()
        .map(|(l, p)| {
            record
                .epochs
                .iter()
                .map(|e| e.active_channels[l] as f64 / p.channels as f64)
                .collect()
        })
        .collect()
}

/// Removed fraction per parameterized layer of the teacher generator.
pub fn pruning_ratios(record: &RunRecord) -> Vec<(usize, f64)> {
    let t = &record.teacher_spec;
    let s = &record.student_spec;
    t.parameterized_layers()
        .into_iter()
        .map(|p| {
            let orig = t.layers[p].out_channels as f64;
            let kept = s.layers.get(p).map(|l| l.out_channels as f64).unwrap_or(orig);
            (p, 1.0 - kept / orig)
        })
        .collect()
}

pub fn summary_table(record: &RunRecord) -> String {
    let mut out = String::new();
    let c = &record.config;
    out.push_str(&format!("task            {}\n", c.task));
    out.push_str(&format!("seed            {}\n", c.seed));
    out.push_str(&format!(
        "epochs          {} of {}\n",
        record.epochs.len(),
        c.epochs()
    ));
    out.push_str(&format!("iterations      {}\n", record.iterations.len()));
    if let Some(reason) = &record.aborted {
        out.push_str(&format!("aborted         {reason}\n"));
    }
    if let Some(last) = record.epochs.last() {
        out.push_str(&format!("active channels {:?}\n", last.active_channels));
        out.push_str(&format!("active D MACs   {}\n", last.active_macs));
        out.push_str(&format!("L_target        {:.6}\n", last.l_target));
    }
    out.push_str(&format!("mean |gapS-gapT| {:.6}\n", record.mean_gap_difference()));
    if let Some(m) = &record.final_metrics {
        out.push_str(&format!("teacher MACs    {}\n", m.teacher_macs));
        out.push_str(&format!("student MACs    {}\n", m.student_macs));
        out.push_str(&format!("compression     {:.2}%\n", m.compression_ratio));
        if let (Some(cov), Some(hq)) = (m.covered_modes, m.high_quality) {
            out.push_str(&format!("modes covered   {cov} (teacher {})\n", m.teacher_covered_modes.unwrap_or(0)));
            out.push_str(&format!("high quality    {hq:.4}\n"));
        }
        if let Some(mmd) = m.mmd {
            out.push_str(&format!("mmd             {mmd:.6}\n"));
        }
    }
    out
}

/// Renders every artifact into `<run_dir>/report`. The run directory itself
/// is only read.
pub fn render_reports(run_dir: &Path) -> Result<ReportBundle> {
    let record = RunRecord::load(run_dir)?;
    let out = run_dir.join(REPORT_DIR);
    let mut artifacts = Vec::new();
    let curves = write_curves(&record, &out)?;
    for path in [curves.csv, curves.teacher_plot, curves.student_plot] {
        artifacts.push(Artifact {
            kind: ArtifactKind::LossCurves,
            path,
        });
    }
    artifacts.push(Artifact {
        kind: ArtifactKind::GapTrajectory,
        path: curves.gap_plot,
    });

    let rows = gate_heatmap_rows(&record);
    let labels: Vec<String> = gate_points(&record.discriminator_spec)
        .iter()
        .map(|p| format!("layer {}", p.param_layer))
        .collect();
    let mut csv = String::from("layer");
    for e in &record.epochs {
        csv.push_str(&format!(",epoch_{}", e.epoch));
    }
    csv.push('\n');
    for (label, row) in labels.iter().zip(&rows) {
        csv.push_str(label);
        for v in row {
            csv.push_str(&format!(",{v:.6}"));
        }
        csv.push('\n');
    }
    for (name, text) in [
        ("gate_heatmap.csv", csv),
        ("gate_heatmap.svg", heatmap("Active channel fraction per gated layer", &labels, &rows, 1.0)),
    ] {
        let path = out.join(name);
        write_string(&path, &text)?;
        artifacts.push(Artifact {
            kind: ArtifactKind::GateHeatmap,
            path,
        });
    }

    let ratios = pruning_ratios(&record);
    let path = out.join("pruning_ratios.svg");
    write_string(
        &path,
        &bar_chart(
            "Pruned fraction per generator layer",
            &ratios.iter().map(|(l, _)| l.to_string()).collect::<Vec<_>>(),
            &ratios.iter().map(|(_, r)| *r).collect::<Vec<_>>(),
        ),
    )?;
    artifacts.push(Artifact {
        kind: ArtifactKind::PruningRatios,
        path,
    });

    let path = out.join("summary.txt");
    write_string(&path, &summary_table(&record))?;
    artifacts.push(Artifact {
        kind: ArtifactKind::SummaryTable,
        path,
    });
    Ok(ReportBundle {
        run_dir: run_dir.to_path_buf(),
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Task;

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.slug().parse::<Variant>().unwrap(), v);
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("w/o everything".parse::<Variant>().is_err());
    }

    #[test]
    fn variant_configs() {
        let base = ExperimentConfig::defaults(Task::Ring8);
        assert!(!Variant::NoSelective.apply(&base).variant.selective);
        assert!(!Variant::NoGlobal.apply(&base).variant.global_constraint);
        assert_eq!(Variant::NoTexture.apply(&base).gamma_t, 0.0);
        assert_eq!(Variant::NoTexture.apply(&base).gamma_m, base.gamma_m);
        assert!(Variant::NoDDistill.apply(&base).distill.disc_taps.is_empty());
        assert_eq!(Variant::Full.apply(&base), base);
    }
}
