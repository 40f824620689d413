//! Loss curves and the gap trajectory of a run.

use std::path::{Path, PathBuf};

use crate::error::{write_string, GccError, Result};
use crate::plot::line_chart;
use crate::trainer::record::RunRecord;

pub const CURVES_CSV: &str = "curves.csv";
pub const TEACHER_SVG: &str = "teacher_losses.svg";
pub const STUDENT_SVG: &str = "student_losses.svg";
pub const GAP_SVG: &str = "gap_trajectory.svg";

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFiles {
    pub csv: PathBuf,
    pub teacher_plot: PathBuf,
    pub student_plot: PathBuf,
    pub gap_plot: PathBuf,
}

/// One row per logged iteration: teacher and student G/D losses, both gaps
/// and `|gap_S − gap_T|`.
pub fn curves_csv(record: &RunRecord) -> String {
    let mut out = String::from("iteration,epoch,g_t,d_t,g_s,d_s,gap_t,gap_s,gap_difference\n");
    for (k, i) in record.iterations.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            k + 1,
            i.epoch,
            i.g_t,
            i.d_t_real + i.d_t_fake,
            i.g_s,
            i.d_s_real + i.d_s_fake,
            i.gap_t,
            i.gap_s,
            (i.gap_s - i.gap_t).abs()
        ));
    }
    out
}

/// CSV and plots of the loss curves; errors on a record without
/// iterations.
pub fn equilibrium_curves(record: &RunRecord, dir: &Path) -> Result<CurveFiles> {
    if record.iterations.is_empty() {
        return Err(GccError::Record("run record has no iterations".into()));
    }
    write_curves(record, dir)
}

/// Same as [`equilibrium_curves`] but an empty record yields empty plots.
pub fn write_curves(record: &RunRecord, dir: &Path) -> Result<CurveFiles> {
    let series = |f: &dyn Fn(&crate::trainer::IterationLog) -> f64| -> Vec<(f64, f64)> {
        record
            .iterations
            .iter()
            .enumerate()
            .map(|(k, i)| ((k + 1) as f64, f(i)))
            .collect()
    };
    let files = CurveFiles {
        csv: dir.join(CURVES_CSV),
        teacher_plot: dir.join(TEACHER_SVG),
        student_plot: dir.join(STUDENT_SVG),
        gap_plot: dir.join(GAP_SVG),
    };
    write_string(&files.csv, &curves_csv(record))?;
    write_string(
        &files.teacher_plot,
        &line_chart(
            "Teacher losses",
            "iteration",
            &[("G", series(&|i| i.g_t)), ("D", series(&|i| i.d_t_real + i.d_t_fake))],
        ),
    )?;
    write_string(
        &files.student_plot,
        &line_chart(
            "Student losses",
            "iteration",
            &[("G", series(&|i| i.g_s)), ("D", series(&|i| i.d_s_real + i.d_s_fake))],
        ),
    )?;
    write_string(
        &files.gap_plot,
        &line_chart(
            "|gap_S - gap_T|",
            "iteration",
            &[
                ("|gap_S - gap_T|", series(&|i| (i.gap_s - i.gap_t).abs())),
                ("L_target", series(&|i| i.l_target)),
            ],
        ),
    )?;
    Ok(files)
}
