//! Confusion matrix, per-class precision/recall/f1, and the fixed-width text
//! report. Any 0/0 metric is defined as 0 (a class that never occurs gets an
//! all-zero row rather than NaN).

use serde::Serialize;
use thiserror::Error;

use crate::data::{EmotionClass, NUM_CLASSES};

/// 5x5 count matrix; rows are the true class, columns the predicted one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn counts(&self) -> &[[usize; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    fn col_sum(&self, c: usize) -> usize {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{truths} truths vs {preds} predictions")]
    LengthMismatch { truths: usize, preds: usize },
    #[error("no items to evaluate")]
    Empty,
    #[error("confusion matrix holds no items")]
    EmptyMatrix,
}

pub fn confusion(
    truths: &[EmotionClass],
    preds: &[EmotionClass],
) -> Result<ConfusionMatrix, MetricsError> {
    if truths.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            truths: truths.len(),
            preds: preds.len(),
        });
    }
    if truths.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truths.iter().zip(preds) {
        counts[t.ordinal()][p.ordinal()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReportRow {
    pub class: &'static str,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvgRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassReportRow>,
    pub accuracy: f64,
    pub macro_avg: AvgRow,
    pub weighted_avg: AvgRow,
    pub total_support: usize,
}

fn ratio_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and aggregate metrics from a confusion matrix.
///
/// Macro averages run over the classes that occur at all (as truth or as a
/// prediction); a class absent from both sides contributes an all-zero row
/// but is not averaged in, so a two-class problem reports two-class macros.
pub fn build_report(cm: &ConfusionMatrix) -> Result<ClassificationReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut classes = Vec::with_capacity(NUM_CLASSES);
    let mut present = Vec::new();
    for (c, class) in EmotionClass::ALL.iter().enumerate() {
        let (diag, row, col) = (cm.counts[c][c], cm.row_sum(c), cm.col_sum(c));
        let precision = ratio_or_zero(diag, col);
        let recall = ratio_or_zero(diag, row);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if row > 0 || col > 0 {
            present.push(c);
        }
        classes.push(ClassReportRow {
            class: class.name(),
            precision,
            recall,
            f1,
            support: row,
        });
    }
    let total_f = total as f64;
    let (mut mp, mut mr, mut mf) = (0.0, 0.0, 0.0);
    for &c in &present {
        mp += classes[c].precision;
        mr += classes[c].recall;
        mf += classes[c].f1;
    }
    let np = present.len() as f64;
    let macro_avg = AvgRow {
        precision: mp / np,
        recall: mr / np,
        f1: mf / np,
    };
    // Weighted recall must equal accuracy exactly: sum_c support_c *
    // (diag_c/support_c) / total = trace/total. Accumulating the rounded
    // ratios breaks that by an ulp for supports like 22 (15/22*22 != 15 in
    // f64), so the recall average uses the exact integer numerators.
    let weighted_avg = AvgRow {
        precision: classes
            .iter()
            .map(|r| r.support as f64 * r.precision)
            .sum::<f64>()
            / total_f,
        recall: cm.trace() as f64 / total_f,
        f1: classes.iter().map(|r| r.support as f64 * r.f1).sum::<f64>() / total_f,
    };
    Ok(ClassificationReport {
        classes,
        accuracy: cm.trace() as f64 / total_f,
        macro_avg,
        weighted_avg,
        total_support: total,
    })
}

/// Two-decimal formatting, rounding halves away from zero (0.125 -> "0.13").
/// The standard `{:.2}` rounds halves to even, which prints "0.12" there.
fn fmt2(x: f64) -> String {
    let rounded = (x.abs() * 100.0 + 0.5).floor() / 100.0;
    format!("{:.2}", rounded.copysign(x))
}

const LABEL_WIDTH: usize = 13; // longest class name, "fear_and_pain"

fn report_line(label: &str, m1: &str, m2: &str, m3: &str, last: &str) -> String {
    format!("{label:>LABEL_WIDTH$} {m1:>10} {m2:>10} {m3:>10} {last:>10}\n")
}

/// Fixed-width text table: header, one row per class in ordinal order, then
/// accuracy (f1 column + total only), macro avg, and weighted avg rows.
pub fn render_report(r: &ClassificationReport) -> String {
    let mut out = String::new();
    out.push_str(&report_line(
        "",
        "precision",
        "recall",
        "f1-score",
        "support",
    ));
    out.push('\n');
    for row in &r.classes {
        out.push_str(&report_line(
            row.class,
            &fmt2(row.precision),
            &fmt2(row.recall),
            &fmt2(row.f1),
            &row.support.to_string(),
        ));
    }
    out.push('\n');
    out.push_str(&report_line(
        "accuracy",
        "",
        "",
        &fmt2(r.accuracy),
        &r.total_support.to_string(),
    ));
    for (label, avg) in [
        ("macro avg", &r.macro_avg),
        ("weighted avg", &r.weighted_avg),
    ] {
        out.push_str(&report_line(
            label,
            &fmt2(avg.precision),
            &fmt2(avg.recall),
            &fmt2(avg.f1),
            &r.total_support.to_string(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn cls(o: usize) -> EmotionClass {
        EmotionClass::from_ordinal(o).unwrap()
    }

    /// Metrics computed straight from the prediction lists, sharing no code
    /// with ConfusionMatrix. Weighted averages accumulate the rounded
    /// per-class ratios, i.e. the generic formula.
    fn oracle_report(truths: &[EmotionClass], preds: &[EmotionClass]) -> ClassificationReport {
        let n = truths.len();
        let mut classes = Vec::new();
        let mut present = Vec::new();
        for c in 0..NUM_CLASSES {
            let tp = truths
                .iter()
                .zip(preds)
                .filter(|(t, p)| t.ordinal() == c && p.ordinal() == c)
                .count();
            let support = truths.iter().filter(|t| t.ordinal() == c).count();
            let predicted = preds.iter().filter(|p| p.ordinal() == c).count();
            let precision = if predicted == 0 {
                0.0
            } else {
                tp as f64 / predicted as f64
            };
            let recall = if support == 0 {
                0.0
            } else {
                tp as f64 / support as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            if support > 0 || predicted > 0 {
                present.push(c);
            }
            classes.push(ClassReportRow {
                class: cls(c).name(),
                precision,
                recall,
                f1,
                support,
            });
        }
        let correct = truths.iter().zip(preds).filter(|(t, p)| t == p).count();
        let avg = |f: &dyn Fn(&ClassReportRow) -> f64| {
            present.iter().map(|&c| f(&classes[c])).sum::<f64>() / present.len() as f64
        };
        let wavg = |f: &dyn Fn(&ClassReportRow) -> f64| {
            classes.iter().map(|r| r.support as f64 * f(r)).sum::<f64>() / n as f64
        };
        ClassificationReport {
            accuracy: correct as f64 / n as f64,
            macro_avg: AvgRow {
                precision: avg(&|r| r.precision),
                recall: avg(&|r| r.recall),
                f1: avg(&|r| r.f1),
            },
            weighted_avg: AvgRow {
                precision: wavg(&|r| r.precision),
                recall: wavg(&|r| r.recall),
                f1: wavg(&|r| r.f1),
            },
            classes,
            total_support: n,
        }
    }

    fn assert_reports_close(a: &ClassificationReport, b: &ClassificationReport, tol: f64) {
        for (x, y) in a.classes.iter().zip(&b.classes) {
            assert_eq!(x.support, y.support);
            assert!((x.precision - y.precision).abs() <= tol, "{x:?} vs {y:?}");
            assert!((x.recall - y.recall).abs() <= tol);
            assert!((x.f1 - y.f1).abs() <= tol);
        }
        assert!((a.accuracy - b.accuracy).abs() <= tol);
        for (x, y) in [
            (&a.macro_avg, &b.macro_avg),
            (&a.weighted_avg, &b.weighted_avg),
        ] {
            assert!((x.precision - y.precision).abs() <= tol);
            assert!((x.recall - y.recall).abs() <= tol);
            assert!((x.f1 - y.f1).abs() <= tol);
        }
    }

    #[test]
    fn identical_lists_give_a_diagonal_matrix() {
        let items: Vec<EmotionClass> = (0..20).map(|i| cls(i % 5)).collect();
        let cm = confusion(&items, &items).unwrap();
        for t in 0..5 {
            for p in 0..5 {
                assert_eq!(cm.counts()[t][p], if t == p { 4 } else { 0 });
            }
        }
        assert_eq!(cm.trace(), 20);
    }

    #[test]
    fn single_misclassification_lands_off_diagonal() {
        let cm = confusion(&[cls(3)], &[cls(4)]).unwrap();
        assert_eq!(cm.counts()[3][4], 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.trace(), 0);
    }

    #[test]
    fn confusion_rejects_bad_inputs() {
        assert_eq!(
            confusion(&[cls(0)], &[]),
            Err(MetricsError::LengthMismatch {
                truths: 1,
                preds: 0
            })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn confusion_matches_naive_counting_on_a_random_case() {
        let mut rng = SeededRng::new(99);
        let truths: Vec<EmotionClass> = (0..1000).map(|_| cls(rng.next_index(5))).collect();
        let preds: Vec<EmotionClass> = (0..1000).map(|_| cls(rng.next_index(5))).collect();
        let cm = confusion(&truths, &preds).unwrap();
        for t in 0..5 {
            for p in 0..5 {
                let naive = truths
                    .iter()
                    .zip(&preds)
                    .filter(|(a, b)| a.ordinal() == t && b.ordinal() == p)
                    .count();
                assert_eq!(cm.counts()[t][p], naive);
            }
        }
    }

    #[test]
    fn perfect_matrix_scores_ones() {
        let items: Vec<EmotionClass> = (0..15).map(|i| cls(i % 5)).collect();
        let report = build_report(&confusion(&items, &items).unwrap()).unwrap();
        assert_eq!(report.accuracy, 1.0);
        for row in &report.classes {
            assert_eq!((row.precision, row.recall, row.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(report.macro_avg.f1, 1.0);
        assert_eq!(report.weighted_avg.f1, 1.0);
    }

    #[test]
    fn two_class_worked_example() {
        // truth 0: predicted [0,0,1]; truth 1: predicted [1,1,1]
        let truths = [cls(0), cls(0), cls(0), cls(1), cls(1), cls(1)];
        let preds = [cls(0), cls(0), cls(1), cls(1), cls(1), cls(1)];
        let r = build_report(&confusion(&truths, &preds).unwrap()).unwrap();
        let c0 = &r.classes[0];
        let c1 = &r.classes[1];
        assert_eq!(c0.precision, 1.0);
        assert!((c0.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((c0.f1 - 0.8).abs() < 1e-12);
        assert_eq!(c1.precision, 0.75);
        assert_eq!(c1.recall, 1.0);
        assert!((c1.f1 - 6.0 / 7.0).abs() < 1e-12);
        assert!((r.accuracy - 5.0 / 6.0).abs() < 1e-12);
        // the three absent classes stay out of the macro average
        assert!((r.macro_avg.f1 - (0.8 + 6.0 / 7.0) / 2.0).abs() < 1e-12);
        assert!((r.macro_avg.f1 - 0.8286).abs() < 1e-4);
    }

    #[test]
    fn absent_class_gets_zeros_by_convention() {
        let truths = [cls(0), cls(1)];
        let preds = [cls(0), cls(1)];
        let r = build_report(&confusion(&truths, &preds).unwrap()).unwrap();
        for c in 2..5 {
            let row = &r.classes[c];
            assert_eq!((row.precision, row.recall, row.f1), (0.0, 0.0, 0.0));
            assert_eq!(row.support, 0);
        }
    }

    #[test]
    fn report_matches_bruteforce_oracle_on_100_random_cases() {
        let mut rng = SeededRng::new(2024);
        for case in 0..100 {
            let n = 1 + rng.next_index(2000);
            let truths: Vec<EmotionClass> = (0..n).map(|_| cls(rng.next_index(5))).collect();
            // skew predictions so empty columns/rows occur sometimes
            let preds: Vec<EmotionClass> = (0..n)
                .map(|_| cls(rng.next_index(if case % 7 == 0 { 2 } else { 5 })))
                .collect();
            let report = build_report(&confusion(&truths, &preds).unwrap()).unwrap();
            let oracle = oracle_report(&truths, &preds);
            assert_reports_close(&report, &oracle, 1e-12);
            // the identity holds exactly, not just within tolerance
            assert_eq!(report.weighted_avg.recall, report.accuracy, "case {case}");
            assert_eq!(
                report.classes.iter().map(|r| r.support).sum::<usize>(),
                report.total_support
            );
        }
    }

    #[test]
    fn item_order_never_changes_the_report() {
        let mut rng = SeededRng::new(7);
        let truths: Vec<EmotionClass> = (0..200).map(|_| cls(rng.next_index(5))).collect();
        let preds: Vec<EmotionClass> = (0..200).map(|_| cls(rng.next_index(5))).collect();
        let base = build_report(&confusion(&truths, &preds).unwrap()).unwrap();
        let mut order: Vec<usize> = (0..200).collect();
        rng.shuffle(&mut order);
        let t2: Vec<EmotionClass> = order.iter().map(|&i| truths[i]).collect();
        let p2: Vec<EmotionClass> = order.iter().map(|&i| preds[i]).collect();
        assert_eq!(base, build_report(&confusion(&t2, &p2).unwrap()).unwrap());
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let cm = ConfusionMatrix {
            counts: [[0; 5]; 5],
        };
        assert_eq!(build_report(&cm), Err(MetricsError::EmptyMatrix));
    }

    // ---- rendering ----

    #[test]
    fn fmt2_rounds_halves_away_from_zero() {
        assert_eq!(fmt2(0.125), "0.13"); // {:.2} would print 0.12
        assert_eq!(fmt2(0.375), "0.38");
        assert_eq!(fmt2(0.0), "0.00");
        assert_eq!(fmt2(1.0), "1.00");
        assert_eq!(fmt2(2.0 / 3.0), "0.67");
        assert_eq!(fmt2(0.005), "0.01");
        assert_eq!(fmt2(-0.125), "-0.13");
    }

    #[test]
    fn render_header_is_the_fixed_layout() {
        let items: Vec<EmotionClass> = (0..5).map(cls).collect();
        let r = build_report(&confusion(&items, &items).unwrap()).unwrap();
        let text = render_report(&r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "               precision     recall   f1-score    support"
        );
        assert_eq!(lines[1], "");
        assert!(lines[2].trim_start().starts_with("aggressive"));
        assert!(lines[6].trim_start().starts_with("sad"));
        assert_eq!(lines[7], "");
        assert!(lines[8].trim_start().starts_with("accuracy"));
        assert!(lines[9].trim_start().starts_with("macro avg"));
        assert!(lines[10].trim_start().starts_with("weighted avg"));
    }

    #[test]
    fn render_shows_supports_and_accuracy_total() {
        let supports = [280usize, 288, 302, 329, 301];
        let classes: Vec<ClassReportRow> = EmotionClass::ALL
            .iter()
            .zip(supports)
            .map(|(c, s)| ClassReportRow {
                class: c.name(),
                precision: 0.72,
                recall: 0.72,
                f1: 0.72,
                support: s,
            })
            .collect();
        let r = ClassificationReport {
            classes,
            accuracy: 0.72,
            macro_avg: AvgRow {
                precision: 0.72,
                recall: 0.72,
                f1: 0.72,
            },
            weighted_avg: AvgRow {
                precision: 0.72,
                recall: 0.72,
                f1: 0.72,
            },
            total_support: 1500,
        };
        let text = render_report(&r);
        let lines: Vec<&str> = text.lines().collect();
        for (i, s) in supports.iter().enumerate() {
            assert!(
                lines[2 + i].ends_with(&format!("{s:>10}")),
                "{}",
                lines[2 + i]
            );
        }
        let acc_fields: Vec<&str> = lines[8].split_whitespace().collect();
        assert_eq!(acc_fields, ["accuracy", "0.72", "1500"]);
        assert!(lines[9].ends_with("      1500"));
    }

    #[test]
    fn all_ones_render_as_one_point_zero_zero() {
        let items: Vec<EmotionClass> = (0..10).map(|i| cls(i % 5)).collect();
        let r = build_report(&confusion(&items, &items).unwrap()).unwrap();
        let text = render_report(&r);
        assert_eq!(text.matches("1.00").count(), 5 * 3 + 1 + 6); // 5 class rows, accuracy, 2 avg rows
    }
}
