//! Evaluation: rank-based AUC, accuracy with confusion counts, the
//! crossover table for estimator step counts, and small CSV/SVG writers for
//! result artifacts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{classical_step_count, crossover_dimension, quantum_step_count};
use crate::orthonn::ScalingRow;

/// Mann-Whitney AUC of score-for-class-1; tied scores count half. Exact rank
/// statistic, O(n log n).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Dataset("AUC needs both classes present".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tie groups, 1-based
    let mut rank_sum_class1 = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_class1 += avg_rank;
            }
        }
        i = j;
    }
    Ok((rank_sum_class1 - (n1 * (n1 + 1)) as f64 / 2.0) / (n1 as f64 * n0 as f64))
}

/// Row = actual class, column = predicted class.
pub type Confusion = [[u64; 2]; 2];

pub fn acc_and_confusion(predictions: &[u8], labels: &[u8]) -> Result<(f64, Confusion)> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: predictions.len() });
    }
    if predictions.is_empty() {
        return Err(Error::Dataset("empty evaluation set".into()));
    }
    let mut confusion = [[0u64; 2]; 2];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p > 1 || l > 1 {
            return Err(Error::Dataset(format!("non-binary class: predicted {p}, actual {l}")));
        }
        confusion[l as usize][p as usize] += 1;
    }
    let acc = (confusion[0][0] + confusion[1][1]) as f64 / predictions.len() as f64;
    Ok((acc, confusion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub n: usize,
    pub auc: f64,
    pub acc: f64,
    pub confusion: Confusion,
}

/// Metrics of one split from ranking scores plus hard class decisions.
pub fn evaluate(split: &str, scores: &[f64], predictions: &[u8], labels: &[u8]) -> Result<MetricsReport> {
    let auc = auc(scores, labels)?;
    let (acc, confusion) = acc_and_confusion(predictions, labels)?;
    Ok(MetricsReport { split: split.to_string(), n: labels.len(), auc, acc, confusion })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub n: u64,
    pub classical_steps: u64,
    pub quantum_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub n_shots: u64,
    pub rows: Vec<CrossoverRow>,
    /// Smallest dimension where the shot-based estimate beats one classical
    /// pass over the vector.
    pub crossover_n: u64,
}

/// Step-count comparison over a log grid of dimensions, bracketing the
/// crossover.
pub fn crossover_report(n_shots: u64) -> Result<CrossoverReport> {
    if n_shots == 0 {
        return Err(Error::InvalidConfig("need at least one shot".into()));
    }
    let crossover_n = crossover_dimension(n_shots);
    let mut grid: Vec<u64> = vec![
        2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 10_000, 16_384, 32_768,
    ];
    grid.push(crossover_n);
    grid.sort_unstable();
    grid.dedup();
    let rows = grid
        .into_iter()
        .map(|n| CrossoverRow {
            n,
            classical_steps: classical_step_count(n),
            quantum_steps: quantum_step_count(n, n_shots),
        })
        .collect();
    Ok(CrossoverReport { n_shots, rows, crossover_n })
}

pub fn crossover_to_csv(report: &CrossoverReport) -> String {
    let mut out = String::from("n,classical_steps,quantum_steps\n");
    for row in &report.rows {
        out.push_str(&format!("{},{},{}\n", row.n, row.classical_steps, row.quantum_steps));
    }
    out
}

pub fn scaling_to_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("n,wall_time_s,op_count\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.n, row.wall_time_s, row.op_count));
    }
    out
}

/// One named series of (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Self-contained SVG line plot: fixed canvas, optional log10 axes, one
/// polyline per series with a small legend. No external tooling needed to
/// view the output.
pub fn line_plot_svg(title: &str, series: &[Series], log_x: bool, log_y: bool) -> Result<String> {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    const PALETTE: [&str; 5] = ["#1f6fb2", "#c23b22", "#2e8b57", "#8252a1", "#b8860b"];

    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if (log_x && x <= 0.0) || (log_y && y <= 0.0) {
                return Err(Error::InvalidConfig("log axis needs positive values".into()));
            }
            xs.push(tx(x));
            ys.push(ty(y));
        }
    }
    if xs.is_empty() {
        return Err(Error::InvalidConfig("nothing to plot".into()));
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let px = |v: f64| ML + (v - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let py = |v: f64| H - MB - (v - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n  \
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        escape_xml(title)
    ));
    svg.push_str(&format!(
        "  <rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = x_lo + frac * (x_hi - x_lo);
        let yv = y_lo + frac * (y_hi - y_lo);
        let x_label = if log_x { format!("1e{xv:.1}") } else { format!("{xv:.3}") };
        let y_label = if log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
            px(xv),
            H - MB + 18.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y_label}</text>\n",
            ML - 6.0,
            py(yv) + 4.0
        ));
    }
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(tx(x)), py(ty(y))))
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            ML + 10.0,
            MT + 18.0 + 16.0 * si as f64,
            escape_xml(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auc_frozen_example() {
        let got = auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert!((got - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_extremes_and_tie_convention() {
        assert_eq!(auc(&[0.0, 0.1, 0.9, 1.0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 1.0, 0.0, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 6], &[0, 1, 0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn auc_matches_brute_force_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(4..40);
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..10) as f64) / 10.0) // coarse grid forces ties
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            labels[0] = 0;
            labels[1] = 1;
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] == 1 && labels[j] == 0 {
                        pairs += 1.0;
                        if scores[i] > scores[j] {
                            wins += 1.0;
                        } else if scores[i] == scores[j] {
                            wins += 0.5;
                        }
                    }
                }
            }
            let fast = auc(&scores, &labels).unwrap();
            assert!((fast - wins / pairs).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
        let base = auc(&scores, &labels).unwrap();
        let transforms: [fn(f64) -> f64; 3] =
            [|x| 3.0 * x + 7.0, |x| x.atan(), |x| x.exp()];
        for f in transforms {
            let mapped: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
            assert!((auc(&mapped, &labels).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_rejects_single_class() {
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auc(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn accuracy_equals_confusion_trace() {
        let predictions = [0, 1, 1, 0, 1, 1];
        let labels = [0, 1, 0, 0, 1, 0];
        let (acc, c) = acc_and_confusion(&predictions, &labels).unwrap();
        assert_eq!(c, [[2, 2], [0, 2]]);
        let n: u64 = c.iter().flatten().sum();
        assert_eq!(n as usize, labels.len());
        assert!((acc - (c[0][0] + c[1][1]) as f64 / n as f64).abs() < 1e-15);
        assert!((acc - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_class1_predictor_scores_the_majority_rate() {
        // the retina test split's class balance: 174 zeros, 226 ones
        let labels: Vec<u8> = [vec![0u8; 174], vec![1u8; 226]].concat();
        let predictions = vec![1u8; 400];
        let (acc, c) = acc_and_confusion(&predictions, &labels).unwrap();
        assert!((acc - 0.565).abs() < 1e-12);
        assert_eq!(c[0][0] + c[1][0], 0, "left column must be empty");
    }

    #[test]
    fn random_predictions_track_the_class_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labels: Vec<u8> = (0..4000).map(|i| u8::from(i % 4 == 0)).collect(); // prior 0.75 for class 0
        let predictions: Vec<u8> = (0..4000).map(|_| rng.random_range(0..2) as u8).collect();
        let (acc, _) = acc_and_confusion(&predictions, &labels).unwrap();
        // random guessing on a 0.75/0.25 split is right half the time
        assert!((acc - 0.5).abs() < 0.03, "acc {acc}");
    }

    #[test]
    fn all_correct_is_diagonal() {
        let labels = [0u8, 1, 0, 1];
        let (acc, c) = acc_and_confusion(&labels, &labels).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(c, [[2, 0], [0, 2]]);
    }

    #[test]
    fn crossover_report_brackets_the_root() {
        let report = crossover_report(400).unwrap();
        assert_eq!(report.crossover_n, 10801);
        let at = |n: u64| report.rows.iter().find(|r| r.n == n).unwrap();
        // near-equal totals around n = 10^4
        let r = at(10_000);
        assert_eq!(r.quantum_steps, 10_800);
        assert!((r.quantum_steps as f64 / r.classical_steps as f64 - 1.0).abs() < 0.1);
        // below the crossover classical wins, above it the sampler wins
        assert!(at(8192).quantum_steps > at(8192).classical_steps);
        assert!(at(16_384).quantum_steps < at(16_384).classical_steps);
        let row = at(report.crossover_n);
        assert!(row.quantum_steps <= row.classical_steps);
        // quarter the shots, quarter the crossover (up to the log ceiling)
        let small = crossover_report(100).unwrap();
        let ratio = report.crossover_n as f64 / small.crossover_n as f64;
        assert!((3.5..=5.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn csv_writers_emit_headers_and_rows() {
        let report = crossover_report(400).unwrap();
        let text = crossover_to_csv(&report);
        assert!(text.starts_with("n,classical_steps,quantum_steps\n"));
        assert_eq!(text.lines().count(), report.rows.len() + 1);

        let rows = vec![ScalingRow { n: 32, wall_time_s: 0.5, op_count: 1000 }];
        let text = scaling_to_csv(&rows);
        assert!(text.contains("32,0.5,1000"));
    }

    #[test]
    fn svg_writer_produces_wellformed_plot() {
        let series = vec![
            Series { label: "measured".into(), points: vec![(32.0, 0.01), (64.0, 0.04), (128.0, 0.16)] },
            Series { label: "n^2 fit".into(), points: vec![(32.0, 0.012), (128.0, 0.17)] },
        ];
        let svg = line_plot_svg("scaling < test >", &series, true, true).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("&lt; test &gt;"), "title must be escaped");
        assert!(line_plot_svg("empty", &[], false, false).is_err());
        assert!(
            line_plot_svg(
                "bad log",
                &[Series { label: "x".into(), points: vec![(0.0, 1.0)] }],
                true,
                false
            )
            .is_err()
        );
    }
}
