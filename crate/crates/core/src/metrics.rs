//! Threshold metrics, sweeps, ROC/AUC and per-clone-type breakdowns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::CloneType;
use crate::error::{Error, Result};

/// Precision, recall and F1 at one threshold. A metric whose denominator is
/// zero is reported as 0 and `degenerate` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub degenerate: bool,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Prf {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let (precision, recall) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
            degenerate: p.is_none() || r.is_none() || precision + recall == 0.0,
        }
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fp
    }
}

fn check_lengths(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    Ok(())
}

/// Metrics of the verdicts `score >= sigma` against labels (positive when
/// `> 0`).
pub fn prf(scores: &[f64], labels: &[f64], sigma: f64) -> Result<Prf> {
    check_lengths(scores, labels)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= sigma, y > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_, tn))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    #[serde(flatten)]
    pub prf: Prf,
}

/// Evenly spaced thresholds from -1 to 1 inclusive.
pub fn default_grid(step: f64) -> Vec<f64> {
    let n = (2.0 / step).round() as i64;
    (0..=n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect()
}

pub fn sweep(scores: &[f64], labels: &[f64], grid: &[f64]) -> Result<Vec<SweepPoint>> {
    grid.iter()
        .map(|&sigma| Ok(SweepPoint { sigma, prf: prf(scores, labels, sigma)? }))
        .collect()
}

/// Width of the contiguous run of sweep points around the best F1 whose F1
/// is at least `fraction` of the best, measured in threshold units.
pub fn near_best_width(curve: &[SweepPoint], fraction: f64) -> f64 {
    let Some(best) = (0..curve.len()).max_by(|&a, &b| {
        curve[a].prf.f1.total_cmp(&curve[b].prf.f1).then(b.cmp(&a))
    }) else {
        return 0.0;
    };
    let cut = fraction * curve[best].prf.f1;
    let mut lo = best;
    while lo > 0 && curve[lo - 1].prf.f1 >= cut {
        lo -= 1;
    }
    let mut hi = best;
    while hi + 1 < curve.len() && curve[hi + 1].prf.f1 >= cut {
        hi += 1;
    }
    curve[hi].sigma - curve[lo].sigma
}

fn class_counts(labels: &[f64]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    (pos, labels.len() - pos)
}

/// ROC points from (0,0) to (1,1), one per distinct score (descending), and
/// the trapezoid area under them.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<(Vec<(f64, f64)>, f64)> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 {
        return Err(Error::SingleClass("no positive pairs"));
    }
    if neg == 0 {
        return Err(Error::SingleClass("no negative pairs"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if labels[idx[k]] > 0.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok((points, auc))
}

/// Threshold maximizing F1, with its metrics.
///
/// Candidate cuts lie between consecutive distinct scores; the interior cut
/// `(u_k, u_{k+1}]` is represented by its midpoint and the cut keeping every
/// pair positive by the lowest score. Ties go to the widest interval, then
/// to the lowest threshold.
pub fn best_threshold(scores: &[f64], labels: &[f64]) -> Result<(f64, Prf)> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateValidation {
            positives: pos,
            negatives: neg,
        });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // walk from the highest score down, counting pairs at or above each score
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < idx.len() {
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if labels[idx[k]] > 0.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        groups.push((s, tp, fp));
    }
    let mut best: Option<(f64, f64, f64, Prf)> = None;
    for (g, &(s, tp, fp)) in groups.iter().enumerate() {
        let m = Prf::from_counts(tp, fp, pos - tp, neg - fp);
        let (sigma, width) = match groups.get(g + 1) {
            Some(&(lower, _, _)) => {
                let mid = lower + (s - lower) / 2.0;
                (if mid > lower { mid } else { s }, s - lower)
            }
            None => (s, 0.0),
        };
        let better = match &best {
            None => true,
            Some((f1, w, sg, _)) => {
                m.f1 > *f1 || (m.f1 == *f1 && (width > *w || (width == *w && sigma < *sg)))
            }
        };
        if better {
            best = Some((m.f1, width, sigma, m));
        }
    }
    let (_, _, sigma, m) = best.expect("at least one score");
    Ok((sigma, m))
}

/// Metrics per clone type: positives are that type's clone pairs, negatives
/// are all non-clone pairs.
pub fn per_type_report(
    scores: &[f64],
    labels: &[f64],
    types: &[Option<CloneType>],
    sigma: f64,
) -> Result<BTreeMap<CloneType, Prf>> {
    check_lengths(scores, labels)?;
    if types.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: types.len(),
        });
    }
    let mut present = Vec::new();
    for (k, (&y, t)) in labels.iter().zip(types).enumerate() {
        if y > 0.0 {
            match t {
                Some(t) if *t != CloneType::NonClone => {
                    if !present.contains(t) {
                        present.push(*t);
                    }
                }
                _ => return Err(Error::MissingTypeTags { index: k }),
            }
        }
    }
    present.sort();
    let mut out = BTreeMap::new();
    for ty in present {
        let (mut s, mut l) = (Vec::new(), Vec::new());
        for k in 0..scores.len() {
            if labels[k] <= 0.0 || types[k] == Some(ty) {
                s.push(scores[k]);
                l.push(labels[k]);
            }
        }
        out.insert(ty, prf(&s, &l, sigma)?);
    }
    Ok(out)
}

pub const PER_TYPE_NOTE: &str =
    "per-type rows: positives are the clone pairs of that type, negatives are all non-clone pairs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sigma: f64,
    #[serde(flatten)]
    pub at_sigma: Prf,
    pub auc: Option<f64>,
    pub sweep: Vec<SweepPoint>,
    pub roc: Vec<(f64, f64)>,
    pub per_type_note: String,
    pub per_type: BTreeMap<CloneType, Prf>,
}

impl EvalReport {
    pub fn build(
        scores: &[f64],
        labels: &[f64],
        types: &[Option<CloneType>],
        sigma: f64,
        grid: &[f64],
    ) -> Result<EvalReport> {
        let at_sigma = prf(scores, labels, sigma)?;
        let (roc, auc) = match roc_auc(scores, labels) {
            Ok((r, a)) => (r, Some(a)),
            Err(Error::SingleClass(_)) => (Vec::new(), None),
            Err(e) => return Err(e),
        };
        let per_type = if types.iter().any(Option::is_some) {
            per_type_report(scores, labels, types, sigma)?
        } else {
            BTreeMap::new()
        };
        Ok(EvalReport {
            sigma,
            at_sigma,
            auc,
            sweep: sweep(scores, labels, grid)?,
            roc,
            per_type_note: PER_TYPE_NOTE.to_string(),
            per_type,
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, m: &Prf| {
            let flag = if m.degenerate { "  (zero denominator)" } else { "" };
            let _ = writeln!(
                out,
                "{name:<10} {:>9.4} {:>9.4} {:>9.4}{flag}",
                m.precision, m.recall, m.f1
            );
        };
        let _ = writeln!(out, "threshold  {:.4}", self.sigma);
        match self.auc {
            Some(a) => {
                let _ = writeln!(out, "ROC AUC    {a:.4}");
            }
            None => out.push_str("ROC AUC    n/a (single class)\n"),
        }
        let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9}", "", "precision", "recall", "F1");
        row(&mut out, "overall", &self.at_sigma);
        for (t, m) in &self.per_type {
            row(&mut out, &t.to_string(), m);
        }
        if !self.per_type.is_empty() {
            let _ = writeln!(out, "({PER_TYPE_NOTE})");
        }
        out
    }

    pub fn sweep_csv(&self) -> String {
        let mut out = String::from("sigma,precision,recall,f1,positives\n");
        for p in &self.sweep {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.sigma,
                p.prf.precision,
                p.prf.recall,
                p.prf.f1,
                p.prf.positives()
            );
        }
        out
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (x, y) in &self.roc {
            let _ = writeln!(out, "{x},{y}");
        }
        out
    }

    pub fn sweep_svg(&self) -> String {
        let series: Vec<Series> = vec![
            ("precision", "#1f77b4", self.sweep.iter().map(|p| (p.sigma, p.prf.precision)).collect()),
            ("recall", "#2ca02c", self.sweep.iter().map(|p| (p.sigma, p.prf.recall)).collect()),
            ("F1", "#d62728", self.sweep.iter().map(|p| (p.sigma, p.prf.f1)).collect()),
        ];
        line_plot("threshold", (-1.0, 1.0), &series)
    }

    pub fn roc_svg(&self) -> String {
        let title = match self.auc {
            Some(a) => format!("ROC (AUC {a:.4})"),
            None => "ROC".to_string(),
        };
        let series = vec![(title.as_str(), "#1f77b4", self.roc.clone())];
        line_plot("false positive rate", (0.0, 1.0), &series)
    }
}

/// Name, stroke color and points of one plotted line.
type Series<'a> = (&'a str, &'a str, Vec<(f64, f64)>);

/// Minimal SVG line chart with y in [0, 1].
fn line_plot(x_label: &str, x_range: (f64, f64), series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let px = |x: f64| m + (x - x_range.0) / (x_range.1 - x_range.0) * (w - 2.0 * m);
    let py = |y: f64| h - m - y * (h - 2.0 * m);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        out,
        r#"<path d="M{:.1},{:.1} L{:.1},{:.1} L{:.1},{:.1}" stroke="black" fill="none"/>"#,
        px(x_range.0),
        py(1.0),
        px(x_range.0),
        py(0.0),
        px(x_range.1),
        py(0.0)
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = x_range.0 + t * (x_range.1 - x_range.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{xv:.2}</text>"#,
            px(xv),
            h - m + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{t:.2}</text>"#,
            m - 6.0,
            py(t) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{x_label}</text>"#,
        w / 2.0,
        h - 10.0
    );
    for (k, (name, color, pts)) in series.iter().enumerate() {
        if !pts.is_empty() {
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{name}</text>"#,
            w - m - 120.0,
            m + 16.0 * k as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prf_examples() {
        let m = prf(&[0.9, 0.8, -0.5], &[1.0, 1.0, -1.0], 0.0).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = prf(&[0.1, 0.2, 0.3, 0.4], &[1.0, -1.0, 1.0, -1.0], -1.0).unwrap();
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        let m = prf(&[0.5], &[1.0], 0.5).unwrap();
        assert_eq!(m.tp, 1);
        let m = prf(&[0.1], &[1.0], 0.5).unwrap();
        assert!(m.degenerate && m.f1 == 0.0 && m.precision == 0.0);
        assert!(matches!(prf(&[0.1], &[], 0.0), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn sweep_edges() {
        let s = [-1.0, 0.2, 1.0];
        let y = [1.0, -1.0, 1.0];
        let c = sweep(&s, &y, &[-1.0]).unwrap();
        assert_eq!(c[0].prf.positives(), 3);
        let c = sweep(&s, &y, &[1.0 + 1e-9]).unwrap();
        assert_eq!(c[0].prf.positives(), 0);
        assert_eq!(c[0].prf.recall, 0.0);
        let (sigma, m) = best_threshold(&s, &y).unwrap();
        assert_eq!(sweep(&s, &y, &[sigma]).unwrap()[0].prf, m);
    }

    #[test]
    fn grid_shape() {
        let g = default_grid(0.01);
        assert_eq!(g.len(), 201);
        assert_eq!((g[0], g[100], g[200]), (-1.0, 0.0, 1.0));
    }

    #[test]
    fn auc_examples() {
        let (_, a) = roc_auc(&[0.9, 0.8, 0.1, 0.0], &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(a, 1.0);
        let (roc, a) = roc_auc(&[0.3; 6], &[1.0, -1.0, 1.0, -1.0, -1.0, 1.0]).unwrap();
        assert_eq!(a, 0.5);
        assert_eq!(roc, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(roc_auc(&[0.3], &[1.0]), Err(Error::SingleClass(_))));
    }

    pub(crate) fn mann_whitney(scores: &[f64], labels: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] > 0.0 && labels[j] <= 0.0 {
                    den += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let scores: Vec<f64> = (0..20).map(|_| (rng.random_range(-4..5) as f64) / 4.0).collect();
        let mut labels: Vec<f64> = (0..20).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        labels[0] = 1.0;
        labels[1] = -1.0;
        let (_, a) = roc_auc(&scores, &labels).unwrap();
        assert!((a - mann_whitney(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let (sigma, m) = best_threshold(&[0.9, 0.8, -0.2, -0.6], &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(m.f1, 1.0);
        assert!((sigma - 0.3).abs() < 1e-15);

        let (sigma, m) = best_threshold(&[0.4; 4], &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(sigma, 0.4);
        assert_eq!(m, prf(&[0.4; 4], &[1.0, -1.0, 1.0, -1.0], -1.0).unwrap());

        let s = [0.9, 0.8, 0.7, 0.1];
        let y = [1.0, -1.0, 1.0, -1.0];
        let (sigma, m) = best_threshold(&s, &y).unwrap();
        assert!((m.f1 - 0.8).abs() < 1e-15);
        assert!(sigma > 0.1 && sigma <= 0.7);
        // brute force over the five cut positions
        let cuts = [0.0, 0.5, 0.75, 0.85, 0.95];
        let best = cuts.iter().map(|&c| prf(&s, &y, c).unwrap().f1).fold(0.0, f64::max);
        assert_eq!(best, m.f1);

        assert!(matches!(
            best_threshold(&[0.1, 0.2], &[1.0, 1.0]),
            Err(Error::DegenerateValidation { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn per_type_examples() {
        let s = [0.9, 0.2, 0.8, -0.1, 0.7];
        let y = [1.0, 1.0, 1.0, -1.0, -1.0];
        let one = [Some(CloneType::T2), Some(CloneType::T2), Some(CloneType::T2), Some(CloneType::NonClone), None];
        let r = per_type_report(&s, &y, &one, 0.5).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[&CloneType::T2], prf(&s, &y, 0.5).unwrap());

        let two = [Some(CloneType::T1), Some(CloneType::WT3T4), Some(CloneType::WT3T4), None, None];
        let r = per_type_report(&s, &y, &two, 0.5).unwrap();
        assert_eq!(r[&CloneType::T1].recall, 1.0);
        assert_eq!(r[&CloneType::WT3T4].recall, 0.5);
        assert!(!r.contains_key(&CloneType::ST3));
        let pooled = prf(&s, &y, 0.5).unwrap().recall;
        let weighted = (1.0 * r[&CloneType::T1].recall + 2.0 * r[&CloneType::WT3T4].recall) / 3.0;
        assert!((pooled - weighted).abs() < 1e-15);

        let missing = [Some(CloneType::T1), None, None, None, None];
        assert!(matches!(
            per_type_report(&s, &y, &missing, 0.5),
            Err(Error::MissingTypeTags { index: 1 })
        ));
    }

    #[test]
    fn report_outputs() {
        let s = [0.9, 0.2, 0.8, -0.1];
        let y = [1.0, 1.0, -1.0, -1.0];
        let r = EvalReport::build(&s, &y, &[None; 4], 0.5, &default_grid(0.5)).unwrap();
        assert_eq!(r.sweep.len(), 5);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("f1").is_some());
        assert!(r.to_table().contains("overall"));
        assert_eq!(r.sweep_csv().lines().count(), 6);
        assert!(r.sweep_svg().starts_with("<svg"));
        assert!(r.roc_svg().contains("AUC"));
    }

    #[test]
    fn near_best_width_runs() {
        let mk = |f1s: &[f64]| -> Vec<SweepPoint> {
            f1s.iter()
                .enumerate()
                .map(|(k, &f)| SweepPoint {
                    sigma: k as f64 * 0.1,
                    prf: Prf { f1: f, ..Prf::from_counts(0, 0, 0, 0) },
                })
                .collect()
        };
        let w = near_best_width(&mk(&[0.1, 0.96, 1.0, 0.97, 0.5, 0.99]), 0.95);
        assert!((w - 0.2).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn auc_equals_mann_whitney(
            data in prop::collection::vec((-8i32..8, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 8.0).collect();
            let labels: Vec<f64> = data.iter().map(|(_, l)| if *l { 1.0 } else { -1.0 }).collect();
            let (pos, neg) = class_counts(&labels);
            prop_assume!(pos > 0 && neg > 0);
            let (roc, a) = roc_auc(&scores, &labels).unwrap();
            prop_assert!((a - mann_whitney(&scores, &labels)).abs() <= 1e-12);
            prop_assert!(roc.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        }

        #[test]
        fn sweep_positives_monotone(
            scores in prop::collection::vec(-1.0f64..1.0, 1..40),
            flips in prop::collection::vec(any::<bool>(), 40),
        ) {
            let labels: Vec<f64> = scores.iter().zip(&flips).map(|(_, &f)| if f { 1.0 } else { -1.0 }).collect();
            let curve = sweep(&scores, &labels, &default_grid(0.01)).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0].prf.positives() >= w[1].prf.positives()));
        }
    }
}
