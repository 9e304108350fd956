//! Continual-learning scores, per-domain classification reports and the
//! Friedman / Nemenyi rank statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular accuracy table: row `l` (0-based) holds the accuracy on
/// domains `0..=l` after learning domain `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    /// Appends the next row, which must have one more entry than the last.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::invalid(format!(
                "row {} needs {} entries, got {}",
                self.rows.len() + 1,
                self.rows.len() + 1,
                row.len()
            )));
        }
        if row.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("accuracies must lie in [0, 1]"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.rows.len()
    }

    /// Accuracy on domain `i` after learning domain `l`, both 0-based, `i ≤ l`.
    pub fn get(&self, l: usize, i: usize) -> Option<f64> {
        self.rows.get(l).and_then(|r| r.get(i)).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn final_row(&self) -> Option<&[f64]> {
        self.rows.last().map(|r| r.as_slice())
    }
}

impl Default for AccuracyMatrix {
    fn default() -> Self {
        Self::new()
    }
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// Average accuracy over all domains after the last one is learned.
pub fn acc(m: &AccuracyMatrix) -> Result<f64> {
    let last = m.final_row().ok_or_else(|| Error::invalid("empty accuracy matrix"))?;
    Ok(mean(last.iter().copied()))
}

/// Mean accuracy on each domain right after learning it.
pub fn la(m: &AccuracyMatrix) -> Result<f64> {
    if m.d() == 0 {
        return Err(Error::invalid("empty accuracy matrix"));
    }
    Ok(mean(m.rows.iter().enumerate().map(|(l, r)| r[l])))
}

/// Mean drop from each earlier domain's best accuracy to its final one.
pub fn fm(m: &AccuracyMatrix) -> Result<f64> {
    let d = m.d();
    if d < 2 {
        return Err(Error::invalid("forgetting needs at least two domains"));
    }
    let last = &m.rows[d - 1];
    let drops = (0..d - 1).map(|i| {
        (i..d - 1)
            .map(|l| m.rows[l][i] - last[i])
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(mean(drops))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClMetrics {
    pub acc: f64,
    pub la: f64,
    /// `None` for a single domain.
    pub fm: Option<f64>,
}

pub fn cl_metrics(m: &AccuracyMatrix) -> Result<ClMetrics> {
    Ok(ClMetrics {
        acc: acc(m)?,
        la: la(m)?,
        fm: if m.d() >= 2 { Some(fm(m)?) } else { None },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when some per-class precision or recall had an empty denominator
    /// and was counted as 0.
    pub zero_division: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_domain: BTreeMap<u32, DomainScores>,
}

/// Macro-averaged precision and recall per domain; F1 is their harmonic mean.
pub fn class_report(
    predictions: &[usize],
    labels: &[usize],
    domains: &[u32],
    num_classes: usize,
) -> Result<ClassReport> {
    if predictions.len() != labels.len() || labels.len() != domains.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions, {} labels, {} domain ids",
            predictions.len(),
            labels.len(),
            domains.len()
        )));
    }
    if predictions.iter().chain(labels).any(|&c| c >= num_classes) {
        return Err(Error::invalid("class index out of range"));
    }
    let mut confusion: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for ((&p, &y), &d) in predictions.iter().zip(labels).zip(domains) {
        confusion
            .entry(d)
            .or_insert_with(|| vec![0; num_classes * num_classes])[y * num_classes + p] += 1;
    }
    let per_domain = confusion
        .into_iter()
        .map(|(d, cm)| {
            let mut zero_division = false;
            let (mut p_sum, mut r_sum) = (0.0, 0.0);
            for c in 0..num_classes {
                let tp = cm[c * num_classes + c] as f64;
                let predicted: usize = (0..num_classes).map(|y| cm[y * num_classes + c]).sum();
                let actual: usize = cm[c * num_classes..(c + 1) * num_classes].iter().sum();
                if predicted == 0 || actual == 0 {
                    zero_division = true;
                }
                if predicted > 0 {
                    p_sum += tp / predicted as f64;
                }
                if actual > 0 {
                    r_sum += tp / actual as f64;
                }
            }
            let precision = p_sum / num_classes as f64;
            let recall = r_sum / num_classes as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let support = cm.iter().sum();
            (
                d,
                DomainScores {
                    precision,
                    recall,
                    f1,
                    support,
                    zero_division,
                },
            )
        })
        .collect();
    Ok(ClassReport { per_domain })
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) || !a.is_finite() || x.is_nan() {
        return Err(Error::invalid(format!("gamma_q needs a > 0, x >= 0; got a={a}, x={x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // series for P(a, x)
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        Ok((1.0 - sum * log_prefactor.exp()).clamp(0.0, 1.0))
    } else {
        // continued fraction for Q(a, x), modified Lentz
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok((log_prefactor.exp() * h).clamp(0.0, 1.0))
    }
}

/// Upper tail of the χ² distribution.
pub fn chi2_sf(x: f64, dof: f64) -> Result<f64> {
    gamma_q(dof / 2.0, x / 2.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Friedman {
    pub statistic: f64,
    pub p_value: f64,
    /// Mean rank per column; rank 1 is the smallest value in a row.
    pub mean_ranks: Vec<f64>,
    pub n_blocks: usize,
}

/// Ranks within one row, ascending, ties sharing the average rank.
pub fn average_ranks(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman χ² test over `blocks × treatments` scores. To rank accuracies
/// best-first, pass them negated.
pub fn friedman(scores: &[Vec<f64>]) -> Result<Friedman> {
    let n = scores.len();
    let k = scores.first().map_or(0, |r| r.len());
    if n < 2 || k < 2 {
        return Err(Error::invalid(format!(
            "friedman needs at least 2 blocks and 2 treatments, got {n}×{k}"
        )));
    }
    if scores.iter().any(|r| r.len() != k) {
        return Err(Error::invalid("ragged score matrix"));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let mut rank_sums = vec![0.0; k];
    for row in scores {
        for (s, r) in rank_sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
    }
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n as f64).collect();
    let (nf, kf) = (n as f64, k as f64);
    let centre = (kf + 1.0) / 2.0;
    let spread: f64 = mean_ranks.iter().map(|r| (r - centre).powi(2)).sum();
    let statistic = 12.0 * nf / (kf * (kf + 1.0)) * spread;
    let p_value = chi2_sf(statistic, kf - 1.0)?;
    Ok(Friedman {
        statistic,
        p_value,
        mean_ranks,
        n_blocks: n,
    })
}

/// Studentized range quantiles at α = 0.05 divided by √2, for k = 2..=20.
const NEMENYI_Q05: [f64; 19] = [
    1.960, 2.344, 2.569, 2.728, 2.850, 2.948, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];

pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    if alpha != 0.05 {
        return Err(Error::invalid(format!("only alpha = 0.05 is tabulated, got {alpha}")));
    }
    if !(2..=20).contains(&k) {
        return Err(Error::invalid(format!("critical difference supports 2..=20 treatments, got {k}")));
    }
    Ok(NEMENYI_Q05[k - 2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalDifference {
    pub cd: f64,
    /// Maximal sets of treatment indices whose mean ranks lie within `cd`,
    /// each listed best (lowest rank) first.
    pub groups: Vec<Vec<usize>>,
}

pub fn critical_difference(mean_ranks: &[f64], n_blocks: usize, alpha: f64) -> Result<CriticalDifference> {
    let k = mean_ranks.len();
    let q = nemenyi_q(k, alpha)?;
    if n_blocks == 0 {
        return Err(Error::invalid("need at least one block"));
    }
    let cd = q * ((k * (k + 1)) as f64 / (6.0 * n_blocks as f64)).sqrt();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last_end = 0;
    for start in 0..k {
        let mut end = start;
        while end + 1 < k && mean_ranks[order[end + 1]] - mean_ranks[order[start]] <= cd {
            end += 1;
        }
        // windows are nested in their predecessor unless they reach further
        if start == 0 || end > last_end {
            groups.push(order[start..=end].to_vec());
            last_end = end;
        }
    }
    Ok(CriticalDifference { cd, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> AccuracyMatrix {
        AccuracyMatrix::from_rows(vec![vec![0.8], vec![0.7, 0.9]]).unwrap()
    }

    #[test]
    fn hand_worked_matrix() {
        let m = worked();
        // equal up to f64 rounding of the decimal inputs
        assert!((acc(&m).unwrap() - 0.8).abs() < 1e-15);
        assert!((la(&m).unwrap() - 0.85).abs() < 1e-15);
        assert!((fm(&m).unwrap() - 0.1).abs() < 1e-15);
        assert!(fm(&AccuracyMatrix::from_rows(vec![vec![1.0]]).unwrap()).is_err());
        let ones = AccuracyMatrix::from_rows(vec![vec![1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!((acc(&ones).unwrap(), la(&ones).unwrap(), fm(&ones).unwrap()), (1.0, 1.0, 0.0));
    }

    #[test]
    fn matrix_shape_enforced() {
        let mut m = AccuracyMatrix::new();
        assert!(m.push_row(vec![0.5, 0.5]).is_err());
        m.push_row(vec![0.5]).unwrap();
        assert!(m.push_row(vec![0.5]).is_err());
        assert!(m.push_row(vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn class_report_examples() {
        let labels = [0, 1, 2, 0, 1, 2];
        let r = class_report(&labels, &labels, &[1; 6], 3).unwrap();
        let s = r.per_domain[&1];
        assert_eq!((s.precision, s.recall, s.f1, s.zero_division), (1.0, 1.0, 1.0, false));

        let r = class_report(&[0; 6], &labels, &[4; 6], 3).unwrap();
        let s = r.per_domain[&4];
        assert!((s.recall - 1.0 / 3.0).abs() < 1e-15);
        // precision: class 0 gets 2/6, the others divide by zero
        assert!((s.precision - 1.0 / 9.0).abs() < 1e-15);
        assert!(s.zero_division);
        assert!((s.f1 - 2.0 * s.precision * s.recall / (s.precision + s.recall)).abs() < 1e-15);
        assert!(class_report(&[0], &[0, 1], &[1, 1], 3).is_err());
    }

    #[test]
    fn friedman_fixtures() {
        let strict: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 10.0 + i as f64, 20.0]).collect();
        let f = friedman(&strict).unwrap();
        assert_eq!(f.statistic, 8.0);
        assert_eq!(f.mean_ranks, vec![1.0, 2.0, 3.0]);
        assert!((f.p_value - (-4.0f64).exp()).abs() < 1e-15);

        let same = vec![vec![0.5; 4]; 3];
        let f = friedman(&same).unwrap();
        assert_eq!((f.statistic, f.p_value), (0.0, 1.0));
        assert!(friedman(&[vec![1.0, 2.0]]).is_err());
        assert!(friedman(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn chi2_tail_closed_forms() {
        // even degrees of freedom have elementary tails
        for x in [0.1, 1.0, 4.0, 8.0, 30.0, 120.0] {
            let two = (-x / 2.0f64).exp();
            let four = two * (1.0 + x / 2.0);
            let six = two * (1.0 + x / 2.0 + x * x / 8.0);
            for (dof, want) in [(2.0, two), (4.0, four), (6.0, six)] {
                let got = chi2_sf(x, dof).unwrap();
                assert!(((got - want) / want).abs() < 1e-10, "x={x} dof={dof}");
            }
        }
        assert_eq!(chi2_sf(0.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn ln_gamma_at_integers_and_half() {
        let mut fact = 1.0f64;
        for n in 1..30 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * fact.ln().abs().max(1.0));
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn critical_difference_examples() {
        let cd = critical_difference(&[5.5; 10], 10, 0.05).unwrap();
        assert!((cd.cd - 3.164 * (110.0f64 / 60.0).sqrt()).abs() < 1e-12);
        assert_eq!(cd.groups, vec![(0..10).collect::<Vec<_>>()]);

        let far = critical_difference(&[1.0, 2.0], 1, 0.05).unwrap();
        assert!((far.cd - 1.96).abs() < 1e-12);
        let gap = critical_difference(&[1.0, 1.0 + far.cd * 1.01], 1, 0.05).unwrap();
        assert_eq!(gap.groups, vec![vec![0], vec![1]]);

        let chain = critical_difference(&[1.0, 2.0, 3.0, 4.0], 20, 0.05).unwrap();
        // cd ≈ 1.05: neighbours group, the ends do not
        assert_eq!(chain.groups, vec![vec![0, 1], vec![1, 2], vec![2, 3]]);
        assert!(critical_difference(&[1.0], 5, 0.05).is_err());
        assert!(critical_difference(&[1.0, 2.0], 5, 0.1).is_err());
    }
}
