//! Evaluation protocol: rank correlations, the four-parameter logistic
//! mapping with PLCC/RMSE, classification precision/recall/accuracy, and a
//! residual variance-ratio significance test.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::heads::ClassDecision;

/// Fractional (mid) ranks with ties averaged.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // average of 1-based ranks i+1 ..= j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "constant vector has no correlation".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

fn check_paired(pred: &[f64], mos: &[f64], min: usize) -> Result<()> {
    if pred.len() != mos.len() {
        return Err(Error::Shape(format!(
            "paired vectors differ in length: {} vs {}",
            pred.len(),
            mos.len()
        )));
    }
    if pred.len() < min {
        return Err(Error::DegenerateInput(format!(
            "need at least {min} pairs, got {}",
            pred.len()
        )));
    }
    Ok(())
}

/// Spearman rank correlation: Pearson over midranks.
pub fn srcc(pred: &[f64], mos: &[f64]) -> Result<f64> {
    check_paired(pred, mos, 2)?;
    pearson(&midranks(pred), &midranks(mos))
}

/// Counts swaps while merge-sorting `ys` (Knight's inversion count).
fn merge_count(ys: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = ys.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = ys.split_at_mut(mid);
    let mut swaps = merge_count(left, buf) + merge_count(right, buf);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if right[j] < left[i] {
            swaps += (left.len() - i) as u64;
            buf[k] = right[j];
            j += 1;
        } else {
            buf[k] = left[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + left.len() - i].copy_from_slice(&left[i..]);
    let k = k + left.len() - i;
    buf[k..k + right.len() - j].copy_from_slice(&right[j..]);
    ys.copy_from_slice(&buf[..n]);
    swaps
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as u64;
        total += t * (t - 1) / 2;
        i = j + 1;
    }
    total
}

/// Tie-adjusted Kendall tau-b via sorting and inversion counting.
pub fn krcc(pred: &[f64], mos: &[f64]) -> Result<f64> {
    check_paired(pred, mos, 2)?;
    let n = pred.len();
    let n0 = (n as u64) * (n as u64 - 1) / 2;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]).then(mos[a].total_cmp(&mos[b])));
    let x_sorted: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
    let mut y_by_x: Vec<f64> = idx.iter().map(|&i| mos[i]).collect();

    // pairs tied on x, and tied on both x and y
    let n1 = tie_pairs(&x_sorted);
    let mut n3 = 0u64;
    {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && x_sorted[j + 1] == x_sorted[i] && y_by_x[j + 1] == y_by_x[i] {
                j += 1;
            }
            let t = (j - i + 1) as u64;
            n3 += t * (t - 1) / 2;
            i = j + 1;
        }
    }

    // pairs tied on y
    let mut y_sorted = mos.to_vec();
    y_sorted.sort_by(f64::total_cmp);
    let n2 = tie_pairs(&y_sorted);

    if n0 == n1 || n0 == n2 {
        return Err(Error::UndefinedCorrelation(
            "all-tied vector has no rank correlation".into(),
        ));
    }

    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut y_by_x, &mut buf);

    let c_minus_d = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok(c_minus_d as f64 / denom)
}

/// Fitted four-parameter logistic
/// `f(x) = (b1 - b2) / (1 + exp(-(x - b3)/b4)) + b2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogisticParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub converged: bool,
}

impl LogisticParams {
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.beta3) / self.beta4;
        (self.beta1 - self.beta2) / (1.0 + (-u).exp()) + self.beta2
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Solves a 4x4 system with partial pivoting; `None` if singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for col in (0..4).rev() {
        let mut acc = b[col];
        for k in col + 1..4 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

fn sse(params: &[f64; 4], pred: &[f64], mos: &[f64]) -> f64 {
    let p = LogisticParams {
        beta1: params[0],
        beta2: params[1],
        beta3: params[2],
        beta4: params[3],
        converged: false,
    };
    pred.iter()
        .zip(mos)
        .map(|(&x, &y)| {
            let r = p.eval(x) - y;
            r * r
        })
        .sum()
}

/// Least-squares fit of the four-parameter logistic by Levenberg-Marquardt
/// from the deterministic initialization `b1=max(mos), b2=min(mos),
/// b3=median(pred), b4=std(pred)`; refines until the relative objective
/// change drops below 1e-10 or 1000 iterations.
pub fn fit_logistic(pred: &[f64], mos: &[f64]) -> Result<LogisticParams> {
    check_paired(pred, mos, 5)?;
    let spread = population_std(pred);
    if spread == 0.0 {
        return Err(Error::DegenerateInput(
            "constant predictions cannot be mapped".into(),
        ));
    }
    let mos_max = mos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mos_min = mos.iter().copied().fold(f64::INFINITY, f64::min);
    let mut b = [mos_max, mos_min, median(pred), spread];

    let mut lambda = 1e-3;
    let mut obj = sse(&b, pred, mos);
    let mut converged = false;
    for _ in 0..1000 {
        // J^T J and J^T r at the current parameters
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for (&x, &y) in pred.iter().zip(mos) {
            let u = (x - b[2]) / b[3];
            let s = 1.0 / (1.0 + (-u).exp());
            let f = (b[0] - b[1]) * s + b[1];
            let r = f - y;
            let ds = s * (1.0 - s);
            let j = [
                s,
                1.0 - s,
                (b[0] - b[1]) * ds * (-1.0 / b[3]),
                (b[0] - b[1]) * ds * (-u / b[3]),
            ];
            for row in 0..4 {
                jtr[row] += j[row] * r;
                for col in 0..4 {
                    jtj[row][col] += j[row] * j[col];
                }
            }
        }

        let mut improved = false;
        for _ in 0..24 {
            let mut damped = jtj;
            for d in 0..4 {
                damped[d][d] += lambda * jtj[d][d].max(1e-12);
            }
            let rhs = [-jtr[0], -jtr[1], -jtr[2], -jtr[3]];
            let Some(delta) = solve4(damped, rhs) else {
                lambda *= 3.0;
                continue;
            };
            let mut trial = b;
            for d in 0..4 {
                trial[d] += delta[d];
            }
            if trial[3] == 0.0 {
                lambda *= 3.0;
                continue;
            }
            let trial_obj = sse(&trial, pred, mos);
            if trial_obj.is_finite() && trial_obj <= obj {
                let rel = if obj > 0.0 { (obj - trial_obj) / obj } else { 0.0 };
                b = trial;
                obj = trial_obj;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 3.0;
        }
        if converged {
            break;
        }
        if !improved {
            // stalled: report best-so-far
            break;
        }
    }

    let mut params = LogisticParams {
        beta1: b[0],
        beta2: b[1],
        beta3: b[2],
        beta4: b[3],
        converged,
    };
    // beta4 < 0 describes the same curve with the asymptotes swapped
    if params.beta4 < 0.0 {
        params = LogisticParams {
            beta1: params.beta2,
            beta2: params.beta1,
            beta3: params.beta3,
            beta4: -params.beta4,
            converged: params.converged,
        };
    }
    Ok(params)
}

/// Maps predictions through the fitted logistic, then Pearson correlation
/// and root-mean-squared error against the subjective scores.
pub fn plcc_rmse_after_mapping(pred: &[f64], mos: &[f64]) -> Result<(f64, f64)> {
    let params = fit_logistic(pred, mos)?;
    let mapped: Vec<f64> = pred.iter().map(|&x| params.eval(x)).collect();
    let plcc = pearson(&mapped, mos)?;
    let rmse = (mapped
        .iter()
        .zip(mos)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / mos.len() as f64)
        .sqrt();
    Ok((plcc, rmse))
}

/// SRCC/KRCC plus logistic-mapped PLCC and RMSE.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegressionReport {
    pub srcc: f64,
    pub krcc: f64,
    pub plcc: f64,
    pub rmse: f64,
    pub n: usize,
}

pub fn regression_report(pred: &[f64], mos: &[f64]) -> Result<RegressionReport> {
    let (plcc, rmse) = plcc_rmse_after_mapping(pred, mos)?;
    Ok(RegressionReport {
        srcc: srcc(pred, mos)?,
        krcc: krcc(pred, mos)?,
        plcc,
        rmse,
        n: pred.len(),
    })
}

/// Ratios whose denominator was zero are reported as 0 and flagged here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct UndefinedRatios {
    pub p_t: bool,
    pub p_f: bool,
    pub r_t: bool,
    pub r_f: bool,
}

/// Precision/recall of both classes plus accuracy and confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassificationReport {
    pub p_t: f64,
    pub p_f: f64,
    pub r_t: f64,
    pub r_f: f64,
    pub accuracy: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
    pub n: usize,
    pub undefined: UndefinedRatios,
}

/// True-4K is the positive class.
pub fn classification_report(
    decisions: &[ClassDecision],
    labels: &[ClassDecision],
) -> Result<ClassificationReport> {
    if decisions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "decision/label lengths differ: {} vs {}",
            decisions.len(),
            labels.len()
        )));
    }
    if decisions.is_empty() {
        return Err(Error::EmptyInput("no decisions to score".into()));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&d, &l) in decisions.iter().zip(labels) {
        match (d, l) {
            (ClassDecision::True4k, ClassDecision::True4k) => tp += 1,
            (ClassDecision::True4k, ClassDecision::Pseudo4k) => fp += 1,
            (ClassDecision::Pseudo4k, ClassDecision::Pseudo4k) => tn += 1,
            (ClassDecision::Pseudo4k, ClassDecision::True4k) => fn_ += 1,
        }
    }
    let mut undefined = UndefinedRatios::default();
    let mut ratio = |num: usize, den: usize, flag: fn(&mut UndefinedRatios) -> &mut bool| {
        if den == 0 {
            *flag(&mut undefined) = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let p_t = ratio(tp, tp + fp, |u| &mut u.p_t);
    let p_f = ratio(tn, tn + fn_, |u| &mut u.p_f);
    let r_t = ratio(tp, tp + fn_, |u| &mut u.r_t);
    let r_f = ratio(tn, tn + fp, |u| &mut u.r_f);
    let n = decisions.len();
    Ok(ClassificationReport {
        p_t,
        p_f,
        r_t,
        r_f,
        accuracy: (tp + tn) as f64 / n as f64,
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fn_,
        n,
        undefined,
    })
}

/// Outcome of the residual variance comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceVerdict {
    ABetter,
    BBetter,
    Indistinguishable,
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Two-sided variance-ratio (F) test on prediction residuals; the smaller
/// residual variance wins when the ratio leaves the alpha band.
pub fn residual_f_test(
    residuals_a: &[f64],
    residuals_b: &[f64],
    alpha: f64,
) -> Result<SignificanceVerdict> {
    if residuals_a.len() < 2 || residuals_b.len() < 2 {
        return Err(Error::DegenerateInput(
            "residual vectors need at least 2 entries".into(),
        ));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0,1), got {alpha}")));
    }
    let var_a = sample_variance(residuals_a);
    let var_b = sample_variance(residuals_b);
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::DegenerateTest(
            "zero residual variance makes the ratio degenerate".into(),
        ));
    }
    let f = var_a / var_b;
    let dist = FisherSnedecor::new(
        (residuals_a.len() - 1) as f64,
        (residuals_b.len() - 1) as f64,
    )
    .map_err(|e| Error::DegenerateTest(e.to_string()))?;
    let lower = dist.inverse_cdf(alpha / 2.0);
    let upper = dist.inverse_cdf(1.0 - alpha / 2.0);
    Ok(if f < lower {
        SignificanceVerdict::ABetter
    } else if f > upper {
        SignificanceVerdict::BBetter
    } else {
        SignificanceVerdict::Indistinguishable
    })
}

/// Metrics of one scene-disjoint split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitMetrics {
    pub trial: usize,
    pub fingerprint: String,
    pub regression: RegressionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
}

/// Mean or standard deviation of the headline metrics across splits.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSummary {
    pub srcc: f64,
    pub krcc: f64,
    pub plcc: f64,
    pub rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

/// Per-split metrics with their mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub per_split: Vec<SplitMetrics>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

impl EvalReport {
    /// Recomputes mean and standard deviation from the stored per-split
    /// values, so the aggregate always matches the rows it ships with.
    pub fn aggregate(per_split: Vec<SplitMetrics>) -> Result<EvalReport> {
        if per_split.is_empty() {
            return Err(Error::EmptyInput("no splits to aggregate".into()));
        }
        let stats = |take: &dyn Fn(&SplitMetrics) -> f64| {
            let values: Vec<f64> = per_split.iter().map(take).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let class_stats = |take: &dyn Fn(&ClassificationReport) -> f64| {
            let values: Vec<f64> = per_split
                .iter()
                .filter_map(|s| s.classification.as_ref().map(take))
                .collect();
            if values.is_empty() {
                return (None, None);
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        };

        let (srcc_m, srcc_s) = stats(&|s| s.regression.srcc);
        let (krcc_m, krcc_s) = stats(&|s| s.regression.krcc);
        let (plcc_m, plcc_s) = stats(&|s| s.regression.plcc);
        let (rmse_m, rmse_s) = stats(&|s| s.regression.rmse);
        let (pt_m, pt_s) = class_stats(&|c| c.p_t);
        let (pf_m, pf_s) = class_stats(&|c| c.p_f);
        let (rt_m, rt_s) = class_stats(&|c| c.r_t);
        let (rf_m, rf_s) = class_stats(&|c| c.r_f);
        let (acc_m, acc_s) = class_stats(&|c| c.accuracy);

        Ok(EvalReport {
            per_split,
            mean: MetricSummary {
                srcc: srcc_m,
                krcc: krcc_m,
                plcc: plcc_m,
                rmse: rmse_m,
                p_t: pt_m,
                p_f: pf_m,
                r_t: rt_m,
                r_f: rf_m,
                accuracy: acc_m,
            },
            std: MetricSummary {
                srcc: srcc_s,
                krcc: krcc_s,
                plcc: plcc_s,
                rmse: rmse_s,
                p_t: pt_s,
                p_f: pf_s,
                r_t: rt_s,
                r_f: rf_s,
                accuracy: acc_s,
            },
        })
    }
}
