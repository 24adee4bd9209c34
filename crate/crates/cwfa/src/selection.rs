//! Model selection over the (code, G, q) grid and partition agreement.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::aecm::{FitConfig, FitResult};
use crate::constraint::ConstraintCode;
use crate::error::{CwfaError, Result};
use crate::exec;
use crate::init::{hierarchical_fit_family, kmeans_partition};
use crate::model::Dataset;

/// Bayesian information criterion under the larger-is-better convention.
pub fn bic(loglik: f64, eta: usize, n: usize) -> f64 {
    2.0 * loglik - eta as f64 * (n as f64).ln()
}

/// Hubert-Arabie adjusted Rand index between two labelings of the same rows.
/// Pair counts stay in exact integer arithmetic until the final division.
pub fn ari<T: Eq + Hash, U: Eq + Hash>(a: &[T], b: &[U]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CwfaError::InvalidInput(format!(
            "label vectors of unequal length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(CwfaError::InvalidInput("need at least two observations".into()));
    }

    let mut a_ids: HashMap<&T, usize> = HashMap::new();
    let mut b_ids: HashMap<&U, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut a_counts: Vec<u64> = Vec::new();
    let mut b_counts: Vec<u64> = Vec::new();
    for (x, y) in a.iter().zip(b) {
        let next_a = a_ids.len();
        let i = *a_ids.entry(x).or_insert(next_a);
        if i == a_counts.len() {
            a_counts.push(0);
        }
        let next_b = b_ids.len();
        let j = *b_ids.entry(y).or_insert(next_b);
        if j == b_counts.len() {
            b_counts.push(0);
        }
        a_counts[i] += 1;
        b_counts[j] += 1;
        *cells.entry((i, j)).or_insert(0) += 1;
    }

    let choose2 = |v: u64| -> u128 { (v as u128) * (v.saturating_sub(1) as u128) / 2 };
    let cell_pairs: u128 = cells.values().map(|&v| choose2(v)).sum();
    let a_pairs: u128 = a_counts.iter().map(|&v| choose2(v)).sum();
    let b_pairs: u128 = b_counts.iter().map(|&v| choose2(v)).sum();
    let total_pairs = choose2(n as u64);

    let expected = a_pairs as f64 * b_pairs as f64 / total_pairs as f64;
    let max_index = (a_pairs as f64 + b_pairs as f64) / 2.0;
    if max_index == expected {
        // Both partitions are single-cluster (or the degenerate complement);
        // agreement is total.
        return Ok(1.0);
    }
    Ok((cell_pairs as f64 - expected) / (max_index - expected))
}

/// One fitted (or failed) grid cell entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchEntry {
    pub code: ConstraintCode,
    pub g: usize,
    pub q: usize,
    pub bic: Option<f64>,
    pub final_loglik: Option<f64>,
    pub converged: bool,
    pub failure_reason: Option<String>,
}

/// Outcome of a grid search, sorted by BIC descending; `best` indexes the
/// highest-BIC converged entry and `one_percent_line` is the BIC threshold
/// `best_bic - 0.01 |best_bic|` used by the group-factor report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub entries: Vec<SearchEntry>,
    pub best: usize,
    pub one_percent_line: f64,
}

impl SearchResult {
    pub fn best_entry(&self) -> &SearchEntry {
        &self.entries[self.best]
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn derive_cell_seed(seed: u64, g: usize, q: usize) -> u64 {
    // splitmix64 over the packed cell coordinates.
    let mut z = seed ^ ((g as u64) << 32) ^ (q as u64);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Full fit-and-rank pass: for every (G, q) cell, build a k-means partition
/// and run the hierarchical family, then assemble the requested codes into a
/// single leaderboard. Cells run concurrently; the result is deterministic
/// given the seed. Fits retained by the search also keep their `FitResult`.
pub fn grid_search(
    data: &Dataset,
    g_set: &[usize],
    q_set: &[usize],
    codes: &[ConstraintCode],
    config: &FitConfig,
) -> Result<(SearchResult, Vec<Option<FitResult>>)> {
    if g_set.is_empty() || q_set.is_empty() || codes.is_empty() {
        return Err(CwfaError::InvalidInput("empty search grid".into()));
    }
    for &q in q_set {
        if q < 1 || q > data.p() {
            return Err(CwfaError::InvalidInput(format!("q={q} outside 1..=p={}", data.p())));
        }
    }
    if let Some(max_label) = data.max_label() {
        if let Some(&min_g) = g_set.iter().min() {
            if max_label >= min_g {
                return Err(CwfaError::InvalidInput(format!(
                    "label {} outside 1..={min_g}",
                    max_label + 1
                )));
            }
        }
    }

    let cells: Vec<(usize, usize)> = g_set
        .iter()
        .flat_map(|&g| q_set.iter().map(move |&q| (g, q)))
        .collect();
    let cell_outcomes = exec::map(cells, |(g, q)| {
        let cell_seed = derive_cell_seed(config.seed, g, q);
        let family = kmeans_partition(data, g, config.restarts, cell_seed)
            .and_then(|partition| hierarchical_fit_family(data, g, q, &partition, config));
        (g, q, family)
    });

    let mut entries = Vec::new();
    let mut fits: Vec<Option<FitResult>> = Vec::new();
    for (g, q, family) in cell_outcomes {
        match family {
            Ok(mut outcomes) => {
                for &code in codes {
                    let (entry, fit) = match outcomes.remove(&code) {
                        Some(Ok(result)) => (
                            SearchEntry {
                                code,
                                g,
                                q,
                                bic: Some(result.bic),
                                final_loglik: Some(result.final_loglik),
                                converged: result.converged,
                                failure_reason: None,
                            },
                            Some(result),
                        ),
                        Some(Err(err)) => (failed_entry(code, g, q, err.to_string()), None),
                        None => (failed_entry(code, g, q, "not fitted".into()), None),
                    };
                    entries.push(entry);
                    fits.push(fit);
                }
            }
            Err(err) => {
                for &code in codes {
                    entries.push(failed_entry(code, g, q, err.to_string()));
                    fits.push(None);
                }
            }
        }
    }

    // BIC descending, failures last; ties ordered by (code, g, q) to stay
    // reproducible across runs.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| {
        let a = &entries[i];
        let b = &entries[j];
        match (a.bic, b.bic) {
            (Some(x), Some(y)) => y
                .partial_cmp(&x)
                .unwrap()
                .then(a.code.cmp(&b.code))
                .then(a.g.cmp(&b.g))
                .then(a.q.cmp(&b.q)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.code.cmp(&b.code).then(a.g.cmp(&b.g)).then(a.q.cmp(&b.q)),
        }
    });
    let entries: Vec<SearchEntry> = order.iter().map(|&i| entries[i].clone()).collect();
    let fits: Vec<Option<FitResult>> = order.into_iter().map(|i| fits[i].take()).collect();

    let best = entries
        .iter()
        .position(|e| e.converged && e.bic.is_some())
        .ok_or_else(|| CwfaError::SearchFailed("no fit converged".into()))?;
    let best_bic = entries[best].bic.unwrap();
    let one_percent_line = best_bic - 0.01 * best_bic.abs();
    Ok((
        SearchResult {
            entries,
            best,
            one_percent_line,
        },
        fits,
    ))
}

fn failed_entry(code: ConstraintCode, g: usize, q: usize, reason: String) -> SearchEntry {
    SearchEntry {
        code,
        g,
        q,
        bic: None,
        final_loglik: None,
        converged: false,
        failure_reason: Some(reason),
    }
}

/// One line of the group-factor report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub rank: usize,
    pub code: ConstraintCode,
    pub g: usize,
    pub q: usize,
    pub bic: f64,
    pub above_one_percent_line: bool,
}

/// Plot-ready rows in ascending BIC order: rank, identifiers, BIC, and
/// whether the model sits above the 1% line (within one percent of the best
/// BIC in relative magnitude). Failed fits are omitted.
pub fn group_factor_report(result: &SearchResult) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = result
        .entries
        .iter()
        .filter_map(|e| {
            e.bic.map(|bic| ReportRow {
                rank: 0,
                code: e.code,
                g: e.g,
                q: e.q,
                bic,
                above_one_percent_line: bic >= result.one_percent_line,
            })
        })
        .collect();
    rows.reverse();
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    rows
}

/// Plain-text rendering of the report (and of the failure tail, if any).
pub fn render_report(result: &SearchResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>4}  {:<4}  {:>2}  {:>2}  {:>14}  {}", "rank", "code", "G", "q", "BIC", "above 1% line");
    for row in group_factor_report(result) {
        let _ = writeln!(
            out,
            "{:>4}  {:<4}  {:>2}  {:>2}  {:>14.3}  {}",
            row.rank,
            row.code.to_string(),
            row.g,
            row.q,
            row.bic,
            if row.above_one_percent_line { "*" } else { "" }
        );
    }
    let failures: Vec<&SearchEntry> = result.entries.iter().filter(|e| e.bic.is_none()).collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\nfailed fits:");
        for e in failures {
            let _ = writeln!(
                out,
                "      {:<4}  {:>2}  {:>2}  {}",
                e.code.to_string(),
                e.g,
                e.q,
                e.failure_reason.as_deref().unwrap_or("unknown")
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bic_point_values() {
        assert_eq!(bic(0.0, 0, 10), 0.0);
        // Hand arithmetic: 53 ln 175 = 273.73366...
        assert_relative_eq!(bic(-2900.0, 53, 175), -6073.7336566, epsilon = 1e-5);
    }

    #[test]
    fn bic_strictly_decreases_in_eta() {
        for n in [3usize, 10, 100] {
            let mut prev = bic(-5.0, 0, n);
            for eta in 1..20 {
                let cur = bic(-5.0, eta, n);
                assert!(cur < prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn ari_identity_and_single_cluster() {
        let a = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        let relabeled = vec![5, 5, 9, 9, 7, 7];
        assert_eq!(ari(&a, &relabeled).unwrap(), 1.0);
        let ones = vec![1; 6];
        assert_eq!(ari(&a, &ones).unwrap(), 0.0);
    }

    #[test]
    fn ari_vole_confusion_table() {
        // Rows: 45 and 41 per species; columns: clusters of 24, 21, 41.
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (t, p, count) in [(0, 0, 24), (0, 1, 21), (1, 2, 41)] {
            for _ in 0..count {
                truth.push(t);
                pred.push(p);
            }
        }
        let v = ari(&truth, &pred).unwrap();
        assert!((v - 0.72).abs() < 0.005, "{v}");
    }

    #[test]
    fn ari_rejects_bad_inputs() {
        assert!(ari(&[1, 2], &[1]).is_err());
        assert!(ari::<usize, usize>(&[1], &[1]).is_err());
    }

    fn entry(code: &str, g: usize, q: usize, bic: f64) -> SearchEntry {
        SearchEntry {
            code: code.parse().unwrap(),
            g,
            q,
            bic: Some(bic),
            final_loglik: Some(bic / 2.0),
            converged: true,
            failure_reason: None,
        }
    }

    #[test]
    fn single_entry_report_is_above_the_line() {
        let result = SearchResult {
            entries: vec![entry("UUUU", 2, 1, -500.0)],
            best: 0,
            one_percent_line: -505.0,
        };
        let rows = group_factor_report(&result);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rank, 1);
        assert!(rows[0].above_one_percent_line);
    }

    #[test]
    fn report_flags_depend_only_on_relative_magnitude() {
        let entries = vec![
            entry("UUUU", 2, 2, -1000.0),
            entry("UUCU", 2, 2, -1009.0),
            entry("CCCC", 2, 1, -1011.0),
        ];
        let result = SearchResult {
            entries,
            best: 0,
            one_percent_line: -1000.0 - 0.01 * 1000.0,
        };
        let rows = group_factor_report(&result);
        assert_eq!(rows.len(), 3);
        // Ascending BIC: CCCC (worst) first, UUUU (best) last.
        assert_eq!(rows[0].code.to_string(), "CCCC");
        assert!(!rows[0].above_one_percent_line);
        assert!(rows[1].above_one_percent_line);
        assert!(rows[2].above_one_percent_line);
        assert_eq!(rows[2].rank, 3);
    }
}
