//! Dataset quality metrics: instruction diversity (MTLD) and the spatial
//! agreement ratios between masks, boxes, grasps and contacts. Also batch
//! contact annotation from grasps and masks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ContactPair;
use crate::harness::DatasetRecord;
use crate::masks::compute_contacts;

/// TTR at which a factor is closed.
pub const MTLD_THRESHOLD: f64 = 0.72;

#[derive(Debug, Error, PartialEq)]
pub enum QcError {
    #[error("MTLD needs at least one token")]
    NoTokens,
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn is_unicode_punct(c: char) -> bool {
    const EXTRA: [char; 6] = [
        '\u{3001}', '\u{3002}', '\u{00a1}', '\u{00bf}', '\u{00ab}', '\u{00bb}',
    ];
    ('\u{2010}'..='\u{2027}').contains(&c) || EXTRA.contains(&c)
}

fn factor_count<'a>(tokens: impl Iterator<Item = &'a str>) -> f64 {
    let mut types = std::collections::HashSet::new();
    let mut count = 0usize;
    let mut factors = 0.0;
    let mut ttr = 1.0;
    for t in tokens {
        types.insert(t);
        count += 1;
        ttr = types.len() as f64 / count as f64;
        if ttr <= MTLD_THRESHOLD {
            factors += 1.0;
            types.clear();
            count = 0;
            ttr = 1.0;
        }
    }
    if count > 0 {
        factors += (1.0 - ttr) / (1.0 - MTLD_THRESHOLD);
    }
    factors
}

fn one_pass<'a>(n: usize, tokens: impl Iterator<Item = &'a str>) -> f64 {
    let f = factor_count(tokens);
    if f == 0.0 {
        f64::INFINITY
    } else {
        n as f64 / f
    }
}

/// Measure of textual lexical diversity, mean of the forward and backward
/// passes. A pass that never closes any (partial) factor scores `+inf`.
pub fn mtld<S: AsRef<str>>(tokens: &[S]) -> Result<f64, QcError> {
    if tokens.is_empty() {
        return Err(QcError::NoTokens);
    }
    let n = tokens.len();
    let fwd = one_pass(n, tokens.iter().map(AsRef::as_ref));
    let bwd = one_pass(n, tokens.iter().rev().map(AsRef::as_ref));
    Ok((fwd + bwd) / 2.0)
}

/// Spatial QC ratios. A ratio with nothing to measure is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QcRatios {
    pub r_s: Option<f64>,
    pub r_g: Option<f64>,
    pub r_c: Option<f64>,
    /// Records without a mask.
    pub skipped: usize,
}

#[derive(Default)]
struct Tally {
    coverage: Option<f64>,
    grasps_in: usize,
    grasps: usize,
    contacts_in: usize,
    contacts: usize,
}

fn tally(r: &DatasetRecord) -> Option<Tally> {
    let m = r.gt_mask.as_ref()?;
    let mut t = Tally::default();
    if let Some(b) = &r.gt_bbox {
        let total = m.count();
        if total > 0 {
            t.coverage = Some(m.clipped_to(b).count() as f64 / total as f64);
        }
    }
    if let Some(gs) = &r.gt_grasps {
        t.grasps = gs.len();
        t.grasps_in = gs.iter().filter(|g| m.contains(&g.center())).count();
    }
    if let Some(c) = &r.gt_contacts {
        t.contacts = 1;
        t.contacts_in = usize::from(m.contains(&c.midpoint()));
    }
    Some(t)
}

/// R_s is the per-record mean of the fraction of mask pixels inside the box.
/// R_g and R_c are pooled over all grasp centres and contact midpoints.
pub fn qc_ratios(records: &[DatasetRecord]) -> QcRatios {
    let tallies: Vec<Option<Tally>> = records.par_iter().map(tally).collect();
    let mut out = QcRatios::default();
    let (mut cov_sum, mut cov_n) = (0.0, 0usize);
    let (mut g_in, mut g_n, mut c_in, mut c_n) = (0, 0, 0, 0);
    for t in tallies {
        let Some(t) = t else {
            out.skipped += 1;
            continue;
        };
        if let Some(c) = t.coverage {
            cov_sum += c;
            cov_n += 1;
        }
        g_in += t.grasps_in;
        g_n += t.grasps;
        c_in += t.contacts_in;
        c_n += t.contacts;
    }
    let ratio = |a: f64, n: usize| (n > 0).then(|| a / n as f64);
    out.r_s = ratio(cov_sum, cov_n);
    out.r_g = ratio(g_in as f64, g_n);
    out.r_c = ratio(c_in as f64, c_n);
    out
}

/// Summary written by `qc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub mtld: Option<f64>,
    pub r_s: Option<f64>,
    pub r_g: Option<f64>,
    pub r_c: Option<f64>,
    pub skipped: usize,
}

/// MTLD is taken over the concatenated instruction tokens of all records.
pub fn qc_report(records: &[DatasetRecord]) -> QcReport {
    let tokens: Vec<String> = records
        .iter()
        .flat_map(|r| tokenize(&r.instruction))
        .collect();
    let ratios = qc_ratios(records);
    QcReport {
        mtld: mtld(&tokens).ok(),
        r_s: ratios.r_s,
        r_g: ratios.r_g,
        r_c: ratios.r_c,
        skipped: ratios.skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspFailure {
    pub record_id: String,
    pub grasp_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub annotated: usize,
    /// Records that had no grasps or no mask.
    pub skipped: Vec<String>,
    pub failures: Vec<GraspFailure>,
}

fn annotate_one(r: &DatasetRecord) -> (Option<ContactPair>, Vec<GraspFailure>, bool) {
    let (Some(m), Some(gs)) = (&r.gt_mask, &r.gt_grasps) else {
        return (None, Vec::new(), false);
    };
    let mut failures = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        let fail = |reason: String| GraspFailure {
            record_id: r.record_id.clone(),
            grasp_index: i,
            reason,
        };
        match compute_contacts(g, m) {
            Ok(c) if m.contains(&c.midpoint()) => return (Some(c), failures, true),
            Ok(_) => failures.push(fail("contact midpoint falls off the mask".into())),
            Err(e) => failures.push(fail(e.to_string())),
        }
    }
    (None, failures, true)
}

/// Fills `gt_contacts` from the first grasp whose contacts can be computed.
/// Existing contacts are replaced only when a grasp succeeds.
pub fn annotate_contacts(records: &mut [DatasetRecord]) -> AnnotationReport {
    let results: Vec<_> = records.par_iter().map(annotate_one).collect();
    let mut report = AnnotationReport::default();
    for (r, (pair, failures, eligible)) in records.iter_mut().zip(results) {
        if !eligible {
            report.skipped.push(r.record_id.clone());
            continue;
        }
        report.failures.extend(failures);
        if let Some(c) = pair {
            r.gt_contacts = Some(c);
            report.annotated += 1;
        }
    }
    report
}
