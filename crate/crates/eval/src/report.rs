//! Aggregation of evaluation records into comparison tables, their CSV
//! form, and the invariant checks applied to saved results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::harness::{EvalRecord, SampleId, GENIE};
use crate::metrics::{fraction_below, mean_std, CdfPoint};

/// Threshold of the headline `P(norm_loss < threshold)` statistic.
pub const LOSS_THRESHOLD: f64 = 0.1;

/// Records grouped by scheme, in order of first appearance.
fn by_scheme<'a>(records: impl Iterator<Item = &'a EvalRecord>) -> Vec<(String, Vec<&'a EvalRecord>)> {
    let mut groups: Vec<(String, Vec<&EvalRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(name, _)| *name == r.scheme) {
            Some((_, v)) => v.push(r),
            None => groups.push((r.scheme.clone(), vec![r])),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub delay: usize,
    pub n: usize,
    pub p_loss_below: f64,
    pub mean_se: f64,
    /// `(genie - scheme) / genie` in percent.
    pub gap_to_genie_pct: f64,
    /// `(scheme - other) / other` in percent, for every non-genie scheme.
    pub gains_pct: Vec<(String, f64)>,
}

/// Per-scheme comparison at one delay. Every scheme must cover exactly the
/// genie's sample set.
pub fn summarize(records: &[EvalRecord], delay: usize) -> Result<Vec<SummaryRow>> {
    let groups = by_scheme(records.iter().filter(|r| r.delay == delay));
    if groups.is_empty() {
        return Err(EvalError::Empty("record set at the requested delay"));
    }
    let samples = |rs: &[&EvalRecord]| -> Result<Vec<SampleId>> {
        let mut ids: Vec<SampleId> = rs.iter().map(|r| r.sample()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(EvalError::MismatchedSamples(format!("scheme '{}' repeats a sample", rs[0].scheme)));
        }
        Ok(ids)
    };
    let genie = groups
        .iter()
        .find(|(name, _)| name == GENIE)
        .ok_or_else(|| EvalError::MismatchedSamples("no genie records to compare against".into()))?;
    let reference = samples(&genie.1)?;

    let mut stats = Vec::with_capacity(groups.len());
    for (name, rs) in &groups {
        if samples(rs)? != reference {
            return Err(EvalError::MismatchedSamples(format!(
                "scheme '{name}' covers {} samples, not the genie's {}",
                rs.len(),
                reference.len()
            )));
        }
        let losses: Vec<f64> = rs.iter().map(|r| r.norm_loss).collect();
        let se: Vec<f64> = rs.iter().map(|r| r.se_pred).collect();
        stats.push((name.clone(), rs.len(), fraction_below(&losses, LOSS_THRESHOLD)?, mean_std(&se)?.0));
    }
    let genie_se = stats.iter().find(|s| s.0 == GENIE).map(|s| s.3).expect("genie group exists");
    let rows = stats
        .iter()
        .map(|(name, n, p, se)| SummaryRow {
            scheme: name.clone(),
            delay,
            n: *n,
            p_loss_below: *p,
            mean_se: *se,
            gap_to_genie_pct: (genie_se - se) / genie_se * 100.0,
            gains_pct: stats
                .iter()
                .filter(|o| o.0 != GENIE)
                .map(|o| (o.0.clone(), (se - o.3) / o.3 * 100.0))
                .collect(),
        })
        .collect();
    Ok(rows)
}

fn summary_header(rows: &[SummaryRow]) -> Vec<String> {
    let mut header: Vec<String> =
        ["scheme", "delay", "n", "p_loss_below_0.1", "mean_se", "gap_to_genie_pct"].map(String::from).to_vec();
    if let Some(first) = rows.first() {
        header.extend(first.gains_pct.iter().map(|(name, _)| format!("gain_vs_{name}_pct")));
    }
    header
}

/// Summary rows as CSV after `#`-prefixed provenance lines.
pub fn write_summary_csv<W: Write>(mut w: W, provenance: &[String], rows: &[SummaryRow]) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(summary_header(rows))?;
    for r in rows {
        let mut fields =
            vec![r.scheme.clone(), r.delay.to_string(), r.n.to_string(), r.p_loss_below.to_string(), r.mean_se.to_string(), r.gap_to_genie_pct.to_string()];
        fields.extend(r.gains_pct.iter().map(|(_, g)| g.to_string()));
        csv.write_record(fields)?;
    }
    csv.flush()?;
    Ok(())
}

/// Human-readable summary table.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let delay = rows.first().map_or(0, |r| r.delay);
    let _ = writeln!(out, "delay {delay} slots");
    let _ = write!(out, "{:<16} {:>6} {:>12} {:>10} {:>10}", "scheme", "n", "P(loss<0.1)", "mean SE", "gap %");
    if let Some(first) = rows.first() {
        for (name, _) in &first.gains_pct {
            let _ = write!(out, " {:>14}", format!("vs {name} %"));
        }
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{:<16} {:>6} {:>12.4} {:>10.4} {:>10.2}",
            r.scheme, r.n, r.p_loss_below, r.mean_se, r.gap_to_genie_pct
        );
        for (_, g) in &r.gains_pct {
            let _ = write!(out, " {g:>14.2}");
        }
        out.push('\n');
    }
    out
}

/// Mean spectral efficiency of one scheme at one delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: String,
    pub delay_ms: f64,
    pub mean_se: f64,
    pub std_se: f64,
    pub n: usize,
}

/// Mean and spread of spectral efficiency per scheme and delay. Rows follow
/// the schemes' first appearance, then increasing delay.
pub fn delay_sweep(records: &[EvalRecord], slot_ms: f64) -> Result<Vec<SweepRow>> {
    if records.is_empty() {
        return Err(EvalError::Empty("record set"));
    }
    let mut rows = Vec::new();
    for (name, rs) in by_scheme(records.iter()) {
        let mut per_delay: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in rs {
            per_delay.entry(r.delay).or_default().push(r.se_pred);
        }
        for (delay, se) in per_delay {
            let (mean_se, std_se) = mean_std(&se)?;
            rows.push(SweepRow { scheme: name.clone(), delay_ms: delay as f64 * slot_ms, mean_se, std_se, n: se.len() });
        }
    }
    Ok(rows)
}

fn write_provenance<W: Write>(w: &mut W, provenance: &[String]) -> Result<()> {
    for line in provenance {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Serialize `rows` as CSV with a header row, after `#`-prefixed provenance
/// lines.
pub fn write_csv<W: Write, T: Serialize>(mut w: W, provenance: &[String], rows: &[T]) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Parse CSV written by [`write_csv`], skipping provenance lines.
pub fn read_csv<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    Ok(csv.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Record-wise invariants: losses in `[0, 1]`, zero loss when the labels
/// coincide, and genie dominance in both RSS and spectral efficiency.
pub fn check_records(records: &[EvalRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(EvalError::Empty("record set"));
    }
    for r in records {
        let fail = |what: &str| {
            Err(EvalError::Invariant(format!(
                "{what} (scheme {}, trajectory {}, start {}, delay {})",
                r.scheme, r.trajectory_id, r.start_slot, r.delay
            )))
        };
        let values = [r.rss_pred, r.rss_opt, r.norm_loss, r.se_pred, r.se_opt];
        if values.iter().any(|v| !v.is_finite()) {
            return fail("non-finite value");
        }
        if !(0.0..=1.0).contains(&r.norm_loss) {
            return fail(&format!("norm_loss {} outside [0, 1]", r.norm_loss));
        }
        if r.pred == r.opt && r.norm_loss != 0.0 {
            return fail("non-zero loss for the optimal beam");
        }
        if r.scheme == GENIE && r.pred != r.opt {
            return fail("genie record with a non-optimal beam");
        }
        if r.rss_pred > r.rss_opt {
            return fail(&format!("rss_pred {} exceeds rss_opt {}", r.rss_pred, r.rss_opt));
        }
        if r.se_pred > r.se_opt {
            return fail(&format!("se_pred {} exceeds se_opt {}", r.se_pred, r.se_opt));
        }
    }
    Ok(())
}

/// A CDF must be non-empty with increasing thresholds, non-decreasing
/// fractions in `(0, 1]`, and end at exactly 1.
pub fn check_cdf(points: &[CdfPoint]) -> Result<()> {
    let last = points.last().ok_or(EvalError::Empty("CDF"))?;
    for w in points.windows(2) {
        if !(w[0].threshold < w[1].threshold) {
            return Err(EvalError::Invariant(format!("CDF thresholds not increasing at {}", w[1].threshold)));
        }
        if w[1].fraction < w[0].fraction {
            return Err(EvalError::Invariant(format!("CDF decreases at {}", w[1].threshold)));
        }
    }
    if let Some(p) = points.iter().find(|p| !(p.fraction > 0.0 && p.fraction <= 1.0)) {
        return Err(EvalError::Invariant(format!("CDF fraction {} outside (0, 1]", p.fraction)));
    }
    if last.fraction != 1.0 {
        return Err(EvalError::Invariant(format!("CDF ends at {}, not 1", last.fraction)));
    }
    Ok(())
}

/// Exactly one genie row per delay, and no scheme above the genie.
pub fn check_sweep(rows: &[SweepRow]) -> Result<()> {
    let mut genie: BTreeMap<u64, f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.scheme == GENIE) {
        if genie.insert(r.delay_ms.to_bits(), r.mean_se).is_some() {
            return Err(EvalError::Invariant(format!("two genie rows at {} ms", r.delay_ms)));
        }
    }
    for r in rows {
        let g = genie
            .get(&r.delay_ms.to_bits())
            .ok_or_else(|| EvalError::Invariant(format!("no genie row at {} ms", r.delay_ms)))?;
        if r.mean_se > *g {
            return Err(EvalError::Invariant(format!(
                "{} mean SE {} exceeds the genie's {g} at {} ms",
                r.scheme, r.mean_se, r.delay_ms
            )));
        }
    }
    Ok(())
}
