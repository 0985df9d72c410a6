//! Trial-level response-time tables: loading, validation, the shift-log
//! transform and per-subject observed effects.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result, RowIssue};

/// Measurement scale of the `rt` column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    RawMs,
    /// Values are `ln(rt_ms - shift_ms)`.
    ShiftedLog { shift_ms: f64 },
}

impl Scale {
    pub fn is_log(&self) -> bool {
        matches!(self, Scale::ShiftedLog { .. })
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scale::RawMs => write!(f, "raw_ms"),
            Scale::ShiftedLog { shift_ms } => write!(f, "shifted_log({shift_ms})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    /// Index into [`TrialTable::subjects`].
    pub subject: usize,
    /// 0 = baseline condition, 1 = the other condition.
    pub condition: u8,
    pub rt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTable {
    pub rows: Vec<Trial>,
    /// Subject labels in order of first appearance.
    pub subjects: Vec<String>,
    /// Labels for codes 0 and 1.
    pub condition_names: [String; 2],
    pub scale: Scale,
}

impl TrialTable {
    /// Builds a table from `(subject, condition, rt)` triples on the raw scale.
    /// Subject labels are indexed in order of first appearance.
    pub fn from_triples<S: AsRef<str>>(
        triples: impl IntoIterator<Item = (S, u8, f64)>,
        condition_names: [&str; 2],
    ) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut subjects = Vec::new();
        let mut rows = Vec::new();
        let mut bad = Vec::new();
        for (i, (s, c, rt)) in triples.into_iter().enumerate() {
            if c > 1 {
                return Err(Error::Design(format!("row {}: condition code {c} not in {{0,1}}", i + 1)));
            }
            if !(rt.is_finite() && rt > 0.0) {
                bad.push(RowIssue { row: i + 1, message: format!("rt {rt} is not a positive number") });
            }
            let s = s.as_ref();
            let subject = *index.entry(s.to_string()).or_insert_with(|| {
                subjects.push(s.to_string());
                subjects.len() - 1
            });
            rows.push(Trial { subject, condition: c, rt });
        }
        if !bad.is_empty() {
            return Err(Error::Rows(bad));
        }
        Ok(TrialTable {
            rows,
            subjects,
            condition_names: [condition_names[0].to_string(), condition_names[1].to_string()],
            scale: Scale::RawMs,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes the table as `subject,condition,rt` with condition labels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["subject", "condition", "rt"])?;
        for r in &self.rows {
            w.write_record([
                self.subjects[r.subject].as_str(),
                self.condition_names[r.condition as usize].as_str(),
                &r.rt.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column mapping for [`load_trials`].
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub subject: String,
    pub condition: String,
    pub rt: String,
    /// Condition label coded 0; effects are `mean(other) - mean(baseline)`.
    pub baseline: String,
    /// Optional inclusive rt filter, applied after validation. Off by default.
    pub min_rt: Option<f64>,
    pub max_rt: Option<f64>,
}

impl Schema {
    pub fn new(baseline: impl Into<String>) -> Self {
        Schema {
            subject: "subject".into(),
            condition: "condition".into(),
            rt: "rt".into(),
            baseline: baseline.into(),
            min_rt: None,
            max_rt: None,
        }
    }
}

fn detect_delimiter(header: &str) -> u8 {
    [b',', b'\t', b';']
        .into_iter()
        .map(|d| (d, header.bytes().filter(|&b| b == d).count()))
        .max_by_key(|&(_, n)| n)
        .filter(|&(_, n)| n > 0)
        .map(|(d, _)| d)
        .unwrap_or(b',')
}

/// Loads a delimited table (comma, tab or semicolon, detected from the header).
pub fn load_trials(path: impl AsRef<Path>, schema: &Schema) -> Result<TrialTable> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_trials(&text, schema)
}

pub fn parse_trials(text: &str, schema: &Schema) -> Result<TrialTable> {
    let header = text.lines().next().ok_or_else(|| Error::Schema("empty input".into()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(header))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}` (found: {})", headers.iter().collect::<Vec<_>>().join(", "))))
    };
    let (cs, cc, cr) = (col(&schema.subject)?, col(&schema.condition)?, col(&schema.rt)?);

    let mut raw: Vec<(String, String, f64)> = Vec::new();
    let mut bad = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let rt_text = field(cr);
        match rt_text.parse::<f64>() {
            Ok(rt) if rt.is_finite() && rt > 0.0 => {
                raw.push((field(cs).to_string(), field(cc).to_string(), rt))
            }
            Ok(rt) => bad.push(RowIssue { row: i + 1, message: format!("rt {rt} is not positive") }),
            Err(_) => bad.push(RowIssue { row: i + 1, message: format!("rt `{rt_text}` is not numeric") }),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Rows(bad));
    }

    let mut levels: Vec<&str> = Vec::new();
    for (_, c, _) in &raw {
        if !levels.contains(&c.as_str()) {
            levels.push(c);
        }
    }
    if levels.len() != 2 {
        return Err(Error::Design(format!(
            "condition column must have exactly 2 levels, found {}: [{}]",
            levels.len(),
            levels.join(", ")
        )));
    }
    let other = match levels.iter().position(|&l| l == schema.baseline) {
        Some(0) => levels[1],
        Some(_) => levels[0],
        None => {
            return Err(Error::Schema(format!(
                "baseline condition `{}` not among levels [{}]",
                schema.baseline,
                levels.join(", ")
            )))
        }
    };
    let names = [schema.baseline.clone(), other.to_string()];

    let keep = |rt: f64| schema.min_rt.is_none_or(|lo| rt >= lo) && schema.max_rt.is_none_or(|hi| rt <= hi);
    let triples = raw
        .iter()
        .filter(|(_, _, rt)| keep(*rt))
        .map(|(s, c, rt)| (s.as_str(), u8::from(*c != names[0]), *rt));
    TrialTable::from_triples(triples, [&names[0], &names[1]])
}

/// Per-design counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSummary {
    pub n_subjects: usize,
    /// `trials_per_cell[i][j]` for subject `i`, condition code `j`.
    pub trials_per_cell: Vec<[usize; 2]>,
    pub total_trials: usize,
}

pub fn validate_design(t: &TrialTable) -> Result<DesignSummary> {
    if t.is_empty() {
        return Err(Error::Design("table has no trials".into()));
    }
    let mut cells = vec![[0usize; 2]; t.n_subjects()];
    for r in &t.rows {
        cells[r.subject][r.condition as usize] += 1;
    }
    for (i, c) in cells.iter().enumerate() {
        for j in 0..2 {
            if c[j] == 0 {
                return Err(Error::EmptyCell {
                    subject: t.subjects[i].clone(),
                    condition: t.condition_names[j].clone(),
                });
            }
        }
    }
    Ok(DesignSummary { n_subjects: t.n_subjects(), total_trials: t.len(), trials_per_cell: cells })
}

/// Replaces every rt with `ln(rt - shift_ms)`.
pub fn apply_shift_log(t: &TrialTable, shift_ms: f64) -> Result<TrialTable> {
    if t.scale != Scale::RawMs {
        return Err(Error::Scale(format!("shift-log transform needs raw_ms data, table is {}", t.scale)));
    }
    if !(shift_ms.is_finite() && shift_ms > 0.0) {
        return Err(Error::Domain(format!("shift must be positive, got {shift_ms}")));
    }
    let bad: Vec<RowIssue> = t
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.rt <= shift_ms)
        .map(|(i, r)| RowIssue { row: i + 1, message: format!("rt {} <= shift {shift_ms}", r.rt) })
        .collect();
    if !bad.is_empty() {
        return Err(Error::Transform(bad));
    }
    Ok(TrialTable {
        rows: t.rows.iter().map(|r| Trial { rt: (r.rt - shift_ms).ln(), ..*r }).collect(),
        subjects: t.subjects.clone(),
        condition_names: t.condition_names.clone(),
        scale: Scale::ShiftedLog { shift_ms },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedEffect {
    pub subject: String,
    pub effect: f64,
}

/// Per-subject cell means, `[subject][condition]`.
pub fn cell_means(t: &TrialTable) -> Result<Vec<[f64; 2]>> {
    let design = validate_design(t)?;
    let mut sums = vec![[0.0f64; 2]; t.n_subjects()];
    for r in &t.rows {
        sums[r.subject][r.condition as usize] += r.rt;
    }
    Ok(sums
        .iter()
        .zip(&design.trials_per_cell)
        .map(|(s, n)| [s[0] / n[0] as f64, s[1] / n[1] as f64])
        .collect())
}

/// `mean(condition 1) - mean(condition 0)` per subject, in table subject order.
pub fn observed_effects_by_subject(t: &TrialTable) -> Result<Vec<f64>> {
    Ok(cell_means(t)?.iter().map(|m| m[1] - m[0]).collect())
}

/// Observed effects sorted ascending by effect.
pub fn observed_effects(t: &TrialTable) -> Result<Vec<ObservedEffect>> {
    let mut out: Vec<ObservedEffect> = observed_effects_by_subject(t)?
        .into_iter()
        .enumerate()
        .map(|(i, effect)| ObservedEffect { subject: t.subjects[i].clone(), effect })
        .collect();
    out.sort_by(|a, b| a.effect.total_cmp(&b.effect));
    Ok(out)
}

pub fn write_observed_effects(effects: &[ObservedEffect], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject", "observed_effect"])?;
    for e in effects {
        w.write_record([e.subject.as_str(), &e.effect.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
