//! Loading performance observations from delimited text.
//!
//! Rows are validated one by one and every rejection is itemised with its line
//! number; nothing is dropped silently. Accepted rows are grouped into one
//! [`ObservationSet`] per `(language, pivot_size)` pair, since each pair gets
//! its own performance function.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IngestError, RowError};

/// Conditions under which a set of observations was produced.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExperimentContext {
    pub language: String,
    pub pivot_language: String,
    pub pivot_size: u64,
    #[serde(default)]
    pub model_label: String,
    #[serde(default)]
    pub task_label: String,
}

impl ExperimentContext {
    pub fn new(language: &str, pivot_language: &str, pivot_size: u64) -> Result<Self, IngestError> {
        let ctx = Self {
            language: language.to_string(),
            pivot_language: pivot_language.to_string(),
            pivot_size,
            model_label: String::new(),
            task_label: String::new(),
        };
        ctx.validate()?;
        Ok(ctx)
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.language.is_empty() {
            return Err(IngestError::Invalid("language is empty".into()));
        }
        if self.language == self.pivot_language {
            return Err(IngestError::Invalid(format!(
                "target language `{}` equals the pivot language",
                self.language
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (pivot {} P={})", self.language, self.pivot_language, self.pivot_size)
    }
}

/// Spread of a performance value that was averaged over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSpread {
    pub count: usize,
    pub std_dev: f64,
}

/// One measured `(T, M) → Π` record. Π is on the 0–100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub m: f64,
    pub seed: Option<u64>,
    pub pi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<SeedSpread>,
}

impl Observation {
    pub fn new(t: f64, m: f64, pi: f64) -> Self {
        Self {
            t,
            m,
            seed: None,
            pi,
            spread: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn check(&self, pivot_size: u64) -> Result<(), String> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(format!("translated size {} must be non-negative", self.t));
        }
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(format!("manual size {} must be non-negative", self.m));
        }
        if !(0.0..=100.0).contains(&self.pi) {
            return Err(format!("performance {} outside [0, 100]", self.pi));
        }
        if self.t > pivot_size as f64 {
            return Err(format!(
                "translated size {} exceeds pivot size {}",
                self.t, pivot_size
            ));
        }
        Ok(())
    }
}

/// Observations sharing one experiment context. Non-empty, no duplicate
/// `(t, m, seed)` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    context: ExperimentContext,
    observations: Vec<Observation>,
}

fn key(o: &Observation) -> (u64, u64, Option<u64>) {
    (o.t.to_bits(), o.m.to_bits(), o.seed)
}

impl ObservationSet {
    pub fn new(context: ExperimentContext, observations: Vec<Observation>) -> Result<Self, IngestError> {
        context.validate()?;
        if observations.is_empty() {
            return Err(IngestError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for o in &observations {
            o.check(context.pivot_size).map_err(IngestError::Invalid)?;
            if !seen.insert(key(o)) {
                return Err(IngestError::Duplicate {
                    t: o.t,
                    m: o.m,
                    seed: o.seed,
                });
            }
        }
        Ok(Self {
            context,
            observations,
        })
    }

    pub fn context(&self) -> &ExperimentContext {
        &self.context
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.pi).collect()
    }

    pub fn max_m(&self) -> f64 {
        self.observations.iter().map(|o| o.m).fold(0.0, f64::max)
    }

    /// Subset by position, keeping the context.
    pub(crate) fn subset(&self, indices: &[usize]) -> Result<Self, IngestError> {
        let observations = indices.iter().map(|&i| self.observations[i].clone()).collect();
        Self::new(self.context.clone(), observations)
    }

    /// Averages repeated seeds: one observation per distinct `(t, m)`, sorted by
    /// `(t, m)`, seed cleared, spread kept as metadata. Idempotent.
    pub fn aggregate_seeds(&self) -> ObservationSet {
        let mut groups: BTreeMap<(u64, u64), Vec<&Observation>> = BTreeMap::new();
        for o in &self.observations {
            // Non-negative floats order like their bit patterns.
            groups.entry((o.t.to_bits(), o.m.to_bits())).or_default().push(o);
        }
        let observations = groups
            .into_values()
            .map(|group| {
                let first = group[0];
                if group.len() == 1 {
                    return Observation {
                        seed: None,
                        spread: first.spread.or(Some(SeedSpread {
                            count: 1,
                            std_dev: 0.0,
                        })),
                        ..first.clone()
                    };
                }
                let n = group.len() as f64;
                let mean = group.iter().map(|o| o.pi).sum::<f64>() / n;
                let var = group.iter().map(|o| (o.pi - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Observation {
                    t: first.t,
                    m: first.m,
                    seed: None,
                    pi: mean,
                    spread: Some(SeedSpread {
                        count: group.len(),
                        std_dev: var.sqrt(),
                    }),
                }
            })
            .collect();
        ObservationSet {
            context: self.context.clone(),
            observations,
        }
    }
}

impl<'a> IntoIterator for &'a ObservationSet {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}

/// Column names in the source file for each field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub language: String,
    pub pivot_language: String,
    pub pivot_size: String,
    pub translated_size: String,
    pub manual_size: String,
    pub seed: String,
    pub f1: String,
    pub model: String,
    pub task: String,
    /// Pivot language used when the file has no pivot-language column.
    pub default_pivot_language: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            language: "language".into(),
            pivot_language: "pivot_language".into(),
            pivot_size: "pivot_size".into(),
            translated_size: "translated_size".into(),
            manual_size: "manual_size".into(),
            seed: "seed".into(),
            f1: "f1".into(),
            model: "model".into(),
            task: "task".into(),
            default_pivot_language: "en".into(),
        }
    }
}

/// Everything read from a file: accepted sets plus itemised rejects.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub sets: Vec<ObservationSet>,
    pub rejects: Vec<RowError>,
    pub rows_read: usize,
    /// True when every performance value was ≤ 1 and got multiplied by 100.
    pub rescaled: bool,
}

impl LoadReport {
    pub fn accepted(&self) -> usize {
        self.sets.iter().map(ObservationSet::len).sum()
    }
}

struct Columns {
    language: usize,
    pivot_language: Option<usize>,
    pivot_size: usize,
    translated_size: usize,
    manual_size: usize,
    seed: Option<usize>,
    f1: usize,
    model: Option<usize>,
    task: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &Schema) -> Result<Self, IngestError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
        Ok(Self {
            language: need(&schema.language)?,
            pivot_language: find(&schema.pivot_language),
            pivot_size: need(&schema.pivot_size)?,
            translated_size: need(&schema.translated_size)?,
            manual_size: need(&schema.manual_size)?,
            seed: find(&schema.seed),
            f1: need(&schema.f1)?,
            model: find(&schema.model),
            task: find(&schema.task),
        })
    }
}

struct ParsedRow {
    line: usize,
    context: ExperimentContext,
    observation: Observation,
}

fn field(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).map(str::trim).unwrap_or("")
}

fn number(record: &csv::StringRecord, idx: usize, what: &str) -> Result<f64, String> {
    let raw = field(record, idx);
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{what} `{raw}` is not a number"))
}

fn count(record: &csv::StringRecord, idx: usize, what: &str) -> Result<u64, String> {
    let value = number(record, idx, what)?;
    if value < 0.0 || value.fract() != 0.0 {
        return Err(format!("{what} `{}` is not a whole non-negative count", field(record, idx)));
    }
    Ok(value as u64)
}

fn parse_row(record: &csv::StringRecord, cols: &Columns, schema: &Schema) -> Result<(ExperimentContext, Observation), String> {
    let opt = |idx: Option<usize>| idx.map(|i| field(record, i).to_string());
    let context = ExperimentContext {
        language: field(record, cols.language).to_string(),
        pivot_language: opt(cols.pivot_language)
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| schema.default_pivot_language.clone()),
        pivot_size: count(record, cols.pivot_size, "pivot size")?,
        model_label: opt(cols.model).unwrap_or_default(),
        task_label: opt(cols.task).unwrap_or_default(),
    };
    context.validate().map_err(|e| e.to_string())?;
    let seed = match cols.seed.map(|i| field(record, i)) {
        None | Some("") => None,
        Some(_) => Some(count(record, cols.seed.unwrap(), "seed")?),
    };
    let observation = Observation {
        t: number(record, cols.translated_size, "translated size")?,
        m: number(record, cols.manual_size, "manual size")?,
        seed,
        pi: number(record, cols.f1, "performance")?,
        spread: None,
    };
    Ok((context, observation))
}

fn sniff_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') && !header.contains(',') {
        b'\t'
    } else {
        b','
    }
}

/// Parses delimited text, collecting every rejected row instead of stopping.
pub fn read_observations<R: Read>(mut reader: R, schema: &Schema) -> Result<LoadReport, IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(&text))
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = csv_reader.headers()?.clone();
    let cols = Columns::resolve(&headers, schema)?;

    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    let mut rows_read = 0;
    for (i, record) in csv_reader.records().enumerate() {
        let line = i + 2;
        rows_read += 1;
        match record {
            Err(e) => rejects.push(RowError {
                line,
                message: e.to_string(),
            }),
            Ok(record) => match parse_row(&record, &cols, schema) {
                Ok((context, observation)) => rows.push(ParsedRow {
                    line,
                    context,
                    observation,
                }),
                Err(message) => rejects.push(RowError { line, message }),
            },
        }
    }

    let rescaled = !rows.is_empty() && rows.iter().all(|r| r.observation.pi <= 1.0 && r.observation.pi >= 0.0);
    if rescaled {
        log::warn!("all performance values are ≤ 1; treating them as fractions and scaling by 100");
        for row in &mut rows {
            row.observation.pi *= 100.0;
        }
    }

    let mut groups: BTreeMap<(String, u64), (ExperimentContext, Vec<Observation>)> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for row in rows {
        if let Err(message) = row.observation.check(row.context.pivot_size) {
            rejects.push(RowError { line: row.line, message });
            continue;
        }
        let group_key = (row.context.language.clone(), row.context.pivot_size);
        let entry = groups
            .entry(group_key.clone())
            .or_insert_with(|| (row.context.clone(), Vec::new()));
        if entry.0 != row.context {
            rejects.push(RowError {
                line: row.line,
                message: format!("context {:?} conflicts with earlier rows {:?}", row.context, entry.0),
            });
            continue;
        }
        if !seen.insert((group_key, key(&row.observation))) {
            rejects.push(RowError {
                line: row.line,
                message: format!(
                    "duplicate observation t={} m={} seed={:?}",
                    row.observation.t, row.observation.m, row.observation.seed
                ),
            });
            continue;
        }
        entry.1.push(row.observation);
    }
    rejects.sort_by_key(|r| r.line);

    let sets = groups
        .into_values()
        .map(|(context, observations)| ObservationSet {
            context,
            observations,
        })
        .collect();
    Ok(LoadReport {
        sets,
        rejects,
        rows_read,
        rescaled,
    })
}

/// Lenient load: returns accepted sets together with itemised rejects.
pub fn load_observations_report(path: impl AsRef<Path>, schema: &Schema) -> Result<LoadReport, IngestError> {
    let file = std::fs::File::open(path)?;
    read_observations(file, schema)
}

/// Strict load: any rejected row fails the whole load, listing every bad row.
pub fn load_observations(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<ObservationSet>, IngestError> {
    let report = load_observations_report(path, schema)?;
    if !report.rejects.is_empty() {
        return Err(IngestError::Validation(report.rejects));
    }
    Ok(report.sets)
}

/// Writes sets in the canonical column layout.
pub fn write_observations<W: Write>(writer: W, sets: &[ObservationSet]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "language",
        "pivot_language",
        "pivot_size",
        "translated_size",
        "manual_size",
        "seed",
        "f1",
        "model",
        "task",
    ])?;
    for set in sets {
        let ctx = set.context();
        for o in set {
            w.write_record([
                ctx.language.clone(),
                ctx.pivot_language.clone(),
                ctx.pivot_size.to_string(),
                o.t.to_string(),
                o.m.to_string(),
                o.seed.map(|s| s.to_string()).unwrap_or_default(),
                o.pi.to_string(),
                ctx.model_label.clone(),
                ctx.task_label.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> LoadReport {
        read_observations(text.as_bytes(), &Schema::default()).unwrap()
    }

    #[test]
    fn three_rows_one_context() {
        let report = read(
            "language,pivot_language,pivot_size,translated_size,manual_size,seed,f1\n\
             sw,en,3696,0,0,1,55.0\n\
             sw,en,3696,100,0,1,57.5\n\
             sw,en,3696,0,50,1,60.1\n",
        );
        assert_eq!(report.sets.len(), 1);
        assert_eq!(report.sets[0].len(), 3);
        assert!(report.rejects.is_empty());
        assert_eq!(report.sets[0].context().language, "sw");
    }

    #[test]
    fn groups_by_language_and_pivot_size() {
        let report = read(
            "language,pivot_size,translated_size,manual_size,f1\n\
             sw,2000,0,0,50\n\
             sw,3696,0,0,55\n\
             sw,2000,200,0,52\n\
             te,3696,0,10,40\n",
        );
        let keys: Vec<_> = report
            .sets
            .iter()
            .map(|s| (s.context().language.as_str(), s.context().pivot_size, s.len()))
            .collect();
        assert_eq!(keys, vec![("sw", 2000, 2), ("sw", 3696, 1), ("te", 3696, 1)]);
        assert_eq!(report.sets[0].context().pivot_language, "en");
    }

    #[test]
    fn translated_beyond_pivot_names_the_row() {
        let report = read(
            "language,pivot_size,translated_size,manual_size,f1\n\
             sw,3696,0,0,50\n\
             sw,3696,5000,0,52\n",
        );
        assert_eq!(report.rejects.len(), 1);
        assert_eq!(report.rejects[0].line, 3);
        assert!(report.rejects[0].message.contains("exceeds pivot size"));
        assert_eq!(report.rows_read, report.accepted() + report.rejects.len());
    }

    #[test]
    fn bad_rows_are_itemised() {
        let report = read(
            "language,pivot_size,translated_size,manual_size,f1\n\
             sw,3696,abc,0,50\n\
             sw,3696,0,0,150\n\
             sw,3696,0,-4,50\n\
             en,3696,0,0,50\n\
             sw,3696,10,0,51\n\
             sw,3696,10,0,52\n",
        );
        let lines: Vec<_> = report.rejects.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5, 7]);
        assert_eq!(report.accepted(), 1);
        assert_eq!(report.rows_read, report.accepted() + report.rejects.len());
    }

    #[test]
    fn missing_column_is_an_error() {
        let err = read_observations(
            "language,pivot_size,translated_size,f1\nsw,1,0,3\n".as_bytes(),
            &Schema::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "manual_size"));
    }

    #[test]
    fn fractions_are_rescaled() {
        let report = read(
            "language,pivot_size,translated_size,manual_size,f1\n\
             sw,3696,0,0,0.5\n\
             sw,3696,10,0,0.61\n",
        );
        assert!(report.rescaled);
        assert_eq!(report.sets[0].observations()[1].pi, 61.0);
    }

    #[test]
    fn tab_delimited_with_schema_mapping() {
        let schema = Schema {
            language: "lang".into(),
            translated_size: "T".into(),
            manual_size: "M".into(),
            pivot_size: "P".into(),
            f1: "score".into(),
            ..Schema::default()
        };
        let text = "lang\tP\tT\tM\tscore\nfi\t2000\t200\t30\t61.5\n";
        let report = read_observations(text.as_bytes(), &schema).unwrap();
        assert_eq!(report.sets[0].observations()[0].m, 30.0);
    }

    #[test]
    fn aggregate_means_over_seeds() {
        let ctx = ExperimentContext::new("sw", "en", 3696).unwrap();
        let set = ObservationSet::new(
            ctx,
            vec![
                Observation::new(100.0, 50.0, 60.0).with_seed(1),
                Observation::new(100.0, 50.0, 62.0).with_seed(2),
                Observation::new(100.0, 50.0, 64.0).with_seed(3),
                Observation::new(0.0, 0.0, 40.0).with_seed(1),
            ],
        )
        .unwrap();
        let agg = set.aggregate_seeds();
        assert_eq!(agg.len(), 2);
        let o = &agg.observations()[1];
        assert_eq!((o.t, o.m, o.pi, o.seed), (100.0, 50.0, 62.0, None));
        assert_eq!(o.spread.unwrap().count, 3);
        assert!((o.spread.unwrap().std_dev - 2.0).abs() < 1e-12);
        assert_eq!(agg.aggregate_seeds(), agg);
    }

    #[test]
    fn set_invariants() {
        let ctx = ExperimentContext::new("sw", "en", 100).unwrap();
        assert!(ObservationSet::new(ctx.clone(), vec![]).is_err());
        assert!(ObservationSet::new(ctx.clone(), vec![Observation::new(101.0, 0.0, 1.0)]).is_err());
        assert!(ObservationSet::new(
            ctx,
            vec![Observation::new(1.0, 0.0, 1.0), Observation::new(1.0, 0.0, 2.0)]
        )
        .is_err());
        assert!(ExperimentContext::new("en", "en", 1).is_err());
    }

    #[test]
    fn write_then_read_round_trips() {
        let report = read(
            "language,pivot_language,pivot_size,translated_size,manual_size,seed,f1,model,task\n\
             sw,en,3696,0,0,1,55.25,mbert,tydiqa\n\
             sw,en,3696,369.6,10,2,57.5,mbert,tydiqa\n\
             te,en,2000,200,0,,44.0,mbert,tydiqa\n",
        );
        let mut buf = Vec::new();
        write_observations(&mut buf, &report.sets).unwrap();
        let again = read_observations(buf.as_slice(), &Schema::default()).unwrap();
        assert_eq!(again.sets, report.sets);
    }
}
