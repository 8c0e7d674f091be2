//! CSV persistence. Every file has a header row; floats are written in
//! shortest round-trip form and exact frequencies as µHz-resolution
//! decimals, so re-reading a file gives back the written value.

use std::io::{Read, Write};

use thiserror::Error;

use crate::comb::ModePair;
use crate::frequency::{ExactFrequency, ParseFrequencyError};
use crate::stats::{
    AllanCurve, AllanEstimator, AllanPoint, Campaign, CampaignStats, Consistency, GateSeries,
    Measurement, Scheme, StatsError,
};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}, column `{column}`: {message}")]
    Field {
        row: usize,
        column: &'static str,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub const GATE_HEADER: [&str; 3] = ["gate_index", "t_start_s", "y_fractional"];
pub const ALLAN_HEADER: [&str; 4] = ["tau_s", "sigma_y", "n", "estimator"];
pub const CAMPAIGN_HEADER: [&str; 4] = ["timestamp", "frequency_hz", "scheme", "uncertainty_hz"];
pub const SCAN_HEADER: [&str; 2] = ["delta_hz", "signal"];
pub const BEATMAP_HEADER: [&str; 5] = ["q", "p", "sfg_hz", "mode_hz", "beat_hz"];
pub const REPORT_HEADER: [&str; 11] = [
    "n",
    "mean_hz",
    "sigma_hz",
    "old_mean_hz",
    "new_mean_hz",
    "scheme_gap_hz",
    "fractional_uncertainty",
    "reference_hz",
    "reference_sigma_hz",
    "pull",
    "consistent",
];

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Header-indexed reader that reports row and column on bad fields.
struct Table {
    header: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(r: impl Read) -> Result<Self, CsvError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let header = rdr.headers()?.clone();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    fn column(&self, name: &'static str) -> Result<usize, CsvError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or(CsvError::MissingColumn(name))
    }

    fn optional_column(&self, name: &'static str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn raw(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(
        &self,
        row: usize,
        col: usize,
        name: &'static str,
    ) -> Result<T, CsvError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(row, col)
            .parse()
            .map_err(|e: T::Err| CsvError::Field {
                row: row + 1,
                column: name,
                message: e.to_string(),
            })
    }

    fn parse_opt<T: std::str::FromStr>(
        &self,
        row: usize,
        col: Option<usize>,
        name: &'static str,
    ) -> Result<Option<T>, CsvError>
    where
        T::Err: std::fmt::Display,
    {
        match col {
            Some(c) if !self.raw(row, c).is_empty() => self.parse(row, c, name).map(Some),
            _ => Ok(None),
        }
    }
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>, CsvError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    Ok(wtr)
}

pub fn write_gate_series(w: impl Write, series: &GateSeries) -> Result<(), CsvError> {
    let mut wtr = writer(w, &GATE_HEADER)?;
    for (k, y) in series.y.iter().enumerate() {
        wtr.write_record([k.to_string(), fmt_f64(series.t_start(k)), fmt_f64(*y)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a gate record. The gate length is the spacing of `t_start_s`;
/// a single-row file is taken to use 1 s gates.
pub fn read_gate_series(r: impl Read) -> Result<GateSeries, CsvError> {
    let t = Table::read(r)?;
    let c_t = t.column("t_start_s")?;
    let c_y = t.column("y_fractional")?;
    let mut y = Vec::with_capacity(t.rows.len());
    let mut starts = Vec::with_capacity(t.rows.len());
    for i in 0..t.rows.len() {
        starts.push(t.parse::<f64>(i, c_t, "t_start_s")?);
        y.push(t.parse::<f64>(i, c_y, "y_fractional")?);
    }
    let gate = if starts.len() >= 2 {
        starts[1] - starts[0]
    } else {
        1.0
    };
    for (k, &s) in starts.iter().enumerate() {
        let expect = k as f64 * gate + starts[0];
        if (s - expect).abs() > 1e-9 * expect.abs().max(gate) {
            return Err(CsvError::Invalid(format!(
                "gates are not contiguous: row {} starts at {s} s, expected {expect} s",
                k + 1
            )));
        }
    }
    Ok(GateSeries::new(gate, y)?)
}

pub fn write_allan_curve(w: impl Write, curve: &AllanCurve) -> Result<(), CsvError> {
    let mut wtr = writer(w, &ALLAN_HEADER)?;
    for p in &curve.points {
        wtr.write_record([
            fmt_f64(p.tau),
            fmt_f64(p.sigma),
            p.n.to_string(),
            estimator_name(curve.estimator).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn estimator_name(e: AllanEstimator) -> &'static str {
    match e {
        AllanEstimator::Standard => "standard",
        AllanEstimator::Overlapping => "overlapping",
    }
}

pub fn parse_estimator(s: &str) -> Result<AllanEstimator, CsvError> {
    match s {
        "standard" => Ok(AllanEstimator::Standard),
        "overlapping" => Ok(AllanEstimator::Overlapping),
        other => Err(CsvError::Invalid(format!("unknown estimator `{other}`"))),
    }
}

/// Reads an Allan curve; omitted τ values are not stored in the file.
pub fn read_allan_curve(r: impl Read) -> Result<AllanCurve, CsvError> {
    let t = Table::read(r)?;
    let (c_tau, c_sigma, c_n) = (t.column("tau_s")?, t.column("sigma_y")?, t.column("n")?);
    let c_est = t.optional_column("estimator");
    let mut estimator = AllanEstimator::default();
    let mut points = Vec::with_capacity(t.rows.len());
    for i in 0..t.rows.len() {
        points.push(AllanPoint {
            tau: t.parse(i, c_tau, "tau_s")?,
            sigma: t.parse(i, c_sigma, "sigma_y")?,
            n: t.parse(i, c_n, "n")?,
        });
        if let Some(c) = c_est {
            estimator = parse_estimator(t.raw(i, c))?;
        }
    }
    Ok(AllanCurve {
        points,
        estimator,
        omitted: Vec::new(),
    })
}

pub fn write_campaign(w: impl Write, c: &Campaign) -> Result<(), CsvError> {
    let mut wtr = writer(w, &CAMPAIGN_HEADER)?;
    for m in &c.measurements {
        wtr.write_record([
            m.timestamp.clone(),
            m.frequency.to_string(),
            m.scheme.as_str().to_string(),
            opt(m.uncertainty, fmt_f64),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_campaign(r: impl Read) -> Result<Campaign, CsvError> {
    let t = Table::read(r)?;
    let c_ts = t.column("timestamp")?;
    let c_f = t.column("frequency_hz")?;
    let c_s = t.column("scheme")?;
    let c_u = t.optional_column("uncertainty_hz");
    let mut out = Vec::with_capacity(t.rows.len());
    for i in 0..t.rows.len() {
        out.push(Measurement {
            timestamp: t.raw(i, c_ts).to_string(),
            frequency: t.parse::<ExactFrequency>(i, c_f, "frequency_hz")?,
            scheme: t.parse::<Scheme>(i, c_s, "scheme")?,
            uncertainty: t.parse_opt(i, c_u, "uncertainty_hz")?,
        });
    }
    Ok(Campaign::new(out)?)
}

pub fn write_scan(w: impl Write, points: &[(f64, f64)]) -> Result<(), CsvError> {
    let mut wtr = writer(w, &SCAN_HEADER)?;
    for &(d, s) in points {
        wtr.write_record([fmt_f64(d), fmt_f64(s)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_scan(r: impl Read) -> Result<Vec<(f64, f64)>, CsvError> {
    let t = Table::read(r)?;
    let (c_d, c_s) = (t.column("delta_hz")?, t.column("signal")?);
    (0..t.rows.len())
        .map(|i| Ok((t.parse(i, c_d, "delta_hz")?, t.parse(i, c_s, "signal")?)))
        .collect()
}

pub fn write_beatmap(w: impl Write, pairs: &[ModePair]) -> Result<(), CsvError> {
    let mut wtr = writer(w, &BEATMAP_HEADER)?;
    for p in pairs {
        wtr.write_record([
            p.q.to_string(),
            p.p.to_string(),
            p.sfg.to_string(),
            p.mode.to_string(),
            p.beat.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_beatmap(r: impl Read) -> Result<Vec<ModePair>, CsvError> {
    let t = Table::read(r)?;
    let cols = [
        t.column("q")?,
        t.column("p")?,
        t.column("sfg_hz")?,
        t.column("mode_hz")?,
        t.column("beat_hz")?,
    ];
    (0..t.rows.len())
        .map(|i| {
            Ok(ModePair {
                q: t.parse(i, cols[0], "q")?,
                p: t.parse(i, cols[1], "p")?,
                sfg: t.parse::<ExactFrequency>(i, cols[2], "sfg_hz")?,
                mode: t.parse::<ExactFrequency>(i, cols[3], "mode_hz")?,
                beat: t.parse::<ExactFrequency>(i, cols[4], "beat_hz")?,
            })
        })
        .collect()
}

/// One-row summary written by the `campaign` command.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub stats: CampaignStats,
    pub fractional_uncertainty: Option<f64>,
    /// Reference value and its 1-σ uncertainty, Hz.
    pub reference: Option<(ExactFrequency, f64)>,
    pub consistency: Option<Consistency>,
}

pub fn write_campaign_report(w: impl Write, r: &CampaignReport) -> Result<(), CsvError> {
    let mut wtr = writer(w, &REPORT_HEADER)?;
    let s = &r.stats;
    wtr.write_record([
        s.n.to_string(),
        s.mean.to_string(),
        opt(s.sigma, fmt_f64),
        opt(s.old_mean, |f| f.to_string()),
        opt(s.new_mean, |f| f.to_string()),
        opt(s.scheme_gap, fmt_f64),
        opt(r.fractional_uncertainty, fmt_f64),
        opt(r.reference, |(f, _)| f.to_string()),
        opt(r.reference, |(_, u)| fmt_f64(u)),
        opt(r.consistency, |c| fmt_f64(c.pull)),
        opt(r.consistency, |c| c.consistent.to_string()),
    ])?;
    wtr.flush()?;
    Ok(())
}

pub fn read_campaign_report(r: impl Read) -> Result<CampaignReport, CsvError> {
    let t = Table::read(r)?;
    if t.rows.len() != 1 {
        return Err(CsvError::Invalid(format!(
            "expected one report row, found {}",
            t.rows.len()
        )));
    }
    let col = |name| t.optional_column(name);
    let stats = CampaignStats {
        n: t.parse(0, t.column("n")?, "n")?,
        mean: t.parse(0, t.column("mean_hz")?, "mean_hz")?,
        sigma: t.parse_opt(0, col("sigma_hz"), "sigma_hz")?,
        old_mean: t.parse_opt(0, col("old_mean_hz"), "old_mean_hz")?,
        new_mean: t.parse_opt(0, col("new_mean_hz"), "new_mean_hz")?,
        scheme_gap: t.parse_opt(0, col("scheme_gap_hz"), "scheme_gap_hz")?,
    };
    let reference_hz: Option<ExactFrequency> =
        t.parse_opt(0, col("reference_hz"), "reference_hz")?;
    let reference_sigma: Option<f64> =
        t.parse_opt(0, col("reference_sigma_hz"), "reference_sigma_hz")?;
    let pull: Option<f64> = t.parse_opt(0, col("pull"), "pull")?;
    let consistent: Option<bool> = t.parse_opt(0, col("consistent"), "consistent")?;
    Ok(CampaignReport {
        stats,
        fractional_uncertainty: t.parse_opt(
            0,
            col("fractional_uncertainty"),
            "fractional_uncertainty",
        )?,
        reference: reference_hz.zip(reference_sigma),
        consistency: pull
            .zip(consistent)
            .map(|(pull, consistent)| Consistency { pull, consistent }),
    })
}

impl From<ParseFrequencyError> for CsvError {
    fn from(e: ParseFrequencyError) -> Self {
        CsvError::Invalid(e.to_string())
    }
}
