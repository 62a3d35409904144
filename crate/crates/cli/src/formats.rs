//! On-disk formats. Numbers are written with shortest round-trip precision;
//! CSV inputs accept `#` comment lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use powercap::planners::{CalibrationSample, PlannerResult};
use powercap::{
    canonicalize_report, ActivitySample, EnergyModel, EventVector, Matrix, ModelKind, OperatingPoint, PnrConfiguration,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Provenance carried by every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Header {
            tool: "powercap".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash,
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# tool={} version={} command={} seed={} config_hash={}\n",
            self.tool, self.version, self.command, self.seed, self.config_hash
        )
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

fn parse_num(path: &Path, line: u64, field: &str, raw: &str) -> CliResult<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::invalid(format!("{}:{line}: {field} '{raw}' is not a finite number", path.display())))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

// ---------------------------------------------------------------------------
// Datasets: one `<stem>.csv` report per sample plus a `<stem>.json` sidecar.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub kernel: String,
    pub variant: String,
    pub op_point: OperatingPoint<f64>,
    pub events: BTreeMap<String, f64>,
}

pub fn read_report_csv(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let text = read_text(path)?;
    let mut reader = csv_reader(&text);
    let headers = reader.headers().map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "power_mw"] {
        return Err(CliError::invalid(format!("{}: expected header 'path,power_mw'", path.display())));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        rows.push((rec[0].to_string(), parse_num(path, line_of(&rec), "power_mw", &rec[1])?));
    }
    Ok(rows)
}

pub fn read_sample(csv_path: &Path, json_path: &Path) -> CliResult<ActivitySample<f64>> {
    let sidecar: Sidecar = serde_json::from_str(&read_text(json_path)?)
        .map_err(|e| CliError::invalid(format!("{}: {e}", json_path.display())))?;
    let rows = read_report_csv(csv_path)?;
    let report = canonicalize_report(rows, sidecar.op_point.clone())
        .map_err(|e| CliError::invalid(format!("{}: {e}", csv_path.display())))?;
    let events = EventVector::from_pairs(sidecar.events)
        .map_err(|e| CliError::invalid(format!("{}: {e}", json_path.display())))?;
    Ok(ActivitySample::new(sidecar.kernel, sidecar.variant, events, report)?)
}

/// Every `<stem>.json` in `dir` with its `<stem>.csv`, in file-name order.
pub fn read_dataset(dir: &Path) -> CliResult<Vec<ActivitySample<f64>>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::read(dir, e))?;
    let mut sidecars: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    sidecars.sort();
    if sidecars.is_empty() {
        return Err(CliError::usage(format!("{}: no '<stem>.json' sidecars found", dir.display())));
    }
    sidecars
        .iter()
        .map(|json| {
            let csv = json.with_extension("csv");
            if !csv.is_file() {
                return Err(CliError::usage(format!("{}: missing report {}", json.display(), csv.display())));
            }
            read_sample(&csv, json)
        })
        .collect()
}

pub fn write_sample(dir: &Path, stem: &str, sample: &ActivitySample<f64>) -> CliResult<()> {
    let mut csv = String::from("path,power_mw\n");
    for row in sample.report.rows() {
        csv.push_str(&format!("{},{}\n", row.path, row.power_mw));
    }
    write_file(&dir.join(format!("{stem}.csv")), csv.as_bytes())?;
    let sidecar = Sidecar {
        kernel: sample.kernel.clone(),
        variant: sample.variant.clone(),
        op_point: sample.report.op().clone(),
        events: sample.events.names().iter().cloned().zip(sample.events.counts().iter().copied()).collect(),
    };
    write_file(&dir.join(format!("{stem}.json")), &pretty(&sidecar))
}

// ---------------------------------------------------------------------------
// Model files.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub header: Header,
    pub kind: ModelKind,
    pub event_names: Vec<String>,
    pub row_paths: Vec<String>,
    /// Nonzero entries of W as `[row, column, value]`, row-major.
    pub w: Vec<(usize, usize, f64)>,
    pub alpha: Vec<f64>,
    pub leak_mw: f64,
    pub train_op: OperatingPoint<f64>,
}

impl ModelFile {
    pub fn from_model(model: &EnergyModel<f64>, header: Header) -> Self {
        let w = model.w();
        let mut triplets = Vec::new();
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                if w[(r, c)] != 0.0 {
                    triplets.push((r, c, w[(r, c)]));
                }
            }
        }
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            header,
            kind: model.kind(),
            event_names: model.event_names().to_vec(),
            row_paths: model.row_paths().to_vec(),
            w: triplets,
            alpha: model.alpha().to_vec(),
            leak_mw: model.leak_mw(),
            train_op: model.train_op().clone(),
        }
    }

    pub fn to_model(&self) -> CliResult<EnergyModel<f64>> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(CliError::invalid(format!("unsupported model format_version {}", self.format_version)));
        }
        let (rows, cols) = (self.row_paths.len(), self.event_names.len());
        let mut w = Matrix::zeros(rows, cols);
        for &(r, c, v) in &self.w {
            if r >= rows || c >= cols {
                return Err(CliError::invalid(format!("W entry ({r}, {c}) outside {rows}x{cols}")));
            }
            w[(r, c)] = v;
        }
        Ok(EnergyModel::new(
            self.event_names.clone(),
            self.row_paths.clone(),
            w,
            self.alpha.clone(),
            self.leak_mw,
            self.train_op.clone(),
            self.kind,
        )?)
    }
}

pub fn read_model(path: &Path) -> CliResult<(EnergyModel<f64>, ModelFile)> {
    let file: ModelFile =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let model = file.to_model().map_err(|e| CliError { message: format!("{}: {}", path.display(), e.message), ..e })?;
    Ok((model, file))
}

// ---------------------------------------------------------------------------
// Candidates: `iteration,graph_id,freq_mhz,ii,feature_1..feature_n,events`
// where `events` is `name=count;name=count`.

pub fn parse_event_list(raw: &str) -> Result<Vec<(String, f64)>, String> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, count) = item.split_once('=').ok_or_else(|| format!("event '{item}' is not name=count"))?;
            let count: f64 = count.trim().parse().map_err(|_| format!("event '{item}' has a non-numeric count"))?;
            Ok((name.trim().to_string(), count))
        })
        .collect()
}

pub fn format_event_list(events: &EventVector<f64>) -> String {
    let parts: Vec<String> = events.names().iter().zip(events.counts()).map(|(n, c)| format!("{n}={c}")).collect();
    parts.join(";")
}

pub fn read_candidates(path: &Path) -> CliResult<Vec<PnrConfiguration<f64>>> {
    let text = read_text(path)?;
    let mut reader = csv_reader(&text);
    let bad = |msg: String| CliError::invalid(format!("{}: {msg}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let h: Vec<&str> = headers.iter().collect();
    let n = h.len();
    let features_ok = n >= 5 && h[4..n - 1].iter().enumerate().all(|(i, f)| *f == format!("feature_{}", i + 1));
    if n < 5 || h[..4] != ["iteration", "graph_id", "freq_mhz", "ii"] || h[n - 1] != "events" || !features_ok {
        return Err(bad("expected header 'iteration,graph_id,freq_mhz,ii,feature_1..feature_n,events'".into()));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = line_of(&rec);
        let iteration = rec[0].parse::<u64>().map_err(|_| bad(format!("line {line}: bad iteration '{}'", &rec[0])))?;
        let freq = parse_num(path, line, "freq_mhz", &rec[2])?;
        let ii = rec[3].parse::<u32>().map_err(|_| bad(format!("line {line}: bad ii '{}'", &rec[3])))?;
        let features = (4..n - 1).map(|j| parse_num(path, line, &h[j], &rec[j])).collect::<CliResult<Vec<_>>>()?;
        let events = parse_event_list(&rec[n - 1]).map_err(|m| bad(format!("line {line}: {m}")))?;
        let events = EventVector::from_pairs(events).map_err(|e| bad(format!("line {line}: {e}")))?;
        out.push(
            PnrConfiguration::new(rec[1].to_string(), iteration, freq, ii, events, features)
                .map_err(|e| bad(format!("line {line}: {e}")))?,
        );
    }
    Ok(out)
}

pub fn candidates_csv(header: &Header, stream: &[PnrConfiguration<f64>]) -> String {
    let d = stream.first().map_or(0, |c| c.features.len());
    let mut out = header.csv_comment();
    out.push_str("iteration,graph_id,freq_mhz,ii");
    for j in 1..=d {
        out.push_str(&format!(",feature_{j}"));
    }
    out.push_str(",events\n");
    for c in stream {
        out.push_str(&format!("{},{},{},{}", c.iteration, c.graph_id, c.freq_mhz, c.ii));
        for f in &c.features {
            out.push_str(&format!(",{f}"));
        }
        out.push_str(&format!(",{}\n", format_event_list(&c.events)));
    }
    out
}

// ---------------------------------------------------------------------------
// Calibration: `ptpx_mw,pred_mw,group,freq_mhz`.

pub fn read_calibration(path: &Path) -> CliResult<Vec<CalibrationSample<f64>>> {
    let text = read_text(path)?;
    let mut reader = csv_reader(&text);
    let bad = |msg: String| CliError::invalid(format!("{}: {msg}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["ptpx_mw", "pred_mw", "group", "freq_mhz"] {
        return Err(bad("expected header 'ptpx_mw,pred_mw,group,freq_mhz'".into()));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = line_of(&rec);
        out.push(CalibrationSample {
            ptpx_mw: parse_num(path, line, "ptpx_mw", &rec[0])?,
            pred_mw: parse_num(path, line, "pred_mw", &rec[1])?,
            group: rec[2].to_string(),
            freq_mhz: parse_num(path, line, "freq_mhz", &rec[3])?,
        });
    }
    Ok(out)
}

pub fn calibration_csv(header: &Header, cal: &[CalibrationSample<f64>]) -> String {
    let mut out = header.csv_comment();
    out.push_str("ptpx_mw,pred_mw,group,freq_mhz\n");
    for c in cal {
        out.push_str(&format!("{},{},{},{}\n", c.ptpx_mw, c.pred_mw, c.group, c.freq_mhz));
    }
    out
}

// ---------------------------------------------------------------------------
// Outputs.

pub fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn plan_csv(header: &Header, result: &PlannerResult<f64>) -> String {
    let mut out = header.csv_comment();
    out.push_str("role,freq_mhz,pred_mw,upper_bound_mw,graph_id\n");
    for s in &result.selected {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.role.as_str(),
            s.config.freq_mhz,
            opt(s.pred_mw),
            opt(s.upper_bound_mw),
            s.config.graph_id
        ));
    }
    out
}

/// A plain CSV table under the header comment.
pub fn table_csv(header: &Header, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.csv_comment();
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// JSON with a trailing newline.
pub fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("output serializes");
    v.push(b'\n');
    v
}

/// `{"header": ..., <body fields>}`.
pub fn with_header<T: Serialize>(header: &Header, body: &T) -> Vec<u8> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        header: &'a Header,
        #[serde(flatten)]
        body: &'a T,
    }
    pretty(&Doc { header, body })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Header {
        Header::new("test", 1, "abc".into())
    }

    #[test]
    fn event_list_round_trip() {
        let ev = EventVector::from_pairs([("a", 1.5), ("b", 0.1 + 0.2)]).unwrap();
        let parsed = parse_event_list(&format_event_list(&ev)).unwrap();
        assert_eq!(EventVector::from_pairs(parsed).unwrap(), ev);
        assert!(parse_event_list("a=1;;").unwrap().len() == 1);
        assert!(parse_event_list("a").is_err());
        assert!(parse_event_list("a=x").is_err());
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let op = OperatingPoint::new(0.8, 100.0, "tt").unwrap();
        let model = EnergyModel::from_beta(vec!["a".into(), "b".into()], vec![0.1 + 0.2, 1.0 / 3.0], 2.5, op).unwrap();
        let file = ModelFile::from_model(&model, header());
        let bytes = pretty(&file);
        let parsed: ModelFile = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(parsed.to_model().unwrap(), model);
        assert_eq!(pretty(&ModelFile::from_model(&parsed.to_model().unwrap(), parsed.header.clone())), bytes);
    }

    #[test]
    fn model_file_rejects_out_of_range_triplets() {
        let op = OperatingPoint::new(0.8, 100.0, "tt").unwrap();
        let model = EnergyModel::from_beta(vec!["a".into()], vec![1.0], 0.0, op).unwrap();
        let mut file = ModelFile::from_model(&model, header());
        file.w.push((5, 0, 1.0));
        assert!(file.to_model().is_err());
        file.w.pop();
        file.format_version = 99;
        assert!(file.to_model().is_err());
    }

    #[test]
    fn candidates_round_trip() {
        let ev = EventVector::from_pairs([("x", 3.0), ("y", 0.25)]).unwrap();
        let stream = vec![
            PnrConfiguration::new("g0", 0, 100.0, 1, ev.clone(), vec![1.0, 2.0]).unwrap(),
            PnrConfiguration::new("g1", 1, 150.5, 2, ev, vec![3.0, 4.0]).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        fs::write(&p, candidates_csv(&header(), &stream)).unwrap();
        assert_eq!(read_candidates(&p).unwrap(), stream);
    }
}
