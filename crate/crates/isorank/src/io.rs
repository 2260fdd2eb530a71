//! On-disk formats: versioned JSON documents for instances, observation
//! streams, matrices/fits, run manifests and sweep reports; a compact binary
//! stream format for large sweeps; JSON-lines dumps for comparison graphs and
//! pass traces; and the fixed-header CSV renderer for sweep rows.
//!
//! Every JSON document carries `"schema": "isorank/1"` plus a `"kind"`
//! discriminator, and parsing rejects anything else. Floating-point values
//! round-trip bit-exactly through both the JSON documents (shortest-
//! round-trip decimal rendering) and the binary format (raw IEEE-754 bits),
//! so observation masks and per-cell counts recomputed after a round trip
//! match the originals exactly.
//!
//! Binary stream layout (all integers little-endian):
//!
//! ```text
//! bytes 0..8    magic "ISRB0001"
//! bytes 8..16   n as u64
//! bytes 16..24  d as u64
//! bytes 24..32  lambda as IEEE-754 bits
//! bytes 32..40  record count as u64
//! then per record (16 bytes): i as u32, k as u32, y as IEEE-754 bits
//! ```

use crate::bench::{ExperimentReport, ReplicateRow, CSV_HEADER};
use crate::compgraph::WeightedGraph;
use crate::error::{Error, Result};
use crate::isr::{GridConfig, IsrConfig, IsrOutcome};
use crate::perm::Permutation;
use crate::reconstruct::IsotonicFit;
use crate::sampling::{ObsRecord, ObservationStream, SignalInstance};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Version tag carried by every JSON document this module emits.
pub const SCHEMA: &str = "isorank/1";

/// Magic prefix of the binary stream format.
pub const STREAM_MAGIC: [u8; 8] = *b"ISRB0001";

fn expect_header(schema: &str, kind: &str, want_kind: &str) -> Result<()> {
    if schema != SCHEMA {
        return Err(Error::Format(format!(
            "unsupported schema {schema:?}, expected {SCHEMA:?}"
        )));
    }
    if kind != want_kind {
        return Err(Error::Format(format!(
            "wrong document kind {kind:?}, expected {want_kind:?}"
        )));
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    schema: String,
    kind: String,
    n: usize,
    d: usize,
    lambda: f64,
    /// Row-major entries, length `n * d`.
    m: Vec<f64>,
    /// Sorted position of each expert; position 0 is the lowest row.
    pi_star: Vec<usize>,
}

/// Serializes a ground-truth instance as a JSON document.
pub fn instance_json(inst: &SignalInstance) -> String {
    let doc = InstanceDoc {
        schema: SCHEMA.into(),
        kind: "instance".into(),
        n: inst.n(),
        d: inst.d(),
        lambda: inst.lambda,
        m: inst.m.iter().copied().collect(),
        pi_star: inst.pi_star.as_slice().to_vec(),
    };
    serde_json::to_string(&doc).expect("plain records always serialize")
}

/// Parses and re-validates an instance document.
pub fn parse_instance(text: &str) -> Result<SignalInstance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    expect_header(&doc.schema, &doc.kind, "instance")?;
    if doc.m.len() != doc.n * doc.d {
        return Err(Error::Format(format!(
            "matrix has {} entries, expected n*d = {}",
            doc.m.len(),
            doc.n * doc.d
        )));
    }
    let m = Array2::from_shape_vec((doc.n, doc.d), doc.m)
        .map_err(|e| Error::Format(e.to_string()))?;
    let pi_star = Permutation::from_positions(doc.pi_star)
        .map_err(|e| Error::Format(e.to_string()))?;
    SignalInstance::new(m, pi_star, doc.lambda)
}

// ---------------------------------------------------------------------------
// Observation streams
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StreamDoc {
    schema: String,
    kind: String,
    n: usize,
    d: usize,
    lambda: f64,
    /// `[i, k, y]` triples.
    records: Vec<(u32, u32, f64)>,
}

/// Serializes an observation stream as a JSON document.
pub fn stream_json(stream: &ObservationStream) -> String {
    let doc = StreamDoc {
        schema: SCHEMA.into(),
        kind: "stream".into(),
        n: stream.n,
        d: stream.d,
        lambda: stream.lambda,
        records: stream.records.iter().map(|r| (r.i, r.k, r.y)).collect(),
    };
    serde_json::to_string(&doc).expect("plain records always serialize")
}

fn validate_stream_shape(n: usize, d: usize, lambda: f64) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::Format("stream dimensions must be positive".into()));
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Format(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn check_cell(n: usize, d: usize, i: u32, k: u32) -> Result<()> {
    if (i as usize) >= n || (k as usize) >= d {
        return Err(Error::Format(format!(
            "record cell ({i}, {k}) outside a {n} x {d} matrix"
        )));
    }
    Ok(())
}

/// Parses a stream document, checking cells against the declared shape.
pub fn parse_stream(text: &str) -> Result<ObservationStream> {
    let doc: StreamDoc = serde_json::from_str(text)?;
    expect_header(&doc.schema, &doc.kind, "stream")?;
    validate_stream_shape(doc.n, doc.d, doc.lambda)?;
    let mut records = Vec::with_capacity(doc.records.len());
    for (i, k, y) in doc.records {
        check_cell(doc.n, doc.d, i, k)?;
        records.push(ObsRecord { i, k, y });
    }
    Ok(ObservationStream {
        n: doc.n,
        d: doc.d,
        lambda: doc.lambda,
        records,
    })
}

/// Writes the compact binary form documented in the module header.
pub fn write_stream_binary(stream: &ObservationStream, mut out: impl Write) -> Result<()> {
    out.write_all(&STREAM_MAGIC)?;
    out.write_all(&(stream.n as u64).to_le_bytes())?;
    out.write_all(&(stream.d as u64).to_le_bytes())?;
    out.write_all(&stream.lambda.to_bits().to_le_bytes())?;
    out.write_all(&(stream.records.len() as u64).to_le_bytes())?;
    for rec in &stream.records {
        out.write_all(&rec.i.to_le_bytes())?;
        out.write_all(&rec.k.to_le_bytes())?;
        out.write_all(&rec.y.to_bits().to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(reader: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Reads the compact binary form back, rejecting bad magic, out-of-range
/// cells, truncation, and trailing bytes.
pub fn read_stream_binary(mut reader: impl Read) -> Result<ObservationStream> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if magic != STREAM_MAGIC {
        return Err(Error::Format("bad magic; not a binary stream file".into()));
    }
    let n = read_u64(&mut reader)? as usize;
    let d = read_u64(&mut reader)? as usize;
    let lambda = f64::from_bits(read_u64(&mut reader)?);
    validate_stream_shape(n, d, lambda)?;
    let count = read_u64(&mut reader)?;
    // Cap the pre-allocation so a corrupt count cannot trigger a huge alloc;
    // the vector still grows to the real size as records arrive.
    let mut records = Vec::with_capacity((count as usize).min(1 << 20));
    for _ in 0..count {
        let i = read_u32(&mut reader)?;
        let k = read_u32(&mut reader)?;
        let y = f64::from_bits(read_u64(&mut reader)?);
        check_cell(n, d, i, k)?;
        records.push(ObsRecord { i, k, y });
    }
    let mut probe = [0u8; 1];
    if reader.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after final record".into()));
    }
    Ok(ObservationStream {
        n,
        d,
        lambda,
        records,
    })
}

// ---------------------------------------------------------------------------
// Matrices and isotonic fits
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    schema: String,
    kind: String,
    n: usize,
    d: usize,
    /// Row-major entries, length `n * d`.
    entries: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
}

fn matrix_doc(kind: &str, m: &Array2<f64>) -> MatrixDoc {
    MatrixDoc {
        schema: SCHEMA.into(),
        kind: kind.into(),
        n: m.nrows(),
        d: m.ncols(),
        entries: m.iter().copied().collect(),
        objective: None,
        converged: None,
    }
}

/// Serializes a dense matrix as a JSON document of kind `"matrix"`.
pub fn matrix_json(m: &Array2<f64>) -> String {
    serde_json::to_string(&matrix_doc("matrix", m)).expect("plain records always serialize")
}

/// Serializes a projection result as a JSON document of kind `"fit"`, which
/// extends the matrix document with the objective value and convergence flag.
pub fn fit_json(fit: &IsotonicFit) -> String {
    let mut doc = matrix_doc("fit", &fit.m_hat);
    doc.objective = Some(fit.objective);
    doc.converged = Some(fit.converged);
    serde_json::to_string(&doc).expect("plain records always serialize")
}

fn doc_matrix(doc: MatrixDoc) -> Result<Array2<f64>> {
    if doc.entries.len() != doc.n * doc.d {
        return Err(Error::Format(format!(
            "matrix has {} entries, expected n*d = {}",
            doc.entries.len(),
            doc.n * doc.d
        )));
    }
    Array2::from_shape_vec((doc.n, doc.d), doc.entries).map_err(|e| Error::Format(e.to_string()))
}

/// Parses a matrix from a document of kind `"matrix"` or `"fit"`.
pub fn parse_matrix(text: &str) -> Result<Array2<f64>> {
    let doc: MatrixDoc = serde_json::from_str(text)?;
    if doc.kind != "matrix" && doc.kind != "fit" {
        return Err(Error::Format(format!(
            "wrong document kind {:?}, expected \"matrix\" or \"fit\"",
            doc.kind
        )));
    }
    expect_header(&doc.schema, "matrix", "matrix")?;
    doc_matrix(doc)
}

/// Parses a full fit (matrix, objective, convergence flag) from a document of
/// kind `"fit"`.
pub fn parse_fit(text: &str) -> Result<IsotonicFit> {
    let doc: MatrixDoc = serde_json::from_str(text)?;
    expect_header(&doc.schema, &doc.kind, "fit")?;
    let objective = doc
        .objective
        .ok_or_else(|| Error::Format("fit document lacks an objective".into()))?;
    let converged = doc
        .converged
        .ok_or_else(|| Error::Format("fit document lacks a convergence flag".into()))?;
    Ok(IsotonicFit {
        m_hat: doc_matrix(doc)?,
        objective,
        converged,
    })
}

// ---------------------------------------------------------------------------
// Graph dumps and trace logs (JSON lines)
// ---------------------------------------------------------------------------

/// Writes one JSON line per ordered pair with a nonzero weight, in row-major
/// pair order: `{"u":..,"v":..,"w":..}`. Weights are antisymmetric, so each
/// unordered comparison appears twice with opposite signs. Returns the number
/// of lines written.
pub fn dump_graph_jsonl(graph: &WeightedGraph, mut out: impl Write) -> Result<usize> {
    #[derive(Serialize)]
    struct EdgeLine {
        u: usize,
        v: usize,
        w: f64,
    }
    let mut lines = 0;
    for u in 0..graph.n() {
        for v in 0..graph.n() {
            if u == v {
                continue;
            }
            let w = graph.weight(u, v);
            if w != 0.0 {
                serde_json::to_writer(&mut out, &EdgeLine { u, v, w })?;
                out.write_all(b"\n")?;
                lines += 1;
            }
        }
    }
    Ok(lines)
}

/// Streams trace events as JSON lines. Write errors are deferred so the log
/// can serve as a plain `FnMut` callback; call [`TraceLog::finish`] to flush
/// and surface the first deferred error.
pub struct TraceLog<W: Write> {
    out: W,
    error: Option<Error>,
}

impl<W: Write> TraceLog<W> {
    pub fn new(out: W) -> Self {
        TraceLog { out, error: None }
    }

    /// Appends one event as a JSON line; a no-op after the first failure.
    pub fn record(&mut self, event: &crate::slr::TraceEvent) {
        if self.error.is_some() {
            return;
        }
        let result = serde_json::to_writer(&mut self.out, event)
            .map_err(Error::from)
            .and_then(|()| self.out.write_all(b"\n").map_err(Error::from));
        if let Err(e) = result {
            self.error = Some(e);
        }
    }

    /// Flushes and returns the writer, or the first deferred error.
    pub fn finish(mut self) -> Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// Everything needed to audit one ranking run: the effective configuration,
/// the seed, the threshold trajectory and the result. Non-finite thresholds
/// (an exhausted grid) serialize as JSON `null`.
#[derive(Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub kind: &'static str,
    pub seed: u64,
    pub t_steps: usize,
    pub grid: GridConfig,
    pub heights: Vec<f64>,
    pub count_virtual_in_bands: bool,
    pub eig: crate::eig::EigOptions,
    pub deadline_seconds: Option<f64>,
    pub gamma_hat: f64,
    pub gamma_trajectory: Vec<f64>,
    pub cyclic_aborts: usize,
    pub deadline_hit: bool,
    /// Estimated sorted position of each expert.
    pub pi_hat: Vec<usize>,
    /// Filled by harnesses that know the ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_perm: Option<f64>,
}

/// Assembles the manifest for a finished run.
pub fn run_manifest(
    config: &IsrConfig,
    seed: u64,
    outcome: &IsrOutcome,
    loss_perm: Option<f64>,
) -> RunManifest {
    RunManifest {
        schema: SCHEMA,
        kind: "run-manifest",
        seed,
        t_steps: config.t_steps,
        grid: config.grid.clone(),
        heights: config.heights.as_slice().to_vec(),
        count_virtual_in_bands: config.count_virtual_in_bands,
        eig: config.eig,
        deadline_seconds: config.deadline.map(|d| d.as_secs_f64()),
        gamma_hat: outcome.gamma_hat,
        gamma_trajectory: outcome.gamma_trajectory.clone(),
        cyclic_aborts: outcome.cyclic_aborts,
        deadline_hit: outcome.deadline_hit,
        pi_hat: outcome.pi_hat.as_slice().to_vec(),
        loss_perm,
    }
}

/// Pretty-printed JSON for a manifest.
pub fn manifest_json(manifest: &RunManifest) -> String {
    serde_json::to_string_pretty(manifest).expect("plain records always serialize")
}

// ---------------------------------------------------------------------------
// Sweep reports and CSV
// ---------------------------------------------------------------------------

/// Pretty-printed, version-tagged JSON for a sweep report.
pub fn report_json(report: &ExperimentReport) -> String {
    #[derive(Serialize)]
    struct ReportDoc<'a> {
        schema: &'static str,
        kind: &'static str,
        #[serde(flatten)]
        report: &'a ExperimentReport,
    }
    serde_json::to_string_pretty(&ReportDoc {
        schema: SCHEMA,
        kind: "report",
        report,
    })
    .expect("plain records always serialize")
}

/// Renders sweep rows as CSV under the fixed header
/// [`crate::bench::CSV_HEADER`]. Emits the header even for an empty slice.
pub fn csv_string(rows: &[ReplicateRow]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    writer
        .write_record(CSV_HEADER.split(','))
        .map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Writes sweep rows to a CSV file.
pub fn write_csv_file(path: impl AsRef<Path>, rows: &[ReplicateRow]) -> Result<()> {
    std::fs::write(path, csv_string(rows)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isr::practical_preset;
    use crate::sampling::{poissonize, subsample_batches, NoiseModel};
    use crate::synth::{gen_separated, Family};
    use ndarray::arr2;

    fn small_instance() -> SignalInstance {
        gen_separated(5, 3, 2.0, 7).expect("generator")
    }

    #[test]
    fn instance_json_roundtrips_bit_exactly() {
        let inst = small_instance();
        let text = instance_json(&inst);
        let back = parse_instance(&text).expect("parse");
        assert_eq!(back.n(), inst.n());
        assert_eq!(back.d(), inst.d());
        assert_eq!(back.lambda.to_bits(), inst.lambda.to_bits());
        assert_eq!(back.pi_star.as_slice(), inst.pi_star.as_slice());
        for (a, b) in back.m.iter().zip(inst.m.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn stream_json_roundtrips_bit_exactly() {
        let inst = small_instance();
        let stream = poissonize(&inst, NoiseModel::Gaussian, 3).expect("sample");
        let text = stream_json(&stream);
        let back = parse_stream(&text).expect("parse");
        assert_eq!(back.n, stream.n);
        assert_eq!(back.d, stream.d);
        assert_eq!(back.lambda.to_bits(), stream.lambda.to_bits());
        assert_eq!(back.records.len(), stream.records.len());
        for (a, b) in back.records.iter().zip(stream.records.iter()) {
            assert_eq!((a.i, a.k, a.y.to_bits()), (b.i, b.k, b.y.to_bits()));
        }
        assert_eq!(back.cell_counts(), stream.cell_counts());
    }

    #[test]
    fn stream_binary_layout_and_roundtrip() {
        let inst = small_instance();
        let stream = poissonize(&inst, NoiseModel::Gaussian, 4).expect("sample");
        let mut bytes = Vec::new();
        write_stream_binary(&stream, &mut bytes).expect("write");
        assert_eq!(&bytes[..8], b"ISRB0001");
        assert_eq!(bytes.len(), 40 + 16 * stream.records.len());
        let back = read_stream_binary(bytes.as_slice()).expect("read");
        assert_eq!(back.lambda.to_bits(), stream.lambda.to_bits());
        for (a, b) in back.records.iter().zip(stream.records.iter()) {
            assert_eq!((a.i, a.k, a.y.to_bits()), (b.i, b.k, b.y.to_bits()));
        }
        assert_eq!(back.cell_counts(), stream.cell_counts());
    }

    #[test]
    fn binary_rejects_corruption() {
        let stream = ObservationStream {
            n: 2,
            d: 2,
            lambda: 1.0,
            records: vec![ObsRecord { i: 1, k: 0, y: 0.5 }],
        };
        let mut bytes = Vec::new();
        write_stream_binary(&stream, &mut bytes).expect("write");

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(read_stream_binary(bad_magic.as_slice()).is_err());

        let truncated = &bytes[..bytes.len() - 1];
        assert!(read_stream_binary(truncated).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(
            read_stream_binary(trailing.as_slice()),
            Err(Error::Format(_))
        ));

        // Point the record at row 7 of a 2 x 2 matrix.
        let mut bad_cell = bytes.clone();
        bad_cell[40] = 7;
        assert!(matches!(
            read_stream_binary(bad_cell.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn json_rejects_wrong_schema_and_kind() {
        let inst = small_instance();
        let text = instance_json(&inst);
        let wrong_schema = text.replace("isorank/1", "isorank/9");
        assert!(matches!(
            parse_instance(&wrong_schema),
            Err(Error::Format(_))
        ));
        let wrong_kind = text.replace("\"instance\"", "\"stream\"");
        assert!(matches!(parse_instance(&wrong_kind), Err(Error::Format(_))));
    }

    #[test]
    fn fit_json_roundtrips_and_downgrades_to_matrix() {
        let fit = IsotonicFit {
            m_hat: arr2(&[[0.25, 0.5], [0.5, 1.0]]),
            objective: 0.125,
            converged: true,
        };
        let text = fit_json(&fit);
        let back = parse_fit(&text).expect("parse fit");
        assert_eq!(back.m_hat, fit.m_hat);
        assert_eq!(back.objective.to_bits(), fit.objective.to_bits());
        assert!(back.converged);
        // A fit document still parses as a bare matrix.
        assert_eq!(parse_matrix(&text).expect("parse matrix"), fit.m_hat);
        // A bare matrix document does not parse as a fit.
        let bare = matrix_json(&fit.m_hat);
        assert!(parse_fit(&bare).is_err());
        assert_eq!(parse_matrix(&bare).expect("matrix"), fit.m_hat);
    }

    #[test]
    fn graph_dump_writes_both_orientations() {
        let mut graph = WeightedGraph::new(3);
        graph.apply_update(0, &[(1, 2.5)], 1.0);
        let mut out = Vec::new();
        let lines = dump_graph_jsonl(&graph, &mut out).expect("dump");
        assert_eq!(lines, 2);
        let text = String::from_utf8(out).expect("utf8");
        let parsed: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).expect("line"))
            .collect();
        assert_eq!(parsed[0]["u"], 0);
        assert_eq!(parsed[0]["v"], 1);
        assert_eq!(parsed[0]["w"], 2.5);
        assert_eq!(parsed[1]["u"], 1);
        assert_eq!(parsed[1]["v"], 0);
        assert_eq!(parsed[1]["w"], -2.5);
    }

    #[test]
    fn trace_log_and_manifest_capture_a_run() {
        let inst = gen_separated(5, 3, 400.0, 11).expect("generator");
        let stream = poissonize(&inst, NoiseModel::Gaussian, 12).expect("sample");
        let config = practical_preset(5, 3, None).expect("preset");
        let batched = subsample_batches(&stream, config.t_steps, 13).expect("batches");

        let mut log = TraceLog::new(Vec::new());
        let outcome = {
            let mut sink = |ev: &crate::slr::TraceEvent| log.record(ev);
            crate::isr::run_isr(&batched, &config, Some(&mut sink)).expect("run")
        };
        let buf = log.finish().expect("finish");
        let text = String::from_utf8(buf).expect("utf8");
        assert!(!text.is_empty(), "a full run must emit trace lines");
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).expect("trace line");
            for key in ["t", "gamma", "i", "h", "q_len", "avg_update_abs", "image_update_abs"] {
                assert!(v.get(key).is_some(), "trace line lacks {key}: {line}");
            }
        }

        let manifest = run_manifest(&config, 12, &outcome, Some(0.0));
        let v: serde_json::Value =
            serde_json::from_str(&manifest_json(&manifest)).expect("manifest json");
        assert_eq!(v["schema"], SCHEMA);
        assert_eq!(v["kind"], "run-manifest");
        assert_eq!(v["t_steps"], config.t_steps as u64);
        assert_eq!(
            v["gamma_trajectory"].as_array().expect("trajectory").len(),
            config.t_steps
        );
        assert_eq!(v["pi_hat"].as_array().expect("pi_hat").len(), 5);
        assert!(v["grid"]["gamma_bar"].as_f64().expect("gamma_bar") > 0.0);
    }

    #[test]
    fn csv_matches_fixed_header_and_is_deterministic() {
        let rows = vec![ReplicateRow {
            n: 4,
            d: 2,
            lambda: 1.0,
            estimator: "isr".into(),
            replicate: 0,
            loss_perm: 0.0,
            loss_reco: 0.5,
            seconds: 0.01,
            seed: 7,
        }];
        let text = csv_string(&rows).expect("csv");
        let mut lines = text.lines();
        assert_eq!(lines.next().expect("header"), CSV_HEADER);
        assert_eq!(lines.count(), 1);
        assert_eq!(text, csv_string(&rows).expect("csv again"));
        assert_eq!(csv_string(&[]).expect("empty").trim_end(), CSV_HEADER);
    }

    #[test]
    fn report_json_is_version_tagged() {
        let report = ExperimentReport {
            rows: Vec::new(),
            warnings: vec!["example".into()],
            wall_seconds: 0.5,
        };
        let v: serde_json::Value =
            serde_json::from_str(&report_json(&report)).expect("report json");
        assert_eq!(v["schema"], SCHEMA);
        assert_eq!(v["kind"], "report");
        assert_eq!(v["warnings"][0], "example");
        assert!(v["rows"].as_array().expect("rows").is_empty());
    }

    #[test]
    fn family_and_synth_docs_share_the_instance_schema() {
        // Any generated family serializes through the same document.
        for (idx, family) in [
            Family::UniformSorted,
            Family::Block { blocks: 2 },
            Family::Smooth,
        ]
        .into_iter()
        .enumerate()
        {
            let inst =
                crate::synth::gen_isotonic(6, 4, family, 1.5, 100 + idx as u64).expect("gen");
            let back = parse_instance(&instance_json(&inst)).expect("roundtrip");
            for (a, b) in back.m.iter().zip(inst.m.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
