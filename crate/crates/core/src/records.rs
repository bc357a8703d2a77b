//! Plain-text quadrature record files.
//!
//! ```text
//! ---
//! format: cvdistill-records
//! version: 1
//! units: shot-noise
//! columns: x_A,p_A,x_B,p_B,x_t,p_t,component_index
//! tap_transmittivity: 0.93
//! source: v_s=0.5495,v_a=118.6,t_s=0.5
//! levels: 0.25:0.5;1:0.5
//! seed: 7
//! ---
//! -1.2345678901234567e0 ... 1
//! ```
//!
//! `x_B`, `p_B` are the signal quadratures after the tap. `levels` lists the
//! `(eta, p)` pairs that `component_index` refers to. `source` and `seed` are
//! optional. Numbers are written with 17 significant digits so files
//! round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::channel::SourceParams;
use crate::error::{Error, Result};
use crate::montecarlo::QuadratureRecord;

pub const FORMAT_NAME: &str = "cvdistill-records";
pub const FORMAT_VERSION: u32 = 1;
pub const UNITS: &str = "shot-noise";
pub const COLUMNS: &str = "x_A,p_A,x_B,p_B,x_t,p_t,component_index";
const FENCE: &str = "---";

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub version: u32,
    pub units: String,
    pub tap_transmittivity: f64,
    pub source: Option<SourceParams>,
    pub levels: Vec<(f64, f64)>,
    pub seed: Option<u64>,
}

impl RecordHeader {
    pub fn new(
        tap_transmittivity: f64,
        source: Option<SourceParams>,
        levels: Vec<(f64, f64)>,
        seed: Option<u64>,
    ) -> Self {
        Self {
            version: FORMAT_VERSION,
            units: UNITS.to_string(),
            tap_transmittivity,
            source,
            levels,
            seed,
        }
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{FENCE}")?;
        writeln!(w, "format: {FORMAT_NAME}")?;
        writeln!(w, "version: {}", self.version)?;
        writeln!(w, "units: {}", self.units)?;
        writeln!(w, "columns: {COLUMNS}")?;
        writeln!(w, "tap_transmittivity: {:?}", self.tap_transmittivity)?;
        if let Some(s) = &self.source {
            writeln!(w, "source: v_s={:?},v_a={:?},t_s={:?}", s.v_s, s.v_a, s.t_s)?;
        }
        let levels: Vec<String> = self.levels.iter().map(|(e, p)| format!("{e:?}:{p:?}")).collect();
        writeln!(w, "levels: {}", levels.join(";"))?;
        if let Some(seed) = self.seed {
            writeln!(w, "seed: {seed}")?;
        }
        writeln!(w, "{FENCE}")
    }
}

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::format_at(line, format!("cannot parse {what} from {s:?}")))
}

fn parse_source(value: &str, line: usize) -> Result<SourceParams> {
    let (mut v_s, mut v_a, mut t_s) = (None, None, None);
    for part in value.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::format_at(line, format!("malformed source entry {part:?}")))?;
        let v = parse_f64(v, line, k)?;
        match k.trim() {
            "v_s" => v_s = Some(v),
            "v_a" => v_a = Some(v),
            "t_s" => t_s = Some(v),
            other => return Err(Error::format_at(line, format!("unknown source key {other:?}"))),
        }
    }
    match (v_s, v_a, t_s) {
        (Some(v_s), Some(v_a), Some(t_s)) => SourceParams::new(v_s, v_a, t_s),
        _ => Err(Error::format_at(line, "source needs v_s, v_a and t_s")),
    }
}

fn parse_levels(value: &str, line: usize) -> Result<Vec<(f64, f64)>> {
    value
        .split(';')
        .map(|pair| {
            let (e, p) = pair
                .split_once(':')
                .ok_or_else(|| Error::format_at(line, format!("malformed level {pair:?}")))?;
            Ok((parse_f64(e, line, "eta")?, parse_f64(p, line, "weight")?))
        })
        .collect()
}

/// Streaming reader. The header is parsed on open.
pub struct RecordReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    header: RecordHeader,
}

impl RecordReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut line_no = 0;
        let mut next = |line_no: &mut usize| -> Result<Option<String>> {
            *line_no += 1;
            lines
                .next()
                .transpose()
                .map_err(|e| Error::format_at(*line_no, e.to_string()))
        };
        if next(&mut line_no)?.as_deref().map(str::trim) != Some(FENCE) {
            return Err(Error::format_at(1, "missing header fence"));
        }
        let mut fields = std::collections::BTreeMap::new();
        loop {
            let line = next(&mut line_no)?.ok_or_else(|| Error::format("unterminated header"))?;
            let line = line.trim();
            if line == FENCE {
                break;
            }
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::format_at(line_no, format!("expected `key: value`, got {line:?}")))?;
            if fields
                .insert(k.trim().to_string(), (v.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::format_at(line_no, format!("duplicate header key {k:?}")));
            }
        }
        let mut take = |key: &str| fields.remove(key);
        let required =
            |v: Option<(String, usize)>, key: &str| v.ok_or_else(|| Error::format(format!("header lacks {key:?}")));

        let (format, l) = required(take("format"), "format")?;
        if format != FORMAT_NAME {
            return Err(Error::format_at(l, format!("unknown format {format:?}")));
        }
        let (version, l) = required(take("version"), "version")?;
        let version: u32 = version
            .parse()
            .map_err(|_| Error::format_at(l, format!("bad version {version:?}")))?;
        if version != FORMAT_VERSION {
            return Err(Error::format_at(l, format!("unsupported version {version}")));
        }
        let (units, _) = required(take("units"), "units")?;
        if units != UNITS {
            return Err(Error::UnitsMismatch(format!("expected {UNITS}, file declares {units}")));
        }
        let (columns, l) = required(take("columns"), "columns")?;
        if columns.replace(' ', "") != COLUMNS {
            return Err(Error::format_at(l, format!("unexpected columns {columns:?}")));
        }
        let (tap, l) = required(take("tap_transmittivity"), "tap_transmittivity")?;
        let tap_transmittivity = parse_f64(&tap, l, "tap_transmittivity")?;
        let (levels, l) = required(take("levels"), "levels")?;
        let levels = parse_levels(&levels, l)?;
        let source = take("source").map(|(v, l)| parse_source(&v, l)).transpose()?;
        let seed = take("seed")
            .map(|(v, l)| {
                v.parse::<u64>()
                    .map_err(|_| Error::format_at(l, format!("bad seed {v:?}")))
            })
            .transpose()?;
        if let Some((key, (_, l))) = fields.into_iter().next() {
            return Err(Error::format_at(l, format!("unknown header key {key:?}")));
        }
        Ok(Self {
            lines,
            line_no,
            header: RecordHeader {
                version,
                units,
                tap_transmittivity,
                source,
                levels,
                seed,
            },
        })
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    pub fn next_record(&mut self) -> Result<Option<QuadratureRecord>> {
        loop {
            self.line_no += 1;
            let line = match self.lines.next() {
                None => return Ok(None),
                Some(l) => l.map_err(|e| Error::format_at(self.line_no, e.to_string()))?,
            };
            if line.trim().is_empty() {
                continue;
            }
            return self.parse_row(&line).map(Some);
        }
    }

    fn parse_row(&self, line: &str) -> Result<QuadratureRecord> {
        let n = self.line_no;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(Error::format_at(
                n,
                format!("expected 7 columns, found {}", fields.len()),
            ));
        }
        let mut v = [0.0; 6];
        for (slot, s) in v.iter_mut().zip(&fields) {
            *slot = parse_f64(s, n, "quadrature")?;
            if !slot.is_finite() {
                return Err(Error::format_at(n, "non-finite quadrature value"));
            }
        }
        let component: u32 = fields[6]
            .parse()
            .map_err(|_| Error::format_at(n, format!("bad component index {:?}", fields[6])))?;
        if component as usize >= self.header.levels.len() {
            return Err(Error::format_at(n, format!("component index {component} has no level")));
        }
        Ok(QuadratureRecord {
            x_a: v[0],
            p_a: v[1],
            x_b: v[2],
            p_b: v[3],
            x_t: v[4],
            p_t: v[5],
            component,
        })
    }
}

/// Buffered writer; call [`RecordWriter::finish`] to flush.
pub struct RecordWriter<W: Write> {
    out: W,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &RecordHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file), header).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W, header: &RecordHeader) -> Result<Self> {
        header.write_to(&mut out).map_err(|e| Error::io(PathBuf::new(), e))?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &QuadratureRecord) -> Result<()> {
        if !r.is_finite() {
            return Err(Error::format("refusing to write a non-finite record"));
        }
        writeln!(
            self.out,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {}",
            r.x_a, r.p_a, r.x_b, r.p_b, r.x_t, r.p_t, r.component
        )
        .map_err(|e| Error::io(PathBuf::new(), e))
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io(PathBuf::new(), e))?;
        Ok(self.out)
    }
}

pub fn write_records(path: &Path, header: &RecordHeader, records: &[QuadratureRecord]) -> Result<()> {
    let mut w = RecordWriter::create(path, header)?;
    for r in records {
        w.write(r).map_err(|e| with_path(e, path))?;
    }
    w.finish().map_err(|e| with_path(e, path))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<(RecordHeader, Vec<QuadratureRecord>)> {
    let mut reader = RecordReader::open(path)?;
    let mut records = Vec::new();
    while let Some(r) = reader.next_record()? {
        records.push(r);
    }
    Ok((reader.header, records))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}
